//! Self-similar solutions of the thin-film equation with absorption.

pub mod branching;
pub mod bvp;
pub mod error;
pub mod evolution;
pub mod linalg;
pub mod model;
pub mod oscillator;
pub mod par;
pub mod profiles;

pub use error::{Error, Result};
