//! Problem parameters and the closed-form exponent algebra shared by the
//! profile, branching and evolution solvers.

use crate::error::{Error, Result};

/// Which functional setting a similarity profile lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    /// Free-boundary problem: nonnegative, compactly supported profiles with
    /// zero height, contact angle and flux at the interface.
    Fbp,
    /// Cauchy problem: sign-changing profiles with oscillatory interfaces.
    Cp,
}

/// The problem tuple `(n, p, N, kind, eps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityParams {
    pub n: f64,
    pub p: f64,
    pub dim: u32,
    pub problem: ProblemKind,
    pub eps: f64,
}

pub const DEFAULT_FBP_EPS: f64 = 1e-3;
pub const DEFAULT_CP_EPS: f64 = 1e-2;

impl SimilarityParams {
    /// Validated constructor. `n < 0` is accepted (see [`Self::is_fast_diffusion`]).
    pub fn new(n: f64, p: f64, dim: u32, problem: ProblemKind, eps: f64) -> Result<Self> {
        let params = Self { n, p, dim, problem, eps };
        params.validate()?;
        Ok(params)
    }

    /// One-dimensional parameters with the default regularization of `kind`.
    pub fn one_d(n: f64, p: f64, problem: ProblemKind) -> Result<Self> {
        let eps = match problem {
            ProblemKind::Fbp => DEFAULT_FBP_EPS,
            ProblemKind::Cp => DEFAULT_CP_EPS,
        };
        Self::new(n, p, 1, problem, eps)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n.is_finite() {
            return Err(Error::InvalidParameter(format!("n must be finite, got {}", self.n)));
        }
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(Error::InvalidParameter(format!("p must exceed 1, got {}", self.p)));
        }
        if self.dim < 1 {
            return Err(Error::InvalidParameter("dimension N must be at least 1".into()));
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "regularization eps must be positive, got {}",
                self.eps
            )));
        }
        Ok(())
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    /// Negative `n` gives a fast-diffusion operator; only exponent algebra is
    /// supported for it.
    pub fn is_fast_diffusion(&self) -> bool {
        self.n < 0.0
    }

    /// `n = 0`: the semilinear bi-harmonic equation with absorption.
    pub fn is_semilinear(&self) -> bool {
        self.n == 0.0
    }

    /// `n + 1 < p < p0(n, N)`.
    pub fn is_subcritical(&self) -> bool {
        self.n + 1.0 < self.p && self.p < critical_exponent(self.n, self.dim)
    }
}

/// Exponents derived from `(n, p, N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedExponents {
    /// Spatial similarity exponent `(p - (n+1)) / (4 (p-1))`.
    pub beta: f64,
    /// Amplitude decay exponent `1 / (p-1)`.
    pub alpha: f64,
    /// Critical absorption exponent `1 + n + 4/N`.
    pub p0: f64,
    /// Interface exponent `3/n`; absent for `n = 0`.
    pub mu: Option<f64>,
    pub subcritical: bool,
}

/// `p0 = 1 + n + 4/N`.
pub fn critical_exponent(n: f64, dim: u32) -> f64 {
    1.0 + n + 4.0 / dim as f64
}

pub fn derive_exponents(params: &SimilarityParams) -> Result<DerivedExponents> {
    let SimilarityParams { n, p, dim, .. } = *params;
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("p must exceed 1, got {p}")));
    }
    let beta = (p - (n + 1.0)) / (4.0 * (p - 1.0));
    let mu = if n != 0.0 { Some(3.0 / n) } else { None };
    Ok(DerivedExponents {
        beta,
        alpha: 1.0 / (p - 1.0),
        p0: critical_exponent(n, dim),
        mu,
        subcritical: params.is_subcritical(),
    })
}

/// Semilinear pitchfork exponents `p_l = 1 + 4/(N+l)` above `p_min`, in
/// decreasing order.
pub fn bifurcation_points_semilinear(dim: u32, p_min: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if dim == 0 {
        return out;
    }
    // p_l > 1 for every l, so p_min <= 1 would never terminate.
    let floor = p_min.max(1.0);
    for l in 0u32.. {
        let p = 1.0 + 4.0 / (dim + l) as f64;
        if p <= floor {
            break;
        }
        out.push(p);
    }
    out
}

/// `p_l = 1 + 1/alpha_l` for each self-similarity parameter `alpha_l`.
pub fn critical_exponents_from_alpha(alphas: &[f64]) -> Result<Vec<f64>> {
    alphas
        .iter()
        .map(|&a| {
            if !(a > 0.0) || !a.is_finite() {
                Err(Error::InvalidParameter(format!(
                    "self-similarity parameter must be positive, got {a}"
                )))
            } else {
                Ok(1.0 + 1.0 / a)
            }
        })
        .collect()
}

/// `alpha_l = (N + l) / 4` for the linear (`n = 0`) problem.
pub fn semilinear_alphas(dim: u32, count: usize) -> Vec<f64> {
    (0..count).map(|l| (dim as f64 + l as f64) / 4.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fbp(n: f64, p: f64) -> SimilarityParams {
        SimilarityParams::new(n, p, 1, ProblemKind::Fbp, 1e-3).unwrap()
    }

    #[test]
    fn exponents_n1_p3() {
        let e = derive_exponents(&fbp(1.0, 3.0)).unwrap();
        assert_eq!(e.beta, 0.125);
        assert_eq!(e.alpha, 0.5);
        assert_eq!(e.p0, 6.0);
        assert_eq!(e.mu, Some(3.0));
        assert!(e.subcritical);
    }

    #[test]
    fn semilinear_p0_is_five() {
        let e = derive_exponents(&fbp(0.0, 1.7)).unwrap();
        assert_eq!(e.p0, 5.0);
        assert_eq!(e.mu, None);
    }

    #[test]
    fn beta_vanishes_at_n_plus_one() {
        let p = fbp(1.0, 2.0);
        assert_eq!(derive_exponents(&p).unwrap().beta, 0.0);
        assert!(!p.is_subcritical());
    }

    #[test]
    fn rejects_p_at_most_one() {
        assert!(SimilarityParams::new(1.0, 1.0, 1, ProblemKind::Fbp, 1e-3).is_err());
        assert!(SimilarityParams::new(1.0, 0.5, 1, ProblemKind::Fbp, 1e-3).is_err());
        assert!(SimilarityParams::new(1.0, 3.0, 1, ProblemKind::Fbp, 0.0).is_err());
    }

    #[test]
    fn negative_n_is_flagged() {
        let p = SimilarityParams::new(-0.2, 2.0, 1, ProblemKind::Cp, 1e-2).unwrap();
        assert!(p.is_fast_diffusion());
    }

    #[test]
    fn five_points_above_1_7() {
        let pts = bifurcation_points_semilinear(1, 1.7);
        let expected = [5.0, 3.0, 7.0 / 3.0, 2.0, 9.0 / 5.0];
        assert_eq!(pts.len(), 5);
        for (a, b) in pts.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((pts[2] - (1.0 + 4.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn dimension_four_above_1_9() {
        // 1 + 4/(4+l): 2, 1.8, ... -> only l = 0 survives.
        assert_eq!(bifurcation_points_semilinear(4, 1.9), vec![2.0]);
    }

    #[test]
    fn alpha_to_p() {
        assert_eq!(critical_exponents_from_alpha(&[0.25]).unwrap(), vec![5.0]);
        assert_eq!(critical_exponents_from_alpha(&[1.0]).unwrap(), vec![2.0]);
        assert!(critical_exponents_from_alpha(&[0.0]).is_err());
        assert!(critical_exponents_from_alpha(&[-1.0]).is_err());
        let via_alpha = critical_exponents_from_alpha(&semilinear_alphas(1, 5)).unwrap();
        let direct = bifurcation_points_semilinear(1, 1.7);
        for (a, b) in via_alpha.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn beta_at_critical_is_source_type() {
        for &(n, dim) in &[(0.0, 1u32), (1.0, 1), (0.5, 2), (2.0, 3)] {
            let p0 = critical_exponent(n, dim);
            let params = SimilarityParams::new(n, p0, dim, ProblemKind::Fbp, 1e-3).unwrap();
            let e = derive_exponents(&params).unwrap();
            let expected = 1.0 / (4.0 + n * dim as f64);
            assert!((e.beta - expected).abs() < 1e-15, "n={n} N={dim}");
        }
    }
}
