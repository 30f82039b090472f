use std::f64::consts::PI;

use proptest::prelude::*;
use vss_core::bvp::*;

/// `y'''' = y` type test with a known solution `sin(k x)`: y'' = -k^2 y.
fn harmonic(k: f64) -> BvpProblem<'static> {
    BvpProblem::new(
        2,
        0.0,
        1.0,
        move |_, y, dy| {
            dy[0] = y[1];
            dy[1] = -k * k * y[0];
        },
        move |ya, yb| vec![ya[0], yb[0] - k.sin()],
    )
}

fn max_error(k: f64, intervals: usize) -> f64 {
    let mut opts = BvpOptions::new(1e-14, 100_000);
    opts.adapt = false;
    let problem = harmonic(k);
    let sol = solve_bvp_with(&problem, BvpGuess::Constant { value: vec![0.0, 0.0], intervals }, &opts).unwrap();
    (0..=400)
        .map(|i| {
            let x = i as f64 / 400.0;
            (sol.eval_vec(x)[0] - (k * x).sin()).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn fourth_order_convergence() {
    let k = 1.5 * PI;
    let (e1, e2) = (max_error(k, 16), max_error(k, 32));
    assert!(e1 / e2 >= 12.0, "ratio {}", e1 / e2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn interpolant_hits_nodes_and_is_deterministic(k in 0.5f64..4.0, m in 8usize..40) {
        let guess = || BvpGuess::Constant { value: vec![0.0, 0.0], intervals: m };
        let problem = harmonic(k);
        let a = solve_bvp(&problem, guess(), 1e-8, 10_000).unwrap();
        let b = solve_bvp(&problem, guess(), 1e-8, 10_000).unwrap();
        prop_assert!(a.converged);
        prop_assert!(a.residual_norm <= 1e-8);
        prop_assert!(a.mesh.intervals() >= MIN_INTERVALS);
        prop_assert!(a.nodes().windows(2).all(|w| w[1] > w[0]));
        prop_assert_eq!(a.states(), b.states());
        prop_assert_eq!(a.nodes(), b.nodes());
        for (i, &x) in a.nodes().iter().enumerate() {
            let v = a.eval_vec(x);
            prop_assert_eq!(v.as_slice(), a.state(i));
        }
    }
}
