use vss_core::bvp::BvpSolution;
use vss_core::model::{ProblemKind, SimilarityParams};
use vss_core::profiles::*;

const CASES: [(f64, f64, (f64, f64)); 4] = [
    (0.4, 2.0, (5.0, 8.0)),
    (0.0, 2.0, (4.0, 6.5)),
    (0.8, 2.0, (13.0, 17.0)),
    (1.0, 3.0, (3.5, 5.5)),
];

fn fbp(n: f64, p: f64, eps: f64, bracket: (f64, f64)) -> Profile {
    let params = SimilarityParams::new(n, p, 1, ProblemKind::Fbp, eps).unwrap();
    solve_fbp_profile(&params, bracket).unwrap()
}

#[test]
fn fbp_profiles_satisfy_invariants() {
    for (n, p, br) in CASES {
        let prof = fbp(n, p, 1e-3, br);
        let res = prof.ode_residual().unwrap();
        assert!(res <= 50.0 * DEFAULT_FBP_TOL, "n={n}: residual {res}");
        assert!(prof.min_value() >= -10.0 * prof.params.eps);
        assert!(prof.f1[0].abs() < 1e-6 && prof.f3[0].abs() < 1e-6);
        let last = prof.len() - 1;
        let tol = DEFAULT_FBP_TOL;
        assert!(prof.f[last].abs() < tol && prof.f1[last].abs() < tol && prof.f3[last].abs() < tol, "n={n}");
        let norm = prof.f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(norm, prof.norm_inf);
    }
}

#[test]
fn interface_is_quadratic() {
    for (n, p, br) in CASES {
        if n == 0.0 {
            continue;
        }
        let prof = fbp(n, p, 1e-3, br);
        let sol = prof.solution.as_ref().unwrap();
        let y0 = prof.y0;
        // Last decade before the interface, measured from the converged
        // interface height (which is only zero to solver tolerance).
        let h = *prof.f.last().unwrap();
        let pts: Vec<(f64, f64)> = (0..=40)
            .map(|k| {
                let d = 0.003 * y0 * 10f64.powf(k as f64 / 40.0);
                (d, sol.eval_vec(y0 - d)[0] - h)
            })
            .collect();
        let slope = vss_core::branching::loglog_slope(&pts);
                assert!((slope - 2.0).abs() < 0.1, "n={n}: slope {slope}");
    }
}

#[test]
fn halving_eps_moves_interface_little() {
    for (n, p, br) in CASES {
        let a = fbp(n, p, 1e-3, br).y0;
        let b = fbp(n, p, 5e-4, br).y0;
        assert!((a - b).abs() < 0.01 * a, "n={n}: {a} vs {b}");
    }
}

#[test]
fn interface_height_changes_sign_once() {
    let params = SimilarityParams::new(1.0, 3.0, 1, ProblemKind::Fbp, 1e-3).unwrap();
    let y0s: Vec<f64> = (0..=20).map(|i| 3.5 + 0.1 * i as f64).collect();
    let h = interface_height_scan(&params, &y0s, &FbpOptions::default()).unwrap();
    let changes = h.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
    assert_eq!(changes, 1);
}

/// The collocation solution with every interval split in two.
fn doubled(sol: &BvpSolution) -> BvpSolution {
    let x = sol.nodes();
    let mut nodes = Vec::with_capacity(2 * x.len());
    for w in x.windows(2) {
        nodes.push(w[0]);
        nodes.push(0.5 * (w[0] + w[1]));
    }
    nodes.push(*x.last().unwrap());
    let d = sol.dim();
    let (mut states, mut derivs) = (Vec::new(), Vec::new());
    let mut buf = vec![0.0; d];
    for &t in &nodes {
        states.extend(sol.eval_vec(t));
        sol.eval_derivative(t, &mut buf);
        derivs.extend_from_slice(&buf);
    }
    BvpSolution::from_nodal(nodes, d, states, derivs)
}

#[test]
fn cp_sign_changes_stable_under_refinement() {
    let params = SimilarityParams::new(0.95, 2.0, 1, ProblemKind::Cp, 1e-2).unwrap();
    let seed = CpSeed::Template { amplitude: 1.0, support: 10.0, index: 2 };
    let mut o = CpOptions::default();
    o.check_length = false;
    let a = solve_cp_profile_with(&params, 15.0, seed, &o).unwrap();
    let fine = Profile { solution: Some(doubled(a.solution.as_ref().unwrap())), ..a.clone() };
    let b = solve_cp_profile_with(&params, 15.0, CpSeed::Profile(&fine), &o).unwrap();
    assert!(b.len() >= 2 * a.len() - 1, "{} -> {}", a.len(), b.len());
    assert_eq!(a.sign_changes(), b.sign_changes());
}

#[test]
fn cp_support_grows_as_n_decreases() {
    // Small-n window where the support is set by the degeneracy rather than
    // by the boundary layer at p = n + 1.
    let mut supports = Vec::new();
    for n in [0.3, 0.2, 0.1, 0.05] {
        let params = SimilarityParams::new(n, 2.0, 1, ProblemKind::Cp, 1e-2).unwrap();
        let mut o = CpOptions::default();
        o.check_length = false;
        let seed = CpSeed::Template { amplitude: 1.0, support: 10.0, index: 0 };
        let cp = solve_cp_profile_with(&params, 40.0, seed, &o).unwrap();
        let cut = 1e-3 * cp.norm_inf;
        let support = cp.y.iter().zip(&cp.f).filter(|(_, v)| v.abs() > cut).map(|(&y, _)| y).fold(0.0, f64::max);
        supports.push(support);
    }
    assert!(supports.windows(2).all(|w| w[1] > w[0]), "{supports:?}");
}

#[test]
fn pure_tfe_cauchy_profiles_decay_to_zero() {
    for n in [0.5, 1.0] {
        let p = pure_tfe_profile(n, 1, ProblemKind::Cp, None).unwrap();
        assert!((p.y0 - 1.0).abs() < 1e-12);
        assert!(p.norm_inf > 0.0 && p.norm_inf.is_finite());
        assert!(p.f.last().unwrap().abs() < 1e-12 * p.norm_inf, "n={n}");
    }
}
