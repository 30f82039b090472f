use proptest::prelude::*;
use vss_core::evolution::*;

fn params(eps: f64, x_half: f64, dx: f64, t_end: f64) -> EvolutionParams {
    let mut p = EvolutionParams::new(1.0, 3.0, eps, x_half, dx, t_end);
    p.t_sample0 = 0.01;
    p
}

fn absorbed(u: &[f64], p: f64, h: f64) -> f64 {
    h * u.iter().map(|v| v.abs().powf(p - 1.0) * v).sum::<f64>()
}

/// Fixed-step integration to `t_end`.
fn fixed_steps(ep: &EvolutionParams, u0: &Field, dt: f64, t_end: f64) -> Field {
    let k = (t_end / dt).round() as usize;
    let mut f = u0.clone();
    for _ in 0..k {
        f = step(&f, ep, dt).unwrap();
    }
    f
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn steps_balance_mass_and_absorption(amp in 0.2f64..2.0, width in 0.8f64..2.0, dt in 1e-5f64..1e-3) {
        let ep = params(1e-3, 8.0, 0.05, 1.0);
        let f0 = Field::from_fn(&ep, bump(amp, width));
        let f1 = step(&f0, &ep, dt).unwrap();
        let lost = dt * absorbed(&f1.u, ep.p, ep.dx);
        prop_assert!((f0.mass - f1.mass - lost).abs() <= 1e-8 * f0.mass, "{} {} {}", f0.mass, f1.mass, lost);
        prop_assert!(f1.mass < f0.mass);
        prop_assert!((f1.t - dt).abs() < 1e-15);
    }

    #[test]
    fn zero_is_a_fixed_point(dt in 1e-6f64..1.0) {
        let ep = params(1e-3, 5.0, 0.1, 1.0);
        let z = Field::from_fn(&ep, |_| 0.0);
        let s = step(&z, &ep, dt).unwrap();
        prop_assert!(s.u.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn short_runs_stay_nearly_nonnegative_and_lose_mass() {
    let ep = params(1e-3, 30.0, 0.05, 10.0);
    let r = run(&ep, Field::from_fn(&ep, bump(1.0, 1.0)), None).unwrap();
    assert!(r.min_value >= -10.0 * ep.eps, "min {}", r.min_value);
    for w in r.samples.windows(2) {
        assert!(w[1].mass < w[0].mass, "{:?} {:?}", w[0], w[1]);
        assert!(w[1].norm_inf <= w[0].norm_inf * (1.0 + 1e-9));
    }
}

#[test]
fn implicit_euler_is_first_order() {
    let ep = params(1e-3, 8.0, 0.05, 1.0);
    let u0 = Field::from_fn(&ep, bump(1.0, 1.0));
    let t = 0.02;
    let reference = fixed_steps(&ep, &u0, t / 256.0, t);
    let err = |k: f64| {
        let f = fixed_steps(&ep, &u0, t / k, t);
        f.u.iter().zip(&reference.u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    };
    let (e1, e2, e3) = (err(8.0), err(16.0), err(32.0));
    let r1 = (e1 / e2).log2();
    let r2 = (e2 / e3).log2();
    assert!(r1 > 0.8 && r1 < 1.4, "{e1} {e2} {e3}");
    assert!(r2 > 0.8 && r2 < 1.4, "{e1} {e2} {e3}");
}

#[test]
fn decay_rate_is_grid_independent() {
    let slope = |dx: f64| {
        let mut ep = params(1e-3, 40.0, dx, 100.0);
        ep.t_sample0 = 1.0;
        run(&ep, Field::from_fn(&ep, bump(1.0, 1.0)), None).unwrap().decay_slope
    };
    let (a, b) = (slope(0.1), slope(0.05));
    assert!((a - b).abs() < 0.01, "{a} vs {b}");
}

#[test]
fn runs_are_deterministic() {
    let ep = params(1e-3, 8.0, 0.05, 0.5);
    let a = run(&ep, Field::from_fn(&ep, bump(1.0, 1.0)), None).unwrap();
    let b = run(&ep, Field::from_fn(&ep, bump(1.0, 1.0)), None).unwrap();
    assert_eq!(a.final_field.u, b.final_field.u);
    assert_eq!(a.steps, b.steps);
}

#[test]
fn contamination_is_reported() {
    let ep = params(1e-3, 3.0, 0.05, 1.0);
    let r = run(&ep, Field::from_fn(&ep, bump(1.0, 2.9)), None);
    assert!(matches!(r, Err(vss_core::Error::BoundaryContamination { .. })));
}
