use proptest::prelude::*;
use vss_core::oscillator::*;

fn orbit(n: f64) -> PeriodicOrbit {
    let (a, t) = default_seed(n);
    find_periodic_orbit(n, a, t).unwrap()
}

fn check_orbit(o: &PeriodicOrbit) -> Result<(), TestCaseError> {
    let sys = OscSystem::new(o.n, 0.0).unwrap();
    prop_assert!(o.closure_residual <= 1e-8, "closure {}", o.closure_residual);
    let (re, im) = o.trivial_multiplier();
    prop_assert!((re - 1.0).hypot(im) < 1e-3, "trivial multiplier {re} {im}");
    // Liouville: the monodromy determinant is exp(-c2 T).
    let want = (-sys.c2 * o.period).exp();
    let got = o.multiplier_product();
    prop_assert!((got - want).abs() <= 1e-4 * want.max(1e-12) + 1e-12, "product {got} vs {want}");
    prop_assert!(o.sign_changes >= 2);
    prop_assert!(o.s.len() >= 513);
    prop_assert!(o.period > 0.0 && o.max_abs_phi > 0.0);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn orbits_are_closed_with_consistent_multipliers(n in 0.4f64..=1.6) {
        check_orbit(&orbit(n))?;
    }

    #[test]
    fn multipliers_do_not_depend_on_anchor(k in 1usize..1023) {
        let o = orbit(1.0);
        let r = reanchor(&o, k, &OrbitOptions::default()).unwrap();
        for (a, b) in o.multipliers.iter().zip(&r.multipliers) {
            prop_assert!((a.0 - b.0).hypot(a.1 - b.1) < 1e-6, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn orbit_search_is_deterministic() {
    let a = orbit(0.8);
    let b = orbit(0.8);
    assert_eq!(a.period.to_bits(), b.period.to_bits());
    assert_eq!(a.phi, b.phi);
}

#[test]
fn halving_smoothing_barely_moves_period() {
    let (a, t) = default_seed(1.0);
    let o1 = find_periodic_orbit(1.0, a, t).unwrap();
    let mut opts = OrbitOptions::default();
    opts.delta_rel *= 0.5;
    let o2 = find_periodic_orbit_with(1.0, a, t, &opts).unwrap();
    assert!(((o1.period - o2.period) / o1.period).abs() < 1e-3);
}

#[test]
fn periodic_interpolant_repeats() {
    let o = orbit(1.2);
    for i in 0..20 {
        let s = 0.037 * i as f64 * o.period;
        assert!((o.phi_at(s) - o.phi_at(s + o.period)).abs() < 1e-9 * o.max_abs_phi);
    }
    assert!((o.phi_at(0.0) - o.phi[0]).abs() < 1e-14);
}

#[test]
fn continuation_agrees_with_fresh_search() {
    let o = orbit(1.0);
    let c = continue_orbit(&o, 1.05, &OrbitOptions::default()).unwrap();
    let f = orbit(1.05);
    assert!(((c.period - f.period) / f.period).abs() < 1e-6);
}

#[test]
fn short_orbits_close() {
    for n in [0.4, 0.45, 0.5985302999857792] {
        let o = orbit(n);
        assert!(o.closure_residual <= 1e-8, "n={n} closure {}", o.closure_residual);
    }
}
