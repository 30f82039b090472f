//! End-to-end checks. Each criterion prints one PASS/FAIL line; the test
//! run fails when the set of failing criteria differs from `KNOWN_FAILING`.

use std::time::Instant;
use vss_core::branching::*;
use vss_core::evolution::*;
use vss_core::model::*;
use vss_core::oscillator::*;
use vss_core::profiles::*;

/// Criteria that currently fail; see the README section on the evolution
/// scheme.
const KNOWN_FAILING: &[usize] = &[10];

type Outcome = Result<(bool, String), String>;

fn within(x: f64, want: f64, tol: f64) -> bool {
    (x - want).abs() <= tol
}

fn cp_opts(tol: f64, check_length: bool) -> CpOptions {
    let mut o = CpOptions::default();
    o.tol = tol;
    o.check_length = check_length;
    o
}

fn c1_explicit_oracle() -> Outcome {
    let num = pure_tfe_profile(1.0, 1, ProblemKind::Fbp, None).map_err(|e| e.to_string())?;
    let a = num.y0;
    let exact = explicit_pure_tfe_profile(1, a).map_err(|e| e.to_string())?;
    let scale = exact.norm_inf;
    let err = num.y.iter().zip(&num.f).fold(0.0f64, |m, (&y, &f)| m.max((f - exact.value_at(y)).abs())) / scale;
    Ok((err < 1e-5, format!("relative max error {err:.2e} (< 1e-5), support {a:.6}")))
}

fn c2_interfaces() -> Outcome {
    let cases = [
        (0.4, 2.0, (5.0, 8.0), 6.606),
        (0.0, 2.0, (4.0, 6.5), 5.109),
        (0.8, 2.0, (13.0, 17.0), 14.822),
        (1.0, 3.0, (3.5, 5.5), 4.455),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, p, br, want) in cases {
        let params = SimilarityParams::new(n, p, 1, ProblemKind::Fbp, 1e-3).map_err(|e| e.to_string())?;
        let prof = solve_fbp_profile(&params, br).map_err(|e| e.to_string())?;
        let rel = (prof.y0 - want).abs() / want;
        ok &= rel < 0.05;
        parts.push(format!("n={n},p={p}: y0={:.4} vs {want} ({:.1}%)", prof.y0, 100.0 * rel));
    }
    Ok((ok, parts.join("; ")))
}

fn c3_semilinear() -> Outcome {
    let ps = semilinear_bifurcations(1, 1.7).map_err(|e| e.to_string())?;
    let want = [5.0, 3.0, 7.0 / 3.0, 2.0, 9.0 / 5.0];
    let exact = ps.len() == 5 && ps.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12);
    let mut profiles = Vec::new();
    for l in 0..5 {
        let delta = if l == 4 { 0.03 } else { 0.05 };
        let start = semilinear_branch_start(l, delta, 30.0, &cp_opts(1e-4, false)).map_err(|e| format!("l={l}: {e}"))?;
        let b = continue_branch(&start, 1.7, 0.02, 1e-4).map_err(|e| format!("l={l}: {e}"))?;
        if b.end != BranchEnd::Target {
            return Ok((false, format!("branch from p_{l} ended with {:?}", b.end)));
        }
        let last = &b.points.last().unwrap().profile;
        profiles.push(confirm_profile(last, &cp_opts(1e-4, true)).map_err(|e| format!("l={l}: {e}"))?);
    }
    let distinct = distinct_profiles(&profiles, 1e-2).len();
    let norms: Vec<String> = profiles.iter().map(|p| format!("{:.4}", p.norm_inf)).collect();
    Ok((exact && distinct == 5, format!("points {ps:?}; {distinct} distinct profiles at p=1.7, norms [{}]", norms.join(", "))))
}

fn c4_amplitude_exponent() -> Outcome {
    let deltas = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1];
    let mut slopes = Vec::new();
    for (n, want) in [(0.0, 0.25), (1.0, 0.20)] {
        let shape = if n == 0.0 {
            kernel_profile(0, 30.0, 3000)
        } else {
            explicit_pure_tfe_profile(1, 1.0)
        }
        .map_err(|e| e.to_string())?;
        let p0 = critical_exponent(n, 1);
        let mut pts = Vec::new();
        for &d in &deltas {
            let params = SimilarityParams::new(n, p0 - d, 1, ProblemKind::Cp, 1e-2).map_err(|e| e.to_string())?;
            let length = if n == 0.0 { 30.0 } else { 4.0 * near_critical_support(&params, &shape).map_err(|e| e.to_string())? };
            pts.extend(near_critical_norms(&params, &shape, &[d], length, &cp_opts(1e-4, false)).map_err(|e| e.to_string())?);
        }
        slopes.push((n, want, loglog_slope(&pts)));
    }
    let ok = slopes.iter().all(|&(_, want, s)| within(s, want, 0.03));
    let text: Vec<String> = slopes.iter().map(|(n, w, s)| format!("n={n}: slope {s:.4} (want {w} +- 0.03)")).collect();
    Ok((ok, text.join("; ")))
}

fn n1_first_branch() -> Result<Branch, String> {
    let shape = explicit_pure_tfe_profile(1, 1.0).map_err(|e| e.to_string())?;
    let params = SimilarityParams::new(1.0, 5.75, 1, ProblemKind::Cp, 4e-2).map_err(|e| e.to_string())?;
    let l = 4.0 * near_critical_support(&params, &shape).map_err(|e| e.to_string())?;
    let start = near_critical_start(&params, &shape, l, &cp_opts(1e-4, true)).map_err(|e| e.to_string())?;
    let mut co = ContinuationOptions::new(0.05, 1e-4);
    co.bifurcations = vec![6.0];
    continue_from_origin(&start, 6.0, 2.05, &co).map_err(|e| e.to_string())
}

fn c5_turning_point(b: &Branch) -> Outcome {
    let first = b.turning_points.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((within(first, 3.46, 0.10), format!("lowest turning point p={first:.4} (want 3.46 +- 0.10), all {:?}", b.turning_points)))
}

fn c6_saddle_node_threshold() -> Outcome {
    let mut folds = Vec::new();
    for n in [0.11, 0.13] {
        let shape = pure_tfe_profile(n, 1, ProblemKind::Fbp, None).map_err(|e| e.to_string())?;
        let p0 = critical_exponent(n, 1);
        let params = SimilarityParams::new(n, p0 - 0.25, 1, ProblemKind::Cp, 1e-2).map_err(|e| e.to_string())?;
        let start = near_critical_start(&params, &shape, 30.0, &cp_opts(1e-4, false)).map_err(|e| e.to_string())?;
        let mut co = ContinuationOptions::new(0.02, 1e-4);
        co.bifurcations = vec![p0];
        let b = continue_branch_with(&start, n + 1.05, &co).map_err(|e| e.to_string())?;
        let tp: Vec<f64> = b.turning_points.iter().cloned().filter(|&p| p >= 2.0).collect();
        folds.push((n, tp));
    }
    let ok = folds[0].1.is_empty() && !folds[1].1.is_empty();
    Ok((ok, format!("turning points with p >= 2: n=0.11 {:?}, n=0.13 {:?}", folds[0].1, folds[1].1)))
}

fn c7_closed_branch(b: &Branch) -> Outcome {
    let at = b.profiles_at(3.6, &cp_opts(1e-4, false));
    let profiles: Vec<Profile> = at.into_iter().filter_map(|r| r.ok()).collect();
    let distinct = distinct_profiles(&profiles, 1e-2).len();
    let ok = b.closed && b.turning_points.len() == 2 && distinct == 3;
    let norms: Vec<String> = profiles.iter().map(|p| format!("{:.4}", p.norm_inf)).collect();
    Ok((
        ok,
        format!(
            "closed={} ends {:?}, {} turning points, {distinct} distinct profiles at p=3.6 [{}]",
            b.closed,
            b.end,
            b.turning_points.len(),
            norms.join(", ")
        ),
    ))
}

fn c8_oscillator() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, r) in [0.5, 1.0, 1.5].iter().zip(orbits_for(&[0.5, 1.0, 1.5])) {
        let o = r.map_err(|e| format!("n={n}: {e}"))?;
        let inside = o.nontrivial_multipliers().iter().all(|m| m.0.hypot(m.1) < 1.0);
        let rmax = o.nontrivial_multipliers().iter().fold(0.0f64, |a, m| a.max(m.0.hypot(m.1)));
        ok &= o.closure_residual <= 1e-8 && inside;
        parts.push(format!("n={n}: T={:.4} closure {:.1e} max|mu|={rmax:.3e}", o.period, o.closure_residual));
    }
    let scan = scan_heteroclinic(1.5, 2.0, 20).map_err(|e| e.to_string())?;
    match scan.estimate {
        Some(nh) => {
            ok &= within(nh, 1.759, 0.05);
            parts.push(format!("n_h={nh:.4} bracket {:?} (want 1.759 +- 0.05)", scan.bracket.unwrap()));
        }
        None => {
            ok = false;
            parts.push("no loss of the orbit found".into());
        }
    }
    Ok((ok, parts.join("; ")))
}

fn c9_multiplicity() -> Outcome {
    let params = SimilarityParams::new(0.95, 2.0, 1, ProblemKind::Cp, 1e-2).map_err(|e| e.to_string())?;
    let seeds = [(10.0, 2, 1.0), (10.0, 4, 1.0), (10.0, 6, 1.0), (10.0, 8, 1.0), (30.0, 0, 1.0)];
    let mut profiles = Vec::new();
    for (support, index, amplitude) in seeds {
        if let Ok(p) = solve_cp_profile(&params, 1.5 * support, CpSeed::Template { amplitude, support, index }) {
            if p.parity == Parity::Even {
                profiles.push(p);
            }
        }
    }
    let distinct = distinct_profiles(&profiles, 1e-2);
    let text: Vec<String> = distinct
        .iter()
        .map(|&i| format!("(norm {:.4}, {} sign changes)", profiles[i].norm_inf, profiles[i].sign_changes()))
        .collect();
    Ok((distinct.len() >= 4, format!("{} converged, {} distinct even profiles {}", profiles.len(), distinct.len(), text.join(" "))))
}

fn c10_evolution() -> Outcome {
    let params = SimilarityParams::new(1.0, 3.0, 1, ProblemKind::Fbp, 1e-3).map_err(|e| e.to_string())?;
    let vss = solve_fbp_profile(&params, (3.5, 5.5)).map_err(|e| e.to_string())?;
    let mut ep = EvolutionParams::new(1.0, 3.0, 1e-3, 60.0, 0.05, 1e4);
    ep.t_sample0 = 10.0;
    let r = run(&ep, Field::from_fn(&ep, bump(1.0, 1.0)), Some(&vss)).map_err(|e| e.to_string())?;
    let errs = &r.profile_errors;
    let k = errs.len();
    let decreasing = k >= 3 && errs[k - 1].1 < errs[k - 2].1 && errs[k - 2].1 < errs[k - 3].1;
    let ok = within(r.decay_slope, -0.5, 0.05) && within(r.interface_slope, 0.125, 0.02) && decreasing;
    let e: Vec<String> = errs.iter().map(|(t, e)| format!("{t:.0e}:{e:.3}")).collect();
    Ok((
        ok,
        format!(
            "decay slope {:.4} (want -0.5 +- 0.05), interface slope {:.4} (want 0.125 +- 0.02), profile errors [{}]",
            r.decay_slope,
            r.interface_slope,
            e.join(", ")
        ),
    ))
}

fn c11_spectrum() -> Outcome {
    let s = semilinear_spectrum(1, 2, true).map_err(|e| e.to_string())?;
    let want = [0.0, -0.25, -0.5];
    let ok = s.iter().zip(&want).all(|(e, w)| within(e.lambda, *w, 0.02) && e.imag.abs() < 0.02);
    let got: Vec<String> = s.iter().map(|e| format!("{:.4}", e.lambda)).collect();
    Ok((ok, format!("leading eigenvalues [{}] (want 0, -0.25, -0.5 +- 0.02)", got.join(", "))))
}

fn main() {
    let mut failing = Vec::new();
    let mut report = |id: usize, f: &dyn Fn() -> Outcome| {
        let t0 = Instant::now();
        let (pass, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failing.push(id);
        }
        println!("criterion {id:2} {} {detail} [{:.1}s]", if pass { "PASS" } else { "FAIL" }, t0.elapsed().as_secs_f64());
    };
    report(1, &c1_explicit_oracle);
    report(2, &c2_interfaces);
    report(3, &c3_semilinear);
    report(4, &c4_amplitude_exponent);
    let branch = n1_first_branch();
    report(5, &|| c5_turning_point(branch.as_ref()?));
    report(6, &c6_saddle_node_threshold);
    report(7, &|| c7_closed_branch(branch.as_ref()?));
    report(8, &c8_oscillator);
    report(9, &c9_multiplicity);
    report(10, &c10_evolution);
    report(11, &c11_spectrum);
    if failing != KNOWN_FAILING {
        eprintln!("failing criteria {failing:?}, expected {KNOWN_FAILING:?}");
        std::process::exit(1);
    }
}
