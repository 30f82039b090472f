//! Subcommand pipelines. Each writes its CSV into the output directory,
//! optionally an SVG plot, and returns a short text report.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use thiserror::Error;
use vss_core::branching::{
    continue_branch_with, continue_from_origin, kernel_profile, near_critical_start, near_critical_support,
    semilinear_bifurcations, semilinear_branch_start, Branch, ContinuationOptions,
};
use vss_core::evolution::{bump, run, EvolutionParams, Field};
use vss_core::model::{critical_exponent, ProblemKind, SimilarityParams};
use vss_core::oscillator::{default_seed, find_periodic_orbit_with, scan_from, OrbitOptions};
use vss_core::profiles::{
    explicit_pure_tfe_profile, pure_tfe_profile, solve_cp_profile_with, solve_fbp_profile, CpOptions, CpSeed, Profile,
};

use crate::config::{BranchStart, Config, ConfigError};
use crate::svg::{emit_svg, PlotError, PlotSpec, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Criticals,
    Profile,
    Branch,
    Orbit,
    Evolve,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] vss_core::Error),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for solver non-convergence, 3 for invalid parameters, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use vss_core::Error as E;
        match self {
            CliError::Config(ConfigError::Io(_)) => 1,
            CliError::Config(_) => 3,
            CliError::Solver(e) => match e {
                E::InvalidParameter(_) | E::InvalidDomain { .. } | E::DimensionMismatch { .. } | E::DegenerateExponent => 3,
                E::Io(_) => 1,
                _ => 2,
            },
            CliError::Plot(PlotError::Io(_)) | CliError::Io(_) => 1,
            CliError::Plot(_) => 2,
        }
    }
}

pub struct Outputs {
    pub dir: PathBuf,
    pub plot: Option<PathBuf>,
}

impl Outputs {
    pub fn new(dir: impl Into<PathBuf>, plot: Option<PathBuf>) -> Self {
        Self { dir: dir.into(), plot }
    }

    fn file(&self, name: &str) -> std::io::Result<(PathBuf, BufWriter<File>)> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(name);
        let f = File::create(&path)?;
        Ok((path, BufWriter::new(f)))
    }

    fn plot(&self, spec: &PlotSpec) -> Result<(), CliError> {
        if let Some(p) = &self.plot {
            emit_svg(spec, p)?;
        }
        Ok(())
    }
}

fn require_p(cfg: &Config) -> Result<f64, CliError> {
    cfg.model.p.ok_or_else(|| ConfigError::Missing("model.p".into()).into())
}

pub fn run_command(cmd: Command, cfg: &Config, out: &Outputs) -> Result<String, CliError> {
    match cmd {
        Command::Criticals => criticals(cfg, out),
        Command::Profile => profile(cfg, out),
        Command::Branch => branch(cfg, out),
        Command::Orbit => orbit(cfg, out),
        Command::Evolve => evolve(cfg, out),
    }
}

/// Critical exponents above `branch.p_min`: the pitchfork sequence for
/// `n = 0`, and `p0` alone otherwise.
fn criticals(cfg: &Config, out: &Outputs) -> Result<String, CliError> {
    let m = &cfg.model;
    let p_min = cfg.branch.p_min.unwrap_or(m.n + 1.0);
    let list: Vec<f64> = if m.n == 0.0 {
        semilinear_bifurcations(m.dim, p_min)?.into_iter().take(16).collect()
    } else {
        vec![critical_exponent(m.n, m.dim)].into_iter().filter(|&p| p > p_min).collect()
    };
    let (_, mut w) = out.file("criticals.csv")?;
    use std::io::Write;
    writeln!(w, "l,alpha,p")?;
    for (l, p) in list.iter().enumerate() {
        writeln!(w, "{l},{},{p}", 1.0 / (p - 1.0))?;
    }
    w.flush()?;
    if !list.is_empty() {
        let ls: Vec<f64> = (0..list.len()).map(|l| l as f64).collect();
        out.plot(&PlotSpec::new("critical exponents", "l", "p_l").with(Series::markers("p_l", ls, list.clone())))?;
    }
    let body: Vec<String> = list.iter().map(|p| format!("{p}")).collect();
    Ok(format!("p_l = {}", body.join(", ")))
}

fn profile_plot(p: &Profile, title: &str) -> PlotSpec {
    PlotSpec::new(title, "y", "f").with(Series::line("f(y)", p.y.clone(), p.f.clone()))
}

fn write_profile(out: &Outputs, p: &Profile) -> Result<(), CliError> {
    let (_, mut w) = out.file("profile.csv")?;
    p.write_csv(&mut w)?;
    use std::io::Write;
    w.flush()?;
    Ok(())
}

fn cp_options(tol: Option<f64>) -> CpOptions {
    let mut o = CpOptions::default();
    if let Some(t) = tol {
        o.tol = t;
    }
    o
}

fn profile(cfg: &Config, out: &Outputs) -> Result<String, CliError> {
    let m = &cfg.model;
    let p = require_p(cfg)?;
    let params = SimilarityParams::new(m.n, p, m.dim, m.problem, m.eps)?;
    let pr = &cfg.profile;
    let prof = match m.problem {
        ProblemKind::Fbp => solve_fbp_profile(&params, (pr.y0_lo, pr.y0_hi))?,
        ProblemKind::Cp => {
            let support = pr.support.unwrap_or(10.0);
            let length = pr.length.unwrap_or(1.5 * support);
            let seed = CpSeed::Template { amplitude: pr.amplitude, support, index: pr.index };
            solve_cp_profile_with(&params, length, seed, &cp_options(pr.tol))?
        }
    };
    write_profile(out, &prof)?;
    out.plot(&profile_plot(&prof, &format!("profile n={} p={}", m.n, p)))?;
    let what = if m.problem == ProblemKind::Fbp { "y0" } else { "L" };
    Ok(format!(
        "{what}={} norm_inf={} sign_changes={} nodes={}",
        prof.y0,
        prof.norm_inf,
        prof.sign_changes(),
        prof.len()
    ))
}

/// Source-type or kernel shape used by the amplitude law.
pub fn first_branch_shape(n: f64, dim: u32) -> vss_core::Result<Profile> {
    if n == 0.0 {
        kernel_profile(0, 30.0, 3000)
    } else if n == 1.0 && dim == 1 {
        explicit_pure_tfe_profile(1, 1.0)
    } else {
        pure_tfe_profile(n, dim, ProblemKind::Fbp, None)
    }
}

/// Truncation length of a near-critical start: 30 for small `n`
/// (exponential tails), four supports otherwise.
pub fn default_length(params: &SimilarityParams, shape: &Profile) -> vss_core::Result<f64> {
    if params.n < 0.5 {
        Ok(30.0)
    } else {
        Ok(4.0 * near_critical_support(params, shape)?)
    }
}

fn branch(cfg: &Config, out: &Outputs) -> Result<String, CliError> {
    let m = &cfg.model;
    let b = &cfg.branch;
    let opts = cp_options(Some(b.tol));
    let p0 = critical_exponent(m.n, m.dim);
    let start = match b.start {
        BranchStart::NearCritical => {
            let params = SimilarityParams::new(m.n, p0 - b.delta, m.dim, ProblemKind::Cp, m.eps)?;
            let shape = first_branch_shape(m.n, m.dim)?;
            let length = match b.length {
                Some(l) => l,
                None => default_length(&params, &shape)?,
            };
            near_critical_start(&params, &shape, length, &opts)?
        }
        BranchStart::Pitchfork => {
            if m.n != 0.0 || m.dim != 1 {
                return Err(ConfigError::OutOfRange {
                    key: "branch.start".into(),
                    msg: "pitchfork starts need n = 0 and N = 1".into(),
                }
                .into());
            }
            let mut o = opts;
            o.check_length = false;
            semilinear_branch_start(b.l, b.delta, b.length.unwrap_or(30.0), &o)?
        }
    };
    let target = b.p_target.unwrap_or(m.n + 1.0 + 0.05);
    let mut co = ContinuationOptions::new(b.ds, b.tol);
    co.bifurcations = if m.n == 0.0 { semilinear_bifurcations(m.dim, 1.0)? } else { vec![p0] };
    let branch = match b.origin {
        Some(o) => continue_from_origin(&start, o, target, &co)?,
        None => continue_branch_with(&start, target, &co)?,
    };
    let (_, mut w) = out.file("branch.csv")?;
    branch.write_csv(&mut w)?;
    use std::io::Write;
    w.flush()?;
    out.plot(&branch_plot(&branch, m.n))?;
    let tp: Vec<String> = branch.turning_points.iter().map(|t| format!("{t}")).collect();
    Ok(format!(
        "points={} end={:?} closed={} turning=[{}]",
        branch.points.len(),
        branch.end,
        branch.closed,
        tp.join(", ")
    ))
}

/// `(p, norm)` diagram with circles at the turning points.
pub fn branch_plot(branch: &Branch, n: f64) -> PlotSpec {
    let mut spec = PlotSpec::new(&format!("branch n={n}"), "p", "norm_inf")
        .with(Series::line("||f||", branch.ps(), branch.norms()));
    if !branch.turning_points.is_empty() {
        let pts = &branch.points;
        let ys: Vec<f64> = branch
            .turning_points
            .iter()
            .map(|&t| {
                // Norm at the sampled fold nearest in p.
                let mut best = (f64::INFINITY, pts[0].norm_inf);
                for i in 1..pts.len().saturating_sub(1) {
                    let fold = (pts[i].p - pts[i - 1].p) * (pts[i + 1].p - pts[i].p) <= 0.0;
                    if fold && (pts[i].p - t).abs() < best.0 {
                        best = ((pts[i].p - t).abs(), pts[i].norm_inf);
                    }
                }
                best.1
            })
            .collect();
        spec = spec.with(Series::markers("turning points", branch.turning_points.clone(), ys));
    }
    spec
}

fn orbit(cfg: &Config, out: &Outputs) -> Result<String, CliError> {
    let n = cfg.model.n;
    let o = &cfg.orbit;
    let (a0, t0) = default_seed(n);
    let opts = OrbitOptions { samples: o.samples, ..OrbitOptions::default() };
    let orbit = find_periodic_orbit_with(n, o.amplitude.unwrap_or(a0), o.period.unwrap_or(t0), &opts)?;
    let (_, mut w) = out.file("orbit.csv")?;
    orbit.write_csv(&mut w)?;
    use std::io::Write;
    w.flush()?;
    out.plot(
        &PlotSpec::new(&format!("oscillatory component n={n}"), "s", "phi")
            .with(Series::line("phi(s)", orbit.s.clone(), orbit.phi.clone())),
    )?;
    let mult: Vec<String> = orbit
        .nontrivial_multipliers()
        .iter()
        .map(|(re, im)| format!("{re:.6}{im:+.6}i"))
        .collect();
    let mut report = format!(
        "period={} closure_residual={:.3e} max_abs_phi={} multipliers=[{}]",
        orbit.period,
        orbit.closure_residual,
        orbit.max_abs_phi,
        mult.join(", ")
    );
    if let Some(n_hi) = o.scan_to {
        let scan = scan_from(orbit, n_hi, o.scan_steps)?;
        match (scan.bracket, scan.estimate) {
            (Some((lo, hi)), Some(est)) => report.push_str(&format!("\nloss bracket=({lo}, {hi}) n_h~{est}")),
            _ => report.push_str(&format!("\norbit persists up to n={n_hi}")),
        }
    }
    Ok(report)
}

fn evolve(cfg: &Config, out: &Outputs) -> Result<String, CliError> {
    let m = &cfg.model;
    let p = require_p(cfg)?;
    let e = &cfg.evolve;
    let mut ep = EvolutionParams::new(m.n, p, m.eps, e.x_half, e.dx, e.t_end);
    ep.dt0 = e.dt0;
    ep.growth = e.growth;
    ep.t_sample0 = e.t_sample0;
    ep.validate()?;
    let vss = if e.compare {
        let params = SimilarityParams::new(m.n, p, 1, ProblemKind::Fbp, m.eps)?;
        Some(solve_fbp_profile(&params, (cfg.profile.y0_lo, cfg.profile.y0_hi))?)
    } else {
        None
    };
    let u0 = Field::from_fn(&ep, bump(e.amplitude, e.width));
    let summary = run(&ep, u0, vss.as_ref())?;
    use std::io::Write;
    let (_, mut w) = out.file("run_log.csv")?;
    summary.write_log(&mut w)?;
    w.flush()?;
    for (k, snap) in summary.snapshots.iter().enumerate() {
        let (_, mut w) = out.file(&format!("snapshot_{k:02}.csv"))?;
        snap.write_csv(&mut w)?;
        w.flush()?;
    }
    let lt: Vec<f64> = summary.samples.iter().map(|s| s.t.log10()).collect();
    let ln: Vec<f64> = summary.samples.iter().map(|s| s.norm_inf.log10()).collect();
    let lh: Vec<f64> = summary.samples.iter().map(|s| s.halfwidth.max(e.dx).log10()).collect();
    out.plot(
        &PlotSpec::new(&format!("evolution n={} p={}", m.n, p), "log10 t", "log10 value")
            .with(Series::line("norm_inf", lt.clone(), ln))
            .with(Series::line("halfwidth", lt, lh)),
    )?;
    let mut report = format!(
        "decay_slope={} interface_slope={} min_u={} steps={} rejected={}",
        summary.decay_slope, summary.interface_slope, summary.min_value, summary.steps, summary.rejected
    );
    for (t, err) in &summary.profile_errors {
        report.push_str(&format!("\nprofile_error t={t} {err}"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(ConfigError::Missing("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(vss_core::Error::DegenerateExponent).exit_code(), 3);
        assert_eq!(CliError::from(vss_core::Error::OrbitNoConvergence { n: 2.5, residual: 1.0 }).exit_code(), 2);
        assert_eq!(CliError::from(vss_core::Error::StartNotConverged).exit_code(), 2);
    }

    #[test]
    fn criticals_semilinear() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config_str("n=0\nN=1\n[branch]\np_min=1.7\n").unwrap();
        let rep = run_command(Command::Criticals, &cfg, &Outputs::new(dir.path(), None)).unwrap();
        let got: Vec<f64> = rep.trim_start_matches("p_l = ").split(", ").map(|v| v.parse().unwrap()).collect();
        let want = [5.0, 3.0, 7.0 / 3.0, 2.0, 1.8];
        assert_eq!(got.len(), want.len());
        assert!(got.iter().zip(want).all(|(g, w)| (g - w).abs() < 1e-12));
        let csv = std::fs::read_to_string(dir.path().join("criticals.csv")).unwrap();
        assert!(csv.starts_with("l,alpha,p\n0,0.25,5\n"));
    }

    #[test]
    fn missing_p_is_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config_str("n=1\n").unwrap();
        let e = run_command(Command::Profile, &cfg, &Outputs::new(dir.path(), None)).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }
}
