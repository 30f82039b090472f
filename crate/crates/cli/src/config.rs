//! Plain `key=value` configuration with `[section]` headers.
//!
//! Keys before the first header belong to `[model]`. `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;
use vss_core::model::ProblemKind;

pub const DEFAULT_EPS: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("{key}: {msg}")]
    OutOfRange { key: String, msg: String },
    #[error("missing required key {0}")]
    Missing(String),
    #[error("cannot read config: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub n: f64,
    pub p: Option<f64>,
    pub dim: u32,
    pub problem: ProblemKind,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSection {
    pub y0_lo: f64,
    pub y0_hi: f64,
    pub length: Option<f64>,
    pub amplitude: f64,
    pub support: Option<f64>,
    pub index: usize,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchStart {
    /// Amplitude-law profile just below `p0`.
    NearCritical,
    /// Semilinear pitchfork seed below `p_l`.
    Pitchfork,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchSection {
    pub start: BranchStart,
    pub delta: f64,
    pub l: usize,
    pub p_target: Option<f64>,
    pub ds: f64,
    pub tol: f64,
    pub length: Option<f64>,
    pub origin: Option<f64>,
    pub p_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSection {
    pub amplitude: Option<f64>,
    pub period: Option<f64>,
    pub samples: usize,
    pub scan_to: Option<f64>,
    pub scan_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveSection {
    pub x_half: f64,
    pub dx: f64,
    pub t_end: f64,
    pub dt0: f64,
    pub growth: f64,
    pub t_sample0: f64,
    pub amplitude: f64,
    pub width: f64,
    /// Compare against the free-boundary profile solved with `[profile]`.
    pub compare: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub model: ModelSection,
    pub profile: ProfileSection,
    pub branch: BranchSection,
    pub orbit: OrbitSection,
    pub evolve: EvolveSection,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("model", &["n", "p", "N", "problem", "eps"]),
    ("profile", &["y0_lo", "y0_hi", "length", "amplitude", "support", "index", "tol"]),
    ("branch", &["start", "delta", "l", "p_target", "ds", "tol", "length", "origin", "p_min"]),
    ("orbit", &["amplitude", "period", "samples", "scan_to", "scan_steps"]),
    ("evolve", &["x_half", "dx", "t_end", "dt0", "growth", "t_sample0", "amplitude", "width", "compare"]),
];

struct Entry {
    line: usize,
    section: &'static str,
    key: String,
    value: String,
}

struct Entries(Vec<Entry>);

impl Entries {
    fn raw(&self, section: &str, key: &str) -> Option<&Entry> {
        self.0.iter().find(|e| e.section == section && e.key == key)
    }

    fn f64(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(e) => {
                let v: f64 = e.value.parse().map_err(|_| ConfigError::Parse {
                    line: e.line,
                    msg: format!("`{}` is not a number", e.value),
                })?;
                if !v.is_finite() {
                    return Err(ConfigError::OutOfRange { key: name(section, key), msg: "must be finite".into() });
                }
                Ok(Some(v))
            }
        }
    }

    fn usize(&self, section: &str, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|_| ConfigError::Parse {
                line: e.line,
                msg: format!("`{}` is not a non-negative integer", e.value),
            }),
        }
    }

    fn word(&self, section: &str, key: &str) -> Option<(usize, &str)> {
        self.raw(section, key).map(|e| (e.line, e.value.as_str()))
    }
}

fn name(section: &str, key: &str) -> String {
    format!("{section}.{key}")
}

fn positive(section: &str, key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::OutOfRange { key: name(section, key), msg: format!("must be positive, got {v}") })
    }
}

fn opt_positive(section: &str, key: &str, v: Option<f64>) -> Result<Option<f64>, ConfigError> {
    v.map(|v| positive(section, key, v)).transpose()
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut section: &'static str = "model";
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let sec = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Parse { line, msg: "unterminated section header".into() })?
                .trim();
            section = SECTIONS
                .iter()
                .find(|(s, _)| *s == sec)
                .map(|(s, _)| *s)
                .ok_or_else(|| ConfigError::Parse { line, msg: format!("unknown section [{sec}]") })?;
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse { line, msg: format!("expected key=value, got `{body}`") })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Parse { line, msg: "empty key".into() });
        }
        if value.is_empty() {
            return Err(ConfigError::Parse { line, msg: format!("empty value for `{key}`") });
        }
        let known = SECTIONS.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
        if !known.contains(&key) {
            return Err(ConfigError::UnknownKey { line, section: section.into(), key: key.into() });
        }
        if out.iter().any(|e| e.section == section && e.key == key) {
            return Err(ConfigError::Parse { line, msg: format!("duplicate key `{key}` in [{section}]") });
        }
        out.push(Entry { line, section, key: key.into(), value: value.into() });
    }
    Ok(Entries(out))
}

pub fn parse_config_str(text: &str) -> Result<Config, ConfigError> {
    let e = tokenize(text)?;

    let n = e.f64("model", "n")?.ok_or_else(|| ConfigError::Missing("model.n".into()))?;
    let p = e.f64("model", "p")?;
    if let Some(p) = p {
        if p <= 1.0 {
            return Err(ConfigError::OutOfRange { key: "model.p".into(), msg: format!("must exceed 1, got {p}") });
        }
    }
    let dim = match e.usize("model", "N")? {
        None => 1,
        Some(0) => return Err(ConfigError::OutOfRange { key: "model.N".into(), msg: "must be at least 1".into() }),
        Some(d) => u32::try_from(d).map_err(|_| ConfigError::OutOfRange { key: "model.N".into(), msg: "too large".into() })?,
    };
    let problem = match e.word("model", "problem") {
        None => ProblemKind::Fbp,
        Some((_, "fbp")) => ProblemKind::Fbp,
        Some((_, "cp")) => ProblemKind::Cp,
        Some((line, w)) => return Err(ConfigError::Parse { line, msg: format!("problem must be fbp or cp, got `{w}`") }),
    };
    let eps = positive("model", "eps", e.f64("model", "eps")?.unwrap_or(DEFAULT_EPS))?;
    let model = ModelSection { n, p, dim, problem, eps };

    let y0_lo = positive("profile", "y0_lo", e.f64("profile", "y0_lo")?.unwrap_or(2.0))?;
    let y0_hi = e.f64("profile", "y0_hi")?.unwrap_or(8.0);
    if y0_hi <= y0_lo {
        return Err(ConfigError::OutOfRange { key: "profile.y0_hi".into(), msg: format!("must exceed y0_lo = {y0_lo}") });
    }
    let profile = ProfileSection {
        y0_lo,
        y0_hi,
        length: opt_positive("profile", "length", e.f64("profile", "length")?)?,
        amplitude: e.f64("profile", "amplitude")?.unwrap_or(1.0),
        support: opt_positive("profile", "support", e.f64("profile", "support")?)?,
        index: e.usize("profile", "index")?.unwrap_or(0),
        tol: opt_positive("profile", "tol", e.f64("profile", "tol")?)?,
    };

    let start = match e.word("branch", "start") {
        None | Some((_, "near_critical")) => BranchStart::NearCritical,
        Some((_, "pitchfork")) => BranchStart::Pitchfork,
        Some((line, w)) => {
            return Err(ConfigError::Parse { line, msg: format!("start must be near_critical or pitchfork, got `{w}`") })
        }
    };
    let branch = BranchSection {
        start,
        delta: positive("branch", "delta", e.f64("branch", "delta")?.unwrap_or(0.25))?,
        l: e.usize("branch", "l")?.unwrap_or(0),
        p_target: e.f64("branch", "p_target")?,
        ds: positive("branch", "ds", e.f64("branch", "ds")?.unwrap_or(0.05))?,
        tol: positive("branch", "tol", e.f64("branch", "tol")?.unwrap_or(1e-4))?,
        length: opt_positive("branch", "length", e.f64("branch", "length")?)?,
        origin: e.f64("branch", "origin")?,
        p_min: e.f64("branch", "p_min")?,
    };

    let samples = e.usize("orbit", "samples")?.unwrap_or(1024);
    if samples < 512 {
        return Err(ConfigError::OutOfRange { key: "orbit.samples".into(), msg: format!("must be at least 512, got {samples}") });
    }
    let orbit = OrbitSection {
        amplitude: opt_positive("orbit", "amplitude", e.f64("orbit", "amplitude")?)?,
        period: opt_positive("orbit", "period", e.f64("orbit", "period")?)?,
        samples,
        scan_to: e.f64("orbit", "scan_to")?,
        scan_steps: e.usize("orbit", "scan_steps")?.unwrap_or(20).max(1),
    };

    let compare = match e.word("evolve", "compare") {
        None | Some((_, "false")) => false,
        Some((_, "true")) => true,
        Some((line, w)) => return Err(ConfigError::Parse { line, msg: format!("compare must be true or false, got `{w}`") }),
    };
    let growth = e.f64("evolve", "growth")?.unwrap_or(1.2);
    if growth < 1.0 {
        return Err(ConfigError::OutOfRange { key: "evolve.growth".into(), msg: format!("must be at least 1, got {growth}") });
    }
    let evolve = EvolveSection {
        x_half: positive("evolve", "x_half", e.f64("evolve", "x_half")?.unwrap_or(60.0))?,
        dx: positive("evolve", "dx", e.f64("evolve", "dx")?.unwrap_or(0.05))?,
        t_end: positive("evolve", "t_end", e.f64("evolve", "t_end")?.unwrap_or(1e4))?,
        dt0: positive("evolve", "dt0", e.f64("evolve", "dt0")?.unwrap_or(1e-6))?,
        growth,
        t_sample0: positive("evolve", "t_sample0", e.f64("evolve", "t_sample0")?.unwrap_or(10.0))?,
        amplitude: positive("evolve", "amplitude", e.f64("evolve", "amplitude")?.unwrap_or(1.0))?,
        width: positive("evolve", "width", e.f64("evolve", "width")?.unwrap_or(1.0))?,
        compare,
    };

    Ok(Config { model, profile, branch, orbit, evolve })
}

pub fn parse_config(path: &Path) -> Result<Config, ConfigError> {
    let bytes = std::fs::read(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes).map_err(|_| ConfigError::Io(format!("{}: not valid UTF-8", path.display())))?;
    parse_config_str(&text)
}

impl Config {
    /// Canonical text form; parses back to an equal `Config`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let m = &self.model;
        let _ = writeln!(s, "[model]\nn={}\nN={}\neps={}", m.n, m.dim, m.eps);
        if let Some(p) = m.p {
            let _ = writeln!(s, "p={p}");
        }
        let _ = writeln!(s, "problem={}", if m.problem == ProblemKind::Fbp { "fbp" } else { "cp" });
        let pr = &self.profile;
        let _ = writeln!(s, "[profile]\ny0_lo={}\ny0_hi={}\namplitude={}\nindex={}", pr.y0_lo, pr.y0_hi, pr.amplitude, pr.index);
        opt(&mut s, "length", pr.length);
        opt(&mut s, "support", pr.support);
        opt(&mut s, "tol", pr.tol);
        let b = &self.branch;
        let start = if b.start == BranchStart::NearCritical { "near_critical" } else { "pitchfork" };
        let _ = writeln!(s, "[branch]\nstart={start}\ndelta={}\nl={}\nds={}\ntol={}", b.delta, b.l, b.ds, b.tol);
        opt(&mut s, "p_target", b.p_target);
        opt(&mut s, "length", b.length);
        opt(&mut s, "origin", b.origin);
        opt(&mut s, "p_min", b.p_min);
        let o = &self.orbit;
        let _ = writeln!(s, "[orbit]\nsamples={}\nscan_steps={}", o.samples, o.scan_steps);
        opt(&mut s, "amplitude", o.amplitude);
        opt(&mut s, "period", o.period);
        opt(&mut s, "scan_to", o.scan_to);
        let v = &self.evolve;
        let _ = writeln!(
            s,
            "[evolve]\nx_half={}\ndx={}\nt_end={}\ndt0={}\ngrowth={}\nt_sample0={}\namplitude={}\nwidth={}\ncompare={}",
            v.x_half, v.dx, v.t_end, v.dt0, v.growth, v.t_sample0, v.amplitude, v.width, v.compare
        );
        s
    }
}

fn opt(s: &mut String, key: &str, v: Option<f64>) {
    if let Some(v) = v {
        let _ = writeln!(s, "{key}={v}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_fbp() {
        let c = parse_config_str("n=1\np=3\nN=1").unwrap();
        assert_eq!(c.model.n, 1.0);
        assert_eq!(c.model.p, Some(3.0));
        assert_eq!(c.model.problem, ProblemKind::Fbp);
        assert_eq!(c.model.eps, DEFAULT_EPS);
    }

    #[test]
    fn p_below_one_is_out_of_range() {
        let e = parse_config_str("n=1\np=0.5").unwrap_err();
        assert!(matches!(e, ConfigError::OutOfRange { ref key, .. } if key == "model.p"));
    }

    #[test]
    fn unknown_key_reports_line() {
        let e = parse_config_str("n=1\n\n[branch]\nds=0.1\nfoo=2\n").unwrap_err();
        assert_eq!(e, ConfigError::UnknownKey { line: 5, section: "branch".into(), key: "foo".into() });
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = parse_config_str("n=1\np=abc\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 2, .. }));
        let e = parse_config_str("# c\nn=1\njunk\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 3, .. }));
        let e = parse_config_str("n=1\n[nope]\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 2, .. }));
    }

    #[test]
    fn comments_and_sections() {
        let c = parse_config_str("# top\n[model]\nn = 0.5 # inline\np=2\nproblem=cp\n[evolve]\ncompare=true\n").unwrap();
        assert_eq!(c.model.problem, ProblemKind::Cp);
        assert!(c.evolve.compare);
    }

    #[test]
    fn text_round_trip() {
        let c = parse_config_str("n=0.95\np=2\nproblem=cp\neps=0.01\n[branch]\np_target=1.7\norigin=6\n").unwrap();
        assert_eq!(parse_config_str(&c.to_text()).unwrap(), c);
    }
}
