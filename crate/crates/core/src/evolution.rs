//! Implicit time integration of the 1D thin-film equation with absorption,
//! `u_t = -(Q_eps(u) u_xxx)_x - |u|^(p-1) u`, used to check the decay and
//! interface-growth exponents of the VSS ansatz.

use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::profiles::{q_eps, Profile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionParams {
    pub n: f64,
    pub p: f64,
    pub eps: f64,
    /// Domain half-width `X`.
    pub x_half: f64,
    pub dx: f64,
    pub dt0: f64,
    pub growth: f64,
    /// `dt <= dt_cap_frac * t`.
    pub dt_cap_frac: f64,
    pub dt_max: f64,
    pub t_end: f64,
    /// First logged sample time.
    pub t_sample0: f64,
    pub samples_per_decade: usize,
}

impl EvolutionParams {
    pub fn new(n: f64, p: f64, eps: f64, x_half: f64, dx: f64, t_end: f64) -> Self {
        Self {
            n,
            p,
            eps,
            x_half,
            dx,
            dt0: 1e-6,
            growth: 1.2,
            dt_cap_frac: 0.05,
            dt_max: f64::INFINITY,
            t_end,
            t_sample0: 1.0,
            samples_per_decade: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0 && self.x_half > 2.0 * self.dx) {
            return Err(Error::InvalidParameter("need dx > 0 and X > 2 dx".into()));
        }
        if !(self.eps > 0.0) || !(self.p > 1.0) || self.n < 0.0 {
            return Err(Error::InvalidParameter("need eps > 0, p > 1, n >= 0".into()));
        }
        if !(self.dt0 > 0.0 && self.growth >= 1.0 && self.t_end > 0.0 && self.t_sample0 > 0.0) {
            return Err(Error::InvalidParameter("invalid time-step policy".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Field {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub t: f64,
    pub mass: f64,
    pub norm_inf: f64,
}

impl Field {
    pub fn new(x: Vec<f64>, u: Vec<f64>, t: f64) -> Self {
        let mut f = Self { x, u, t, mass: 0.0, norm_inf: 0.0 };
        f.refresh();
        f
    }

    /// Samples `u0` on the grid of `params`.
    pub fn from_fn(params: &EvolutionParams, u0: impl Fn(f64) -> f64) -> Self {
        let m = (2.0 * params.x_half / params.dx).round() as usize;
        let x: Vec<f64> = (0..=m).map(|i| -params.x_half + i as f64 * params.dx).collect();
        let mut u: Vec<f64> = x.iter().map(|&v| u0(v)).collect();
        u[0] = 0.0;
        u[m] = 0.0;
        Self::new(x, u, 0.0)
    }

    fn refresh(&mut self) {
        let h = if self.x.len() > 1 { self.x[1] - self.x[0] } else { 0.0 };
        self.mass = h * self.u.iter().sum::<f64>();
        self.norm_inf = self.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }

    /// Largest `|x|` with `|u| > 1e-6 ||u||`.
    pub fn halfwidth(&self) -> f64 {
        let thr = 1e-6 * self.norm_inf;
        self.x
            .iter()
            .zip(&self.u)
            .filter(|(_, u)| u.abs() > thr)
            .fold(0.0f64, |m, (x, _)| m.max(x.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.u.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Linear interpolation, zero outside the grid.
    pub fn value_at(&self, x: f64) -> f64 {
        let m = self.x.len() - 1;
        let h = self.x[1] - self.x[0];
        let s = (x - self.x[0]) / h;
        if s < 0.0 || s > m as f64 {
            return 0.0;
        }
        let i = (s.floor() as usize).min(m - 1);
        let w = s - i as f64;
        (1.0 - w) * self.u[i] + w * self.u[i + 1]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,u")?;
        for (x, u) in self.x.iter().zip(&self.u) {
            writeln!(w, "{x},{u}")?;
        }
        Ok(())
    }
}

/// Value at index `i` of the extended grid: `u = 0` at both ends and
/// `u_x = 0` through mirrored ghost nodes.
#[inline]
fn ext(u: &[f64], i: isize) -> f64 {
    let m = u.len() as isize - 1;
    if i < 0 {
        u[(-i) as usize]
    } else if i > m {
        u[(2 * m - i) as usize]
    } else {
        u[i as usize]
    }
}

struct Discretization {
    n: f64,
    p: f64,
    eps: f64,
    dx: f64,
}

impl Discretization {
    /// Flux `Q u_xxx` at face `i + 1/2`.
    fn flux(&self, u: &[f64], i: isize) -> f64 {
        let q = 0.5 * (q_eps(ext(u, i), self.n, self.eps) + q_eps(ext(u, i + 1), self.n, self.eps));
        let d3 = (ext(u, i + 2) - 3.0 * ext(u, i + 1) + 3.0 * ext(u, i) - ext(u, i - 1)) / self.dx.powi(3);
        q * d3
    }

    /// Residual at interior node `i` for the implicit Euler step.
    fn residual_at(&self, u: &[f64], old: &[f64], dt: f64, i: usize) -> f64 {
        let ii = i as isize;
        let div = (self.flux(u, ii) - self.flux(u, ii - 1)) / self.dx;
        let a = u[i].abs().powf(self.p - 1.0) * u[i];
        u[i] - old[i] + dt * (div + a)
    }

    fn residual(&self, u: &[f64], old: &[f64], dt: f64) -> Vec<f64> {
        let m = u.len() - 1;
        let mut r = vec![0.0; m + 1];
        for (i, ri) in r.iter_mut().enumerate().take(m).skip(1) {
            *ri = self.residual_at(u, old, dt, i);
        }
        r
    }
}

/// One implicit Euler step of size `dt`, solved by damped Newton with a
/// pentadiagonal Jacobian from coloured differences.
pub fn step(field: &Field, params: &EvolutionParams, dt: f64) -> Result<Field> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("dt must be positive".into()));
    }
    let disc = Discretization { n: params.n, p: params.p, eps: params.eps, dx: params.dx };
    let old = &field.u;
    let m = old.len() - 1;
    let inner = m - 1;
    let mut u = old.clone();
    let scale = field.norm_inf.max(1e-300);
    let fail = || Error::NewtonFailure { t: field.t, dt };
    let mut r = disc.residual(&u, old, dt);
    for _ in 0..30 {
        let rn = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if rn <= 1e-10 * scale {
            let mut out = Field::new(field.x.clone(), u, field.t + dt);
            out.refresh();
            return Ok(out);
        }
        // Jacobian on the interior unknowns 1..m-1, five colours.
        let mut jac = BandMatrix::zeros(inner, 2, 2);
        for colour in 0..5 {
            let mut up = u.clone();
            let mut hs = vec![0.0; m + 1];
            for j in (1 + colour..m).step_by(5) {
                let h = 1e-7 * u[j].abs().max(params.eps.max(1e-6 * scale));
                up[j] += h;
                hs[j] = h;
            }
            for j in (1 + colour..m).step_by(5) {
                let lo = j.saturating_sub(2).max(1);
                let hi = (j + 2).min(m - 1);
                for i in lo..=hi {
                    let d = (disc.residual_at(&up, old, dt, i) - r[i]) / hs[j];
                    jac.set(i - 1, j - 1, d);
                }
            }
        }
        let lu = jac.factor().ok_or_else(fail)?;
        let mut delta: Vec<f64> = r[1..m].iter().map(|v| -v).collect();
        lu.solve_in_place(&mut delta);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..10 {
            let mut trial = u.clone();
            for j in 1..m {
                trial[j] += lambda * delta[j - 1];
            }
            let rt = disc.residual(&trial, old, dt);
            let nt = rt.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if nt.is_finite() && nt < rn * (1.0 - 0.25 * lambda) + 1e-300 {
                u = trial;
                r = rt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(fail());
        }
    }
    Err(fail())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub norm_inf: f64,
    pub mass: f64,
    pub halfwidth: f64,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub samples: Vec<Sample>,
    pub decay_slope: f64,
    pub interface_slope: f64,
    /// `(t, sup |t^(1/(p-1)) u(y t^beta, t) - f(y)|)` at each decade.
    pub profile_errors: Vec<(f64, f64)>,
    /// Snapshot at the end of every decade.
    pub snapshots: Vec<Field>,
    pub min_value: f64,
    pub steps: usize,
    pub rejected: usize,
    pub final_field: Field,
}

impl RunSummary {
    pub fn write_log<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,norm_inf,mass,halfwidth")?;
        for s in &self.samples {
            writeln!(w, "{},{},{},{}", s.t, s.norm_inf, s.mass, s.halfwidth)?;
        }
        Ok(())
    }
}

fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
    if points.len() < 2 {
        return f64::NAN;
    }
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (m * sxy - sx * sy) / (m * sxx - sx * sx)
}

fn profile_error(field: &Field, vss: &Profile, alpha: f64, beta: f64) -> f64 {
    let t = field.t;
    let amp = t.powf(alpha);
    let stretch = t.powf(beta);
    let y_max = vss.y.last().cloned().unwrap_or(0.0) * 1.2;
    let k = 400;
    (0..=k)
        .map(|i| {
            let y = y_max * i as f64 / k as f64;
            let left = amp * field.value_at(y * stretch);
            let right = amp * field.value_at(-y * stretch);
            let f = vss.value_at(y);
            (left - f).abs().max((right - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Integrates to `t_end`, sampling `samples_per_decade` times per decade
/// from `t_sample0`.
pub fn run(params: &EvolutionParams, u0: Field, vss: Option<&Profile>) -> Result<RunSummary> {
    params.validate()?;
    let alpha = 1.0 / (params.p - 1.0);
    let beta = (params.p - params.n - 1.0) / (4.0 * (params.p - 1.0));
    let vss = if beta > 0.0 { vss } else { None };
    let mut targets = Vec::new();
    let mut k = 0;
    loop {
        let t = params.t_sample0 * 10f64.powf(k as f64 / params.samples_per_decade as f64);
        if t > params.t_end * (1.0 + 1e-12) {
            break;
        }
        targets.push(t);
        k += 1;
    }
    let mut field = u0;
    let mut dt = params.dt0;
    let mut samples = Vec::new();
    let mut snapshots = Vec::new();
    let mut profile_errors = Vec::new();
    let mut min_value = field.min_value();
    let (mut steps, mut rejected) = (0, 0);
    let guard = ((0.5 / params.dx).ceil() as usize).max(3);
    for (idx, &target) in targets.iter().enumerate() {
        while field.t < target * (1.0 - 1e-12) {
            let cap = (params.dt_cap_frac * field.t).max(params.dt0).min(params.dt_max);
            let mut h = dt.min(cap).min(target - field.t);
            let next = loop {
                match step(&field, params, h) {
                    Ok(f) => break f,
                    Err(Error::NewtonFailure { .. }) if h > 1e-14 => {
                        rejected += 1;
                        h *= 0.5;
                        dt = h;
                    }
                    Err(e) => return Err(e),
                }
            };
            steps += 1;
            field = next;
            min_value = min_value.min(field.min_value());
            let edge = field.u[..guard].iter().chain(&field.u[field.u.len() - guard..]).fold(0.0f64, |m, v| m.max(v.abs()));
            if edge > 1e-12 {
                return Err(Error::BoundaryContamination { t: field.t, value: edge });
            }
            if h >= dt * (1.0 - 1e-12) {
                dt = h * params.growth;
            }
        }
        samples.push(Sample { t: field.t, norm_inf: field.norm_inf, mass: field.mass, halfwidth: field.halfwidth() });
        if idx % params.samples_per_decade == 0 || idx + 1 == targets.len() {
            if let Some(f) = vss {
                profile_errors.push((field.t, profile_error(&field, f, alpha, beta)));
            }
            snapshots.push(field.clone());
        }
    }
    let t_fit = 10.0 * params.t_sample0;
    let fit: Vec<&Sample> = samples.iter().filter(|s| s.t >= t_fit * (1.0 - 1e-9)).collect();
    let decay_slope = fit_slope(&fit.iter().map(|s| (s.t, s.norm_inf)).collect::<Vec<_>>());
    let interface_slope = fit_slope(&fit.iter().map(|s| (s.t, s.halfwidth)).collect::<Vec<_>>());
    Ok(RunSummary {
        samples,
        decay_slope,
        interface_slope,
        profile_errors,
        snapshots,
        min_value,
        steps,
        rejected,
        final_field: field,
    })
}

/// Bell-shaped compactly supported data `amplitude (1 - x^2/w^2)^2`.
pub fn bump(amplitude: f64, width: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| {
        let s = x / width;
        if s.abs() < 1.0 {
            amplitude * (1.0 - s * s).powi(2)
        } else {
            0.0
        }
    }
}
