//! Periodic solutions of the autonomous ODE for the oscillatory component of
//! sign-changing profiles near an interface,
//!
//! `phi''' + c2 phi'' + c1 phi' + c0 phi + phi |phi|^(-n) = 0`, `mu = 3/n`,
//!
//! with Floquet multipliers from the variational equations and a scan in `n`
//! for the loss of the stable orbit.

use std::io::Write;

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscSystem {
    pub n: f64,
    pub mu: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    /// Smoothing width of the singular term at `phi = 0`.
    pub delta: f64,
    /// Typical size of `phi`; sets the absolute integration tolerance.
    pub scale: f64,
}

impl OscSystem {
    pub fn new(n: f64, delta: f64) -> Result<Self> {
        if !(n > 0.0 && n < 3.0) {
            return Err(Error::InvalidParameter(format!("oscillator needs 0 < n < 3, got {n}")));
        }
        let mu = 3.0 / n;
        Ok(Self {
            n,
            mu,
            c2: 3.0 * (mu - 1.0),
            c1: 3.0 * mu * mu - 6.0 * mu + 2.0,
            c0: mu * (mu - 1.0) * (mu - 2.0),
            delta,
            scale: 1.0,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    #[inline]
    fn singular(&self, phi: f64) -> f64 {
        phi * (self.delta * self.delta + phi * phi).powf(-0.5 * self.n)
    }

    #[inline]
    fn singular_derivative(&self, phi: f64) -> f64 {
        let r2 = self.delta * self.delta + phi * phi;
        r2.powf(-0.5 * self.n) - self.n * phi * phi * r2.powf(-0.5 * self.n - 1.0)
    }

    pub fn rhs(&self, x: &[f64; 3]) -> [f64; 3] {
        [x[1], x[2], -self.c2 * x[2] - self.c1 * x[1] - self.c0 * x[0] - self.singular(x[0])]
    }

    /// State plus row-major 3x3 fundamental matrix.
    fn rhs_variational(&self, x: &[f64], dx: &mut [f64]) {
        let s = [x[0], x[1], x[2]];
        let f = self.rhs(&s);
        dx[..3].copy_from_slice(&f);
        let a = [
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [-self.c0 - self.singular_derivative(x[0]), -self.c1, -self.c2],
        ];
        for r in 0..3 {
            for c in 0..3 {
                let mut v = 0.0;
                for k in 0..3 {
                    v += a[r][k] * x[3 + k * 3 + c];
                }
                dx[3 + r * 3 + c] = v;
            }
        }
    }
}

/// `osc_rhs`: derivative of `(phi, phi', phi'')`.
pub fn osc_rhs(sys: &OscSystem, state: [f64; 3]) -> [f64; 3] {
    sys.rhs(&state)
}

/// Dormand-Prince 5(4) with error control and a step cap.
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64, max_step: f64) -> Self {
        Self { rtol, atol, max_step, max_steps: 50_000_000 }
    }

    /// Integrates `x' = f(x)` over `[0, span]` in place. Returns `false` if
    /// the step count is exhausted or the state stops being finite.
    pub fn integrate<F>(&self, f: F, x: &mut [f64], span: f64) -> bool
    where
        F: Fn(&[f64], &mut [f64]),
    {
        let d = x.len();
        let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; d]).collect();
        let mut tmp = vec![0.0; d];
        let mut y5 = vec![0.0; d];
        let mut t = 0.0;
        let mut h = (span * 1e-3).min(self.max_step);
        f(x, &mut k[0]);
        let mut steps = 0;
        while t < span {
            if steps >= self.max_steps {
                return false;
            }
            steps += 1;
            if t + h > span {
                h = span - t;
            }
            let stage = |coef: &[f64], k: &[Vec<f64>], out: &mut [f64]| {
                for i in 0..d {
                    let mut s = 0.0;
                    for (j, c) in coef.iter().enumerate() {
                        s += c * k[j][i];
                    }
                    out[i] = x[i] + h * s;
                }
            };
            stage(&[A21], &k, &mut tmp);
            let (k0, rest) = k.split_at_mut(1);
            f(&tmp, &mut rest[0]);
            let _ = k0;
            stage(&[A31, A32], &k, &mut tmp);
            f(&tmp, &mut k[2]);
            stage(&[A41, A42, A43], &k, &mut tmp);
            f(&tmp, &mut k[3]);
            stage(&[A51, A52, A53, A54], &k, &mut tmp);
            f(&tmp, &mut k[4]);
            stage(&[A61, A62, A63, A64, A65], &k, &mut tmp);
            f(&tmp, &mut k[5]);
            stage(&[B1, 0.0, B3, B4, B5, B6], &k, &mut y5);
            f(&y5, &mut k[6]);
            let mut err = 0.0f64;
            for i in 0..d {
                let e = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
                let sc = self.atol + self.rtol * x[i].abs().max(y5[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                h *= 0.1;
                if h < 1e-300 {
                    return false;
                }
                continue;
            }
            if err <= 1.0 {
                t += h;
                x.copy_from_slice(&y5);
                let k6 = k[6].clone();
                k[0].copy_from_slice(&k6);
                if !x.iter().all(|v| v.is_finite()) {
                    return false;
                }
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * fac).min(self.max_step);
            if h < 1e-16 * span.max(1.0) && t < span {
                h = 1e-16 * span.max(1.0);
            }
        }
        true
    }
}

/// A converged periodic orbit sampled over one period.
#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    pub n: f64,
    pub period: f64,
    pub s: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    /// All three multipliers `(re, im)`, the trivial one first.
    pub multipliers: Vec<(f64, f64)>,
    pub max_abs_phi: f64,
    pub sign_changes: usize,
    pub closure_residual: f64,
    pub delta: f64,
}

impl PeriodicOrbit {
    pub fn nontrivial_multipliers(&self) -> &[(f64, f64)] {
        &self.multipliers[1..]
    }

    pub fn trivial_multiplier(&self) -> (f64, f64) {
        self.multipliers[0]
    }

    pub fn multiplier_product(&self) -> f64 {
        // Product of eigenvalues of a real matrix is real.
        let mut re = 1.0;
        let mut im = 0.0;
        for &(a, b) in &self.multipliers {
            let r = re * a - im * b;
            im = re * b + im * a;
            re = r;
        }
        re
    }

    /// States at the samples as `(phi, phi', phi'')`.
    pub fn state_at_sample(&self, i: usize) -> [f64; 3] {
        [self.phi[i], self.phi1[i], self.phi2[i]]
    }

    /// `phi(s)` extended periodically, by cubic Hermite interpolation of the
    /// samples.
    pub fn phi_at(&self, s: f64) -> f64 {
        let t = s.rem_euclid(self.period);
        let m = self.s.len() - 1;
        let h = self.period / m as f64;
        let i = ((t / h).floor() as usize).min(m - 1);
        let u = (t - self.s[i]) / h;
        let h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
        let h10 = u * (1.0 - u) * (1.0 - u);
        let h01 = u * u * (3.0 - 2.0 * u);
        let h11 = u * u * (u - 1.0);
        h00 * self.phi[i] + h * h10 * self.phi1[i] + h01 * self.phi[i + 1] + h * h11 * self.phi1[i + 1]
    }

    /// Writes `s,phi,phi1,phi2` over one period.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "s,phi,phi1,phi2")?;
        for i in 0..self.s.len() {
            writeln!(w, "{},{},{},{}", self.s[i], self.phi[i], self.phi1[i], self.phi2[i])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OrbitOptions {
    pub samples: usize,
    pub closure_tol: f64,
    pub max_newton: usize,
    /// Periods integrated before Newton to relax onto the attractor.
    pub relax_periods: f64,
    /// Smoothing width relative to the orbit amplitude.
    pub delta_rel: f64,
    pub rtol: f64,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        Self {
            samples: 1024,
            closure_tol: 1e-8,
            max_newton: 30,
            relax_periods: 40.0,
            delta_rel: 1e-6,
            rtol: 1e-11,
        }
    }
}

fn integrator(sys: &OscSystem, period: f64, rtol: f64) -> Dopri5 {
    Dopri5::new(rtol, rtol * 1e-2 * sys.scale, period / 2000.0)
}

/// Flow map and its Jacobian over time `t` from `x0`.
fn flow_with_monodromy(sys: &OscSystem, x0: [f64; 3], t: f64, rtol: f64) -> Option<([f64; 3], [[f64; 3]; 3])> {
    let mut x = vec![0.0; 12];
    x[..3].copy_from_slice(&x0);
    for i in 0..3 {
        x[3 + i * 4] = 1.0;
    }
    if !integrator(sys, t, rtol).integrate(|u, du| sys.rhs_variational(u, du), &mut x, t) {
        return None;
    }
    let mut m = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            m[r][c] = x[3 + r * 3 + c];
        }
    }
    Some(([x[0], x[1], x[2]], m))
}

fn flow(sys: &OscSystem, x0: [f64; 3], t: f64, max_step: f64, rtol: f64) -> Option<[f64; 3]> {
    let mut x = x0.to_vec();
    let integ = Dopri5::new(rtol, rtol * 1e-2 * sys.scale, max_step);
    if !integ.integrate(|u, du| du.copy_from_slice(&sys.rhs(&[u[0], u[1], u[2]])), &mut x, t) {
        return None;
    }
    Some([x[0], x[1], x[2]])
}

/// Moves along the flow to the next point with `phi' = 0`, `phi > 0`, and
/// returns that point and the time taken.
fn next_maximum(sys: &OscSystem, x0: [f64; 3], step: f64, max_time: f64, rtol: f64) -> Option<([f64; 3], f64)> {
    let mut x = x0;
    let mut t = 0.0;
    // Leave the current anchor first.
    let mut prev = x;
    while t < max_time {
        let nx = flow(sys, x, step, step, rtol)?;
        t += step;
        if prev[1] > 0.0 && nx[1] <= 0.0 && nx[0] > 0.0 && t > 2.0 * step {
            // Refine the crossing by bisection on the step length.
            let (mut a, mut b) = (0.0, step);
            let base = x;
            let mut xb = nx;
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                let xm = flow(sys, base, m, step, rtol)?;
                if xm[1] > 0.0 {
                    a = m;
                } else {
                    b = m;
                    xb = xm;
                }
            }
            return Some((xb, t - step + b));
        }
        prev = nx;
        x = nx;
    }
    None
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let m = nalgebra::Matrix3::from_fn(|r, c| a[r][c]);
    let v = nalgebra::Vector3::new(b[0], b[1], b[2]);
    m.lu().solve(&v).map(|s| [s[0], s[1], s[2]])
}

/// Newton on `(phi(0), phi''(0), T)` with `phi'(0) = 0`.
fn newton_orbit(
    sys: &OscSystem,
    mut a: f64,
    mut c: f64,
    mut period: f64,
    opts: &OrbitOptions,
) -> std::result::Result<(f64, f64, f64, f64), f64> {
    let mut last = f64::INFINITY;
    for _ in 0..opts.max_newton {
        let x0 = [a, 0.0, c];
        let Some((xt, m)) = flow_with_monodromy(sys, x0, period, opts.rtol) else {
            return Err(last);
        };
        let r = [xt[0] - x0[0], xt[1] - x0[1], xt[2] - x0[2]];
        let scale = a.abs().max(1e-300);
        let res = r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;
        last = res;
        if res < opts.closure_tol * 1e-2 {
            return Ok((a, c, period, res));
        }
        let ft = sys.rhs(&xt);
        let jac = [
            [m[0][0] - 1.0, m[0][2], ft[0]],
            [m[1][0], m[1][2], ft[1]],
            [m[2][0], m[2][2] - 1.0, ft[2]],
        ];
        let Some(step) = solve3(jac, [-r[0], -r[1], -r[2]]) else {
            return Err(res);
        };
        let mut lambda = 1.0;
        // Keep the period positive and the amplitude from flipping sign.
        while (period + lambda * step[2] <= 0.1 * period || a + lambda * step[0] <= 0.0) && lambda > 1e-3 {
            lambda *= 0.5;
        }
        a += lambda * step[0];
        c += lambda * step[1];
        period += lambda * step[2];
        if !(a.is_finite() && c.is_finite() && period.is_finite()) {
            return Err(res);
        }
    }
    // Accept the final iterate if it meets the closure tolerance.
    let x0 = [a, 0.0, c];
    if let Some(xt) = flow(sys, x0, period, period / 2000.0, opts.rtol) {
        let res = (0..3).fold(0.0f64, |m, i| m.max((xt[i] - x0[i]).abs())) / a.abs();
        if res < opts.closure_tol {
            return Ok((a, c, period, res));
        }
        last = res;
    }
    Err(last)
}

fn build_orbit(sys: &OscSystem, a: f64, c: f64, period: f64, opts: &OrbitOptions) -> Result<PeriodicOrbit> {
    let n = sys.n;
    let samples = opts.samples.max(512);
    let h = period / samples as f64;
    let mut s = Vec::with_capacity(samples + 1);
    let mut phi = Vec::with_capacity(samples + 1);
    let mut phi1 = Vec::with_capacity(samples + 1);
    let mut phi2 = Vec::with_capacity(samples + 1);
    let mut x = [a, 0.0, c];
    for i in 0..=samples {
        s.push(i as f64 * h);
        phi.push(x[0]);
        phi1.push(x[1]);
        phi2.push(x[2]);
        if i < samples {
            x = flow(sys, x, h, period / 2000.0, opts.rtol)
                .ok_or(Error::OrbitNoConvergence { n, residual: f64::NAN })?;
        }
    }
    let x0 = [a, 0.0, c];
    let closure = (0..3).fold(0.0f64, |m, i| m.max((x[i] - x0[i]).abs())) / a.abs();
    let (_, mono) = flow_with_monodromy(sys, x0, period, opts.rtol)
        .ok_or(Error::OrbitNoConvergence { n, residual: closure })?;
    let mm = nalgebra::Matrix3::from_fn(|r, c| mono[r][c]);
    let eig = mm.complex_eigenvalues();
    let mut mults: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im)).collect();
    // Trivial multiplier first: the one closest to 1.
    mults.sort_by(|p, q| {
        let dp = (p.0 - 1.0).hypot(p.1);
        let dq = (q.0 - 1.0).hypot(q.1);
        dp.partial_cmp(&dq).unwrap()
    });
    let max_abs_phi = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sign_changes = phi.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
    Ok(PeriodicOrbit {
        n,
        period,
        s,
        phi,
        phi1,
        phi2,
        multipliers: mults,
        max_abs_phi,
        sign_changes,
        closure_residual: closure,
        delta: sys.delta,
    })
}

/// Finds the stable sign-changing orbit: relax along the flow from
/// `(amplitude, 0, 0)`, anchor at a maximum, then Newton on the period map.
pub fn find_periodic_orbit(n: f64, amplitude_guess: f64, period_guess: f64) -> Result<PeriodicOrbit> {
    find_periodic_orbit_with(n, amplitude_guess, period_guess, &OrbitOptions::default())
}

pub fn find_periodic_orbit_with(
    n: f64,
    amplitude_guess: f64,
    period_guess: f64,
    opts: &OrbitOptions,
) -> Result<PeriodicOrbit> {
    if !(amplitude_guess > 0.0 && period_guess > 0.0) {
        return Err(Error::InvalidParameter("orbit guesses must be positive".into()));
    }
    let mut sys = OscSystem::new(n, opts.delta_rel * amplitude_guess)?.with_scale(amplitude_guess);
    let step = period_guess / 200.0;
    let relax_time = opts.relax_periods * period_guess;
    let fail = |r: f64| Error::OrbitNoConvergence { n, residual: r };
    let mut x = flow(&sys, [amplitude_guess, 0.0, 0.0], relax_time, step, opts.rtol).ok_or(fail(f64::NAN))?;
    let bound = 1e6 * amplitude_guess.max(1.0);
    if x.iter().any(|v| v.abs() > bound) {
        return Err(fail(f64::INFINITY));
    }
    // The orbit amplitude falls steeply with n, so the smoothing width
    // follows the relaxed amplitude rather than the guess.
    for _ in 0..3 {
        let (xm, _) = next_maximum(&sys, x, step, 4.0 * period_guess, opts.rtol).ok_or(fail(f64::NAN))?;
        let delta = opts.delta_rel * xm[0];
        let settled = (delta / sys.delta - 1.0).abs() < 0.5;
        sys = OscSystem::new(n, delta)?.with_scale(xm[0]);
        x = xm;
        if settled {
            break;
        }
        x = flow(&sys, x, 0.25 * relax_time, step, opts.rtol).ok_or(fail(f64::NAN))?;
    }
    let (x1, _) = next_maximum(&sys, x, step, 4.0 * period_guess, opts.rtol).ok_or(fail(f64::NAN))?;
    let (x2, t12) = next_maximum(&sys, x1, step, 4.0 * period_guess, opts.rtol).ok_or(fail(f64::NAN))?;
    let _ = x2;
    if t12 < 10.0 * (t12 / 2000.0) || t12 < 1e-9 {
        return Err(Error::OrbitDegenerate { period: t12 });
    }
    orbit_from_anchor(&sys, x1[0], x1[2], t12, opts)
}

fn orbit_from_anchor(sys: &OscSystem, a: f64, c: f64, period: f64, opts: &OrbitOptions) -> Result<PeriodicOrbit> {
    let (mut a, mut c, mut period) = (a, c, period);
    let mut o = *opts;
    let mut orbit;
    // Integration noise can sit right at the closure tolerance for short
    // orbits; polish again with a tighter integrator before giving up.
    let mut tries = 0;
    loop {
        (a, c, period, _) =
            newton_orbit(sys, a, c, period, &o).map_err(|r| Error::OrbitNoConvergence { n: sys.n, residual: r })?;
        orbit = build_orbit(sys, a, c, period, &o)?;
        if orbit.closure_residual <= opts.closure_tol {
            break;
        }
        tries += 1;
        if tries > 2 || orbit.closure_residual > 1e3 * opts.closure_tol {
            return Err(Error::OrbitNoConvergence { n: sys.n, residual: orbit.closure_residual });
        }
        o.rtol *= 0.1;
    }
    if orbit.sign_changes < 2 {
        return Err(Error::OrbitNoConvergence { n: sys.n, residual: orbit.closure_residual });
    }
    Ok(orbit)
}

/// Continues an orbit to a nearby `n` by Newton from the previous anchor.
pub fn continue_orbit(orbit: &PeriodicOrbit, n: f64, opts: &OrbitOptions) -> Result<PeriodicOrbit> {
    let sys = OscSystem::new(n, opts.delta_rel * orbit.max_abs_phi)?.with_scale(orbit.max_abs_phi);
    orbit_from_anchor(&sys, orbit.phi[0], orbit.phi2[0], orbit.period, opts)
}

/// The same orbit anchored at sample `k` (shifted phase), with the
/// multipliers recomputed.
pub fn reanchor(orbit: &PeriodicOrbit, k: usize, opts: &OrbitOptions) -> Result<PeriodicOrbit> {
    let sys = OscSystem::new(orbit.n, orbit.delta)?.with_scale(orbit.max_abs_phi);
    let x0 = orbit.state_at_sample(k % (orbit.s.len() - 1));
    let (_, mono) = flow_with_monodromy(&sys, x0, orbit.period, opts.rtol)
        .ok_or(Error::OrbitNoConvergence { n: orbit.n, residual: f64::NAN })?;
    let mm = nalgebra::Matrix3::from_fn(|r, c| mono[r][c]);
    let mut mults: Vec<(f64, f64)> = mm.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
    mults.sort_by(|p, q| (p.0 - 1.0).hypot(p.1).partial_cmp(&(q.0 - 1.0).hypot(q.1)).unwrap());
    let mut out = orbit.clone();
    out.multipliers = mults;
    Ok(out)
}

/// Default seeds `(amplitude, period)`.
pub fn default_seed(n: f64) -> (f64, f64) {
    // Period grows quickly towards the loss of the orbit; a rough guess is
    // enough since the flow is relaxed before Newton.
    let period = if n < 1.0 { 2.0 * n.max(0.1) } else { 2.0 * n.powi(4) };
    (1.0, period)
}

#[derive(Debug, Clone)]
pub struct HeteroclinicScan {
    /// `(last n with an orbit, first n without)`, when a loss was found.
    pub bracket: Option<(f64, f64)>,
    pub estimate: Option<f64>,
    /// `(n, period)` of every converged orbit along the scan.
    pub periods: Vec<(f64, f64)>,
}

/// Continues the orbit from `n_lo` towards `n_hi` in `steps` increments,
/// halving the increment at a failure until it drops below 1e-3; the last
/// success and first failure bracket the loss of the orbit.
pub fn scan_heteroclinic(n_lo: f64, n_hi: f64, steps: usize) -> Result<HeteroclinicScan> {
    let (a, t) = default_seed(n_lo);
    let seed = find_periodic_orbit(n_lo, a, t).map_err(|_| Error::SeedFailure { n: n_lo })?;
    scan_from(seed, n_hi, steps)
}

/// Same scan starting from an already converged orbit.
pub fn scan_from(seed: PeriodicOrbit, n_hi: f64, steps: usize) -> Result<HeteroclinicScan> {
    let opts = OrbitOptions::default();
    let n_lo = seed.n;
    if !(n_hi > n_lo) || steps == 0 {
        return Err(Error::InvalidParameter("scan needs n_lo < n_hi and steps > 0".into()));
    }
    let mut dn = (n_hi - n_lo) / steps as f64;
    let mut cur = seed;
    let mut periods = vec![(cur.n, cur.period)];
    let min_dn = 1e-3;
    loop {
        if cur.n >= n_hi - 1e-12 {
            return Ok(HeteroclinicScan { bracket: None, estimate: None, periods });
        }
        let next_n = (cur.n + dn).min(n_hi);
        let attempt = continue_orbit(&cur, next_n, &opts)
            .ok()
            // Period blow-up: the orbit is close to the connection.
            .filter(|o| o.period < 50.0 * cur.period.max(1.0));
        match attempt {
            Some(o) => {
                periods.push((o.n, o.period));
                cur = o;
            }
            None => {
                if dn <= min_dn {
                    let bracket = (cur.n, next_n);
                    return Ok(HeteroclinicScan {
                        bracket: Some(bracket),
                        estimate: Some(0.5 * (bracket.0 + bracket.1)),
                        periods,
                    });
                }
                dn *= 0.5;
            }
        }
    }
}

/// Orbit search at several `n` values in parallel.
pub fn orbits_for(ns: &[f64]) -> Vec<Result<PeriodicOrbit>> {
    par::map_jobs(ns, |&n| {
        let (a, t) = default_seed(n);
        find_periodic_orbit(n, a, t)
    })
}

/// `f(y) = beta^(1/n) (y0-y)^(3/n) phi(ln(y0-y) + s0)`.
pub fn reconstruct_interface_tail(orbit: &PeriodicOrbit, y0: f64, s0: f64, beta: f64, ys: &[f64]) -> Vec<f64> {
    let n = orbit.n;
    let scale = beta.powf(1.0 / n);
    ys.iter()
        .map(|&y| {
            let d = y0 - y;
            if d <= 0.0 {
                return 0.0;
            }
            scale * d.powf(3.0 / n) * orbit.phi_at(d.ln() + s0)
        })
        .collect()
}
