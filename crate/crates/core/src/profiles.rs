//! Similarity profiles: the regularized VSS ODE, interface shooting for the
//! free-boundary problem, truncated-domain solves for the Cauchy problem, and
//! source-type profiles of the pure thin-film equation.

use std::io::Write;

use crate::bvp::{solve_bvp_with, BvpGuess, BvpOptions, BvpProblem, BvpSolution};
use crate::error::{Error, Result};
use crate::model::{derive_exponents, DerivedExponents, ProblemKind, SimilarityParams};

pub const DEFAULT_FBP_TOL: f64 = 1e-3;
pub const DEFAULT_CP_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Fbp,
    Cp,
    PureTfeFbp,
    PureTfeCp,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// A similarity profile sampled on a mesh.
#[derive(Debug, Clone)]
pub struct Profile {
    pub params: SimilarityParams,
    pub y: Vec<f64>,
    pub f: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub f3: Vec<f64>,
    /// Interface location (free-boundary kinds) or truncation length.
    pub y0: f64,
    pub kind: ProfileKind,
    pub norm_inf: f64,
    pub parity: Parity,
    /// Underlying collocation solution in the state `(f, f', f'', Q f''')`,
    /// or `(F, F', F'')` for reduced source-type solves.
    pub solution: Option<BvpSolution>,
}

impl Profile {
    fn from_columns(
        params: SimilarityParams,
        y: Vec<f64>,
        cols: [Vec<f64>; 4],
        y0: f64,
        kind: ProfileKind,
        parity: Parity,
        solution: Option<BvpSolution>,
    ) -> Self {
        let [f, f1, f2, f3] = cols;
        let norm_inf = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self { params, y, f, f1, f2, f3, y0, kind, norm_inf, parity, solution }
    }

    pub(crate) fn from_vss_solution(
        params: SimilarityParams,
        sol: BvpSolution,
        y0: f64,
        kind: ProfileKind,
        parity: Parity,
    ) -> Self {
        let y = sol.nodes().to_vec();
        let f = sol.component(0);
        let f1 = sol.component(1);
        let f2 = sol.component(2);
        let g = sol.component(3);
        let f3 = f.iter().zip(&g).map(|(&f, &g)| g / q_eps(f, params.n, params.eps)).collect();
        Self::from_columns(params, y, [f, f1, f2, f3], y0, kind, parity, Some(sol))
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Profile value at `y` (by the collocation interpolant when available,
    /// otherwise piecewise linear; zero beyond the mesh).
    pub fn value_at(&self, y: f64) -> f64 {
        let ya = y.abs();
        let sign = if y < 0.0 && self.parity == Parity::Odd { -1.0 } else { 1.0 };
        let last = *self.y.last().unwrap();
        if ya > last {
            return 0.0;
        }
        if let Some(sol) = &self.solution {
            let mut out = vec![0.0; sol.dim()];
            sol.eval(ya, &mut out);
            return sign * out[0];
        }
        let i = match self.y.binary_search_by(|v| v.partial_cmp(&ya).unwrap()) {
            Ok(i) => return sign * self.f[i],
            Err(i) => i.max(1) - 1,
        };
        let t = (ya - self.y[i]) / (self.y[i + 1] - self.y[i]);
        sign * (self.f[i] * (1.0 - t) + self.f[i + 1] * t)
    }

    /// Number of sign changes over the half-line, ignoring values within
    /// `10 eps` of zero.
    pub fn sign_changes(&self) -> usize {
        count_sign_changes(&self.f, 10.0 * self.params.eps)
    }

    /// Sign changes on the whole line (even/odd extension).
    pub fn sign_changes_full_line(&self) -> usize {
        let half = self.sign_changes();
        match self.parity {
            Parity::Even => 2 * half,
            Parity::Odd => 2 * half + 1,
        }
    }

    pub fn min_value(&self) -> f64 {
        self.f.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Max relative residual of the unregularized VSS equation at interval
    /// midpoints with `|f| > 10 eps`. Both the flux relation `g = |f|^n f'''`
    /// and the balance `g' = beta y f' + alpha f - |f|^(p-1) f` are checked.
    pub fn ode_residual(&self) -> Option<f64> {
        let sol = self.solution.as_ref()?;
        if sol.dim() != 4 {
            return None;
        }
        let ex = derive_exponents(&self.params).ok()?;
        let (n, p, eps) = (self.params.n, self.params.p, self.params.eps);
        let mut worst = 0.0f64;
        let mut s = [0.0; 4];
        let mut ds = [0.0; 4];
        for w in sol.nodes().windows(2) {
            let y = 0.5 * (w[0] + w[1]);
            sol.eval(y, &mut s);
            if s[0].abs() <= 10.0 * eps {
                continue;
            }
            sol.eval_derivative(y, &mut ds);
            let f3 = ds[2];
            let flux = s[0].abs().powf(n) * f3;
            let r1 = (s[3] - flux).abs() / (1.0 + s[3].abs());
            let rhs = ex.beta * y * s[1] + ex.alpha * s[0] - s[0].abs().powf(p - 1.0) * s[0];
            let r2 = (ds[3] - rhs).abs() / (1.0 + rhs.abs());
            worst = worst.max(r1).max(r2);
        }
        Some(worst)
    }

    /// Writes `y,f,f1,f2,f3`, one node per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "y,f,f1,f2,f3")?;
        for i in 0..self.len() {
            writeln!(w, "{},{},{},{},{}", self.y[i], self.f[i], self.f1[i], self.f2[i], self.f3[i])?;
        }
        Ok(())
    }
}

pub fn count_sign_changes(values: &[f64], floor: f64) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for &v in values {
        if v.abs() <= floor {
            continue;
        }
        if last != 0.0 && v.signum() != last.signum() {
            count += 1;
        }
        last = v;
    }
    count
}

/// `Q_eps(f) = (eps^2 + f^2)^(n/2)`.
#[inline]
pub fn q_eps(f: f64, n: f64, eps: f64) -> f64 {
    if n == 0.0 {
        1.0
    } else {
        (eps * eps + f * f).powf(0.5 * n)
    }
}

/// Right-hand side and Jacobian of the regularized VSS system in the state
/// `(f, f', f'', g)` with `g = Q_eps(f) f'''`.
#[derive(Debug, Clone, Copy)]
pub struct VssSystem {
    pub n: f64,
    pub p: f64,
    pub eps: f64,
    pub beta: f64,
    pub alpha: f64,
    /// Coefficient of the absorption term (1 for the VSS equation, 0 for
    /// the pure thin-film operator).
    pub absorption: f64,
}

impl VssSystem {
    pub fn rhs(&self, y: f64, s: &[f64], ds: &mut [f64]) {
        let q = q_eps(s[0], self.n, self.eps);
        ds[0] = s[1];
        ds[1] = s[2];
        ds[2] = s[3] / q;
        ds[3] = self.beta * y * s[1] + self.alpha * s[0]
            - self.absorption * s[0].abs().powf(self.p - 1.0) * s[0];
    }

    pub fn jacobian(&self, y: f64, s: &[f64], j: &mut [f64]) {
        j.fill(0.0);
        let (n, eps) = (self.n, self.eps);
        let r2 = eps * eps + s[0] * s[0];
        let q = q_eps(s[0], n, eps);
        j[1] = 1.0;
        j[4 + 2] = 1.0;
        // d(g/Q)/df = -g n f r2^(-n/2-1)
        j[8] = if n == 0.0 { 0.0 } else { -s[3] * n * s[0] * r2.powf(-0.5 * n - 1.0) };
        j[8 + 3] = 1.0 / q;
        j[12] = self.alpha - self.absorption * self.p * s[0].abs().powf(self.p - 1.0);
        j[12 + 1] = self.beta * y;
    }
}

/// Builds the VSS system for the given parameters.
pub fn vss_ode_system(params: &SimilarityParams, exps: &DerivedExponents) -> VssSystem {
    VssSystem {
        n: params.n,
        p: params.p,
        eps: params.eps,
        beta: exps.beta,
        alpha: exps.alpha,
        absorption: 1.0,
    }
}

fn check_solvable(params: &SimilarityParams) -> Result<DerivedExponents> {
    params.validate()?;
    if params.is_fast_diffusion() {
        return Err(Error::InvalidParameter(format!(
            "n = {} < 0: only exponent algebra is supported",
            params.n
        )));
    }
    let ex = derive_exponents(params)?;
    if (params.p - (params.n + 1.0)).abs() < 1e-12 {
        return Err(Error::DegenerateExponent);
    }
    if !ex.subcritical {
        return Err(Error::InvalidParameter(format!(
            "p = {} outside the subcritical range ({}, {})",
            params.p,
            params.n + 1.0,
            ex.p0
        )));
    }
    Ok(ex)
}

/// Leading two terms of the profile near the interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceExpansion {
    pub c0: f64,
    pub y0: f64,
    pub beta: f64,
}

impl InterfaceExpansion {
    pub fn second_coefficient(&self, n: f64) -> Result<f64> {
        let den = (3.0 - 2.0 * n) * (4.0 - 2.0 * n) * (5.0 - 2.0 * n);
        if den.abs() < 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "interface expansion undefined for n = {n}"
            )));
        }
        Ok(self.c0.powf(1.0 - n) * self.beta * self.y0 / den)
    }

    pub fn second_exponent(n: f64) -> f64 {
        5.0 - 2.0 * n
    }
}

/// `C0 (y0-y)^2 + C1 (y0-y)^(5-2n)`.
pub fn interface_expansion_eval(exp: &InterfaceExpansion, n: f64, y: f64) -> Result<f64> {
    let c1 = exp.second_coefficient(n)?;
    let d = (exp.y0 - y).max(0.0);
    if d == 0.0 {
        return Ok(0.0);
    }
    Ok(exp.c0 * d * d + c1 * d.powf(InterfaceExpansion::second_exponent(n)))
}

/// Initial shape used for interface shooting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FbpSeed {
    /// Bump first, plateau if the bump collapses.
    Auto,
    /// `A (1 - (y/y0)^2)^2` blended into the interface expansion.
    Bump { amplitude: f64 },
    /// Flat top of relative width `1 - width`, quadratic descent to `y0`.
    Plateau { amplitude: f64, width: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct FbpOptions {
    pub tol: f64,
    pub max_nodes: usize,
    pub seed: FbpSeed,
    /// Relative bracket width at which bisection hands over to secant.
    pub bracket_tol: f64,
    pub max_root_iterations: usize,
}

impl Default for FbpOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_FBP_TOL,
            max_nodes: 200_000,
            seed: FbpSeed::Auto,
            bracket_tol: 1e-3,
            max_root_iterations: 60,
        }
    }
}

/// Amplitude at which absorption balances the decay term at the origin.
fn balance_amplitude(ex: &DerivedExponents, p: f64) -> f64 {
    ex.alpha.powf(1.0 / (p - 1.0))
}

fn nodal_guess_from_shape(y: &[f64], f: &[f64], n: f64, eps: f64) -> Vec<f64> {
    let m = y.len();
    let d1 = gradient(y, f);
    let d2 = gradient(y, &d1);
    let d3 = gradient(y, &d2);
    let mut states = Vec::with_capacity(4 * m);
    for i in 0..m {
        states.extend_from_slice(&[f[i], d1[i], d2[i], q_eps(f[i], n, eps) * d3[i]]);
    }
    states
}

fn gradient(x: &[f64], v: &[f64]) -> Vec<f64> {
    let m = x.len();
    (0..m)
        .map(|i| {
            if i == 0 {
                (v[1] - v[0]) / (x[1] - x[0])
            } else if i == m - 1 {
                (v[m - 1] - v[m - 2]) / (x[m - 1] - x[m - 2])
            } else {
                (v[i + 1] - v[i - 1]) / (x[i + 1] - x[i - 1])
            }
        })
        .collect()
}

fn fbp_seed_shape(seed: FbpSeed, ex: &DerivedExponents, n: f64, y0: f64, y: &[f64]) -> Vec<f64> {
    match seed {
        FbpSeed::Bump { amplitude } | FbpSeed::Plateau { amplitude, .. } if amplitude <= 0.0 => {
            vec![0.0; y.len()]
        }
        FbpSeed::Plateau { amplitude, width } => y
            .iter()
            .map(|&v| {
                let t = v / y0;
                let z = ((1.0 - t) / width).clamp(0.0, 1.0);
                amplitude * (1.0 - (1.0 - z) * (1.0 - z)).powi(2)
            })
            .collect(),
        FbpSeed::Bump { .. } | FbpSeed::Auto => {
            let amplitude = match seed {
                FbpSeed::Bump { amplitude } => amplitude,
                _ => 1.0,
            };
            let exp = InterfaceExpansion { c0: 4.0 * amplitude / (y0 * y0), y0, beta: ex.beta };
            y.iter()
                .map(|&v| {
                    let s = v / y0;
                    let bump = amplitude * (1.0 - s * s).powi(2);
                    let w = ((s - 0.8) / 0.2).clamp(0.0, 1.0);
                    let tail = interface_expansion_eval(&exp, n, v).unwrap_or(bump);
                    let tail = if tail.is_finite() && tail >= 0.0 { tail.min(bump.max(tail)) } else { bump };
                    bump * (1.0 - w) + tail * w
                })
                .collect()
        }
    }
}

struct FbpSolver<'p> {
    params: &'p SimilarityParams,
    sys: VssSystem,
    opts: FbpOptions,
}

impl FbpSolver<'_> {
    /// BVP on `[0, y0]` with `f'(0) = g(0) = 0`, `f'(y0) = g(y0) = 0`.
    fn solve_at(&self, y0: f64, guess: BvpGuess<'_>) -> Result<BvpSolution> {
        let sys = self.sys;
        let problem = BvpProblem::new(
            4,
            0.0,
            y0,
            move |y, s, ds| sys.rhs(y, s, ds),
            |a, b| vec![a[1], a[3], b[1], b[3]],
        )
        .with_jacobian(move |y, s, j| sys.jacobian(y, s, j));
        let mut o = BvpOptions::new(self.opts.tol, self.opts.max_nodes);
        o.bc_tol = self.opts.tol * 1e-2;
        let sol = solve_bvp_with(&problem, guess, &o)?;
        if !sol.converged {
            return Err(Error::BvpDivergence { context: format!("y0 = {y0}") });
        }
        Ok(sol)
    }

    fn seeded(&self, y0: f64, seed: FbpSeed, ex: &DerivedExponents) -> Result<BvpSolution> {
        let m = 400;
        let y: Vec<f64> = (0..=m).map(|i| y0 * i as f64 / m as f64).collect();
        let f = fbp_seed_shape(seed, ex, self.params.n, y0, &y);
        let states = nodal_guess_from_shape(&y, &f, self.params.n, self.params.eps);
        self.solve_at(y0, BvpGuess::Nodal { nodes: y, states })
    }

    fn from_previous(&self, y0: f64, prev: &BvpSolution) -> Result<BvpSolution> {
        let g = prev.remapped(0.0, y0);
        self.solve_at(y0, BvpGuess::Solution(&g))
    }
}

fn is_trivial(sol: &BvpSolution, reference: f64) -> bool {
    let norm = sol.component(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    norm < 0.05 * reference
}

/// Solves at the bracket midpoint from `seed`, then marches to both ends so
/// that every solve starts from a nearby solution.
fn bracket_ends(
    solver: &FbpSolver<'_>,
    seed: FbpSeed,
    ex: &DerivedExponents,
    lo: f64,
    hi: f64,
    amp: f64,
) -> Result<(BvpSolution, BvpSolution)> {
    let mid = 0.5 * (lo + hi);
    let start = solver.seeded(mid, seed, ex)?;
    if is_trivial(&start, amp) {
        return Err(Error::BvpDivergence { context: format!("y0 = {mid} (collapsed to zero)") });
    }
    let march = |target: f64| -> Result<BvpSolution> {
        let mut cur = start.clone();
        let steps = (((target - mid).abs() / mid) / 0.02).ceil().max(1.0) as usize;
        for k in 1..=steps {
            let next = mid + (target - mid) * k as f64 / steps as f64;
            cur = solver
                .from_previous(next, &cur)
                .map_err(|_| Error::BvpDivergence { context: format!("y0 = {next}") })?;
        }
        Ok(cur)
    };
    Ok((march(lo)?, march(hi)?))
}

/// Interface shooting: finds `y0` in the bracket with `f(y0) = 0` where `f`
/// solves the symmetric problem with `f'(y0) = f'''(y0) = 0`.
pub fn solve_fbp_profile(params: &SimilarityParams, y0_bracket: (f64, f64)) -> Result<Profile> {
    solve_fbp_profile_with(params, y0_bracket, &FbpOptions::default())
}

pub fn solve_fbp_profile_with(
    params: &SimilarityParams,
    y0_bracket: (f64, f64),
    opts: &FbpOptions,
) -> Result<Profile> {
    let ex = check_solvable(params)?;
    let (lo, hi) = y0_bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParameter(format!("bad interface bracket [{lo}, {hi}]")));
    }
    let solver = FbpSolver { params, sys: vss_ode_system(params, &ex), opts: *opts };
    let amp = balance_amplitude(&ex, params.p);
    let seeds: Vec<FbpSeed> = match opts.seed {
        FbpSeed::Auto => vec![
            FbpSeed::Bump { amplitude: amp },
            FbpSeed::Plateau { amplitude: amp, width: 0.3 },
        ],
        s => vec![s],
    };

    let height = |s: &BvpSolution| *s.component(0).last().unwrap();
    let mut bracketed = None;
    let mut last_err = None;
    for seed in seeds {
        match bracket_ends(&solver, seed, &ex, lo, hi, amp) {
            Ok((sl, sh)) => {
                let (hl, hh) = (height(&sl), height(&sh));
                if hl.signum() != hh.signum() {
                    bracketed = Some((sl, sh, hl, hh));
                    break;
                }
                last_err = Some(Error::NoSignChange { lo, hi, h_lo: hl, h_hi: hh });
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some((sol_lo, sol_hi, h_lo, h_hi)) = bracketed else {
        return Err(last_err.unwrap());
    };

    let (mut a, mut b) = (lo, hi);
    let (mut ha, mut hb) = (h_lo, h_hi);
    let (mut sa, mut sb) = (sol_lo, sol_hi);
    let mut iterations = 0;
    while (b - a) > opts.bracket_tol * b && iterations < opts.max_root_iterations {
        let c = 0.5 * (a + b);
        let seed = if ha.abs() < hb.abs() { &sa } else { &sb };
        let sc = solver.from_previous(c, seed)?;
        let hc = height(&sc);
        if hc.signum() == ha.signum() {
            a = c;
            ha = hc;
            sa = sc;
        } else {
            b = c;
            hb = hc;
            sb = sc;
        }
        iterations += 1;
    }
    // Secant polish, kept inside the bracket.
    let h_tol = opts.tol * 1e-3 * amp;
    let mut best = if ha.abs() < hb.abs() { (a, ha, sa.clone()) } else { (b, hb, sb.clone()) };
    for _ in 0..12 {
        if best.1.abs() < h_tol {
            break;
        }
        let mut c = b - hb * (b - a) / (hb - ha);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let sc = solver.from_previous(c, &best.2)?;
        let hc = height(&sc);
        if hc.signum() == ha.signum() {
            a = c;
            ha = hc;
            sa = sc.clone();
        } else {
            b = c;
            hb = hc;
            sb = sc.clone();
        }
        if hc.abs() < best.1.abs() {
            best = (c, hc, sc);
        }
        if b - a < 1e-12 * b {
            break;
        }
    }
    let _ = (&sa, &sb);
    let (y0, _, sol) = best;
    let profile = Profile::from_vss_solution(*params, sol, y0, ProfileKind::Fbp, Parity::Even);
    let min = profile.min_value();
    if min < -10.0 * params.eps {
        return Err(Error::FbpSignChange { y0, min });
    }
    Ok(profile)
}

/// Interface height `h(y0) = f(y0)` of the fixed-`y0` shooting problem, for a
/// list of candidate interface positions (solved by continuation along the
/// list from a seeded start).
pub fn interface_height_scan(params: &SimilarityParams, y0s: &[f64], opts: &FbpOptions) -> Result<Vec<f64>> {
    let ex = check_solvable(params)?;
    let solver = FbpSolver { params, sys: vss_ode_system(params, &ex), opts: *opts };
    let amp = balance_amplitude(&ex, params.p);
    let seed = match opts.seed {
        FbpSeed::Auto => FbpSeed::Bump { amplitude: amp },
        s => s,
    };
    let mut out = Vec::with_capacity(y0s.len());
    let mut prev: Option<BvpSolution> = None;
    for &y0 in y0s {
        let sol = match &prev {
            None => solver.seeded(y0, seed, &ex)?,
            Some(p) => solver.from_previous(y0, p)?,
        };
        out.push(*sol.component(0).last().unwrap());
        prev = Some(sol);
    }
    Ok(out)
}

/// Seed for Cauchy-problem solves.
#[derive(Debug, Clone)]
pub enum CpSeed<'a> {
    Profile(&'a Profile),
    /// `A (1 - s^2)^2 T_l(s)` with `s = y / support` and `T_l` the Chebyshev
    /// polynomial of degree `index` (giving `index` zeros on the whole line).
    Template { amplitude: f64, support: f64, index: usize },
}

impl CpSeed<'_> {
    fn parity(&self) -> Parity {
        match self {
            CpSeed::Profile(p) => p.parity,
            CpSeed::Template { index, .. } => {
                if index % 2 == 0 {
                    Parity::Even
                } else {
                    Parity::Odd
                }
            }
        }
    }
}

pub fn chebyshev_template(amplitude: f64, support: f64, index: usize, y: f64) -> f64 {
    let s = y / support;
    if s.abs() >= 1.0 {
        return 0.0;
    }
    amplitude * (1.0 - s * s).powi(2) * (index as f64 * s.acos()).cos()
}

#[derive(Debug, Clone, Copy)]
pub struct CpOptions {
    pub tol: f64,
    pub max_nodes: usize,
    /// Relative change of the norm allowed when re-solving on `1.5 L`.
    pub length_tol: f64,
    pub check_length: bool,
}

impl Default for CpOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_CP_TOL, max_nodes: 200_000, length_tol: 1e-2, check_length: true }
    }
}

fn cp_problem<'a>(sys: VssSystem, l: f64, parity: Parity) -> BvpProblem<'a> {
    let bc = move |a: &[f64], b: &[f64]| match parity {
        Parity::Even => vec![a[1], a[3], b[0], b[1]],
        Parity::Odd => vec![a[0], a[2], b[0], b[1]],
    };
    BvpProblem::new(4, 0.0, l, move |y, s, ds| sys.rhs(y, s, ds), bc)
        .with_jacobian(move |y, s, j| sys.jacobian(y, s, j))
}

/// Collocation state `(f, f', f'', Q f''')` rebuilt from a profile's columns.
pub fn profile_state_solution(p: &Profile) -> BvpSolution {
    let m = p.y.len();
    let mut states = Vec::with_capacity(4 * m);
    for i in 0..m {
        states.extend_from_slice(&[p.f[i], p.f1[i], p.f2[i], q_eps(p.f[i], p.params.n, p.params.eps) * p.f3[i]]);
    }
    let g: Vec<f64> = (0..m).map(|i| states[4 * i + 3]).collect();
    let g1 = gradient(&p.y, &g);
    let mut derivs = Vec::with_capacity(4 * m);
    for i in 0..m {
        derivs.extend_from_slice(&[p.f1[i], p.f2[i], p.f3[i], g1[i]]);
    }
    BvpSolution::from_nodal(p.y.clone(), 4, states, derivs)
}

/// Guess on `[0, l]` built from a previous solution: interpolated inside its
/// domain and zero beyond.
pub fn extend_solution(sol: &BvpSolution, l: f64, min_nodes: usize) -> BvpGuess<'static> {
    let (_, b) = sol.domain();
    let d = sol.dim();
    let mut nodes: Vec<f64> = sol.nodes().iter().cloned().filter(|&x| x < l).collect();
    if b < l {
        let extra = (min_nodes / 4).max(16);
        let h = (l - b) / extra as f64;
        for k in 1..=extra {
            nodes.push(b + h * k as f64);
        }
    } else {
        nodes.push(l);
    }
    let mut states = Vec::with_capacity(nodes.len() * d);
    let mut buf = vec![0.0; d];
    for &x in &nodes {
        if x <= b {
            sol.eval(x, &mut buf);
            states.extend_from_slice(&buf);
        } else {
            states.extend(std::iter::repeat(0.0).take(d));
        }
    }
    BvpGuess::Nodal { nodes, states }
}

fn solve_cp_once(
    params: &SimilarityParams,
    sys: VssSystem,
    l: f64,
    parity: Parity,
    guess: BvpGuess<'_>,
    opts: &CpOptions,
) -> Result<BvpSolution> {
    let problem = cp_problem(sys, l, parity);
    let mut o = BvpOptions::new(opts.tol, opts.max_nodes);
    o.bc_tol = opts.tol * 1e-2;
    let sol = solve_bvp_with(&problem, guess, &o)?;
    if !sol.converged {
        return Err(Error::BvpDivergence {
            context: format!(
                "CP solve n = {}, p = {}, L = {l} ({:?}, residual {:.2e}, {} nodes)",
                params.n,
                params.p,
                sol.status,
                sol.residual_norm,
                sol.len()
            ),
        });
    }
    Ok(sol)
}

/// Regularized Cauchy-problem profile on `[0, L]` with `f(L) = f'(L) = 0`.
pub fn solve_cp_profile(params: &SimilarityParams, l: f64, seed: CpSeed<'_>) -> Result<Profile> {
    solve_cp_profile_with(params, l, seed, &CpOptions::default())
}

pub fn solve_cp_profile_with(
    params: &SimilarityParams,
    l: f64,
    seed: CpSeed<'_>,
    opts: &CpOptions,
) -> Result<Profile> {
    let ex = check_solvable(params)?;
    if !(l > 0.0) {
        return Err(Error::InvalidDomain { a: 0.0, b: l });
    }
    let sys = vss_ode_system(params, &ex);
    let parity = seed.parity();
    let guess = match &seed {
        CpSeed::Profile(p) => match &p.solution {
            Some(s) if s.dim() == 4 => extend_solution(s, l, 200),
            _ => extend_solution(&profile_state_solution(p), l, 200),
        },
        CpSeed::Template { amplitude, support, index } => {
            let m = 800;
            let y: Vec<f64> = (0..=m).map(|i| l * i as f64 / m as f64).collect();
            let f: Vec<f64> = y.iter().map(|&v| chebyshev_template(*amplitude, *support, *index, v)).collect();
            let states = nodal_guess_from_shape(&y, &f, params.n, params.eps);
            BvpGuess::Nodal { nodes: y, states }
        }
    };
    let sol = solve_cp_once(params, sys, l, parity, guess, opts)?;
    let profile = Profile::from_vss_solution(*params, sol, l, ProfileKind::Cp, parity);
    if opts.check_length {
        let longer = solve_cp_once(
            params,
            sys,
            1.5 * l,
            parity,
            extend_solution(profile.solution.as_ref().unwrap(), 1.5 * l, 200),
            opts,
        )?;
        let norm15 = longer.component(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if (norm15 - profile.norm_inf).abs() > opts.length_tol * profile.norm_inf.max(params.eps) {
            return Err(Error::LengthSensitivity { l, norm_l: profile.norm_inf, norm_l15: norm15 });
        }
    }
    Ok(profile)
}

/// Exact source-type profile `c0 (a^2 - y^2)^2` on `[0, a]`,
/// `c0 = 1 / (8 (N+2) (N+4))`.
pub fn explicit_pure_tfe_profile(dim: u32, a: f64) -> Result<Profile> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("support half-width must be positive, got {a}")));
    }
    let nn = dim as f64;
    let c0 = 1.0 / (8.0 * (nn + 2.0) * (nn + 4.0));
    let m = 400;
    let y: Vec<f64> = (0..=m).map(|i| a * i as f64 / m as f64).collect();
    let f = y.iter().map(|&v| c0 * (a * a - v * v).powi(2)).collect();
    let f1 = y.iter().map(|&v| -4.0 * c0 * v * (a * a - v * v)).collect();
    let f2 = y.iter().map(|&v| c0 * (12.0 * v * v - 4.0 * a * a)).collect();
    let f3 = y.iter().map(|&v| 24.0 * c0 * v).collect();
    let params = SimilarityParams {
        n: 1.0,
        p: 1.0 + 1.0 + 4.0 / nn,
        dim,
        problem: ProblemKind::Fbp,
        eps: f64::MIN_POSITIVE,
    };
    Ok(Profile::from_columns(params, y, [f, f1, f2, f3], a, ProfileKind::Explicit, Parity::Even, None))
}

#[derive(Debug, Clone, Copy)]
pub struct PureTfeOptions {
    pub tol: f64,
    pub eps: f64,
    pub max_nodes: usize,
    /// Truncation length for the Cauchy variant (support is rescaled to 1
    /// afterwards).
    pub cp_length: f64,
}

impl Default for PureTfeOptions {
    fn default() -> Self {
        Self { tol: 1e-8, eps: 1e-10, max_nodes: 100_000, cp_length: 1.5 }
    }
}

/// Source-type (or supplied-`alpha`) profile of the pure thin-film operator,
/// normalized to unit support.
pub fn pure_tfe_profile(n: f64, dim: u32, problem: ProblemKind, alpha: Option<f64>) -> Result<Profile> {
    pure_tfe_profile_with(n, dim, problem, alpha, &PureTfeOptions::default())
}

pub fn pure_tfe_profile_with(
    n: f64,
    dim: u32,
    problem: ProblemKind,
    alpha: Option<f64>,
    opts: &PureTfeOptions,
) -> Result<Profile> {
    if dim < 1 {
        return Err(Error::InvalidParameter("dimension N must be at least 1".into()));
    }
    let nn = dim as f64;
    if !(n > 0.0 && n < 3.0) {
        return Err(Error::InvalidParameter(format!("pure thin-film profiles need 0 < n < 3, got {n}")));
    }
    let source_alpha = nn / (4.0 + n * nn);
    let alpha = alpha.unwrap_or(source_alpha);
    if !(alpha > 0.0 && alpha < 1.0 / n) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} outside (0, 1/n)")));
    }
    let beta = (1.0 - n * alpha) / 4.0;
    let eps = opts.eps;
    let params = SimilarityParams { n, p: 1.0 + 1.0 / alpha, dim, problem, eps };
    let kind = match problem {
        ProblemKind::Fbp => ProfileKind::PureTfeFbp,
        ProblemKind::Cp => ProfileKind::PureTfeCp,
    };
    let reduced = (alpha - beta).abs() < 1e-14 || (alpha - source_alpha).abs() < 1e-14;
    let length = match problem {
        ProblemKind::Fbp => 1.0,
        ProblemKind::Cp => opts.cp_length,
    };
    let m = 200;
    let y: Vec<f64> = (0..=m).map(|i| length * i as f64 / m as f64).collect();
    let shape: Vec<f64> = y
        .iter()
        .map(|&v| {
            let base = (1.0 - v * v).max(0.0).powi(2) / 120.0;
            match problem {
                ProblemKind::Fbp => base,
                // Small negative lobe past the main support.
                ProblemKind::Cp => base - 1e-4 * (-(v - 1.15).powi(2) / 0.01).exp(),
            }
        })
        .collect();
    let mut o = BvpOptions::new(opts.tol, opts.max_nodes);
    o.bc_tol = opts.tol;

    let (sol, beta_used) = if reduced {
        // Integrated once: Q F''' = beta y F (zero flux).
        let rhs = move |x: f64, s: &[f64], ds: &mut [f64]| {
            ds[0] = s[1];
            ds[1] = s[2];
            ds[2] = beta * x * s[0] / q_eps(s[0], n, eps);
        };
        let problem3 = BvpProblem::new(3, 0.0, length, rhs, |a, b| vec![a[1], b[0], b[1]]);
        let d1 = gradient(&y, &shape);
        let d2 = gradient(&y, &d1);
        let states = (0..y.len()).flat_map(|i| [shape[i], d1[i], d2[i]]).collect();
        let sol = solve_bvp_with(&problem3, BvpGuess::Nodal { nodes: y.clone(), states }, &o)?;
        (sol, beta)
    } else {
        let sys = VssSystem { n, p: 2.0, eps, beta, alpha, absorption: 0.0 };
        let problem4 = BvpProblem::new(
            4,
            0.0,
            length,
            move |x, s, ds| sys.rhs(x, s, ds),
            |a, b| vec![a[1], a[3], b[0], b[1]],
        )
        .with_jacobian(move |x, s, j| sys.jacobian(x, s, j));
        let states = nodal_guess_from_shape(&y, &shape, n, eps);
        let sol = solve_bvp_with(&problem4, BvpGuess::Nodal { nodes: y.clone(), states }, &o)?;
        (sol, beta)
    };
    if !sol.converged {
        return Err(Error::BvpDivergence { context: format!("pure thin-film profile n = {n}") });
    }
    let states_dim = sol.dim();
    let nodes = sol.nodes().to_vec();
    let f = sol.component(0);
    let f1 = sol.component(1);
    let f2 = sol.component(2);
    let f3: Vec<f64> = if states_dim == 3 {
        nodes.iter().zip(&f).map(|(&x, &v)| beta_used * x * v / q_eps(v, n, eps)).collect()
    } else {
        f.iter().zip(sol.component(3)).map(|(&v, g)| g / q_eps(v, n, eps)).collect()
    };
    let mut profile = Profile::from_columns(params, nodes, [f, f1, f2, f3], 1.0, kind, Parity::Even, Some(sol));
    if problem == ProblemKind::Cp {
        // Unit support via the invariant scaling F -> a^(-4/n) F(a y), with
        // `a` the first zero.
        if let Some(a) = first_zero(&profile.y, &profile.f) {
            profile = rescale_support(&profile, a, n);
            profile.y0 = 1.0;
        }
    }
    Ok(profile)
}

fn first_zero(y: &[f64], f: &[f64]) -> Option<f64> {
    for i in 0..f.len() - 1 {
        if f[i] > 0.0 && f[i + 1] <= 0.0 {
            let t = f[i] / (f[i] - f[i + 1]);
            return Some(y[i] + t * (y[i + 1] - y[i]));
        }
    }
    None
}

/// `F_a(y) = a^(-4/n) F(a y)`: the profile with support scaled by `1/a`.
pub fn rescale_support(profile: &Profile, a: f64, n: f64) -> Profile {
    let amp = a.powf(-4.0 / n);
    let y = profile.y.iter().map(|v| v / a).collect();
    let f = profile.f.iter().map(|v| v * amp).collect();
    let f1 = profile.f1.iter().map(|v| v * amp * a).collect();
    let f2 = profile.f2.iter().map(|v| v * amp * a * a).collect();
    let f3 = profile.f3.iter().map(|v| v * amp * a * a * a).collect();
    Profile::from_columns(
        profile.params,
        y,
        [f, f1, f2, f3],
        profile.y0 / a,
        profile.kind,
        profile.parity,
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_state_is_a_solution() {
        let p = SimilarityParams::new(1.0, 3.0, 1, ProblemKind::Fbp, 1e-3).unwrap();
        let sys = vss_ode_system(&p, &derive_exponents(&p).unwrap());
        let mut ds = [1.0; 4];
        sys.rhs(0.7, &[0.0; 4], &mut ds);
        assert_eq!(ds, [0.0; 4]);
    }

    #[test]
    fn beta_term_vanishes_at_p_equal_n_plus_one() {
        let p = SimilarityParams::new(1.0, 2.0, 1, ProblemKind::Fbp, 1e-3).unwrap();
        let sys = vss_ode_system(&p, &derive_exponents(&p).unwrap());
        assert_eq!(sys.beta, 0.0);
        assert!(matches!(solve_fbp_profile(&p, (1.0, 2.0)), Err(Error::DegenerateExponent)));
    }

    #[test]
    fn semilinear_flux_is_plain_third_derivative() {
        let p = SimilarityParams::new(0.0, 2.0, 1, ProblemKind::Cp, 0.3).unwrap();
        let sys = vss_ode_system(&p, &derive_exponents(&p).unwrap());
        let mut ds = [0.0; 4];
        sys.rhs(1.0, &[0.5, 0.1, 0.2, 0.3], &mut ds);
        assert_eq!(ds[2], 0.3);
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let p = SimilarityParams::new(0.7, 2.5, 1, ProblemKind::Cp, 1e-2).unwrap();
        let sys = vss_ode_system(&p, &derive_exponents(&p).unwrap());
        let s = [0.3, -0.2, 0.5, 0.1];
        let mut j = [0.0; 16];
        sys.jacobian(1.3, &s, &mut j);
        let mut f0 = [0.0; 4];
        sys.rhs(1.3, &s, &mut f0);
        for c in 0..4 {
            let mut sp = s;
            sp[c] += 1e-7;
            let mut f1 = [0.0; 4];
            sys.rhs(1.3, &sp, &mut f1);
            for r in 0..4 {
                let fd = (f1[r] - f0[r]) / 1e-7;
                assert!((fd - j[r * 4 + c]).abs() < 1e-5 * (1.0 + fd.abs()), "{r},{c}");
            }
        }
    }

    #[test]
    fn expansion_values() {
        let e = InterfaceExpansion { c0: 1.0, y0: 4.455, beta: 0.125 };
        assert_eq!(interface_expansion_eval(&e, 1.0, 4.455).unwrap(), 0.0);
        let c1 = e.second_coefficient(1.0).unwrap();
        assert!((c1 - 0.125 * 4.455 / 6.0).abs() < 1e-15);
        assert!((c1 - 0.0928).abs() < 1e-4);
        assert_eq!(InterfaceExpansion::second_exponent(0.0), 5.0);
        for bad in [1.5, 2.0, 2.5] {
            assert!(interface_expansion_eval(&e, bad, 1.0).is_err());
        }
        // Leading term dominates close to the interface.
        let d = 1e-4;
        let v = interface_expansion_eval(&e, 1.0, e.y0 - d).unwrap();
        assert!((v / (d * d) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn explicit_profile_constants() {
        let pr = explicit_pure_tfe_profile(1, 1.0).unwrap();
        assert!((pr.f[0] - 1.0 / 120.0).abs() < 1e-16);
        let last = pr.len() - 1;
        assert_eq!(pr.f[last], 0.0);
        assert_eq!(pr.f1[last], 0.0);
        // Reduced ODE F F''' = beta y F with beta = 1/5.
        for i in 0..pr.len() {
            let r = pr.f[i] * pr.f3[i] - 0.2 * pr.y[i] * pr.f[i];
            assert!(r.abs() < 1e-10);
        }
        assert!(explicit_pure_tfe_profile(1, 0.0).is_err());
    }

    #[test]
    fn sign_change_counting_skips_small_values() {
        assert_eq!(count_sign_changes(&[1.0, 0.5, 1e-6, -1e-6, 0.3, -0.2, -0.1, 0.4], 1e-3), 2);
    }

    #[test]
    fn chebyshev_template_zero_count() {
        for l in 0..5 {
            let ys: Vec<f64> = (0..2001).map(|i| -1.0 + i as f64 / 1000.0).collect();
            let f: Vec<f64> = ys.iter().map(|&y| chebyshev_template(1.0, 1.0, l, y)).collect();
            assert_eq!(count_sign_changes(&f, 1e-12), l);
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let pr = explicit_pure_tfe_profile(1, 1.0).unwrap();
        let mut buf = Vec::new();
        pr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("y,f,f1,f2,f3"));
        assert_eq!(lines.count(), pr.len());
        assert!(!text.contains("e-") && !text.contains("e+"));
    }

    #[test]
    fn rejects_out_of_range() {
        let p = SimilarityParams::new(1.0, 7.0, 1, ProblemKind::Fbp, 1e-3).unwrap();
        assert!(matches!(solve_fbp_profile(&p, (1.0, 2.0)), Err(Error::InvalidParameter(_))));
        let p = SimilarityParams::new(-0.5, 2.0, 1, ProblemKind::Fbp, 1e-3).unwrap();
        assert!(matches!(solve_fbp_profile(&p, (1.0, 2.0)), Err(Error::InvalidParameter(_))));
    }
}
