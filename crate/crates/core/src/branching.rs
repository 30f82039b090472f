//! Continuation of VSS profile families in `p`: pseudo-arclength tracing,
//! turning-point and closure detection, near-critical amplitude law,
//! pitchfork seeds for the semilinear case and the semilinear spectrum.

use std::io::Write;

use crate::bvp::{solve_bvp_with, BvpGuess, BvpOptions, BvpProblem, BvpSolution};
use crate::error::{Error, Result};
use crate::model::{
    critical_exponent, critical_exponents_from_alpha, semilinear_alphas, ProblemKind,
    SimilarityParams,
};
use crate::par;
use crate::profiles::{
    profile_state_solution, q_eps, solve_cp_profile_with, CpOptions, CpSeed, Parity, Profile,
    ProfileKind,
};

/// Norm below which a branch is taken to have reached the trivial solution.
pub const NORM_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub p: f64,
    pub norm_inf: f64,
    /// `f(0)` for even profiles, `f'(0)` for odd ones.
    pub amplitude: f64,
    pub y0_or_l: f64,
    pub s: f64,
    /// Profile at this point (without the collocation solution).
    pub profile: Profile,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchEnd {
    Target,
    /// Norm fell below the floor; `origin` is the matched bifurcation point.
    Floor { p: f64, origin: Option<f64> },
    Closed,
    /// Left the admissible range `n+1 < p < p0`.
    Range,
    Blowup,
    Stalled,
    MaxSteps,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    /// Bifurcation point the branch was started from, if any.
    pub origin: Option<f64>,
    pub turning_points: Vec<f64>,
    pub closed: bool,
    pub end: BranchEnd,
}

impl Branch {
    pub fn ps(&self) -> Vec<f64> {
        self.points.iter().map(|q| q.p).collect()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.points.iter().map(|q| q.norm_inf).collect()
    }

    /// The path closed through the symmetry `f -> -f`: the computed arc
    /// followed by its mirror image, in signed `(p, amplitude)` coordinates.
    /// Only meaningful for closed branches ending on the trivial solution.
    pub fn signed_loop(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = self.points.iter().map(|q| (q.p, q.amplitude)).collect();
        out.extend(self.points.iter().map(|q| (q.p, -q.amplitude)).rev());
        out
    }

    /// Profiles where the branch crosses `p`, one per crossing, refined by
    /// a fixed-`p` solve from the nearest point.
    pub fn profiles_at(&self, p: f64, opts: &CpOptions) -> Vec<Result<Profile>> {
        let mut seeds = Vec::new();
        for w in self.points.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if (a.p - p) * (b.p - p) <= 0.0 && a.p != b.p {
                let near = if (a.p - p).abs() <= (b.p - p).abs() { a } else { b };
                seeds.push(near.profile.clone());
            }
        }
        par::map_jobs(&seeds, |prof| {
            let params = prof.params.with_p(p);
            let mut o = *opts;
            o.check_length = false;
            solve_cp_profile_with(&params, prof.y0, CpSeed::Profile(prof), &o)
        })
    }

    /// Writes `s,p,norm_inf,y0` and a `#turning,p=` footer.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "s,p,norm_inf,y0")?;
        for q in &self.points {
            writeln!(w, "{},{},{},{}", q.s, q.p, q.norm_inf, q.y0_or_l)?;
        }
        for t in &self.turning_points {
            writeln!(w, "#turning,p={t}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationOptions {
    pub ds: f64,
    pub tol: f64,
    pub max_steps: usize,
    pub max_nodes: usize,
    pub norm_floor: f64,
    pub norm_max: f64,
    /// Known bifurcation points used to label a branch end at the floor.
    pub bifurcations: Vec<f64>,
    /// Corrector drift allowed relative to `ds`.
    pub max_drift: f64,
    /// Smallest cosine allowed between consecutive secants.
    pub min_cos: f64,
}

impl ContinuationOptions {
    pub fn new(ds: f64, tol: f64) -> Self {
        Self {
            ds,
            tol,
            max_steps: 2000,
            max_nodes: 200_000,
            norm_floor: NORM_FLOOR,
            norm_max: 1e3,
            bifurcations: Vec::new(),
            max_drift: 0.5,
            min_cos: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct AugSystem {
    n: f64,
    eps: f64,
}

impl AugSystem {
    fn rhs(&self, y: f64, s: &[f64], ds: &mut [f64]) {
        let p = s[4];
        let alpha = 1.0 / (p - 1.0);
        let beta = (p - self.n - 1.0) / (4.0 * (p - 1.0));
        let q = q_eps(s[0], self.n, self.eps);
        ds[0] = s[1];
        ds[1] = s[2];
        ds[2] = s[3] / q;
        ds[3] = beta * y * s[1] + alpha * s[0] - s[0].abs().powf(p - 1.0) * s[0];
        ds[4] = 0.0;
    }

    fn jacobian(&self, y: f64, s: &[f64], j: &mut [f64]) {
        j.fill(0.0);
        let (n, eps, p) = (self.n, self.eps, s[4]);
        let alpha = 1.0 / (p - 1.0);
        let beta = (p - n - 1.0) / (4.0 * (p - 1.0));
        let r2 = eps * eps + s[0] * s[0];
        let q = q_eps(s[0], n, eps);
        let af = s[0].abs();
        j[1] = 1.0;
        j[5 + 2] = 1.0;
        j[10] = if n == 0.0 { 0.0 } else { -s[3] * n * s[0] * r2.powf(-0.5 * n - 1.0) };
        j[10 + 3] = 1.0 / q;
        j[15] = alpha - p * af.powf(p - 1.0);
        j[15 + 1] = beta * y;
        let dbeta = n / (4.0 * (p - 1.0) * (p - 1.0));
        let dalpha = -1.0 / ((p - 1.0) * (p - 1.0));
        let dabs = if af > 0.0 { af.powf(p - 1.0) * s[0] * af.ln() } else { 0.0 };
        j[15 + 4] = dbeta * y * s[1] + dalpha * s[0] - dabs;
    }
}

fn signed_amplitude(sol: &BvpSolution, parity: Parity) -> f64 {
    match parity {
        Parity::Even => sol.state(0)[0],
        Parity::Odd => sol.state(0)[1],
    }
}

fn norm_of(sol: &BvpSolution) -> f64 {
    (0..sol.len()).fold(0.0f64, |m, i| m.max(sol.state(i)[0].abs()))
}

struct Corrector {
    sys: AugSystem,
    l: f64,
    parity: Parity,
    opts: BvpOptions,
}

impl Corrector {
    /// Solves the augmented system with the plane
    /// `(P - p_k) t_p + (A - a_k) t_a = ds`.
    fn solve(&self, guess: BvpGuess<'_>, base: (f64, f64), tangent: (f64, f64), ds: f64) -> Option<BvpSolution> {
        let parity = self.parity;
        let bc = move |a: &[f64], b: &[f64]| {
            let amp = match parity {
                Parity::Even => a[0],
                Parity::Odd => a[1],
            };
            let arc = (a[4] - base.0) * tangent.0 + (amp - base.1) * tangent.1 - ds;
            match parity {
                Parity::Even => vec![a[1], a[3], arc, b[0], b[1]],
                Parity::Odd => vec![a[0], a[2], arc, b[0], b[1]],
            }
        };
        let sys = self.sys;
        let mut opts = self.opts;
        // A corrector that needs many more nodes than its guess is taken as
        // failed; the step is halved instead.
        if let BvpGuess::Nodal { nodes, .. } = &guess {
            opts.max_nodes = opts.max_nodes.min(3 * nodes.len() + 2000);
        }
        if let BvpGuess::Solution(s) = &guess {
            opts.max_nodes = opts.max_nodes.min(3 * s.len() + 2000);
        }
        let problem = BvpProblem::new(5, 0.0, self.l, move |y, s, d| sys.rhs(y, s, d), bc)
            .with_jacobian(move |y, s, j| sys.jacobian(y, s, j));
        let sol = solve_bvp_with(&problem, guess, &opts).ok()?;
        if sol.converged && sol.state(0)[4].is_finite() {
            Some(sol)
        } else {
            None
        }
    }
}

fn augment(sol: &BvpSolution, p: f64) -> BvpSolution {
    let m = sol.len();
    let mut states = Vec::with_capacity(5 * m);
    let mut derivs = Vec::with_capacity(5 * m);
    for i in 0..m {
        states.extend_from_slice(sol.state(i));
        states.push(p);
        derivs.extend_from_slice(sol.derivative_at_node(i));
        derivs.push(0.0);
    }
    BvpSolution::from_nodal(sol.nodes().to_vec(), 5, states, derivs)
}

fn strip(sol: &BvpSolution) -> BvpSolution {
    let m = sol.len();
    let mut states = Vec::with_capacity(4 * m);
    let mut derivs = Vec::with_capacity(4 * m);
    for i in 0..m {
        states.extend_from_slice(&sol.state(i)[..4]);
        derivs.extend_from_slice(&sol.derivative_at_node(i)[..4]);
    }
    let mut out = BvpSolution::from_nodal(sol.nodes().to_vec(), 4, states, derivs);
    out.residual_norm = sol.residual_norm;
    out.converged = sol.converged;
    out
}

/// Secant predictor on the mesh of `cur`.
fn predict(cur: &BvpSolution, prev: &BvpSolution, factor: f64) -> BvpGuess<'static> {
    let nodes = cur.nodes().to_vec();
    let d = cur.dim();
    let mut states = Vec::with_capacity(nodes.len() * d);
    let mut buf = vec![0.0; d];
    for (i, &x) in nodes.iter().enumerate() {
        prev.eval(x, &mut buf);
        let c = cur.state(i);
        for k in 0..d {
            states.push(c[k] + factor * (c[k] - buf[k]));
        }
    }
    BvpGuess::Nodal { nodes, states }
}

fn make_point(params: &SimilarityParams, sol: &BvpSolution, parity: Parity, l: f64, s: f64) -> BranchPoint {
    let p = sol.state(0)[4];
    let plain = strip(sol);
    let mut profile = Profile::from_vss_solution(params.with_p(p), plain.clone(), l, ProfileKind::Cp, parity);
    profile.solution = None;
    BranchPoint { p, norm_inf: norm_of(&plain), amplitude: signed_amplitude(&plain, parity), y0_or_l: l, s, profile }
}

/// Support `b^(n/4)` of the near-critical profile `b F(y / b^(n/4))`.
pub fn near_critical_support(params: &SimilarityParams, shape: &Profile) -> Result<f64> {
    let law = amplitude_law(params.n, params.dim, shape)?;
    let b = law.scale(critical_exponent(params.n, params.dim) - params.p);
    Ok(b.powf(params.n / 4.0) * shape.y.last().cloned().unwrap_or(1.0))
}

/// Pseudo-arclength continuation from `start` towards `p_target`.
pub fn continue_branch(start: &Profile, p_target: f64, ds: f64, tol: f64) -> Result<Branch> {
    continue_branch_with(start, p_target, &ContinuationOptions::new(ds, tol))
}

pub fn continue_branch_with(start: &Profile, p_target: f64, opts: &ContinuationOptions) -> Result<Branch> {
    if !(opts.ds > 0.0) {
        return Err(Error::InvalidParameter("ds must be positive".into()));
    }
    let sol0 = match &start.solution {
        Some(s) if s.converged && s.dim() == 4 => s.clone(),
        _ => return Err(Error::StartNotConverged),
    };
    let params = start.params;
    let (n, l, parity) = (params.n, start.y0, start.parity);
    let p_lo = n + 1.0;
    let p_hi = critical_exponent(n, params.dim);
    let mut bopts = BvpOptions::new(opts.tol, opts.max_nodes);
    bopts.bc_tol = opts.tol * 1e-2;
    bopts.max_rounds = 12;
    let corr = Corrector { sys: AugSystem { n, eps: params.eps }, l, parity, opts: bopts };
    let dir = if p_target < params.p { -1.0 } else { 1.0 };

    let mut cur = augment(&sol0, params.p);
    let mut points = vec![make_point(&params, &cur, parity, l, 0.0)];
    // First step at fixed direction in p.
    let mut ds = opts.ds;
    let mut prev: Option<BvpSolution> = None;
    let mut tangent = (dir, 0.0);
    let mut successes = 0;
    let mut end = BranchEnd::MaxSteps;
    let mut arclength = 0.0;
    for _ in 0..opts.max_steps {
        let base = (cur.state(0)[4], signed_amplitude(&cur, parity));
        // Finish at the target with a fixed-p solve.
        if (base.0 + ds * tangent.0 - p_target) * dir >= 0.0 {
            let guess = BvpGuess::Solution(&cur);
            let dp = p_target - base.0;
            if let Some(sol) = corr.solve(guess, base, (1.0, 0.0), dp) {
                arclength += dp.abs();
                points.push(make_point(&params, &sol, parity, l, arclength));
                end = BranchEnd::Target;
                break;
            }
        }
        let guess = match &prev {
            Some(pv) => {
                let last = points.len() - 1;
                let step_prev = (points[last].s - points[last - 1].s).max(1e-300);
                predict(&cur, pv, ds / step_prev)
            }
            None => {
                let nodes = cur.nodes().to_vec();
                let mut states = cur.states().to_vec();
                for i in 0..nodes.len() {
                    states[5 * i + 4] = base.0 + ds * tangent.0;
                }
                BvpGuess::Nodal { nodes, states }
            }
        };
        let pred = (base.0 + ds * tangent.0, base.1 + ds * tangent.1);
        let attempt = corr.solve(guess, base, tangent, ds).filter(|sol| {
            let p = sol.state(0)[4];
            let a = signed_amplitude(sol, parity);
            let drift = (p - pred.0).hypot(a - pred.1);
            p > p_lo && p < p_hi + 1e-9 && drift <= opts.max_drift * ds + 10.0 * opts.tol
        });
        // Landing on the trivial solution or on the mirror branch from far
        // away is a jump, not a branch end.
        let prev_norm = points.last().map(|q| q.norm_inf).unwrap_or(0.0);
        let max_norm = points.iter().fold(0.0f64, |m, q| m.max(q.norm_inf));
        let mut crossing = None;
        let attempt = attempt.filter(|sol| {
            let nn = norm_of(sol);
            let a = signed_amplitude(sol, parity);
            if prev.is_some() && ds > opts.ds * 1e-2 {
                // Reject steps that turn the secant sharply.
                let p = sol.state(0)[4];
                let step = (p - base.0).hypot(a - base.1).max(1e-300);
                let cos = ((p - base.0) * tangent.0 + (a - base.1) * tangent.1) / step;
                if cos < opts.min_cos {
                    return false;
                }
            }
            if nn < opts.norm_floor {
                return prev_norm <= 20.0 * opts.norm_floor;
            }
            if a * base.1 < 0.0 {
                if prev_norm < 0.25 * max_norm {
                    let p = sol.state(0)[4];
                    crossing = Some(base.0 + (p - base.0) * base.1 / (base.1 - a));
                    return true;
                }
                return false;
            }
            true
        });
        if let (Some(_), Some(pc)) = (&attempt, crossing) {
            end = BranchEnd::Floor { p: pc, origin: match_origin(&opts.bifurcations, pc) };
            break;
        }
        let Some(sol) = attempt else {
            ds *= 0.5;
            successes = 0;
            if ds < opts.ds * 1e-3 {
                end = BranchEnd::Stalled;
                break;
            }
            continue;
        };
        let p = sol.state(0)[4];
        let a = signed_amplitude(&sol, parity);
        let step = (p - base.0).hypot(a - base.1);
        arclength += step;
        let sec = ((p - base.0) / step, (a - base.1) / step);
        tangent = sec;
        prev = Some(std::mem::replace(&mut cur, sol));
        let pt = make_point(&params, &cur, parity, l, arclength);
        let norm = pt.norm_inf;
        points.push(pt);
        successes += 1;
        if successes >= 3 {
            ds = (ds * 1.3).min(10.0 * opts.ds);
            successes = 0;
        }
        if norm < opts.norm_floor {
            end = BranchEnd::Floor { p, origin: match_origin(&opts.bifurcations, p) };
            break;
        }
        if norm > opts.norm_max {
            end = BranchEnd::Blowup;
            break;
        }
        if p <= p_lo + 1e-6 || p >= p_hi - 1e-9 {
            end = BranchEnd::Range;
            break;
        }
        if points.len() > 8 && returns_to_start(&points, opts.tol.max(1e-3) * 10.0) {
            end = BranchEnd::Closed;
            break;
        }
    }
    let mut branch = Branch { points, origin: None, turning_points: Vec::new(), closed: false, end };
    branch.turning_points = detect_turning_points(&branch);
    branch.closed = detect_closure(&branch, 1e-2);
    Ok(branch)
}

/// Starts a branch from a profile known to lie near a bifurcation from zero
/// at `origin`.
pub fn continue_from_origin(start: &Profile, origin: f64, p_target: f64, opts: &ContinuationOptions) -> Result<Branch> {
    let mut b = continue_branch_with(start, p_target, opts)?;
    b.origin = Some(origin);
    b.closed = detect_closure(&b, 1e-2);
    Ok(b)
}

fn match_origin(known: &[f64], p: f64) -> Option<f64> {
    known
        .iter()
        .cloned()
        .filter(|b| (b - p).abs() < 0.05)
        .min_by(|x, y| (x - p).abs().partial_cmp(&(y - p).abs()).unwrap())
}

fn returns_to_start(points: &[BranchPoint], tol: f64) -> bool {
    let (p0, a0) = (points[0].p, points[0].norm_inf);
    let t0 = (points[1].p - p0, points[1].norm_inf - a0);
    let k = points.len() - 1;
    let (pk, ak) = (points[k].p, points[k].norm_inf);
    let tk = (pk - points[k - 1].p, ak - points[k - 1].norm_inf);
    let left = points[1..k].iter().any(|q| (q.p - p0).abs() > 2.0 * tol || (q.norm_inf - a0).abs() > 2.0 * tol);
    left && (pk - p0).abs() < tol && (ak - a0).abs() < tol && t0.0 * tk.0 + t0.1 * tk.1 > 0.0
}

/// Turning points: sign changes of the increments of `p`, refined by a
/// quadratic through the five neighbouring points.
pub fn detect_turning_points(branch: &Branch) -> Vec<f64> {
    let s: Vec<f64> = branch.points.iter().map(|q| q.s).collect();
    turning_points_of(&s, &branch.ps())
}

pub fn turning_points_of(s: &[f64], p: &[f64]) -> Vec<f64> {
    let m = p.len();
    if m < 3 {
        return Vec::new();
    }
    let scale = p.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let mut out = Vec::new();
    let mut last_sign = 0.0;
    let mut last_idx = 0;
    for i in 0..m - 1 {
        let d = p[i + 1] - p[i];
        if d.abs() <= 1e-12 * scale {
            continue;
        }
        let sg = d.signum();
        if last_sign != 0.0 && sg != last_sign {
            // Extremum sits at node `i` (between the two secants).
            out.push(refine_vertex(s, p, last_idx + 1));
        }
        last_sign = sg;
        last_idx = i;
    }
    out
}

fn refine_vertex(s: &[f64], p: &[f64], k: usize) -> f64 {
    let m = p.len();
    let lo = k.saturating_sub(2).min(m.saturating_sub(5));
    let hi = (lo + 5).min(m);
    if hi - lo < 3 {
        return p[k];
    }
    let s0 = s[k];
    // Least squares for p = c0 + c1 t + c2 t^2.
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for i in lo..hi {
        let t = s[i] - s0;
        let row = nalgebra::Vector3::new(1.0, t, t * t);
        ata += row * row.transpose();
        atb += row * p[i];
    }
    match ata.lu().solve(&atb) {
        Some(c) if c[2].abs() > 1e-14 => {
            let t = -c[1] / (2.0 * c[2]);
            let v = c[0] - c[1] * c[1] / (4.0 * c[2]);
            let span = (s[hi - 1] - s[lo]).abs();
            if t.abs() <= span && v.is_finite() {
                v
            } else {
                p[k]
            }
        }
        _ => p[k],
    }
}

/// Closure test. A branch is closed when a later point returns within `tol`
/// of the start in `(p, norm_inf)` moving the same way, or when it was
/// started at one bifurcation from zero and ends on the trivial solution at
/// another: the equation is odd in `f`, so the arc and its mirror image
/// `-f` join into one closed curve through both bifurcation points.
pub fn detect_closure(branch: &Branch, tol: f64) -> bool {
    let pts = &branch.points;
    if pts.len() < 3 {
        return false;
    }
    let (p0, a0) = (pts[0].p, pts[0].norm_inf);
    let t0 = (pts[1].p - p0, pts[1].norm_inf - a0);
    for k in 3..pts.len() {
        let (pk, ak) = (pts[k].p, pts[k].norm_inf);
        let tk = (pk - pts[k - 1].p, ak - pts[k - 1].norm_inf);
        // Skip the initial stretch that has not yet left the start.
        let left = pts[1..k].iter().any(|q| (q.p - p0).abs() > 2.0 * tol || (q.norm_inf - a0).abs() > 2.0 * tol);
        if left && (pk - p0).abs() < tol && (ak - a0).abs() < tol && t0.0 * tk.0 + t0.1 * tk.1 > 0.0 {
            return true;
        }
    }
    if let (Some(origin), BranchEnd::Floor { p, .. }) = (branch.origin, &branch.end) {
        return (p - origin).abs() > tol;
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeLaw {
    pub gamma0: f64,
    pub exponent: f64,
    pub integral_f: f64,
    pub integral_fq: f64,
}

impl AmplitudeLaw {
    /// `b = [gamma0 (p0 - p)]^exponent`.
    pub fn scale(&self, delta: f64) -> f64 {
        (self.gamma0 * delta).powf(self.exponent)
    }
}

fn simpson_like(y: &[f64], v: &[f64]) -> f64 {
    // Trapezoid with end corrections from one-sided differences, second
    // order on non-uniform meshes; Simpson on uniform.
    let m = y.len();
    if m < 2 {
        return 0.0;
    }
    let uniform = {
        let h = y[1] - y[0];
        y.windows(2).all(|w| ((w[1] - w[0]) - h).abs() < 1e-9 * h.abs().max(1e-300))
    };
    if uniform && m % 2 == 1 {
        let h = y[1] - y[0];
        let mut s = v[0] + v[m - 1];
        for i in 1..m - 1 {
            s += if i % 2 == 1 { 4.0 * v[i] } else { 2.0 * v[i] };
        }
        return s * h / 3.0;
    }
    y.windows(2).zip(v.windows(2)).map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1])).sum()
}

/// Near-critical amplitude law from the solvability integral with the
/// constant adjoint eigenfunction.
pub fn amplitude_law(n: f64, dim: u32, f: &Profile) -> Result<AmplitudeLaw> {
    let nd = dim as f64;
    let q = n + 4.0 / nd;
    let fq: Vec<f64> = f.f.iter().map(|&v| v.abs().powf(q) * v).collect();
    // Half-line integrals; the full-line factor cancels in the ratio.
    let i_f = simpson_like(&f.y, &f.f);
    let i_q = simpson_like(&f.y, &fq);
    if !(i_q > 0.0) {
        return Err(Error::NonPositiveDenominator(i_q));
    }
    let gamma0 = nd * nd / (4.0 * (4.0 + n * nd)) * i_f / i_q;
    Ok(AmplitudeLaw { gamma0, exponent: nd / (4.0 + n * nd), integral_f: i_f, integral_fq: i_q })
}

/// `p_l = 1 + 1/alpha_l`.
pub fn predict_bifurcations(n: f64, dim: u32, alpha_list: &[f64]) -> Result<Vec<f64>> {
    let _ = (n, dim);
    critical_exponents_from_alpha(alpha_list)
}

/// Source-type exponent `alpha_0 = N / (4 + nN)`.
pub fn source_alpha(n: f64, dim: u32) -> f64 {
    let nd = dim as f64;
    nd / (4.0 + n * nd)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumEntry {
    pub l: usize,
    pub lambda: f64,
    pub alpha: f64,
    /// Imaginary part of the numeric eigenvalue (0 in analytic mode).
    pub imag: f64,
}

/// Spectrum of `-D^4 + (y/4) D + N/4` in 1D: analytic `lambda_l = -l/4`,
/// `alpha_l = (N+l)/4`, or numerically from a finite-difference matrix.
pub fn semilinear_spectrum(dim: u32, l_max: usize, numeric: bool) -> Result<Vec<SpectrumEntry>> {
    let nd = dim as f64;
    if !numeric {
        return Ok((0..=l_max)
            .map(|l| SpectrumEntry { l, lambda: -(l as f64) / 4.0, alpha: (nd + l as f64) / 4.0, imag: 0.0 })
            .collect());
    }
    if l_max > 10 {
        return Err(Error::InvalidParameter("numeric spectrum supports l_max <= 10".into()));
    }
    let a = fd_spectrum(dim, 512, 20.0, l_max + 1);
    let b = fd_spectrum(dim, 640, 25.0, l_max + 1);
    let drift = a.iter().zip(&b).take(l_max.min(2) + 1).fold(0.0f64, |m, (x, y)| m.max((x.0 - y.0).abs()));
    if drift > 0.02 {
        return Err(Error::SpectrumNoConvergence(drift));
    }
    Ok(a.into_iter()
        .enumerate()
        .map(|(l, (re, im))| SpectrumEntry { l, lambda: re, alpha: nd / 4.0 - re, imag: im })
        .collect())
}

/// Leading eigenvalues (by real part) of the FD operator on `[-x, x]` with
/// clamped ends.
pub fn fd_spectrum(dim: u32, m: usize, x: f64, count: usize) -> Vec<(f64, f64)> {
    let h = 2.0 * x / (m + 1) as f64;
    let y: Vec<f64> = (1..=m).map(|i| -x + h * i as f64).collect();
    let mut a = nalgebra::DMatrix::<f64>::zeros(m, m);
    let h4 = h.powi(4);
    let stencil = [1.0, -4.0, 6.0, -4.0, 1.0];
    for i in 0..m {
        for (k, c) in stencil.iter().enumerate() {
            let j = i as isize + k as isize - 2;
            if j >= 0 && (j as usize) < m {
                a[(i, j as usize)] -= c / h4;
            }
        }
        if i > 0 {
            a[(i, i - 1)] -= 0.125 * y[i] / h;
        }
        if i + 1 < m {
            a[(i, i + 1)] += 0.125 * y[i] / h;
        }
        a[(i, i)] += dim as f64 / 4.0;
    }
    // Ghost node for f' = 0 at the ends.
    a[(0, 0)] -= 1.0 / h4;
    a[(m - 1, m - 1)] -= 1.0 / h4;
    let eig = a.complex_eigenvalues();
    let mut ev: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im)).collect();
    ev.sort_by(|p, q| q.0.partial_cmp(&p.0).unwrap());
    ev.truncate(count);
    ev
}

/// `D^l F` for the kernel `F(y) = (1/pi) int_0^inf exp(-k^4) cos(k y) dk`.
pub fn kernel_derivative(l: usize, y: f64) -> f64 {
    let kmax = 6.0;
    let m = 1200;
    let h = kmax / m as f64;
    let phase = l as f64 * std::f64::consts::FRAC_PI_2;
    let g = |k: f64| k.powi(l as i32) * (-k.powi(4)).exp() * (k * y + phase).cos();
    let mut s = g(0.0) + g(kmax);
    for i in 1..m {
        let k = h * i as f64;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(k);
    }
    s * h / 3.0 / std::f64::consts::PI
}

fn adjoint_poly(l: usize, y: f64) -> f64 {
    let base = y.powi(l as i32);
    match l {
        4 => base + 24.0,
        5 => base + 120.0 * y,
        6 => base + 360.0 * y * y,
        _ => base,
    }
}

/// Seed `c psi_l` for the semilinear branch born at `p_l`, evaluated at `p`.
/// Returns `None` when the local branch lies on the other side of `p_l`.
pub fn pitchfork_seed(l: usize, p: f64, y: &[f64]) -> Option<Vec<f64>> {
    let alpha_l = (1.0 + l as f64) / 4.0;
    let alpha = 1.0 / (p - 1.0);
    let psi: Vec<f64> = y.iter().map(|&v| kernel_derivative(l, v)).collect();
    let w: Vec<f64> = y.iter().map(|&v| adjoint_poly(l, v)).collect();
    let num: Vec<f64> = psi.iter().zip(&w).map(|(a, b)| a * b).collect();
    let den: Vec<f64> = psi.iter().zip(&w).map(|(a, b)| a.abs().powf(p - 1.0) * a * b).collect();
    let ratio = (alpha - alpha_l) * simpson_like(y, &num) / simpson_like(y, &den);
    if !(ratio > 0.0) {
        return None;
    }
    let c = ratio.powf(1.0 / (p - 1.0));
    Some(psi.iter().map(|v| c * v).collect())
}

/// Semilinear (`n = 0`, `N = 1`) CP profile near the pitchfork at `p_l`,
/// solved at `p = p_l - delta` on `[0, l]`.
pub fn semilinear_branch_start(l_index: usize, delta: f64, length: f64, opts: &CpOptions) -> Result<Profile> {
    let p_l = 1.0 + 4.0 / (1.0 + l_index as f64);
    let p = p_l - delta;
    let params = SimilarityParams::new(0.0, p, 1, ProblemKind::Cp, 1e-2)?;
    let m = 1200;
    let y: Vec<f64> = (0..=m).map(|i| length * i as f64 / m as f64).collect();
    let f = pitchfork_seed(l_index, p, &y).ok_or(Error::SeedFailure { n: 0.0 })?;
    let parity = if l_index % 2 == 0 { Parity::Even } else { Parity::Odd };
    let mk = |k: usize| -> Vec<f64> { y.iter().map(|&v| kernel_derivative(l_index + k, v)).collect() };
    let scale = f.iter().zip(mk(0)).find(|(_, b)| b.abs() > 1e-12).map(|(a, b)| a / b).unwrap_or(1.0);
    let d1: Vec<f64> = mk(1).iter().map(|v| v * scale).collect();
    let d2: Vec<f64> = mk(2).iter().map(|v| v * scale).collect();
    let d3: Vec<f64> = mk(3).iter().map(|v| v * scale).collect();
    let seed = Profile {
        params,
        y: y.clone(),
        f,
        f1: d1,
        f2: d2,
        f3: d3,
        y0: length,
        kind: ProfileKind::Explicit,
        norm_inf: 0.0,
        parity,
        solution: None,
    };
    solve_cp_profile_with(&params, length, CpSeed::Profile(&seed), opts)
}

/// First-branch CP profile near `p0` built from the amplitude law applied
/// to a source-type profile `shape` (on `[0, 1]` for `n > 0`; the kernel
/// for `n = 0`), solved on `[0, length]`.
pub fn near_critical_start(params: &SimilarityParams, shape: &Profile, length: f64, opts: &CpOptions) -> Result<Profile> {
    let n = params.n;
    let law = amplitude_law(n, params.dim, shape)?;
    let p0 = critical_exponent(n, params.dim);
    let b = law.scale(p0 - params.p);
    let a = b.powf(n / 4.0);
    let l = length;
    let m = 1600;
    let y: Vec<f64> = (0..=m).map(|i| l * i as f64 / m as f64).collect();
    let f: Vec<f64> = y.iter().map(|&v| b * shape.value_at(v / a)).collect();
    let g = |v: &Vec<f64>| -> Vec<f64> {
        (0..v.len())
            .map(|i| {
                let (i0, i1) = if i == 0 { (0, 1) } else if i == v.len() - 1 { (i - 1, i) } else { (i - 1, i + 1) };
                (v[i1] - v[i0]) / (y[i1] - y[i0])
            })
            .collect()
    };
    let f1 = g(&f);
    let f2 = g(&f1);
    let f3 = g(&f2);
    let seed = Profile {
        params: *params,
        y: y.clone(),
        f,
        f1,
        f2,
        f3,
        y0: l,
        kind: ProfileKind::Explicit,
        norm_inf: 0.0,
        parity: Parity::Even,
        solution: None,
    };
    solve_cp_profile_with(params, l, CpSeed::Profile(&seed), opts)
}

/// Kernel profile `D^l F` on `[0, length]`, used as the `n = 0` shape.
pub fn kernel_profile(l: usize, length: f64, m: usize) -> Result<Profile> {
    let params = SimilarityParams::new(0.0, 5.0 - 1e-6, 1, ProblemKind::Cp, 1e-2)?;
    let y: Vec<f64> = (0..=m).map(|i| length * i as f64 / m as f64).collect();
    let col = |k: usize| -> Vec<f64> { y.iter().map(|&v| kernel_derivative(l + k, v)).collect() };
    let f = col(0);
    let norm = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(Profile {
        params,
        y: y.clone(),
        f,
        f1: col(1),
        f2: col(2),
        f3: col(3),
        y0: length,
        kind: ProfileKind::Explicit,
        norm_inf: norm,
        parity: if l % 2 == 0 { Parity::Even } else { Parity::Odd },
        solution: None,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
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

/// `(p0 - p, norm_inf)` along the first branch at the given distances from
/// `p0`, by natural continuation from the closest one.
pub fn near_critical_norms(
    params: &SimilarityParams,
    shape: &Profile,
    deltas: &[f64],
    length: f64,
    opts: &CpOptions,
) -> Result<Vec<(f64, f64)>> {
    let p0 = critical_exponent(params.n, params.dim);
    let mut ds: Vec<f64> = deltas.to_vec();
    ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = Vec::with_capacity(ds.len());
    for &d in &ds {
        let pr = params.with_p(p0 - d);
        let prof = near_critical_start(&pr, shape, length, opts)?;
        out.push((d, prof.norm_inf));
    }
    Ok(out)
}

/// Indices of mutually distinct profiles: norms differing by more than
/// `rel` relative, or different sign-change counts or parity. Profiles
/// related by `f -> -f` count as one.
pub fn distinct_profiles(profiles: &[Profile], rel: f64) -> Vec<usize> {
    let mut keep: Vec<usize> = Vec::new();
    for (i, p) in profiles.iter().enumerate() {
        let dup = keep.iter().any(|&k| {
            let q = &profiles[k];
            let same_norm = (p.norm_inf - q.norm_inf).abs() <= rel * p.norm_inf.max(q.norm_inf);
            let same_shape = p.sign_changes() == q.sign_changes() && p.parity == q.parity;
            same_norm && same_shape
        });
        if !dup {
            keep.push(i);
        }
    }
    keep
}

/// Re-solves a branch profile as a standalone CP solve (with the length
/// check) to confirm it.
pub fn confirm_profile(profile: &Profile, opts: &CpOptions) -> Result<Profile> {
    let guess_sol = profile_state_solution(profile);
    let tmp = Profile { solution: Some(guess_sol), ..profile.clone() };
    solve_cp_profile_with(&profile.params, profile.y0, CpSeed::Profile(&tmp), opts)
}

/// Semilinear exponents above `p_min`, from the analytic spectrum.
pub fn semilinear_bifurcations(dim: u32, p_min: f64) -> Result<Vec<f64>> {
    let alphas = semilinear_alphas(dim, 64);
    Ok(critical_exponents_from_alpha(&alphas)?.into_iter().filter(|&p| p > p_min).collect())
}
