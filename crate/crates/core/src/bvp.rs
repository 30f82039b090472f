//! Two-point boundary value solver for first-order systems.
//!
//! Three-point Lobatto collocation (cubic Hermite interpolant, fourth order)
//! with damped Newton on the collocation equations and residual-driven mesh
//! refinement. Separated boundary conditions keep the Newton matrix banded;
//! conditions coupling both ends fall back to a dense solve.

use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::par;

pub type RhsFn<'a> = dyn Fn(f64, &[f64], &mut [f64]) + Sync + 'a;
pub type BcFn<'a> = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Sync + 'a;
/// Row-major `dim x dim` Jacobian of the right-hand side.
pub type JacFn<'a> = dyn Fn(f64, &[f64], &mut [f64]) + Sync + 'a;

/// `y' = rhs(x, y)` on `[a, b]` with `bc(y(a), y(b)) = 0`.
pub struct BvpProblem<'a> {
    pub dim: usize,
    pub a: f64,
    pub b: f64,
    rhs: Box<RhsFn<'a>>,
    bc: Box<BcFn<'a>>,
    jac: Option<Box<JacFn<'a>>>,
}

impl<'a> BvpProblem<'a> {
    pub fn new(
        dim: usize,
        a: f64,
        b: f64,
        rhs: impl Fn(f64, &[f64], &mut [f64]) + Sync + 'a,
        bc: impl Fn(&[f64], &[f64]) -> Vec<f64> + Sync + 'a,
    ) -> Self {
        Self { dim, a, b, rhs: Box::new(rhs), bc: Box::new(bc), jac: None }
    }

    pub fn with_jacobian(mut self, jac: impl Fn(f64, &[f64], &mut [f64]) + Sync + 'a) -> Self {
        self.jac = Some(Box::new(jac));
        self
    }

    pub fn eval_rhs(&self, x: f64, y: &[f64], out: &mut [f64]) {
        (self.rhs)(x, y, out)
    }

    pub fn eval_bc(&self, ya: &[f64], yb: &[f64]) -> Vec<f64> {
        (self.bc)(ya, yb)
    }

    fn jacobian(&self, x: f64, y: &[f64], f0: &[f64], out: &mut [f64]) {
        if let Some(jac) = &self.jac {
            jac(x, y, out);
            return;
        }
        let d = self.dim;
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; d];
        for j in 0..d {
            let h = f64::EPSILON.sqrt() * y[j].abs().max(1.0);
            yp[j] = y[j] + h;
            let h = yp[j] - y[j];
            (self.rhs)(x, &yp, &mut fp);
            for i in 0..d {
                out[i * d + j] = (fp[i] - f0[i]) / h;
            }
            yp[j] = y[j];
        }
    }
}

/// Mesh nodes plus the per-interval residual estimates of the last solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<f64>,
    pub errors: Vec<f64>,
}

pub const MIN_INTERVALS: usize = 8;

impl Mesh {
    pub fn uniform(a: f64, b: f64, intervals: usize) -> Self {
        let m = intervals.max(1);
        let nodes = (0..=m).map(|i| a + (b - a) * i as f64 / m as f64).collect();
        Self { nodes, errors: vec![0.0; m] }
    }

    pub fn intervals(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }
}

/// Why a solve stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BvpStatus {
    Converged,
    MaxNodes,
    NewtonStalled,
    SingularJacobian,
}

#[derive(Debug, Clone)]
pub struct BvpSolution {
    pub mesh: Mesh,
    dim: usize,
    states: Vec<f64>,
    derivs: Vec<f64>,
    pub residual_norm: f64,
    pub bc_residual: f64,
    pub converged: bool,
    pub status: BvpStatus,
    pub newton_iterations: usize,
}

impl BvpSolution {
    /// Builds a solution object from nodal data, e.g. an analytic profile.
    pub fn from_nodal(nodes: Vec<f64>, dim: usize, states: Vec<f64>, derivs: Vec<f64>) -> Self {
        assert_eq!(states.len(), nodes.len() * dim);
        assert_eq!(derivs.len(), nodes.len() * dim);
        let m = nodes.len().saturating_sub(1);
        Self {
            mesh: Mesh { nodes, errors: vec![0.0; m] },
            dim,
            states,
            derivs,
            residual_norm: 0.0,
            bc_residual: 0.0,
            converged: true,
            status: BvpStatus::Converged,
            newton_iterations: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[f64] {
        &self.mesh.nodes
    }

    pub fn len(&self) -> usize {
        self.mesh.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.nodes.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn derivative_at_node(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    /// Nodal values of one state component.
    pub fn component(&self, k: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.states[i * self.dim + k]).collect()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.mesh.nodes[0], *self.mesh.nodes.last().unwrap())
    }

    fn locate(&self, x: f64) -> usize {
        let nodes = &self.mesh.nodes;
        let m = nodes.len() - 1;
        match nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(m.saturating_sub(1)),
            Err(0) => 0,
            Err(i) => (i - 1).min(m - 1),
        }
    }

    /// Interpolated state at `x` (cubic Hermite on the containing interval).
    pub fn eval(&self, x: f64, out: &mut [f64]) {
        let d = self.dim;
        if let Ok(i) = self.mesh.nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            out.copy_from_slice(self.state(i));
            return;
        }
        let i = self.locate(x);
        let (x0, x1) = (self.mesh.nodes[i], self.mesh.nodes[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        for k in 0..d {
            out[k] = h00 * self.states[i * d + k]
                + h * h10 * self.derivs[i * d + k]
                + h01 * self.states[(i + 1) * d + k]
                + h * h11 * self.derivs[(i + 1) * d + k];
        }
    }

    /// Derivative of the interpolant at `x`.
    pub fn eval_derivative(&self, x: f64, out: &mut [f64]) {
        let d = self.dim;
        if let Ok(i) = self.mesh.nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            out.copy_from_slice(self.derivative_at_node(i));
            return;
        }
        let i = self.locate(x);
        let (x0, x1) = (self.mesh.nodes[i], self.mesh.nodes[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let d00 = 6.0 * t * (t - 1.0) / h;
        let d10 = (1.0 - t) * (1.0 - 3.0 * t);
        let d01 = -d00;
        let d11 = t * (3.0 * t - 2.0);
        for k in 0..d {
            out[k] = d00 * self.states[i * d + k]
                + d10 * self.derivs[i * d + k]
                + d01 * self.states[(i + 1) * d + k]
                + d11 * self.derivs[(i + 1) * d + k];
        }
    }

    pub fn eval_vec(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval(x, &mut out);
        out
    }

    /// Same solution on the linearly mapped domain `[a, b]`; derivatives are
    /// rescaled accordingly.
    pub fn remapped(&self, a: f64, b: f64) -> BvpSolution {
        let (a0, b0) = self.domain();
        let s = (b - a) / (b0 - a0);
        let nodes = self.mesh.nodes.iter().map(|&x| a + (x - a0) * s).collect();
        let derivs = self.derivs.iter().map(|&v| v / s).collect();
        BvpSolution {
            mesh: Mesh { nodes, errors: self.mesh.errors.clone() },
            derivs,
            states: self.states.clone(),
            ..self.clone()
        }
    }
}

/// Initial guess handed to the solver.
#[derive(Debug, Clone)]
pub enum BvpGuess<'g> {
    /// Constant state on a uniform mesh.
    Constant { value: Vec<f64>, intervals: usize },
    /// Nodal states (`nodes.len() * dim`, node-major).
    Nodal { nodes: Vec<f64>, states: Vec<f64> },
    /// A previous solution on the same domain.
    Solution(&'g BvpSolution),
}

#[derive(Debug, Clone, Copy)]
pub struct BvpOptions {
    pub tol: f64,
    pub bc_tol: f64,
    pub max_nodes: usize,
    /// Newton iterations allowed on one mesh.
    pub max_newton: usize,
    /// Solve/refine rounds before giving up.
    pub max_rounds: usize,
    /// Step halvings tried per Newton iteration.
    pub max_halvings: usize,
    /// Refine the mesh until the residual estimate meets `tol`.
    pub adapt: bool,
}

impl BvpOptions {
    pub fn new(tol: f64, max_nodes: usize) -> Self {
        Self { tol, bc_tol: tol, max_nodes, max_newton: 10, max_rounds: 50, max_halvings: 8, adapt: true }
    }
}

/// Solves with default Newton settings.
pub fn solve_bvp(
    problem: &BvpProblem<'_>,
    guess: BvpGuess<'_>,
    tol: f64,
    max_nodes: usize,
) -> Result<BvpSolution> {
    solve_bvp_with(problem, guess, &BvpOptions::new(tol, max_nodes))
}

pub fn solve_bvp_with(
    problem: &BvpProblem<'_>,
    guess: BvpGuess<'_>,
    opts: &BvpOptions,
) -> Result<BvpSolution> {
    let d = problem.dim;
    if !(problem.a < problem.b) {
        return Err(Error::InvalidDomain { a: problem.a, b: problem.b });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if d == 0 {
        return Err(Error::DimensionMismatch { what: "system dimension", expected: 1, found: 0 });
    }
    let (mut x, mut y) = initial_mesh(problem, guess)?;
    let probe = problem.eval_bc(&y[..d], &y[y.len() - d..]);
    if probe.len() != d {
        return Err(Error::DimensionMismatch {
            what: "boundary residuals",
            expected: d,
            found: probe.len(),
        });
    }

    let mut total_newton = 0;
    let mut round = 0;
    loop {
        round += 1;
        let newton = newton_solve(problem, &x, &mut y, opts);
        total_newton += newton.iterations;
        let f = eval_nodes(problem, &x, &y);
        let errors = rms_residuals(problem, &x, &y, &f);
        let max_err = errors.iter().cloned().fold(0.0, f64::max);
        let bc_res = problem
            .eval_bc(&y[..d], &y[y.len() - d..])
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let build = |x: Vec<f64>, y: Vec<f64>, errors: Vec<f64>, status: BvpStatus| BvpSolution {
            mesh: Mesh { nodes: x, errors },
            dim: d,
            states: y,
            derivs: f.clone(),
            residual_norm: max_err,
            bc_residual: bc_res,
            converged: status == BvpStatus::Converged,
            status,
            newton_iterations: total_newton,
        };
        if let NewtonOutcome::Singular = newton.outcome {
            return Ok(build(x, y, errors, BvpStatus::SingularJacobian));
        }
        // A stalled Newton run still counts when the residual meets the
        // tolerance; otherwise the mesh is refined where the residual is large.
        let ok = max_err <= opts.tol && bc_res <= opts.bc_tol && max_err.is_finite();
        if ok {
            return Ok(build(x, y, errors, BvpStatus::Converged));
        }
        let fail = match newton.outcome {
            NewtonOutcome::Stalled => BvpStatus::NewtonStalled,
            _ => BvpStatus::MaxNodes,
        };
        if !opts.adapt || round >= opts.max_rounds {
            return Ok(build(x, y, errors, fail));
        }
        let (nx, ny) = refine(&x, &y, &f, &errors, opts.tol, d);
        if nx.len() > opts.max_nodes || nx.len() == x.len() {
            return Ok(build(x, y, errors, fail));
        }
        x = nx;
        y = ny;
    }
}

fn initial_mesh(problem: &BvpProblem<'_>, guess: BvpGuess<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = problem.dim;
    let (mut x, mut y) = match guess {
        BvpGuess::Constant { value, intervals } => {
            if value.len() != d {
                return Err(Error::DimensionMismatch {
                    what: "constant guess",
                    expected: d,
                    found: value.len(),
                });
            }
            let mesh = Mesh::uniform(problem.a, problem.b, intervals.max(MIN_INTERVALS));
            let y = mesh.nodes.iter().flat_map(|_| value.iter().cloned()).collect();
            (mesh.nodes, y)
        }
        BvpGuess::Nodal { nodes, states } => {
            if states.len() != nodes.len() * d {
                return Err(Error::DimensionMismatch {
                    what: "nodal guess",
                    expected: nodes.len() * d,
                    found: states.len(),
                });
            }
            (nodes, states)
        }
        BvpGuess::Solution(sol) => {
            if sol.dim != d {
                return Err(Error::DimensionMismatch {
                    what: "guess solution",
                    expected: d,
                    found: sol.dim,
                });
            }
            (sol.mesh.nodes.clone(), sol.states.clone())
        }
    };
    let scale = (problem.b - problem.a).abs().max(1.0);
    if x.len() < 2
        || (x[0] - problem.a).abs() > 1e-9 * scale
        || (x[x.len() - 1] - problem.b).abs() > 1e-9 * scale
    {
        return Err(Error::InvalidParameter(format!(
            "guess mesh must span [{}, {}]",
            problem.a, problem.b
        )));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("guess mesh must be strictly increasing".into()));
    }
    let last = x.len() - 1;
    x[0] = problem.a;
    x[last] = problem.b;
    while x.len() - 1 < MIN_INTERVALS {
        let (nx, ny) = bisect_all(&x, &y, d);
        x = nx;
        y = ny;
    }
    Ok((x, y))
}

fn bisect_all(x: &[f64], y: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nx = Vec::with_capacity(2 * x.len());
    let mut ny = Vec::with_capacity(2 * y.len());
    for i in 0..x.len() {
        nx.push(x[i]);
        ny.extend_from_slice(&y[i * d..(i + 1) * d]);
        if i + 1 < x.len() {
            nx.push(0.5 * (x[i] + x[i + 1]));
            for k in 0..d {
                ny.push(0.5 * (y[i * d + k] + y[(i + 1) * d + k]));
            }
        }
    }
    (nx, ny)
}

fn eval_nodes(problem: &BvpProblem<'_>, x: &[f64], y: &[f64]) -> Vec<f64> {
    let d = problem.dim;
    let chunks = par::map_indexed(x.len(), |i| {
        let mut out = vec![0.0; d];
        problem.eval_rhs(x[i], &y[i * d..(i + 1) * d], &mut out);
        out
    });
    chunks.into_iter().flatten().collect()
}

/// Midpoint state and right-hand side of the cubic collocation polynomial.
fn midpoint(
    problem: &BvpProblem<'_>,
    x: &[f64],
    y: &[f64],
    f: &[f64],
    i: usize,
) -> (f64, Vec<f64>, Vec<f64>) {
    let d = problem.dim;
    let h = x[i + 1] - x[i];
    let xm = x[i] + 0.5 * h;
    let ym: Vec<f64> = (0..d)
        .map(|k| {
            0.5 * (y[i * d + k] + y[(i + 1) * d + k]) - 0.125 * h * (f[(i + 1) * d + k] - f[i * d + k])
        })
        .collect();
    let mut fm = vec![0.0; d];
    problem.eval_rhs(xm, &ym, &mut fm);
    (xm, ym, fm)
}

struct Collocation {
    /// `y_{i+1} - y_i - h/6 (f_i + 4 f_mid + f_{i+1})`, interval-major.
    res: Vec<f64>,
    f_mid: Vec<f64>,
    bc: Vec<f64>,
}

fn collocation_residuals(problem: &BvpProblem<'_>, x: &[f64], y: &[f64], f: &[f64]) -> Collocation {
    let d = problem.dim;
    let m = x.len() - 1;
    let per = par::map_indexed(m, |i| {
        let h = x[i + 1] - x[i];
        let (_, _, fm) = midpoint(problem, x, y, f, i);
        let r: Vec<f64> = (0..d)
            .map(|k| {
                y[(i + 1) * d + k] - y[i * d + k]
                    - h / 6.0 * (f[i * d + k] + 4.0 * fm[k] + f[(i + 1) * d + k])
            })
            .collect();
        (r, fm)
    });
    let mut res = Vec::with_capacity(m * d);
    let mut f_mid = Vec::with_capacity(m * d);
    for (r, fm) in per {
        res.extend(r);
        f_mid.extend(fm);
    }
    let bc = problem.eval_bc(&y[..d], &y[m * d..]);
    Collocation { res, f_mid, bc }
}

fn residual_vector(c: &Collocation, layout: &Layout, d: usize) -> Vec<f64> {
    let mut r = Vec::with_capacity(c.res.len() + d);
    for &row in &layout.left {
        r.push(c.bc[row]);
    }
    r.extend_from_slice(&c.res);
    for &row in &layout.right {
        r.push(c.bc[row]);
    }
    r
}

/// Row order of the boundary residuals: rows depending only on `y(a)` are
/// placed first, rows depending only on `y(b)` last.
struct Layout {
    left: Vec<usize>,
    right: Vec<usize>,
    banded: bool,
    /// `d(bc)/d(ya)` and `d(bc)/d(yb)`, row-major `d x d`.
    ja: Vec<f64>,
    jb: Vec<f64>,
}

fn bc_layout(problem: &BvpProblem<'_>, ya: &[f64], yb: &[f64]) -> Layout {
    let d = problem.dim;
    let r0 = problem.eval_bc(ya, yb);
    let mut ja = vec![0.0; d * d];
    let mut jb = vec![0.0; d * d];
    let mut pa = ya.to_vec();
    let mut pb = yb.to_vec();
    for j in 0..d {
        let h = f64::EPSILON.sqrt() * ya[j].abs().max(1.0);
        pa[j] = ya[j] + h;
        let ra = problem.eval_bc(&pa, yb);
        pa[j] = ya[j];
        let h2 = f64::EPSILON.sqrt() * yb[j].abs().max(1.0);
        pb[j] = yb[j] + h2;
        let rb = problem.eval_bc(ya, &pb);
        pb[j] = yb[j];
        for i in 0..d {
            ja[i * d + j] = (ra[i] - r0[i]) / h;
            jb[i * d + j] = (rb[i] - r0[i]) / h2;
        }
    }
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut mixed = false;
    for i in 0..d {
        let on_a = (0..d).any(|j| ja[i * d + j] != 0.0);
        let on_b = (0..d).any(|j| jb[i * d + j] != 0.0);
        match (on_a, on_b) {
            (true, true) => {
                mixed = true;
                left.push(i);
            }
            (_, false) => left.push(i),
            (false, true) => right.push(i),
        }
    }
    Layout { left, right, banded: !mixed, ja, jb }
}

enum Factored {
    Band(crate::linalg::BandLu),
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factored {
    fn solve(&self, rhs: &mut [f64]) -> bool {
        match self {
            Factored::Band(lu) => {
                lu.solve_in_place(rhs);
                rhs.iter().all(|v| v.is_finite())
            }
            Factored::Dense(lu) => {
                let b = nalgebra::DVector::from_column_slice(rhs);
                match lu.solve(&b) {
                    Some(s) => {
                        rhs.copy_from_slice(s.as_slice());
                        true
                    }
                    None => false,
                }
            }
        }
    }
}

fn assemble_and_factor(
    problem: &BvpProblem<'_>,
    x: &[f64],
    y: &[f64],
    f: &[f64],
    layout: &Layout,
) -> Option<Factored> {
    let d = problem.dim;
    let m = x.len() - 1;
    let n = (m + 1) * d;
    let ka = layout.left.len();
    let blocks = par::map_indexed(m, |i| {
        let h = x[i + 1] - x[i];
        let mut ji = vec![0.0; d * d];
        let mut jn = vec![0.0; d * d];
        let mut jm = vec![0.0; d * d];
        problem.jacobian(x[i], &y[i * d..(i + 1) * d], &f[i * d..(i + 1) * d], &mut ji);
        problem.jacobian(x[i + 1], &y[(i + 1) * d..(i + 2) * d], &f[(i + 1) * d..(i + 2) * d], &mut jn);
        let (xm, ym, fm) = midpoint(problem, x, y, f, i);
        problem.jacobian(xm, &ym, &fm, &mut jm);
        // dR/dy_i = -I - h/6 (J_i + 4 J_m (I/2 + h/8 J_i))
        // dR/dy_{i+1} = I - h/6 (J_{i+1} + 4 J_m (I/2 - h/8 J_{i+1}))
        let mut left = vec![0.0; d * d];
        let mut right = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                let mut sl = 0.0;
                let mut sr = 0.0;
                for k in 0..d {
                    let ik = if k == c { 0.5 } else { 0.0 };
                    sl += jm[r * d + k] * (ik + 0.125 * h * ji[k * d + c]);
                    sr += jm[r * d + k] * (ik - 0.125 * h * jn[k * d + c]);
                }
                let id = if r == c { 1.0 } else { 0.0 };
                left[r * d + c] = -id - h / 6.0 * (ji[r * d + c] + 4.0 * sl);
                right[r * d + c] = id - h / 6.0 * (jn[r * d + c] + 4.0 * sr);
            }
        }
        (left, right)
    });

    if layout.banded {
        let kl = ka + d - 1;
        let ku = (2 * d - 1).saturating_sub(ka).max(d - 1);
        let mut band = BandMatrix::zeros(n, kl, ku);
        for (row, &bi) in layout.left.iter().enumerate() {
            for c in 0..d {
                band.set(row, c, layout.ja[bi * d + c]);
            }
        }
        for (i, (l, r)) in blocks.iter().enumerate() {
            for rr in 0..d {
                let row = ka + i * d + rr;
                for c in 0..d {
                    band.set(row, i * d + c, l[rr * d + c]);
                    band.set(row, (i + 1) * d + c, r[rr * d + c]);
                }
            }
        }
        for (k, &bi) in layout.right.iter().enumerate() {
            let row = ka + m * d + k;
            for c in 0..d {
                band.set(row, m * d + c, layout.jb[bi * d + c]);
            }
        }
        band.factor().map(Factored::Band)
    } else {
        let mut dense = nalgebra::DMatrix::<f64>::zeros(n, n);
        for (row, &bi) in layout.left.iter().enumerate() {
            for c in 0..d {
                dense[(row, c)] = layout.ja[bi * d + c];
                dense[(row, m * d + c)] = layout.jb[bi * d + c];
            }
        }
        for (i, (l, r)) in blocks.iter().enumerate() {
            for rr in 0..d {
                let row = ka + i * d + rr;
                for c in 0..d {
                    dense[(row, i * d + c)] = l[rr * d + c];
                    dense[(row, (i + 1) * d + c)] = r[rr * d + c];
                }
            }
        }
        for (k, &bi) in layout.right.iter().enumerate() {
            let row = ka + m * d + k;
            for c in 0..d {
                dense[(row, c)] = layout.ja[bi * d + c];
                dense[(row, m * d + c)] = layout.jb[bi * d + c];
            }
        }
        let lu = dense.lu();
        if lu.is_invertible() {
            Some(Factored::Dense(lu))
        } else {
            None
        }
    }
}

enum NewtonOutcome {
    Converged,
    Stalled,
    Singular,
}

struct NewtonReport {
    outcome: NewtonOutcome,
    iterations: usize,
}

fn newton_converged(c: &Collocation, x: &[f64], d: usize, opts: &BvpOptions) -> bool {
    let m = x.len() - 1;
    for i in 0..m {
        let h = x[i + 1] - x[i];
        // Midpoint residual of the interpolant is 1.5 * col_res / h; require it
        // to sit 1.5 orders below the target tolerance.
        let tol_r = 2.0 / 3.0 * h * 5e-2 * opts.tol;
        for k in 0..d {
            let r = c.res[i * d + k];
            if !(r.abs() < tol_r * (1.0 + c.f_mid[i * d + k].abs())) {
                return false;
            }
        }
    }
    c.bc.iter().all(|v| v.abs() < opts.bc_tol)
}

fn newton_solve(problem: &BvpProblem<'_>, x: &[f64], y: &mut Vec<f64>, opts: &BvpOptions) -> NewtonReport {
    let d = problem.dim;
    let m = x.len() - 1;
    const SIGMA: f64 = 0.2;
    let mut iterations = 0;
    let mut f = eval_nodes(problem, x, y);
    let mut col = collocation_residuals(problem, x, y, &f);
    loop {
        if newton_converged(&col, x, d, opts) {
            return NewtonReport { outcome: NewtonOutcome::Converged, iterations };
        }
        if iterations >= opts.max_newton {
            return NewtonReport { outcome: NewtonOutcome::Stalled, iterations };
        }
        iterations += 1;
        let layout = bc_layout(problem, &y[..d], &y[m * d..]);
        let Some(lu) = assemble_and_factor(problem, x, y, &f, &layout) else {
            return NewtonReport { outcome: NewtonOutcome::Singular, iterations };
        };
        let mut step = residual_vector(&col, &layout, d);
        if !lu.solve(&mut step) {
            return NewtonReport { outcome: NewtonOutcome::Singular, iterations };
        }
        for v in step.iter_mut() {
            *v = -*v;
        }
        let cost = scaled_norm2(&step, y);
        let mut lambda = 1.0;
        let mut accepted = None;
        for trial in 0..=opts.max_halvings {
            let yt: Vec<f64> = y.iter().zip(&step).map(|(a, s)| a + lambda * s).collect();
            let ft = eval_nodes(problem, x, &yt);
            let ct = collocation_residuals(problem, x, &yt, &ft);
            let finite = ct.res.iter().chain(&ct.bc).all(|v| v.is_finite());
            if finite {
                let mut probe = residual_vector(&ct, &layout, d);
                let solved = lu.solve(&mut probe);
                let cost_t = scaled_norm2(&probe, &yt);
                if solved && (cost_t < (1.0 - 2.0 * lambda * SIGMA) * cost || trial == opts.max_halvings) {
                    accepted = Some((yt, ft, ct));
                    break;
                }
                if trial == opts.max_halvings {
                    accepted = Some((yt, ft, ct));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((yt, ft, ct)) => {
                *y = yt;
                f = ft;
                col = ct;
            }
            None => return NewtonReport { outcome: NewtonOutcome::Stalled, iterations },
        }
        if cost.sqrt() < 1e-14 {
            // Step already at round-off level.
            if newton_converged(&col, x, d, &BvpOptions { tol: opts.tol * 10.0, ..*opts }) {
                return NewtonReport { outcome: NewtonOutcome::Converged, iterations };
            }
        }
    }
}

fn scaled_norm2(step: &[f64], y: &[f64]) -> f64 {
    step.iter().zip(y).map(|(s, v)| (s / (1.0 + v.abs())).powi(2)).sum()
}

/// RMS of the relative residual `(S' - f(x, S)) / (1 + |f|)` over each
/// interval, by 5-point Lobatto quadrature.
fn rms_residuals(problem: &BvpProblem<'_>, x: &[f64], y: &[f64], f: &[f64]) -> Vec<f64> {
    let d = problem.dim;
    let m = x.len() - 1;
    let q = (3.0f64 / 7.0).sqrt();
    par::map_indexed(m, |i| {
        let h = x[i + 1] - x[i];
        let xm = x[i] + 0.5 * h;
        let mut total = 0.0;
        for (offset, weight) in [(0.0, 32.0 / 45.0), (q, 49.0 / 90.0), (-q, 49.0 / 90.0)] {
            let xs = xm + 0.5 * h * offset;
            let t = (xs - x[i]) / h;
            let mut s = vec![0.0; d];
            let mut ds = vec![0.0; d];
            let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
            let h10 = t * (1.0 - t) * (1.0 - t);
            let h01 = t * t * (3.0 - 2.0 * t);
            let h11 = t * t * (t - 1.0);
            let d00 = 6.0 * t * (t - 1.0) / h;
            let d10 = (1.0 - t) * (1.0 - 3.0 * t);
            let d11 = t * (3.0 * t - 2.0);
            for k in 0..d {
                let (y0, y1) = (y[i * d + k], y[(i + 1) * d + k]);
                let (f0, f1) = (f[i * d + k], f[(i + 1) * d + k]);
                s[k] = h00 * y0 + h * h10 * f0 + h01 * y1 + h * h11 * f1;
                ds[k] = d00 * y0 + d10 * f0 - d00 * y1 + d11 * f1;
            }
            let mut fs = vec![0.0; d];
            problem.eval_rhs(xs, &s, &mut fs);
            let r2: f64 = (0..d).map(|k| ((ds[k] - fs[k]) / (1.0 + fs[k].abs())).powi(2)).sum();
            total += weight * r2;
        }
        let v = (0.5 * total).sqrt();
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    })
}

fn refine(x: &[f64], y: &[f64], f: &[f64], errors: &[f64], tol: f64, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nx = Vec::with_capacity(x.len() * 2);
    let mut ny = Vec::with_capacity(y.len() * 2);
    let hermite = |i: usize, t: f64, out: &mut Vec<f64>| {
        let h = x[i + 1] - x[i];
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        for k in 0..d {
            out.push(
                h00 * y[i * d + k] + h * h10 * f[i * d + k] + h01 * y[(i + 1) * d + k]
                    + h * h11 * f[(i + 1) * d + k],
            );
        }
    };
    for i in 0..x.len() {
        nx.push(x[i]);
        ny.extend_from_slice(&y[i * d..(i + 1) * d]);
        if i + 1 == x.len() {
            break;
        }
        let e = errors[i];
        let h = x[i + 1] - x[i];
        if e > tol && e < 100.0 * tol {
            nx.push(x[i] + 0.5 * h);
            hermite(i, 0.5, &mut ny);
        } else if e >= 100.0 * tol || !e.is_finite() {
            for t in [1.0 / 3.0, 2.0 / 3.0] {
                nx.push(x[i] + t * h);
                hermite(i, t, &mut ny);
            }
        }
    }
    (nx, ny)
}
