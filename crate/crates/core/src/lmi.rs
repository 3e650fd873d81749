//! Switched-Lyapunov feasibility under arbitrary switching.
//!
//! The block condition `[[P_i, A_i' P_j], [P_j A_i, P_j]] > 0` is checked in
//! its Schur-reduced form `P_i - A_i' P_j A_i > 0` (valid once `P_j > 0`).
//!
//! Two search engines produce candidates. Lifted alternating projections
//! alternate between the PSD cones `{S_c >= eps I}` (eigenvalue clipping) and
//! the consistency subspace `{S_c = L_c(P)}` (least squares by conjugate
//! gradients). A log-barrier Newton method maximises the smallest slack under
//! `P <= I`; it handles the thin feasible sets of near-marginal families.
//! Anything claimed feasible has passed [`lmi_verify`]; non-convergence is
//! reported as undetermined, never as infeasible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMargin {
    pub i: usize,
    pub j: usize,
    /// Smallest eigenvalue of `P_i - A_i' P_j A_i`.
    pub min_eig: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiCertificate {
    #[serde(with = "linalg::rows::list")]
    pub p_list: Vec<Mat>,
    pub margins: Vec<PairMargin>,
    pub min_p_eig: f64,
}

impl LmiCertificate {
    /// Evaluate margins of a candidate `P_1..P_N` against `states`.
    pub fn evaluate(states: &[Mat], p_list: Vec<Mat>) -> Result<Self> {
        check_shapes(states, &p_list)?;
        let mut margins = Vec::with_capacity(states.len() * states.len());
        for (i, a) in states.iter().enumerate() {
            for (j, pj) in p_list.iter().enumerate() {
                let reduced = &p_list[i] - a.transpose() * pj * a;
                margins.push(PairMargin {
                    i,
                    j,
                    min_eig: linalg::min_sym_eigenvalue(&reduced),
                });
            }
        }
        let min_p_eig = p_list
            .iter()
            .map(linalg::min_sym_eigenvalue)
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            p_list,
            margins,
            min_p_eig,
        })
    }

    pub fn min_margin(&self) -> f64 {
        self.margins
            .iter()
            .map(|m| m.min_eig)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn check_shapes(states: &[Mat], p_list: &[Mat]) -> Result<()> {
    if states.is_empty() {
        return Err(Error::InvalidArgument("no switching states".into()));
    }
    if p_list.len() != states.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} P matrices for {} states",
            p_list.len(),
            states.len()
        )));
    }
    let d = states[0].nrows();
    for m in states.iter().chain(p_list) {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix in a {d}-state problem",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    Ok(())
}

/// Block matrix of the unreduced condition for one `(i, j)` pair.
pub fn block_lmi_matrix(p_i: &Mat, p_j: &Mat, a_i: &Mat) -> Mat {
    let d = p_i.nrows();
    let mut m = Mat::zeros(2 * d, 2 * d);
    let off = p_j * a_i;
    m.view_mut((0, 0), (d, d)).copy_from(p_i);
    m.view_mut((0, d), (d, d)).copy_from(&off.transpose());
    m.view_mut((d, 0), (d, d)).copy_from(&off);
    m.view_mut((d, d), (d, d)).copy_from(p_j);
    m
}

/// Exact check: every `P_i >= eps I` and every `P_i - A_i' P_j A_i >= eps I`.
pub fn lmi_verify(states: &[Mat], cert: &LmiCertificate, eps: f64) -> Result<bool> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps = {eps} must be > 0")));
    }
    check_shapes(states, &cert.p_list)?;
    for p in &cert.p_list {
        let asym = (p - p.transpose()).amax();
        if asym > 1e-10 * p.amax().max(1.0) || !linalg::all_finite(p) {
            return Ok(false);
        }
    }
    let fresh = LmiCertificate::evaluate(states, cert.p_list.clone())?;
    Ok(fresh.min_p_eig >= eps && fresh.min_margin() >= eps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum LmiVerdict {
    Feasible {
        certificate: LmiCertificate,
        epsilon: f64,
        iterations: usize,
    },
    Undetermined {
        iterations: usize,
        residual: f64,
    },
    /// A single state is not Schur stable, so no certificate can exist.
    NecessaryFail {
        witness: usize,
        spectral_radius: f64,
    },
}

impl LmiVerdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, LmiVerdict::Feasible { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Lifted alternating projections only.
    Projection,
    /// Log-barrier maximisation of the common slack only.
    Barrier,
    /// A short projection pass, then the barrier method.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Required margin; defaults to `1e-6 * max(1, max_i |A_i|_2)`.
    pub epsilon: Option<f64>,
    /// Projection: stop when relative iterate movement falls below this.
    pub tol: f64,
    /// Cap on projection sweeps plus Newton steps.
    pub max_iter: usize,
    /// Run the exact verifier every this many sweeps.
    pub verify_every: usize,
    pub method: Method,
    /// Projection sweeps spent before switching to the barrier under `Auto`.
    pub projection_budget: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            epsilon: None,
            tol: 1e-9,
            max_iter: 20_000,
            verify_every: 10,
            method: Method::Auto,
            projection_budget: 40,
        }
    }
}

pub fn default_epsilon(states: &[Mat]) -> f64 {
    let scale = states
        .iter()
        .map(linalg::spectral_norm)
        .fold(1.0, f64::max);
    1e-6 * scale
}

/// Mode-dependent certificate `P_1..P_N`.
///
/// A common `P` is tried first: replicated, it is a mode-dependent certificate too.
pub fn lmi_solve(states: &[Mat], opts: &SolverOptions) -> Result<LmiVerdict> {
    if let Some(early) = prescreen(states, opts)? {
        return Ok(early);
    }
    let shared = solve(states, opts, true)?;
    let spent = match shared {
        LmiVerdict::Feasible { .. } => return Ok(shared),
        LmiVerdict::Undetermined { iterations, .. } => iterations,
        LmiVerdict::NecessaryFail { .. } => unreachable!("screened above"),
    };
    let rest = SolverOptions {
        max_iter: opts.max_iter.saturating_sub(spent).max(1),
        ..*opts
    };
    Ok(match solve(states, &rest, false)? {
        LmiVerdict::Feasible {
            certificate,
            epsilon,
            iterations,
        } => feasible(certificate, epsilon, iterations + spent),
        LmiVerdict::Undetermined {
            iterations,
            residual,
        } => LmiVerdict::Undetermined {
            iterations: iterations + spent,
            residual,
        },
        v => v,
    })
}

/// One `P` shared by every state (common quadratic Lyapunov function).
pub fn common_p_solve(states: &[Mat], opts: &SolverOptions) -> Result<LmiVerdict> {
    if let Some(early) = prescreen(states, opts)? {
        return Ok(early);
    }
    solve(states, opts, true)
}

/// Shape checks plus the necessary condition: each state Schur stable.
fn prescreen(states: &[Mat], opts: &SolverOptions) -> Result<Option<LmiVerdict>> {
    if states.is_empty() {
        return Err(Error::InvalidArgument("no switching states".into()));
    }
    let d = states[0].nrows();
    if states.iter().any(|a| a.nrows() != d || a.ncols() != d) {
        return Err(Error::DimensionMismatch("states differ in dimension".into()));
    }
    if let Some(eps) = opts.epsilon {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!("eps = {eps} must be > 0")));
        }
    }
    for (k, a) in states.iter().enumerate() {
        let rho = linalg::spectral_radius(a)?;
        if rho >= 1.0 {
            return Ok(Some(LmiVerdict::NecessaryFail {
                witness: k,
                spectral_radius: rho,
            }));
        }
    }
    Ok(None)
}

/// `L_c(X) = X[pi] - A' X[pj] A`.
struct Constraint {
    pi: usize,
    pj: usize,
    a: Mat,
    at: Mat,
}

struct Problem {
    vars: usize,
    dim: usize,
    constraints: Vec<Constraint>,
}

impl Problem {
    fn new(states: &[Mat], common: bool) -> Self {
        let n = states.len();
        let mut constraints = Vec::new();
        for (i, a) in states.iter().enumerate() {
            let targets: Vec<usize> = if common { vec![0] } else { (0..n).collect() };
            for j in targets {
                let pi = if common { 0 } else { i };
                constraints.push(Constraint {
                    pi,
                    pj: j,
                    a: a.clone(),
                    at: a.transpose(),
                });
            }
        }
        Self {
            vars: if common { 1 } else { n },
            dim: states[0].nrows(),
            constraints,
        }
    }

    fn apply(&self, c: &Constraint, x: &[Mat]) -> Mat {
        &x[c.pi] - &c.at * &x[c.pj] * &c.a
    }

    fn adjoint_add(&self, c: &Constraint, s: &Mat, out: &mut [Mat]) {
        out[c.pi] += s;
        out[c.pj] -= &c.a * s * &c.at;
    }

    /// `(2 I + sum L_c* L_c) X`: anchor, positivity slack and constraint slacks.
    fn normal(&self, x: &[Mat]) -> Vec<Mat> {
        let mut out: Vec<Mat> = x.iter().map(|m| m * 2.0).collect();
        for c in &self.constraints {
            let lx = self.apply(c, x);
            self.adjoint_add(c, &lx, &mut out);
        }
        out
    }
}

fn dot(a: &[Mat], b: &[Mat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn axpy(alpha: f64, x: &[Mat], y: &mut [Mat]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += xi * alpha);
}

/// Conjugate gradients on the (SPD) normal operator, warm-started at `x`.
fn cg(problem: &Problem, rhs: &[Mat], x: &mut [Mat]) {
    let ax = problem.normal(x);
    let mut r: Vec<Mat> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = 1e-28 * dot(rhs, rhs).max(1e-300);
    for _ in 0..(4 * problem.vars * problem.dim * problem.dim).clamp(50, 500) {
        if rr <= stop {
            break;
        }
        let ap = problem.normal(&p);
        let alpha = rr / dot(&p, &ap);
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + &*pi * beta);
    }
}

/// Build the certificate for `x`, rescaling (the conditions are homogeneous)
/// so a positive slack reaches `eps`, and keep it only if it verifies.
fn certify(states: &[Mat], x: &[Mat], common: bool, eps: f64) -> Result<Option<LmiCertificate>> {
    let mut p_list: Vec<Mat> = if common {
        vec![linalg::symmetrize(&x[0]); states.len()]
    } else {
        x.iter().map(linalg::symmetrize).collect()
    };
    let probe = LmiCertificate::evaluate(states, p_list.clone())?;
    let slack = probe.min_margin().min(probe.min_p_eig);
    if !(slack > 0.0) {
        return Ok(None);
    }
    let cert = if slack < 2.0 * eps {
        let scale = 2.0 * eps / slack;
        p_list.iter_mut().for_each(|p| *p *= scale);
        LmiCertificate::evaluate(states, p_list)?
    } else {
        probe
    };
    Ok(lmi_verify(states, &cert, eps)?.then_some(cert))
}

fn solve(states: &[Mat], opts: &SolverOptions, common: bool) -> Result<LmiVerdict> {
    let eps = opts.epsilon.unwrap_or_else(|| default_epsilon(states));
    let problem = Problem::new(states, common);
    let mut x = vec![Mat::identity(problem.dim, problem.dim); problem.vars];
    let sweeps = match opts.method {
        Method::Projection => opts.max_iter,
        Method::Barrier => 0,
        Method::Auto => opts.projection_budget.min(opts.max_iter),
    };
    let (outcome, used) = project(states, &problem, &mut x, opts, sweeps, common, eps)?;
    if outcome.is_feasible() || opts.method == Method::Projection {
        return Ok(outcome);
    }
    let budget = opts.max_iter.saturating_sub(used).max(1);
    Ok(match preconditioned_barrier(states, budget, common, eps)? {
        LmiVerdict::Feasible {
            certificate,
            epsilon,
            iterations,
        } => feasible(certificate, epsilon, iterations + used),
        LmiVerdict::Undetermined {
            iterations,
            residual,
        } => LmiVerdict::Undetermined {
            iterations: iterations + used,
            residual,
        },
        v => v,
    })
}

fn project(
    states: &[Mat],
    problem: &Problem,
    x: &mut [Mat],
    opts: &SolverOptions,
    sweeps: usize,
    common: bool,
    eps: f64,
) -> Result<(LmiVerdict, usize)> {
    // Project onto a slightly tighter cone so the limit verifies at eps.
    let floor = 2.0 * eps;
    let mut residual = f64::INFINITY;
    for it in 1..=sweeps {
        let mut rhs: Vec<Mat> = x.to_vec();
        residual = 0.0;
        for (k, xk) in x.iter().enumerate() {
            let s = linalg::clip_eigenvalues(xk, floor);
            residual += (&s - xk).norm();
            rhs[k] += s;
        }
        for c in &problem.constraints {
            let lx = linalg::symmetrize(&problem.apply(c, x));
            let s = linalg::clip_eigenvalues(&lx, floor);
            residual += (&s - &lx).norm();
            problem.adjoint_add(c, &s, &mut rhs);
        }
        if residual == 0.0 {
            if let Some(cert) = certify(states, x, common, eps)? {
                return Ok((feasible(cert, eps, it), it));
            }
        }
        let prev = x.to_vec();
        cg(problem, &rhs, x);
        x.iter_mut().for_each(|m| *m = linalg::symmetrize(m));

        let moved: f64 = prev
            .iter()
            .zip(x.iter())
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt();
        let size = x.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt().max(1.0);
        let converged = moved / size < opts.tol;
        if converged || it % opts.verify_every.max(1) == 0 {
            if let Some(cert) = certify(states, x, common, eps)? {
                return Ok((feasible(cert, eps, it), it));
            }
        }
        if converged {
            return Ok((
                LmiVerdict::Undetermined {
                    iterations: it,
                    residual,
                },
                it,
            ));
        }
    }
    Ok((
        LmiVerdict::Undetermined {
            iterations: sweeps,
            residual,
        },
        sweeps,
    ))
}

/// Congruence `A -> L' A L^-T` with `L L'` the mean per-state Lyapunov
/// solution. Near-marginal families need badly conditioned `P`; in these
/// coordinates the sought `P` is close to `I`. Certificates are mapped back
/// and verified against the original states.
fn preconditioned_barrier(states: &[Mat], budget: usize, common: bool, eps: f64) -> Result<LmiVerdict> {
    let d = states[0].nrows();
    let identity = Mat::identity(d, d);
    let mut mean = Mat::zeros(d, d);
    for a in states {
        mean += linalg::discrete_lyapunov(a, &identity)?;
    }
    mean /= states.len() as f64;
    let Some(chol) = mean.cholesky() else {
        return barrier(states, &Problem::new(states, common), budget, common, eps, None);
    };
    let l = chol.l();
    let lt_inv = l
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Eigen("singular preconditioner".into()))?;
    let scaled: Vec<Mat> = states.iter().map(|a| l.transpose() * a * &lt_inv).collect();
    barrier(states, &Problem::new(&scaled, common), budget, common, eps, Some(&l))
}

/// `sign * M' X_var M`, with `M = I` when `map` is `None`.
struct Term {
    var: usize,
    map: Option<Mat>,
    sign: f64,
}

/// Affine matrix function `constant + sum terms - t_coef * t * I`, kept positive definite.
struct Block {
    terms: Vec<Term>,
    constant: Option<Mat>,
    t_coef: f64,
    vars: Vec<usize>,
}

impl Block {
    fn new(terms: Vec<Term>, constant: Option<Mat>, t_coef: f64) -> Self {
        let mut vars: Vec<usize> = terms.iter().map(|t| t.var).collect();
        vars.sort_unstable();
        vars.dedup();
        Self {
            terms,
            constant,
            t_coef,
            vars,
        }
    }

    fn value(&self, x: &[Mat], t: f64) -> Mat {
        let d = x[0].nrows();
        let mut f = self.constant.clone().unwrap_or_else(|| Mat::zeros(d, d));
        for term in &self.terms {
            match &term.map {
                Some(m) => f += (m.transpose() * &x[term.var] * m) * term.sign,
                None => f += &x[term.var] * term.sign,
            }
        }
        for i in 0..d {
            f[(i, i)] -= self.t_coef * t;
        }
        linalg::symmetrize(&f)
    }
}

/// Coordinates: upper-triangle entries of each `X_v`, then `t`.
struct Coords {
    d: usize,
    q: usize,
    vars: usize,
}

impl Coords {
    fn len(&self) -> usize {
        self.vars * self.q + 1
    }

    fn t(&self) -> usize {
        self.vars * self.q
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.d).flat_map(move |a| (a..self.d).map(move |b| (a, b)))
    }

    fn unpack(&self, z: &[f64]) -> (Vec<Mat>, f64) {
        let xs = (0..self.vars)
            .map(|v| {
                let mut m = Mat::zeros(self.d, self.d);
                for (k, (a, b)) in self.pairs().enumerate() {
                    m[(a, b)] = z[v * self.q + k];
                    m[(b, a)] = z[v * self.q + k];
                }
                m
            })
            .collect();
        (xs, z[self.t()])
    }
}

fn log_det_chol(f: Mat) -> Option<(f64, Mat)> {
    let chol = f.cholesky()?;
    let l = chol.l();
    let ld = 2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>();
    ld.is_finite().then_some((ld, l))
}

/// Maximise `t` subject to every block `> 0`, with `P_v <= I` bounding the problem.
/// Any iterate with positive slack is rescaled and handed to the verifier.
/// `back` maps a solution in scaled coordinates to `P = back * X * back'`.
fn barrier(
    states: &[Mat],
    problem: &Problem,
    budget: usize,
    common: bool,
    eps: f64,
    back: Option<&Mat>,
) -> Result<LmiVerdict> {
    let d = problem.dim;
    let coords = Coords {
        d,
        q: d * (d + 1) / 2,
        vars: problem.vars,
    };
    let mut blocks: Vec<Block> = problem
        .constraints
        .iter()
        .map(|c| {
            Block::new(
                vec![
                    Term {
                        var: c.pi,
                        map: None,
                        sign: 1.0,
                    },
                    Term {
                        var: c.pj,
                        map: Some(c.a.clone()),
                        sign: -1.0,
                    },
                ],
                None,
                1.0,
            )
        })
        .collect();
    for v in 0..problem.vars {
        let own = |sign| Term {
            var: v,
            map: None,
            sign,
        };
        blocks.push(Block::new(vec![own(1.0)], None, 1.0));
        blocks.push(Block::new(vec![own(-1.0)], Some(Mat::identity(d, d)), 0.0));
    }
    let nu = (blocks.len() * d) as f64;

    let mut z = vec![0.0; coords.len()];
    for v in 0..problem.vars {
        for (k, (a, b)) in coords.pairs().enumerate() {
            if a == b {
                z[v * coords.q + k] = 0.5;
            }
        }
    }
    let (x0, _) = coords.unpack(&z);
    let lowest = blocks
        .iter()
        .filter(|b| b.t_coef > 0.0)
        .map(|b| linalg::min_sym_eigenvalue(&b.value(&x0, 0.0)))
        .fold(f64::INFINITY, f64::min);
    z[coords.t()] = lowest - 1.0;

    let potential = |z: &[f64], s: f64| -> Option<f64> {
        let (xs, t) = coords.unpack(z);
        let mut phi = -s * t;
        for b in &blocks {
            phi -= log_det_chol(b.value(&xs, t))?.0;
        }
        Some(phi)
    };

    let mut s = 1.0;
    let mut steps = 0;
    while steps < budget {
        for _ in 0..100 {
            let (g, h) = newton_system(&blocks, &coords, &z, s);
            let Some(dz) = solve_spd(h, &g) else { break };
            let decrement: f64 = -g.iter().zip(dz.iter()).map(|(a, b)| a * b).sum::<f64>();
            if decrement < 1e-10 {
                break;
            }
            let phi0 = potential(&z, s).expect("iterate stays interior");
            let mut alpha = 1.0;
            let mut moved = false;
            while alpha > 1e-14 {
                let trial: Vec<f64> = z.iter().zip(dz.iter()).map(|(a, b)| a + alpha * b).collect();
                if potential(&trial, s).is_some_and(|phi| phi <= phi0 - 0.25 * alpha * decrement) {
                    z = trial;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
            steps += 1;
            if z[coords.t()] > 0.0 {
                let (mut xs, _) = coords.unpack(&z);
                if let Some(l) = back {
                    xs.iter_mut().for_each(|x| *x = l * &*x * l.transpose());
                }
                if let Some(cert) = certify(states, &xs, common, eps)? {
                    return Ok(feasible(cert, eps, steps));
                }
            }
            if steps >= budget {
                break;
            }
        }
        // Past this gap no certificate with useful slack remains.
        if nu / s < 1e-11 {
            break;
        }
        s *= 20.0;
    }
    Ok(LmiVerdict::Undetermined {
        iterations: steps,
        residual: (-z[coords.t()]).max(0.0),
    })
}

/// Gradient and Hessian of `-s t - sum log det F_b(z)`.
///
/// With `F = R R'`, the scaled derivative for coordinate `k` is
/// `R^-1 D_k R^-T`, which for a rank-two basis element is a sum of outer
/// products of columns of `W = R^-1 M'`. The Hessian is then a Gram matrix.
fn newton_system(blocks: &[Block], coords: &Coords, z: &[f64], s: f64) -> (Vec<f64>, Mat) {
    let n = coords.len();
    let d = coords.d;
    let (xs, t) = coords.unpack(z);
    let mut g = vec![0.0; n];
    g[coords.t()] = -s;
    let mut h = Mat::zeros(n, n);
    for b in blocks {
        let f = b.value(&xs, t);
        let l = f.cholesky().expect("iterate stays interior").l();
        let linv = l
            .clone()
            .solve_lower_triangular(&Mat::identity(d, d))
            .expect("factor is nonsingular");
        let mut cols: Vec<usize> = b
            .vars
            .iter()
            .flat_map(|&v| (0..coords.q).map(move |k| v * coords.q + k))
            .collect();
        if b.t_coef != 0.0 {
            cols.push(coords.t());
        }
        let mut m = Mat::zeros(d * d, cols.len());
        for term in &b.terms {
            let w = match &term.map {
                Some(map) => &linv * map.transpose(),
                None => linv.clone(),
            };
            let base = b.vars.iter().position(|&v| v == term.var).expect("listed") * coords.q;
            for (k, (a, bb)) in coords.pairs().enumerate() {
                let mut col = m.column_mut(base + k);
                let wa = w.column(a);
                let wb = w.column(bb);
                for j in 0..d {
                    for i in 0..d {
                        let mut e = wa[i] * wb[j];
                        if a != bb {
                            e += wb[i] * wa[j];
                        }
                        col[j * d + i] += term.sign * e;
                    }
                }
            }
        }
        if b.t_coef != 0.0 {
            let u = &linv * linv.transpose() * (-b.t_coef);
            m.column_mut(cols.len() - 1).copy_from_slice(u.as_slice());
        }
        for (c, &gc) in cols.iter().enumerate() {
            let col = m.column(c);
            g[gc] -= (0..d).map(|i| col[i * d + i]).sum::<f64>();
        }
        let local = m.transpose() * &m;
        for (r, &gr) in cols.iter().enumerate() {
            for (c, &gc) in cols.iter().enumerate() {
                h[(gr, gc)] += local[(r, c)];
            }
        }
    }
    (g, h)
}

/// Newton direction `-H^-1 g`, with a small ridge if `H` is numerically singular.
fn solve_spd(h: Mat, g: &[f64]) -> Option<nalgebra::DVector<f64>> {
    let rhs = -nalgebra::DVector::from_column_slice(g);
    let scale = h.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut ridge = 0.0;
    for _ in 0..6 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += ridge;
        }
        if let Some(ch) = hr.cholesky() {
            let dz = ch.solve(&rhs);
            if dz.iter().all(|x| x.is_finite()) {
                return Some(dz);
            }
        }
        ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 100.0 };
    }
    None
}

fn feasible(certificate: LmiCertificate, epsilon: f64, iterations: usize) -> LmiVerdict {
    LmiVerdict::Feasible {
        certificate,
        epsilon,
        iterations,
    }
}
