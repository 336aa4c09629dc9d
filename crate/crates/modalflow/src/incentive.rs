//! Link-incentive optimization: the assignment Jacobian, the linearized
//! profit subproblem psi as a box-and-halfspace-constrained quadratic
//! program, and the two time-scale stochastic approximation loop.

use ndarray::Array2;

use crate::assignment::{
    evaluate_classes, link_cost, ClassIncidence, ClassState, LinkProfitModel, PassengerClass,
    SatisfactionMode,
};
pub use crate::assignment::total_profit;
use crate::equilibrium::{
    msa_solve, norm2, norm2_diff, ClassOutcome, MsaConfig, StepSchedule,
};
use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Box constraint J_min <= J <= J_max on the incentive vector.
#[derive(Debug, Clone, PartialEq)]
pub struct IncentiveBox {
    pub j_min: Vec<f64>,
    pub j_max: Vec<f64>,
}

impl IncentiveBox {
    pub fn uniform(num_links: usize, lo: f64, hi: f64) -> IncentiveBox {
        IncentiveBox { j_min: vec![lo; num_links], j_max: vec![hi; num_links] }
    }

    pub fn num_links(&self) -> usize {
        self.j_min.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.j_min.len() != self.j_max.len() {
            return Err(Error::Domain("incentive box bound lengths differ".into()));
        }
        for (i, (&lo, &hi)) in self.j_min.iter().zip(&self.j_max).enumerate() {
            if lo > hi {
                return Err(Error::Domain(format!(
                    "incentive box on link {}: j_min {lo} > j_max {hi}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((xi, &lo), &hi) in x.iter_mut().zip(&self.j_min).zip(&self.j_max) {
            *xi = xi.clamp(lo, hi);
        }
    }

    /// Largest violation of the bounds, 0 when inside.
    pub fn violation(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.j_min.iter().zip(&self.j_max))
            .map(|(&xi, (&lo, &hi))| (lo - xi).max(xi - hi).max(0.0))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpConfig {
    pub max_qp_iters: usize,
    /// Tolerance on the projected-gradient norm.
    pub qp_tol: f64,
}

impl Default for QpConfig {
    fn default() -> Self {
        QpConfig { max_qp_iters: 200, qp_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoTimescaleConfig {
    pub alpha: StepSchedule,
    pub beta: StepSchedule,
    pub eps_flow: f64,
    pub eps_incentive: f64,
    pub max_iters: usize,
    pub qp: QpConfig,
    pub threads: usize,
}

impl TwoTimescaleConfig {
    pub fn from_scenario(s: &Scenario) -> TwoTimescaleConfig {
        TwoTimescaleConfig {
            alpha: s.solver.alpha,
            beta: s.solver.beta,
            eps_flow: s.solver.eps_flow,
            eps_incentive: s.solver.eps_incentive,
            max_iters: s.solver.max_iters,
            qp: QpConfig::default(),
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.alpha.validate("alpha schedule")?;
        self.beta.validate("beta schedule")?;
        // beta_k / alpha_k -> 0 is what separates the two time scales.
        if self.beta.r <= self.alpha.r {
            return Err(Error::Domain(format!(
                "two time scales need beta exponent r={} > alpha exponent r={}",
                self.beta.r, self.alpha.r
            )));
        }
        if self.eps_flow <= 0.0 || self.eps_incentive <= 0.0 {
            return Err(Error::Domain("tolerances must be > 0".into()));
        }
        Ok(())
    }
}

/// One row of the optimization trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    /// ||g(C(f_k)+J_k) - f_k||_2
    pub delta_f: f64,
    /// ||psi(f_k, J_k) - J_k||_2
    pub delta_j: f64,
    /// f_k^T (pi(f_k) + J_k)
    pub profit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncentiveResult {
    pub j_star: Vec<f64>,
    pub f_star: Vec<f64>,
    /// f*^T (pi(f*) + J*)
    pub profit: f64,
    /// Profit of the no-incentive equilibrium from the warm-up phase.
    pub no_incentive_profit: f64,
    /// No-incentive equilibrium flow from the warm-up phase.
    pub f_phi: Vec<f64>,
    pub per_class: Vec<ClassOutcome>,
    pub trace: Vec<TraceRow>,
    /// max over all class route columns of (B^T J*)_m, positive part.
    pub constraint_residual: f64,
    pub box_violation: f64,
    pub iterations: usize,
    pub warmup_iterations: usize,
    pub converged: bool,
    /// Set when an inner MSA solve hit its cap and the loop continued with
    /// the best iterate.
    pub degraded: bool,
    /// min over iterations of q(psi) - q(projection(J_k)); the subproblem
    /// never returns a point worse than the current incentive.
    pub min_ascent_gain: f64,
}

impl IncentiveResult {
    /// Optimization trace as CSV (iteration, delta_f, delta_j, profit).
    pub fn write_trace_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,delta_f,delta_j,profit")?;
        for (k, row) in self.trace.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                k + 1,
                crate::report::sig6(row.delta_f),
                crate::report::sig6(row.delta_j),
                crate::report::sig6(row.profit)
            )?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Assignment Jacobian

/// M x M weight matrix of one class: the Jacobian of its route flows with
/// respect to link costs is B W B^T with
/// W = -beta [ d (diag(p) - p p^T) + D'(s) p (dS/dv)^T ].
fn class_weight_matrix(state: &ClassState, class: &PassengerClass) -> Array2<f64> {
    let m = state.probs.len();
    let d = state.demand;
    let dprime = class.demand_curve.derivative(state.satisfaction);
    let ds: Vec<f64> = match class.satisfaction_mode {
        SatisfactionMode::ScaledMax => {
            let mut v = vec![0.0; m];
            v[crate::assignment::argmax_lowest(&state.utilities)] = 1.0 / class.sigma;
            v
        }
        SatisfactionMode::LogSum => state.probs.iter().map(|&p| p / class.sigma).collect(),
    };
    let mut w = Array2::zeros((m, m));
    for a in 0..m {
        for b in 0..m {
            let logit = if a == b { state.probs[a] } else { 0.0 } - state.probs[a] * state.probs[b];
            w[[a, b]] = -class.beta * (d * logit + dprime * state.probs[a] * ds[b]);
        }
    }
    w
}

/// Analytic Jacobian of the traffic assignment map g at link costs `c`,
/// summed over classes (and thereby over OD pairs).
pub fn assignment_jacobian(c: &[f64], classes: &[PassengerClass]) -> Result<Array2<f64>> {
    let states = evaluate_classes(c, classes, 1)?;
    let n = c.len();
    let mut grad = Array2::zeros((n, n));
    for (class, state) in classes.iter().zip(&states) {
        let w = class_weight_matrix(state, class);
        let cols = &class.incidence.columns;
        for (m1, col1) in cols.iter().enumerate() {
            for (m2, col2) in cols.iter().enumerate() {
                let coeff = w[[m1, m2]];
                if coeff == 0.0 {
                    continue;
                }
                for &(l1, w1) in col1 {
                    for &(l2, w2) in col2 {
                        grad[[l1, l2]] += coeff * w1 * w2;
                    }
                }
            }
        }
    }
    Ok(grad)
}

/// Low-rank form of the Jacobian: sum_k B_k W_k B_k^T, kept factored so the
/// QP can run matrix-free on large networks.
struct JacobianFactors<'a> {
    terms: Vec<(&'a ClassIncidence, Array2<f64>)>,
    num_links: usize,
}

impl<'a> JacobianFactors<'a> {
    fn from_states(classes: &'a [PassengerClass], states: &[ClassState], num_links: usize) -> Self {
        let terms = classes
            .iter()
            .zip(states)
            .map(|(k, st)| (&k.incidence, class_weight_matrix(st, k)))
            .collect();
        JacobianFactors { terms, num_links }
    }
}

/// Linear operator interface over the Jacobian so the QP works both with the
/// dense matrix and with the factored form.
trait LinOp {
    fn dim(&self) -> usize;
    /// out = G x
    fn apply(&self, x: &[f64], out: &mut [f64]);
    /// out = G^T x
    fn apply_t(&self, x: &[f64], out: &mut [f64]);
}

impl LinOp for Array2<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn apply_t(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
    }
}

impl LinOp for JacobianFactors<'_> {
    fn dim(&self) -> usize {
        self.num_links
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (inc, w) in &self.terms {
            let y = inc.transpose_apply(x);
            let m = y.len();
            let mut z = vec![0.0; m];
            for a in 0..m {
                let mut acc = 0.0;
                for b in 0..m {
                    acc += w[[a, b]] * y[b];
                }
                z[a] = acc;
            }
            inc.accumulate_apply(&z, out);
        }
    }

    fn apply_t(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (inc, w) in &self.terms {
            let y = inc.transpose_apply(x);
            let m = y.len();
            let mut z = vec![0.0; m];
            for a in 0..m {
                let mut acc = 0.0;
                for b in 0..m {
                    acc += w[[b, a]] * y[b];
                }
                z[a] = acc;
            }
            inc.accumulate_apply(&z, out);
        }
    }
}

// ---------------------------------------------------------------------------
// Quadratic program: maximize x^T H x + b^T x over box and halfspaces

trait QuadraticProgram {
    fn dim(&self) -> usize;
    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// out = (H + H^T) x
    fn curvature_apply(&self, x: &[f64], out: &mut [f64]);
}

/// Raw dense quadratic x^T H x + b^T x.
struct DenseQp<'a> {
    h: &'a Array2<f64>,
    b: &'a [f64],
}

impl QuadraticProgram for DenseQp<'_> {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..x.len() {
            let mut row = 0.0;
            for j in 0..x.len() {
                row += self.h[[i, j]] * x[j];
            }
            acc += x[i] * row + self.b[i] * x[i];
        }
        acc
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.curvature_apply(x, out);
        for (o, &bi) in out.iter_mut().zip(self.b) {
            *o += bi;
        }
    }

    fn curvature_apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            let mut acc = 0.0;
            for j in 0..x.len() {
                acc += (self.h[[i, j]] + self.h[[j, i]]) * x[j];
            }
            out[i] = acc;
        }
    }
}

/// The linearized profit objective of the psi subproblem, built from the
/// Jacobian operator G, the diagonal profit slope Q and intercept pi0:
///
///   q(x) = (Gx)^T Q (Gx) + (Gx)^T x + b~^T x,
///   b~   = G^T (2 Q u + pi0) + u,   u = f - G J.
///
/// This is the profit of the predicted flow f + G(x - J) as a function of x,
/// up to a constant.
struct PsiQp<'a, G: LinOp> {
    g: &'a G,
    q_diag: &'a [f64],
    b_lin: Vec<f64>,
}

impl<'a, G: LinOp> PsiQp<'a, G> {
    fn new(g: &'a G, profit: &'a LinkProfitModel, f: &[f64], j: &[f64]) -> Self {
        let n = g.dim();
        let mut gj = vec![0.0; n];
        g.apply(j, &mut gj);
        let u: Vec<f64> = f.iter().zip(&gj).map(|(a, b)| a - b).collect();
        let w: Vec<f64> = u
            .iter()
            .zip(&profit.q_diag)
            .zip(&profit.intercept)
            .map(|((&ui, &q), &p0)| 2.0 * q * ui + p0)
            .collect();
        let mut b_lin = vec![0.0; n];
        g.apply_t(&w, &mut b_lin);
        for (bi, &ui) in b_lin.iter_mut().zip(&u) {
            *bi += ui;
        }
        PsiQp { g, q_diag: &profit.q_diag, b_lin }
    }
}

impl<G: LinOp> QuadraticProgram for PsiQp<'_, G> {
    fn dim(&self) -> usize {
        self.g.dim()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut gx = vec![0.0; n];
        self.g.apply(x, &mut gx);
        let mut acc = 0.0;
        for i in 0..n {
            acc += gx[i] * self.q_diag[i] * gx[i] + gx[i] * x[i] + self.b_lin[i] * x[i];
        }
        acc
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.curvature_apply(x, out);
        for (o, &bi) in out.iter_mut().zip(&self.b_lin) {
            *o += bi;
        }
    }

    fn curvature_apply(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        let mut gx = vec![0.0; n];
        self.g.apply(x, &mut gx);
        let qgx: Vec<f64> = gx.iter().zip(self.q_diag).map(|(a, q)| 2.0 * q * a).collect();
        self.g.apply_t(&qgx, out);
        let mut gtx = vec![0.0; n];
        self.g.apply_t(x, &mut gtx);
        for i in 0..n {
            out[i] += gtx[i] + gx[i];
        }
    }
}

/// One passenger-friendly constraint a^T x <= 0 (a column of some class's B).
#[derive(Debug, Clone, PartialEq)]
struct Halfspace {
    coeffs: Vec<(usize, f64)>,
    sq_norm: f64,
}

impl Halfspace {
    fn from_column(col: &[(usize, f64)]) -> Halfspace {
        let sq_norm = col.iter().map(|&(_, w)| w * w).sum();
        Halfspace { coeffs: col.to_vec(), sq_norm }
    }

    fn dot(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(l, w)| w * x[l]).sum()
    }
}

/// Route columns of every class, deduplicated, as halfspace normals.
fn route_halfspaces(classes: &[PassengerClass]) -> Vec<Halfspace> {
    let mut seen: Vec<&[(usize, f64)]> = Vec::new();
    let mut out = Vec::new();
    for class in classes {
        for col in &class.incidence.columns {
            if col.is_empty() || seen.iter().any(|c| *c == col.as_slice()) {
                continue;
            }
            seen.push(col);
            out.push(Halfspace::from_column(col));
        }
    }
    out
}

const DYKSTRA_MAX_SWEEPS: usize = 100;
const DYKSTRA_TOL: f64 = 1e-12;

/// Dykstra's alternating projection onto the intersection of the box and the
/// halfspaces. The final box clamp keeps the output exactly inside the
/// bounds; remaining halfspace violations are bounded by the sweep tolerance.
/// Halfspace corrections live on the support of their normals, so a sweep
/// costs O(L + total support size).
fn project(x0: &[f64], bounds: &IncentiveBox, halfspaces: &[Halfspace]) -> Vec<f64> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut box_corr = vec![0.0; n];
    let mut hs_corr: Vec<Vec<f64>> =
        halfspaces.iter().map(|h| vec![0.0; h.coeffs.len()]).collect();
    for _ in 0..DYKSTRA_MAX_SWEEPS {
        let mut shift: f64 = 0.0;
        for i in 0..n {
            let z = x[i] - box_corr[i];
            let xi = z.clamp(bounds.j_min[i], bounds.j_max[i]);
            box_corr[i] = xi - z;
            shift = shift.max((xi - x[i]).abs());
            x[i] = xi;
        }
        for (hs, corr) in halfspaces.iter().zip(hs_corr.iter_mut()) {
            let mut dot = 0.0;
            for (t, &(l, w)) in hs.coeffs.iter().enumerate() {
                dot += w * (x[l] - corr[t]);
            }
            let scale = if dot > 0.0 { dot / hs.sq_norm } else { 0.0 };
            for (t, &(l, w)) in hs.coeffs.iter().enumerate() {
                let z = x[l] - corr[t];
                let xi = z - scale * w;
                corr[t] = xi - z;
                shift = shift.max((xi - x[l]).abs());
                x[l] = xi;
            }
        }
        if shift < DYKSTRA_TOL {
            break;
        }
    }
    bounds.clamp(&mut x);
    x
}

#[derive(Debug, Clone)]
struct QpSolution {
    x: Vec<f64>,
    objective: f64,
    start_objective: f64,
}

/// Projected gradient ascent with Nesterov momentum, a step from a
/// power-iteration estimate of the curvature norm, and deterministic
/// feasible probes (projections of `anchor`, 0 and the box corners).
/// `anchor` is the reference point the solution must not fall below;
/// `start` may carry a warm start from a previous related solve.
fn maximize<P: QuadraticProgram>(
    qp: &P,
    bounds: &IncentiveBox,
    halfspaces: &[Halfspace],
    anchor: &[f64],
    start: &[f64],
    config: &QpConfig,
) -> QpSolution {
    let n = qp.dim();
    let anchor_point = project(anchor, bounds, halfspaces);
    let start_objective = qp.objective(&anchor_point);
    let mut x = project(start, bounds, halfspaces);

    // Lipschitz constant of the gradient = ||H + H^T||_2, via power iteration.
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    let mut buf = vec![0.0; n];
    for _ in 0..30 {
        qp.curvature_apply(&v, &mut buf);
        let norm = norm2(&buf);
        if norm < 1e-300 {
            lambda = 0.0;
            break;
        }
        lambda = norm;
        for (vi, &bi) in v.iter_mut().zip(&buf) {
            *vi = bi / norm;
        }
    }
    let step = if lambda > 1e-12 {
        0.9 / lambda
    } else {
        let mut g0 = vec![0.0; n];
        qp.gradient(&x, &mut g0);
        let width = bounds
            .j_max
            .iter()
            .zip(&bounds.j_min)
            .map(|(a, b)| a - b)
            .fold(0.0, f64::max);
        (width + 1.0) / (norm2(&g0) + 1.0)
    };

    let mut best = anchor_point.clone();
    let mut best_obj = start_objective;
    let mut grad = vec![0.0; n];
    // Nesterov momentum with restart on non-ascent; the flat and nearly
    // flat directions of the semidefinite Hessian need the acceleration.
    let mut prev = x.clone();
    let mut momentum = 0.0f64;
    let mut obj_prev = qp.objective(&x);
    if obj_prev > best_obj {
        best_obj = obj_prev;
        best.copy_from_slice(&x);
    }
    for _ in 0..config.max_qp_iters {
        let momentum_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let gamma = (momentum - 1.0) / momentum_next;
        let lookahead: Vec<f64> =
            x.iter().zip(&prev).map(|(&xi, &pi)| xi + gamma * (xi - pi)).collect();
        qp.gradient(&lookahead, &mut grad);
        let proposal: Vec<f64> =
            lookahead.iter().zip(&grad).map(|(&xi, &gi)| xi + step * gi).collect();
        let next = project(&proposal, bounds, halfspaces);
        let pg_norm = norm2_diff(&next, &x) / step;
        let obj = qp.objective(&next);
        if obj > best_obj {
            best_obj = obj;
            best.copy_from_slice(&next);
        }
        if obj < obj_prev {
            momentum = 0.0; // restart on overshoot
        } else {
            momentum = momentum_next;
        }
        prev = x;
        x = next;
        obj_prev = obj;
        if pg_norm <= config.qp_tol {
            break;
        }
    }

    // Deterministic probes; the polytope contains 0 whenever the box does.
    let zeros = vec![0.0; n];
    for probe in [zeros.as_slice(), bounds.j_min.as_slice(), bounds.j_max.as_slice()] {
        let candidate = project(probe, bounds, halfspaces);
        let obj = qp.objective(&candidate);
        if obj > best_obj {
            best_obj = obj;
            best = candidate;
        }
    }

    QpSolution { x: best, objective: best_obj, start_objective }
}

/// Maximize x^T H x + b^T x over the box intersected with `normals`^T x <= 0.
/// Dense entry point for small problems and oracle tests.
pub fn maximize_quadratic(
    h: &Array2<f64>,
    b: &[f64],
    bounds: &IncentiveBox,
    normals: &[Vec<f64>],
    start: &[f64],
    config: &QpConfig,
) -> Result<Vec<f64>> {
    bounds.validate()?;
    let n = b.len();
    if h.nrows() != n || h.ncols() != n || bounds.num_links() != n || start.len() != n {
        return Err(Error::Domain("quadratic program dimension mismatch".into()));
    }
    let halfspaces: Vec<Halfspace> = normals
        .iter()
        .map(|row| {
            let col: Vec<(usize, f64)> = row
                .iter()
                .enumerate()
                .filter_map(|(i, &w)| (w != 0.0).then_some((i, w)))
                .collect();
            Halfspace::from_column(&col)
        })
        .collect();
    let qp = DenseQp { h, b };
    Ok(maximize(&qp, bounds, &halfspaces, start, start, config).x)
}

/// The psi subproblem: the feasible incentive maximizing the linearized
/// platform profit around the current flow and incentive. Requires the
/// linear profit model; `grad` is the assignment Jacobian at C(f)+J.
pub fn psi_qp(
    f: &[f64],
    j: &[f64],
    grad: &Array2<f64>,
    profit_model: &LinkProfitModel,
    bounds: &IncentiveBox,
    classes: &[PassengerClass],
    config: &QpConfig,
) -> Result<Vec<f64>> {
    bounds.validate()?;
    let n = f.len();
    if j.len() != n
        || grad.nrows() != n
        || grad.ncols() != n
        || profit_model.num_links() != n
        || bounds.num_links() != n
    {
        return Err(Error::Domain("psi subproblem dimension mismatch".into()));
    }
    let halfspaces = route_halfspaces(classes);
    let qp = PsiQp::new(grad, profit_model, f, j);
    Ok(maximize(&qp, bounds, &halfspaces, j, j, config).x)
}

// ---------------------------------------------------------------------------
// Two time-scale stochastic approximation (Algorithm 1)

/// Run the coupled flow/incentive iteration to the optimal incentive J*.
///
/// Phase 1 computes the no-incentive equilibrium (the disagreement baseline);
/// phase 2 averages the flow on the fast schedule alpha and the incentive on
/// the slow schedule beta, with psi recomputed from a fresh Jacobian at every
/// iteration.
pub fn two_timescale(scenario: &Scenario, config: &TwoTimescaleConfig) -> Result<IncentiveResult> {
    config.validate()?;
    scenario.incentive_box.validate()?;
    let n = scenario.num_links();
    let zeros = vec![0.0; n];
    let msa_config = MsaConfig {
        alpha: config.alpha,
        eps_flow: config.eps_flow,
        max_iters: config.max_iters,
        threads: config.threads,
    };

    let mut degraded = false;
    let warmup = match msa_solve(scenario, &zeros, &msa_config, None) {
        Ok(res) => res,
        Err(Error::MsaNotConverged(res)) => {
            degraded = true;
            *res
        }
        Err(e) => return Err(e),
    };
    let warmup_iterations = warmup.iterations;
    let f_phi = warmup.flows.clone();
    let no_incentive_profit = total_profit(&f_phi, &zeros, &scenario.profit_model);

    let halfspaces = route_halfspaces(&scenario.classes);
    let mut f = warmup.flows;
    let mut j = zeros.clone();
    let mut trace = Vec::new();
    let mut min_ascent_gain = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=config.max_iters {
        iterations = k;
        let c = link_cost(&f, &j, &scenario.cost_model)?;
        let states = evaluate_classes(&c, &scenario.classes, config.threads)?;
        let mut g = vec![0.0; n];
        for (class, state) in scenario.classes.iter().zip(&states) {
            class.incidence.accumulate_apply(&state.route_flows, &mut g);
        }
        let delta_f = norm2_diff(&g, &f);

        let factors = JacobianFactors::from_states(&scenario.classes, &states, n);
        let qp = PsiQp::new(&factors, &scenario.profit_model, &f, &j);
        let solution = maximize(&qp, &scenario.incentive_box, &halfspaces, &j, &j, &config.qp);
        let psi = solution.x;
        min_ascent_gain = min_ascent_gain.min(solution.objective - solution.start_objective);
        let delta_j = norm2_diff(&psi, &j);

        trace.push(TraceRow {
            delta_f,
            delta_j,
            profit: total_profit(&f, &j, &scenario.profit_model),
        });

        if delta_f < config.eps_flow && delta_j < config.eps_incentive {
            converged = true;
            break;
        }

        let alpha = config.alpha.value(k);
        let beta = config.beta.value(k);
        for (fi, gi) in f.iter_mut().zip(&g) {
            *fi = (1.0 - alpha) * *fi + alpha * gi;
        }
        for (ji, pi) in j.iter_mut().zip(&psi) {
            *ji = (1.0 - beta) * *ji + beta * pi;
        }
        scenario.incentive_box.clamp(&mut j);
        if f.iter().chain(j.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "non-finite iterate at two time-scale iteration {k}"
            )));
        }
    }

    // Re-solve the equilibrium at the final incentive to the flow tolerance.
    let resolved = match msa_solve(scenario, &j, &msa_config, Some(&f)) {
        Ok(res) => res,
        Err(Error::MsaNotConverged(res)) => {
            degraded = true;
            *res
        }
        Err(e) => return Err(e),
    };
    let f_star = resolved.flows;
    let profit = total_profit(&f_star, &j, &scenario.profit_model);
    let constraint_residual = halfspaces
        .iter()
        .map(|hs| hs.dot(&j).max(0.0))
        .fold(0.0, f64::max);
    let box_violation = scenario.incentive_box.violation(&j);

    let result = IncentiveResult {
        j_star: j,
        f_star,
        profit,
        no_incentive_profit,
        f_phi,
        per_class: resolved.per_class,
        trace,
        constraint_residual,
        box_violation,
        iterations,
        warmup_iterations,
        converged,
        degraded,
        min_ascent_gain,
    };
    if converged {
        debug_assert!(
            !(scenario.incentive_box.j_min.iter().all(|&lo| lo <= 0.0)
                && scenario.incentive_box.j_max.iter().all(|&hi| hi >= 0.0))
                || result.profit >= result.no_incentive_profit - 1e-6,
            "profit decreased although 0 is a feasible incentive"
        );
        Ok(result)
    } else {
        Err(Error::TwoTimescaleNotConverged(Box::new(result)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{assign, DemandCurve, SatisfactionMode};
    use crate::generators::chengdu_fixture;
    use crate::testdata;
    use ndarray::arr2;

    fn logsum_fixture() -> Scenario {
        let mut s = chengdu_fixture();
        for class in &mut s.classes {
            class.satisfaction_mode = SatisfactionMode::LogSum;
        }
        s
    }

    /// Central finite differences of assign() at cost c.
    fn fd_jacobian(c: &[f64], classes: &[crate::assignment::PassengerClass], h: f64) -> Array2<f64> {
        let n = c.len();
        let mut out = Array2::zeros((n, n));
        for col in 0..n {
            let mut hi = c.to_vec();
            let mut lo = c.to_vec();
            hi[col] += h;
            lo[col] -= h;
            let fhi = assign(&hi, classes, 1).unwrap();
            let flo = assign(&lo, classes, 1).unwrap();
            for row in 0..n {
                out[[row, col]] = (fhi[row] - flo[row]) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn jacobian_matches_finite_differences_in_logsum_mode() {
        let s = logsum_fixture();
        let c = testdata::C_PHI.to_vec();
        let analytic = assignment_jacobian(&c, &s.classes).unwrap();
        let numeric = fd_jacobian(&c, &s.classes, 1e-5);
        let mut worst = 0.0f64;
        for (a, b) in analytic.iter().zip(numeric.iter()) {
            let rel = (a - b).abs() / b.abs().max(1e-9);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-5, "max relative error {worst}");
    }

    #[test]
    fn jacobian_is_zero_without_demand() {
        let mut s = chengdu_fixture();
        for class in &mut s.classes {
            class.demand_curve = DemandCurve::Tanh { a: 0.0, b: 1.0 };
        }
        let grad = assignment_jacobian(&testdata::C_PHI.to_vec(), &s.classes).unwrap();
        assert!(grad.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn jacobian_single_route_collapses_to_demand_derivative() {
        // One class, one route: diag(p) - p p^T vanishes, leaving
        // -beta D'(s)/sigma on the route's own links.
        let s = chengdu_fixture();
        let mut class = s.classes[0].clone();
        class.route_ids = vec![crate::network::RouteId(9)];
        class.route_specific_cost = vec![0.0];
        class.incidence = crate::assignment::ClassIncidence {
            columns: vec![s.classes[0].incidence.columns[2].clone()],
            num_links: 12,
        };
        let c = testdata::C_PHI.to_vec();
        let grad = assignment_jacobian(&c, &[class.clone()]).unwrap();
        let v = crate::assignment::route_utility(&c, &class).unwrap();
        let s_level = v[0] / class.sigma;
        let dprime = class.demand_curve.derivative(s_level);
        let coeff = -class.beta * dprime / class.sigma;
        for l1 in 0..12 {
            for l2 in 0..12 {
                let on1 = [9, 10, 11].contains(&l1) as i32 as f64;
                let on2 = [9, 10, 11].contains(&l2) as i32 as f64;
                let expect = coeff * on1 * on2;
                assert!((grad[[l1, l2]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_and_factored_psi_agree_on_the_fixture() {
        let s = chengdu_fixture();
        let zeros = vec![0.0; 12];
        let c = crate::assignment::link_cost(&testdata::F_PHI, &zeros, &s.cost_model).unwrap();
        let states = evaluate_classes(&c, &s.classes, 1).unwrap();
        let factors = JacobianFactors::from_states(&s.classes, &states, 12);
        let dense = assignment_jacobian(&c, &s.classes).unwrap();

        let f = testdata::F_PHI.to_vec();
        let config = QpConfig::default();
        let from_dense =
            psi_qp(&f, &zeros, &dense, &s.profit_model, &s.incentive_box, &s.classes, &config)
                .unwrap();
        let halfspaces = route_halfspaces(&s.classes);
        let qp = PsiQp::new(&factors, &s.profit_model, &f, &zeros);
        let from_factors = maximize(&qp, &s.incentive_box, &halfspaces, &zeros, &zeros, &config).x;
        for (a, b) in from_dense.iter().zip(&from_factors) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn qp_unconstrained_concave_maximum_is_zero() {
        let h = arr2(&[[-1.0, 0.0], [0.0, -2.0]]);
        let b = vec![0.0, 0.0];
        let bounds = IncentiveBox::uniform(2, -3.0, 3.0);
        let x = maximize_quadratic(&h, &b, &bounds, &[], &[1.0, -2.0], &QpConfig::default())
            .unwrap();
        assert!(x.iter().all(|&v| v.abs() < 1e-8), "{x:?}");
    }

    fn grid_best(
        h: &Array2<f64>,
        b: &[f64],
        bounds: &IncentiveBox,
        normals: &[Vec<f64>],
        step: f64,
    ) -> f64 {
        let obj = |x: &[f64]| {
            let mut acc = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    acc += x[i] * h[[i, j]] * x[j];
                }
                acc += b[i] * x[i];
            }
            acc
        };
        let mut best = f64::NEG_INFINITY;
        let n0 = ((bounds.j_max[0] - bounds.j_min[0]) / step).round() as usize;
        let n1 = ((bounds.j_max[1] - bounds.j_min[1]) / step).round() as usize;
        for i in 0..=n0 {
            let x0 = bounds.j_min[0] + step * i as f64;
            for j in 0..=n1 {
                let x1 = bounds.j_min[1] + step * j as f64;
                if normals.iter().any(|a| a[0] * x0 + a[1] * x1 > 1e-12) {
                    continue;
                }
                best = best.max(obj(&[x0, x1]));
            }
        }
        best
    }

    #[test]
    fn qp_toy_matches_grid_oracle() {
        // maximize -|x|^2 + x1 + x2 subject to x1 + x2 <= 0 in [-3,3]^2:
        // the halfspace boundary is optimal at the origin.
        let h = arr2(&[[-1.0, 0.0], [0.0, -1.0]]);
        let b = vec![1.0, 1.0];
        let bounds = IncentiveBox::uniform(2, -3.0, 3.0);
        let normals = vec![vec![1.0, 1.0]];
        let config = QpConfig { max_qp_iters: 2000, qp_tol: 1e-12 };
        let x = maximize_quadratic(&h, &b, &bounds, &normals, &[2.0, -1.0], &config).unwrap();
        assert!(x[0].abs() < 1e-6 && x[1].abs() < 1e-6, "{x:?}");

        let reference = grid_best(&h, &b, &bounds, &normals, 1e-3);
        let ours = x[0] * h[[0, 0]] * x[0] + x[1] * h[[1, 1]] * x[1] + b[0] * x[0] + b[1] * x[1];
        assert!(ours >= reference - 2e-3, "{ours} vs grid {reference}");
    }

    #[test]
    fn qp_handles_indefinite_quadratics() {
        // Saddle: the maximum over the polytope sits on a box corner.
        let h = arr2(&[[0.5, 0.0], [0.0, -0.5]]);
        let b = vec![0.3, 0.5];
        let bounds = IncentiveBox::uniform(2, -1.0, 2.0);
        let normals = vec![vec![1.0, 1.0], vec![1.0, 0.4]];
        let config = QpConfig { max_qp_iters: 2000, qp_tol: 1e-12 };
        let x = maximize_quadratic(&h, &b, &bounds, &normals, &[0.0, 0.0], &config).unwrap();
        let obj = |x: &[f64]| 0.5 * x[0] * x[0] - 0.5 * x[1] * x[1] + 0.3 * x[0] + 0.5 * x[1];
        let reference = grid_best(&h, &b, &bounds, &normals, 1e-3);
        assert!(obj(&x) >= reference - 2e-3, "{} vs grid {reference}", obj(&x));
        for a in &normals {
            assert!(a[0] * x[0] + a[1] * x[1] <= 1e-9);
        }
    }

    #[test]
    fn qp_respects_active_box_faces() {
        // Gradient pushes past the box; solution must stick to the face.
        let h = arr2(&[[-0.25, 0.0], [0.0, -0.25]]);
        let b = vec![4.0, -4.0];
        let bounds = IncentiveBox::uniform(2, -2.0, 2.0);
        let config = QpConfig { max_qp_iters: 1000, qp_tol: 1e-12 };
        let x = maximize_quadratic(&h, &b, &bounds, &[], &[0.0, 0.0], &config).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] + 2.0).abs() < 1e-9, "{x:?}");
    }

    #[test]
    fn psi_is_deterministic() {
        let s = chengdu_fixture();
        let zeros = vec![0.0; 12];
        let c = crate::assignment::link_cost(&testdata::F_PHI, &zeros, &s.cost_model).unwrap();
        let grad = assignment_jacobian(&c, &s.classes).unwrap();
        let config = QpConfig::default();
        let f = testdata::F_PHI.to_vec();
        let one =
            psi_qp(&f, &zeros, &grad, &s.profit_model, &s.incentive_box, &s.classes, &config)
                .unwrap();
        let two =
            psi_qp(&f, &zeros, &grad, &s.profit_model, &s.incentive_box, &s.classes, &config)
                .unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn psi_rejects_infeasible_box() {
        let s = chengdu_fixture();
        let grad = Array2::zeros((12, 12));
        let bad = IncentiveBox { j_min: vec![1.0; 12], j_max: vec![-1.0; 12] };
        let err = psi_qp(
            &testdata::F_PHI,
            &vec![0.0; 12],
            &grad,
            &s.profit_model,
            &bad,
            &s.classes,
            &QpConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn pinned_box_degenerates_to_plain_equilibrium() {
        let mut s = chengdu_fixture();
        s.incentive_box = IncentiveBox::uniform(12, 0.0, 0.0);
        let config = TwoTimescaleConfig::from_scenario(&s);
        let result = two_timescale(&s, &config).unwrap();
        assert!(result.j_star.iter().all(|&j| j == 0.0));
        assert!((result.profit - testdata::TOTAL_PROFIT_PHI).abs() < 0.1, "{}", result.profit);
        assert!((result.profit - result.no_incentive_profit).abs() < 1e-9);
    }

    #[test]
    fn timescale_config_requires_separated_exponents() {
        let s = chengdu_fixture();
        let mut config = TwoTimescaleConfig::from_scenario(&s);
        config.beta.r = config.alpha.r;
        assert!(config.validate().is_err());
    }

    #[test]
    fn total_profit_of_published_incentive_column() {
        let s = chengdu_fixture();
        let profit =
            total_profit(&testdata::F_STAR, &testdata::J_STAR, &s.profit_model);
        assert!((profit - testdata::TOTAL_PROFIT_STAR).abs() < 0.5, "{profit}");
    }
}
