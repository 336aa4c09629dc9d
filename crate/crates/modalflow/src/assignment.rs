//! Link costs, route utilities, logit choice, satisfaction, elastic demand,
//! and the multi-class traffic assignment map g.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::RouteId;

/// Affine congestion-dependent link cost:
/// c_i = price_i + J_i + gamma * (slope_i * f_i + time_i).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkCostModel {
    pub price: Vec<f64>,
    pub time_const: Vec<f64>,
    pub congestion_slope: Vec<f64>,
    /// Currency per minute.
    pub gamma: f64,
}

impl LinkCostModel {
    pub fn num_links(&self) -> usize {
        self.price.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.price.len();
        if self.time_const.len() != n || self.congestion_slope.len() != n {
            return Err(Error::Domain("cost model vectors must share one length".into()));
        }
        if self.gamma < 0.0 {
            return Err(Error::Domain(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        for (i, (&p, &s)) in self.price.iter().zip(&self.congestion_slope).enumerate() {
            if p < 0.0 {
                return Err(Error::Domain(format!("link {} price {p} is negative", i + 1)));
            }
            if s < 0.0 {
                return Err(Error::Domain(format!(
                    "link {} congestion slope {s} is negative",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Per-link cost vector under flow `f` and incentive `j`.
pub fn link_cost(f: &[f64], j: &[f64], model: &LinkCostModel) -> Result<Vec<f64>> {
    let n = model.num_links();
    if f.len() != n || j.len() != n {
        return Err(Error::Domain(format!(
            "link_cost expects vectors of length {n}, got f: {}, j: {}",
            f.len(),
            j.len()
        )));
    }
    if let Some(bad) = f.iter().find(|&&x| x < 0.0) {
        return Err(Error::Domain(format!("negative flow {bad}")));
    }
    Ok((0..n)
        .map(|i| {
            model.price[i]
                + j[i]
                + model.gamma * (model.congestion_slope[i] * f[i] + model.time_const[i])
        })
        .collect())
}

/// Linear per-passenger link profit pi(f) = Q f + pi0, Q diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkProfitModel {
    pub q_diag: Vec<f64>,
    pub intercept: Vec<f64>,
}

impl LinkProfitModel {
    pub fn num_links(&self) -> usize {
        self.q_diag.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_diag.len() != self.intercept.len() {
            return Err(Error::Domain("profit model vectors must share one length".into()));
        }
        Ok(())
    }

    /// Per-link profit vector pi(f).
    pub fn per_link(&self, f: &[f64]) -> Vec<f64> {
        f.iter()
            .zip(&self.q_diag)
            .zip(&self.intercept)
            .map(|((&fl, &q), &p0)| q * fl + p0)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SatisfactionMode {
    /// s = max_m v_m / sigma; argmax ties break to the lowest route index.
    ScaledMax,
    /// s = ln(sum_m exp v_m) / sigma. The Euler-Mascheroni constant of the
    /// Gumbel expectation is omitted; it is an additive constant absorbed by
    /// the utility constant v0 and irrelevant to derivatives.
    LogSum,
}

/// Monotone non-decreasing elastic demand curve.
#[derive(Debug, Clone, PartialEq)]
pub enum DemandCurve {
    /// d = a * tanh(b * s), clamped at 0 for negative s.
    Tanh { a: f64, b: f64 },
    /// Piecewise-linear monotone table of (s, d) knots; constant outside.
    Table(Vec<(f64, f64)>),
}

impl DemandCurve {
    pub fn validate(&self) -> Result<()> {
        match self {
            DemandCurve::Tanh { a, b } => {
                if *a < 0.0 {
                    return Err(Error::Domain(format!("demand amplitude a={a} must be >= 0")));
                }
                if *b <= 0.0 {
                    return Err(Error::Domain(format!("demand rate b={b} must be > 0")));
                }
            }
            DemandCurve::Table(points) => {
                if points.is_empty() {
                    return Err(Error::Domain("demand table is empty".into()));
                }
                for w in points.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(Error::Domain("demand table s values must increase".into()));
                    }
                    if w[1].1 < w[0].1 {
                        return Err(Error::Domain("demand table must be non-decreasing".into()));
                    }
                }
                if points.iter().any(|&(_, d)| d < 0.0) {
                    return Err(Error::Domain("demand table values must be >= 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Demand level at satisfaction `s`, never negative.
    pub fn demand(&self, s: f64) -> f64 {
        match self {
            DemandCurve::Tanh { a, b } => (a * (b * s).tanh()).max(0.0),
            DemandCurve::Table(points) => {
                if s <= points[0].0 {
                    return points[0].1;
                }
                if s >= points[points.len() - 1].0 {
                    return points[points.len() - 1].1;
                }
                let i = points.partition_point(|&(x, _)| x <= s);
                let (s0, d0) = points[i - 1];
                let (s1, d1) = points[i];
                d0 + (d1 - d0) * (s - s0) / (s1 - s0)
            }
        }
    }

    /// One-sided derivative of the demand curve at `s`.
    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            DemandCurve::Tanh { a, b } => {
                if a * (b * s).tanh() < 0.0 {
                    return 0.0; // clamped region
                }
                let t = (b * s).tanh();
                a * b * (1.0 - t * t)
            }
            DemandCurve::Table(points) => {
                if s < points[0].0 || s >= points[points.len() - 1].0 {
                    return 0.0;
                }
                let i = points.partition_point(|&(x, _)| x <= s);
                let (s0, d0) = points[i - 1];
                let (s1, d1) = points[i];
                (d1 - d0) / (s1 - s0)
            }
        }
    }
}

/// One route's link traversal probabilities as a sparse column of B.
pub type SparseColumn = Vec<(usize, f64)>;

/// Compiled per-class view of the incidence matrix B^(k): one sparse column
/// per admissible route, in route order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassIncidence {
    pub columns: Vec<SparseColumn>,
    pub num_links: usize,
}

impl ClassIncidence {
    pub fn num_routes(&self) -> usize {
        self.columns.len()
    }

    /// y = B^T x over the class's routes.
    pub fn transpose_apply(&self, x: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .map(|col| col.iter().map(|&(l, w)| w * x[l]).sum())
            .collect()
    }

    /// out += B y.
    pub fn accumulate_apply(&self, y: &[f64], out: &mut [f64]) {
        for (col, &ym) in self.columns.iter().zip(y) {
            if ym == 0.0 {
                continue;
            }
            for &(l, w) in col {
                out[l] += w * ym;
            }
        }
    }
}

/// One behaviourally homogeneous passenger group tied to one OD pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PassengerClass {
    pub name: String,
    /// Utility constant added to every route.
    pub v0: f64,
    /// Cost weight beta >= 0.
    pub beta: f64,
    /// Route-specific cost c_s, one entry per admissible route.
    pub route_specific_cost: Vec<f64>,
    pub satisfaction_mode: SatisfactionMode,
    /// Satisfaction scale sigma > 0.
    pub sigma: f64,
    pub demand_curve: DemandCurve,
    /// Admissible routes (1-based ids into the scenario route list).
    pub route_ids: Vec<RouteId>,
    pub incidence: ClassIncidence,
}

impl PassengerClass {
    pub fn num_routes(&self) -> usize {
        self.route_ids.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.route_ids.is_empty() {
            return Err(Error::Domain(format!("class {} has no admissible routes", self.name)));
        }
        if self.beta < 0.0 {
            return Err(Error::Domain(format!("class {} beta must be >= 0", self.name)));
        }
        if self.sigma <= 0.0 {
            return Err(Error::Domain(format!("class {} sigma must be > 0", self.name)));
        }
        if self.route_specific_cost.len() != self.route_ids.len() {
            return Err(Error::Domain(format!(
                "class {}: route_specific_cost length {} does not match {} routes",
                self.name,
                self.route_specific_cost.len(),
                self.route_ids.len()
            )));
        }
        if self.incidence.num_routes() != self.route_ids.len() {
            return Err(Error::Domain(format!(
                "class {}: incidence has {} columns for {} routes",
                self.name,
                self.incidence.num_routes(),
                self.route_ids.len()
            )));
        }
        self.demand_curve.validate()
    }
}

/// Route utilities v_m = v0 - beta * (B^T c)_m - c_s,m.
pub fn route_utility(c: &[f64], class: &PassengerClass) -> Result<Vec<f64>> {
    if c.len() != class.incidence.num_links {
        return Err(Error::Domain(format!(
            "cost vector length {} does not match {} links",
            c.len(),
            class.incidence.num_links
        )));
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite link cost".into()));
    }
    let bt_c = class.incidence.transpose_apply(c);
    Ok(bt_c
        .iter()
        .zip(&class.route_specific_cost)
        .map(|(&rc, &cs)| class.v0 - class.beta * rc - cs)
        .collect())
}

/// Logit choice probabilities with max-subtraction for overflow safety.
pub fn logit_probs(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Domain("logit over an empty route set".into()));
    }
    let vmax = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - vmax).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Index of the maximal utility, ties broken by the lowest route index.
pub fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Scalar satisfaction of a route utility vector.
pub fn satisfaction(v: &[f64], mode: SatisfactionMode, sigma: f64) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Domain("satisfaction of an empty route set".into()));
    }
    match mode {
        SatisfactionMode::ScaledMax => Ok(v[argmax_lowest(v)] / sigma),
        SatisfactionMode::LogSum => {
            let vmax = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = v.iter().map(|&x| (x - vmax).exp()).sum();
            Ok((vmax + sum.ln()) / sigma)
        }
    }
}

/// Everything the solvers need from one class at a fixed cost vector.
#[derive(Debug, Clone)]
pub struct ClassState {
    pub utilities: Vec<f64>,
    pub probs: Vec<f64>,
    pub satisfaction: f64,
    pub demand: f64,
    /// Route flows x = p * d.
    pub route_flows: Vec<f64>,
}

impl ClassState {
    pub fn evaluate(c: &[f64], class: &PassengerClass) -> Result<ClassState> {
        let utilities = route_utility(c, class)?;
        let probs = logit_probs(&utilities)?;
        let s = satisfaction(&utilities, class.satisfaction_mode, class.sigma)?;
        let d = class.demand_curve.demand(s);
        let route_flows = probs.iter().map(|&p| p * d).collect();
        Ok(ClassState { utilities, probs, satisfaction: s, demand: d, route_flows })
    }
}

/// Traffic assignment g(c) = sum_k B^(k) P^(k)(V^(k)(c)) D^(k)(S^(k)(V^(k)(c))).
/// With more than one OD pair the sum over classes covers them, one class per
/// OD pair. Accumulation runs in class order so the result does not depend on
/// `threads`.
pub fn assign(c: &[f64], classes: &[PassengerClass], threads: usize) -> Result<Vec<f64>> {
    let states = evaluate_classes(c, classes, threads)?;
    let mut f = vec![0.0; c.len()];
    for (class, state) in classes.iter().zip(&states) {
        class.incidence.accumulate_apply(&state.route_flows, &mut f);
    }
    Ok(f)
}

/// Per-class states at cost `c`, evaluated in parallel when `threads > 1`.
pub fn evaluate_classes(
    c: &[f64],
    classes: &[PassengerClass],
    threads: usize,
) -> Result<Vec<ClassState>> {
    if threads <= 1 || classes.len() < 2 {
        return classes.iter().map(|k| ClassState::evaluate(c, k)).collect();
    }
    let workers = threads.min(classes.len());
    let chunk = classes.len().div_ceil(workers);
    let mut results: Vec<Result<Vec<ClassState>>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = classes
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|k| ClassState::evaluate(c, k)).collect()))
            .collect();
        for h in handles {
            results.push(h.join().expect("class evaluation thread panicked"));
        }
    });
    let mut states = Vec::with_capacity(classes.len());
    for r in results {
        states.extend(r?);
    }
    Ok(states)
}

/// Total platform profit f^T (pi(f) + J).
pub fn total_profit(f: &[f64], j: &[f64], profit_model: &LinkProfitModel) -> f64 {
    let pi = profit_model.per_link(f);
    f.iter().zip(pi.iter().zip(j)).map(|(&fl, (&p, &jl))| fl * (p + jl)).sum()
}
