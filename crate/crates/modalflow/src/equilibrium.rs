//! Stochastic user equilibrium f* = g(C(f*) + J) via the Method of
//! Successive Averages, plus the empirical continuity and monotonicity
//! probes for the equilibrium map.

use crate::assignment::{assign, evaluate_classes, link_cost};
use crate::error::{Error, Result};
use crate::network::LinkId;
use crate::scenario::Scenario;

/// Tapering step size alpha_k = 1 / (p + q * k^r).
///
/// The averaging theory needs sum alpha = inf and sum alpha^2 < inf, which
/// pins r to (0.5, 1] for q > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl StepSchedule {
    pub fn value(&self, k: usize) -> f64 {
        1.0 / (self.p + self.q * (k as f64).powf(self.r))
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.r > 0.5 && self.r <= 1.0) {
            return Err(Error::Domain(format!(
                "{name}: exponent r={} must lie in (0.5, 1]",
                self.r
            )));
        }
        if self.q <= 0.0 {
            return Err(Error::Domain(format!("{name}: coefficient q={} must be > 0", self.q)));
        }
        if self.p < 0.0 || self.p + self.q < 1.0 {
            return Err(Error::Domain(format!(
                "{name}: need p >= 0 and p + q >= 1 so steps stay in (0, 1], got p={} q={}",
                self.p, self.q
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsaConfig {
    pub alpha: StepSchedule,
    /// Convergence tolerance on ||g(C(f)+J) - f||_2.
    pub eps_flow: f64,
    pub max_iters: usize,
    /// OD-pair fan-out for the inner assignment; 1 = strictly sequential.
    pub threads: usize,
}

impl MsaConfig {
    pub fn from_scenario(s: &Scenario) -> MsaConfig {
        MsaConfig {
            alpha: s.solver.alpha,
            eps_flow: s.solver.eps_flow,
            max_iters: s.solver.max_iters,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.alpha.validate("alpha schedule")?;
        if self.eps_flow <= 0.0 {
            return Err(Error::Domain("eps_flow must be > 0".into()));
        }
        Ok(())
    }
}

/// Route flows, demand and satisfaction of one class at equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassOutcome {
    pub name: String,
    pub route_flows: Vec<f64>,
    pub demand: f64,
    pub satisfaction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub flows: Vec<f64>,
    pub per_class: Vec<ClassOutcome>,
    /// Final ||g(C(f)+J) - f||_2.
    pub residual: f64,
    pub iterations: usize,
    /// Residual before each averaging step, one entry per iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl EquilibriumResult {
    /// Residual trace as CSV (iteration, delta_f).
    pub fn write_trace_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,delta_f")?;
        for (k, r) in self.trace.iter().enumerate() {
            writeln!(w, "{},{}", k + 1, crate::report::sig6(*r))?;
        }
        Ok(())
    }
}

fn check_finite(f: &[f64], iteration: usize) -> Result<()> {
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure(format!(
            "non-finite flow iterate at iteration {iteration}"
        )));
    }
    Ok(())
}

fn class_outcomes(scenario: &Scenario, c: &[f64], threads: usize) -> Result<Vec<ClassOutcome>> {
    let states = evaluate_classes(c, &scenario.classes, threads)?;
    Ok(scenario
        .classes
        .iter()
        .zip(states)
        .map(|(k, st)| ClassOutcome {
            name: k.name.clone(),
            route_flows: st.route_flows,
            demand: st.demand,
            satisfaction: st.satisfaction,
        })
        .collect())
}

/// Solve the fixed point by successive averaging, starting from zero flow
/// unless a warm start is supplied.
pub fn msa_solve(
    scenario: &Scenario,
    j: &[f64],
    config: &MsaConfig,
    warm_start: Option<&[f64]>,
) -> Result<EquilibriumResult> {
    config.validate()?;
    let num_links = scenario.num_links();
    if j.len() != num_links {
        return Err(Error::Domain(format!(
            "incentive vector length {} does not match {num_links} links",
            j.len()
        )));
    }
    let mut f = match warm_start {
        Some(w) => {
            if w.len() != num_links {
                return Err(Error::Domain("warm start length mismatch".into()));
            }
            w.to_vec()
        }
        None => vec![0.0; num_links],
    };
    let mut trace = Vec::new();
    for k in 1..=config.max_iters {
        let c = link_cost(&f, j, &scenario.cost_model)?;
        let g = assign(&c, &scenario.classes, config.threads)?;
        let residual = norm2_diff(&g, &f);
        trace.push(residual);
        if residual <= config.eps_flow {
            let per_class = class_outcomes(scenario, &c, config.threads)?;
            return Ok(EquilibriumResult {
                flows: f,
                per_class,
                residual,
                iterations: k,
                trace,
                converged: true,
            });
        }
        let alpha = config.alpha.value(k);
        for (fi, gi) in f.iter_mut().zip(&g) {
            *fi = (1.0 - alpha) * *fi + alpha * gi;
        }
        check_finite(&f, k)?;
    }
    let c = link_cost(&f, j, &scenario.cost_model)?;
    let g = assign(&c, &scenario.classes, config.threads)?;
    let residual = norm2_diff(&g, &f);
    let per_class = class_outcomes(scenario, &c, config.threads)?;
    Err(Error::MsaNotConverged(Box::new(EquilibriumResult {
        flows: f,
        per_class,
        residual,
        iterations: config.max_iters,
        trace,
        converged: false,
    })))
}

/// ||g(C(f)+J) - f||_2 at an arbitrary flow vector.
pub fn residual(scenario: &Scenario, f: &[f64], j: &[f64]) -> Result<f64> {
    let c = link_cost(f, j, &scenario.cost_model)?;
    let g = assign(&c, &scenario.classes, 1)?;
    Ok(norm2_diff(&g, &f.to_vec()))
}

pub fn norm2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Empirical check of equilibrium-flow monotonicity: reducing one link's
/// constant price must not reduce that link's equilibrium flow.
#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    pub link: LinkId,
    pub delta: f64,
    pub flow_before: f64,
    pub flow_after: f64,
    pub increase: f64,
    /// increase > -1e-8 (numerical slack on a theoretical non-decrease).
    pub non_decreasing: bool,
}

pub fn property_monotonicity(
    scenario: &Scenario,
    link: LinkId,
    delta: f64,
    config: &MsaConfig,
) -> Result<MonotonicityReport> {
    if delta < 0.0 {
        return Err(Error::Domain("delta must be >= 0".into()));
    }
    let idx = link.index();
    if idx >= scenario.num_links() {
        return Err(Error::Domain(format!("unknown link id {}", link.0)));
    }
    let zeros = vec![0.0; scenario.num_links()];
    let base = msa_solve(scenario, &zeros, config, None)?;
    let mut cheaper = scenario.clone();
    cheaper.cost_model.price[idx] -= delta;
    let perturbed = msa_solve(&cheaper, &zeros, config, None)?;
    let increase = perturbed.flows[idx] - base.flows[idx];
    Ok(MonotonicityReport {
        link,
        delta,
        flow_before: base.flows[idx],
        flow_after: perturbed.flows[idx],
        increase,
        non_decreasing: increase > -1e-8,
    })
}

#[derive(Debug, Clone)]
pub struct ContinuitySample {
    pub delta_norm: f64,
    pub flow_change_norm: f64,
    /// ||h(J+delta) - h(J)|| / ||delta||; 0 for a zero perturbation.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct ContinuityReport {
    pub samples: Vec<ContinuitySample>,
    pub max_ratio: f64,
}

/// Empirical Lipschitz probe of the incentive-to-equilibrium map h around J.
pub fn property_continuity(
    scenario: &Scenario,
    j: &[f64],
    perturbations: &[Vec<f64>],
    config: &MsaConfig,
) -> Result<ContinuityReport> {
    let num_links = scenario.num_links();
    let base = msa_solve(scenario, j, config, None)?;
    let mut samples = Vec::with_capacity(perturbations.len());
    let mut max_ratio: f64 = 0.0;
    for delta in perturbations {
        if delta.len() != num_links {
            return Err(Error::Domain("perturbation length mismatch".into()));
        }
        let jp: Vec<f64> = j.iter().zip(delta).map(|(a, b)| a + b).collect();
        for (i, &x) in jp.iter().enumerate() {
            if x < scenario.incentive_box.j_min[i] - 1e-12
                || x > scenario.incentive_box.j_max[i] + 1e-12
            {
                return Err(Error::Domain(format!(
                    "perturbed incentive leaves the box on link {}",
                    i + 1
                )));
            }
        }
        let dn = norm2(delta);
        if dn == 0.0 {
            samples.push(ContinuitySample { delta_norm: 0.0, flow_change_norm: 0.0, ratio: 0.0 });
            continue;
        }
        let shifted = msa_solve(scenario, &jp, config, None)?;
        let fc = norm2_diff(&shifted.flows, &base.flows);
        let ratio = fc / dn;
        max_ratio = max_ratio.max(ratio);
        samples.push(ContinuitySample { delta_norm: dn, flow_change_norm: fc, ratio });
    }
    Ok(ContinuityReport { samples, max_ratio })
}
