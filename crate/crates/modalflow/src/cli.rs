//! Batch pipelines behind the command-line interface: load a scenario, run
//! equilibrium / incentive optimization / profit sharing, and emit report
//! tables plus convergence traces.
//!
//! Exit-code contract: 0 success, 1 input error, 2 nonconvergence (reports
//! are still written).

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assignment::link_cost;
use crate::bargaining::{provider_profits, share_profits};
use crate::equilibrium::{msa_solve, EquilibriumResult, MsaConfig};
use crate::error::{Error, Result};
use crate::generators::{random_scenario, GeneratorConfig};
use crate::incentive::{two_timescale, IncentiveResult, TwoTimescaleConfig};
use crate::report;
use crate::scenario::{Scenario, SolverDoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CliOutcome {
    Converged,
    NotConverged,
}

impl CliOutcome {
    pub fn exit_code(self) -> i32 {
        match self {
            CliOutcome::Converged => 0,
            CliOutcome::NotConverged => 2,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CommonOptions {
    pub threads: usize,
    /// key=value overrides of solver settings (alpha.p, beta.r, eps_flow,
    /// eps_incentive, max_iters).
    pub overrides: Vec<(String, f64)>,
}

impl CommonOptions {
    pub fn parse_overrides(raw: &[String]) -> Result<Vec<(String, f64)>> {
        raw.iter()
            .map(|item| {
                let (key, value) = item
                    .split_once('=')
                    .ok_or_else(|| Error::Domain(format!("--config expects KEY=VALUE, got {item}")))?;
                let parsed: f64 = value
                    .parse()
                    .map_err(|_| Error::Domain(format!("--config {key}: bad number {value}")))?;
                Ok((key.to_string(), parsed))
            })
            .collect()
    }

    fn apply(&self, scenario: &mut Scenario) -> Result<()> {
        for (key, value) in &self.overrides {
            let s = &mut scenario.solver;
            match key.as_str() {
                "alpha.p" => s.alpha.p = *value,
                "alpha.q" => s.alpha.q = *value,
                "alpha.r" => s.alpha.r = *value,
                "beta.p" => s.beta.p = *value,
                "beta.q" => s.beta.q = *value,
                "beta.r" => s.beta.r = *value,
                "eps_flow" => s.eps_flow = *value,
                "eps_incentive" => s.eps_incentive = *value,
                "max_iters" => s.max_iters = *value as usize,
                other => {
                    return Err(Error::Domain(format!("--config: unknown key {other}")));
                }
            }
        }
        Ok(())
    }

    fn threads(&self) -> usize {
        self.threads.max(1)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
}

/// run.json emitted by `optimize` (and `pipeline`); everything `share`
/// needs is carried here so the sharing step is pure arithmetic on artifacts.
#[derive(Debug, Serialize, Deserialize)]
pub struct OptimizeRunJson {
    pub command: String,
    pub scenario: String,
    pub threads: usize,
    pub solver: SolverDoc,
    pub converged: bool,
    pub degraded: bool,
    pub iterations: usize,
    pub warmup_iterations: usize,
    pub delta_f: f64,
    pub delta_j: f64,
    pub profit: f64,
    pub no_incentive_profit: f64,
    pub constraint_residual: f64,
    pub box_violation: f64,
    pub j_star: Vec<f64>,
    pub f_star: Vec<f64>,
    pub f_phi: Vec<f64>,
    pub providers: Vec<String>,
    pub theta: Vec<f64>,
    pub provider_profits_before: Vec<f64>,
    pub provider_profits_after: Vec<f64>,
    pub timings: Timings,
}

fn load_scenario(path: &Path, opts: &CommonOptions) -> Result<Scenario> {
    let mut scenario = Scenario::from_path(path)?;
    opts.apply(&mut scenario)?;
    Ok(scenario)
}

fn read_incentive_file(path: &Path, num_links: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let j: Vec<f64> = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("incentive file {}: {e}", path.display())))?;
    if j.len() != num_links {
        return Err(Error::Schema(format!(
            "incentive file {} has {} entries, expected {num_links}",
            path.display(),
            j.len()
        )));
    }
    Ok(j)
}

fn write_equilibrium_reports(
    scenario: &Scenario,
    result: &EquilibriumResult,
    j: &[f64],
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let costs = link_cost(&result.flows, j, &scenario.cost_model)?;
    let profits: Vec<f64> = scenario
        .profit_model
        .per_link(&result.flows)
        .iter()
        .zip(j)
        .map(|(p, jl)| p + jl)
        .collect();
    let mut csv = Vec::new();
    report::write_equilibrium_csv(&mut csv, &result.flows, &costs, &profits)?;
    std::fs::write(out_dir.join("equilibrium.csv"), csv)?;
    let mut trace = Vec::new();
    result.write_trace_csv(&mut trace)?;
    std::fs::write(out_dir.join("trace.csv"), trace)?;
    Ok(())
}

/// `equilibrium` subcommand: solve the fixed point at a fixed incentive
/// (zeros unless an incentive file is given) and write equilibrium.csv and
/// trace.csv.
pub fn cmd_equilibrium(
    scenario_path: &Path,
    incentive_path: Option<&Path>,
    out_dir: &Path,
    opts: &CommonOptions,
) -> Result<CliOutcome> {
    let scenario = load_scenario(scenario_path, opts)?;
    let j = match incentive_path {
        Some(p) => read_incentive_file(p, scenario.num_links())?,
        None => vec![0.0; scenario.num_links()],
    };
    let mut config = MsaConfig::from_scenario(&scenario);
    config.threads = opts.threads();
    match msa_solve(&scenario, &j, &config, None) {
        Ok(result) => {
            write_equilibrium_reports(&scenario, &result, &j, out_dir)?;
            Ok(CliOutcome::Converged)
        }
        Err(Error::MsaNotConverged(best)) => {
            write_equilibrium_reports(&scenario, &best, &j, out_dir)?;
            Ok(CliOutcome::NotConverged)
        }
        Err(e) => Err(e),
    }
}

fn write_optimize_reports(
    scenario: &Scenario,
    scenario_path: &Path,
    result: &IncentiveResult,
    out_dir: &Path,
    opts: &CommonOptions,
    elapsed_seconds: f64,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let costs = link_cost(&result.f_star, &result.j_star, &scenario.cost_model)?;
    let profits: Vec<f64> = scenario
        .profit_model
        .per_link(&result.f_star)
        .iter()
        .zip(&result.j_star)
        .map(|(p, jl)| p + jl)
        .collect();
    let mut csv = Vec::new();
    report::write_incentive_csv(&mut csv, &result.j_star, &result.f_star, &costs, &profits)?;
    std::fs::write(out_dir.join("incentive.csv"), csv)?;
    let mut trace = Vec::new();
    result.write_trace_csv(&mut trace)?;
    std::fs::write(out_dir.join("trace.csv"), trace)?;

    let zeros = vec![0.0; scenario.num_links()];
    let before = provider_profits(&result.f_phi, &zeros, &scenario.profit_model, &scenario.providers)?;
    let after =
        provider_profits(&result.f_star, &result.j_star, &scenario.profit_model, &scenario.providers)?;
    let last = result.trace.last();
    let run = OptimizeRunJson {
        command: "optimize".into(),
        scenario: scenario_path.display().to_string(),
        threads: opts.threads(),
        solver: SolverDoc::from(&scenario.solver),
        converged: result.converged,
        degraded: result.degraded,
        iterations: result.iterations,
        warmup_iterations: result.warmup_iterations,
        delta_f: last.map(|r| r.delta_f).unwrap_or(f64::NAN),
        delta_j: last.map(|r| r.delta_j).unwrap_or(f64::NAN),
        profit: result.profit,
        no_incentive_profit: result.no_incentive_profit,
        constraint_residual: result.constraint_residual,
        box_violation: result.box_violation,
        j_star: result.j_star.clone(),
        f_star: result.f_star.clone(),
        f_phi: result.f_phi.clone(),
        providers: scenario.providers.names.clone(),
        theta: scenario.theta.clone(),
        provider_profits_before: before,
        provider_profits_after: after,
        timings: Timings { total_seconds: elapsed_seconds },
    };
    let mut text = serde_json::to_string_pretty(&run)?;
    text.push('\n');
    std::fs::write(out_dir.join("run.json"), text)?;
    Ok(())
}

/// `optimize` subcommand: run the two time-scale loop and write
/// incentive.csv, trace.csv and run.json.
pub fn cmd_optimize(scenario_path: &Path, out_dir: &Path, opts: &CommonOptions) -> Result<CliOutcome> {
    let scenario = load_scenario(scenario_path, opts)?;
    let mut config = TwoTimescaleConfig::from_scenario(&scenario);
    config.threads = opts.threads();
    let started = Instant::now();
    match two_timescale(&scenario, &config) {
        Ok(result) => {
            write_optimize_reports(
                &scenario,
                scenario_path,
                &result,
                out_dir,
                opts,
                started.elapsed().as_secs_f64(),
            )?;
            Ok(CliOutcome::Converged)
        }
        Err(Error::TwoTimescaleNotConverged(best)) => {
            write_optimize_reports(
                &scenario,
                scenario_path,
                &best,
                out_dir,
                opts,
                started.elapsed().as_secs_f64(),
            )?;
            Ok(CliOutcome::NotConverged)
        }
        Err(e) => Err(e),
    }
}

/// `share` subcommand: read a prior optimize run and write sharing.csv.
pub fn cmd_share(
    scenario_path: &Path,
    run_dir: &Path,
    out_dir: &Path,
    opts: &CommonOptions,
) -> Result<CliOutcome> {
    let scenario = load_scenario(scenario_path, opts)?;
    let run_path = run_dir.join("run.json");
    let text = std::fs::read_to_string(&run_path)
        .map_err(|e| Error::Schema(format!("missing optimize artifacts at {}: {e}", run_path.display())))?;
    let run: OptimizeRunJson = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", run_path.display())))?;
    if run.providers != scenario.providers.names {
        return Err(Error::Schema(format!(
            "{}: providers do not match the scenario",
            run_path.display()
        )));
    }
    let sharing = share_profits(
        run.provider_profits_before.clone(),
        run.provider_profits_after.clone(),
        run.profit,
        &run.theta,
    )?;
    std::fs::create_dir_all(out_dir)?;
    let mut csv = Vec::new();
    report::write_sharing_csv(&mut csv, &scenario.providers.names, &sharing)?;
    std::fs::write(out_dir.join("sharing.csv"), csv)?;
    Ok(CliOutcome::Converged)
}

/// `generate` subcommand: write a schema-valid random scenario file.
pub fn cmd_generate(
    n: usize,
    m: usize,
    od: usize,
    k: usize,
    seed: u64,
    out_path: &Path,
) -> Result<()> {
    let config = GeneratorConfig {
        n_nodes: n,
        m_attach: m,
        n_od_pairs: od,
        k_routes: k,
        seed,
        ..GeneratorConfig::default()
    };
    let scenario = random_scenario(&config)?;
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(out_path, scenario.to_json()?)?;
    Ok(())
}

/// `pipeline` subcommand: equilibrium at J = 0, incentive optimization, and
/// profit sharing, all into one output directory.
pub fn cmd_pipeline(scenario_path: &Path, out_dir: &Path, opts: &CommonOptions) -> Result<CliOutcome> {
    let eq = cmd_equilibrium(scenario_path, None, out_dir, opts)?;
    let opt = cmd_optimize(scenario_path, out_dir, opts)?;
    let sh = cmd_share(scenario_path, out_dir, out_dir, opts)?;
    if eq == CliOutcome::Converged && opt == CliOutcome::Converged && sh == CliOutcome::Converged {
        Ok(CliOutcome::Converged)
    } else {
        Ok(CliOutcome::NotConverged)
    }
}
