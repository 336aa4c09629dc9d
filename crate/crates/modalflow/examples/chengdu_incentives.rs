//! Optimize link incentives on the Chengdu scenario with the two time-scale
//! loop and print the optimized incentive, the induced equilibrium, and the
//! profit gain over the no-incentive baseline.
//!
//! Run: cargo run --release --example chengdu_incentives

use std::time::Instant;

use modalflow::assignment::link_cost;
use modalflow::generators::chengdu_fixture;
use modalflow::incentive::{two_timescale, TwoTimescaleConfig};

fn main() -> modalflow::Result<()> {
    let scenario = chengdu_fixture();
    let config = TwoTimescaleConfig::from_scenario(&scenario);
    let started = Instant::now();
    let result = two_timescale(&scenario, &config)?;
    let elapsed = started.elapsed();

    println!(
        "converged after {} iterations ({} warm-up) in {:.1?}",
        result.iterations, result.warmup_iterations, elapsed
    );
    let last = result.trace.last().unwrap();
    println!("delta_f {:.2e}, delta_j {:.2e}", last.delta_f, last.delta_j);
    println!(
        "max route incentive (B^T J*): {:.2e}, box violation: {:.1e}\n",
        result.constraint_residual, result.box_violation
    );

    let costs = link_cost(&result.f_star, &result.j_star, &scenario.cost_model)?;
    let profits: Vec<f64> = scenario
        .profit_model
        .per_link(&result.f_star)
        .iter()
        .zip(&result.j_star)
        .map(|(p, j)| p + j)
        .collect();
    println!("{:>4} {:>8} {:>10} {:>10} {:>10}", "link", "J*", "flow", "cost", "profit");
    for l in 0..scenario.num_links() {
        println!(
            "{:>4} {:>8.2} {:>10.2} {:>10.2} {:>10.2}",
            l + 1,
            result.j_star[l],
            result.f_star[l],
            costs[l],
            profits[l]
        );
    }
    println!(
        "\nprofit: {:.2} (no incentive: {:.2}, {:+.0}%)",
        result.profit,
        result.no_incentive_profit,
        100.0 * (result.profit / result.no_incentive_profit - 1.0)
    );
    Ok(())
}
