//! Solve the no-incentive equilibrium of the bundled Chengdu scenario and
//! print the per-link flows, costs and profits.
//!
//! Run: cargo run --release --example chengdu_equilibrium

use modalflow::assignment::{link_cost, total_profit};
use modalflow::equilibrium::{msa_solve, MsaConfig};
use modalflow::generators::chengdu_fixture;

fn main() -> modalflow::Result<()> {
    let scenario = chengdu_fixture();
    let zeros = vec![0.0; scenario.num_links()];
    let config = MsaConfig::from_scenario(&scenario);
    let result = msa_solve(&scenario, &zeros, &config, None)?;

    println!(
        "converged in {} iterations, residual {:.2e}\n",
        result.iterations, result.residual
    );
    let costs = link_cost(&result.flows, &zeros, &scenario.cost_model)?;
    let profits = scenario.profit_model.per_link(&result.flows);
    println!("{:>4} {:>10} {:>10} {:>10}", "link", "flow", "cost", "profit");
    for l in 0..scenario.num_links() {
        println!("{:>4} {:>10.2} {:>10.2} {:>10.2}", l + 1, result.flows[l], costs[l], profits[l]);
    }
    println!(
        "\ntotal profit: {:.2}",
        total_profit(&result.flows, &zeros, &scenario.profit_model)
    );
    for outcome in &result.per_class {
        println!(
            "{}: demand {:.2}, satisfaction {:.4}, route flows {:?}",
            outcome.name,
            outcome.demand,
            outcome.satisfaction,
            outcome.route_flows.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
    }
    Ok(())
}
