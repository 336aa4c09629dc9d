use modalflow::generators::{random_scenario, GeneratorConfig};
use modalflow::incentive::{two_timescale, QpConfig, TwoTimescaleConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1);
    let iters: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(4000);
    let config = GeneratorConfig { seed, ..GeneratorConfig::default() };
    let scenario = random_scenario(&config).unwrap();
    let mut tt = TwoTimescaleConfig::from_scenario(&scenario);
    tt.max_iters = iters;
    tt.qp = QpConfig { max_qp_iters: 3000, qp_tol: 1e-9 };
    let t1 = Instant::now();
    let result = match two_timescale(&scenario, &tt) {
        Ok(r) => r,
        Err(modalflow::Error::TwoTimescaleNotConverged(r)) => *r,
        Err(e) => panic!("{e}"),
    };
    for (k, row) in result.trace.iter().enumerate() {
        if (k + 1) % 500 == 0 || k + 1 == result.trace.len() {
            println!(
                "seed {seed} k={:>6} df={:.2e} dj={:.3e} profit={:.1}",
                k + 1, row.delta_f, row.delta_j, row.profit
            );
        }
    }
    println!(
        "seed {seed}: {} iters in {:.0?}, profit {:.1} vs {:.1} = {:+.2}% (converged {})",
        result.iterations,
        t1.elapsed(),
        result.profit,
        result.no_incentive_profit,
        100.0 * (result.profit / result.no_incentive_profit - 1.0),
        result.converged,
    );
}
