//! Reference values shared by unit tests: the published equilibrium and
//! sharing tables for the Chengdu scenario.

/// No-incentive equilibrium flow, link order 1..12.
pub const F_PHI: [f64; 12] =
    [32.16, 12.10, 12.09, 5.09, 7.63, 0.09, 0.09, 0.01, 0.64, 12.13, 12.13, 11.50];

/// Link costs at the no-incentive equilibrium.
pub const C_PHI: [f64; 12] =
    [72.32, 27.12, 24.12, 22.05, 22.08, 4.00, 4.00, 4.00, 4.00, 27.12, 22.12, 24.11];

/// Per-link profits at the no-incentive equilibrium.
pub const PI_PHI: [f64; 12] =
    [3.57, 1.58, 1.10, 0.75, 1.13, 0.70, 0.70, 0.70, 0.68, 1.11, 2.61, 2.17];

pub const TOTAL_PROFIT_PHI: f64 = 230.34;
pub const TOTAL_PROFIT_STAR: f64 = 401.90;
pub const DEMAND_A_PHI: f64 = 33.82;
pub const DEMAND_B_PHI: f64 = 22.55;

/// Optimized incentive and its equilibrium (signs and profits are the
/// reproducible part; per-link incentives are solver-dependent).
pub const J_STAR: [f64; 12] =
    [-0.00, -0.35, 0.16, 0.32, 0.10, -0.23, 1.23, 2.04, 1.69, -1.58, -1.30, -1.85];
pub const F_STAR: [f64; 12] =
    [5.15, 2.11, 1.90, 0.80, 1.21, 0.22, 0.01, 0.00, 0.11, 49.98, 50.19, 50.08];

/// Provider order: taxi, bus, scooter, subway.
pub const PROFITS_BEFORE: [f64; 4] = [133.87, 39.25, 0.57, 56.65];
pub const PROFITS_AFTER: [f64; 4] = [53.02, 74.31, 0.36, 274.21];
pub const THETA: [f64; 4] = [70.0, 60.0, 1.0, 200.0];
pub const FINAL_PROFIT: [f64; 4] = [170.15, 70.35, 1.08, 160.32];
