use crate::equilibrium::EquilibriumResult;
use crate::incentive::IncentiveResult;
use crate::network::NodeId;

/// Crate-wide error type.
#[derive(Debug)]
pub enum Error {
    /// A hyperpath violates its structural invariants (cycle, bad diversion row, ...).
    InvalidHyperpath(String),
    /// A scenario document or report artifact does not match the expected schema.
    Schema(String),
    /// An input violates an operation precondition (negative flow, dimension mismatch, ...).
    Domain(String),
    /// The requested computation is outside the supported model family.
    Unsupported(String),
    /// No path exists between the requested origin and destination.
    Unreachable { origin: NodeId, destination: NodeId },
    /// Bargaining premise violated: cooperation produced no surplus over the disagreement point.
    NoSurplus { total: f64, disagreement_sum: f64 },
    /// An iterate became NaN or infinite.
    NumericalFailure(String),
    /// MSA hit its iteration cap; carries the best iterate and full residual trace.
    MsaNotConverged(Box<EquilibriumResult>),
    /// The two time-scale loop hit its iteration cap; carries the best iterate and traces.
    TwoTimescaleNotConverged(Box<IncentiveResult>),
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::InvalidHyperpath(msg) => write!(f, "invalid hyperpath: {msg}"),
            Error::Schema(msg) => write!(f, "schema error: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
            Error::Unreachable { origin, destination } => {
                write!(f, "no path from node {} to node {}", origin.0, destination.0)
            }
            Error::NoSurplus { total, disagreement_sum } => write!(
                f,
                "no bargaining surplus: total profit {total} does not exceed disagreement sum {disagreement_sum}"
            ),
            Error::NumericalFailure(msg) => write!(f, "numerical failure: {msg}"),
            Error::MsaNotConverged(res) => write!(
                f,
                "MSA did not converge within {} iterations (residual {:.3e})",
                res.iterations, res.residual
            ),
            Error::TwoTimescaleNotConverged(res) => write!(
                f,
                "two time-scale loop did not converge within {} iterations",
                res.iterations
            ),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
