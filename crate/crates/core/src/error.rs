use crate::types::Forwarder;

/// Errors raised by model construction, the solvers and the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid reward model: {0}")]
    InvalidModel(String),

    #[error("distance {distance} m is below the reference distance {reference} m")]
    InsideReferenceDistance { distance: f64, reference: f64 },

    #[error("negative progress {0} m with feasible power")]
    NegativeProgress(f64),

    #[error("forwarding region is empty after discretization")]
    EmptyRegion,

    #[error("{0} never sees a feasible relay")]
    NoFeasibleRelay(Forwarder),

    #[error("thresholds unordered for {who}: zeta {zeta} > alpha {alpha}")]
    UnorderedThresholds { who: Forwarder, zeta: f64, alpha: f64 },

    #[error("mixed strategy undefined: zero indifference denominator for {0}")]
    ZeroDenominator(Forwarder),

    #[error("{what} did not converge in {iterations} iterations (last residual {last_residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        last_residual: f64,
        residual_trace: Vec<f64>,
    },

    #[error("infinite expected delay: {0}")]
    InfiniteDelay(String),

    #[error("policy stops on an infeasible reward: {0}")]
    StopsOnInfeasible(String),

    #[error("cost ordering violated at convergence: D = {d:?}, C = {c:?}")]
    OrderingViolated { d: [f64; 2], c: [f64; 2] },

    #[error("model is not usable for the partially observable game: {0}")]
    NotIndependent(String),

    #[error("empty equilibrium set at location {0}")]
    EmptyEquilibriumSet(usize),

    #[error("profitable deviation for {who} at {state}: gain {gain:e}")]
    Deviation {
        who: Forwarder,
        state: String,
        gain: f64,
    },

    #[error("unsupported model format version {0}")]
    FormatVersion(u32),

    #[error("network: {0}")]
    Network(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
