use thiserror::Error;

/// Errors raised across the simulation pipeline.
#[derive(Debug, Error)]
pub enum IsacError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("AP grid layout needs a square AP count, got L = {0}")]
    NonSquareGrid(usize),

    #[error("distance must be strictly positive, got {0} m")]
    NonPositiveDistance(f64),

    #[error("matrix is not positive semidefinite ({context})")]
    NotPsd { context: String },

    #[error("AP mode selection infeasible for SSA {ssa}: {reason}")]
    Infeasible { ssa: usize, reason: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("convex subproblem failed at CCP iteration {iteration}: {status}")]
    Solver { iteration: usize, status: String },

    #[error("power allocation infeasible after {retries} re-initialisations (last status: {status})")]
    RepeatedInfeasibility { retries: usize, status: String },

    #[error("experiment failed at sweep value {sweep_value}, setup seed {setup_seed}")]
    Experiment {
        sweep_value: f64,
        setup_seed: u64,
        #[source]
        source: Box<IsacError>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, IsacError>;
