use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// The 2x2 tilde-multiplier system is singular up to the relative floor.
    #[error("degenerate signed state: det A = {det:e} <= floor {floor:e}")]
    DegenerateState { det: f64, floor: f64 },

    #[error("flow collapse: {0}")]
    FlowCollapse(String),

    #[error("stepper failure at t = {time}: dt fell below dt_min = {dt_min:e} with energy still increasing")]
    StepperFailure { time: f64, dt_min: f64 },

    #[error("construction error: {0}")]
    Construction(String),

    #[error("config error for key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// Wraps an error raised while processing one coupling value of a sweep.
    #[error("at beta = {beta}: {source}")]
    AtBeta {
        beta: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Numerical failures map to exit code 1, configuration problems to 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parse(_) => 2,
            Error::AtBeta { source, .. } => source.exit_code(),
            _ => 1,
        }
    }

    /// Stable machine-readable tag used on the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::GridMismatch => "grid_mismatch",
            Error::SolverFailure { .. } => "solver_failure",
            Error::InvalidState(_) => "invalid_state",
            Error::DegenerateState { .. } => "degenerate_state",
            Error::FlowCollapse(_) => "flow_collapse",
            Error::StepperFailure { .. } => "stepper_failure",
            Error::Construction(_) => "construction",
            Error::Config { .. } => "config",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::AtBeta { source, .. } => source.kind(),
        }
    }
}
