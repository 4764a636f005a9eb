use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid dimension: {0}")]
    Dimension(String),

    #[error("truncation health violated: tail mass {tail_mass:.3e} exceeds {tail_tol:.1e}{}", at_time(*.time))]
    Truncation {
        tail_mass: f64,
        tail_tol: f64,
        time: Option<f64>,
    },

    #[error("trajectory {index} failed: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("history {index} failed: {source}")]
    History {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("step size too large: {0}")]
    StepSize(String),

    #[error("quadrature too coarse: {0}")]
    Quadrature(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("insufficient statistics: {0}")]
    Statistics(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn at_time(t: Option<f64>) -> String {
    match t {
        Some(t) => format!(" at t = {t}"),
        None => String::new(),
    }
}

impl Error {
    /// Attach a time stamp to a truncation error raised inside a step.
    pub fn at(self, t: f64) -> Self {
        match self {
            Error::Truncation {
                tail_mass,
                tail_tol,
                ..
            } => Error::Truncation {
                tail_mass,
                tail_tol,
                time: Some(t),
            },
            other => other,
        }
    }

    /// Process exit code used by the `qsd` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Parameter(_) | Error::Dimension(_) => 2,
            _ => 3,
        }
    }
}
