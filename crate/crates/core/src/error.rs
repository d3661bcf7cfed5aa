use thiserror::Error;

pub type Result<T> = std::result::Result<T, KamError>;

#[derive(Debug, Error)]
pub enum KamError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("grid too small: {0}")]
    GridTooSmall(String),
    #[error("no convergence: {0}")]
    NonConvergent(String),
    #[error("frequency rejected: {0}")]
    NonDiophantine(String),
    #[error("resonance certificate: divisor {divisor:.3e} below bound {bound:.3e} at i={i}, j={j}, k={k:?}")]
    Divisor {
        i: usize,
        j: usize,
        k: Vec<i32>,
        divisor: f64,
        bound: f64,
    },
    #[error("bound violated: {0}")]
    BoundViolation(String),
    #[error("residual above tolerance: {0}")]
    Residual(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<KamError>,
    },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(String),
}

impl KamError {
    /// Process exit code: 2 validation, 3 numerical, 4 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            KamError::Validation(_) | KamError::GridTooSmall(_) => 2,
            KamError::Io(_) | KamError::Serde(_) => 4,
            KamError::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }

    pub fn at_stage(self, stage: usize) -> KamError {
        match self {
            KamError::Stage { .. } => self,
            other => KamError::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// The resonance certificate carried by this error, if any.
    pub fn certificate(&self) -> Option<(usize, usize, &[i32])> {
        match self {
            KamError::Divisor { i, j, k, .. } => Some((*i, *j, k)),
            KamError::Stage { source, .. } => source.certificate(),
            _ => None,
        }
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(KamError::Validation(msg.into()))
}
