use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    Domain(&'static str),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("input gradient is identically zero; the first-order attack direction is undefined")]
    DegenerateGradient,

    #[error("parameter is not stationary: gradient sup-norm {grad_norm:e} exceeds tolerance {tol:e}")]
    Stationarity { grad_norm: f64, tol: f64 },

    #[error("Hessian is not positive definite even with damping {damping:e}")]
    SingularHessian { damping: f64 },

    #[error("optimization failed: {message}")]
    Optimization { message: String, trace: Vec<f64> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("construction impossible: {0}")]
    ConstructionImpossible(String),

    #[error("refusing to enumerate: {0}")]
    Refused(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

pub(crate) fn check_finite<'a, I>(what: &'static str, values: I) -> Result<()>
where
    I: IntoIterator<Item = &'a f64>,
{
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(what))
    }
}
