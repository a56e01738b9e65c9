use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("missing configuration key `{0}`")]
    MissingKey(String),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("`{key}` is not finite")]
    NonFinite { key: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("malformed configuration: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecfunError {
    #[error("{function} is undefined at x = {x}")]
    Domain { function: &'static str, x: f64 },
    #[error("tolerance {0} outside (1e-14, 1e-2)")]
    Tolerance(f64),
    #[error(
        "quadrature did not converge after {evaluations} evaluations \
         (estimate {value}, error {abs_error_estimate})"
    )]
    NoConvergence {
        value: f64,
        abs_error_estimate: f64,
        evaluations: usize,
    },
    #[error("integrand returned a non-finite value at x = {0}")]
    NonFiniteIntegrand(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Numerics(#[from] SpecfunError),
    #[error("series term {index} is not finite")]
    NonFiniteTerm { index: usize },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{0} has no closed-form throughput")]
    NoClosedForm(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StudyError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error("invalid sweep: {0}")]
    Spec(String),
    #[error("csv output failed: {0}")]
    Csv(String),
}
