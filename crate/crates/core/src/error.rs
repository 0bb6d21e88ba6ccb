use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model is not superlinear: maximizer search left |v| <= {bound} at x = {x:?}, p = {p:?}")]
    NonSuperlinear { x: Vec<f64>, p: Vec<f64>, bound: f64 },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("point-source iteration diverged to {min_value:e} after {iterations} steps; alpha is probably overestimated")]
    Divergence { iterations: usize, min_value: f64 },

    #[error("empty Aubry set: smallest diagonal barrier {min_diagonal:e} exceeds tolerance {eps:e}")]
    EmptyAubrySet { min_diagonal: f64, eps: f64 },

    #[error("conjugate pairing failed: max |u- - u+| on Aubry nodes is {gap:e} > {eps:e} (several Aubry classes?)")]
    MultipleClassObstruction { gap: f64, eps: f64 },

    #[error("field is not semiconcave at node {node}: slope bounds are inconsistent")]
    NonSemiconcave { node: usize },

    #[error("no hull vertex on the energy shell at node {node} (closest |H - alpha| = {closest:e})")]
    NoShellVertex { node: usize, closest: f64 },

    #[error("lambda {lambda} too large: {reason}")]
    LambdaOutOfRange { lambda: f64, reason: String },

    #[error("no critical point found outside the Aubry neighbourhood: {0}")]
    NoCriticalPoints(String),

    #[error("limiting differentials do not match at node {node}: gap {gap:e} > {eps:e}")]
    UnresolvedMatch { node: usize, gap: f64, eps: f64 },

    #[error("integration step rejected at t = {t}: energy jump {jump:e} exceeds {limit:e}; use a smaller dt")]
    StepRejected { t: f64, jump: f64, limit: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
