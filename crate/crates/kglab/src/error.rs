use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("grid: {0}")]
    Grid(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("linear algebra: {0}")]
    Linalg(String),
    #[error("spectral calculus: operator has non-positive eigenvalue {value:.6e} (index {index})")]
    NonPositiveSpectrum { value: f64, index: usize },
    #[error("evolution: {0}")]
    Evolution(String),
    #[error("config: {0}")]
    Config(String),
    #[error("cache: {0}")]
    Cache(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
