use thiserror::Error;

/// Errors surfaced by the numerical kernels.
///
/// Anything that is a *result* rather than a failure (an empty exponent
/// range, a trivial decomposition, a non-passing fit) is reported through
/// the return value of the operation, not through this type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ellipticity violation at cell {cell}: Re(A xi.xi) = {value:.6e} < lambda = {lambda:.6e}")]
    Ellipticity { cell: usize, value: f64, lambda: f64 },

    #[error("z = {z} lies outside the sector |arg z| < {mu:.6} (accretivity angle {theta:.6})")]
    OutsideSector { z: num_complex::Complex64, mu: f64, theta: f64 },

    #[error("Krylov iteration did not reach tolerance {tol:.3e} within dimension {max_dim} (residual {residual:.3e})")]
    KrylovStagnation { tol: f64, max_dim: usize, residual: f64 },

    #[error("quadrature did not converge: {0}")]
    QuadratureDiverged(String),

    #[error("degenerate ball: radius {radius:.6e} is below one grid cell ({h:.6e})")]
    DegenerateBall { radius: f64, h: f64 },

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("symbol fails the sector decay bound: {0}")]
    SymbolDecay(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
