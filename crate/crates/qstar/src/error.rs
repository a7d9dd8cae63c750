//! Error types shared across the crate.

use thiserror::Error;

/// Errors from element-level algebra operations.
#[derive(Debug, Error)]
pub enum AlgebraError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Product of two elements neither of which lies in the distinguished
    /// *-subalgebra. The relative coefficient mass outside the subalgebra is
    /// reported for both factors.
    #[error("undefined product: neither factor lies in the *-subalgebra (off-subalgebra mass {left_mass:.3e} / {right_mass:.3e})")]
    UndefinedProduct { left_mass: f64, right_mass: f64 },

    #[error("elements bound to different algebra instances")]
    InstanceMismatch,

    #[error("invalid instance data: {0}")]
    InvalidInstance(String),
}

/// Errors from Gram-geometry linear operator routines.
#[derive(Debug, Error)]
pub enum LinopsError {
    #[error("singular gram matrix: {context} (rank deficiency beyond tolerance)")]
    SingularGram { context: String },

    #[error("operator is not self-adjoint in its gram geometry (deviation {deviation:.3e})")]
    NotSelfAdjoint { deviation: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Errors from representability analysis and the GNS construction.
#[derive(Debug, Error)]
pub enum FunctionalError {
    #[error("functional is not representable: {witness}")]
    NotRepresentable { witness: String },

    #[error("functionals bound to different algebra instances")]
    InstanceMismatch,

    #[error("operation requires a unital instance")]
    NoUnit,

    #[error(transparent)]
    Algebra(#[from] AlgebraError),

    #[error(transparent)]
    Linops(#[from] LinopsError),
}

/// Errors from Hilbert quasi *-algebra operations.
#[derive(Debug, Error)]
pub enum HilbertError {
    #[error("instance is not a Hilbert quasi *-algebra: {0}")]
    NotHilbert(String),

    #[error("operation requires a unital instance")]
    NoUnit,

    /// The weak-product linear system is rank deficient, so a solution would
    /// not be unique. This is the numerical signature of a failing
    /// non-degeneracy condition on the instance.
    #[error("weak product is ambiguous: solution space has dimension {kernel_dim}")]
    AmbiguousSolution { kernel_dim: usize },

    /// A recovered Riesz vector fails w-positivity, so the functional is not
    /// a continuous representable one.
    #[error("element is not w-positive (min eigenvalue {min_eig:.3e}, self-adjointness deviation {self_adjoint_dev:.3e})")]
    NotWPositive { min_eig: f64, self_adjoint_dev: f64 },

    /// The module-property identity fails beyond tolerance, so the module
    /// function is not certified for this element.
    #[error("module property fails: residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    ModulePropertyFails { residual: f64, tolerance: f64 },

    #[error("recovered density has a negative entry: w[{index}] = {value:.6e}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("functional is not representable: {witness}")]
    NotRepresentable { witness: String },

    #[error(transparent)]
    Algebra(#[from] AlgebraError),

    #[error(transparent)]
    Linops(#[from] LinopsError),
}

/// Errors from instance builders.
#[derive(Debug, Error)]
pub enum BuildError {
    #[error("invalid builder parameter: {0}")]
    InvalidParameter(String),

    /// The projected trigonometric subalgebra is not closed under
    /// multiplication; raise the mode count or use the full grid algebra.
    #[error("trigonometric subalgebra with {modes} modes on {grid} points is not multiplicatively closed (worst associativity violation {violation:.3e}); raise k or use `all`")]
    TrigSubalgebraNotClosed { modes: usize, grid: usize, violation: f64 },

    #[error(transparent)]
    Algebra(#[from] AlgebraError),

    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// Errors from ladder evaluation; per-level failures carry the level.
#[derive(Debug, Error)]
pub enum LadderError {
    #[error("levels must be strictly increasing and nonempty")]
    BadLevels,

    #[error("level n={level}: {source}")]
    Level { level: usize, source: Box<dyn std::error::Error + Send + Sync> },

    #[error("quantity {quantity} needs {needs} in the ladder family at level n={level}")]
    MissingInput { quantity: String, needs: String, level: usize },
}

/// Errors from the instance file format.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    /// The file parsed but the resulting instance fails the axiom checks;
    /// the full report is embedded.
    #[error("instance fails axiom checks:\n{report}")]
    Axiom { report: String },

    #[error(transparent)]
    Build(#[from] BuildError),

    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}
