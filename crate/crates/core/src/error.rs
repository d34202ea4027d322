//! Error type shared by all solver components.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty domain: {0}")]
    EmptyDomain(String),

    #[error("outside background domain: point ({0}, {1})")]
    OutsideDomain(f64, f64),

    #[error("non-finite level set value at ({0}, {1})")]
    NonFiniteLevelSet(f64, f64),

    #[error("unsupported order {requested}; supported: {supported}")]
    UnsupportedOrder { requested: usize, supported: String },

    #[error("deformation search failed on element {elem}: {detail}")]
    DeformationSearchFailed { elem: usize, detail: String },

    #[error("element inversion at quadrature point on element {0}")]
    ElementInversion(usize),

    #[error("local inverse failed on element {elem}: {detail}")]
    LocalInverseFailed { elem: usize, detail: String },

    #[error("orphan dof {0}: no contributing element in averaging patch")]
    OrphanDof(usize),

    #[error("ghost-penalty graph disconnected: {0}")]
    GhostGraphDisconnected(String),

    #[error("non-finite value of '{name}' at ({x}, {y})")]
    NonFiniteField { name: String, x: f64, y: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("solver stagnation: {0}")]
    SolverStagnation(String),

    #[error("residual check failed: {0}")]
    ResidualCheck(String),

    #[error("extension too small, increase delta or reduce dt: {0}")]
    ExtensionTooSmall(String),

    #[error("time-step/mesh ratio violates h^4/(nu*dt) <= 1: {0}")]
    MeshTimeRatio(String),

    #[error("startup failed: {0}")]
    Startup(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("manufactured source validation failed: {0}")]
    SourceValidation(String),

    #[error("vtk parse error: {0}")]
    VtkParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
