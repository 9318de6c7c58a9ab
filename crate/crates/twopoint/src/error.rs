//! Error taxonomy shared across the crate.

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A geometric precondition failed: distance beyond the conjugate-point
    /// bound, antipodal sphere-factor points, a query outside a domain, or a
    /// configuration value outside its admissible range.
    #[error("domain violation: {0}")]
    DomainViolation(String),

    /// Segment endpoints coincide; no geodesic direction is defined.
    #[error("degenerate segment: endpoints coincide")]
    DegenerateSegment,

    /// Two vectors fail to span a plane, so no sectional curvature exists.
    #[error("degenerate span: vectors are parallel or zero")]
    DegenerateSpan,

    /// Tangent vectors anchored at different base points were combined.
    #[error("base point mismatch: {0}")]
    BaseMismatch(String),

    /// Fields or sample sets defined on different grids were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// An iterative solver failed to reach its tolerance.
    #[error("solver failure: {0}")]
    SolverFailure(String),

    /// A symmetric matrix left the cone an isotropic function is defined on.
    #[error("cone violation: eigenvalue {eigenvalue} outside the {cone} cone")]
    ConeViolation { eigenvalue: f64, cone: String },

    /// Inconsistent or out-of-range run configuration.
    #[error("config error: {0}")]
    ConfigError(String),

    /// Interior-only evaluation was requested at or beyond the boundary.
    #[error("boundary point: {0}")]
    BoundaryPoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;
