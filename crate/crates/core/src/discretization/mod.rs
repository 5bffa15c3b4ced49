//! Biquadratic/bilinear mixed finite elements on the shear-mapped meshes.

mod assembly;
pub mod element;
pub mod quadrature;
mod saddle;
mod space;

pub use assembly::{
    apply_componentwise, assemble, boundary_pressure_load, convection_load, lifting_load, divergence_metric, AssembledSystem, CsrMatrix,
};
pub use quadrature::GaussRule;
pub use saddle::{solve_saddle, BodyForce, SaddleFactor, SaddleOperator, SaddleSystem, SaddleTerms};
pub use space::{
    build_space, BoundaryValue, Constraints, MixedField, MixedSpace, PressurePin, Sample, VelocityConstraint,
};

#[derive(Debug, thiserror::Error)]
pub enum DiscretizationError {
    #[error("conflicting constraints at velocity node {node}: {detail}")]
    ConflictingConstraints { node: usize, detail: String },
    #[error("non-positive Jacobian {det} in cell {cell}")]
    Jacobian { cell: usize, det: f64 },
    #[error("mesh has no {0} boundary")]
    MissingTag(&'static str),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("linear solve residual {relative:.3e} above tolerance")]
    Residual { relative: f64 },
}
