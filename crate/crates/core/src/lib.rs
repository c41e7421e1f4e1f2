//! Discrete evaluation of the sharp logarithmic Sobolev inequality on closed
//! curves and surfaces in Euclidean space, with a numerical reenactment of
//! its transport-map (ABP) argument.

pub mod abp;
pub mod error;
pub mod expr;
pub mod functionals;
pub mod geometry;
pub mod identities;
pub mod linalg;
pub mod mesh;
pub mod meshio;
pub mod operators;
pub mod optimizer;
pub mod shapes;
pub mod sparse;

pub use error::{Error, Result};
pub use geometry::{build_geometry_cache, GeometryCache};
pub use linalg::{sym_det, sym_eig_min, TangentMatrix, Vector};
pub use mesh::{build_mesh, EmbeddedMesh};
pub use shapes::{generate_shape, ShapeKind, ShapeSpec};
