//! Scharfetter-Gummel finite-volume solver for the bipolar drift-diffusion
//! system, with a-posteriori checks of its entropy and Moser-type bounds.

// Negated comparisons are used deliberately so that NaN fails validation;
// index loops mirror the banded and stencil formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod error;
pub mod format;
pub mod kernels;
pub mod linalg;
pub mod mesh;
pub mod moser;
pub mod poisson;
pub mod scenario;
pub mod transport;

pub use error::{Error, Hypothesis, Result};
pub use mesh::{build_rectangular_mesh, BoundaryKind, Face, Mesh, MeshRegularity, Rect, SegmentRule};
pub use poisson::{EquilibriumState, PotentialField};
pub use transport::{Physics, RecombinationKind, RecombinationSpec, State, StepConfig};
