//! Computational microlocal geometry for seismic imaging.
//!
//! The crate is organized bottom-up:
//!
//! - [`smallmath`]: dense linear algebra helpers, jets of smooth maps, Newton solves,
//!   sparse Laurent polynomials with exact derivatives.
//! - [`singularity`]: singular loci and corank-1 classification (folds, submersions
//!   with folds, cross caps).
//! - [`raytrace`]: bicharacteristic flow, the `(x1, x2, p3)` Lagrangian chart,
//!   single-source and marine fold caustics, the marine canonical relation.
//! - [`canrel`]: canonical relations from generating functions and the folded cross
//!   cap verification.
//! - [`compose`]: numerical composition `C^t o C`, branch labels, two-sided folds.
//! - [`fiocalc`]: exact order arithmetic for FIO and paired-Lagrangian classes.
//! - [`pipeline`]: end-to-end verification runs with named pass/fail checks.

pub mod canrel;
pub mod compose;
mod error;
pub mod fiocalc;
pub mod pipeline;
pub mod raytrace;
pub mod singularity;
pub mod smallmath;

pub use canrel::{CanonicalRelationChart, FccReport, GeneratingFunction};
pub use compose::{BranchLabel, ComposedPoint};
pub use error::{Error, Result};
pub use fiocalc::{OrderPair, Rational};
pub use raytrace::{ChartPoint, RayState, SoundspeedModel};
pub use singularity::{SingularSample, SingularityKind, SingularityVerdict};
pub use smallmath::{
    jet_evaluate, newton_solve, numeric_rank, quadratic_signature, FdPolicy, FnMap, Jet, Poly,
    PolyMap, RealMatrix, RealVector, SmoothMap, SmoothMapHandle,
};
