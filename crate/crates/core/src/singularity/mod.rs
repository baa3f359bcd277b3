//! Corank-1 singularities of smooth maps: singular loci, intrinsic Hessians,
//! Whitney folds, submersions with folds and cross caps.
//!
//! Only corank-1 classes are handled. For maps with `dim V > dim W` the class
//! written `S_{r,0}` coincides with the Boardman class `Σ_{r+k,0}`,
//! `k = dim V − dim W`; that bookkeeping is exposed by [`boardman_index`] but
//! higher coranks are always reported as `Degenerate`.

mod classify;
mod locus;
pub mod normal_forms;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::smallmath::{RealMatrix, RealVector};

pub use classify::{
    classify, classify_cross_cap, classify_fold, classify_submersion_with_folds,
    intrinsic_hessian, CROSS_CAP_TOL, FOLD_GRADIENT_TOL, TRANSVERSALITY_MIN,
};
pub use locus::{
    locus_tangent, minor_system, refine_singular_point, sample_at, singular_locus, DomainBox,
    LocusOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SingularityKind {
    Regular,
    Fold,
    EllipticSWF,
    HyperbolicSWF,
    CrossCap,
    Degenerate,
}

#[derive(Debug, Clone, Serialize)]
pub struct SingularityVerdict {
    pub kind: SingularityKind,
    pub corank: usize,
    /// Named scalar witnesses, e.g. `det_gradient_norm`, `chi_rank`.
    pub diagnostics: BTreeMap<String, f64>,
    /// Set for `Degenerate` verdicts.
    pub reason: Option<String>,
}

impl SingularityVerdict {
    pub(crate) fn new(kind: SingularityKind, corank: usize) -> Self {
        Self { kind, corank, diagnostics: BTreeMap::new(), reason: None }
    }

    pub(crate) fn degenerate(corank: usize, reason: impl Into<String>) -> Self {
        Self {
            kind: SingularityKind::Degenerate,
            corank,
            diagnostics: BTreeMap::new(),
            reason: Some(reason.into()),
        }
    }

    pub(crate) fn with(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

/// A point where the differential drops rank, with kernel and cokernel bases.
#[derive(Debug, Clone)]
pub struct SingularSample {
    pub point: RealVector,
    pub corank: usize,
    /// Orthonormal columns spanning `Ker df`.
    pub kernel: RealMatrix,
    /// Orthonormal columns spanning `Coker df` (the left kernel).
    pub cokernel: RealMatrix,
}

/// Boardman index of the corank-`r` class for a map `ℝ^n_dom → ℝ^n_cod`:
/// the kernel dimension `r + max(n_dom − n_cod, 0)`.
pub fn boardman_index(r: usize, n_dom: usize, n_cod: usize) -> usize {
    r + n_dom.saturating_sub(n_cod)
}
