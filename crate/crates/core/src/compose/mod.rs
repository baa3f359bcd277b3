//! Composition `Cᵗ∘C` of a canonical relation `C ⊂ T*X × T*Y` with its
//! transpose, split into the diagonal `Δ` and the non-diagonal branch `C̃`,
//! and the two-sided fold check on `C̃`.

mod branch;
mod model;
mod numeric;
mod tilde;
mod twosided;

use serde::Serialize;

pub use branch::{
    classify_branch, BranchKind, BranchLabel, ChartTilde, ModelTilde, TildeMembership,
};
pub use model::{compose_model_point, model_tilde_residuals, ModelLeg};
pub use numeric::{
    compose_numeric, symmetric_seeds, ComposeOptions, ComposeOutcome, DEFAULT_SEED_COUNT,
    MERGE_RADIUS,
};
pub use tilde::{implicit_tilde_chart, model_tilde_chart, TildeChart};
pub use twosided::{
    verify_two_sided_fold, FoldSampleRecord, TwoSidedPlan, TwoSidedReport,
};

/// A point `((x, ξ), (y, η))` of `Cᵗ∘C` with its witness `(z, ζ) ∈ T*X`.
///
/// `first_leg` and `second_leg` are the chart parameters of the two points
/// of `C` over `(z, ζ)`; `(x, ξ)` is the right projection of the first leg,
/// `(y, η)` that of the second.
#[derive(Debug, Clone, Serialize)]
pub struct ComposedPoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub y: Vec<f64>,
    pub eta: Vec<f64>,
    pub z: Vec<f64>,
    pub zeta: Vec<f64>,
    pub residual: f64,
    pub first_leg: Vec<f64>,
    pub second_leg: Vec<f64>,
}

impl ComposedPoint {
    /// `(x, ξ, y, η)` as one vector.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * (self.x.len() + self.y.len()));
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.xi);
        v.extend_from_slice(&self.y);
        v.extend_from_slice(&self.eta);
        v
    }

    /// The same point with `(x, ξ)` and `(y, η)` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            x: self.y.clone(),
            xi: self.eta.clone(),
            y: self.x.clone(),
            eta: self.xi.clone(),
            z: self.z.clone(),
            zeta: self.zeta.clone(),
            residual: self.residual,
            first_leg: self.second_leg.clone(),
            second_leg: self.first_leg.clone(),
        }
    }

    /// `|x − y| + |ξ − η|`.
    pub fn diagonal_distance(&self) -> f64 {
        dist(&self.x, &self.y) + dist(&self.xi, &self.eta)
    }

    /// Scale for relative comparisons: `max(1, |(ξ, η)|)`.
    pub fn scale(&self) -> f64 {
        let s: f64 = self.xi.iter().chain(&self.eta).map(|v| v * v).sum();
        s.sqrt().max(1.0)
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}
