use serde::Serialize;

use super::model::model_tilde_residuals;
use super::tilde::TildeChart;
use super::ComposedPoint;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BranchKind {
    Delta,
    TildeC,
    Intersection,
    Unknown,
}

impl BranchKind {
    pub fn name(self) -> &'static str {
        match self {
            BranchKind::Delta => "Delta",
            BranchKind::TildeC => "TildeC",
            BranchKind::Intersection => "Intersection",
            BranchKind::Unknown => "Unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BranchLabel {
    pub kind: BranchKind,
    /// `(|x − y| + |ξ − η|) / scale`.
    pub delta_distance: f64,
    /// Membership residual for `C̃`, relative to the same scale.
    pub tilde_distance: f64,
}

/// Distance-like residual of a point from the non-diagonal branch `C̃`.
pub trait TildeMembership: Send + Sync {
    fn residual(&self, p: &ComposedPoint) -> Result<f64>;
}

/// The explicit defining equations of `C̃₀` for the hyperbolic model.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelTilde;

impl TildeMembership for ModelTilde {
    fn residual(&self, p: &ComposedPoint) -> Result<f64> {
        if p.x.len() != p.y.len() || p.x.len() < 2 {
            return Err(Error::DimensionMismatch { expected: p.x.len(), got: p.y.len() });
        }
        let r = model_tilde_residuals(&p.x, &p.xi, &p.y, &p.eta);
        Ok(r.iter().map(|v| v * v).sum::<f64>().sqrt())
    }
}

/// Membership through a chart of `C̃`: read the chart parameters off the
/// point, evaluate the chart, compare.
pub struct ChartTilde<'a>(pub &'a TildeChart);

impl TildeMembership for ChartTilde<'_> {
    fn residual(&self, p: &ComposedPoint) -> Result<f64> {
        self.0.membership_residual(p)
    }
}

/// Label a composed point by its distances to `Δ` and `C̃`.
///
/// `Delta` iff the diagonal distance is within `tol`, `TildeC` iff the
/// membership residual is, `Intersection` when both are, `Unknown` otherwise.
pub fn classify_branch(p: &ComposedPoint, tilde: &dyn TildeMembership, tol: f64) -> Result<BranchLabel> {
    let scale = p.scale();
    let dd = p.diagonal_distance() / scale;
    let td = match tilde.residual(p) {
        Ok(r) => r / scale,
        // a chart that cannot be evaluated there says nothing about membership
        Err(Error::NoConvergence { .. }) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let kind = match (dd <= tol, td <= tol) {
        (true, true) => BranchKind::Intersection,
        (true, false) => BranchKind::Delta,
        (false, true) => BranchKind::TildeC,
        (false, false) => BranchKind::Unknown,
    };
    Ok(BranchLabel { kind, delta_distance: dd, tilde_distance: td })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compose::model::{compose_model_point, ModelLeg};

    fn leg(a: f64, b: f64) -> ModelLeg {
        ModelLeg { n: 3, a, b, x1: 0.0, x_mid: vec![], theta: vec![1.0], diagonal_witness: (0.3, 0.2) }
    }

    #[test]
    fn labels_of_the_closed_form_branches() {
        let p = &compose_model_point(&leg(1.0, 0.0)).unwrap()[0];
        assert_eq!(classify_branch(p, &ModelTilde, 1e-8).unwrap().kind, BranchKind::TildeC);
        let pts = compose_model_point(&leg(0.4, 0.4)).unwrap();
        // the non-diagonal formula at a = b is the fold surface
        assert_eq!(classify_branch(&pts[0], &ModelTilde, 1e-8).unwrap().kind, BranchKind::Intersection);
        assert_eq!(classify_branch(&pts[1], &ModelTilde, 1e-8).unwrap().kind, BranchKind::Delta);
    }

    #[test]
    fn unrelated_point_is_unknown() {
        let mut p = compose_model_point(&leg(1.0, 0.0)).unwrap()[0].clone();
        p.eta[1] += 0.5;
        let l = classify_branch(&p, &ModelTilde, 1e-8).unwrap();
        assert_eq!(l.kind, BranchKind::Unknown);
        assert!(l.delta_distance > 1e-8 && l.tilde_distance > 1e-8);
    }
}
