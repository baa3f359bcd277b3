//! Canonical relations `C ⊂ T*X × T*Y` given by charts, generating functions
//! (the model phase and the weak normal form family), and the folded cross cap
//! verification with nonradiality and maximal noninvolutivity witnesses.

mod generating;
mod verify;

use crate::error::{Error, Result};
use crate::singularity::DomainBox;
use crate::smallmath::{jacobian, RealMatrix, RealVector, SmoothMap, SmoothMapHandle};

pub use generating::{
    model_image_defining_functions, model_phase, model_phase_value, relation_from_generating,
    variable_names, weak_normal_phase, GeneratingFunction, ModelVariant, WeakNormalPieces,
    DEFAULT_CONE,
};
pub use verify::{
    omega_rank, poisson_bracket_matrix, verify_folded_cross_cap, BracketSpec, FccReport,
    FccSampleRecord, LocusSource, OffLocusSummary, SamplingPlan, NONRADIAL_MIN,
};

/// A parametrized canonical relation with left projection into `T*X`
/// (`dim X = n_left`) and right projection into `T*Y` (`dim Y = n_right`).
///
/// Both projections emit `(base point, covector)`: the first half of the
/// output is the base point, the second half the covector.
#[derive(Clone)]
pub struct CanonicalRelationChart {
    pub n_left: usize,
    pub n_right: usize,
    pub param_names: Vec<String>,
    pub left: SmoothMapHandle,
    pub right: SmoothMapHandle,
    /// Default parameter box used when sampling the chart.
    pub sample_box: DomainBox,
}

impl std::fmt::Debug for CanonicalRelationChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CanonicalRelationChart")
            .field("n_left", &self.n_left)
            .field("n_right", &self.n_right)
            .field("param_names", &self.param_names)
            .finish()
    }
}

impl CanonicalRelationChart {
    pub fn new(
        n_left: usize,
        n_right: usize,
        param_names: Vec<String>,
        left: SmoothMapHandle,
        right: SmoothMapHandle,
        sample_box: DomainBox,
    ) -> Result<Self> {
        let dim = param_names.len();
        if left.dim_in() != dim || right.dim_in() != dim || sample_box.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: left.dim_in() });
        }
        if left.dim_out() != 2 * n_left {
            return Err(Error::DimensionMismatch { expected: 2 * n_left, got: left.dim_out() });
        }
        if right.dim_out() != 2 * n_right {
            return Err(Error::DimensionMismatch { expected: 2 * n_right, got: right.dim_out() });
        }
        Ok(Self { n_left, n_right, param_names, left, right, sample_box })
    }

    pub fn dim(&self) -> usize {
        self.param_names.len()
    }

    /// Evaluate both projections.
    pub fn eval(&self, p: &RealVector) -> Result<(RealVector, RealVector)> {
        Ok((self.left.eval(p)?, self.right.eval(p)?))
    }

    /// `ω_C` pulled back through the left and the right projection.
    pub fn omega_pullbacks(&self, p: &RealVector) -> Result<(RealMatrix, RealMatrix)> {
        let jl = jacobian(self.left.as_ref(), p)?;
        let jr = jacobian(self.right.as_ref(), p)?;
        Ok((pullback_omega(&jl, self.n_left), pullback_omega(&jr, self.n_right)))
    }

    /// `max |π_L*ω − π_R*ω|` relative to the size of the forms.
    pub fn symplectic_defect(&self, p: &RealVector) -> Result<f64> {
        let (l, r) = self.omega_pullbacks(p)?;
        let scale = l.amax().max(r.amax()).max(1.0);
        Ok((l - r).amax() / scale)
    }

    /// The canonical one-form `Σ η_j dy_j` pulled back to the chart.
    pub fn right_one_form(&self, p: &RealVector) -> Result<(RealVector, f64)> {
        canonical_one_form(self.right.as_ref(), p, self.n_right)
    }

    /// The canonical one-form `Σ ξ_j dx_j` pulled back to the chart.
    pub fn left_one_form(&self, p: &RealVector) -> Result<(RealVector, f64)> {
        canonical_one_form(self.left.as_ref(), p, self.n_left)
    }
}

/// `Ω = J_ξᵀ J_x − J_xᵀ J_ξ` for a map into `T*ℝ^nbase` ordered `(x, ξ)`.
pub fn pullback_omega(j: &RealMatrix, nbase: usize) -> RealMatrix {
    let jx = j.rows(0, nbase);
    let jxi = j.rows(nbase, nbase);
    let a = jxi.transpose() * jx;
    &a - a.transpose()
}

/// Pulled-back canonical one-form (as a covector on the chart) and `|covector|`.
fn canonical_one_form(map: &dyn SmoothMap, p: &RealVector, nbase: usize) -> Result<(RealVector, f64)> {
    let v = map.eval(p)?;
    let j = jacobian(map, p)?;
    let xi = v.rows(nbase, nbase).clone_owned();
    let form = j.rows(0, nbase).transpose() * &xi;
    Ok((form, xi.norm()))
}

/// The identity relation on `T*ℝ^n` as a chart: `(x, ξ) ↦ ((x, ξ), (x, ξ))`.
pub fn identity_relation(n: usize) -> CanonicalRelationChart {
    use crate::smallmath::{Poly, PolyMap};
    use std::sync::Arc;
    let comps: Vec<Poly> = (0..2 * n).map(|i| Poly::var(2 * n, i)).collect();
    let map: SmoothMapHandle = Arc::new(PolyMap::new(comps));
    let mut names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    names.extend((1..=n).map(|i| format!("xi{i}")));
    let mut lo = vec![-1.0; 2 * n];
    let hi = vec![1.0; 2 * n];
    for v in lo.iter_mut().skip(n) {
        *v = 0.5;
    }
    let sample_box = DomainBox::new(lo, hi);
    CanonicalRelationChart::new(n, n, names, map.clone(), map, sample_box)
        .expect("identity chart dimensions")
}
