use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::tilde::TildeChart;
use super::ComposedPoint;
use crate::error::Result;
use crate::singularity::{
    classify_fold, locus_tangent, refine_singular_point, sample_at, SingularityKind,
};
use crate::smallmath::{determinant, jacobian, RealVector, SmoothMap, DEFAULT_RANK_TOL};

#[derive(Debug, Clone)]
pub struct TwoSidedPlan {
    /// Points drawn on `{a = b}` and classified on both sides.
    pub fold_samples: usize,
    /// Off-diagonal points where the two Jacobian determinants are compared.
    pub off_samples: usize,
    /// Seeds near the diagonal refined onto the singular set of each side.
    pub locus_seeds: usize,
    pub seed: u64,
    pub rank_tol: f64,
    /// Allowed distance between the detected fold surface and `Δ ∩ C̃`.
    pub fold_tol: f64,
    pub symmetry_tol: f64,
    pub det_tol: f64,
    /// Composed points of the non-diagonal branch; their swaps must lie on
    /// the chart too.
    pub cloud: Vec<ComposedPoint>,
}

impl Default for TwoSidedPlan {
    fn default() -> Self {
        Self {
            fold_samples: 40,
            off_samples: 100,
            locus_seeds: 20,
            seed: 0,
            rank_tol: DEFAULT_RANK_TOL,
            fold_tol: 1e-6,
            symmetry_tol: 1e-7,
            det_tol: 1e-6,
            cloud: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldSampleRecord {
    pub point: Vec<f64>,
    pub left_kind: SingularityKind,
    pub right_kind: SingularityKind,
    /// `|π_L − π_R|` at the sample, i.e. the distance to the diagonal.
    pub diagonal_distance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoSidedReport {
    pub fold_samples: Vec<FoldSampleRecord>,
    /// Largest distance from a refined singular point of either projection to `Δ`.
    pub fold_surface_max_distance: f64,
    pub fold_surface_points: usize,
    /// Dimension of the detected fold surface (expected `dim C̃ − 1`).
    pub fold_surface_dimension: Option<usize>,
    pub off_samples: usize,
    /// `max ||det dπ_L| − |det dπ_R|| / max(|det dπ_L|, |det dπ_R|)`.
    pub det_max_mismatch: f64,
    pub det_min_abs: f64,
    /// `max ||det dπ_L| − |D|| / |D|` with `D = (a − b) θ1 / 2`.
    pub det_max_dev_from_model: f64,
    /// Largest `|chart(swap p) − swap(chart p)|` over all samples.
    pub symmetry_max: f64,
    /// Largest membership residual of a swapped cloud point.
    pub cloud_swap_max: f64,
    pub sample_box: (Vec<f64>, Vec<f64>),
    pub pass: bool,
    pub failures: Vec<String>,
}

fn random_point(chart: &TildeChart, rng: &mut ChaCha8Rng) -> RealVector {
    let b = &chart.sample_box;
    RealVector::from_iterator(b.dim(), (0..b.dim()).map(|k| rng.gen_range(b.lo[k]..=b.hi[k])))
}

fn fold_kind(map: &dyn SmoothMap, p: &RealVector, rank_tol: f64) -> Result<SingularityKind> {
    let s = sample_at(map, p, rank_tol)?;
    Ok(classify_fold(map, &s)?.kind)
}

fn swap_defect(chart: &TildeChart, p: &RealVector) -> Result<f64> {
    let (l, r) = chart.eval(p)?;
    let q = chart.swapped_params(p)?;
    let (l2, r2) = chart.eval(&q)?;
    let scale = l.amax().max(r.amax()).max(1.0);
    Ok((&l - &r2).amax().max((&r - &l2).amax()) / scale)
}

/// Check that `C̃` is a two-sided fold: both projections are Whitney folds
/// along `{a = b}`, the singular set of each projection is `Δ ∩ C̃`, the
/// Jacobian determinants agree up to sign away from it, and the relation is
/// invariant under `(x, ξ) ↔ (y, η)`.
pub fn verify_two_sided_fold(chart: &TildeChart, plan: &TwoSidedPlan) -> Result<TwoSidedReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let (ia, ib) = (chart.a_index(), chart.b_index());
    let mut failures = Vec::new();

    let fold_pts: Vec<RealVector> = (0..plan.fold_samples)
        .map(|_| {
            let mut p = random_point(chart, &mut rng);
            p[ib] = p[ia];
            p
        })
        .collect();
    let off_pts: Vec<RealVector> = (0..plan.off_samples)
        .map(|_| loop {
            let p = random_point(chart, &mut rng);
            if (p[ia] - p[ib]).abs() >= 0.05 {
                break p;
            }
        })
        .collect();
    let seeds: Vec<RealVector> = (0..plan.locus_seeds)
        .map(|_| {
            let mut p = random_point(chart, &mut rng);
            p[ib] = p[ia] + rng.gen_range(-0.05..=0.05);
            p
        })
        .collect();

    let fold_records: Vec<FoldSampleRecord> = fold_pts
        .par_iter()
        .map(|p| -> Result<FoldSampleRecord> {
            let lk = fold_kind(chart.left.as_ref(), p, plan.rank_tol)?;
            let rk = fold_kind(chart.right.as_ref(), p, plan.rank_tol)?;
            let (l, r) = chart.eval(p)?;
            let dd = (&l - &r).norm() / l.norm().max(1.0);
            let pass = lk == SingularityKind::Fold && rk == SingularityKind::Fold && dd <= plan.fold_tol;
            Ok(FoldSampleRecord { point: p.iter().copied().collect(), left_kind: lk, right_kind: rk, diagonal_distance: dd, pass })
        })
        .collect::<Result<_>>()?;
    for r in fold_records.iter().filter(|r| !r.pass) {
        failures.push(format!(
            "fold sample {:?}: left {:?}, right {:?}, diagonal distance {:e}",
            r.point, r.left_kind, r.right_kind, r.diagonal_distance
        ));
    }

    // singular sets of both projections, found from seeds off the diagonal
    let refined: Vec<(RealVector, f64)> = seeds
        .par_iter()
        .flat_map_iter(|s| {
            [chart.left.as_ref(), chart.right.as_ref()].into_iter().filter_map(move |map| {
                let p = refine_singular_point(map, s, 1e-10, 60, plan.rank_tol).ok()?.point;
                let (l, r) = chart.eval(&p).ok()?;
                Some((p, (&l - &r).norm() / l.norm().max(1.0)))
            })
        })
        .collect();
    let fold_surface_max_distance = refined.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    if plan.locus_seeds > 0 && refined.is_empty() {
        failures.push("no singular point found from the locus seeds".into());
    }
    if fold_surface_max_distance > plan.fold_tol {
        failures.push(format!("detected fold surface is {fold_surface_max_distance:e} from the diagonal"));
    }
    let fold_surface_dimension = match refined.first() {
        Some((p, _)) => Some(locus_tangent(chart.left.as_ref(), p)?.ncols()),
        None => None,
    };
    if let Some(d) = fold_surface_dimension {
        if d + 1 != chart.dim() {
            failures.push(format!("fold surface has dimension {d}, expected {}", chart.dim() - 1));
        }
    }

    let det_rows: Vec<(f64, f64, f64)> = off_pts
        .par_iter()
        .map(|p| -> Result<(f64, f64, f64)> {
            let dl = determinant(&jacobian(chart.left.as_ref(), p)?);
            let dr = determinant(&jacobian(chart.right.as_ref(), p)?);
            let big = dl.abs().max(dr.abs());
            let mismatch = if big > 0.0 { (dl.abs() - dr.abs()).abs() / big } else { 0.0 };
            let d = (p[ia] - p[ib]) / 2.0 * p[chart.m + 1];
            Ok((mismatch, dl.abs().min(dr.abs()), (dl.abs() - d.abs()).abs() / d.abs()))
        })
        .collect::<Result<_>>()?;
    let det_max_mismatch = det_rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let det_min_abs = det_rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let det_max_dev_from_model = det_rows.iter().map(|r| r.2).fold(0.0, f64::max);
    if det_max_mismatch > plan.det_tol {
        failures.push(format!("det dπ_L and det dπ_R differ by {det_max_mismatch:e} (relative)"));
    }
    if det_min_abs == 0.0 {
        failures.push("a projection is singular off the diagonal".into());
    }

    let symmetry_max = fold_pts
        .par_iter()
        .chain(off_pts.par_iter())
        .map(|p| swap_defect(chart, p))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    if symmetry_max > plan.symmetry_tol {
        failures.push(format!("chart not invariant under the swap: {symmetry_max:e}"));
    }
    let cloud_swap_max = plan
        .cloud
        .par_iter()
        .map(|c| {
            let s = c.swapped();
            Ok(chart.membership_residual(&s)? / s.scale())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    if cloud_swap_max > plan.symmetry_tol {
        failures.push(format!("swapped composed points leave C̃ by {cloud_swap_max:e}"));
    }

    Ok(TwoSidedReport {
        fold_samples: fold_records,
        fold_surface_max_distance,
        fold_surface_points: refined.len(),
        fold_surface_dimension,
        off_samples: off_pts.len(),
        det_max_mismatch,
        det_min_abs,
        det_max_dev_from_model,
        symmetry_max,
        cloud_swap_max,
        sample_box: (chart.sample_box.lo.clone(), chart.sample_box.hi.clone()),
        pass: failures.is_empty(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compose::tilde::model_tilde_chart;

    #[test]
    fn model_tilde_is_a_two_sided_fold() {
        for n in [3, 4] {
            let chart = model_tilde_chart(n).unwrap();
            let rep = verify_two_sided_fold(&chart, &TwoSidedPlan::default()).unwrap();
            assert!(rep.pass, "{:?}", rep.failures);
            assert!(rep.det_max_dev_from_model < 1e-10);
            assert_eq!(rep.fold_surface_dimension, Some(2 * n - 3));
        }
    }
}
