use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::Check;
use crate::canrel::{relation_from_generating, verify_folded_cross_cap, weak_normal_phase, SamplingPlan, WeakNormalPieces};
use crate::compose::{
    classify_branch, compose_numeric, implicit_tilde_chart, symmetric_seeds, verify_two_sided_fold, BranchKind,
    ChartTilde, ComposeOptions, TwoSidedPlan,
};
use crate::error::{Error, Result};
use crate::smallmath::{Poly, RealVector};

/// A named weak-normal-form family member: the pieces `S1, S5, S6, S7` as
/// polynomials in `(x, y_{n-1}, θ'')`.
#[derive(Debug, Clone)]
pub struct WeakNormalSpec {
    pub name: String,
    pub n: usize,
    pub pieces: WeakNormalPieces,
}

impl WeakNormalSpec {
    /// `max(‖S5‖, ‖S6‖, ‖S7‖)` in the largest-coefficient norm.
    pub fn perturbation_size(&self) -> f64 {
        let p = &self.pieces;
        p.s5.max_coefficient().max(p.s6.max_coefficient()).max(p.s7.max_coefficient())
    }

    /// `min |∂_y S1 + 2 S5| / |θ1|` over random points of the expected
    /// singular set `{x_{n-1} = 0, x_n + y_{n-1} = 0}`.
    pub fn nondegeneracy(&self, samples: usize, seed: u64) -> f64 {
        let n = self.n;
        let nv = 2 * n - 1;
        let nd = self.pieces.s1.deriv(n).add(&self.pieces.s5.scale(2.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = f64::INFINITY;
        for _ in 0..samples {
            let mut p: Vec<f64> = (0..nv).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            p[n + 1] = rng.gen_range(0.5..=1.5);
            p[n - 2] = 0.0;
            p[n - 1] = -p[n];
            worst = worst.min(nd.eval(&p).abs() / p[n + 1]);
        }
        worst
    }
}

/// Five members for `n = 3` with `‖S5‖, ‖S6‖, ‖S7‖ ≤ 0.05` and
/// `∂_y S1 + 2 S5` bounded away from zero.
pub fn default_perturbations() -> Vec<WeakNormalSpec> {
    let n = 3;
    let nv = 2 * n - 1;
    let v = |i: usize| Poly::var(nv, i);
    let (x1, x2, x3, y, t1) = (v(0), v(1), v(2), v(3), v(4));
    let model = WeakNormalPieces::model(n);
    let make = |name: &str, s1: Poly, s5: Poly, s6: Poly, s7: Poly| WeakNormalSpec {
        name: name.into(),
        n,
        pieces: WeakNormalPieces { s1, s5, s6, s7 },
    };
    vec![
        make("s5-constant", model.s1.clone(), t1.scale(0.05), Poly::zero(nv), Poly::zero(nv)),
        make("s6-s7", model.s1.clone(), Poly::zero(nv), x1.mul(&t1).scale(0.05), t1.scale(0.03)),
        make(
            "mixed",
            model.s1.clone(),
            x3.mul(&t1).scale(0.03),
            t1.scale(0.02),
            y.mul(&t1).scale(0.05),
        ),
        make(
            "s1-tilt",
            model.s1.add(&x1.mul(&t1).scale(0.05)),
            t1.scale(-0.04),
            Poly::zero(nv),
            x2.mul(&t1).scale(0.02),
        ),
        make(
            "all-negative",
            model.s1.clone(),
            x2.mul(&t1).scale(-0.05),
            t1.scale(-0.05),
            x1.mul(&t1).scale(-0.05),
        ),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationReport {
    pub name: String,
    pub perturbation_size: f64,
    pub nondegeneracy: f64,
    pub fcc_pass: bool,
    pub fcc_samples: usize,
    pub right_kind: Option<String>,
    pub left_kind: Option<String>,
    pub two_sided_pass: bool,
    pub fold_surface_max_distance: f64,
    pub composed_points: usize,
    pub composed_tilde: usize,
    pub composed_unknown: usize,
    pub cloud_swap_max: f64,
    pub failures: Vec<String>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComposeVerifyReport {
    pub seed: u64,
    pub members: Vec<PerturbationReport>,
    pub pass: bool,
}

fn check_member(spec: &WeakNormalSpec, seed: u64, fold_tol: f64, composed_legs: usize) -> Result<PerturbationReport> {
    let n = spec.n;
    let gf = weak_normal_phase(n, 0.5, &spec.pieces)?;
    let chart = relation_from_generating(&gf)?;
    // folded cross cap structure of C
    let mut res = vec![3; n - 2];
    res.extend([7, 7, 7]);
    res.extend(std::iter::repeat(2).take(n - 2));
    let mut plan = SamplingPlan::grid(chart.sample_box.clone(), res);
    plan.max_samples = Some(120);
    plan.off_samples = 30;
    plan.seed = seed;
    let fcc = verify_folded_cross_cap(&chart, &plan)?;

    // composed points off the diagonal, labeled through the implicit chart of C̃
    let tilde = implicit_tilde_chart(&gf)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7c3);
    let b = &chart.sample_box;
    let firsts: Vec<RealVector> = (0..composed_legs)
        .map(|_| RealVector::from_iterator(b.dim(), (0..b.dim()).map(|k| rng.gen_range(b.lo[k]..=b.hi[k]))))
        .collect();
    let delta = (b.hi[n] - b.lo[n]) / 6.0;
    let labeled: Vec<(crate::compose::ComposedPoint, BranchKind)> = firsts
        .par_iter()
        .map(|p| -> Result<Vec<_>> {
            let seeds = symmetric_seeds(p, &[n], delta, 6);
            let out = compose_numeric(&chart, p, &[n - 2], &seeds, &ComposeOptions::default())?;
            out.points
                .into_iter()
                .map(|c| {
                    let l = classify_branch(&c, &ChartTilde(&tilde), 1e-8)?;
                    Ok((c, l.kind))
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let composed_unknown = labeled.iter().filter(|(_, k)| *k == BranchKind::Unknown).count();
    let cloud: Vec<_> = labeled.iter().filter(|(_, k)| *k == BranchKind::TildeC).map(|(c, _)| c.clone()).collect();
    let composed_tilde = cloud.len();

    let tplan = TwoSidedPlan { seed, fold_tol, cloud, fold_samples: 30, off_samples: 60, ..TwoSidedPlan::default() };
    let two = verify_two_sided_fold(&tilde, &tplan)?;

    let size = spec.perturbation_size();
    let nondeg = spec.nondegeneracy(256, seed);
    let checks = vec![
        Check::at_most("perturbation_size", size, 0.05),
        Check::at_least("nondegeneracy", nondeg, 0.1),
        Check::flag("fcc", fcc.pass, fcc.failures.first().cloned().unwrap_or_default()),
        Check::flag("fcc.left_cross_cap", fcc.left_kind.map(|k| format!("{k:?}")).as_deref() == Some("CrossCap"), ""),
        Check::at_least("fcc.samples", fcc.singular_sample_count as f64, 1.0),
        Check::flag("two_sided", two.pass, two.failures.first().cloned().unwrap_or_default()),
        Check::at_most("two_sided.fold_surface_distance", two.fold_surface_max_distance, fold_tol),
        Check::at_most("composition.unknown_points", composed_unknown as f64, 0.0),
        Check::at_least("composition.tilde_points", composed_tilde as f64, 1.0),
    ];
    let mut failures: Vec<String> = fcc.failures.iter().take(5).cloned().collect();
    failures.extend(two.failures.iter().take(5).cloned());
    Ok(PerturbationReport {
        name: spec.name.clone(),
        perturbation_size: size,
        nondegeneracy: nondeg,
        fcc_pass: fcc.pass,
        fcc_samples: fcc.singular_sample_count,
        right_kind: fcc.right_kind.map(|k| format!("{k:?}")),
        left_kind: fcc.left_kind.map(|k| format!("{k:?}")),
        two_sided_pass: two.pass,
        fold_surface_max_distance: two.fold_surface_max_distance,
        composed_points: labeled.len(),
        composed_tilde,
        composed_unknown,
        cloud_swap_max: two.cloud_swap_max,
        failures,
        checks,
    })
}

/// Folded cross cap check of `C` and two-sided fold check of the composed
/// non-diagonal branch for each weak-normal-form member.
pub fn compose_verify(specs: &[WeakNormalSpec], seed: u64, fold_tol: f64, composed_legs: usize) -> Result<ComposeVerifyReport> {
    if specs.is_empty() {
        return Err(Error::Precondition("no weak-normal-form members given".into()));
    }
    let members = specs
        .iter()
        .map(|s| check_member(s, seed, fold_tol, composed_legs))
        .collect::<Result<Vec<_>>>()?;
    let pass = members.iter().all(|m| m.checks.iter().all(|c| c.pass));
    Ok(ComposeVerifyReport { seed, members, pass })
}
