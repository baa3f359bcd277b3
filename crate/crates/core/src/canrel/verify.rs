use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{pullback_omega, CanonicalRelationChart};
use crate::error::{Error, Result};
use crate::singularity::{
    classify_cross_cap, classify_submersion_with_folds, locus_tangent, refine_singular_point,
    sample_at, singular_locus, DomainBox, LocusOptions, SingularityKind,
};
use crate::smallmath::{
    jacobian, numeric_rank, singular_values, RealMatrix, RealVector, SmoothMap, SmoothMapHandle,
    DEFAULT_RANK_TOL,
};

/// Lower bound for the pulled-back canonical one-form on the singular set,
/// relative to the covector norm.
pub const NONRADIAL_MIN: f64 = 1e-4;

/// Where the singular set of `π_R` comes from.
#[derive(Clone)]
pub enum LocusSource {
    /// Grid scan plus Newton refinement over a parameter box.
    Grid { domain: DomainBox, resolution: Vec<usize> },
    /// Refine each seed onto the singular set.
    Seeds(Vec<RealVector>),
}

/// Defining functions of `π_L(𝒮1)` for Poisson-bracket evaluation. Brackets
/// are taken at `π_L(p)` with the covector rescaled so that component
/// `unit_covector_index` equals one (the set is conic).
#[derive(Clone)]
pub struct BracketSpec {
    pub defs: Vec<SmoothMapHandle>,
    pub unit_covector_index: usize,
}

#[derive(Clone)]
pub struct SamplingPlan {
    pub locus: LocusSource,
    pub max_samples: Option<usize>,
    /// Random chart points checked away from the singular set.
    pub off_samples: usize,
    pub seed: u64,
    pub rank_tol: f64,
    pub brackets: Option<BracketSpec>,
}

impl SamplingPlan {
    pub fn grid(domain: DomainBox, resolution: Vec<usize>) -> Self {
        Self {
            locus: LocusSource::Grid { domain, resolution },
            max_samples: None,
            off_samples: 50,
            seed: 0,
            rank_tol: DEFAULT_RANK_TOL,
            brackets: None,
        }
    }

    pub fn seeds(seeds: Vec<RealVector>) -> Self {
        Self {
            locus: LocusSource::Seeds(seeds),
            max_samples: None,
            off_samples: 0,
            seed: 0,
            rank_tol: DEFAULT_RANK_TOL,
            brackets: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FccSampleRecord {
    pub point: Vec<f64>,
    pub corank_left: usize,
    pub corank_right: usize,
    pub right_kind: SingularityKind,
    pub left_kind: SingularityKind,
    pub right_hessian_det: f64,
    pub chi_rank: f64,
    /// `|pullback of Σ η dy on T𝒮1| / |η|`
    pub nonradial_right: f64,
    /// `|pullback of Σ ξ dx on T𝒮1| / |ξ|`
    pub nonradial_left: f64,
    pub omega_rank: usize,
    /// Rank of `ω` restricted to `T𝒮1` (maximal noninvolutivity of `π_L(𝒮1)`).
    pub restricted_omega_rank: usize,
    pub symplectic_defect: f64,
    /// Upper triangle `{p1,p2}, {p1,p3}, {p2,p3}, …` when defining functions are given.
    pub brackets: Option<Vec<f64>>,
    pub pass: bool,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OffLocusSummary {
    pub count: usize,
    pub omega_rank_min: usize,
    pub omega_rank_max: usize,
    pub corank_mismatches: usize,
    pub max_symplectic_defect: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FccReport {
    pub n_left: usize,
    pub n_right: usize,
    pub chart_dim: usize,
    pub singular_sample_count: usize,
    /// Common right verdict when all samples agree.
    pub right_kind: Option<SingularityKind>,
    pub left_kind: Option<SingularityKind>,
    pub min_nonradial_right: f64,
    pub min_nonradial_left: f64,
    pub expected_omega_rank_on_locus: usize,
    pub expected_omega_rank_off_locus: usize,
    pub off_locus: OffLocusSummary,
    pub max_bracket_deviation: Option<f64>,
    pub samples: Vec<FccSampleRecord>,
    pub pass: bool,
    pub failures: Vec<String>,
    /// Observations that do not decide pass/fail (e.g. a restricted ω rank
    /// below the maximal value).
    pub findings: Vec<String>,
    pub note: Option<String>,
}

/// Rank of the pulled-back symplectic form at a chart point.
pub fn omega_rank(chart: &CanonicalRelationChart, p: &RealVector, rank_tol: f64) -> Result<usize> {
    let (_, r) = chart.omega_pullbacks(p)?;
    numeric_rank(&r, rank_tol)
}

/// Poisson brackets `{f, g} = Σ ∂_ξ f ∂_x g − ∂_x f ∂_ξ g` of scalar defining
/// functions on `T*ℝ^n` at a point `(x, ξ)` where all of them vanish.
pub fn poisson_bracket_matrix(defs: &[&dyn SmoothMap], point: &RealVector, tol: f64) -> Result<RealMatrix> {
    let n2 = point.len();
    if n2 % 2 != 0 {
        return Err(Error::DimensionMismatch { expected: n2 + 1, got: n2 });
    }
    let n = n2 / 2;
    let mut grads = Vec::with_capacity(defs.len());
    for (i, d) in defs.iter().enumerate() {
        if d.dim_out() != 1 || d.dim_in() != n2 {
            return Err(Error::DimensionMismatch { expected: n2, got: d.dim_in() });
        }
        let v = d.eval(point)?[0];
        if v.abs() > tol * point.norm().max(1.0) {
            return Err(Error::Precondition(format!(
                "defining function {} does not vanish at the point ({v:e})",
                i + 1
            )));
        }
        grads.push(jacobian(*d, point)?.row(0).transpose());
    }
    let k = defs.len();
    Ok(DMatrix::from_fn(k, k, |a, b| {
        let (ga, gb) = (&grads[a], &grads[b]);
        (0..n).map(|i| ga[n + i] * gb[i] - ga[i] * gb[n + i]).sum()
    }))
}

fn check_sample(
    chart: &CanonicalRelationChart,
    p: &RealVector,
    plan: &SamplingPlan,
) -> Result<FccSampleRecord> {
    let n = chart.n_left;
    let tol = plan.rank_tol;
    let right = chart.right.as_ref();
    let left = chart.left.as_ref();
    let sr = sample_at(right, p, tol)?;
    let sl = sample_at(left, p, tol)?;
    let mut failures = Vec::new();
    if sr.corank != sl.corank {
        failures.push(format!("corank mismatch: right {} left {}", sr.corank, sl.corank));
    }
    let rv = classify_submersion_with_folds(right, &sr)?;
    let lv = classify_cross_cap(left, &sl)?;
    if !matches!(rv.kind, SingularityKind::EllipticSWF | SingularityKind::HyperbolicSWF) {
        failures.push(format!(
            "right projection is {:?}{}",
            rv.kind,
            rv.reason.as_ref().map(|r| format!(" ({r})")).unwrap_or_default()
        ));
    }
    if lv.kind != SingularityKind::CrossCap {
        failures.push(format!(
            "left projection is {:?}{}",
            lv.kind,
            lv.reason.as_ref().map(|r| format!(" ({r})")).unwrap_or_default()
        ));
    }
    let tangent = locus_tangent(right, p)?;
    let (form_r, eta_norm) = chart.right_one_form(p)?;
    let (form_l, xi_norm) = chart.left_one_form(p)?;
    let nonrad_r = (tangent.transpose() * form_r).norm() / eta_norm.max(f64::MIN_POSITIVE);
    let nonrad_l = (tangent.transpose() * form_l).norm() / xi_norm.max(f64::MIN_POSITIVE);
    if nonrad_r < NONRADIAL_MIN {
        failures.push(format!("right image of the singular set is radial here ({nonrad_r:e})"));
    }
    if nonrad_l < NONRADIAL_MIN {
        failures.push(format!("left image of the singular set is radial here ({nonrad_l:e})"));
    }
    let jl = jacobian(left, p)?;
    let jr = jacobian(right, p)?;
    let om_l = pullback_omega(&jl, chart.n_left);
    let om_r = pullback_omega(&jr, chart.n_right);
    let scale = om_l.amax().max(om_r.amax()).max(1.0);
    let defect = (&om_l - &om_r).amax() / scale;
    let rank = numeric_rank(&om_r, tol)?;
    if rank != 2 * n - 4 {
        failures.push(format!("omega rank {rank} on the singular set, expected {}", 2 * n - 4));
    }
    let restricted = tangent.transpose() * &om_l * &tangent;
    let restricted_rank = numeric_rank(&restricted, tol)?;
    let brackets = match &plan.brackets {
        Some(spec) => {
            let mut q = left.eval(p)?;
            let s = q[chart.n_left + spec.unit_covector_index];
            if s == 0.0 {
                return Err(Error::Precondition("bracket normalization component vanishes".into()));
            }
            for i in chart.n_left..2 * chart.n_left {
                q[i] /= s;
            }
            let defs: Vec<&dyn SmoothMap> = spec.defs.iter().map(|d| d.as_ref()).collect();
            let m = poisson_bracket_matrix(&defs, &q, 1e-8)?;
            let k = m.nrows();
            let mut v = Vec::new();
            for a in 0..k {
                for b in a + 1..k {
                    v.push(m[(a, b)]);
                }
            }
            Some(v)
        }
        None => None,
    };
    Ok(FccSampleRecord {
        point: p.iter().copied().collect(),
        corank_left: sl.corank,
        corank_right: sr.corank,
        right_kind: rv.kind,
        left_kind: lv.kind,
        right_hessian_det: rv.diagnostics.get("hessian_det").copied().unwrap_or(f64::NAN),
        chi_rank: lv.diagnostics.get("chi_rank").copied().unwrap_or(f64::NAN),
        nonradial_right: nonrad_r,
        nonradial_left: nonrad_l,
        omega_rank: rank,
        restricted_omega_rank: restricted_rank,
        symplectic_defect: defect,
        brackets,
        pass: failures.is_empty(),
        failures,
    })
}

fn random_point(b: &DomainBox, rng: &mut ChaCha8Rng) -> RealVector {
    RealVector::from_iterator(b.dim(), (0..b.dim()).map(|k| rng.gen_range(b.lo[k]..=b.hi[k])))
}

/// Folded cross cap verification: `π_R` a submersion with folds and `π_L` a
/// cross cap along the same singular set, both images nonradial, and the
/// rank profile of the pulled-back symplectic form.
pub fn verify_folded_cross_cap(chart: &CanonicalRelationChart, plan: &SamplingPlan) -> Result<FccReport> {
    let n = chart.n_left;
    let fcc_shape = chart.dim() == 2 * n - 1 && chart.n_right + 1 == n;
    // generic rank of the pulled-back form is 2 dim Y, two less on the singular set
    let rank_off = 2 * chart.n_right;
    let rank_on = rank_off.saturating_sub(2);
    let right = chart.right.as_ref();
    let mut points: Vec<RealVector> = match &plan.locus {
        LocusSource::Grid { domain, resolution } => {
            let mut opts = LocusOptions::grid(resolution.clone());
            opts.rank_tol = plan.rank_tol;
            opts.max_samples = plan.max_samples;
            singular_locus(right, domain, &opts)?.into_iter().map(|s| s.point).collect()
        }
        LocusSource::Seeds(seeds) => {
            let refined: Vec<Option<RealVector>> = seeds
                .par_iter()
                .map(|s| refine_singular_point(right, s, 1e-10, 60, plan.rank_tol).ok().map(|r| r.point))
                .collect();
            refined.into_iter().flatten().collect()
        }
    };
    if let Some(cap) = plan.max_samples {
        points.truncate(cap);
    }
    if !fcc_shape && !points.is_empty() {
        return Err(Error::Precondition(format!(
            "chart of dimension {} with n_left {} and n_right {} is not of folded cross cap type",
            chart.dim(),
            n,
            chart.n_right
        )));
    }
    let records: Vec<Result<FccSampleRecord>> =
        points.par_iter().map(|p| check_sample(chart, p, plan)).collect();
    let mut samples = Vec::with_capacity(records.len());
    let mut failures = Vec::new();
    for (i, r) in records.into_iter().enumerate() {
        match r {
            Ok(rec) => {
                for f in &rec.failures {
                    failures.push(format!("sample {i}: {f}"));
                }
                samples.push(rec);
            }
            Err(e) => failures.push(format!("sample {i}: {e}")),
        }
    }
    let common = |f: &dyn Fn(&FccSampleRecord) -> SingularityKind| -> Option<SingularityKind> {
        let first = samples.first().map(f)?;
        samples.iter().all(|s| f(s) == first).then_some(first)
    };
    let right_kind = common(&|s| s.right_kind);
    let left_kind = common(&|s| s.left_kind);
    let mut findings = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if s.restricted_omega_rank != rank_on {
            findings.push(format!(
                "sample {i}: ω restricted to the singular set has rank {} (maximal is {rank_on}); \
                 left image is not maximally noninvolutive here",
                s.restricted_omega_rank,
            ));
        }
    }
    // away from the singular set
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut off_pts = Vec::new();
    let mut attempts = 0;
    while off_pts.len() < plan.off_samples && attempts < 20 * plan.off_samples.max(1) {
        attempts += 1;
        let p = random_point(&chart.sample_box, &mut rng);
        if let Ok(j) = jacobian(right, &p) {
            let s = singular_values(&j);
            if s.last().copied().unwrap_or(0.0) > 1e-3 * s[0] {
                off_pts.push(p);
            }
        }
    }
    let off: Vec<Result<(usize, bool, f64)>> = off_pts
        .par_iter()
        .map(|p| {
            let rank = omega_rank(chart, p, plan.rank_tol)?;
            let cl = sample_at(chart.left.as_ref(), p, plan.rank_tol)?.corank;
            let cr = sample_at(right, p, plan.rank_tol)?.corank;
            Ok((rank, cl == cr, chart.symplectic_defect(p)?))
        })
        .collect();
    let mut summary = OffLocusSummary {
        count: 0,
        omega_rank_min: usize::MAX,
        omega_rank_max: 0,
        corank_mismatches: 0,
        max_symplectic_defect: 0.0,
    };
    for r in off {
        let (rank, same, defect) = r?;
        summary.count += 1;
        summary.omega_rank_min = summary.omega_rank_min.min(rank);
        summary.omega_rank_max = summary.omega_rank_max.max(rank);
        summary.corank_mismatches += usize::from(!same);
        summary.max_symplectic_defect = summary.max_symplectic_defect.max(defect);
    }
    if summary.count == 0 {
        summary.omega_rank_min = 0;
    }
    if summary.count > 0 && (summary.omega_rank_min != rank_off || summary.omega_rank_max != rank_off) {
        failures.push(format!(
            "omega rank off the singular set in [{}, {}], expected {rank_off}",
            summary.omega_rank_min, summary.omega_rank_max,
        ));
    }
    if summary.corank_mismatches > 0 {
        failures.push(format!("{} off-locus points with corank(dπ_L) ≠ corank(dπ_R)", summary.corank_mismatches));
    }
    if summary.max_symplectic_defect > 1e-7 {
        failures.push(format!("symplectic pullback defect {:e}", summary.max_symplectic_defect));
    }
    let max_bracket_deviation = plan.brackets.as_ref().map(|_| {
        samples
            .iter()
            .filter_map(|s| s.brackets.as_ref())
            .map(|b| {
                b.iter()
                    .enumerate()
                    .map(|(i, v)| if i == 0 { (v - 1.0).abs() } else { v.abs() })
                    .fold(0.0_f64, f64::max)
            })
            .fold(0.0_f64, f64::max)
    });
    let note = samples.is_empty().then(|| "no singular points".to_string());
    let fold_min = |f: &dyn Fn(&FccSampleRecord) -> f64| samples.iter().map(f).fold(f64::INFINITY, f64::min);
    Ok(FccReport {
        n_left: chart.n_left,
        n_right: chart.n_right,
        chart_dim: chart.dim(),
        singular_sample_count: samples.len(),
        right_kind,
        left_kind,
        min_nonradial_right: fold_min(&|s| s.nonradial_right),
        min_nonradial_left: fold_min(&|s| s.nonradial_left),
        expected_omega_rank_on_locus: rank_on,
        expected_omega_rank_off_locus: rank_off,
        off_locus: summary,
        max_bracket_deviation,
        pass: failures.is_empty(),
        samples,
        failures,
        findings,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canrel::{
        identity_relation, model_image_defining_functions, model_phase, relation_from_generating,
        ModelVariant, DEFAULT_CONE,
    };
    use std::sync::Arc;

    #[test]
    fn model_relation_is_folded_cross_cap() {
        let gf = model_phase(3, DEFAULT_CONE, ModelVariant::Hyperbolic).unwrap();
        let c = relation_from_generating(&gf).unwrap();
        let mut plan = SamplingPlan::grid(c.sample_box.clone(), vec![5, 7, 7, 7, 3]);
        plan.brackets = Some(BracketSpec {
            defs: model_image_defining_functions(3)
                .into_iter()
                .map(|m| Arc::new(m) as SmoothMapHandle)
                .collect(),
            unit_covector_index: 0,
        });
        let rep = verify_folded_cross_cap(&c, &plan).unwrap();
        assert!(rep.pass, "{:?}", &rep.failures[..rep.failures.len().min(5)]);
        assert!(rep.singular_sample_count > 20, "{}", rep.singular_sample_count);
        assert_eq!(rep.right_kind, Some(SingularityKind::HyperbolicSWF));
        assert_eq!(rep.left_kind, Some(SingularityKind::CrossCap));
        assert!(rep.max_bracket_deviation.unwrap() < 1e-6);
        assert!(rep.findings.is_empty());
    }

    #[test]
    fn identity_relation_has_no_singular_points() {
        let c = identity_relation(2);
        let plan = SamplingPlan::grid(c.sample_box.clone(), vec![4, 4, 4, 4]);
        let rep = verify_folded_cross_cap(&c, &plan).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.singular_sample_count, 0);
        assert_eq!(rep.note.as_deref(), Some("no singular points"));
        assert_eq!(rep.off_locus.omega_rank_min, 4);
    }
}
