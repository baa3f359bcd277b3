use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::Check;
use crate::canrel::{
    model_image_defining_functions, model_phase, relation_from_generating, verify_folded_cross_cap, BracketSpec,
    CanonicalRelationChart, ModelVariant, SamplingPlan, DEFAULT_CONE,
};
use crate::compose::{
    classify_branch, compose_model_point, compose_numeric, implicit_tilde_chart, model_tilde_chart,
    symmetric_seeds, verify_two_sided_fold, BranchKind, ChartTilde, ComposeOptions, ComposedPoint, ModelLeg,
    ModelTilde, TildeChart, TildeMembership, TwoSidedPlan,
};
use crate::error::Result;
use crate::singularity::{singular_locus, LocusOptions};
use crate::smallmath::{RealVector, SmoothMapHandle, DEFAULT_RANK_TOL};

#[derive(Debug, Clone)]
pub struct ModelVerifyOptions {
    pub n: usize,
    pub variant: ModelVariant,
    /// Random first legs fed to the numeric composition.
    pub samples: usize,
    pub seed: u64,
    /// Containment, label and closed-form tolerance.
    pub tol: f64,
    /// Grid for the singular-locus scan of `π_R`; `None` picks one by `n`.
    pub locus_resolution: Option<Vec<usize>>,
    pub min_fcc_samples: usize,
    /// Composed points from the containment run handed to the two-sided
    /// fold check as a swap cloud.
    pub cloud_size: usize,
}

impl ModelVerifyOptions {
    pub fn new(n: usize, variant: ModelVariant) -> Self {
        Self {
            n,
            variant,
            samples: 10_000,
            seed: 0,
            tol: 1e-8,
            locus_resolution: None,
            min_fcc_samples: 100,
            cloud_size: 200,
        }
    }

    fn resolution(&self) -> Vec<usize> {
        if let Some(r) = &self.locus_resolution {
            return r.clone();
        }
        // (x1, …, x_{n-2}) and θ'' coarse, x_{n-1}, x_n, y_{n-1} fine;
        // about 2.7 locus points per coarse cell
        let (c1, ct) = if self.n == 3 { (8, 6) } else { (3, 2) };
        let mut r = vec![c1; self.n - 2];
        r.extend([8, 8, 8]);
        r.extend(std::iter::repeat(ct).take(self.n - 2));
        r
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ContainmentReport {
    pub n: usize,
    pub samples: usize,
    pub composed_points: usize,
    pub delta: usize,
    pub tilde: usize,
    pub intersection: usize,
    pub unknown: usize,
    /// Largest `min(dist to Δ, residual for C̃)`, relative to the point scale.
    pub max_residual: f64,
    /// Points whose label disagrees with `x_{n-1} = y_{n-1}`.
    pub label_mismatches: usize,
    /// Largest distance between a numeric point and the closed form (hyperbolic only).
    pub max_closed_form_deviation: Option<f64>,
    pub closed_form_compared: usize,
    /// Non-diagonal points the closed form predicts inside the admissible box
    /// that the numeric solve missed.
    pub closed_form_missed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub locus_points: usize,
    /// Largest distance from a detected singular point to `{x_{n-1} = 0, x_n + y_{n-1} = 0}`.
    pub locus_max_distance: f64,
    /// Largest distance in `(x_n, y_{n-1})` from a point of the model set to
    /// the detected points. Bounded by the grid spacing, so informational.
    pub locus_coverage: f64,
    pub fcc_samples: usize,
    pub right_kind: Option<String>,
    pub left_kind: Option<String>,
    pub max_bracket_deviation: Option<f64>,
    pub omega_rank_on_locus: (usize, usize),
    pub omega_rank_off_locus: (usize, usize),
    pub expected_omega_rank: (usize, usize),
    pub max_image_residual: f64,
    pub min_nonradial: (f64, f64),
    pub fcc_pass: bool,
    pub fcc_failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoSidedSummary {
    pub pass: bool,
    pub fold_samples: usize,
    pub fold_surface_max_distance: f64,
    pub fold_surface_dimension: Option<usize>,
    pub det_max_mismatch: f64,
    pub det_min_abs: f64,
    pub symmetry_max: f64,
    pub cloud_swap_max: f64,
    pub cloud_size: usize,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelVerifyReport {
    pub n: usize,
    pub variant: String,
    pub seed: u64,
    pub tol: f64,
    pub containment: ContainmentReport,
    pub structure: StructureReport,
    pub two_sided: TwoSidedSummary,
    pub checks: Vec<Check>,
    pub pass: bool,
}

fn random_in(b: &crate::singularity::DomainBox, rng: &mut ChaCha8Rng) -> RealVector {
    RealVector::from_iterator(b.dim(), (0..b.dim()).map(|k| rng.gen_range(b.lo[k]..=b.hi[k])))
}

fn flat_distance(a: &ComposedPoint, b: &ComposedPoint) -> f64 {
    let (fa, fb) = (a.flat(), b.flat());
    let d: f64 = fa.iter().zip(&fb).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    d / a.scale()
}

/// The closed-form point matching a numeric one: legs read off `(x, ξ)` and
/// `y_{n-1}`, the diagonal witness off `z`.
fn closed_form_partner(p: &ComposedPoint, on_diagonal: bool) -> Result<Option<ComposedPoint>> {
    let n = p.x.len() + 1;
    let a = p.x[n - 2];
    let b = if on_diagonal { a } else { p.y[n - 2] };
    let leg = ModelLeg {
        n,
        a,
        b,
        x1: p.x[0],
        x_mid: p.x[1..n - 2].to_vec(),
        theta: p.xi[..n - 2].to_vec(),
        diagonal_witness: (p.z[n - 2], p.z[n - 1]),
    };
    let pts = compose_model_point(&leg)?;
    Ok(if on_diagonal { pts.into_iter().nth(1) } else { pts.into_iter().next() })
}

struct SampleOutcome {
    points: Vec<(ComposedPoint, BranchKind, f64, bool)>,
    closed: Option<f64>,
    compared: usize,
    missed: usize,
}

/// Compose `C₀ᵗ∘C₀` numerically from random first legs and check each
/// composed point against `Δ ∪ C̃₀`.
///
/// The unknowns are the first-leg `x_{n-1}` and the whole second leg. For the
/// hyperbolic variant every point is also compared with the closed form, and
/// the closed-form non-diagonal point is required to be found whenever both of
/// its legs lie in the admissible box.
pub fn composition_containment(
    chart: &CanonicalRelationChart,
    tilde: &dyn TildeMembership,
    opts: &ModelVerifyOptions,
) -> Result<(ContainmentReport, Vec<ComposedPoint>)> {
    let n = opts.n;
    let hyperbolic = opts.variant == ModelVariant::Hyperbolic;
    let b = &chart.sample_box;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let firsts: Vec<RealVector> = (0..opts.samples).map(|_| random_in(b, &mut rng)).collect();
    // seeds for y_{n-1} across the whole admissible range
    let delta = 1.5 * (b.hi[n] - b.lo[n]) / 16.0;
    let copts = ComposeOptions { tol: 1e-13, ..ComposeOptions::default() };
    let admissible = {
        let lo = b.lo.iter().zip(&b.hi).map(|(l, h)| l - 0.25 * (h - l)).collect();
        let hi = b.lo.iter().zip(&b.hi).map(|(l, h)| h + 0.25 * (h - l)).collect();
        crate::singularity::DomainBox::new(lo, hi)
    };
    let free = [n - 2];
    let outcomes: Vec<SampleOutcome> = firsts
        .par_iter()
        .map(|p| -> Result<SampleOutcome> {
            let seeds = symmetric_seeds(p, &[n], delta, 16);
            let out = compose_numeric(chart, p, &free, &seeds, &copts)?;
            let mut points = Vec::new();
            let mut closed: Option<f64> = None;
            let mut compared = 0;
            let mut have_tilde = false;
            for c in out.points {
                let label = classify_branch(&c, tilde, opts.tol)?;
                let res = label.delta_distance.min(label.tilde_distance);
                let a = c.x[n - 2];
                let bb = c.y[n - 2];
                let predicate = (a - bb).abs() <= opts.tol * c.scale();
                let agrees = match label.kind {
                    BranchKind::Delta | BranchKind::Intersection => predicate,
                    BranchKind::TildeC => !predicate,
                    BranchKind::Unknown => false,
                };
                if hyperbolic && label.kind != BranchKind::Unknown {
                    let on_diag = label.kind == BranchKind::Delta;
                    if let Some(cf) = closed_form_partner(&c, on_diag)? {
                        let d = flat_distance(&c, &cf);
                        closed = Some(closed.map_or(d, |m: f64| m.max(d)));
                        compared += 1;
                    }
                    have_tilde |= !on_diag;
                }
                points.push((c, label.kind, res, agrees));
            }
            // the closed form's non-diagonal point for this first leg
            let mut missed = 0;
            if hyperbolic && !have_tilde {
                let (a, zn) = (p[n], p[n - 1]);
                let bb = -2.0 * zn - a;
                let mut q = p.clone();
                q[n - 2] = 0.0;
                let mut q2 = q.clone();
                q2[n] = bb;
                let margin = 0.02 * (admissible.hi[n] - admissible.lo[n]);
                let inside = |v: &RealVector| {
                    (0..v.len()).all(|k| v[k] >= admissible.lo[k] + margin && v[k] <= admissible.hi[k] - margin)
                };
                if inside(&q) && inside(&q2) && (a - bb).abs() > 1e-3 {
                    missed = 1;
                }
            }
            Ok(SampleOutcome { points, closed, compared, missed })
        })
        .collect::<Result<_>>()?;
    let mut rep = ContainmentReport {
        n,
        samples: opts.samples,
        composed_points: 0,
        delta: 0,
        tilde: 0,
        intersection: 0,
        unknown: 0,
        max_residual: 0.0,
        label_mismatches: 0,
        max_closed_form_deviation: hyperbolic.then_some(0.0),
        closed_form_compared: 0,
        closed_form_missed: 0,
    };
    let mut cloud = Vec::new();
    for o in outcomes {
        for (c, kind, res, agrees) in o.points {
            rep.composed_points += 1;
            match kind {
                BranchKind::Delta => rep.delta += 1,
                BranchKind::TildeC => rep.tilde += 1,
                BranchKind::Intersection => rep.intersection += 1,
                BranchKind::Unknown => rep.unknown += 1,
            }
            rep.max_residual = rep.max_residual.max(res);
            rep.label_mismatches += usize::from(!agrees);
            if kind == BranchKind::TildeC && cloud.len() < opts.cloud_size {
                cloud.push(c);
            }
        }
        if let (Some(m), Some(d)) = (rep.max_closed_form_deviation.as_mut(), o.closed) {
            *m = m.max(d);
        }
        rep.closed_form_compared += o.compared;
        rep.closed_form_missed += o.missed;
    }
    Ok((rep, cloud))
}

/// Singular locus, folded cross cap verdicts, brackets, ω ranks and the
/// image equations for the model relation.
pub fn model_structure(chart: &CanonicalRelationChart, opts: &ModelVerifyOptions) -> Result<StructureReport> {
    let n = opts.n;
    let right = chart.right.as_ref();
    let domain = chart.sample_box.clone();
    let mut lopts = LocusOptions::grid(opts.resolution());
    lopts.rank_tol = DEFAULT_RANK_TOL;
    let locus = singular_locus(right, &domain, &lopts)?;
    // distance in parameter space to {x_{n-1} = 0, x_n + y_{n-1} = 0}
    let model_dist = |p: &RealVector| (p[n - 2].powi(2) + (p[n - 1] + p[n]).powi(2) / 2.0).sqrt();
    let locus_max_distance = locus.iter().map(|s| model_dist(&s.point)).fold(0.0, f64::max);
    // coverage: model-set points on a grid in (x_n, y_{n-1}) at the box center otherwise
    let mut coverage: f64 = 0.0;
    let center: Vec<f64> = domain.lo.iter().zip(&domain.hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let k = 7;
    for i in 0..k {
        let y = domain.lo[n] + (domain.hi[n] - domain.lo[n]) * (i as f64 + 0.5) / k as f64;
        let xn = -y;
        if xn < domain.lo[n - 1] || xn > domain.hi[n - 1] {
            continue;
        }
        let mut q = center.clone();
        q[n - 2] = 0.0;
        q[n - 1] = xn;
        q[n] = y;
        // only the fine coordinates are compared; coarse ones are free along the set
        let d = locus
            .iter()
            .map(|s| ((s.point[n - 1] - q[n - 1]).powi(2) + (s.point[n] - q[n]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        coverage = coverage.max(d);
    }

    let defs: Vec<SmoothMapHandle> = model_image_defining_functions(n)
        .into_iter()
        .map(|m| Arc::new(m) as SmoothMapHandle)
        .collect();
    let mut plan = SamplingPlan::seeds(locus.iter().map(|s| s.point.clone()).collect());
    plan.off_samples = 50;
    plan.seed = opts.seed;
    plan.brackets = Some(BracketSpec { defs: defs.clone(), unit_covector_index: 0 });
    let fcc = verify_folded_cross_cap(chart, &plan)?;
    let on = fcc.samples.iter().map(|s| s.omega_rank);
    let omega_rank_on_locus = (on.clone().min().unwrap_or(0), on.max().unwrap_or(0));
    let mut max_image_residual: f64 = 0.0;
    for s in &fcc.samples {
        let p = RealVector::from_vec(s.point.clone());
        let l = chart.left.eval(&p)?;
        let scale = l.rows(n, n).amax().max(1.0);
        for d in &defs {
            max_image_residual = max_image_residual.max(d.eval(&l)?[0].abs() / scale);
        }
        // right image: η_{n-1} = y_{n-1}² η_1 in T*ℝ^{n-1}
        let r = chart.right.eval(&p)?;
        let m = n - 1;
        let rscale = r.rows(m, m).amax().max(1.0);
        let right_res = (r[2 * m - 1] - r[m - 1] * r[m - 1] * r[m]).abs() / rscale;
        max_image_residual = max_image_residual.max(right_res);
    }
    Ok(StructureReport {
        locus_points: locus.len(),
        locus_max_distance,
        locus_coverage: coverage,
        fcc_samples: fcc.singular_sample_count,
        right_kind: fcc.right_kind.map(|k| format!("{k:?}")),
        left_kind: fcc.left_kind.map(|k| format!("{k:?}")),
        max_bracket_deviation: fcc.max_bracket_deviation,
        omega_rank_on_locus,
        omega_rank_off_locus: (fcc.off_locus.omega_rank_min, fcc.off_locus.omega_rank_max),
        expected_omega_rank: (fcc.expected_omega_rank_on_locus, fcc.expected_omega_rank_off_locus),
        max_image_residual,
        min_nonradial: (fcc.min_nonradial_right, fcc.min_nonradial_left),
        fcc_pass: fcc.pass,
        fcc_failures: fcc.failures.into_iter().take(20).collect(),
    })
}

fn summarize_two_sided(chart: &TildeChart, cloud: Vec<ComposedPoint>, seed: u64) -> Result<TwoSidedSummary> {
    let cloud_size = cloud.len();
    let plan = TwoSidedPlan { seed, cloud, ..TwoSidedPlan::default() };
    let r = verify_two_sided_fold(chart, &plan)?;
    Ok(TwoSidedSummary {
        pass: r.pass,
        fold_samples: r.fold_samples.len(),
        fold_surface_max_distance: r.fold_surface_max_distance,
        fold_surface_dimension: r.fold_surface_dimension,
        det_max_mismatch: r.det_max_mismatch,
        det_min_abs: r.det_min_abs,
        symmetry_max: r.symmetry_max,
        cloud_swap_max: r.cloud_swap_max,
        cloud_size,
        failures: r.failures.into_iter().take(20).collect(),
    })
}

/// Composition containment, structure of `C₀` and the two-sided fold of
/// `C̃₀` for the model relation.
pub fn model_verify(opts: &ModelVerifyOptions) -> Result<ModelVerifyReport> {
    let gf = model_phase(opts.n, DEFAULT_CONE, opts.variant)?;
    let chart = relation_from_generating(&gf)?;
    let tilde_chart = match opts.variant {
        ModelVariant::Hyperbolic => model_tilde_chart(opts.n)?,
        ModelVariant::Elliptic => implicit_tilde_chart(&gf)?,
    };
    let (containment, cloud) = match opts.variant {
        ModelVariant::Hyperbolic => composition_containment(&chart, &ModelTilde, opts)?,
        ModelVariant::Elliptic => composition_containment(&chart, &ChartTilde(&tilde_chart), opts)?,
    };
    let structure = model_structure(&chart, opts)?;
    let two_sided = summarize_two_sided(&tilde_chart, cloud, opts.seed)?;

    let tol = opts.tol;
    let mut checks = vec![
        Check::at_most("containment.max_residual", containment.max_residual, tol),
        Check::at_most("containment.unknown_points", containment.unknown as f64, 0.0),
        Check::at_most("containment.label_mismatches", containment.label_mismatches as f64, 0.0),
        Check::at_least("containment.composed_points", containment.composed_points as f64, opts.samples as f64),
    ];
    if let Some(d) = containment.max_closed_form_deviation {
        checks.push(Check::at_most("containment.closed_form_deviation", d, tol));
        checks.push(Check::at_most("containment.closed_form_missed", containment.closed_form_missed as f64, 0.0));
    }
    checks.extend([
        Check::at_most("structure.locus_distance", structure.locus_max_distance, 1e-6).with_detail(format!(
            "{} locus points; coverage gap {:.3e}",
            structure.locus_points, structure.locus_coverage
        )),
        Check::at_least("structure.fcc_samples", structure.fcc_samples as f64, opts.min_fcc_samples as f64),
        Check::flag(
            "structure.right_kind",
            structure.right_kind.as_deref() == Some(expected_right(opts.variant)),
            structure.right_kind.clone().unwrap_or_else(|| "mixed".into()),
        ),
        Check::flag(
            "structure.left_kind",
            structure.left_kind.as_deref() == Some("CrossCap"),
            structure.left_kind.clone().unwrap_or_else(|| "mixed".into()),
        ),
        Check::flag("structure.fcc", structure.fcc_pass, structure.fcc_failures.first().cloned().unwrap_or_default()),
        Check::flag(
            "structure.omega_rank_profile",
            structure.omega_rank_on_locus == (2 * opts.n - 4, 2 * opts.n - 4)
                && structure.omega_rank_off_locus == (2 * opts.n - 2, 2 * opts.n - 2),
            format!("on {:?}, off {:?}", structure.omega_rank_on_locus, structure.omega_rank_off_locus),
        ),
        Check::at_most("structure.image_equations", structure.max_image_residual, tol),
        Check::flag("two_sided.fold", two_sided.pass, two_sided.failures.first().cloned().unwrap_or_default()),
        Check::at_most("two_sided.symmetry", two_sided.symmetry_max.max(two_sided.cloud_swap_max), 1e-7),
        Check::at_most("two_sided.det_relation", two_sided.det_max_mismatch, 1e-6),
    ]);
    if let Some(b) = structure.max_bracket_deviation {
        checks.push(Check::at_most("structure.brackets", b, 1e-6));
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(ModelVerifyReport {
        n: opts.n,
        variant: opts.variant.name().into(),
        seed: opts.seed,
        tol,
        containment,
        structure,
        two_sided,
        checks,
        pass,
    })
}

fn expected_right(v: ModelVariant) -> &'static str {
    match v {
        ModelVariant::Hyperbolic => "HyperbolicSWF",
        ModelVariant::Elliptic => "EllipticSWF",
    }
}
