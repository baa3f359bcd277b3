use rayon::prelude::*;
use serde::Serialize;

use super::Check;
use crate::canrel::{verify_folded_cross_cap, SamplingPlan};
use crate::error::Result;
use crate::raytrace::{
    bicharacteristic_flow, build_marine_relation, fan_spreading_zeros, flow_state, spreading_zero_near, CausticKind,
    FanSpec, FlowOptions, MarineSummary, MarineWindow, RayState, SoundspeedModel,
};

#[derive(Debug, Clone)]
pub struct MarineVerifyOptions {
    pub model: SoundspeedModel,
    pub window: MarineWindow,
    pub tau: (f64, f64),
    /// Fixed step of the per-ray spreading oracle.
    pub oracle_step: f64,
    /// Allowed distance between a scanned fold and its oracle zero.
    pub oracle_tol: f64,
    /// Coarse fan for the independent nonempty check.
    pub fan: FanSpec,
    pub fan_step: f64,
    pub min_samples: usize,
    pub off_samples: usize,
    pub seed: u64,
    pub conservation_tol: f64,
}

impl MarineVerifyOptions {
    /// The Gaussian lens of base 1, depth 0.3, width 1 centered at `(0, 0, 2)`.
    pub fn standard_lens() -> Self {
        let window = MarineWindow::standard_lens();
        let mut fan = window.scan.fan.clone();
        fan.n_polar = 10;
        fan.n_azimuth = 12;
        Self {
            model: SoundspeedModel::standard_lens([0.0, 0.0, 2.0]),
            window,
            tau: (1.0, 2.0),
            oracle_step: 0.005,
            oracle_tol: 1e-4,
            fan,
            fan_step: 0.02,
            min_samples: 100,
            off_samples: 20,
            seed: 0,
            conservation_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanPoint {
    pub x: [f64; 3],
    pub p3: f64,
    pub t_inc: f64,
    pub kind: String,
    pub f_p3p3: f64,
    /// Distance to the spreading-Jacobian zero on the same ray (folds only).
    pub oracle_distance: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarineVerifyReport {
    pub scan: Vec<ScanPoint>,
    pub folds: usize,
    pub oracle_max_distance: f64,
    pub fan_zeros_in_window: usize,
    pub marine: MarineSummary,
    /// `|det|` of the marine 2×2 block at each critical point.
    pub determinants: Vec<f64>,
    pub fcc_pass: bool,
    pub fcc_samples: usize,
    pub right_kind: Option<String>,
    pub left_kind: Option<String>,
    pub min_nonradial: (f64, f64),
    pub corank_mismatches: usize,
    pub max_symplectic_defect: f64,
    pub rays_traced: usize,
    pub max_hamiltonian_defect: f64,
    pub fcc_failures: Vec<String>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// Fold scan with its oracle, the marine relation and its folded cross cap
/// check, and Hamiltonian conservation on every traced ray.
pub fn marine_verify(opts: &MarineVerifyOptions) -> Result<MarineVerifyReport> {
    let model = &opts.model;
    let w = &opts.window;
    let source = [w.s1, w.s2, 0.0];
    let rel = build_marine_relation(model, w, opts.tau)?;

    let scan: Vec<ScanPoint> = rel
        .scan
        .par_iter()
        .map(|c| {
            let oracle_distance = (c.kind == CausticKind::Fold).then(|| {
                match spreading_zero_near(model, &source, &c.takeoff, c.t_inc, 0.05, opts.oracle_step) {
                    Some(z) => (0..3).map(|k| (z.x[k] - c.x[k]).powi(2)).sum::<f64>().sqrt(),
                    None => f64::INFINITY,
                }
            });
            ScanPoint {
                x: c.x,
                p3: c.p3,
                t_inc: c.t_inc,
                kind: format!("{:?}", c.kind),
                f_p3p3: c.f_p3p3,
                oracle_distance,
            }
        })
        .collect();
    let folds = scan.iter().filter(|s| s.oracle_distance.is_some()).count();
    let oracle_max_distance = scan.iter().filter_map(|s| s.oracle_distance).fold(0.0, f64::max);
    let (d_lo, d_hi) = w.scan.depth;
    let fan_zeros_in_window = fan_spreading_zeros(model, &source, &opts.fan, opts.fan_step, 0.5)
        .iter()
        .filter(|z| z.x[2] >= d_lo && z.x[2] <= d_hi)
        .count();

    let mut plan = SamplingPlan::seeds(rel.critical_samples.clone());
    plan.off_samples = opts.off_samples;
    plan.seed = opts.seed;
    let fcc = verify_folded_cross_cap(&rel.chart, &plan)?;
    let corank_mismatches = fcc.off_locus.corank_mismatches
        + fcc.samples.iter().filter(|s| s.corank_left != s.corank_right).count();
    let max_symplectic_defect = fcc
        .samples
        .iter()
        .map(|s| s.symplectic_defect)
        .fold(fcc.off_locus.max_symplectic_defect, f64::max);

    // every adaptively traced ray: the scan fan, each incident ray to a
    // critical point and each reflected ray back to the surface
    let trace_opts = FlowOptions { record: false, ..FlowOptions::default() };
    let fan_defects: Vec<f64> = w
        .scan
        .fan
        .directions()
        .par_iter()
        .map(|d| Ok(bicharacteristic_flow(model, &source, d, w.scan.fan.t_max, &trace_opts)?.max_hamiltonian_defect))
        .collect::<Result<_>>()?;
    let mut defects = fan_defects;
    let surface_opts = FlowOptions { record: false, stop_at_surface: true, ..FlowOptions::default() };
    for c in &rel.critical {
        let s = [c.q[2], w.s2, 0.0];
        let cs = model.speed(&s);
        let x3 = (1.0 / (cs * cs) - c.seed.u * c.seed.u - c.seed.v * c.seed.v).sqrt();
        let start = RayState { x: s, xi: [c.seed.u, c.seed.v, x3], t: 0.0 };
        let inc = flow_state(model, start, c.seed.t, &trace_opts)?;
        defects.push(inc.max_hamiltonian_defect);
        let hit = [c.q[0], c.q[1], c.f];
        let ch = model.speed(&hit);
        for &(a1, a2) in &w.alphas {
            let a3 = (1.0 - a1 * a1 - a2 * a2).sqrt();
            let up = RayState { x: hit, xi: [a1 / ch, a2 / ch, -a3 / ch], t: 0.0 };
            defects.push(flow_state(model, up, 4.0 * c.f, &surface_opts)?.max_hamiltonian_defect);
        }
    }
    let rays_traced = defects.len();
    let max_hamiltonian_defect = defects.into_iter().fold(0.0, f64::max);

    let determinants: Vec<f64> = rel.fold_reports.iter().map(|r| r.determinant.abs()).collect();
    let checks = vec![
        Check::at_least("scan.folds", folds as f64, 1.0),
        Check::at_most("scan.oracle_distance", oracle_max_distance, opts.oracle_tol),
        Check::at_least("scan.fan_zeros", fan_zeros_in_window as f64, 1.0),
        Check::flag(
            "marine.determinant",
            rel.summary.fold_checks_pass && rel.summary.min_abs_determinant > w.det_tol,
            format!("min |det| = {:e}", rel.summary.min_abs_determinant),
        ),
        Check::flag("marine.fcc", fcc.pass, fcc.failures.first().cloned().unwrap_or_default()),
        Check::at_least("marine.fcc_samples", fcc.singular_sample_count as f64, opts.min_samples as f64),
        Check::at_most("marine.corank_equality", corank_mismatches as f64, 0.0),
        Check::at_most("rays.hamiltonian", max_hamiltonian_defect, opts.conservation_tol),
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(MarineVerifyReport {
        scan,
        folds,
        oracle_max_distance,
        fan_zeros_in_window,
        marine: rel.summary.clone(),
        determinants,
        fcc_pass: fcc.pass,
        fcc_samples: fcc.singular_sample_count,
        right_kind: fcc.right_kind.map(|k| format!("{k:?}")),
        left_kind: fcc.left_kind.map(|k| format!("{k:?}")),
        min_nonradial: (fcc.min_nonradial_right, fcc.min_nonradial_left),
        corank_mismatches,
        max_symplectic_defect,
        rays_traced,
        max_hamiltonian_defect,
        fcc_failures: fcc.failures.into_iter().take(20).collect(),
        checks,
        pass,
    })
}
