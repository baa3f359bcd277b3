use std::sync::Arc;

use serde::Serialize;

use super::cache::{key_of, EvalCache};
use super::caustic::{
    fold_caustic_scan, marine_critical_point, marine_fold_check, CausticGrid, CausticKind, CausticPoint, FanSpec, MarineCritical,
    MarineFoldReport,
};
use super::chart::{ChartOptions, IncidentChart, TakeoffSeed};
use super::flow::{flow_fixed, flow_state, FlowOptions, FlowStop, RayState, Sensitive, MAX_COLS};
use super::soundspeed::{SoundspeedModel, Vec3};
use crate::canrel::CanonicalRelationChart;
use crate::error::{Error, Result};
use crate::singularity::DomainBox;
use crate::smallmath::{RealMatrix, RealVector, SmoothMap};

pub const MARINE_PARAMS: [&str; 7] = ["s1", "x1", "x2", "p3", "alpha1", "alpha2", "tau"];

/// Left and right points of the marine relation with their Jacobians.
#[derive(Debug, Clone)]
struct MarineEval {
    left: [f64; 8],
    right: [f64; 6],
    jl: [[f64; 7]; 8],
    jr: [[f64; 7]; 6],
    t_ref: f64,
}

/// Ray-traced evaluator of the marine relation in the chart
/// `(s1, x1, x2, p3, α1, α2, τ)`.
///
/// Left point `(s1, r1, r2, t_inc + t_ref; σ, ρ1, ρ2, τ)`, right point
/// `(x1, x2, f; ξ)`. The reflected ray leaves `(x1, x2, f)` upward with
/// slowness `−α̂ / c0` where `α̂ = (α1, α2, √(1 − |α|²))`.
pub struct MarineEvaluator {
    incident: IncidentChart,
    reflected_steps: usize,
    cache: EvalCache<MarineEval>,
}

impl MarineEvaluator {
    pub fn new(incident: IncidentChart, reflected_steps: usize) -> Self {
        Self { incident, reflected_steps, cache: EvalCache::new(256) }
    }

    pub fn incident(&self) -> &IncidentChart {
        &self.incident
    }

    fn model(&self) -> &SoundspeedModel {
        self.incident.model()
    }

    /// Reflected ray from `x` with take-off `α`, flowed to `x3 = 0`.
    fn reflected(&self, x: &Vec3, a1: f64, a2: f64, t_guess: Option<f64>) -> Result<(Sensitive, f64)> {
        let m = self.model();
        let q = 1.0 - a1 * a1 - a2 * a2;
        if !(q > 0.0) {
            return Err(Error::Precondition(format!("|α| = {} is not below 1", (1.0 - q).sqrt())));
        }
        let a3 = q.sqrt();
        let (c, g, _) = m.eval(x);
        let ah = [a1, a2, a3];
        let y0 = [x[0], x[1], x[2], -a1 / c, -a2 / c, -a3 / c];
        let mut v0 = [[0.0; MAX_COLS]; 6];
        // columns: x1, x2, x3, α1, α2
        for j in 0..3 {
            v0[j][j] = 1.0;
            for k in 0..3 {
                v0[3 + k][j] = ah[k] * g[j] / (c * c);
            }
        }
        for i in 0..2 {
            v0[3 + i][3 + i] = -1.0 / c;
            v0[5][3 + i] = ah[i] / (a3 * c);
        }
        let mut t = match t_guess {
            Some(t) => t,
            None => {
                let o = FlowOptions { stop_at_surface: true, record: false, tol: 1e-9, ..FlowOptions::default() };
                let tr = flow_state(m, RayState::from_packed(&y0, 0.0), 20.0 * x[2].abs().max(1.0), &o)?;
                if tr.stop != FlowStop::Surface {
                    return Err(Error::Evaluation("reflected ray does not reach the surface".into()));
                }
                tr.last().t
            }
        };
        let mut converged = 0;
        for _ in 0..30 {
            let r = flow_fixed(m, &y0, &v0, 0, t, self.reflected_steps);
            if !(r.w[2] < 0.0) {
                return Err(Error::Evaluation("reflected ray is not travelling upward at the surface".into()));
            }
            let dt = -r.y[2] / r.w[2];
            t += dt;
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::Evaluation("reflected ray does not reach the surface".into()));
            }
            if r.y[2].abs() <= 1e-13 * x[2].abs().max(1.0) {
                converged += 1;
                if converged > 1 {
                    let out = flow_fixed(m, &y0, &v0, 5, t, self.reflected_steps);
                    return Ok((out, t));
                }
            }
        }
        Err(Error::Evaluation("surface arrival did not converge".into()))
    }

    fn eval(&self, p: &RealVector) -> Result<Arc<MarineEval>> {
        if p.len() != 7 {
            return Err(Error::DimensionMismatch { expected: 7, got: p.len() });
        }
        let key = key_of(p.as_slice());
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let (s1, x1, x2, p3, a1, a2, tau) = (p[0], p[1], p[2], p[3], p[4], p[5], p[6]);
        let inc = self.incident.solve_full(&[x1, x2, s1, p3])?;
        // incident derivatives are in (x1, x2, s1, p3); chart order is (s1, x1, x2, p3, ...)
        let to_p = |row: &[f64; 4]| -> [f64; 7] { [row[2], row[0], row[1], row[3], 0.0, 0.0, 0.0] };
        let d_inc: Vec<[f64; 7]> = inc.d_state.iter().map(to_p).collect();
        let d_unk: Vec<[f64; 7]> = inc.d_unknowns.iter().map(to_p).collect();
        let xs = [x1, x2, inc.point.f];

        let guess = self
            .cache
            .nearest(|k| k.iter().zip(p.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .and_then(|(d, e)| (d < 0.05).then_some(e.t_ref));
        let (r, t_ref) = self.reflected(&xs, a1, a2, guess)?;
        let dt_ref: Vec<f64> = (0..5).map(|j| -r.v[2][j] / r.w[2]).collect();
        let mut d_ref = [[0.0; 5]; 6];
        for i in 0..6 {
            for j in 0..5 {
                d_ref[i][j] = r.v[i][j] + r.w[i] * dt_ref[j];
            }
        }
        // reflected initial data (x1, x2, x3, α1, α2) as functions of the chart
        let mut m_init = [[0.0; 7]; 5];
        m_init[0][1] = 1.0;
        m_init[1][2] = 1.0;
        m_init[2] = d_inc[2];
        m_init[3][4] = 1.0;
        m_init[4][5] = 1.0;
        let chain = |row: &[f64]| -> [f64; 7] {
            let mut out = [0.0; 7];
            for (j, rj) in row.iter().enumerate() {
                for k in 0..7 {
                    out[k] += rj * m_init[j][k];
                }
            }
            out
        };
        let d_end: Vec<[f64; 7]> = d_ref.iter().map(|row| chain(row)).collect();
        let d_tref = chain(&dt_ref);

        let e = |k: usize| -> [f64; 7] {
            let mut v = [0.0; 7];
            v[k] = 1.0;
            v
        };
        let comb = |a: f64, u: &[f64; 7], b: f64, w: &[f64; 7]| -> [f64; 7] {
            let mut v = [0.0; 7];
            for k in 0..7 {
                v[k] = a * u[k] + b * w[k];
            }
            v
        };
        let u0 = inc.point.takeoff[0];
        let eta = [r.y[3], r.y[4]];
        let left = [s1, r.y[0], r.y[1], inc.point.t_inc + t_ref, tau * u0, -tau * eta[0], -tau * eta[1], tau];
        let jl = [
            e(0),
            d_end[0],
            d_end[1],
            comb(1.0, &d_unk[2], 1.0, &d_tref),
            comb(tau, &d_unk[0], u0, &e(6)),
            comb(-tau, &d_end[3], -eta[0], &e(6)),
            comb(-tau, &d_end[4], -eta[1], &e(6)),
            e(6),
        ];

        let (c, g, _) = self.model().eval(&xs);
        let a3 = (1.0 - a1 * a1 - a2 * a2).sqrt();
        let ah = [a1, a2, a3];
        let dx = [e(1), e(2), d_inc[2]];
        let mut dc = [0.0; 7];
        for k in 0..7 {
            dc[k] = g[0] * dx[0][k] + g[1] * dx[1][k] + g[2] * dx[2][k];
        }
        let dah = [e(4), e(5), comb(-a1 / a3, &e(4), -a2 / a3, &e(5))];
        let xi_inc = [inc.point.g1, inc.point.g2, inc.point.p3];
        let d_xi_inc = [d_inc[3], d_inc[4], e(3)];
        let mut right = [x1, x2, inc.point.f, 0.0, 0.0, 0.0];
        let mut jr = [e(1), e(2), d_inc[2], [0.0; 7], [0.0; 7], [0.0; 7]];
        for k in 0..3 {
            let a = xi_inc[k] + ah[k] / c;
            right[3 + k] = tau * a;
            let mut da = [0.0; 7];
            for j in 0..7 {
                da[j] = d_xi_inc[k][j] + dah[k][j] / c - ah[k] * dc[j] / (c * c);
            }
            jr[3 + k] = comb(tau, &da, a, &e(6));
        }
        let out = Arc::new(MarineEval { left, right, jl, jr, t_ref });
        self.cache.insert(key, out.clone());
        Ok(out)
    }
}

struct MarineSide {
    core: Arc<MarineEvaluator>,
    left: bool,
}

impl SmoothMap for MarineSide {
    fn dim_in(&self) -> usize {
        7
    }
    fn dim_out(&self) -> usize {
        if self.left {
            8
        } else {
            6
        }
    }
    fn eval(&self, x: &RealVector) -> Result<RealVector> {
        let e = self.core.eval(x)?;
        Ok(if self.left { RealVector::from_row_slice(&e.left) } else { RealVector::from_row_slice(&e.right) })
    }
    fn analytic_jacobian(&self, x: &RealVector) -> Option<Result<RealMatrix>> {
        Some(self.core.eval(x).map(|e| {
            if self.left {
                RealMatrix::from_fn(8, 7, |i, j| e.jl[i][j])
            } else {
                RealMatrix::from_fn(6, 7, |i, j| e.jr[i][j])
            }
        }))
    }
}

/// Canonical relation chart of the marine data map from an evaluator.
pub fn marine_chart(core: Arc<MarineEvaluator>, sample_box: DomainBox) -> Result<CanonicalRelationChart> {
    CanonicalRelationChart::new(
        4,
        3,
        MARINE_PARAMS.iter().map(|s| s.to_string()).collect(),
        Arc::new(MarineSide { core: core.clone(), left: true }),
        Arc::new(MarineSide { core, left: false }),
        sample_box,
    )
}

/// Acquisition window and sampling of the marine critical set.
#[derive(Debug, Clone)]
pub struct MarineWindow {
    /// Cross-line source coordinate, held fixed.
    pub s2: f64,
    /// In-line source position where the single-source fold scan is run.
    pub s1: f64,
    /// Single-source scan whose folds start the critical-set continuation.
    pub scan: CausticGrid,
    /// Offsets in `x1` visited by continuation from each starting fold.
    pub x1_offsets: Vec<f64>,
    /// Reflected take-offs `(α1, α2)` paired with each critical point.
    pub alphas: Vec<(f64, f64)>,
    pub reflected_steps: usize,
    /// Extra width added around the critical samples to form the sample box.
    pub margin: [f64; 4],
    /// Threshold on the marine 2×2 determinant.
    pub det_tol: f64,
}

impl MarineWindow {
    /// Window around the aberration fold sheet of [`SoundspeedModel::standard_lens`]
    /// centered at `(0, 0, 2)`, source line `x2 = 0.3`.
    ///
    /// The scan stays at `x2 ≤ -0.76` and `p3 ≤ 0.99`: closer to the
    /// source–lens axis the caustic is degenerate, and near `p3 ≈ 0.998` the
    /// chart has poles.
    pub fn standard_lens() -> Self {
        Self {
            s2: 0.3,
            s1: 0.0,
            scan: CausticGrid {
                x1: vec![0.0],
                x2: vec![-0.76, -0.8, -0.84],
                p3: (0.962, 0.99, 29),
                depth: (5.0, 8.5),
                fan: FanSpec { axis: [0.0, -0.3, 2.0], max_angle: 0.25, n_polar: 25, n_azimuth: 36, t_max: 9.5 },
                fold_tol: 1e-6,
                chart: ChartOptions::default(),
            },
            x1_offsets: vec![-0.06, -0.04, -0.02, 0.02, 0.04, 0.06],
            alphas: vec![(0.0, 0.0), (0.1, -0.05), (-0.08, 0.1), (0.05, 0.12), (-0.05, -0.06)],
            reflected_steps: 400,
            margin: [0.01, 0.01, 0.01, 0.0005],
            det_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MarineSummary {
    pub fold_points: usize,
    pub critical_points: usize,
    pub chart_samples: usize,
    pub min_abs_determinant: f64,
    pub fold_checks_pass: bool,
}

/// The marine relation together with its critical samples.
pub struct MarineRelation {
    pub chart: CanonicalRelationChart,
    /// Single-source scan at `(s1, s2, 0)` that seeded the critical set.
    pub scan: Vec<CausticPoint>,
    pub evaluator: Arc<MarineEvaluator>,
    /// Points of `{f_p3 = f_s1 = 0}` in `(x1, x2, s1, p3)`.
    pub critical: Vec<MarineCritical>,
    /// Chart points over the critical set, `(s1, x1, x2, p3, α1, α2, τ)`.
    pub critical_samples: Vec<RealVector>,
    /// Marine fold check at each entry of `critical`.
    pub fold_reports: Vec<MarineFoldReport>,
    pub summary: MarineSummary,
}

impl std::fmt::Debug for MarineRelation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MarineRelation")
            .field("critical", &self.critical.len())
            .field("critical_samples", &self.critical_samples.len())
            .finish()
    }
}

/// Build the marine canonical relation: find single-source folds, follow
/// `{∂f/∂p3 = ∂f/∂s1 = 0}` in `x1`, and wrap the ray-traced left and right
/// projections in a chart whose sample box surrounds the critical points.
pub fn build_marine_relation(model: &SoundspeedModel, window: &MarineWindow, tau: (f64, f64)) -> Result<MarineRelation> {
    if !(tau.0 > 0.0 && tau.1 >= tau.0) {
        return Err(Error::Precondition(format!("τ range {tau:?} must be positive")));
    }
    if window.alphas.is_empty() {
        return Err(Error::Precondition("no reflected take-offs".into()));
    }
    let source = [window.s1, window.s2, 0.0];
    let scan = fold_caustic_scan(model, &source, &window.scan)?;
    let folds: Vec<_> = scan.iter().filter(|c| c.kind == CausticKind::Fold).copied().collect();
    let chart_opts: ChartOptions = window.scan.chart;
    let mut incident = IncidentChart::new(model.clone(), window.s2, 0.0, chart_opts);
    let mut critical: Vec<MarineCritical> = Vec::new();
    for fp in &folds {
        let seed = TakeoffSeed { u: fp.takeoff[0], v: fp.takeoff[1], t: fp.t_inc };
        let Ok(start) = marine_critical_point(&incident, fp.x[0], fp.x[1], (fp.s1, fp.p3), seed) else { continue };
        let mut line = vec![start];
        // continue outward in both directions so each step starts close by
        for sign in [1.0, -1.0] {
            let mut prev = start;
            let mut offs: Vec<f64> = window.x1_offsets.iter().copied().filter(|o| o * sign > 0.0).collect();
            offs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
            for o in offs {
                match marine_critical_point(&incident, start.q[0] + o, start.q[1], (prev.q[2], prev.q[3]), prev.seed) {
                    Ok(c) => {
                        line.push(c);
                        prev = c;
                    }
                    Err(_) => break,
                }
            }
        }
        for c in line {
            let dup = critical.iter().any(|d| (0..4).map(|k| (d.q[k] - c.q[k]).abs()).sum::<f64>() < 1e-9);
            if !dup {
                incident.add_anchor(c.q, c.seed);
                critical.push(c);
            }
        }
    }
    if critical.is_empty() {
        return Err(Error::Rejected("no marine critical points found in the window".into()));
    }
    let fold_reports = critical
        .iter()
        .map(|c| marine_fold_check(&incident, &RealVector::from_row_slice(&c.q), window.det_tol))
        .collect::<Result<Vec<_>>>()?;
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    for c in &critical {
        // chart order (s1, x1, x2, p3)
        let v = [c.q[2], c.q[0], c.q[1], c.q[3]];
        for k in 0..4 {
            lo[k] = lo[k].min(v[k] - window.margin[k]);
            hi[k] = hi[k].max(v[k] + window.margin[k]);
        }
    }
    let (mut alo, mut ahi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for &(a1, a2) in &window.alphas {
        alo = [alo[0].min(a1), alo[1].min(a2)];
        ahi = [ahi[0].max(a1), ahi[1].max(a2)];
    }
    let pad = 0.02;
    let sample_box = DomainBox::new(
        vec![lo[0], lo[1], lo[2], lo[3], alo[0] - pad, alo[1] - pad, tau.0],
        vec![hi[0], hi[1], hi[2], hi[3], ahi[0] + pad, ahi[1] + pad, tau.1],
    );
    let evaluator = Arc::new(MarineEvaluator::new(incident, window.reflected_steps));
    let mut samples = Vec::new();
    let nt = window.alphas.len();
    for (i, c) in critical.iter().enumerate() {
        for (j, &(a1, a2)) in window.alphas.iter().enumerate() {
            let frac = ((i * nt + j) % 7) as f64 / 6.0;
            let t = tau.0 + (tau.1 - tau.0) * frac;
            samples.push(RealVector::from_row_slice(&[c.q[2], c.q[0], c.q[1], c.q[3], a1, a2, t]));
        }
    }
    let summary = MarineSummary {
        fold_points: folds.len(),
        critical_points: critical.len(),
        chart_samples: samples.len(),
        min_abs_determinant: fold_reports.iter().map(|r| r.determinant.abs()).fold(f64::INFINITY, f64::min),
        fold_checks_pass: fold_reports.iter().all(|r| r.pass),
    };
    Ok(MarineRelation {
        chart: marine_chart(evaluator.clone(), sample_box)?,
        evaluator,
        scan,
        critical,
        critical_samples: samples,
        fold_reports,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::singularity::sample_at;
    use crate::smallmath::{fd_jacobian, DEFAULT_RANK_TOL};

    fn constant_chart() -> CanonicalRelationChart {
        let m = SoundspeedModel::Constant { c: 1.0 };
        let inc = IncidentChart::new(m, 0.0, 0.0, ChartOptions { steps: 60, ..ChartOptions::default() });
        let core = Arc::new(MarineEvaluator::new(inc, 60));
        marine_chart(core, DomainBox::new(vec![-0.2, 0.3, -0.2, 0.6, -0.2, -0.2, 1.0], vec![0.2, 0.8, 0.2, 0.8, 0.2, 0.2, 2.0])).unwrap()
    }

    #[test]
    fn constant_speed_marine_relation() {
        let chart = constant_chart();
        assert_eq!((chart.dim(), chart.left.dim_out(), chart.right.dim_out()), (7, 8, 6));
        let p = RealVector::from_row_slice(&[0.1, 0.5, -0.1, 0.7, 0.1, -0.05, 1.5]);
        let (l, r) = chart.eval(&p).unwrap();
        // straight rays: the reflected leg from depth f reaches the surface after f / α̂3
        let f = r[2];
        let a3 = (1.0f64 - 0.01 - 0.0025).sqrt();
        assert!((l[1] - (0.5 - 0.1 * f / a3)).abs() < 1e-9);
        assert!(chart.symplectic_defect(&p).unwrap() < 1e-9);
        assert_eq!(sample_at(chart.right.as_ref(), &p, DEFAULT_RANK_TOL).unwrap().corank, 0);
        for side in [&chart.left, &chart.right] {
            let ja = side.analytic_jacobian(&p).unwrap().unwrap();
            let jf = fd_jacobian(side.as_ref(), &p).unwrap();
            assert!((ja - jf).amax() < 1e-6);
        }
    }
}
