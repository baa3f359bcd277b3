use std::sync::Arc;

use serde::Serialize;

use super::cache::{key_of, EvalCache};
use super::flow::{flow_fixed, flow_state, FlowOptions, FlowStop, RayState, Sensitive, MAX_COLS};
use super::soundspeed::{SoundspeedModel, Vec3};
use crate::error::{Error, Result};
use crate::smallmath::{RealMatrix, RealVector, SmoothMap};

/// A point of the incident Lagrangian `Λ_s` in the coordinates `(x1, x2, s1, p3)`.
///
/// `p3` is the vertical slowness of the incident ray at the point; the ray
/// leaves the source `(s1, s2, s3)` with slowness `takeoff`, arrives at
/// `(x1, x2, f)` after travel time `t_inc` with slowness `(g1, g2, p3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChartPoint {
    pub x1: f64,
    pub x2: f64,
    pub s1: f64,
    pub p3: f64,
    pub f: f64,
    pub g1: f64,
    pub g2: f64,
    pub t_inc: f64,
    pub takeoff: Vec3,
    /// Residual of the matching conditions at the returned solution.
    pub residual: f64,
    /// Rows `(f, g1, g2, t_inc)`, columns `(x1, x2, s1, p3)`.
    pub jacobian: [[f64; 4]; 4],
}

#[derive(Debug, Clone, Copy)]
pub struct ChartOptions {
    /// Uniform integration steps per ray; fixed so the chart is smooth.
    pub steps: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ChartOptions {
    fn default() -> Self {
        Self { steps: 400, tol: 1e-12, max_iter: 40 }
    }
}

/// Initial guess for the incident solve: horizontal take-off slowness and travel time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TakeoffSeed {
    pub u: f64,
    pub v: f64,
    pub t: f64,
}

/// Full incident solution, including derivatives of the arriving state.
#[derive(Debug, Clone)]
pub(crate) struct IncidentSolution {
    pub point: ChartPoint,
    pub seed: TakeoffSeed,
    /// `∂(x, ξ)/∂(x1, x2, s1, p3)`.
    pub d_state: [[f64; 4]; 6],
    /// `∂(u, v, t_inc)/∂(x1, x2, s1, p3)`.
    pub d_unknowns: [[f64; 4]; 3],
}

fn solve3(m: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if !det.is_finite() || det == 0.0 {
        return None;
    }
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut mk = *m;
        for r in 0..3 {
            mk[r][k] = b[r];
        }
        *o = (mk[0][0] * (mk[1][1] * mk[2][2] - mk[1][2] * mk[2][1])
            - mk[0][1] * (mk[1][0] * mk[2][2] - mk[1][2] * mk[2][0])
            + mk[0][2] * (mk[1][0] * mk[2][1] - mk[1][1] * mk[2][0]))
            / det;
    }
    Some(out)
}

/// Solver for the incident chart of a fixed model and source depth / `s2`.
#[derive(Debug, Clone)]
pub(crate) struct IncidentSolver<'a> {
    pub model: &'a SoundspeedModel,
    pub s2: f64,
    pub s3: f64,
    pub opts: ChartOptions,
}

struct Trial {
    res: [f64; 3],
    norm: f64,
    run: Sensitive,
    xi0: Vec3,
}

impl IncidentSolver<'_> {
    fn run(&self, s1: f64, seed: &TakeoffSeed, target: &[f64; 3]) -> Option<Trial> {
        let src = [s1, self.s2, self.s3];
        let (c, g, _) = self.model.eval(&src);
        let q2 = 1.0 / (c * c) - seed.u * seed.u - seed.v * seed.v;
        if !(q2 > 0.0) || !(seed.t > 0.0) {
            return None;
        }
        let w3 = q2.sqrt();
        let y0 = [src[0], src[1], src[2], seed.u, seed.v, w3];
        let mut v0 = [[0.0; MAX_COLS]; 6];
        // columns: u, v, s1
        v0[3][0] = 1.0;
        v0[5][0] = -seed.u / w3;
        v0[4][1] = 1.0;
        v0[5][1] = -seed.v / w3;
        v0[0][2] = 1.0;
        v0[5][2] = -g[0] / (c * c * c * w3);
        let run = flow_fixed(self.model, &y0, &v0, 3, seed.t, self.opts.steps);
        let res = [run.y[0] - target[0], run.y[1] - target[1], run.y[5] - target[2]];
        let norm = (res[0] * res[0] + res[1] * res[1] + res[2] * res[2]).sqrt();
        norm.is_finite().then_some(Trial { res, norm, run, xi0: [seed.u, seed.v, w3] })
    }

    /// Straight-ray guess using the source soundspeed.
    pub fn straight_seed(&self, s1: f64, x1: f64, x2: f64, p3: f64) -> TakeoffSeed {
        let c = self.model.speed(&[s1, self.s2, self.s3]);
        let (dx, dy) = (x1 - s1, x2 - self.s2);
        let r = (dx * dx + dy * dy).sqrt();
        let d3 = (p3 * c).clamp(-0.999, 0.999);
        let dh = (1.0 - d3 * d3).sqrt();
        if r == 0.0 {
            return TakeoffSeed { u: 0.0, v: 0.0, t: 1.0 };
        }
        TakeoffSeed { u: dh * dx / (r * c), v: dh * dy / (r * c), t: r / (c * dh) }
    }

    pub fn solve(&self, x1: f64, x2: f64, s1: f64, p3: f64, seed: Option<TakeoffSeed>) -> Result<IncidentSolution> {
        let target = [x1, x2, p3];
        let mut w = seed.unwrap_or_else(|| self.straight_seed(s1, x1, x2, p3));
        let mut cur = self
            .run(s1, &w, &target)
            .ok_or_else(|| Error::Evaluation("incident ray not defined at the initial take-off".into()))?;
        let mut iters = 0;
        let mut polished = 0;
        loop {
            if cur.norm <= self.opts.tol {
                // one more step past tolerance keeps the solution smooth in the parameters
                polished += 1;
                if polished > 1 || cur.norm < 1e-15 {
                    break;
                }
            }
            if iters >= self.opts.max_iter {
                if cur.norm <= 1e3 * self.opts.tol {
                    break;
                }
                return Err(Error::NoConvergence {
                    best: vec![w.u, w.v, w.t],
                    residual: cur.norm,
                    iterations: iters,
                });
            }
            iters += 1;
            let jm = self.unknown_jacobian(&cur.run);
            let step = match solve3(&jm, &[-cur.res[0], -cur.res[1], -cur.res[2]]) {
                Some(s) => s,
                None => {
                    return Err(Error::NoConvergence { best: vec![w.u, w.v, w.t], residual: cur.norm, iterations: iters })
                }
            };
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..30 {
                let trial = TakeoffSeed { u: w.u + lambda * step[0], v: w.v + lambda * step[1], t: w.t + lambda * step[2] };
                if let Some(tr) = self.run(s1, &trial, &target) {
                    if tr.norm < cur.norm || (cur.norm <= self.opts.tol && tr.norm <= cur.norm * 1.0001) {
                        accepted = Some((trial, tr));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            match accepted {
                Some((nw, tr)) => {
                    w = nw;
                    cur = tr;
                }
                None if cur.norm <= 1e3 * self.opts.tol => break,
                None => {
                    return Err(Error::NoConvergence { best: vec![w.u, w.v, w.t], residual: cur.norm, iterations: iters })
                }
            }
        }
        Ok(self.finish(x1, x2, s1, p3, w, cur))
    }

    /// `∂E/∂(u, v, t)` for the residual `E = (x1(t), x2(t), ξ3(t)) − target`.
    fn unknown_jacobian(&self, run: &Sensitive) -> [[f64; 3]; 3] {
        let rows = [0, 1, 5];
        let mut m = [[0.0; 3]; 3];
        for (r, &i) in rows.iter().enumerate() {
            m[r] = [run.v[i][0], run.v[i][1], run.w[i]];
        }
        m
    }

    fn finish(&self, x1: f64, x2: f64, s1: f64, p3: f64, w: TakeoffSeed, tr: Trial) -> IncidentSolution {
        let run = &tr.run;
        let ew = self.unknown_jacobian(run);
        // ∂E/∂q for q = (x1, x2, s1, p3)
        let eq = [[-1.0, 0.0, run.v[0][2], 0.0], [0.0, -1.0, run.v[1][2], 0.0], [0.0, 0.0, run.v[5][2], -1.0]];
        let mut dw = [[0.0; 4]; 3];
        for k in 0..4 {
            let sol = solve3(&ew, &[-eq[0][k], -eq[1][k], -eq[2][k]]).unwrap_or([f64::NAN; 3]);
            for r in 0..3 {
                dw[r][k] = sol[r];
            }
        }
        let mut ds = [[0.0; 4]; 6];
        for i in 0..6 {
            for k in 0..4 {
                let direct = if k == 2 { run.v[i][2] } else { 0.0 };
                ds[i][k] = run.v[i][0] * dw[0][k] + run.v[i][1] * dw[1][k] + run.w[i] * dw[2][k] + direct;
            }
        }
        let y = run.y;
        let point = ChartPoint {
            x1,
            x2,
            s1,
            p3,
            f: y[2],
            g1: y[3],
            g2: y[4],
            t_inc: w.t,
            takeoff: tr.xi0,
            residual: tr.norm,
            jacobian: [ds[2], ds[3], ds[4], dw[2]],
        };
        IncidentSolution { point, seed: w, d_state: ds, d_unknowns: dw }
    }
}

/// Solve for the point of `Λ_s` over `(x1, x2)` with vertical slowness `p3`.
///
/// The unknowns are the horizontal take-off slowness and the travel time;
/// Newton matches the arriving horizontal position and vertical slowness.
/// Near caustics the chart is multivalued and `seed` selects the branch.
pub fn lagrangian_chart(
    model: &SoundspeedModel,
    source: &Vec3,
    query: (f64, f64, f64),
    seed: Option<TakeoffSeed>,
    opts: &ChartOptions,
) -> Result<ChartPoint> {
    let solver = IncidentSolver { model, s2: source[1], s3: source[2], opts: *opts };
    Ok(solver.solve(query.0, query.1, source[0], query.2, seed)?.point)
}

/// Weights of `(x1, x2, s1, p3)` when picking the nearest known solution as a seed.
const SEED_WEIGHTS: [f64; 4] = [1.0, 1.0, 1.0, 10.0];

fn seed_distance(a: &[f64], b: &[f64]) -> f64 {
    (0..4).map(|k| (SEED_WEIGHTS[k] * (a[k] - b[k])).powi(2)).sum::<f64>().sqrt()
}

/// The incident Lagrangian over `(x1, x2, s1, p3)` for sources on the line
/// `(s1, s2, s3)`, seen as the smooth function `f = x3`.
///
/// Each solve is seeded from the nearest anchor or previously solved point,
/// which keeps evaluation on one branch of the multivalued chart.
pub struct IncidentChart {
    model: SoundspeedModel,
    s2: f64,
    s3: f64,
    opts: ChartOptions,
    anchors: Vec<([f64; 4], TakeoffSeed)>,
    cache: EvalCache<IncidentSolution>,
}

impl std::fmt::Debug for IncidentChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IncidentChart").field("s2", &self.s2).field("anchors", &self.anchors.len()).finish()
    }
}

impl IncidentChart {
    pub fn new(model: SoundspeedModel, s2: f64, s3: f64, opts: ChartOptions) -> Self {
        Self { model, s2, s3, opts, anchors: Vec::new(), cache: EvalCache::new(256) }
    }

    pub fn add_anchor(&mut self, q: [f64; 4], seed: TakeoffSeed) {
        self.anchors.push((q, seed));
    }

    pub fn model(&self) -> &SoundspeedModel {
        &self.model
    }

    pub fn options(&self) -> &ChartOptions {
        &self.opts
    }

    /// `(s2, s3)` of the source line.
    pub fn source_line(&self) -> (f64, f64) {
        (self.s2, self.s3)
    }

    fn solver(&self) -> IncidentSolver<'_> {
        IncidentSolver { model: &self.model, s2: self.s2, s3: self.s3, opts: self.opts }
    }

    pub(crate) fn solve_full(&self, q: &[f64; 4]) -> Result<Arc<IncidentSolution>> {
        let key = key_of(q);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let from_cache = self.cache.nearest(|p| seed_distance(p, q)).map(|(d, s)| (d, s.seed));
        let from_anchor = self
            .anchors
            .iter()
            .map(|(a, s)| (seed_distance(a, q), *s))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        let seed = match (from_cache, from_anchor) {
            (Some(c), Some(a)) => Some(if c.0 <= a.0 { c.1 } else { a.1 }),
            (c, a) => c.or(a).map(|v| v.1),
        };
        let sol = Arc::new(self.solver().solve(q[0], q[1], q[2], q[3], seed)?);
        self.cache.insert(key, sol.clone());
        Ok(sol)
    }

    /// Chart point at `q = (x1, x2, s1, p3)`.
    pub fn solve(&self, q: &[f64; 4]) -> Result<ChartPoint> {
        Ok(self.solve_full(q)?.point)
    }
}

fn q_of(x: &RealVector) -> Result<[f64; 4]> {
    if x.len() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: x.len() });
    }
    Ok([x[0], x[1], x[2], x[3]])
}

/// `f(x1, x2, s1, p3)` with its analytic gradient.
impl SmoothMap for IncidentChart {
    fn dim_in(&self) -> usize {
        4
    }
    fn dim_out(&self) -> usize {
        1
    }
    fn eval(&self, x: &RealVector) -> Result<RealVector> {
        let p = self.solve(&q_of(x)?)?;
        Ok(RealVector::from_element(1, p.f))
    }
    fn analytic_jacobian(&self, x: &RealVector) -> Option<Result<RealMatrix>> {
        Some(q_of(x).and_then(|q| self.solve(&q)).map(|p| RealMatrix::from_row_slice(1, 4, &p.jacobian[0])))
    }
}

/// Flow from the chart point's take-off for `t_inc` with the adaptive
/// integrator and return the distance to `(x1, x2, f)` and the slowness error.
pub fn chart_round_trip(model: &SoundspeedModel, source: &Vec3, cp: &ChartPoint) -> Result<(f64, f64)> {
    let start = RayState { x: [cp.s1, source[1], source[2]], xi: cp.takeoff, t: 0.0 };
    let o = FlowOptions { record: false, tol: 1e-12, ..FlowOptions::default() };
    let tr = flow_state(model, start, cp.t_inc, &o)?;
    if tr.stop != FlowStop::Duration {
        return Err(Error::Evaluation(format!("round-trip ray stopped early: {:?}", tr.stop)));
    }
    let e = tr.last();
    let dx = ((e.x[0] - cp.x1).powi(2) + (e.x[1] - cp.x2).powi(2) + (e.x[2] - cp.f).powi(2)).sqrt();
    let dxi = ((e.xi[0] - cp.g1).powi(2) + (e.xi[1] - cp.g2).powi(2) + (e.xi[2] - cp.p3).powi(2)).sqrt();
    Ok((dx, dxi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_speed_closed_form() {
        let m = SoundspeedModel::Constant { c: 1.0 };
        let p3 = 1.0 / 2f64.sqrt();
        let cp = lagrangian_chart(&m, &[0.0; 3], (1.0, 0.0, p3), None, &ChartOptions::default()).unwrap();
        assert!((cp.f - 1.0).abs() < 1e-10, "{}", cp.f);
        for &(x1, x2, p3) in &[(0.3, -0.7, 0.5), (1.5, 0.2, 0.9), (-0.4, 0.1, 0.2)] {
            let s = [0.2, 0.1, 0.0];
            let cp = lagrangian_chart(&m, &s, (x1, x2, p3), None, &ChartOptions::default()).unwrap();
            let r: f64 = ((x1 - s[0]) * (x1 - s[0]) + (x2 - s[1]) * (x2 - s[1])).sqrt();
            let q = 1.0 - p3 * p3;
            let f = p3 * r / q.sqrt();
            assert!((cp.f - f).abs() < 1e-10);
            // ∂f/∂p3 = r (1 − p3²)^{−3/2}
            assert!((cp.jacobian[0][3] - r / q.powf(1.5)).abs() < 1e-8);
            assert!((cp.t_inc - r / q.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn lens_round_trip_and_derivatives() {
        let m = SoundspeedModel::standard_lens([0.0, 0.0, 2.0]);
        let s = [0.0, 0.3, 0.0];
        let o = ChartOptions::default();
        let cp = lagrangian_chart(&m, &s, (0.4, -0.2, 0.85), None, &o).unwrap();
        let (dx, dxi) = chart_round_trip(&m, &s, &cp).unwrap();
        assert!(dx < 1e-8 && dxi < 1e-8, "{dx} {dxi}");
        let h = 1e-6;
        let q = [cp.x1, cp.x2, cp.s1, cp.p3];
        for k in 0..4 {
            let mut qp = q;
            let mut qm = q;
            qp[k] += h;
            qm[k] -= h;
            let seed = Some(TakeoffSeed { u: cp.takeoff[0], v: cp.takeoff[1], t: cp.t_inc });
            let a = lagrangian_chart(&m, &[qp[2], s[1], 0.0], (qp[0], qp[1], qp[3]), seed, &o).unwrap();
            let b = lagrangian_chart(&m, &[qm[2], s[1], 0.0], (qm[0], qm[1], qm[3]), seed, &o).unwrap();
            let fd = [(a.f - b.f), (a.g1 - b.g1), (a.g2 - b.g2), (a.t_inc - b.t_inc)].map(|d| d / (2.0 * h));
            for r in 0..4 {
                assert!((fd[r] - cp.jacobian[r][k]).abs() < 1e-6, "{r} {k}: {} vs {}", fd[r], cp.jacobian[r][k]);
            }
        }
    }
}
