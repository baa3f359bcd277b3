use rayon::prelude::*;
use serde::Serialize;

use super::chart::{ChartOptions, IncidentChart, IncidentSolution, IncidentSolver, TakeoffSeed};
use super::flow::{flow_state, norm3, rk_step, vector_field, FlowOptions, RayState};
use super::soundspeed::{SoundspeedModel, Vec3};
use crate::error::{Error, Result};
use crate::smallmath::{jet_evaluate, singular_values, RealMatrix, RealVector, SmoothMap};

/// A cone of take-off directions around `axis`.
#[derive(Debug, Clone)]
pub struct FanSpec {
    pub axis: Vec3,
    /// Half-angle of the cone in radians.
    pub max_angle: f64,
    pub n_polar: usize,
    pub n_azimuth: usize,
    pub t_max: f64,
}

impl FanSpec {
    /// Unit take-off directions; the axis itself comes first.
    pub fn directions(&self) -> Vec<Vec3> {
        let a = unit(&self.axis);
        let (e1, e2) = orthonormal_pair(&a);
        let mut out = vec![a];
        for i in 1..=self.n_polar {
            let th = self.max_angle * i as f64 / self.n_polar as f64;
            for j in 0..self.n_azimuth {
                let ph = std::f64::consts::TAU * j as f64 / self.n_azimuth as f64;
                let (s, c) = th.sin_cos();
                out.push([0, 1, 2].map(|k| c * a[k] + s * (ph.cos() * e1[k] + ph.sin() * e2[k])));
            }
        }
        out
    }
}

fn unit(v: &Vec3) -> Vec3 {
    let n = norm3(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn orthonormal_pair(a: &Vec3) -> (Vec3, Vec3) {
    let helper = if a[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = unit(&cross(a, &helper));
    let e2 = cross(a, &e1);
    (e1, e2)
}

/// Grid over `(x1, x2, p3)` for [`fold_caustic_scan`].
#[derive(Debug, Clone)]
pub struct CausticGrid {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// `(lo, hi, count)` for the vertical slowness.
    pub p3: (f64, f64, usize),
    /// Only chart points with `f` in this depth window are kept; selects the branch.
    pub depth: (f64, f64),
    /// Fan whose rays seed the chart solves.
    pub fan: FanSpec,
    /// `|∂²f/∂p3²|` above this makes a fold.
    pub fold_tol: f64,
    pub chart: ChartOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CausticKind {
    Fold,
    Degenerate,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CausticPoint {
    /// `(x1, x2, f)`.
    pub x: Vec3,
    pub s1: f64,
    pub p3: f64,
    pub takeoff: Vec3,
    pub t_inc: f64,
    pub f_p3: f64,
    pub f_p3p3: f64,
    pub kind: CausticKind,
}

/// Step for differencing the analytic `∂f/∂p3`.
const P3_STEP: f64 = 6e-6;

struct FanSample {
    state: RayState,
    takeoff: Vec3,
}

fn fan_samples(model: &SoundspeedModel, source: &Vec3, fan: &FanSpec, depth: (f64, f64)) -> Result<Vec<FanSample>> {
    let c = model.speed(source);
    let opts = FlowOptions { max_step: 0.05, ..FlowOptions::default() };
    let per_ray: Vec<Vec<FanSample>> = fan
        .directions()
        .par_iter()
        .map(|d| -> Result<Vec<FanSample>> {
            let takeoff = [d[0] / c, d[1] / c, d[2] / c];
            let tr = flow_state(model, RayState { x: *source, xi: takeoff, t: 0.0 }, fan.t_max, &opts)?;
            Ok(tr
                .states
                .iter()
                .filter(|s| s.x[2] >= depth.0 && s.x[2] <= depth.1)
                .map(|s| FanSample { state: *s, takeoff })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_ray.into_iter().flatten().collect())
}

fn nearest_seed(samples: &[FanSample], x1: f64, x2: f64, p3: f64) -> Option<TakeoffSeed> {
    samples
        .iter()
        .map(|s| {
            let d = (s.state.x[0] - x1).powi(2) + (s.state.x[1] - x2).powi(2) + (10.0 * (s.state.xi[2] - p3)).powi(2);
            (d, s)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, s)| TakeoffSeed { u: s.takeoff[0], v: s.takeoff[1], t: s.state.t })
}

fn in_window(sol: &IncidentSolution, depth: (f64, f64)) -> bool {
    sol.point.f >= depth.0 && sol.point.f <= depth.1
}

/// `∂f/∂p3` and a central difference of it.
fn fp3_and_derivative(solver: &IncidentSolver<'_>, x1: f64, x2: f64, s1: f64, p3: f64, seed: TakeoffSeed) -> Option<(IncidentSolution, f64)> {
    let mid = solver.solve(x1, x2, s1, p3, Some(seed)).ok()?;
    let hi = solver.solve(x1, x2, s1, p3 + P3_STEP, Some(mid.seed)).ok()?;
    let lo = solver.solve(x1, x2, s1, p3 - P3_STEP, Some(mid.seed)).ok()?;
    let d = (hi.point.jacobian[0][3] - lo.point.jacobian[0][3]) / (2.0 * P3_STEP);
    Some((mid, d))
}

/// Safeguarded Newton on `∂f/∂p3 = 0` inside a sign-changing bracket.
fn refine_fold(
    solver: &IncidentSolver<'_>,
    x1: f64,
    x2: f64,
    s1: f64,
    bracket: (f64, f64),
    seed: TakeoffSeed,
    fold_tol: f64,
) -> Option<CausticPoint> {
    let (mut a, mut b) = bracket;
    let ga = solver.solve(x1, x2, s1, a, Some(seed)).ok()?.point.jacobian[0][3];
    let mut seed = seed;
    let mut p = 0.5 * (a + b);
    let mut found = None;
    for _ in 0..80 {
        let (sol, d) = fp3_and_derivative(solver, x1, x2, s1, p, seed)?;
        seed = sol.seed;
        let g = sol.point.jacobian[0][3];
        if g.signum() == ga.signum() {
            a = p;
        } else {
            b = p;
        }
        let scale = d.abs().max(1.0);
        if g.abs() <= 1e-11 * scale || (b - a).abs() <= 1e-15 {
            found = Some((sol, g, d));
            break;
        }
        let newton = p - g / d;
        p = if d != 0.0 && newton > a.min(b) && newton < a.max(b) { newton } else { 0.5 * (a + b) };
    }
    let (sol, g, d) = found?;
    // a pole of ∂f/∂p3 (the chart itself degenerating) also changes sign
    if g.abs() > 1e-8 * d.abs().max(1.0) {
        return None;
    }
    let c = sol.point;
    Some(CausticPoint {
        x: [c.x1, c.x2, c.f],
        s1,
        p3: c.p3,
        takeoff: c.takeoff,
        t_inc: c.t_inc,
        f_p3: g,
        f_p3p3: d,
        kind: if d.abs() > fold_tol { CausticKind::Fold } else { CausticKind::Degenerate },
    })
}

/// Fold caustics of the source `s`: zeros of `∂f/∂p3` on the grid,
/// followed by continuation in `p3` along each `(x1, x2)` column and
/// refined by Newton.
pub fn fold_caustic_scan(model: &SoundspeedModel, source: &Vec3, grid: &CausticGrid) -> Result<Vec<CausticPoint>> {
    let (plo, phi, pn) = grid.p3;
    if pn < 2 || !(phi > plo) {
        return Err(Error::Precondition("p3 grid needs at least two increasing nodes".into()));
    }
    let samples = fan_samples(model, source, &grid.fan, grid.depth)?;
    let solver = IncidentSolver { model, s2: source[1], s3: source[2], opts: grid.chart };
    let s1 = source[0];
    let p3s: Vec<f64> = (0..pn).map(|k| plo + (phi - plo) * k as f64 / (pn - 1) as f64).collect();
    let columns: Vec<(f64, f64)> = grid.x1.iter().flat_map(|&a| grid.x2.iter().map(move |&b| (a, b))).collect();
    let found: Vec<Vec<CausticPoint>> = columns
        .par_iter()
        .map(|&(x1, x2)| {
            let mut out = Vec::new();
            for k in 0..pn - 1 {
                let Some(seed) = nearest_seed(&samples, x1, x2, p3s[k]) else { continue };
                let Ok(here) = solver.solve(x1, x2, s1, p3s[k], Some(seed)) else { continue };
                if !in_window(&here, grid.depth) {
                    continue;
                }
                // continue the same branch to the next node
                let Ok(next) = solver.solve(x1, x2, s1, p3s[k + 1], Some(here.seed)) else { continue };
                if !in_window(&next, grid.depth) {
                    continue;
                }
                let (g0, g1) = (here.point.jacobian[0][3], next.point.jacobian[0][3]);
                if g0 * g1 < 0.0 {
                    if let Some(cp) = refine_fold(&solver, x1, x2, s1, (p3s[k], p3s[k + 1]), here.seed, grid.fold_tol) {
                        out.push(cp);
                    }
                }
            }
            out
        })
        .collect();
    let mut result: Vec<CausticPoint> = Vec::new();
    for cp in found.into_iter().flatten() {
        let dup = result.iter().any(|r| {
            (0..3).map(|i| (r.x[i] - cp.x[i]).abs() + (r.takeoff[i] - cp.takeoff[i]).abs()).sum::<f64>() < 1e-8
        });
        if !dup {
            result.push(cp);
        }
    }
    Ok(result)
}

/// Five rays: a central one and central-difference partners in two take-off angles.
struct SpreadingBundle {
    y: [[f64; 6]; 5],
}

const ANGLE_STEP: f64 = 1e-6;

impl SpreadingBundle {
    fn new(model: &SoundspeedModel, source: &Vec3, takeoff: &Vec3) -> Self {
        let d = unit(takeoff);
        let (e1, e2) = orthonormal_pair(&d);
        let c = model.speed(source);
        let make = |a: f64, b: f64| {
            let dir = unit(&[0, 1, 2].map(|k| d[k] + a * e1[k] + b * e2[k]));
            [source[0], source[1], source[2], dir[0] / c, dir[1] / c, dir[2] / c]
        };
        let h = ANGLE_STEP;
        Self { y: [make(0.0, 0.0), make(h, 0.0), make(-h, 0.0), make(0.0, h), make(0.0, -h)] }
    }

    fn step(&self, model: &SoundspeedModel, h: f64) -> Self {
        Self { y: self.y.map(|y| rk_step(model, &y, h)) }
    }

    /// `det[∂x/∂a, ∂x/∂b, ẋ]`.
    fn jacobian(&self, model: &SoundspeedModel) -> f64 {
        let col = |p: usize, m: usize| [0, 1, 2].map(|k| (self.y[p][k] - self.y[m][k]) / (2.0 * ANGLE_STEP));
        let xa = col(1, 2);
        let xb = col(3, 4);
        let f = vector_field(model, &self.y[0]);
        dot(&cross(&xa, &xb), &[f[0], f[1], f[2]])
    }

    fn position(&self) -> Vec3 {
        [self.y[0][0], self.y[0][1], self.y[0][2]]
    }
}

/// A sign change of the spreading Jacobian along one ray.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpreadingZero {
    pub takeoff: Vec3,
    pub t: f64,
    pub x: Vec3,
}

fn bisect_zero(model: &SoundspeedModel, start: &SpreadingBundle, j0: f64, t0: f64, h: f64) -> (f64, Vec3) {
    let (mut lo, mut hi) = (0.0, h);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        let b = start.step(model, mid);
        if b.jacobian(model).signum() == j0.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    (t0 + t, start.step(model, t).position())
}

/// Brute-force caustic oracle: trace the ray with take-off slowness
/// `takeoff` and its angular neighbours with fixed steps of size `h`, and
/// return the sign change of the spreading Jacobian nearest `t_guess`
/// within `± window`.
pub fn spreading_zero_near(
    model: &SoundspeedModel,
    source: &Vec3,
    takeoff: &Vec3,
    t_guess: f64,
    window: f64,
    h: f64,
) -> Option<SpreadingZero> {
    let t_start = (t_guess - window).max(0.0);
    let mut b = SpreadingBundle::new(model, source, takeoff);
    let n0 = (t_start / h).floor() as usize;
    for _ in 0..n0 {
        b = b.step(model, h);
    }
    let mut t = n0 as f64 * h;
    let mut j = b.jacobian(model);
    let mut best: Option<SpreadingZero> = None;
    while t < t_guess + window {
        let nb = b.step(model, h);
        let nj = nb.jacobian(model);
        if j != 0.0 && nj.signum() != j.signum() {
            let (tz, x) = bisect_zero(model, &b, j, t, h);
            if best.map_or(true, |z| (tz - t_guess).abs() < (z.t - t_guess).abs()) {
                best = Some(SpreadingZero { takeoff: *takeoff, t: tz, x });
            }
        }
        b = nb;
        j = nj;
        t += h;
    }
    best
}

/// All sign changes of the spreading Jacobian along every ray of a fan,
/// ignoring the first `t_skip` of travel time.
pub fn fan_spreading_zeros(model: &SoundspeedModel, source: &Vec3, fan: &FanSpec, h: f64, t_skip: f64) -> Vec<SpreadingZero> {
    let c = model.speed(source);
    fan.directions()
        .par_iter()
        .flat_map_iter(|d| {
            let takeoff = [d[0] / c, d[1] / c, d[2] / c];
            let mut b = SpreadingBundle::new(model, source, &takeoff);
            let mut out = Vec::new();
            let mut t = 0.0;
            let mut j = f64::NAN;
            while t < fan.t_max {
                let nb = b.step(model, h);
                let nj = nb.jacobian(model);
                if t >= t_skip && j.is_finite() && j != 0.0 && nj.signum() != j.signum() {
                    let (tz, x) = bisect_zero(model, &b, j, t, h);
                    out.push(SpreadingZero { takeoff, t: tz, x });
                }
                b = nb;
                j = nj;
                t += h;
            }
            out
        })
        .collect()
}

/// Result of the marine fold test at a point of `{f_p3 = f_s1 = 0}`.
#[derive(Debug, Clone, Serialize)]
pub struct MarineFoldReport {
    pub point: Vec<f64>,
    /// `det [[f_p3p3, f_s1p3], [f_p3s1, f_s1s1]]`.
    pub determinant: f64,
    pub hessian_block: [[f64; 2]; 2],
    /// `σ_min / σ_max` of the stacked gradients of `f_p3` and `f_s1`.
    pub gradient_independence: f64,
    pub f_p3: f64,
    pub f_s1: f64,
    pub pass: bool,
}

/// Marine fold condition for `f(x1, x2, s1, p3)` at a critical point.
///
/// Passes iff the 2×2 determinant exceeds `tol` in absolute value and the
/// gradients of `∂f/∂p3` and `∂f/∂s1` are linearly independent.
pub fn marine_fold_check(f: &dyn SmoothMap, point: &RealVector, tol: f64) -> Result<MarineFoldReport> {
    if f.dim_in() != 4 || f.dim_out() != 1 {
        return Err(Error::DimensionMismatch { expected: 4, got: f.dim_in() });
    }
    let jet = jet_evaluate(f, point, 2)?;
    let (fs, fp) = (jet.jacobian[(0, 2)], jet.jacobian[(0, 3)]);
    if fs.abs() > 1e-8 || fp.abs() > 1e-8 {
        return Err(Error::Precondition(format!(
            "not on the marine critical set: f_p3 = {fp:e}, f_s1 = {fs:e}"
        )));
    }
    let h = &jet.hessian[0];
    let block = [[h[(3, 3)], h[(2, 3)]], [h[(3, 2)], h[(2, 2)]]];
    let det = block[0][0] * block[1][1] - block[0][1] * block[1][0];
    let grads = RealMatrix::from_fn(2, 4, |r, k| if r == 0 { h[(3, k)] } else { h[(2, k)] });
    let sv = singular_values(&grads);
    let independence = if sv[0] > 0.0 { sv[1] / sv[0] } else { 0.0 };
    Ok(MarineFoldReport {
        point: point.iter().copied().collect(),
        determinant: det,
        hessian_block: block,
        gradient_independence: independence,
        f_p3: fp,
        f_s1: fs,
        pass: det.abs() > tol && independence > 1e-8,
    })
}

/// A point of `{∂f/∂p3 = ∂f/∂s1 = 0}` with the incident seed that produced it.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MarineCritical {
    /// `(x1, x2, s1, p3)`.
    pub q: [f64; 4],
    pub seed: TakeoffSeed,
    pub f: f64,
    pub residual: f64,
}

/// Newton in `(s1, p3)` at fixed `(x1, x2)` for `f_p3 = f_s1 = 0`.
pub fn marine_critical_point(
    chart: &IncidentChart,
    x1: f64,
    x2: f64,
    guess: (f64, f64),
    seed: TakeoffSeed,
) -> Result<MarineCritical> {
    let solver = IncidentSolver { model: chart.model(), s2: chart_s2(chart), s3: chart_s3(chart), opts: *chart.options() };
    let grad = |s1: f64, p3: f64, seed: TakeoffSeed| -> Result<(IncidentSolution, [f64; 2])> {
        let sol = solver.solve(x1, x2, s1, p3, Some(seed))?;
        let j = sol.point.jacobian[0];
        Ok((sol, [j[3], j[2]]))
    };
    let (mut s1, mut p3) = guess;
    let (mut sol, mut g) = grad(s1, p3, seed)?;
    for it in 0..40 {
        let gn = g[0].hypot(g[1]);
        if gn <= 1e-11 {
            return Ok(MarineCritical { q: [x1, x2, s1, p3], seed: sol.seed, f: sol.point.f, residual: gn });
        }
        let hs = 6e-6;
        let (_, gp) = grad(s1, p3 + hs, sol.seed)?;
        let (_, gm) = grad(s1, p3 - hs, sol.seed)?;
        let (_, gsp) = grad(s1 + hs, p3, sol.seed)?;
        let (_, gsm) = grad(s1 - hs, p3, sol.seed)?;
        // columns (s1, p3)
        let m = [
            [(gsp[0] - gsm[0]) / (2.0 * hs), (gp[0] - gm[0]) / (2.0 * hs)],
            [(gsp[1] - gsm[1]) / (2.0 * hs), (gp[1] - gm[1]) / (2.0 * hs)],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let ds = -(m[1][1] * g[0] - m[0][1] * g[1]) / det;
        let dp = -(-m[1][0] * g[0] + m[0][0] * g[1]) / det;
        let mut lambda = 1.0;
        let mut moved = false;
        for _ in 0..20 {
            if let Ok((ns, ng)) = grad(s1 + lambda * ds, p3 + lambda * dp, sol.seed) {
                if ng[0].hypot(ng[1]) < gn || it == 0 && lambda < 1e-3 {
                    s1 += lambda * ds;
                    p3 += lambda * dp;
                    sol = ns;
                    g = ng;
                    moved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let gn = g[0].hypot(g[1]);
    if gn <= 1e-9 {
        return Ok(MarineCritical { q: [x1, x2, s1, p3], seed: sol.seed, f: sol.point.f, residual: gn });
    }
    Err(Error::NoConvergence { best: vec![x1, x2, s1, p3], residual: gn, iterations: 40 })
}

fn chart_s2(chart: &IncidentChart) -> f64 {
    chart.source_line().0
}

fn chart_s3(chart: &IncidentChart) -> f64 {
    chart.source_line().1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smallmath::FnMap;

    fn quad(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> FnMap<impl Fn(&RealVector) -> Result<RealVector> + Send + Sync> {
        FnMap::new(4, 1, move |x: &RealVector| Ok(RealVector::from_element(1, f(x.as_slice()))))
    }

    #[test]
    fn synthetic_marine_checks() {
        let origin = RealVector::zeros(4);
        // coordinates (x1, x2, s1, p3)
        let good = quad(|q| q[3] * q[3] - q[2] * q[2] + q[0] * q[3]);
        let r = marine_fold_check(&good, &origin, 1e-6).unwrap();
        assert!(r.pass);
        assert!((r.determinant + 4.0).abs() < 1e-5, "{}", r.determinant);
        let bad = quad(|q| q[3].powi(3) + q[2].powi(3));
        let r = marine_fold_check(&bad, &origin, 1e-6).unwrap();
        assert!(!r.pass);
        assert!(r.determinant.abs() < 1e-6);
        let off = quad(|q| q[3]);
        assert!(matches!(marine_fold_check(&off, &origin, 1e-6), Err(Error::Precondition(_))));
    }

    #[test]
    fn constant_speed_has_no_caustics() {
        let m = SoundspeedModel::Constant { c: 1.0 };
        let src = [0.0, 0.0, 0.0];
        let grid = CausticGrid {
            x1: vec![-0.5, 0.3],
            x2: vec![0.2, 0.7],
            p3: (0.3, 0.95, 12),
            depth: (0.0, 10.0),
            fan: FanSpec { axis: [0.0, 0.0, 1.0], max_angle: 1.3, n_polar: 12, n_azimuth: 16, t_max: 4.0 },
            fold_tol: 1e-6,
            chart: ChartOptions { steps: 100, ..ChartOptions::default() },
        };
        assert!(fold_caustic_scan(&m, &src, &grid).unwrap().is_empty());
        assert!(fan_spreading_zeros(&m, &src, &grid.fan, 0.05, 0.1).is_empty());
    }

    #[test]
    fn spreading_jacobian_of_a_point_source() {
        // straight rays: J = t² |ẋ| sin-free, positive after the source
        let m = SoundspeedModel::Constant { c: 1.0 };
        let b = SpreadingBundle::new(&m, &[0.0; 3], &[0.0, 0.0, 1.0]).step(&m, 2.0);
        assert!((b.jacobian(&m) - 4.0).abs() < 1e-6);
    }
}
