use serde::Serialize;

use super::soundspeed::{SoundspeedModel, Vec3};
use crate::error::{Error, Result};
use crate::singularity::DomainBox;

/// A point of phase space along a ray: position, slowness covector, travel time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RayState {
    pub x: Vec3,
    pub xi: Vec3,
    pub t: f64,
}

impl RayState {
    pub(crate) fn packed(&self) -> [f64; 6] {
        [self.x[0], self.x[1], self.x[2], self.xi[0], self.xi[1], self.xi[2]]
    }

    pub(crate) fn from_packed(y: &[f64; 6], t: f64) -> Self {
        Self { x: [y[0], y[1], y[2]], xi: [y[3], y[4], y[5]], t }
    }

    /// `|c0(x)|ξ| − 1|`.
    pub fn hamiltonian_defect(&self, model: &SoundspeedModel) -> f64 {
        (model.speed(&self.x) * norm3(&self.xi) - 1.0).abs()
    }
}

pub(crate) fn norm3(v: &Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// `(ẋ, ξ̇) = (c ξ/|ξ|, −|ξ| ∇c)`.
pub(crate) fn vector_field(model: &SoundspeedModel, y: &[f64; 6]) -> [f64; 6] {
    let (c, g, _) = model.eval(&[y[0], y[1], y[2]]);
    let n = (y[3] * y[3] + y[4] * y[4] + y[5] * y[5]).sqrt();
    [c * y[3] / n, c * y[4] / n, c * y[5] / n, -n * g[0], -n * g[1], -n * g[2]]
}

/// Vector field and its Jacobian.
pub(crate) fn vector_field_jac(model: &SoundspeedModel, y: &[f64; 6]) -> ([f64; 6], [[f64; 6]; 6]) {
    let (c, g, h) = model.eval(&[y[0], y[1], y[2]]);
    let xi = [y[3], y[4], y[5]];
    let n = norm3(&xi);
    let u = [xi[0] / n, xi[1] / n, xi[2] / n];
    let f = [c * u[0], c * u[1], c * u[2], -n * g[0], -n * g[1], -n * g[2]];
    let mut a = [[0.0; 6]; 6];
    for i in 0..3 {
        for j in 0..3 {
            let d = if i == j { 1.0 } else { 0.0 };
            a[i][j] = u[i] * g[j];
            a[i][3 + j] = c * (d - u[i] * u[j]) / n;
            a[3 + i][j] = -n * h[i][j];
            a[3 + i][3 + j] = -g[i] * u[j];
        }
    }
    (f, a)
}

/// Rescale `ξ` onto `c|ξ| = 1`.
pub(crate) fn project(model: &SoundspeedModel, y: &mut [f64; 6]) -> f64 {
    let c = model.speed(&[y[0], y[1], y[2]]);
    let n = (y[3] * y[3] + y[4] * y[4] + y[5] * y[5]).sqrt();
    let defect = (c * n - 1.0).abs();
    let s = 1.0 / (c * n);
    for k in 3..6 {
        y[k] *= s;
    }
    defect
}

// Dormand–Prince 5(4)
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B_ERR: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// One DOPRI5 step of signed size `h`; returns the new state and the error estimate.
fn dopri_step(model: &SoundspeedModel, y: &[f64; 6], h: f64) -> ([f64; 6], [f64; 6]) {
    let mut k = [[0.0; 6]; 7];
    for s in 0..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            if A[s][j] != 0.0 {
                for i in 0..6 {
                    ys[i] += h * A[s][j] * kj[i];
                }
            }
        }
        k[s] = vector_field(model, &ys);
    }
    let mut out = *y;
    let mut err = [0.0; 6];
    for s in 0..7 {
        for i in 0..6 {
            out[i] += h * B[s] * k[s][i];
            err[i] += h * B_ERR[s] * k[s][i];
        }
    }
    (out, err)
}

/// One projected DOPRI5 step of signed size `h`.
pub(crate) fn rk_step(model: &SoundspeedModel, y: &[f64; 6], h: f64) -> [f64; 6] {
    let mut out = dopri_step(model, y, h).0;
    project(model, &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FlowStop {
    /// Integrated for the full requested duration.
    Duration,
    /// Crossed the surface `x3 = 0` upward; the final state is on the surface.
    Surface,
    /// Left the declared domain box; the final state is the last one inside.
    LeftDomain,
    /// Step size underflow.
    StepFailure,
}

#[derive(Debug, Clone)]
pub struct FlowOptions {
    pub tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub domain: Option<DomainBox>,
    pub stop_at_surface: bool,
    /// Keep every accepted state; otherwise only the endpoints.
    pub record: bool,
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            initial_step: 1e-2,
            max_step: 0.25,
            min_step: 1e-12,
            domain: None,
            stop_at_surface: false,
            record: true,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub states: Vec<RayState>,
    pub stop: FlowStop,
    /// Largest `|c|ξ| − 1|` seen after any step, before projection.
    pub max_hamiltonian_defect: f64,
    pub steps: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn last(&self) -> &RayState {
        self.states.last().expect("trajectory has at least the initial state")
    }
}

fn err_norm(y: &[f64; 6], ynew: &[f64; 6], e: &[f64; 6], tol: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..6 {
        let sc = tol + tol * y[i].abs().max(ynew[i].abs());
        s += (e[i] / sc).powi(2);
    }
    (s / 6.0).sqrt()
}

/// Flow a phase-space state for a signed travel time `duration`.
pub fn flow_state(model: &SoundspeedModel, start: RayState, duration: f64, opts: &FlowOptions) -> Result<Trajectory> {
    if !start.xi.iter().all(|v| v.is_finite()) || norm3(&start.xi) == 0.0 {
        return Err(Error::Precondition("initial slowness must be finite and nonzero".into()));
    }
    let dir = if duration < 0.0 { -1.0 } else { 1.0 };
    let total = duration.abs();
    let mut y = start.packed();
    let mut t = 0.0;
    let mut states = vec![start];
    let mut max_defect = start.hamiltonian_defect(model);
    let mut h = opts.initial_step.min(opts.max_step).min(total.max(opts.min_step));
    let mut steps = 0;
    let mut rejected = 0;
    let mut stop = FlowStop::Duration;
    while t < total {
        if steps + rejected >= opts.max_steps {
            stop = FlowStop::StepFailure;
            break;
        }
        let hs = h.min(total - t);
        let (ynew, e) = dopri_step(model, &y, dir * hs);
        let en = err_norm(&y, &ynew, &e, opts.tol);
        if !en.is_finite() || en > 1.0 {
            rejected += 1;
            h = hs * (0.9 * en.powf(-0.2)).clamp(0.1, 0.5);
            if !en.is_finite() {
                h = hs * 0.1;
            }
            if h < opts.min_step {
                stop = FlowStop::StepFailure;
                break;
            }
            continue;
        }
        let mut ynew = ynew;
        max_defect = max_defect.max(project(model, &mut ynew));
        steps += 1;
        if opts.stop_at_surface && ynew[2] <= 0.0 && y[2] > 0.0 {
            // bisect the crossing inside this step by re-stepping from its start
            let (mut lo, mut hi) = (0.0, hs);
            let mut yc = ynew;
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                let (ym, _) = dopri_step(model, &y, dir * mid);
                if ym[2] > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                    yc = ym;
                }
            }
            project(model, &mut yc);
            states.push(RayState::from_packed(&yc, start.t + dir * (t + hi)));
            stop = FlowStop::Surface;
            break;
        }
        if let Some(b) = &opts.domain {
            let inside = (0..3).all(|i| ynew[i] >= b.lo[i] && ynew[i] <= b.hi[i]);
            if !inside {
                stop = FlowStop::LeftDomain;
                break;
            }
        }
        t += hs;
        y = ynew;
        let st = RayState::from_packed(&y, start.t + dir * t);
        if opts.record || t >= total {
            states.push(st);
        }
        h = (hs * (0.9 * en.max(1e-10).powf(-0.2)).clamp(0.2, 5.0)).min(opts.max_step);
    }
    if !opts.record && states.len() == 1 && stop != FlowStop::Surface {
        states.push(RayState::from_packed(&y, start.t + dir * t));
    }
    Ok(Trajectory { states, stop, max_hamiltonian_defect: max_defect, steps, rejected })
}

/// Trace the ray leaving `source` in the unit direction `takeoff` for travel time `t_max`.
///
/// The initial slowness is `takeoff / c0(source)`, so the ray starts on `c|ξ| = 1`.
pub fn bicharacteristic_flow(
    model: &SoundspeedModel,
    source: &Vec3,
    takeoff: &Vec3,
    t_max: f64,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    let n = norm3(takeoff);
    if !(n - 1.0).abs().le(&1e-12) {
        return Err(Error::Precondition(format!("take-off direction has norm {n}, expected 1")));
    }
    if t_max < 0.0 {
        return Err(Error::Precondition("t_max must be nonnegative".into()));
    }
    let c = model.speed(source);
    if !(c > 0.0) {
        return Err(Error::Precondition(format!("soundspeed {c} at the source")));
    }
    let start = RayState { x: *source, xi: [takeoff[0] / c, takeoff[1] / c, takeoff[2] / c], t: 0.0 };
    flow_state(model, start, t_max, opts)
}

/// Maximum number of sensitivity columns carried by [`flow_fixed`].
pub(crate) const MAX_COLS: usize = 6;

/// State, sensitivities `∂y/∂(columns)` and time derivative `∂y/∂T` after a
/// fixed-grid flow.
#[derive(Debug, Clone)]
pub(crate) struct Sensitive {
    pub y: [f64; 6],
    pub v: [[f64; MAX_COLS]; 6],
    pub w: [f64; 6],
}

/// Flow for time `duration` on a uniform grid of `steps` DOPRI5 steps,
/// projecting onto `c|ξ| = 1` after each step and carrying the
/// variational equations for `ncols` initial perturbations plus the
/// derivative with respect to `duration`.
///
/// The grid is uniform in `t / duration`, so the result is a smooth
/// function of the initial data and of the duration, and the carried
/// derivatives are exact derivatives of the discrete map.
pub(crate) fn flow_fixed(
    model: &SoundspeedModel,
    y0: &[f64; 6],
    v0: &[[f64; MAX_COLS]; 6],
    ncols: usize,
    duration: f64,
    steps: usize,
) -> Sensitive {
    let h = 1.0 / steps as f64;
    let tt = duration;
    let mut y = *y0;
    let mut v = *v0;
    let mut w = [0.0; 6];
    let mut ky = [[0.0; 6]; 6];
    let mut kv = [[[0.0; MAX_COLS]; 6]; 6];
    let mut kw = [[0.0; 6]; 6];
    for _ in 0..steps {
        for s in 0..6 {
            let mut ys = y;
            let mut vs = v;
            let mut ws = w;
            for j in 0..s {
                let a = A[s][j];
                if a == 0.0 {
                    continue;
                }
                for i in 0..6 {
                    ys[i] += h * a * ky[j][i];
                    ws[i] += h * a * kw[j][i];
                    for c in 0..ncols {
                        vs[i][c] += h * a * kv[j][i][c];
                    }
                }
            }
            let (f, jac) = vector_field_jac(model, &ys);
            for i in 0..6 {
                ky[s][i] = tt * f[i];
                let mut acc_w = f[i];
                for k in 0..6 {
                    acc_w += tt * jac[i][k] * ws[k];
                }
                kw[s][i] = acc_w;
                for c in 0..ncols {
                    let mut acc = 0.0;
                    for k in 0..6 {
                        acc += jac[i][k] * vs[k][c];
                    }
                    kv[s][i][c] = tt * acc;
                }
            }
        }
        for s in 0..6 {
            let b = B[s];
            if b == 0.0 {
                continue;
            }
            for i in 0..6 {
                y[i] += h * b * ky[s][i];
                w[i] += h * b * kw[s][i];
                for c in 0..ncols {
                    v[i][c] += h * b * kv[s][i][c];
                }
            }
        }
        project_with_tangents(model, &mut y, &mut v, ncols, &mut w);
    }
    Sensitive { y, v, w }
}

/// Projection onto `c|ξ| = 1` and its derivative applied to tangent columns.
fn project_with_tangents(
    model: &SoundspeedModel,
    y: &mut [f64; 6],
    v: &mut [[f64; MAX_COLS]; 6],
    ncols: usize,
    w: &mut [f64; 6],
) {
    let (c, g, _) = model.eval(&[y[0], y[1], y[2]]);
    let xi = [y[3], y[4], y[5]];
    let n = norm3(&xi);
    let u = [xi[0] / n, xi[1] / n, xi[2] / n];
    let s = 1.0 / (c * n);
    // dξ' = s (I − u uᵀ) dξ − s/c ξ ∇cᵀ dx
    let apply = |col: [f64; 6]| -> [f64; 6] {
        let dx = [col[0], col[1], col[2]];
        let dxi = [col[3], col[4], col[5]];
        let ud = u[0] * dxi[0] + u[1] * dxi[1] + u[2] * dxi[2];
        let gd = g[0] * dx[0] + g[1] * dx[1] + g[2] * dx[2];
        let mut out = col;
        for i in 0..3 {
            out[3 + i] = s * (dxi[i] - u[i] * ud) - s / c * xi[i] * gd;
        }
        out
    };
    for c_ in 0..ncols {
        let col = [v[0][c_], v[1][c_], v[2][c_], v[3][c_], v[4][c_], v[5][c_]];
        let out = apply(col);
        for i in 0..6 {
            v[i][c_] = out[i];
        }
    }
    *w = apply(*w);
    for k in 3..6 {
        y[k] *= s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> FlowOptions {
        FlowOptions::default()
    }

    #[test]
    fn straight_ray_in_constant_medium() {
        let m = SoundspeedModel::Constant { c: 1.0 };
        let tr = bicharacteristic_flow(&m, &[0.0; 3], &[0.0, 0.0, 1.0], 3.0, &opts()).unwrap();
        let e = tr.last();
        assert_eq!(tr.stop, FlowStop::Duration);
        assert!((e.x[2] - 3.0).abs() < 1e-12 && e.x[0].abs() < 1e-15);
        assert!((e.xi[2] - 1.0).abs() < 1e-14);
        assert!((e.t - 3.0).abs() < 1e-14);
    }

    #[test]
    fn spatial_speed_is_soundspeed() {
        let m = SoundspeedModel::standard_lens([0.0, 0.0, 2.0]);
        let tr = bicharacteristic_flow(&m, &[0.3, 0.1, 0.0], &[0.0, 0.6, 0.8], 4.0, &opts()).unwrap();
        for s in &tr.states {
            let f = vector_field(&m, &s.packed());
            let sp = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt();
            assert!((sp - m.speed(&s.x)).abs() < 1e-8);
        }
        assert!(tr.max_hamiltonian_defect <= 1e-8, "{}", tr.max_hamiltonian_defect);
    }

    #[test]
    fn time_reversal() {
        let m = SoundspeedModel::standard_lens([0.0, 0.0, 2.0]);
        let o = FlowOptions { record: false, ..opts() };
        let fwd = flow_state(&m, RayState { x: [0.2, -0.1, 0.0], xi: [0.1, 0.3, 0.9], t: 0.0 }, 5.0, &o);
        // start off the characteristic set is allowed: flow_state only needs ξ ≠ 0
        let fwd = fwd.unwrap();
        let back = flow_state(&m, *fwd.last(), -5.0, &o).unwrap();
        let b = back.last();
        let s = RayState { x: [0.2, -0.1, 0.0], xi: [0.1, 0.3, 0.9], t: 0.0 };
        let c0 = m.speed(&s.x);
        let n0 = norm3(&s.xi);
        for i in 0..3 {
            assert!((b.x[i] - s.x[i]).abs() < 1e-7);
            assert!((b.xi[i] - s.xi[i] / (c0 * n0)).abs() < 1e-7);
        }
        assert!(b.t.abs() < 1e-12);
    }

    #[test]
    fn surface_event_and_domain_exit() {
        let m = SoundspeedModel::Constant { c: 1.0 };
        let o = FlowOptions { stop_at_surface: true, ..opts() };
        let start = RayState { x: [0.0, 0.0, 1.0], xi: [0.6, 0.0, -0.8], t: 0.0 };
        let tr = flow_state(&m, start, 10.0, &o).unwrap();
        assert_eq!(tr.stop, FlowStop::Surface);
        let e = tr.last();
        assert!(e.x[2].abs() < 1e-9);
        assert!((e.t - 1.25).abs() < 1e-9);
        let o = FlowOptions { domain: Some(DomainBox::cube(3, -1.0, 1.0)), ..opts() };
        let tr = bicharacteristic_flow(&m, &[0.0; 3], &[1.0, 0.0, 0.0], 5.0, &o).unwrap();
        assert_eq!(tr.stop, FlowStop::LeftDomain);
        assert!(tr.last().x[0] <= 1.0);
    }

    #[test]
    fn fixed_flow_sensitivities_match_differences() {
        let m = SoundspeedModel::standard_lens([0.0, 0.0, 2.0]);
        let y0 = [0.1, 0.2, 0.0, 0.1, -0.2, 0.97];
        let mut v0 = [[0.0; MAX_COLS]; 6];
        for i in 0..6 {
            v0[i][i] = 1.0;
        }
        let t = 3.3;
        let r = flow_fixed(&m, &y0, &v0, 6, t, 200);
        let h = 1e-6;
        for c in 0..6 {
            let mut yp = y0;
            let mut ym = y0;
            yp[c] += h;
            ym[c] -= h;
            let a = flow_fixed(&m, &yp, &v0, 0, t, 200).y;
            let b = flow_fixed(&m, &ym, &v0, 0, t, 200).y;
            for i in 0..6 {
                assert!(((a[i] - b[i]) / (2.0 * h) - r.v[i][c]).abs() < 1e-6);
            }
        }
        let a = flow_fixed(&m, &y0, &v0, 0, t + h, 200).y;
        let b = flow_fixed(&m, &y0, &v0, 0, t - h, 200).y;
        for i in 0..6 {
            assert!(((a[i] - b[i]) / (2.0 * h) - r.w[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn fixed_flow_matches_adaptive() {
        let m = SoundspeedModel::standard_lens([0.0, 0.0, 2.0]);
        let mut y0 = [0.1, 0.2, 0.0, 0.1, -0.2, 0.97];
        project(&m, &mut y0);
        let v0 = [[0.0; MAX_COLS]; 6];
        let r = flow_fixed(&m, &y0, &v0, 0, 6.0, 400);
        let a = flow_state(&m, RayState::from_packed(&y0, 0.0), 6.0, &FlowOptions { tol: 1e-12, ..opts() }).unwrap();
        let e = a.last().packed();
        for i in 0..6 {
            assert!((e[i] - r.y[i]).abs() < 1e-8, "{i}: {} vs {}", e[i], r.y[i]);
        }
    }
}
