use std::sync::Arc;

use nalgebra::DMatrix;

use super::ComposedPoint;
use crate::canrel::GeneratingFunction;
use crate::error::{Error, Result};
use crate::singularity::DomainBox;
use crate::smallmath::{FdPolicy, Poly, PolyMap, RealVector, SmoothMap, SmoothMapHandle};

/// A chart of the non-diagonal branch `C̃ ⊂ T*Y × T*Y`, `dim Y = m`.
///
/// Parameters are `(x'', a, b, ξ'')` with `x'' = (x_1, …, x_{m-1})`,
/// `a = x_m`, `b = y_m` and `ξ''` the first `m − 1` covector entries of the
/// left point. `left` and `right` emit `(x, ξ)` and `(y, η)`.
#[derive(Clone)]
pub struct TildeChart {
    pub m: usize,
    pub param_names: Vec<String>,
    pub left: SmoothMapHandle,
    pub right: SmoothMapHandle,
    pub sample_box: DomainBox,
}

impl std::fmt::Debug for TildeChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TildeChart").field("m", &self.m).field("param_names", &self.param_names).finish()
    }
}

impl TildeChart {
    pub fn dim(&self) -> usize {
        2 * self.m
    }

    pub fn a_index(&self) -> usize {
        self.m - 1
    }

    pub fn b_index(&self) -> usize {
        self.m
    }

    pub fn eval(&self, p: &RealVector) -> Result<(RealVector, RealVector)> {
        Ok((self.left.eval(p)?, self.right.eval(p)?))
    }

    /// Chart parameters read off a point `((x, ξ), (y, η))`.
    pub fn params_of(&self, p: &ComposedPoint) -> Result<RealVector> {
        let m = self.m;
        if p.x.len() != m || p.y.len() != m || p.xi.len() != m || p.eta.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: p.x.len() });
        }
        let mut v = Vec::with_capacity(2 * m);
        v.extend_from_slice(&p.x[..m - 1]);
        v.push(p.x[m - 1]);
        v.push(p.y[m - 1]);
        v.extend_from_slice(&p.xi[..m - 1]);
        Ok(RealVector::from_vec(v))
    }

    /// The parameters of the swapped point `((y, η), (x, ξ))`.
    pub fn swapped_params(&self, p: &RealVector) -> Result<RealVector> {
        let m = self.m;
        let r = self.right.eval(p)?;
        let mut v = Vec::with_capacity(2 * m);
        v.extend(r.iter().take(m).copied());
        v.push(p[self.a_index()]);
        v.extend(r.iter().skip(m).take(m - 1).copied());
        Ok(RealVector::from_vec(v))
    }

    /// `|(x, ξ, y, η) − chart(params_of(point))|`.
    pub fn membership_residual(&self, p: &ComposedPoint) -> Result<f64> {
        let q = self.params_of(p)?;
        let (l, r) = self.eval(&q)?;
        let flat = p.flat();
        let mine = l.iter().chain(r.iter());
        Ok(mine.zip(&flat).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt())
    }

    /// A point of `C̃` as a composed point (witness left empty).
    pub fn point(&self, p: &RealVector) -> Result<ComposedPoint> {
        let m = self.m;
        let (l, r) = self.eval(p)?;
        Ok(ComposedPoint {
            x: l.as_slice()[..m].to_vec(),
            xi: l.as_slice()[m..].to_vec(),
            y: r.as_slice()[..m].to_vec(),
            eta: r.as_slice()[m..].to_vec(),
            z: Vec::new(),
            zeta: Vec::new(),
            residual: 0.0,
            first_leg: Vec::new(),
            second_leg: Vec::new(),
        })
    }
}

fn param_names(m: usize) -> Vec<String> {
    let mut v: Vec<String> = (1..m).map(|i| format!("x{i}")).collect();
    v.push("a".into());
    v.push("b".into());
    v.extend((1..m).map(|i| format!("xi{i}")));
    v
}

fn tilde_box(m: usize) -> DomainBox {
    let mut lo = vec![-1.0; 2 * m];
    let mut hi = vec![1.0; 2 * m];
    for k in [m - 1, m] {
        lo[k] = -0.5;
        hi[k] = 0.5;
    }
    lo[m + 1] = 0.5;
    hi[m + 1] = 1.5;
    for k in m + 2..2 * m {
        lo[k] = -0.5;
        hi[k] = 0.5;
    }
    DomainBox::new(lo, hi)
}

/// The explicit chart of `C̃₀` for the hyperbolic model on `T*ℝ^{n-1}`:
/// `(x'', a, θ'', (a+b)(3a−b)/4 θ1)` on the left and
/// `(x_1 + (a+b)²(a−b)/4, x''', b, θ'', (a+b)(3b−a)/4 θ1)` on the right.
pub fn model_tilde_chart(n: usize) -> Result<TildeChart> {
    if n < 3 {
        return Err(Error::Precondition(format!("dimension n = {n} must be at least 3")));
    }
    let m = n - 1;
    let nv = 2 * m;
    let v = |i: usize| Poly::var(nv, i);
    let (a, b, t1) = (v(m - 1), v(m), v(m + 1));
    let s = a.add(&b);
    let quarter = |p: Poly| p.scale(0.25);
    let mut left: Vec<Poly> = (0..m).map(v).collect();
    left.extend((m + 1..nv).map(v));
    left.push(quarter(s.mul(&a.scale(3.0).sub(&b)).mul(&t1)));
    let mut right = vec![v(0).add(&quarter(s.pow(2).mul(&a.sub(&b))))];
    right.extend((1..m - 1).map(v));
    right.push(b.clone());
    right.extend((m + 1..nv).map(v));
    right.push(quarter(s.mul(&b.scale(3.0).sub(&a)).mul(&t1)));
    Ok(TildeChart {
        m,
        param_names: param_names(m),
        left: Arc::new(PolyMap::new(left)),
        right: Arc::new(PolyMap::new(right)),
        sample_box: tilde_box(m),
    })
}

/// 8-point Gauss–Legendre nodes and weights on `[0, 1]`.
const GL_NODES: [f64; 8] = [
    0.019855071751231856,
    0.10166676129318664,
    0.2372337950418355,
    0.4082826787521751,
    0.5917173212478249,
    0.7627662049581645,
    0.8983332387068134,
    0.9801449282487681,
];
const GL_WEIGHTS: [f64; 8] = [
    0.05061426814518813,
    0.11119051722668724,
    0.15685332293894363,
    0.18134189168918100,
    0.18134189168918100,
    0.15685332293894363,
    0.11119051722668724,
    0.05061426814518813,
];

/// `C̃` of a generating-function relation, defined implicitly.
///
/// Over parameters `(x'', a, b, θ)` the unknowns are `z ∈ ℝ^n` and
/// `w ∈ ℝ^{n-2}` with second-leg frequency `θ' = θ + (a − b) w`. The
/// equations are the divided difference
/// `[d_z S(z, a, θ) − d_z S(z, b, θ')] / (a − b)`, written with
/// quadrature so that it stays smooth through `a = b`, and
/// `d_θ S(z, a, θ) = x''`. The chart emits the right projections of the two
/// legs `(z, a, θ)` and `(z, b, θ')`.
struct ImplicitTilde {
    n: usize,
    dyz: Vec<Poly>,
    dyz_z: Vec<Vec<Poly>>,
    dtz: Vec<Vec<Poly>>,
    dtz_z: Vec<Vec<Vec<Poly>>>,
    dtz_t: Vec<Vec<Vec<Poly>>>,
    dt: Vec<Poly>,
    dt_z: Vec<Vec<Poly>>,
    dy: Poly,
}

impl ImplicitTilde {
    fn new(gf: &GeneratingFunction) -> Self {
        let n = gf.n;
        let s = &gf.s;
        let y = n;
        let th: Vec<usize> = (n + 1..2 * n - 1).collect();
        let dz: Vec<Poly> = (0..n).map(|i| s.deriv(i)).collect();
        let dyz: Vec<Poly> = dz.iter().map(|p| p.deriv(y)).collect();
        let dyz_z = dyz.iter().map(|p| (0..n).map(|k| p.deriv(k)).collect()).collect();
        let dtz: Vec<Vec<Poly>> = dz.iter().map(|p| th.iter().map(|&j| p.deriv(j)).collect()).collect();
        let dtz_z = dtz
            .iter()
            .map(|row| row.iter().map(|p| (0..n).map(|k| p.deriv(k)).collect()).collect())
            .collect();
        let dtz_t = dtz
            .iter()
            .map(|row| row.iter().map(|p| th.iter().map(|&l| p.deriv(l)).collect()).collect())
            .collect();
        let dt: Vec<Poly> = th.iter().map(|&j| s.deriv(j)).collect();
        let dt_z = dt.iter().map(|p| (0..n).map(|k| p.deriv(k)).collect()).collect();
        Self { n, dyz, dyz_z, dtz, dtz_z, dtz_t, dt, dt_z, dy: s.deriv(y) }
    }

    fn point(&self, z: &[f64], y: f64, th: &[f64]) -> Vec<f64> {
        let mut v = z.to_vec();
        v.push(y);
        v.extend_from_slice(th);
        v
    }

    /// Residual and Jacobian in `(z, w)`.
    fn system(&self, prm: &[f64], u: &[f64]) -> (RealVector, DMatrix<f64>) {
        let n = self.n;
        let k = n - 2;
        let (xpp, a, b, th) = (&prm[..k], prm[k], prm[k + 1], &prm[k + 2..]);
        let (z, w) = (&u[..n], &u[n..]);
        let mut g = RealVector::zeros(2 * n - 2);
        let mut jac = DMatrix::zeros(2 * n - 2, 2 * n - 2);
        for q in 0..8 {
            let (t, wt) = (GL_NODES[q], GL_WEIGHTS[q]);
            let p1 = self.point(z, b + t * (a - b), th);
            let th2: Vec<f64> = th.iter().zip(w).map(|(c, d)| c + t * (a - b) * d).collect();
            let p2 = self.point(z, b, &th2);
            for i in 0..n {
                g[i] += wt * self.dyz[i].eval(&p1);
                for kk in 0..n {
                    jac[(i, kk)] += wt * self.dyz_z[i][kk].eval(&p1);
                }
                for j in 0..k {
                    let c = self.dtz[i][j].eval(&p2);
                    g[i] -= wt * c * w[j];
                    jac[(i, n + j)] -= wt * c;
                    for kk in 0..n {
                        jac[(i, kk)] -= wt * self.dtz_z[i][j][kk].eval(&p2) * w[j];
                    }
                    for l in 0..k {
                        jac[(i, n + l)] -= wt * self.dtz_t[i][j][l].eval(&p2) * t * (a - b) * w[j];
                    }
                }
            }
        }
        let pa = self.point(z, a, th);
        for j in 0..k {
            g[n + j] = self.dt[j].eval(&pa) - xpp[j];
            for kk in 0..n {
                jac[(n + j, kk)] = self.dt_z[j][kk].eval(&pa);
            }
        }
        (g, jac)
    }

    /// Solve for `(z, w)`, starting from the model solution.
    fn solve(&self, prm: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let k = n - 2;
        let (a, b) = (prm[k], prm[k + 1]);
        let s = a + b;
        let mut u = vec![0.0; 2 * n - 2];
        u[0] = prm[0] - a * s * (b - a) / 4.0;
        u[1..k].copy_from_slice(&prm[1..k]);
        u[n - 1] = -s / 2.0;
        let scale = 1.0 + prm.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let (g, j) = self.system(prm, &u);
            let gn = g.norm();
            if !gn.is_finite() {
                break;
            }
            let step = j.lu().solve(&(-&g)).ok_or_else(|| Error::Evaluation("singular C̃ system".into()))?;
            for (ui, si) in u.iter_mut().zip(step.iter()) {
                *ui += si;
            }
            let sn = step.norm();
            // stop once the steps stall at rounding level
            if sn <= 1e-15 * scale || (gn <= 1e-13 * scale && sn >= last) {
                return Ok(u);
            }
            last = sn;
        }
        let (g, _) = self.system(prm, &u);
        if g.norm() <= 1e-11 * scale {
            return Ok(u);
        }
        Err(Error::NoConvergence { best: u, residual: g.norm(), iterations: 50 })
    }

    /// `π_R` of the leg `(z, y, θ)`: `(d_θ S, y, θ, −d_y S)`.
    fn project(&self, z: &[f64], y: f64, th: &[f64]) -> Vec<f64> {
        let p = self.point(z, y, th);
        let mut out: Vec<f64> = self.dt.iter().map(|d| d.eval(&p)).collect();
        out.push(y);
        out.extend_from_slice(th);
        out.push(-self.dy.eval(&p));
        out
    }

    fn eval_side(&self, prm: &[f64], right: bool) -> Result<RealVector> {
        let n = self.n;
        let k = n - 2;
        let u = self.solve(prm)?;
        let (a, b, th) = (prm[k], prm[k + 1], &prm[k + 2..]);
        let z = &u[..n];
        let out = if right {
            let th2: Vec<f64> = th.iter().zip(&u[n..]).map(|(c, d)| c + (a - b) * d).collect();
            self.project(z, b, &th2)
        } else {
            self.project(z, a, th)
        };
        Ok(RealVector::from_vec(out))
    }

}

struct ImplicitSide {
    inner: Arc<ImplicitTilde>,
    right: bool,
}

impl SmoothMap for ImplicitSide {
    fn dim_in(&self) -> usize {
        2 * self.inner.n - 2
    }
    fn dim_out(&self) -> usize {
        2 * self.inner.n - 2
    }
    fn eval(&self, x: &RealVector) -> Result<RealVector> {
        if x.len() != self.dim_in() {
            return Err(Error::DimensionMismatch { expected: self.dim_in(), got: x.len() });
        }
        self.inner.eval_side(x.as_slice(), self.right)
    }
    fn fd_policy(&self) -> FdPolicy {
        FdPolicy::fourth_order()
    }
}

/// The chart of `C̃` for a relation given by a generating function (the weak
/// normal form family), defined implicitly by a system that is regular
/// through the diagonal `a = b`. Derivatives are fourth-order differences.
pub fn implicit_tilde_chart(gf: &GeneratingFunction) -> Result<TildeChart> {
    let n = gf.n;
    let inner = Arc::new(ImplicitTilde::new(gf));
    let m = n - 1;
    Ok(TildeChart {
        m,
        param_names: param_names(m),
        left: Arc::new(ImplicitSide { inner: inner.clone(), right: false }),
        right: Arc::new(ImplicitSide { inner, right: true }),
        sample_box: tilde_box(m),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canrel::{model_phase, ModelVariant};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gauss_legendre_integrates_degree_15() {
        let s: f64 = GL_NODES.iter().zip(&GL_WEIGHTS).map(|(t, w)| w * t.powi(15)).sum();
        assert!((s - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn implicit_chart_reproduces_the_model_chart() {
        for n in [3, 4] {
            let gf = model_phase(n, 0.5, ModelVariant::Hyperbolic).unwrap();
            let imp = implicit_tilde_chart(&gf).unwrap();
            let exp = model_tilde_chart(n).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let bx = &exp.sample_box;
            for _ in 0..50 {
                let p = RealVector::from_iterator(bx.dim(), (0..bx.dim()).map(|k| rng.gen_range(bx.lo[k]..=bx.hi[k])));
                let (l1, r1) = imp.eval(&p).unwrap();
                let (l2, r2) = exp.eval(&p).unwrap();
                assert!((l1 - l2).amax() < 1e-12);
                assert!((r1 - r2).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn swap_maps_the_model_chart_to_itself() {
        let c = model_tilde_chart(3).unwrap();
        let p = RealVector::from_vec(vec![0.2, 0.3, -0.1, 1.1]);
        let q = c.swapped_params(&p).unwrap();
        let (l, r) = c.eval(&p).unwrap();
        let (l2, r2) = c.eval(&q).unwrap();
        assert!((l - r2).amax() < 1e-14 && (r - l2).amax() < 1e-14);
    }
}
