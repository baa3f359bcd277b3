use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::linalg::{RealMatrix, RealVector};
use crate::error::{Error, Result};

/// Finite-difference scheme used when a map has no analytic derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FdScheme {
    /// Second-order central differences.
    #[default]
    Central2,
    /// Fourth-order central differences (five-point stencil).
    Central4,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FdPolicy {
    pub scheme: FdScheme,
    /// Relative step override; `None` uses the scheme's balanced default.
    pub step: Option<f64>,
}

impl FdPolicy {
    pub fn fourth_order() -> Self {
        Self { scheme: FdScheme::Central4, step: None }
    }

    fn first_step(&self) -> f64 {
        self.step.unwrap_or(match self.scheme {
            FdScheme::Central2 => f64::EPSILON.cbrt(),
            FdScheme::Central4 => f64::EPSILON.powf(0.2),
        })
    }

    fn value_hessian_step(&self) -> f64 {
        f64::EPSILON.powf(0.25)
    }
}

/// A smooth map between Euclidean boxes with optional analytic derivatives.
pub trait SmoothMap: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval(&self, x: &RealVector) -> Result<RealVector>;

    fn analytic_jacobian(&self, _x: &RealVector) -> Option<Result<RealMatrix>> {
        None
    }

    /// One symmetric matrix per output component.
    fn analytic_hessian(&self, _x: &RealVector) -> Option<Result<Vec<RealMatrix>>> {
        None
    }

    fn fd_policy(&self) -> FdPolicy {
        FdPolicy::default()
    }
}

pub type SmoothMapHandle = Arc<dyn SmoothMap>;

/// Value and derivatives of a map at a point.
#[derive(Debug, Clone)]
pub struct Jet {
    pub value: RealVector,
    pub jacobian: RealMatrix,
    /// `hessian[c][(i, j)] = ∂²f_c / ∂x_i ∂x_j`.
    pub hessian: Vec<RealMatrix>,
    /// `third[c][k][(i, j)] = ∂³f_c / ∂x_i ∂x_j ∂x_k`.
    pub third: Option<Vec<Vec<RealMatrix>>>,
}

impl Jet {
    /// `Σ_ij H_c[i,j] u_i v_j` for every component c.
    pub fn second_derivative(&self, u: &RealVector, v: &RealVector) -> RealVector {
        DVector::from_iterator(
            self.hessian.len(),
            self.hessian.iter().map(|h| u.dot(&(h * v))),
        )
    }

    /// The derivative of the Jacobian along `x_k`: `(∂J/∂x_k)[c, i] = H_c[i, k]`.
    pub fn jacobian_derivative(&self, k: usize) -> RealMatrix {
        let m = self.hessian.len();
        let n = self.jacobian.ncols();
        DMatrix::from_fn(m, n, |c, i| self.hessian[c][(i, k)])
    }
}

/// A map given by closures.
pub struct FnMap<F>
where
    F: Fn(&RealVector) -> Result<RealVector> + Send + Sync,
{
    dim_in: usize,
    dim_out: usize,
    f: F,
    jac: Option<Box<dyn Fn(&RealVector) -> Result<RealMatrix> + Send + Sync>>,
    policy: FdPolicy,
}

impl<F> FnMap<F>
where
    F: Fn(&RealVector) -> Result<RealVector> + Send + Sync,
{
    pub fn new(dim_in: usize, dim_out: usize, f: F) -> Self {
        Self { dim_in, dim_out, f, jac: None, policy: FdPolicy::default() }
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&RealVector) -> Result<RealMatrix> + Send + Sync + 'static,
    ) -> Self {
        self.jac = Some(Box::new(jac));
        self
    }

    pub fn with_policy(mut self, policy: FdPolicy) -> Self {
        self.policy = policy;
        self
    }
}

impl<F> SmoothMap for FnMap<F>
where
    F: Fn(&RealVector) -> Result<RealVector> + Send + Sync,
{
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn eval(&self, x: &RealVector) -> Result<RealVector> {
        (self.f)(x)
    }
    fn analytic_jacobian(&self, x: &RealVector) -> Option<Result<RealMatrix>> {
        self.jac.as_ref().map(|j| j(x))
    }
    fn fd_policy(&self) -> FdPolicy {
        self.policy
    }
}

fn checked_eval(map: &dyn SmoothMap, x: &RealVector) -> Result<RealVector> {
    let v = map.eval(x)?;
    if v.len() != map.dim_out() {
        return Err(Error::DimensionMismatch { expected: map.dim_out(), got: v.len() });
    }
    if !v.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinite("map value".into()));
    }
    Ok(v)
}

fn axis_step(base: f64, xi: f64) -> f64 {
    let h = base * xi.abs().max(1.0);
    // make x + h exactly representable so the stencil is symmetric
    let t = xi + h;
    t - xi
}

/// Finite-difference Jacobian of a vector function with the given policy.
fn fd_jacobian_of<G>(g: G, x: &RealVector, m: usize, policy: FdPolicy) -> Result<RealMatrix>
where
    G: Fn(&RealVector) -> Result<RealVector>,
{
    let n = x.len();
    let mut jac = DMatrix::<f64>::zeros(m, n);
    let base = policy.first_step();
    for k in 0..n {
        let h = axis_step(base, x[k]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let col = match policy.scheme {
            FdScheme::Central2 => (g(&xp)? - g(&xm)?) / (2.0 * h),
            FdScheme::Central4 => {
                let mut xpp = x.clone();
                let mut xmm = x.clone();
                xpp[k] += 2.0 * h;
                xmm[k] -= 2.0 * h;
                (g(&xmm)? - g(&xpp)? + (g(&xp)? - g(&xm)?) * 8.0) / (12.0 * h)
            }
        };
        jac.set_column(k, &col);
    }
    Ok(jac)
}

fn check_point(map: &dyn SmoothMap, x: &RealVector) -> Result<()> {
    if x.len() != map.dim_in() {
        return Err(Error::DimensionMismatch { expected: map.dim_in(), got: x.len() });
    }
    if !x.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinite("evaluation point".into()));
    }
    Ok(())
}

/// Jacobian from analytic data when available, otherwise by finite differences.
pub fn jacobian(map: &dyn SmoothMap, x: &RealVector) -> Result<RealMatrix> {
    check_point(map, x)?;
    if let Some(j) = map.analytic_jacobian(x) {
        let j = j?;
        if j.shape() != (map.dim_out(), map.dim_in()) {
            return Err(Error::DimensionMismatch { expected: map.dim_out(), got: j.nrows() });
        }
        return Ok(j);
    }
    fd_jacobian_of(|p| checked_eval(map, p), x, map.dim_out(), map.fd_policy())
}

/// Finite-difference Jacobian ignoring any analytic data.
pub fn fd_jacobian(map: &dyn SmoothMap, x: &RealVector) -> Result<RealMatrix> {
    check_point(map, x)?;
    fd_jacobian_of(|p| checked_eval(map, p), x, map.dim_out(), map.fd_policy())
}

fn symmetrize(h: &mut [RealMatrix]) {
    for m in h.iter_mut() {
        let s = (&*m + m.transpose()) * 0.5;
        *m = s;
    }
}

/// Hessians of every output component.
pub fn hessian(map: &dyn SmoothMap, x: &RealVector) -> Result<Vec<RealMatrix>> {
    check_point(map, x)?;
    if let Some(h) = map.analytic_hessian(x) {
        return h;
    }
    let n = map.dim_in();
    let m = map.dim_out();
    let policy = map.fd_policy();
    let analytic_jac = map.analytic_jacobian(x).is_some();
    let mut out = vec![DMatrix::<f64>::zeros(n, n); m];
    if analytic_jac || policy.scheme == FdScheme::Central4 {
        // differentiate the Jacobian once more
        let inner = |p: &RealVector| -> Result<RealVector> {
            let j = jacobian(map, p)?;
            Ok(DVector::from_column_slice(j.as_slice()))
        };
        let outer_policy = if analytic_jac {
            FdPolicy { scheme: FdScheme::Central2, step: None }
        } else {
            policy
        };
        let dj = fd_jacobian_of(inner, x, m * n, outer_policy)?;
        for k in 0..n {
            for i in 0..n {
                for c in 0..m {
                    // column-major: entry (c, i) of J sits at index c + m * i
                    out[c][(i, k)] = dj[(c + m * i, k)];
                }
            }
        }
    } else {
        let base = policy.value_hessian_step();
        let f0 = checked_eval(map, x)?;
        let steps: Vec<f64> = (0..n).map(|k| axis_step(base, x[k])).collect();
        let shifted = |a: usize, sa: f64, b: Option<(usize, f64)>| -> Result<RealVector> {
            let mut p = x.clone();
            p[a] += sa;
            if let Some((bi, sb)) = b {
                p[bi] += sb;
            }
            checked_eval(map, &p)
        };
        for i in 0..n {
            let hi = steps[i];
            let d2 = (shifted(i, hi, None)? - &f0 * 2.0 + shifted(i, -hi, None)?) / (hi * hi);
            for c in 0..m {
                out[c][(i, i)] = d2[c];
            }
            for j in (i + 1)..n {
                let hj = steps[j];
                let d = (shifted(i, hi, Some((j, hj)))? - shifted(i, hi, Some((j, -hj)))?
                    - shifted(i, -hi, Some((j, hj)))?
                    + shifted(i, -hi, Some((j, -hj)))?)
                    / (4.0 * hi * hj);
                for c in 0..m {
                    out[c][(i, j)] = d[c];
                    out[c][(j, i)] = d[c];
                }
            }
        }
    }
    symmetrize(&mut out);
    Ok(out)
}

/// Third derivatives by central differences of the Hessian.
fn third_derivatives(map: &dyn SmoothMap, x: &RealVector) -> Result<Vec<Vec<RealMatrix>>> {
    let n = map.dim_in();
    let m = map.dim_out();
    let base = if map.analytic_hessian(x).is_some() {
        f64::EPSILON.cbrt()
    } else {
        f64::EPSILON.powf(0.25) * 4.0
    };
    let mut out = vec![vec![DMatrix::<f64>::zeros(n, n); n]; m];
    for k in 0..n {
        let h = axis_step(base, x[k]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let hp = hessian(map, &xp)?;
        let hm = hessian(map, &xm)?;
        for c in 0..m {
            out[c][k] = (&hp[c] - &hm[c]) / (2.0 * h);
        }
    }
    Ok(out)
}

/// Evaluate value and derivatives up to `order` (1, 2 or 3).
pub fn jet_evaluate(map: &dyn SmoothMap, point: &RealVector, order: usize) -> Result<Jet> {
    if !(1..=3).contains(&order) {
        return Err(Error::Precondition(format!("jet order {order} not in 1..=3")));
    }
    check_point(map, point)?;
    let value = checked_eval(map, point)?;
    let jacobian = jacobian(map, point)?;
    if !jacobian.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("jacobian".into()));
    }
    let hessian = if order >= 2 {
        hessian(map, point)?
    } else {
        Vec::new()
    };
    let third = if order >= 3 {
        Some(third_derivatives(map, point)?)
    } else {
        None
    };
    Ok(Jet { value, jacobian, hessian, third })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_second() -> FnMap<impl Fn(&RealVector) -> Result<RealVector> + Send + Sync> {
        FnMap::new(2, 2, |x: &RealVector| Ok(DVector::from_vec(vec![x[0], x[1] * x[1]])))
    }

    #[test]
    fn polynomial_jet() {
        let m = square_second();
        let jet = jet_evaluate(&m, &DVector::from_vec(vec![1.0, 2.0]), 2).unwrap();
        assert!((jet.value[0] - 1.0).abs() < 1e-15 && (jet.value[1] - 4.0).abs() < 1e-15);
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        assert!((&jet.jacobian - expect).amax() < 1e-8);
        let h2 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]);
        assert!((&jet.hessian[1] - h2).amax() < 1e-6);
        assert!(jet.hessian[0].amax() < 1e-6);
    }

    #[test]
    fn identity_jet() {
        let m = FnMap::new(3, 3, |x: &RealVector| Ok(x.clone()));
        let jet = jet_evaluate(&m, &DVector::from_vec(vec![0.3, -2.0, 7.5]), 3).unwrap();
        assert!((jet.jacobian - DMatrix::<f64>::identity(3, 3)).amax() < 1e-9);
        assert!(jet.hessian.iter().all(|h| h.amax() < 1e-6));
        let third = jet.third.unwrap();
        assert!(third.iter().flatten().all(|t| t.amax() < 1e-3));
    }

    #[test]
    fn third_derivatives_of_cubic() {
        let m = FnMap::new(2, 1, |x: &RealVector| Ok(DVector::from_vec(vec![x[0] * x[0] * x[1]])));
        let jet = jet_evaluate(&m, &DVector::from_vec(vec![0.5, 0.25]), 3).unwrap();
        let t = jet.third.unwrap();
        // ∂³/∂x0∂x0∂x1 = 2
        assert!((t[0][1][(0, 0)] - 2.0).abs() < 1e-3);
        assert!((t[0][0][(0, 1)] - 2.0).abs() < 1e-3);
        assert!(t[0][1][(1, 1)].abs() < 1e-3);
    }

    #[test]
    fn fourth_order_policy() {
        let m = FnMap::new(1, 1, |x: &RealVector| Ok(DVector::from_vec(vec![x[0].sin()])))
            .with_policy(FdPolicy::fourth_order());
        let x = DVector::from_vec(vec![0.7]);
        let j = jacobian(&m, &x).unwrap();
        assert!((j[(0, 0)] - 0.7_f64.cos()).abs() < 1e-12);
        let h = hessian(&m, &x).unwrap();
        assert!((h[0][(0, 0)] + 0.7_f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn dimension_checks() {
        let m = square_second();
        assert!(matches!(
            jet_evaluate(&m, &DVector::from_vec(vec![1.0]), 1),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(jet_evaluate(&m, &DVector::from_vec(vec![1.0, 1.0]), 4).is_err());
        let bad = FnMap::new(1, 1, |_: &RealVector| Err(Error::Evaluation("outside".into())));
        assert!(matches!(
            jet_evaluate(&bad, &DVector::from_vec(vec![0.0]), 1),
            Err(Error::Evaluation(_))
        ));
    }
}
