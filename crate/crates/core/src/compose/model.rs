use super::ComposedPoint;
use crate::error::{Error, Result};

/// Inputs of the closed-form composition for the hyperbolic model.
///
/// `a = x_{n-1}`, `b = y_{n-1}` are the two fiber coordinates, `x1` and
/// `x_mid = (x_2, …, x_{n-2})` the base coordinates of the left point,
/// `theta = θ''` the common covector block. `diagonal_witness = (z_{n-1}, z_n)`
/// selects the witness on the diagonal branch, which is free there.
#[derive(Debug, Clone)]
pub struct ModelLeg {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub x1: f64,
    pub x_mid: Vec<f64>,
    pub theta: Vec<f64>,
    pub diagonal_witness: (f64, f64),
}

impl ModelLeg {
    fn check(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::Precondition(format!("dimension n = {} must be at least 3", self.n)));
        }
        if self.x_mid.len() != self.n - 3 {
            return Err(Error::DimensionMismatch { expected: self.n - 3, got: self.x_mid.len() });
        }
        if self.theta.len() != self.n - 2 {
            return Err(Error::DimensionMismatch { expected: self.n - 2, got: self.theta.len() });
        }
        if self.theta[0] == 0.0 {
            return Err(Error::Precondition("ξ1 must be nonzero".into()));
        }
        Ok(())
    }
}

/// Closed-form points of `C₀ᵗ∘C₀` for the hyperbolic model.
///
/// Double points of `C₀` over a common `(z, ζ)` share `z` and `θ''`, and
/// either `x_{n-1} = y_{n-1}` (the diagonal) or `z_{n-1} = 0`,
/// `2 z_n + x_{n-1} + y_{n-1} = 0`. The second branch is always returned;
/// the diagonal point is added when `a == b`.
pub fn compose_model_point(leg: &ModelLeg) -> Result<Vec<ComposedPoint>> {
    leg.check()?;
    let (a, b) = (leg.a, leg.b);
    let t1 = leg.theta[0];
    let s = a + b;
    let mut out = Vec::new();

    let zn = -s / 2.0;
    let z1 = leg.x1 - a * s * (b - a) / 4.0;
    out.push(assemble(leg, z1, 0.0, zn, leg.x1 + s * s * (a - b) / 4.0, s * (3.0 * a - b) / 4.0 * t1, s * (3.0 * b - a) / 4.0 * t1));

    if a == b {
        let (w1, w2) = leg.diagonal_witness;
        let z1 = leg.x1 - (w2 * w2 - w1 * w1) * a - w2 * a * a;
        let xi_last = -(w2 * w2 - w1 * w1 + 2.0 * w2 * a) * t1;
        out.push(assemble(leg, z1, w1, w2, leg.x1, xi_last, xi_last));
    }
    Ok(out)
}

fn assemble(leg: &ModelLeg, z1: f64, zm: f64, zn: f64, y1: f64, xi_last: f64, eta_last: f64) -> ComposedPoint {
    let (a, b) = (leg.a, leg.b);
    let t1 = leg.theta[0];
    let mut x = vec![leg.x1];
    x.extend_from_slice(&leg.x_mid);
    x.push(a);
    let mut y = vec![y1];
    y.extend_from_slice(&leg.x_mid);
    y.push(b);
    let mut xi = leg.theta.clone();
    xi.push(xi_last);
    let mut eta = leg.theta.clone();
    eta.push(eta_last);
    let mut z = vec![z1];
    z.extend_from_slice(&leg.x_mid);
    z.push(zm);
    z.push(zn);
    let mut zeta = leg.theta.clone();
    zeta.push(-2.0 * zm * a * t1);
    zeta.push((2.0 * zn * a + a * a) * t1);
    // chart parameters (z, y_{n-1}, θ'') of the two legs
    let mut first_leg = z.clone();
    first_leg.push(a);
    first_leg.extend_from_slice(&leg.theta);
    let mut second_leg = z.clone();
    second_leg.push(b);
    second_leg.extend_from_slice(&leg.theta);
    ComposedPoint { x, xi, y, eta, z, zeta, residual: 0.0, first_leg, second_leg }
}

/// Residuals of the defining equations of `C̃₀` at `((x, ξ), (y, η))`:
/// `x_j − y_j` (`2 ≤ j ≤ n−2`), `ξ'' − η''`,
/// `x_1 − y_1 + (a+b)²(a−b)/4`, `ξ_{n-1} − (a+b)(3a−b)/4 ξ_1`,
/// `η_{n-1} − (a+b)(3b−a)/4 ξ_1`, with `a = x_{n-1}`, `b = y_{n-1}`.
pub fn model_tilde_residuals(x: &[f64], xi: &[f64], y: &[f64], eta: &[f64]) -> Vec<f64> {
    let m = x.len();
    let (a, b) = (x[m - 1], y[m - 1]);
    let s = a + b;
    let mut r = Vec::with_capacity(2 * m);
    for j in 1..m - 1 {
        r.push(x[j] - y[j]);
    }
    for j in 0..m - 1 {
        r.push(xi[j] - eta[j]);
    }
    r.push(x[0] - y[0] + s * s * (a - b) / 4.0);
    r.push(xi[m - 1] - s * (3.0 * a - b) / 4.0 * xi[0]);
    r.push(eta[m - 1] - s * (3.0 * b - a) / 4.0 * xi[0]);
    r
}
