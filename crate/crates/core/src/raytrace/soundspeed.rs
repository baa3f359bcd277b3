use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::singularity::DomainBox;
use crate::smallmath::RealVector;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// A user-supplied speed field returning `c`, `∇c`, `∇²c`.
pub trait SpeedField: Send + Sync {
    fn eval(&self, x: &Vec3) -> (f64, Vec3, Mat3);
}

/// Background soundspeed `c0(x)`; `x3` is depth, positive downward.
#[derive(Clone)]
pub enum SoundspeedModel {
    Constant { c: f64 },
    /// `c = a + b x3`.
    LinearGradient { a: f64, b: f64 },
    /// `c = base − depth · exp(−|x − center|² / (2 width²))`, a low-velocity lens.
    GaussianLens { base: f64, depth: f64, center: Vec3, width: f64 },
    UserAnalytic(Arc<dyn SpeedField>),
}

impl fmt::Debug for SoundspeedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant { c } => write!(f, "Constant({c})"),
            Self::LinearGradient { a, b } => write!(f, "LinearGradient({a} + {b} x3)"),
            Self::GaussianLens { base, depth, center, width } => {
                write!(f, "GaussianLens(base {base}, depth {depth}, center {center:?}, width {width})")
            }
            Self::UserAnalytic(_) => write!(f, "UserAnalytic"),
        }
    }
}

impl SoundspeedModel {
    /// The lens used throughout the examples: base 1, depth 0.3, width 1.
    pub fn standard_lens(center: Vec3) -> Self {
        Self::GaussianLens { base: 1.0, depth: 0.3, center, width: 1.0 }
    }

    /// `(c, ∇c, ∇²c)` at `x`.
    pub fn eval(&self, x: &Vec3) -> (f64, Vec3, Mat3) {
        match self {
            Self::Constant { c } => (*c, [0.0; 3], [[0.0; 3]; 3]),
            Self::LinearGradient { a, b } => (a + b * x[2], [0.0, 0.0, *b], [[0.0; 3]; 3]),
            Self::GaussianLens { base, depth, center, width } => {
                let s2 = width * width;
                let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
                let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                let e = depth * (-r2 / (2.0 * s2)).exp();
                let g = [e * d[0] / s2, e * d[1] / s2, e * d[2] / s2];
                let mut h = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        h[i][j] = e * (delta / s2 - d[i] * d[j] / (s2 * s2));
                    }
                }
                (base - e, g, h)
            }
            Self::UserAnalytic(f) => f.eval(x),
        }
    }

    pub fn speed(&self, x: &Vec3) -> f64 {
        self.eval(x).0
    }

    /// Check `c > 0` on a grid of `k^3` points of a box.
    pub fn check_positive(&self, domain: &DomainBox, k: usize) -> Result<f64> {
        if domain.dim() != 3 {
            return Err(Error::DimensionMismatch { expected: 3, got: domain.dim() });
        }
        let k = k.max(2);
        let mut min = f64::INFINITY;
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    let t = |i: usize, j: usize| domain.lo[i] + (domain.hi[i] - domain.lo[i]) * j as f64 / (k - 1) as f64;
                    let v = self.speed(&[t(0, a), t(1, b), t(2, c)]);
                    if !v.is_finite() || v <= 0.0 {
                        return Err(Error::Rejected(format!(
                            "soundspeed {v} not positive at ({}, {}, {})",
                            t(0, a),
                            t(1, b),
                            t(2, c)
                        )));
                    }
                    min = min.min(v);
                }
            }
        }
        Ok(min)
    }
}

/// `H̃(x, ξ) = c0(x)|ξ|`; the characteristic set is `H̃ = 1`.
pub fn hamiltonian_value(model: &SoundspeedModel, x: &RealVector, xi: &RealVector) -> Result<f64> {
    if x.len() != 3 || xi.len() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: x.len().max(xi.len()) });
    }
    let n = xi.norm();
    if n == 0.0 {
        return Err(Error::Precondition("ξ = 0".into()));
    }
    Ok(model.speed(&[x[0], x[1], x[2]]) * n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(a: &[f64]) -> RealVector {
        RealVector::from_row_slice(a)
    }

    #[test]
    fn hamiltonian_examples() {
        let one = SoundspeedModel::Constant { c: 1.0 };
        assert_eq!(hamiltonian_value(&one, &v(&[0.0; 3]), &v(&[0.0, 0.0, 1.0])).unwrap(), 1.0);
        let two = SoundspeedModel::Constant { c: 2.0 };
        assert_eq!(hamiltonian_value(&two, &v(&[0.0; 3]), &v(&[0.0, 0.0, 0.5])).unwrap(), 1.0);
        let lens = SoundspeedModel::standard_lens([0.0, 0.0, 2.0]);
        let h = hamiltonian_value(&lens, &v(&[0.0, 0.0, 2.0]), &v(&[0.0, 0.0, 1.0])).unwrap();
        assert!((h - 0.7).abs() < 1e-15);
        assert!(hamiltonian_value(&one, &v(&[0.0; 3]), &v(&[0.0; 3])).is_err());
    }

    #[test]
    fn derivatives_match_differences() {
        let models = [
            SoundspeedModel::LinearGradient { a: 1.0, b: 0.5 },
            SoundspeedModel::standard_lens([0.1, -0.2, 2.0]),
        ];
        let x = [0.4, 0.3, 1.7];
        let h = 1e-5;
        for m in &models {
            let (_, g, hs) = m.eval(&x);
            for i in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let (cp, gp, _) = m.eval(&xp);
                let (cm, gm, _) = m.eval(&xm);
                let fd = (cp - cm) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-3));
                for j in 0..3 {
                    let fd2 = (gp[j] - gm[j]) / (2.0 * h);
                    assert!((fd2 - hs[j][i]).abs() <= 1e-6 * hs[j][i].abs().max(1e-3));
                }
            }
        }
    }

    #[test]
    fn positivity_check() {
        let lens = SoundspeedModel::standard_lens([0.0, 0.0, 2.0]);
        assert!(lens.check_positive(&DomainBox::cube(3, -2.0, 2.0), 5).unwrap() > 0.69);
        let bad = SoundspeedModel::LinearGradient { a: 1.0, b: -1.0 };
        assert!(bad.check_positive(&DomainBox::cube(3, 0.0, 2.0), 3).is_err());
    }
}
