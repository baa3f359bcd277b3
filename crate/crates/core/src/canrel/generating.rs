use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CanonicalRelationChart;
use crate::error::{Error, Result};
use crate::singularity::DomainBox;
use crate::smallmath::{Poly, PolyMap, RealVector, SmoothMapHandle};

/// Default cone constant `c` in `|θ1| ≥ c |θ''|`.
pub const DEFAULT_CONE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelVariant {
    Elliptic,
    Hyperbolic,
}

impl ModelVariant {
    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Elliptic => "elliptic",
            ModelVariant::Hyperbolic => "hyperbolic",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "elliptic" => Ok(Self::Elliptic),
            "hyperbolic" => Ok(Self::Hyperbolic),
            other => Err(Error::Rejected(format!("unknown model variant '{other}'"))),
        }
    }
}

/// Names of the generating-function variables `(x1..xn, y{n-1}, t1..t{n-2})`.
pub fn variable_names(n: usize) -> Vec<String> {
    let mut v: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    v.push(format!("y{}", n - 1));
    v.extend((1..=n - 2).map(|j| format!("t{j}")));
    v
}

/// A generating function `S(x, y_{n-1}, θ'')`, homogeneous of degree one in
/// `θ'' = (θ_1, …, θ_{n-2})`, valid on the cone `|θ_1| ≥ c |θ''|`.
#[derive(Debug, Clone)]
pub struct GeneratingFunction {
    pub n: usize,
    pub cone: f64,
    pub s: Poly,
    /// Non-fatal findings, e.g. sampled points where a nondegeneracy
    /// condition fails.
    pub warnings: Vec<String>,
}

impl GeneratingFunction {
    pub fn new(n: usize, cone: f64, s: Poly) -> Result<Self> {
        if n < 3 {
            return Err(Error::Precondition(format!("dimension n = {n} must be at least 3")));
        }
        if s.nvars() != 2 * n - 1 {
            return Err(Error::DimensionMismatch { expected: 2 * n - 1, got: s.nvars() });
        }
        Ok(Self { n, cone, s, warnings: Vec::new() })
    }

    pub fn x_index(&self, i: usize) -> usize {
        i - 1
    }

    pub fn y_index(&self) -> usize {
        self.n
    }

    pub fn theta_indices(&self) -> Vec<usize> {
        (self.n + 1..2 * self.n - 1).collect()
    }

    pub fn eval(&self, p: &RealVector) -> f64 {
        self.s.eval(p.as_slice())
    }

    /// `θ''·∂_θ'' S − S` at a point.
    pub fn euler_residual(&self, p: &RealVector) -> f64 {
        let th = self.theta_indices();
        let lhs: f64 = th.iter().map(|&i| p[i] * self.s.deriv(i).eval(p.as_slice())).sum();
        lhs - self.eval(p)
    }

    pub fn in_cone(&self, p: &RealVector) -> bool {
        let th = self.theta_indices();
        let norm = th.iter().map(|&i| p[i] * p[i]).sum::<f64>().sqrt();
        p[th[0]].abs() >= self.cone * norm && norm > 0.0
    }

    /// The default sampling box: `x, y ∈ [−1, 1]`, `θ1 ∈ [0.5, 1.5]`, other
    /// `θ_j ∈ [−0.5, 0.5]`; every point of it lies in the cone for `c ≤ 0.7`.
    pub fn default_box(&self) -> DomainBox {
        let n = self.n;
        let mut lo = vec![-1.0; 2 * n - 1];
        let mut hi = vec![1.0; 2 * n - 1];
        lo[n + 1] = 0.5;
        hi[n + 1] = 1.5;
        for j in n + 2..2 * n - 1 {
            lo[j] = -0.5;
            hi[j] = 0.5;
        }
        DomainBox::new(lo, hi)
    }

    /// Exact degree check plus the Euler identity at random cone points.
    pub fn check_homogeneity(&self, samples: usize, seed: u64) -> Result<f64> {
        let th = self.theta_indices();
        if self.s.homogeneity_degree(&th) != Some(1) {
            return Err(Error::Rejected("generating function is not homogeneous of degree 1 in θ''".into()));
        }
        let b = self.default_box();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0_f64;
        for _ in 0..samples {
            let p = RealVector::from_iterator(b.dim(), (0..b.dim()).map(|k| rng.gen_range(b.lo[k]..=b.hi[k])));
            worst = worst.max(self.euler_residual(&p).abs());
        }
        if worst > 1e-8 {
            return Err(Error::Rejected(format!("Euler identity violated by {worst:e}")));
        }
        Ok(worst)
    }
}

/// `C = {(x, d_x S; d_θ'' S, y_{n-1}, θ'', −d_{y_{n-1}} S)}` on the chart
/// `(x, y_{n-1}, θ'')`.
///
/// The right covector's `θ''` block carries a plus sign: with
/// `y'' = d_θ'' S` the pair `(y'', θ'')` is what makes `π_L*ω = π_R*ω`.
pub fn relation_from_generating(gf: &GeneratingFunction) -> Result<CanonicalRelationChart> {
    let n = gf.n;
    let nv = 2 * n - 1;
    let th = gf.theta_indices();
    if gf.s.homogeneity_degree(&th) != Some(1) {
        return Err(Error::Rejected("generating function is not homogeneous of degree 1 in θ''".into()));
    }
    let mut left: Vec<Poly> = (0..n).map(|i| Poly::var(nv, i)).collect();
    left.extend((0..n).map(|i| gf.s.deriv(i)));
    let y = gf.y_index();
    let mut right: Vec<Poly> = th.iter().map(|&j| gf.s.deriv(j)).collect();
    right.push(Poly::var(nv, y));
    right.extend(th.iter().map(|&j| Poly::var(nv, j)));
    right.push(gf.s.deriv(y).scale(-1.0));
    let l: SmoothMapHandle = Arc::new(PolyMap::new(left));
    let r: SmoothMapHandle = Arc::new(PolyMap::new(right));
    CanonicalRelationChart::new(n, n - 1, variable_names(n), l, r, gf.default_box())
}

/// `S = x''·θ'' + ((x_n² ∓ x_{n-1}²) y_{n-1} + x_n y_{n-1}²) θ_1`; the
/// hyperbolic variant takes the minus sign.
pub fn model_phase(n: usize, cone: f64, variant: ModelVariant) -> Result<GeneratingFunction> {
    if n < 3 {
        return Err(Error::Precondition(format!("dimension n = {n} must be at least 3")));
    }
    let nv = 2 * n - 1;
    let x = |i: usize| Poly::var(nv, i - 1);
    let y = Poly::var(nv, n);
    let t = |j: usize| Poly::var(nv, n + j);
    let mut s = Poly::zero(nv);
    for j in 1..=n - 2 {
        s = s.add(&x(j).mul(&t(j)));
    }
    let sq = match variant {
        ModelVariant::Hyperbolic => x(n).pow(2).sub(&x(n - 1).pow(2)),
        ModelVariant::Elliptic => x(n).pow(2).add(&x(n - 1).pow(2)),
    };
    let cubic = sq.mul(&y).add(&x(n).mul(&y.pow(2)));
    s = s.add(&cubic.mul(&t(1)));
    GeneratingFunction::new(n, cone, s)
}

/// The model phase with its full `y`: `φ0(x, y, θ'') = S(x, y_{n-1}, θ'') − y''·θ''`.
pub fn model_phase_value(n: usize, variant: ModelVariant, x: &[f64], y: &[f64], theta: &[f64]) -> Result<f64> {
    if x.len() != n || y.len() != n - 1 || theta.len() != n - 2 {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    let gf = model_phase(n, DEFAULT_CONE, variant)?;
    let mut p: Vec<f64> = x.to_vec();
    p.push(y[n - 2]);
    p.extend_from_slice(theta);
    let yt: f64 = y[..n - 2].iter().zip(theta).map(|(a, b)| a * b).sum();
    Ok(gf.s.eval(&p) - yt)
}

/// Homogeneous degree-one pieces `S1, S5, S6, S7` of the weak normal form,
/// polynomials in `(x, y_{n-1}, θ'')`.
#[derive(Debug, Clone)]
pub struct WeakNormalPieces {
    pub s1: Poly,
    pub s5: Poly,
    pub s6: Poly,
    pub s7: Poly,
}

impl WeakNormalPieces {
    /// `S1 = −y_{n-1} θ1`, the others zero: reproduces the hyperbolic model.
    pub fn model(n: usize) -> Self {
        let nv = 2 * n - 1;
        Self {
            s1: Poly::var(nv, n).mul(&Poly::var(nv, n + 1)).scale(-1.0),
            s5: Poly::zero(nv),
            s6: Poly::zero(nv),
            s7: Poly::zero(nv),
        }
    }
}

/// `S = x''·θ'' + x_{n-1}² S1 + (x_n + y) x_n y θ1
///      + (x_n + y)[x_{n-1}² S5 + x_{n-1}(x_n + y) S6 + (x_n + y)² S7]`, `y = y_{n-1}`.
///
/// Sampled points of `{x_{n-1} = 0, x_n + y = 0}` where `∂_y S1 + 2 S5`
/// vanishes are recorded as warnings on the result.
pub fn weak_normal_phase(n: usize, cone: f64, pieces: &WeakNormalPieces) -> Result<GeneratingFunction> {
    if n < 3 {
        return Err(Error::Precondition(format!("dimension n = {n} must be at least 3")));
    }
    let nv = 2 * n - 1;
    let th: Vec<usize> = (n + 1..nv).collect();
    for (name, p) in [("S1", &pieces.s1), ("S5", &pieces.s5), ("S6", &pieces.s6), ("S7", &pieces.s7)] {
        if p.nvars() != nv {
            return Err(Error::DimensionMismatch { expected: nv, got: p.nvars() });
        }
        if !p.is_zero() && p.homogeneity_degree(&th) != Some(1) {
            return Err(Error::Rejected(format!("{name} is not homogeneous of degree 1 in θ''")));
        }
    }
    let x = |i: usize| Poly::var(nv, i - 1);
    let y = Poly::var(nv, n);
    let t = |j: usize| Poly::var(nv, n + j);
    let u = x(n).add(&y);
    let a = x(n - 1);
    let mut s = Poly::zero(nv);
    for j in 1..=n - 2 {
        s = s.add(&x(j).mul(&t(j)));
    }
    s = s
        .add(&a.pow(2).mul(&pieces.s1))
        .add(&u.mul(&x(n)).mul(&y).mul(&t(1)));
    let bracket = a
        .pow(2)
        .mul(&pieces.s5)
        .add(&a.mul(&u).mul(&pieces.s6))
        .add(&u.pow(2).mul(&pieces.s7));
    s = s.add(&u.mul(&bracket));
    let mut gf = GeneratingFunction::new(n, cone, s)?;
    // nondegeneracy on a deterministic grid of the expected singular set
    let nd = pieces.s1.deriv(n).add(&pieces.s5.scale(2.0));
    let b = gf.default_box();
    let mut worst = f64::INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..256 {
        let mut p: Vec<f64> = (0..nv).map(|k| rng.gen_range(b.lo[k]..=b.hi[k])).collect();
        p[n - 2] = 0.0;
        p[n - 1] = -p[n];
        let v = nd.eval(&p).abs() / p[n + 1].abs();
        worst = worst.min(v);
    }
    if worst < 1e-6 {
        gf.warnings.push(format!(
            "∂_y S1 + 2 S5 nearly vanishes on the sampled singular set (min |·|/θ1 = {worst:e})"
        ));
    }
    Ok(gf)
}

/// Defining functions `p1 = ξ_{n-1}`, `p2 = ξ_1 x_{n-1}`, `p3 = ξ_n + x_n² ξ_1`
/// of the left image of the singular set of the model, as scalar maps on
/// `T*X` with coordinates `(x, ξ)`.
pub fn model_image_defining_functions(n: usize) -> Vec<PolyMap> {
    let nv = 2 * n;
    let x = |i: usize| Poly::var(nv, i - 1);
    let xi = |i: usize| Poly::var(nv, n + i - 1);
    vec![
        PolyMap::new(vec![xi(n - 1)]),
        PolyMap::new(vec![xi(1).mul(&x(n - 1))]),
        PolyMap::new(vec![xi(n).add(&x(n).pow(2).mul(&xi(1)))]),
    ]
}
