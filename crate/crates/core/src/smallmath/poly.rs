use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use super::jet::SmoothMap;
use super::linalg::{RealMatrix, RealVector};
use crate::error::{Error, Result};

/// Sparse Laurent polynomial with real coefficients in a fixed number of variables.
///
/// Negative exponents are allowed so that degree-1 homogeneous expressions such
/// as `y^2 t2^2 / t1` can be represented; evaluation requires those variables
/// to be nonzero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Vec<i32>, f64>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e, 1.0);
        p
    }

    pub fn monomial(exponents: Vec<i32>, c: f64) -> Self {
        let mut p = Self::zero(exponents.len());
        p.add_term(exponents, c);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<i32>, &f64)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, exponents: Vec<i32>, c: f64) {
        assert_eq!(exponents.len(), self.nvars, "exponent vector length");
        if c == 0.0 {
            return;
        }
        let e = self.terms.entry(exponents).or_insert(0.0);
        *e += c;
        if *e == 0.0 {
            self.terms.retain(|_, v| *v != 0.0);
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut p = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            p.add_term(e.clone(), c * s);
        }
        p
    }

    pub fn add(&self, other: &Poly) -> Self {
        assert_eq!(self.nvars, other.nvars);
        let mut p = self.clone();
        for (e, c) in &other.terms {
            p.add_term(e.clone(), *c);
        }
        p
    }

    pub fn sub(&self, other: &Poly) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Poly) -> Self {
        assert_eq!(self.nvars, other.nvars);
        let mut p = Self::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<i32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                p.add_term(e, ca * cb);
            }
        }
        p
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut p = Self::constant(self.nvars, 1.0);
        for _ in 0..k {
            p = p.mul(self);
        }
        p
    }

    pub fn deriv(&self, i: usize) -> Self {
        let mut p = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] != 0 {
                let mut ne = e.clone();
                ne[i] -= 1;
                p.add_term(ne, c * e[i] as f64);
            }
        }
        p
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(x)
                    .fold(*c, |acc, (&k, &xi)| if k == 0 { acc } else { acc * xi.powi(k) })
            })
            .sum()
    }

    /// Degree of homogeneity in the listed variables if every term agrees.
    pub fn homogeneity_degree(&self, vars: &[usize]) -> Option<i32> {
        let mut deg = None;
        for e in self.terms.keys() {
            let d: i32 = vars.iter().map(|&v| e[v]).sum();
            match deg {
                None => deg = Some(d),
                Some(prev) if prev != d => return None,
                _ => {}
            }
        }
        Some(deg.unwrap_or(1))
    }

    /// Largest absolute coefficient.
    pub fn max_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Replace variable `i` by the polynomial `q` (only nonnegative powers of `i`).
    pub fn substitute(&self, i: usize, q: &Poly) -> Result<Self> {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] < 0 {
                return Err(Error::Rejected("cannot substitute into a negative power".into()));
            }
            let mut rest = e.clone();
            rest[i] = 0;
            let t = Poly::monomial(rest, *c).mul(&q.pow(e[i] as u32));
            out = out.add(&t);
        }
        Ok(out)
    }

    /// Substitute polynomials (in a common variable set) for every variable.
    pub fn compose(&self, inner: &[Poly]) -> Result<Poly> {
        if inner.len() != self.nvars {
            return Err(Error::DimensionMismatch { expected: self.nvars, got: inner.len() });
        }
        let m = inner.first().map(|p| p.nvars()).unwrap_or(0);
        let mut out = Poly::zero(m);
        for (e, c) in &self.terms {
            let mut t = Poly::constant(m, *c);
            for (i, &k) in e.iter().enumerate() {
                if k < 0 {
                    return Err(Error::Rejected("cannot compose into a negative power".into()));
                }
                if k > 0 {
                    t = t.mul(&inner[i].pow(k as u32));
                }
            }
            out = out.add(&t);
        }
        Ok(out)
    }

    /// Parse `"y2*t1^2"` style monomials against the given variable names.
    pub fn parse_monomial(text: &str, names: &[&str]) -> Result<Vec<i32>> {
        let mut e = vec![0; names.len()];
        let t = text.trim();
        if t == "1" || t.is_empty() {
            return Ok(e);
        }
        for factor in t.split('*') {
            let factor = factor.trim();
            let (name, pow) = match factor.split_once('^') {
                Some((n, p)) => {
                    let p: i32 = p
                        .trim()
                        .parse()
                        .map_err(|_| Error::Rejected(format!("bad exponent in '{factor}'")))?;
                    (n.trim(), p)
                }
                None => (factor, 1),
            };
            let idx = names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::Rejected(format!("unknown variable '{name}'")))?;
            e[idx] += pow;
        }
        Ok(e)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (i, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => write!(f, "*v{i}")?,
                    _ => write!(f, "*v{i}^{k}")?,
                }
            }
        }
        Ok(())
    }
}

/// A vector of polynomials with exact Jacobian and Hessians.
#[derive(Debug, Clone)]
pub struct PolyMap {
    comps: Vec<Poly>,
    jac: Vec<Vec<Poly>>,
    hess: Vec<Vec<Vec<Poly>>>,
}

impl PolyMap {
    pub fn new(comps: Vec<Poly>) -> Self {
        let n = comps.first().map(|p| p.nvars()).unwrap_or(0);
        assert!(comps.iter().all(|p| p.nvars() == n), "mixed variable counts");
        let jac: Vec<Vec<Poly>> =
            comps.iter().map(|p| (0..n).map(|i| p.deriv(i)).collect()).collect();
        let hess = jac
            .iter()
            .map(|row| row.iter().map(|d| (0..n).map(|j| d.deriv(j)).collect()).collect())
            .collect();
        Self { comps, jac, hess }
    }

    pub fn components(&self) -> &[Poly] {
        &self.comps
    }

    fn nvars(&self) -> usize {
        self.comps.first().map(|p| p.nvars()).unwrap_or(0)
    }
}

impl SmoothMap for PolyMap {
    fn dim_in(&self) -> usize {
        self.nvars()
    }
    fn dim_out(&self) -> usize {
        self.comps.len()
    }
    fn eval(&self, x: &RealVector) -> Result<RealVector> {
        Ok(DVector::from_iterator(self.comps.len(), self.comps.iter().map(|p| p.eval(x.as_slice()))))
    }
    fn analytic_jacobian(&self, x: &RealVector) -> Option<Result<RealMatrix>> {
        let n = self.nvars();
        Some(Ok(DMatrix::from_fn(self.comps.len(), n, |c, i| self.jac[c][i].eval(x.as_slice()))))
    }
    fn analytic_hessian(&self, x: &RealVector) -> Option<Result<Vec<RealMatrix>>> {
        let n = self.nvars();
        Some(Ok(self
            .hess
            .iter()
            .map(|h| DMatrix::from_fn(n, n, |i, j| h[i][j].eval(x.as_slice())))
            .collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smallmath::jet::fd_jacobian;

    #[test]
    fn arithmetic_and_derivatives() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = x.mul(&x).mul(&y).add(&y.scale(3.0)); // x²y + 3y
        assert_eq!(p.eval(&[2.0, 1.5]), 4.0 * 1.5 + 4.5);
        assert_eq!(p.deriv(0).eval(&[2.0, 1.5]), 2.0 * 2.0 * 1.5);
        assert_eq!(p.deriv(1).eval(&[2.0, 1.5]), 4.0 + 3.0);
        assert!(p.sub(&p).is_zero());
    }

    #[test]
    fn laurent_terms() {
        let p = Poly::monomial(vec![2, -1], 1.0); // x²/t
        assert_eq!(p.eval(&[3.0, 2.0]), 4.5);
        assert_eq!(p.deriv(1).eval(&[3.0, 2.0]), -9.0 / 4.0);
        assert_eq!(p.homogeneity_degree(&[1]), Some(-1));
    }

    #[test]
    fn parse_and_substitute() {
        let names = ["x1", "y2", "t1"];
        let e = Poly::parse_monomial("y2^2*t1", &names).unwrap();
        assert_eq!(e, vec![0, 2, 1]);
        assert!(Poly::parse_monomial("z", &names).is_err());
        let p = Poly::monomial(e, 2.0);
        let q = Poly::var(3, 0).add(&Poly::constant(3, 1.0)); // y2 -> x1 + 1
        let s = p.substitute(1, &q).unwrap();
        assert_eq!(s.eval(&[1.0, 0.0, 3.0]), 2.0 * 4.0 * 3.0);
    }

    #[test]
    fn polymap_jacobian_matches_fd() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let m = PolyMap::new(vec![x.mul(&y), x.pow(3).add(&y)]);
        let p = DVector::from_vec(vec![0.3, -1.2]);
        let ja = m.analytic_jacobian(&p).unwrap().unwrap();
        let jf = fd_jacobian(&m, &p).unwrap();
        assert!((ja - jf).amax() < 1e-8);
        let h = m.analytic_hessian(&p).unwrap().unwrap();
        assert!((h[1][(0, 0)] - 6.0 * 0.3).abs() < 1e-14);
    }
}
