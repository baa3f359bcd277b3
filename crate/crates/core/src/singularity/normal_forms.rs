//! Polynomial normal forms, degenerate counterexamples, and random
//! near-identity conjugations used to stress the classifiers.

use rand::Rng;

use super::SingularityKind;
use crate::error::{Error, Result};
use crate::smallmath::{Poly, PolyMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalForm {
    /// `(x1, x2²)`
    Fold,
    /// `(x1, x2² + x3²)`
    EllipticSwf,
    /// `(x1, x2² − x3²)`
    HyperbolicSwf,
    /// `(x1, x1 x2, x2²)`
    CrossCap,
    /// `(x1, x2³)`: `d(det df)` vanishes at the origin.
    Cusp,
    /// `(x1, x2² + x3³)`: singular intrinsic Hessian.
    DegenerateSwf,
    /// `(x1, x2², x2³)`: the χ map has rank 1 < 2.
    ChiDeficient,
}

impl NormalForm {
    pub const ALL: [NormalForm; 7] = [
        NormalForm::Fold,
        NormalForm::EllipticSwf,
        NormalForm::HyperbolicSwf,
        NormalForm::CrossCap,
        NormalForm::Cusp,
        NormalForm::DegenerateSwf,
        NormalForm::ChiDeficient,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NormalForm::Fold => "fold",
            NormalForm::EllipticSwf => "elliptic-swf",
            NormalForm::HyperbolicSwf => "hyperbolic-swf",
            NormalForm::CrossCap => "cross-cap",
            NormalForm::Cusp => "cusp",
            NormalForm::DegenerateSwf => "degenerate-swf",
            NormalForm::ChiDeficient => "chi-deficient",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::Rejected(format!("unknown normal form '{name}'")))
    }

    /// Verdict expected at the origin.
    pub fn expected(self) -> SingularityKind {
        match self {
            NormalForm::Fold => SingularityKind::Fold,
            NormalForm::EllipticSwf => SingularityKind::EllipticSWF,
            NormalForm::HyperbolicSwf => SingularityKind::HyperbolicSWF,
            NormalForm::CrossCap => SingularityKind::CrossCap,
            NormalForm::Cusp | NormalForm::DegenerateSwf | NormalForm::ChiDeficient => {
                SingularityKind::Degenerate
            }
        }
    }

    pub fn components(self) -> Vec<Poly> {
        let (n, _) = self.dims();
        let x = |i: usize| Poly::var(n, i);
        match self {
            NormalForm::Fold => vec![x(0), x(1).pow(2)],
            NormalForm::EllipticSwf => vec![x(0), x(1).pow(2).add(&x(2).pow(2))],
            NormalForm::HyperbolicSwf => vec![x(0), x(1).pow(2).sub(&x(2).pow(2))],
            NormalForm::CrossCap => vec![x(0), x(0).mul(&x(1)), x(1).pow(2)],
            NormalForm::Cusp => vec![x(0), x(1).pow(3)],
            NormalForm::DegenerateSwf => vec![x(0), x(1).pow(2).add(&x(2).pow(3))],
            NormalForm::ChiDeficient => vec![x(0), x(1).pow(2), x(1).pow(3)],
        }
    }

    /// `(dim domain, dim codomain)`
    pub fn dims(self) -> (usize, usize) {
        match self {
            NormalForm::Fold | NormalForm::Cusp => (2, 2),
            NormalForm::EllipticSwf | NormalForm::HyperbolicSwf | NormalForm::DegenerateSwf => (3, 2),
            NormalForm::CrossCap | NormalForm::ChiDeficient => (2, 3),
        }
    }

    pub fn map(self) -> PolyMap {
        PolyMap::new(self.components())
    }
}

/// `x ↦ x + A x + Q(x)` with every coefficient of `A` and `Q` uniform in `[−c, c]`.
pub fn random_near_identity<R: Rng>(dim: usize, c: f64, rng: &mut R) -> Vec<Poly> {
    let x = |i: usize| Poly::var(dim, i);
    (0..dim)
        .map(|i| {
            let mut p = x(i);
            for j in 0..dim {
                p = p.add(&x(j).scale(rng.gen_range(-c..=c)));
                for k in j..dim {
                    p = p.add(&x(j).mul(&x(k)).scale(rng.gen_range(-c..=c)));
                }
            }
            p
        })
        .collect()
}

/// `ψ ∘ f ∘ φ` for random near-identity diffeomorphisms fixing the origin.
pub fn conjugate<R: Rng>(form: NormalForm, c: f64, rng: &mut R) -> Result<PolyMap> {
    let (n, m) = form.dims();
    let phi = random_near_identity(n, c, rng);
    let psi = random_near_identity(m, c, rng);
    let f_phi: Vec<Poly> = form
        .components()
        .iter()
        .map(|p| p.compose(&phi))
        .collect::<Result<_>>()?;
    let out: Vec<Poly> = psi.iter().map(|p| p.compose(&f_phi)).collect::<Result<_>>()?;
    Ok(PolyMap::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::singularity::{classify, sample_at};
    use crate::smallmath::{RealVector, SmoothMap, DEFAULT_RANK_TOL};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normal_forms_classify_as_expected() {
        for f in NormalForm::ALL {
            let m = f.map();
            let s = sample_at(&m, &RealVector::zeros(m.dim_in()), DEFAULT_RANK_TOL).unwrap();
            assert_eq!(classify(&m, &s).unwrap().kind, f.expected(), "{}", f.name());
        }
    }

    #[test]
    fn conjugates_keep_origin_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for f in NormalForm::ALL {
            let m = conjugate(f, 0.1, &mut rng).unwrap();
            let s = sample_at(&m, &RealVector::zeros(m.dim_in()), DEFAULT_RANK_TOL).unwrap();
            assert_eq!(s.corank, 1, "{}", f.name());
            assert_eq!(classify(&m, &s).unwrap().kind, f.expected(), "{}", f.name());
        }
    }

    #[test]
    fn names_round_trip() {
        for f in NormalForm::ALL {
            assert_eq!(NormalForm::from_name(f.name()).unwrap(), f);
        }
        assert!(NormalForm::from_name("swallowtail").is_err());
    }
}
