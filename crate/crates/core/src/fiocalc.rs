//! Exact order arithmetic for Fourier integral operators `I^m(C)` and
//! paired-Lagrangian classes `I^{p,l}(Λ0, Λ1)`.
//!
//! Orders are `Ratio<i64>`; nothing here touches floating point. Operator
//! orders `μ` and kernel orders `m` are related by `μ = m − 1/4` for the
//! normal operators handled here, and both are kept with explicit labels.

use std::fmt;

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

pub type Rational = Ratio<i64>;

/// `Ratio` from numerator and denominator.
pub fn q(n: i64, d: i64) -> Rational {
    Ratio::new(n, d)
}

/// Render with a true minus sign: `3/2`, `2`, `−1/2`.
pub fn fmt_rational(r: &Rational) -> String {
    let body = if r.is_integer() {
        r.numer().abs().to_string()
    } else {
        format!("{}/{}", r.numer().abs(), r.denom())
    };
    if r.is_negative() {
        format!("\u{2212}{body}")
    } else {
        body
    }
}

/// Parse `3/4`, `-1/2`, `−1/2`, `2`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let t = s.trim().replace('\u{2212}', "-");
    let bad = || Error::Precondition(format!("not a rational number: {s:?}"));
    match t.split_once('/') {
        Some((a, b)) => {
            let n: i64 = a.trim().parse().map_err(|_| bad())?;
            let d: i64 = b.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            Ok(Ratio::new(n, d))
        }
        None => Ok(Ratio::from_integer(t.parse().map_err(|_| bad())?)),
    }
}

/// Orders `(p, l)` of a class `I^{p,l}(Λ0, Λ1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderPair {
    pub p: Rational,
    pub l: Rational,
    /// Names of `(Λ0, Λ1)`.
    pub lagrangians: (String, String),
}

impl OrderPair {
    pub fn new(p: Rational, l: Rational) -> Self {
        Self { p, l, lagrangians: ("Δ".into(), "C̃".into()) }
    }
}

impl fmt::Display for OrderPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "I^{{{},{}}}({}, {})",
            fmt_rational(&self.p),
            fmt_rational(&self.l),
            self.lagrangians.0,
            self.lagrangians.1
        )
    }
}

/// `I^{m1} ∘ I^{m2} ⊂ I^{m1 + m2 + e/2}` for a clean composition with excess `e`.
pub fn compose_orders(m1: Rational, m2: Rational, excess: Rational) -> Result<Rational> {
    if excess.is_negative() {
        return Err(Error::Precondition(format!("excess {} must be nonnegative", fmt_rational(&excess))));
    }
    Ok(m1 + m2 + excess / 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NormalMode {
    /// Folded cross cap relation: `F*F ∈ I^{2m−1/2, 1/2}(Δ, C̃)`.
    FoldedCrossCap,
    /// Single source comparison: `F*F ∈ I^{2m, 0}(Δ, C̃)`.
    SingleSource,
}

/// Kernel order `m = μ + 1/4` of an operator of order `μ`.
pub fn kernel_order(mu: Rational) -> Rational {
    mu + q(1, 4)
}

/// Orders of `F*F` for `F` of operator order `μ` on a folded cross cap.
pub fn normal_operator_orders(mu: Rational) -> OrderPair {
    normal_operator_orders_mode(mu, NormalMode::FoldedCrossCap)
}

pub fn normal_operator_orders_mode(mu: Rational, mode: NormalMode) -> OrderPair {
    let m = kernel_order(mu);
    match mode {
        NormalMode::FoldedCrossCap => OrderPair::new(m * 2 - q(1, 2), q(1, 2)),
        NormalMode::SingleSource => OrderPair::new(m * 2, Rational::zero()),
    }
}

/// Orders away from the intersection and the smoothness gap between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RestrictedOrders {
    /// Order on `Λ0 ∖ Λ1`: `p + l`.
    pub on_first: Rational,
    /// Order on `Λ1 ∖ Λ0`: `p`.
    pub on_second: Rational,
    /// `p − (p + l) = −l`; negative means the second piece is smoother.
    pub gap: Rational,
}

pub fn restricted_orders(op: &OrderPair) -> RestrictedOrders {
    RestrictedOrders { on_first: op.p + op.l, on_second: op.p, gap: -op.l }
}

fn positive_dim(name: &str, v: i64) -> Result<()> {
    if v <= 0 {
        return Err(Error::Precondition(format!("{name} = {v} must be positive")));
    }
    Ok(())
}

/// Symbol orders `(p', l') = (p − n/4 + k/2, l − k/2)` of a class
/// `I^{p,l}` on `ℝ^n` with `k` fiber variables in the second factor.
pub fn class_to_symbol_orders(p: Rational, l: Rational, n: i64, k: i64) -> Result<(Rational, Rational)> {
    positive_dim("n", n)?;
    positive_dim("k", k)?;
    Ok((p - q(n, 4) + q(k, 2), l - q(k, 2)))
}

/// Inverse of [`class_to_symbol_orders`].
pub fn symbol_to_class_orders(p1: Rational, l1: Rational, n: i64, k: i64) -> Result<(Rational, Rational)> {
    positive_dim("n", n)?;
    positive_dim("k", k)?;
    Ok((p1 + q(n, 4) - q(k, 2), l1 + q(k, 2)))
}

/// Paired-Lagrangian orders of a kernel with symbol-valued symbol orders
/// `(p̃, l̃)`, `N` inner fiber variables, on a base of dimension `base`:
/// `(p̃ + l̃ + (N + 1)/2 − base/4, −l̃ − 1/2)`.
pub fn symbol_valued_to_class(pt: Rational, lt: Rational, big_n: i64, base: i64) -> Result<OrderPair> {
    positive_dim("N", big_n)?;
    positive_dim("base dimension", base)?;
    Ok(OrderPair::new(pt + lt + q(big_n + 1, 2) - q(base, 4), -lt - q(1, 2)))
}

/// Order shift of the pushforward along the fibration: `r ↦ r − 1/4`.
pub fn pushforward_order(r: Rational) -> Rational {
    r - q(1, 4)
}

/// One rule application in a derivation.
#[derive(Debug, Clone, Serialize)]
pub struct DerivationStep {
    pub rule: String,
    pub result: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Derivation {
    pub operator_order: String,
    pub kernel_order: String,
    pub steps: Vec<DerivationStep>,
    /// `I^{p,l}(Δ, C̃); Δ-order …; C̃-order …; gap …`.
    pub summary: String,
    pub notes: Vec<String>,
    /// The symbol-valued route agrees with the direct rule.
    pub cross_check: bool,
}

/// Orders of `F*F` for `F` of order `μ`, with each rule written out and the
/// result rederived through the symbol-valued conversion.
pub fn normal_operator_derivation(mu: Rational, mode: NormalMode, n: i64) -> Result<Derivation> {
    positive_dim("n", n)?;
    let m = kernel_order(mu);
    let op = normal_operator_orders_mode(mu, mode);
    let r = restricted_orders(&op);
    let f = fmt_rational;
    let mut steps = vec![
        DerivationStep {
            rule: "kernel order m = μ + 1/4".into(),
            result: format!("m = {}", f(&m)),
        },
        DerivationStep {
            rule: match mode {
                NormalMode::FoldedCrossCap => "folded cross cap normal operator: I^{2m−1/2, 1/2}(Δ, C̃)".into(),
                NormalMode::SingleSource => "single source normal operator: I^{2m, 0}(Δ, C̃)".into(),
            },
            result: op.to_string(),
        },
        DerivationStep {
            rule: "restriction: order p + l on Δ ∖ C̃, p on C̃ ∖ Δ".into(),
            result: format!("Δ-order {}; C̃-order {}", f(&r.on_first), f(&r.on_second)),
        },
        DerivationStep { rule: "smoothness gap p − (p + l) = −l".into(), result: f(&r.gap) },
    ];
    let cross_check = match mode {
        NormalMode::FoldedCrossCap => {
            let via = symbol_valued_to_class(m * 2, q(-1, 1), n - 1, 2 * n - 2)?;
            steps.push(DerivationStep {
                rule: format!(
                    "symbol-valued conversion with p̃ = 2m, l̃ = −1, N = {}, base dimension {}",
                    n - 1,
                    2 * n - 2
                ),
                result: via.to_string(),
            });
            let k1 = pushforward_order(m * 2 - q(1, 4));
            steps.push(DerivationStep {
                rule: "pushforward of the C̃ piece: I^{2m−1/4} → I^{r−1/4}".into(),
                result: format!("C̃-order {}", f(&k1)),
            });
            via == op && k1 == op.p
        }
        NormalMode::SingleSource => true,
    };
    let summary = format!(
        "{}; Δ-order {}; C̃-order {}; gap {}",
        op,
        f(&r.on_first),
        f(&r.on_second),
        f(&r.gap)
    );
    let notes = vec![
        format!(
            "parabolic pieces (informational): T1 ∈ I^{{{}}}_{{1/2,1/2}}(Δ), T2 ∈ I^{{{}}}_{{1/2,1/2}}(C̃)",
            f(&(m * 2)),
            f(&(m * 2))
        ),
        "two-sided fold composition loses 1/6 derivative in Sobolev norms (informational)".into(),
        "invertibility of F*F is not decided here".into(),
    ];
    Ok(Derivation {
        operator_order: f(&mu),
        kernel_order: f(&m),
        steps,
        summary,
        notes,
        cross_check,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_examples() {
        assert_eq!(compose_orders(q(1, 2), q(1, 4), q(0, 1)).unwrap(), q(3, 4));
        assert_eq!(compose_orders(q(1, 2), q(1, 4), q(1, 1)).unwrap(), q(5, 4));
        assert_eq!(compose_orders(q(0, 1), q(0, 1), q(0, 1)).unwrap(), q(0, 1));
        assert!(compose_orders(q(0, 1), q(0, 1), q(-1, 2)).is_err());
    }

    #[test]
    fn normal_operator_of_order_three_quarters() {
        let op = normal_operator_orders(q(3, 4));
        assert_eq!((op.p, op.l), (q(3, 2), q(1, 2)));
        let r = restricted_orders(&op);
        assert_eq!((r.on_first, r.on_second, r.gap), (q(2, 1), q(3, 2), q(-1, 2)));
        let s = normal_operator_orders_mode(q(3, 4), NormalMode::SingleSource);
        assert_eq!((s.p, s.l), (q(2, 1), q(0, 1)));
        let rs = restricted_orders(&s);
        assert_eq!((rs.on_first, rs.on_second, rs.gap), (q(2, 1), q(2, 1), q(0, 1)));
    }

    #[test]
    fn conversions() {
        assert_eq!(class_to_symbol_orders(q(0, 1), q(0, 1), 4, 1).unwrap(), (q(-1, 2), q(-1, 2)));
        assert!(class_to_symbol_orders(q(0, 1), q(0, 1), 0, 1).is_err());
        for n in 3..8 {
            let m = q(7, 12);
            let op = symbol_valued_to_class(m * 2, q(-1, 1), n - 1, 2 * n - 2).unwrap();
            assert_eq!((op.p, op.l), (m * 2 - q(1, 2), q(1, 2)));
        }
        assert_eq!(pushforward_order(q(0, 1)), q(-1, 4));
        assert_eq!(pushforward_order(q(1, 4)), q(0, 1));
    }

    #[test]
    fn formatting_and_parsing() {
        assert_eq!(fmt_rational(&q(-1, 2)), "−1/2");
        assert_eq!(fmt_rational(&q(4, 2)), "2");
        assert_eq!(parse_rational("3/4").unwrap(), q(3, 4));
        assert_eq!(parse_rational("−1/2").unwrap(), q(-1, 2));
        assert_eq!(parse_rational("2").unwrap(), q(2, 1));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn derivation_summary() {
        let d = normal_operator_derivation(q(3, 4), NormalMode::FoldedCrossCap, 3).unwrap();
        assert_eq!(d.summary, "I^{3/2,1/2}(Δ, C̃); Δ-order 2; C̃-order 3/2; gap −1/2");
        assert!(d.cross_check);
    }
}
