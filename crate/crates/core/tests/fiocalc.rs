use caustica_core::fiocalc::*;
use proptest::prelude::*;

fn rational() -> impl Strategy<Value = Rational> {
    (-40i64..40, 1i64..13).prop_map(|(n, d)| q(n, d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn composition_is_commutative_and_associative(a in rational(), b in rational(), c in rational()) {
        let z = q(0, 1);
        prop_assert_eq!(compose_orders(a, b, z).unwrap(), compose_orders(b, a, z).unwrap());
        let left = compose_orders(compose_orders(a, b, z).unwrap(), c, z).unwrap();
        let right = compose_orders(a, compose_orders(b, c, z).unwrap(), z).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn excess_adds_half(a in rational(), b in rational(), e in 0i64..9) {
        let e = q(e, 1);
        prop_assert_eq!(compose_orders(a, b, e).unwrap(), a + b + e / 2);
    }

    #[test]
    fn symbol_conversion_round_trips(p in rational(), l in rational(), n in 1i64..12, k in 1i64..12) {
        let (p1, l1) = class_to_symbol_orders(p, l, n, k).unwrap();
        prop_assert_eq!(symbol_to_class_orders(p1, l1, n, k).unwrap(), (p, l));
    }

    #[test]
    fn fcc_gap_is_minus_one_half_for_every_order(mu in rational()) {
        let op = normal_operator_orders(mu);
        let r = restricted_orders(&op);
        prop_assert_eq!(r.gap, q(-1, 2));
        prop_assert_eq!(r.on_first - r.on_second, q(1, 2));
        let single = restricted_orders(&normal_operator_orders_mode(mu, NormalMode::SingleSource));
        prop_assert_eq!(single.gap, q(0, 1));
        // the symbol-valued route reproduces the same class for any base dimension
        for n in 3..7 {
            let m = kernel_order(mu);
            let via = symbol_valued_to_class(m * 2, q(-1, 1), n - 1, 2 * n - 2).unwrap();
            prop_assert_eq!((via.p, via.l), (op.p, op.l));
        }
    }
}

#[test]
fn three_quarters_reproduces_the_headline_orders() {
    let op = normal_operator_orders(q(3, 4));
    assert_eq!((op.p, op.l), (q(3, 2), q(1, 2)));
    let r = restricted_orders(&op);
    assert_eq!((r.on_first, r.on_second, r.gap), (q(2, 1), q(3, 2), q(-1, 2)));
    let d = normal_operator_derivation(q(3, 4), NormalMode::FoldedCrossCap, 4).unwrap();
    assert!(d.cross_check);
    assert_eq!(d.summary, "I^{3/2,1/2}(Δ, C̃); Δ-order 2; C̃-order 3/2; gap −1/2");
}
