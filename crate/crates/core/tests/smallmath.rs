use caustica_core::smallmath::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random polynomial map `ℝ^3 → ℝ^2` of degree ≤ 3.
fn random_polymap(rng: &mut ChaCha8Rng) -> PolyMap {
    let comps = (0..2)
        .map(|_| {
            let mut p = Poly::zero(3);
            for _ in 0..8 {
                let e: Vec<i32> = (0..3).map(|_| rng.gen_range(0..=1)).collect();
                let e = if rng.gen_bool(0.3) { e.iter().map(|k| k * 2).collect() } else { e };
                if e.iter().sum::<i32>() <= 3 {
                    p.add_term(e, rng.gen_range(-2.0..2.0));
                }
            }
            p
        })
        .collect();
    PolyMap::new(comps)
}

fn relative_gap(a: &RealMatrix, b: &RealMatrix) -> f64 {
    let scale = b.amax().max(1.0);
    (a - b).amax() / scale
}

#[test]
fn fd_jacobians_match_analytic_ones() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trig = FnMap::new(2, 3, |x: &RealVector| {
        Ok(DVector::from_vec(vec![x[0].sin() * x[1], (x[0] - x[1]).exp(), x[0] * x[0] * x[1].cos()]))
    })
    .with_jacobian(|x: &RealVector| {
        let e = (x[0] - x[1]).exp();
        Ok(DMatrix::from_row_slice(
            3,
            2,
            &[x[0].cos() * x[1], x[0].sin(), e, -e, 2.0 * x[0] * x[1].cos(), -x[0] * x[0] * x[1].sin()],
        ))
    });
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let pm = random_polymap(&mut rng);
        let p = DVector::from_fn(3, |_, _| rng.gen_range(-3.0..3.0));
        worst = worst.max(relative_gap(&fd_jacobian(&pm, &p).unwrap(), &jacobian(&pm, &p).unwrap()));
        let q = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
        worst = worst.max(relative_gap(&fd_jacobian(&trig, &q).unwrap(), &jacobian(&trig, &q).unwrap()));
    }
    assert!(worst <= 1e-6, "{worst:e}");
}

fn condition(m: &RealMatrix) -> f64 {
    let s = singular_values(m);
    s[0] / s[s.len() - 1]
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> RealMatrix {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rank_is_invariant_under_invertible_factors(seed in any::<u64>(), rows in 2usize..7, cols in 2usize..7, r in 0usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = r.min(rows).min(cols);
        let m = gaussian(&mut rng, rows, r) * gaussian(&mut rng, r, cols);
        let left = DMatrix::identity(rows, rows) + gaussian(&mut rng, rows, rows) * 0.3;
        let right = DMatrix::identity(cols, cols) + gaussian(&mut rng, cols, cols) * 0.3;
        prop_assume!(condition(&left) < 1e3 && condition(&right) < 1e3);
        let base = numeric_rank(&m, DEFAULT_RANK_TOL).unwrap();
        prop_assert_eq!(base, r);
        prop_assert_eq!(numeric_rank(&(&left * &m), DEFAULT_RANK_TOL).unwrap(), base);
        prop_assert_eq!(numeric_rank(&(&m * &right), DEFAULT_RANK_TOL).unwrap(), base);
        prop_assert_eq!(numeric_rank(&(&left * &m * &right), DEFAULT_RANK_TOL).unwrap(), base);
    }

    #[test]
    fn newton_solves_linear_systems_in_one_step(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::identity(n, n) * 2.0 + gaussian(&mut rng, n, n);
        prop_assume!(condition(&a) < 1e3);
        let b = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
        let (aa, bb, am) = (a.clone(), b.clone(), a.clone());
        let f = FnMap::new(n, n, move |x: &RealVector| Ok(&aa * x - &bb))
            .with_jacobian(move |_: &RealVector| Ok(am.clone()));
        let guess = DVector::from_fn(n, |_, _| rng.gen_range(-10.0..10.0));
        let rep = newton_solve(&f, &guess, 1e-10, 5).unwrap();
        prop_assert_eq!(rep.iterations, 1);
        // one step from the guess cancels digits of size |A| |guess|
        let scale = a.amax() * rep.root.amax().max(guess.amax()).max(1.0) + b.amax();
        prop_assert!((&a * &rep.root - &b).amax() <= 1e-12 * scale);
    }
}

