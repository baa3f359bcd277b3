use caustica_core::raytrace::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gradient() -> SoundspeedModel {
    SoundspeedModel::LinearGradient { a: 1.0, b: 0.5 }
}

fn lens() -> SoundspeedModel {
    SoundspeedModel::standard_lens([0.0, 0.0, 2.0])
}

/// Depth where `ξ3` changes sign, refined by bisection in travel time.
fn turning_depth(model: &SoundspeedModel, takeoff: &Vec3, tol: f64) -> f64 {
    let opts = FlowOptions { tol, ..FlowOptions::default() };
    let tr = bicharacteristic_flow(model, &[0.0; 3], takeoff, 6.0, &opts).unwrap();
    let k = tr.states.windows(2).position(|w| w[0].xi[2] > 0.0 && w[1].xi[2] <= 0.0).expect("ray turns");
    let start = tr.states[k];
    let (mut lo, mut hi) = (0.0, tr.states[k + 1].t - start.t);
    let end_opts = FlowOptions { record: false, ..opts };
    let mut x3 = start.x[2];
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        let s = *flow_state(model, start, mid, &end_opts).unwrap().last();
        x3 = s.x[2];
        if s.xi[2] > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    x3
}

#[test]
fn linear_gradient_turning_depth() {
    let m = gradient();
    for deg in [25.0f64, 40.0, 60.0] {
        let th = deg.to_radians();
        let d = [th.sin(), 0.0, th.cos()];
        let coarse = turning_depth(&m, &d, 1e-10);
        let fine = turning_depth(&m, &d, 1e-11);
        // circular arc: c(x3) = 1 / sin θ at the bottom
        let exact = (1.0 / th.sin() - 1.0) / 0.5;
        assert!((coarse - fine).abs() <= 1e-7, "{deg}: {coarse} vs reference {fine}");
        assert!((coarse - exact).abs() <= 1e-7, "{deg}: {coarse} vs {exact}");
    }
}

#[test]
fn linear_gradient_has_no_caustics_by_scan_or_fan() {
    let m = gradient();
    let source = [0.0, 0.0, 0.0];
    let fan = FanSpec { axis: [0.0, 0.0, 1.0], max_angle: 1.2, n_polar: 12, n_azimuth: 12, t_max: 4.0 };
    assert!(fan_spreading_zeros(&m, &source, &fan, 0.01, 0.05).is_empty());
    let grid = CausticGrid {
        x1: vec![0.5, 1.5],
        x2: vec![0.0, 1.0],
        p3: (0.2, 0.9, 15),
        depth: (0.0, 5.0),
        fan,
        fold_tol: 1e-6,
        chart: ChartOptions::default(),
    };
    assert!(fold_caustic_scan(&m, &source, &grid).unwrap().is_empty());
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v: Vec3 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

#[test]
fn hamiltonian_conserved_on_random_rays() {
    let models = [SoundspeedModel::Constant { c: 1.3 }, gradient(), lens()];
    let opts = FlowOptions { record: true, ..FlowOptions::default() };
    for (mi, m) in models.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mi as u64);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let src = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..0.5)];
            let mut d = random_unit(&mut rng);
            // keep rays inside the region where the gradient model is positive
            d[2] = d[2].abs();
            let tr = bicharacteristic_flow(m, &src, &d, 3.0, &opts).unwrap();
            worst = worst.max(tr.max_hamiltonian_defect);
            for s in &tr.states {
                worst = worst.max(s.hamiltonian_defect(m));
            }
        }
        assert!(worst <= 1e-8, "model {mi}: defect {worst:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lens_time_reversal(
        sx in -0.5f64..0.5, sy in -0.5f64..0.5, sz in 0.0f64..1.0,
        th in 0.0f64..1.2, ph in 0.0f64..6.28, t in 0.5f64..4.0,
    ) {
        let m = lens();
        let d = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
        let opts = FlowOptions { record: false, ..FlowOptions::default() };
        let fwd = *bicharacteristic_flow(&m, &[sx, sy, sz], &d, t, &opts).unwrap().last();
        let back = *flow_state(&m, fwd, -t, &opts).unwrap().last();
        let c = m.speed(&[sx, sy, sz]);
        for k in 0..3 {
            prop_assert!((back.x[k] - [sx, sy, sz][k]).abs() <= 1e-7);
            prop_assert!((back.xi[k] - d[k] / c).abs() <= 1e-7);
        }
    }

    #[test]
    fn constant_chart_round_trip(x1 in -2.0f64..2.0, x2 in -2.0f64..2.0, p3 in 0.1f64..0.95) {
        prop_assume!(x1.hypot(x2) > 0.2);
        let m = SoundspeedModel::Constant { c: 1.0 };
        let src = [0.0; 3];
        let cp = lagrangian_chart(&m, &src, (x1, x2, p3), None, &ChartOptions::default()).unwrap();
        let r = x1.hypot(x2);
        prop_assert!((cp.f - p3 * r / (1.0 - p3 * p3).sqrt()).abs() <= 1e-8);
        let (dx, dxi) = chart_round_trip(&m, &src, &cp).unwrap();
        prop_assert!(dx <= 1e-8 && dxi <= 1e-8, "{dx:e} {dxi:e}");
    }

    #[test]
    fn lens_chart_round_trip(x1 in -0.3f64..0.3, x2 in -1.2f64..-0.6, p3 in 0.6f64..0.9) {
        let m = lens();
        let src = [0.0, 0.3, 0.0];
        // where the solver converges the round trip must close
        if let Ok(cp) = lagrangian_chart(&m, &src, (x1, x2, p3), None, &ChartOptions::default()) {
            let (dx, dxi) = chart_round_trip(&m, &src, &cp).unwrap();
            prop_assert!(dx <= 1e-8 && dxi <= 1e-8, "{dx:e} {dxi:e}");
        }
    }
}
