use caustica_core::canrel::*;
use caustica_core::pipeline::default_perturbations;
use caustica_core::singularity::{sample_at, singular_locus, LocusOptions};
use caustica_core::smallmath::{RealVector, SmoothMap, DEFAULT_RANK_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn relations() -> Vec<(String, CanonicalRelationChart)> {
    let mut out = Vec::new();
    for n in [3, 4] {
        for v in [ModelVariant::Hyperbolic, ModelVariant::Elliptic] {
            let gf = model_phase(n, DEFAULT_CONE, v).unwrap();
            out.push((format!("{} n={n}", v.name()), relation_from_generating(&gf).unwrap()));
        }
    }
    for spec in default_perturbations() {
        let gf = weak_normal_phase(spec.n, DEFAULT_CONE, &spec.pieces).unwrap();
        out.push((spec.name.clone(), relation_from_generating(&gf).unwrap()));
    }
    out
}

fn random_point(chart: &CanonicalRelationChart, rng: &mut ChaCha8Rng) -> RealVector {
    let b = &chart.sample_box;
    RealVector::from_iterator(b.dim(), (0..b.dim()).map(|k| rng.gen_range(b.lo[k]..=b.hi[k])))
}

fn corank(map: &dyn SmoothMap, p: &RealVector) -> usize {
    sample_at(map, p, DEFAULT_RANK_TOL).unwrap().corank
}

#[test]
fn symplectic_pullback_and_corank_equality() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (name, chart) in relations() {
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let p = random_point(&chart, &mut rng);
            worst = worst.max(chart.symplectic_defect(&p).unwrap());
            assert_eq!(corank(chart.left.as_ref(), &p), corank(chart.right.as_ref(), &p), "{name}");
        }
        assert!(worst <= 1e-7, "{name}: {worst:e}");
    }
}

#[test]
fn corank_equality_on_the_singular_set() {
    let gf = model_phase(3, DEFAULT_CONE, ModelVariant::Hyperbolic).unwrap();
    let chart = relation_from_generating(&gf).unwrap();
    let pts = singular_locus(chart.right.as_ref(), &chart.sample_box, &LocusOptions::grid(vec![4, 7, 7, 7, 3])).unwrap();
    assert!(pts.len() > 10);
    for s in &pts {
        assert_eq!(s.corank, 1);
        assert_eq!(corank(chart.left.as_ref(), &s.point), 1);
    }
}

#[test]
fn covectors_are_homogeneous_in_theta() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (name, chart) in relations() {
        let theta: Vec<usize> = (chart.n_left + 1..chart.dim()).collect();
        for _ in 0..20 {
            let p = random_point(&chart, &mut rng);
            let (l0, r0) = chart.eval(&p).unwrap();
            for lambda in [2.0, 10.0] {
                let mut q = p.clone();
                for &k in &theta {
                    q[k] *= lambda;
                }
                let (l1, r1) = chart.eval(&q).unwrap();
                for (a, b, m) in [(&l0, &l1, chart.n_left), (&r0, &r1, chart.n_right)] {
                    let scale = a.amax().max(1.0) * lambda;
                    for i in 0..m {
                        assert!((a[i] - b[i]).abs() <= 1e-12 * scale, "{name}: base moved");
                        assert!((lambda * a[m + i] - b[m + i]).abs() <= 1e-12 * scale, "{name}: covector");
                    }
                }
            }
        }
    }
}

#[test]
fn model_singular_images_satisfy_their_equations() {
    for n in [3, 4] {
        let gf = model_phase(n, DEFAULT_CONE, ModelVariant::Hyperbolic).unwrap();
        let chart = relation_from_generating(&gf).unwrap();
        let mut res = vec![3; n - 2];
        res.extend([7, 7, 7]);
        res.extend(std::iter::repeat(2).take(n - 2));
        let pts = singular_locus(chart.right.as_ref(), &chart.sample_box, &LocusOptions::grid(res)).unwrap();
        assert!(!pts.is_empty());
        let defs = model_image_defining_functions(n);
        let mut worst: f64 = 0.0;
        for s in &pts {
            let (l, r) = chart.eval(&s.point).unwrap();
            // right image in T*ℝ^{n-1}: η_{n-1} = y_{n-1}² η_1, with y_{n-1} = −x_n
            let m = n - 1;
            worst = worst.max((r[2 * m - 1] - r[m - 1] * r[m - 1] * r[m]).abs());
            worst = worst.max((r[m - 1] + s.point[n - 1]).abs());
            // left image: x_{n-1} = 0 and the defining functions vanish
            worst = worst.max(l[n - 2].abs());
            for d in &defs {
                worst = worst.max(d.eval(&l).unwrap().amax());
            }
        }
        assert!(worst <= 1e-8, "n={n}: {worst:e}");
    }
}
