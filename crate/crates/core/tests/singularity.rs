use caustica_core::singularity::normal_forms::{conjugate, NormalForm};
use caustica_core::singularity::*;
use caustica_core::smallmath::{PolyMap, RealVector, SmoothMap, DEFAULT_RANK_TOL};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn origin_verdict(map: &PolyMap) -> SingularityVerdict {
    let s = sample_at(map, &RealVector::zeros(map.dim_in()), DEFAULT_RANK_TOL).unwrap();
    classify(map, &s).unwrap()
}

#[test]
fn verdicts_survive_near_identity_conjugation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for form in [NormalForm::Fold, NormalForm::EllipticSwf, NormalForm::HyperbolicSwf, NormalForm::CrossCap] {
        for i in 0..50 {
            let m = conjugate(form, 0.1, &mut rng).unwrap();
            let v = origin_verdict(&m);
            assert_eq!(v.kind, form.expected(), "{} conjugate {i}: {:?}", form.name(), v);
        }
    }
}

#[test]
fn counterexamples_stay_degenerate_under_conjugation() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for form in [NormalForm::Cusp, NormalForm::DegenerateSwf, NormalForm::ChiDeficient] {
        for _ in 0..50 {
            let v = origin_verdict(&conjugate(form, 0.1, &mut rng).unwrap());
            assert_eq!(v.kind, SingularityKind::Degenerate, "{}", form.name());
            assert!(v.reason.is_some());
        }
    }
}

#[test]
fn locus_corank_agrees_with_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for form in [NormalForm::Fold, NormalForm::HyperbolicSwf, NormalForm::CrossCap] {
        let m = conjugate(form, 0.05, &mut rng).unwrap();
        let dim = m.dim_in();
        let dom = DomainBox::cube(dim, -0.3, 0.35);
        let pts = singular_locus(&m, &dom, &LocusOptions::grid(vec![9; dim])).unwrap();
        assert!(!pts.is_empty(), "{}", form.name());
        for s in &pts {
            let again = sample_at(&m, &s.point, DEFAULT_RANK_TOL).unwrap();
            assert_eq!(again.corank, s.corank, "{}", form.name());
            assert_eq!(s.corank, 1);
            let refined = refine_singular_point(&m, &s.point, 1e-12, 30, DEFAULT_RANK_TOL).unwrap();
            assert_eq!(refined.corank, s.corank);
        }
    }
}
