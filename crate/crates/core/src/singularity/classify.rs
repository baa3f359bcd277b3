use nalgebra::DMatrix;

use super::locus::locus_tangent;
use super::{SingularSample, SingularityKind, SingularityVerdict};
use crate::error::{Error, Result};
use crate::smallmath::{
    cos_to_subspace, det_gradient, determinant, jet_evaluate, numeric_rank, quadratic_signature,
    RealMatrix, SmoothMap, DEFAULT_RANK_TOL,
};

/// Minimum sine of the angle between the kernel and the singular locus.
pub const TRANSVERSALITY_MIN: f64 = 1e-4;
/// Relative floor for `|d(det df)|` in the fold test.
pub const FOLD_GRADIENT_TOL: f64 = 1e-6;
/// Relative floor for second-derivative witnesses in the cross-cap test.
pub const CROSS_CAP_TOL: f64 = 1e-6;
/// Eigenvalues of an intrinsic Hessian below this fraction of its spectral
/// radius count as zero.
const HESSIAN_ZERO_TOL: f64 = 1e-6;

fn check_sample(map: &dyn SmoothMap, sample: &SingularSample) -> Result<()> {
    if sample.point.len() != map.dim_in() {
        return Err(Error::DimensionMismatch { expected: map.dim_in(), got: sample.point.len() });
    }
    Ok(())
}

/// `Kᵀ (Σ_c w_c ∇²f_c) K` for kernel basis `K` and unit cokernel vector `w`.
pub fn intrinsic_hessian(map: &dyn SmoothMap, sample: &SingularSample) -> Result<RealMatrix> {
    check_sample(map, sample)?;
    if sample.corank != 1 {
        return Err(Error::Rejected(format!(
            "intrinsic Hessian needs corank 1, sample has corank {}",
            sample.corank
        )));
    }
    if sample.cokernel.ncols() != 1 {
        return Err(Error::Rejected(format!(
            "intrinsic Hessian needs a one-dimensional cokernel, got {}",
            sample.cokernel.ncols()
        )));
    }
    let jet = jet_evaluate(map, &sample.point, 2)?;
    let w = sample.cokernel.column(0);
    let n = map.dim_in();
    let mut h = DMatrix::<f64>::zeros(n, n);
    for (c, hc) in jet.hessian.iter().enumerate() {
        h += hc * w[c];
    }
    let k = &sample.kernel;
    let out = k.transpose() * h * k;
    Ok((&out + out.transpose()) * 0.5)
}

/// Whitney fold test for an equidimensional map.
pub fn classify_fold(map: &dyn SmoothMap, sample: &SingularSample) -> Result<SingularityVerdict> {
    check_sample(map, sample)?;
    let (n, m) = (map.dim_in(), map.dim_out());
    if n != m {
        return Err(Error::Precondition(format!("fold test needs an equidimensional map, got {n} -> {m}")));
    }
    match sample.corank {
        0 => return Ok(SingularityVerdict::new(SingularityKind::Regular, 0)),
        1 => {}
        r => return Ok(SingularityVerdict::degenerate(r, format!("corank {r} exceeds 1"))),
    }
    let jet = jet_evaluate(map, &sample.point, 2)?;
    let dj: Vec<RealMatrix> = (0..n).map(|k| jet.jacobian_derivative(k)).collect();
    let grad = det_gradient(&jet.jacobian, &dj);
    let gnorm = grad.norm();
    let jnorm = jet.jacobian.norm().max(1.0);
    let scale = jnorm.powi(n as i32 - 1);
    let v = sample.kernel.column(0).clone_owned();
    let sine = if gnorm > 0.0 { (grad.dot(&v) / (gnorm * v.norm())).abs() } else { 0.0 };
    let base = SingularityVerdict::new(SingularityKind::Fold, 1)
        .with("det", determinant(&jet.jacobian))
        .with("det_gradient_norm", gnorm)
        .with("kernel_transversality", sine);
    if gnorm <= FOLD_GRADIENT_TOL * scale {
        return Ok(SingularityVerdict { kind: SingularityKind::Degenerate, reason: Some("d(det df) vanishes".into()), ..base });
    }
    if sine <= TRANSVERSALITY_MIN {
        return Ok(SingularityVerdict {
            kind: SingularityKind::Degenerate,
            reason: Some("kernel is tangent to the singular set".into()),
            ..base
        });
    }
    Ok(base)
}

/// Submersion-with-folds test: nondegenerate intrinsic Hessian on the kernel.
pub fn classify_submersion_with_folds(
    map: &dyn SmoothMap,
    sample: &SingularSample,
) -> Result<SingularityVerdict> {
    check_sample(map, sample)?;
    let (n, m) = (map.dim_in(), map.dim_out());
    if n <= m {
        return Err(Error::Precondition(format!(
            "submersion-with-folds test needs dim domain > dim codomain, got {n} -> {m}"
        )));
    }
    match sample.corank {
        0 => return Ok(SingularityVerdict::new(SingularityKind::Regular, 0)),
        1 => {}
        r => return Ok(SingularityVerdict::degenerate(r, format!("corank {r} exceeds 1"))),
    }
    let h = intrinsic_hessian(map, sample)?;
    let (pos, neg, zero) = quadratic_signature(&h, HESSIAN_ZERO_TOL)?;
    let eig = h.clone().symmetric_eigenvalues();
    let radius = eig.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min_abs = eig.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    let kind = if zero > 0 || radius == 0.0 {
        SingularityKind::Degenerate
    } else if pos == 0 || neg == 0 {
        SingularityKind::EllipticSWF
    } else {
        SingularityKind::HyperbolicSWF
    };
    let mut v = SingularityVerdict::new(kind, 1)
        .with("hessian_det", h.determinant())
        .with("hessian_min_abs_eigenvalue", min_abs)
        .with("hessian_spectral_radius", radius)
        .with("n_pos", pos as f64)
        .with("n_neg", neg as f64)
        .with("n_zero", zero as f64);
    if kind == SingularityKind::Degenerate {
        v.reason = Some("intrinsic Hessian is singular".into());
    }
    Ok(v)
}

/// Cross-cap test for `dim domain < dim codomain ≤ 2 dim domain − 1`.
///
/// With kernel vector `v` and cokernel basis `w_1..w_q`, `q = M − N + 1`,
/// (i) requires `w_iᵀ D²f(v, v) ≠ 0` for some i and (ii) requires the
/// `q × N` matrix `X_ik = w_iᵀ D²f(v, e_k)` to have rank q.
pub fn classify_cross_cap(
    map: &dyn SmoothMap,
    sample: &SingularSample,
) -> Result<SingularityVerdict> {
    check_sample(map, sample)?;
    let (n, m) = (map.dim_in(), map.dim_out());
    if !(n < m && m < 2 * n) {
        return Err(Error::Precondition(format!(
            "cross-cap test needs N < M <= 2N - 1, got {n} -> {m}"
        )));
    }
    match sample.corank {
        0 => return Ok(SingularityVerdict::new(SingularityKind::Regular, 0)),
        1 => {}
        r => return Ok(SingularityVerdict::degenerate(r, format!("corank {r} exceeds 1"))),
    }
    let q = m - n + 1;
    if sample.cokernel.ncols() != q || sample.kernel.ncols() != 1 {
        return Ok(SingularityVerdict::degenerate(1, "kernel/cokernel dimensions inconsistent with corank 1"));
    }
    let jet = jet_evaluate(map, &sample.point, 2)?;
    let v = sample.kernel.column(0).clone_owned();
    let w = &sample.cokernel;
    let scale = jet.jacobian.norm().max(1.0);
    let dvv = jet.second_derivative(&v, &v);
    let cond_i = (w.transpose() * &dvv).amax();
    // χ matrix
    let mut x = DMatrix::<f64>::zeros(q, n);
    for k in 0..n {
        let mut e = nalgebra::DVector::zeros(n);
        e[k] = 1.0;
        let d = jet.second_derivative(&v, &e);
        x.set_column(k, &(w.transpose() * d));
    }
    let chi_rank = if x.amax() <= CROSS_CAP_TOL * scale {
        0
    } else {
        numeric_rank(&x, DEFAULT_RANK_TOL)?
    };
    let mut verdict = SingularityVerdict::new(SingularityKind::CrossCap, 1)
        .with("kernel_second_derivative", cond_i)
        .with("chi_rank", chi_rank as f64)
        .with("chi_required_rank", q as f64);
    if let Ok(t) = locus_tangent(map, &sample.point) {
        let cos = cos_to_subspace(&v, &t);
        verdict = verdict.with("kernel_locus_sine", (1.0 - cos * cos).max(0.0).sqrt());
    }
    if cond_i <= CROSS_CAP_TOL * scale {
        verdict.kind = SingularityKind::Degenerate;
        verdict.reason = Some("condition (i): cokernel part of D²f(v, v) vanishes".into());
    } else if chi_rank < q {
        verdict.kind = SingularityKind::Degenerate;
        verdict.reason = Some(format!("condition (ii): chi rank {chi_rank} < {q}"));
    }
    Ok(verdict)
}

/// Dispatch on the map's dimensions.
pub fn classify(map: &dyn SmoothMap, sample: &SingularSample) -> Result<SingularityVerdict> {
    let (n, m) = (map.dim_in(), map.dim_out());
    if n == m {
        classify_fold(map, sample)
    } else if n > m {
        classify_submersion_with_folds(map, sample)
    } else if m < 2 * n {
        classify_cross_cap(map, sample)
    } else {
        Err(Error::Precondition(format!("no corank-1 class implemented for {n} -> {m}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::singularity::sample_at;
    use crate::smallmath::{FnMap, RealVector};
    use nalgebra::DVector;

    fn v(x: &[f64]) -> RealVector {
        DVector::from_vec(x.to_vec())
    }

    fn at_origin(map: &dyn SmoothMap) -> SingularSample {
        sample_at(map, &DVector::zeros(map.dim_in()), DEFAULT_RANK_TOL).unwrap()
    }

    #[test]
    fn fold_and_cusp() {
        let fold = FnMap::new(2, 2, |x: &RealVector| Ok(v(&[x[0], x[1] * x[1]])));
        let s = at_origin(&fold);
        assert_eq!(classify_fold(&fold, &s).unwrap().kind, SingularityKind::Fold);
        let cusp = FnMap::new(2, 2, |x: &RealVector| Ok(v(&[x[0], x[1].powi(3)])));
        let s = at_origin(&cusp);
        let verdict = classify_fold(&cusp, &s).unwrap();
        assert_eq!(verdict.kind, SingularityKind::Degenerate);
        assert!(verdict.reason.is_some());
    }

    #[test]
    fn swf_normal_forms() {
        let ell = FnMap::new(3, 2, |x: &RealVector| Ok(v(&[x[0], x[1] * x[1] + x[2] * x[2]])));
        let s = at_origin(&ell);
        let h = intrinsic_hessian(&ell, &s).unwrap();
        assert_eq!(quadratic_signature(&h, 1e-8).unwrap(), (2, 0, 0));
        assert!((h.symmetric_eigenvalues().iter().sum::<f64>() - 4.0).abs() < 1e-6);
        assert_eq!(classify_submersion_with_folds(&ell, &s).unwrap().kind, SingularityKind::EllipticSWF);
        let hyp = FnMap::new(3, 2, |x: &RealVector| Ok(v(&[x[0], x[1] * x[1] - x[2] * x[2]])));
        let s = at_origin(&hyp);
        assert_eq!(classify_submersion_with_folds(&hyp, &s).unwrap().kind, SingularityKind::HyperbolicSWF);
        let deg = FnMap::new(3, 2, |x: &RealVector| Ok(v(&[x[0], x[1] * x[1] + x[2].powi(3)])));
        let s = at_origin(&deg);
        let h = intrinsic_hessian(&deg, &s).unwrap();
        assert!(quadratic_signature(&h, 1e-6).unwrap().2 >= 1);
        assert_eq!(classify_submersion_with_folds(&deg, &s).unwrap().kind, SingularityKind::Degenerate);
    }

    #[test]
    fn cross_cap_and_deficient_chi() {
        let whitney = FnMap::new(2, 3, |x: &RealVector| Ok(v(&[x[0], x[0] * x[1], x[1] * x[1]])));
        let s = at_origin(&whitney);
        let verdict = classify_cross_cap(&whitney, &s).unwrap();
        assert_eq!(verdict.kind, SingularityKind::CrossCap, "{verdict:?}");
        let bad = FnMap::new(2, 3, |x: &RealVector| Ok(v(&[x[0], x[1] * x[1], x[1].powi(3)])));
        let s = at_origin(&bad);
        let verdict = classify_cross_cap(&bad, &s).unwrap();
        assert_eq!(verdict.kind, SingularityKind::Degenerate);
        assert_eq!(verdict.diagnostics["chi_rank"], 1.0);
    }

    #[test]
    fn swf_path_rejects_equidimensional_maps() {
        let fold = FnMap::new(2, 2, |x: &RealVector| Ok(v(&[x[0], x[1] * x[1]])));
        let s = at_origin(&fold);
        assert!(matches!(classify_submersion_with_folds(&fold, &s), Err(Error::Precondition(_))));
        assert_eq!(classify(&fold, &s).unwrap().kind, SingularityKind::Fold);
    }

    #[test]
    fn corank_two_rejected() {
        let f = FnMap::new(3, 2, |x: &RealVector| Ok(v(&[x[0] * x[0], x[1] * x[1] + x[2] * x[2]])));
        let s = at_origin(&f);
        assert_eq!(s.corank, 2);
        assert!(intrinsic_hessian(&f, &s).is_err());
        assert_eq!(classify(&f, &s).unwrap().kind, SingularityKind::Degenerate);
    }
}
