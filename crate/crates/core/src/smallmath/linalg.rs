use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type RealVector = DVector<f64>;
pub type RealMatrix = DMatrix<f64>;

/// Default relative threshold for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-7;

/// Full singular value decomposition of a (possibly rectangular) matrix.
///
/// `u` is m×m, `v` is n×n, and `s` holds the min(m, n) singular values in
/// decreasing order; column i of `u` and `v` pair with `s[i]`. The trailing
/// columns of `v` beyond `s.len()` span part of the kernel.
#[derive(Debug, Clone)]
pub struct FullSvd {
    pub u: RealMatrix,
    pub s: Vec<f64>,
    pub v: RealMatrix,
}

fn right_vectors_sorted(m: &RealMatrix) -> (Vec<f64>, RealMatrix) {
    // Eigen-free route: pad to square and take the SVD, whose right vectors
    // are then a full orthonormal basis of the domain.
    let (rows, cols) = m.shape();
    let k = rows.max(cols);
    let mut padded = DMatrix::<f64>::zeros(k, cols);
    padded.view_mut((0, 0), (rows, cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = DMatrix::<f64>::zeros(cols, cols);
    for (j, &i) in order.iter().enumerate() {
        v.set_column(j, &vt.row(i).transpose());
    }
    (s, v)
}

pub fn full_svd(m: &RealMatrix) -> FullSvd {
    let (rows, cols) = m.shape();
    let (s_all, v) = right_vectors_sorted(m);
    let k = rows.min(cols);
    let s: Vec<f64> = s_all.into_iter().take(k).collect();
    let smax = s.first().copied().unwrap_or(0.0);
    // Left vectors paired with the right ones, completed to an orthonormal basis.
    let mut cols_u: Vec<RealVector> = Vec::with_capacity(rows);
    for i in 0..k {
        if s[i] > 1e-14 * smax && s[i] > 0.0 {
            let mut ui = m * v.column(i) / s[i];
            for prev in &cols_u {
                let d = prev.dot(&ui);
                ui -= prev * d;
            }
            let nu = ui.norm();
            if nu > 1e-8 {
                cols_u.push(ui / nu);
                continue;
            }
        }
        break;
    }
    for e in 0..rows {
        if cols_u.len() == rows {
            break;
        }
        let mut cand = DVector::<f64>::zeros(rows);
        cand[e] = 1.0;
        for _ in 0..2 {
            for prev in &cols_u {
                let d = prev.dot(&cand);
                cand -= prev * d;
            }
        }
        let nc = cand.norm();
        if nc > 1e-6 {
            cols_u.push(cand / nc);
        }
    }
    let u = RealMatrix::from_columns(&cols_u);
    FullSvd { u, s, v }
}

pub fn singular_values(m: &RealMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

fn check_finite_matrix(m: &RealMatrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numeric_rank(m: &RealMatrix, rel_tol: f64) -> Result<usize> {
    check_finite_matrix(m, "numeric_rank input")?;
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::Precondition(format!("rel_tol {rel_tol} outside (0, 1)")));
    }
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0);
    }
    let s = singular_values(m);
    let smax = s[0];
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > rel_tol * smax).count())
}

/// Inertia `(n_pos, n_neg, n_zero)` of a symmetric matrix.
pub fn quadratic_signature(h: &RealMatrix, rel_tol: f64) -> Result<(usize, usize, usize)> {
    check_finite_matrix(h, "quadratic_signature input")?;
    if !h.is_square() {
        return Err(Error::Rejected("quadratic form must be square".into()));
    }
    let scale = h.amax().max(f64::MIN_POSITIVE);
    let asym = (h - h.transpose()).amax();
    if asym > 1e-8 * scale.max(1.0) {
        return Err(Error::Rejected(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let sym = (h + h.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let radius = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let (mut pos, mut neg, mut zero) = (0, 0, 0);
    for &e in eig.iter() {
        if radius == 0.0 || e.abs() <= rel_tol * radius {
            zero += 1;
        } else if e > 0.0 {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    Ok((pos, neg, zero))
}

/// Orthonormal basis (columns) of the `dim`-dimensional approximate kernel.
pub fn kernel_basis(m: &RealMatrix, dim: usize) -> RealMatrix {
    let (_, v) = right_vectors_sorted(m);
    let n = v.ncols();
    v.columns(n - dim, dim).clone_owned()
}

/// Orthonormal basis of the `dim`-dimensional approximate cokernel (left kernel).
pub fn cokernel_basis(m: &RealMatrix, dim: usize) -> RealMatrix {
    kernel_basis(&m.transpose(), dim)
}

/// Minimum-norm least-squares solution of `m x = b`, truncating singular
/// values below `rcond` times the largest.
pub fn pinv_solve(m: &RealMatrix, b: &RealVector, rcond: f64) -> RealVector {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, &v| a.max(v));
    let eps = (rcond * smax).max(f64::MIN_POSITIVE);
    let Ok(x) = svd.solve(b, eps) else { return DVector::zeros(m.ncols()) };
    // one refinement step; the small-matrix SVD is only accurate to ~1e-10
    // and the correction stays in the row space, keeping the minimum norm
    let r = b - m * &x;
    match svd.solve(&r, eps) {
        Ok(dx) if dx.iter().all(|v| v.is_finite()) => x + dx,
        _ => x,
    }
}

/// Adjugate of a square matrix, well defined also when the matrix is singular.
pub fn adjugate(m: &RealMatrix) -> RealMatrix {
    let n = m.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, 1.0);
    }
    let svd = full_svd(m);
    let det_u = svd.u.clone().lu().determinant().signum();
    let det_v = svd.v.clone().lu().determinant().signum();
    let mut adj_s = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let p: f64 = (0..n).filter(|&j| j != i).map(|j| svd.s[j]).product();
        adj_s[(i, i)] = p;
    }
    // m = U S Vᵀ  =>  adj(m) = adj(Vᵀ) adj(S) adj(U) = det(V) V adj(S) det(U) Uᵀ
    (&svd.v * adj_s * svd.u.transpose()) * (det_u * det_v)
}

pub fn determinant(m: &RealMatrix) -> f64 {
    m.clone().lu().determinant()
}

/// Gradient of `det m(x)` given the Jacobian's derivatives `dm[k] = ∂m/∂x_k`.
pub fn det_gradient(m: &RealMatrix, dm: &[RealMatrix]) -> RealVector {
    let adj = adjugate(m);
    DVector::from_iterator(
        dm.len(),
        dm.iter().map(|d| (&adj * d).trace()),
    )
}

/// Principal angle cosine between vector `v` and the span of orthonormal columns `basis`.
pub fn cos_to_subspace(v: &RealVector, basis: &RealMatrix) -> f64 {
    let nv = v.norm();
    if nv == 0.0 || basis.ncols() == 0 {
        return 0.0;
    }
    (basis.transpose() * v).norm() / nv
}

/// Orthonormalize the columns of `m` and drop dependent ones.
pub fn orthonormal_columns(m: &RealMatrix, rel_tol: f64) -> RealMatrix {
    if m.ncols() == 0 {
        return m.clone();
    }
    let svd = full_svd(m);
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let r = svd.s.iter().filter(|&&s| s > rel_tol * smax && s > 0.0).count();
    svd.u.columns(0, r).clone_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_examples() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-12]));
        assert_eq!(numeric_rank(&m, 1e-8).unwrap(), 1);
        assert_eq!(numeric_rank(&DMatrix::zeros(3, 4), 1e-8).unwrap(), 0);
        assert!(numeric_rank(&m, 1.5).is_err());
        let mut bad = m.clone();
        bad[(0, 0)] = f64::NAN;
        assert!(numeric_rank(&bad, 1e-8).is_err());
    }

    #[test]
    fn signature_examples() {
        let d = |a: f64, b: f64| DMatrix::from_diagonal(&DVector::from_vec(vec![a, b]));
        assert_eq!(quadratic_signature(&d(2.0, 2.0), 1e-8).unwrap(), (2, 0, 0));
        assert_eq!(quadratic_signature(&d(2.0, -2.0), 1e-8).unwrap(), (1, 1, 0));
        assert_eq!(quadratic_signature(&d(1.0, 1e-14), 1e-8).unwrap(), (1, 0, 1));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(quadratic_signature(&asym, 1e-8).is_err());
    }

    #[test]
    fn full_svd_reconstructs() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
        let svd = full_svd(&m);
        let mut s = DMatrix::zeros(2, 3);
        for i in 0..2 {
            s[(i, i)] = svd.s[i];
        }
        let back = &svd.u * s * svd.v.transpose();
        assert!((back - &m).amax() < 1e-12);
    }

    #[test]
    fn kernel_and_cokernel() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let k = kernel_basis(&m, 2);
        assert!((&m * &k).amax() < 1e-14);
        let c = cokernel_basis(&m, 1);
        assert!((c.transpose() * &m).amax() < 1e-14);
    }

    #[test]
    fn adjugate_matches_inverse_times_det() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let inv = m.clone().try_inverse().unwrap();
        let expect = inv * determinant(&m);
        assert!((adjugate(&m) - expect).amax() < 1e-12);
        // singular: adj(diag(1,0)) = diag(0,1)
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let a = adjugate(&s);
        assert!((a - DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])).amax() < 1e-14);
    }

    #[test]
    fn pinv_solve_min_norm() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let x = pinv_solve(&m, &DVector::from_vec(vec![2.0]), 1e-14);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pinv_solve_square_to_machine_precision() {
        let m = DMatrix::from_row_slice(3, 3, &[2.3, -0.7, 0.4, 0.9, 1.6, -0.8, -0.5, 0.3, 2.9]);
        let b = DVector::from_vec(vec![-17.0, 4.5, 22.0]);
        let x = pinv_solve(&m, &b, 1e-13);
        assert!((&m * &x - &b).amax() < 1e-13, "{:e}", (&m * &x - &b).amax());
    }
}
