use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::SingularSample;
use crate::error::{Error, Result};
use crate::smallmath::{
    cokernel_basis, jacobian, jet_evaluate, kernel_basis, newton_solve, numeric_rank,
    singular_values, RealMatrix, RealVector, SmoothMap, DEFAULT_RANK_TOL,
};

/// Axis-aligned box in the domain of a map.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self { lo: vec![lo; dim], hi: vec![hi; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &RealVector, slack: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= l - slack && *v <= h + slack)
    }

    pub fn diameter(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct LocusOptions {
    /// Grid points per axis.
    pub resolution: Vec<usize>,
    pub rank_tol: f64,
    /// Residual target for the minor-system refinement.
    pub refine_tol: f64,
    pub max_iter: usize,
    /// Refined points closer than this are merged.
    pub merge_radius: f64,
    /// Keep at most this many samples (evenly thinned, order preserved).
    pub max_samples: Option<usize>,
}

impl LocusOptions {
    pub fn grid(resolution: Vec<usize>) -> Self {
        Self {
            resolution,
            rank_tol: DEFAULT_RANK_TOL,
            refine_tol: 1e-10,
            max_iter: 60,
            merge_radius: 1e-9,
            max_samples: None,
        }
    }
}

/// Rank, kernel and cokernel of `df` at a point.
pub fn sample_at(map: &dyn SmoothMap, point: &RealVector, rank_tol: f64) -> Result<SingularSample> {
    let j = jacobian(map, point)?;
    let rank = numeric_rank(&j, rank_tol)?;
    let (m, n) = j.shape();
    let corank = m.min(n) - rank;
    Ok(SingularSample {
        point: point.clone(),
        corank,
        kernel: kernel_basis(&j, n - rank),
        cokernel: cokernel_basis(&j, m - rank),
    })
}

/// Pivot rows and columns selecting an invertible `r×r` block of `j`.
fn choose_pivots(j: &RealMatrix, r: usize) -> (Vec<usize>, Vec<usize>) {
    let (m, n) = j.shape();
    // Greedy complete pivoting on a working copy.
    let mut w = j.clone();
    let mut rows: Vec<usize> = Vec::new();
    let mut cols: Vec<usize> = Vec::new();
    for _ in 0..r {
        let mut best = (0, 0, -1.0);
        for a in 0..m {
            if rows.contains(&a) {
                continue;
            }
            for b in 0..n {
                if cols.contains(&b) {
                    continue;
                }
                if w[(a, b)].abs() > best.2 {
                    best = (a, b, w[(a, b)].abs());
                }
            }
        }
        let (pa, pb, pv) = best;
        if pv <= 0.0 {
            break;
        }
        rows.push(pa);
        cols.push(pb);
        let piv = w[(pa, pb)];
        for a in 0..m {
            if a == pa {
                continue;
            }
            let f = w[(a, pb)] / piv;
            if f != 0.0 {
                for b in 0..n {
                    w[(a, b)] -= f * w[(pa, b)];
                }
            }
        }
    }
    rows.sort_unstable();
    cols.sort_unstable();
    (rows, cols)
}

fn complement(idx: &[usize], n: usize) -> Vec<usize> {
    (0..n).filter(|i| !idx.contains(i)).collect()
}

fn block(j: &RealMatrix, rows: &[usize], cols: &[usize]) -> RealMatrix {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| j[(rows[a], cols[b])])
}

/// The Schur-complement system whose zeros are the corank-1 locus near a
/// reference point: `S(x) = D − C A⁻¹ B` for a pivot block `A` of `df` chosen
/// at the reference point. Entries of `S` are the equations.
pub struct MinorSystem<'a> {
    map: &'a dyn SmoothMap,
    rows: Vec<usize>,
    cols: Vec<usize>,
    rows_c: Vec<usize>,
    cols_c: Vec<usize>,
}

pub fn minor_system<'a>(map: &'a dyn SmoothMap, reference: &RealVector) -> Result<MinorSystem<'a>> {
    let j = jacobian(map, reference)?;
    let (m, n) = j.shape();
    let r = m.min(n).saturating_sub(1);
    let (rows, cols) = choose_pivots(&j, r);
    if rows.len() != r {
        return Err(Error::Rejected("differential has corank above 1 at the reference point".into()));
    }
    Ok(MinorSystem { map, rows_c: complement(&rows, m), cols_c: complement(&cols, n), rows, cols })
}

impl MinorSystem<'_> {
    fn parts(&self, j: &RealMatrix) -> Result<(RealMatrix, RealMatrix, RealMatrix, RealMatrix)> {
        let a = block(j, &self.rows, &self.cols);
        let b = block(j, &self.rows, &self.cols_c);
        let c = block(j, &self.rows_c, &self.cols);
        let d = block(j, &self.rows_c, &self.cols_c);
        Ok((a, b, c, d))
    }

    fn schur(&self, j: &RealMatrix) -> Result<RealMatrix> {
        let (a, b, c, d) = self.parts(j)?;
        let lu = a.lu();
        let ainv_b = lu
            .solve(&b)
            .ok_or_else(|| Error::Evaluation("pivot block became singular".into()))?;
        Ok(d - c * ainv_b)
    }

    pub fn n_equations(&self) -> usize {
        self.rows_c.len() * self.cols_c.len()
    }
}

fn flatten(m: &RealMatrix) -> RealVector {
    DVector::from_column_slice(m.as_slice())
}

impl SmoothMap for MinorSystem<'_> {
    fn dim_in(&self) -> usize {
        self.map.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.n_equations()
    }
    fn eval(&self, x: &RealVector) -> Result<RealVector> {
        let j = jacobian(self.map, x)?;
        Ok(flatten(&self.schur(&j)?))
    }
    fn analytic_jacobian(&self, x: &RealVector) -> Option<Result<RealMatrix>> {
        Some((|| {
            let jet = jet_evaluate(self.map, x, 2)?;
            let (a, b, c, _) = self.parts(&jet.jacobian)?;
            let lu = a.clone().lu();
            let ainv_b = lu
                .solve(&b)
                .ok_or_else(|| Error::Evaluation("pivot block became singular".into()))?;
            let c_ainv = a
                .transpose()
                .lu()
                .solve(&c.transpose())
                .ok_or_else(|| Error::Evaluation("pivot block became singular".into()))?
                .transpose();
            let n = x.len();
            let mut out = DMatrix::<f64>::zeros(self.n_equations(), n);
            for k in 0..n {
                let dj = jet.jacobian_derivative(k);
                let (da, db, dc, dd) = self.parts(&dj)?;
                // dS = dD − dC A⁻¹B + C A⁻¹ dA A⁻¹B − C A⁻¹ dB
                let ds = dd - dc * &ainv_b + &c_ainv * da * &ainv_b - &c_ainv * db;
                out.set_column(k, &flatten(&ds));
            }
            Ok(out)
        })())
    }
}

/// Newton refinement of a point onto the corank-1 locus.
pub fn refine_singular_point(
    map: &dyn SmoothMap,
    seed: &RealVector,
    tol: f64,
    max_iter: usize,
    rank_tol: f64,
) -> Result<SingularSample> {
    let sys = minor_system(map, seed)?;
    let rep = newton_solve(&sys, seed, tol, max_iter)?;
    // A second pass re-pivots at the refined point to polish.
    let sys2 = minor_system(map, &rep.root)?;
    let rep2 = newton_solve(&sys2, &rep.root, tol, max_iter)?;
    let s = sample_at(map, &rep2.root, rank_tol)?;
    if s.corank == 0 {
        return Err(Error::Rejected("refined point has full rank".into()));
    }
    Ok(s)
}

/// Orthonormal basis of the tangent space of the corank-1 locus at a point on it.
pub fn locus_tangent(map: &dyn SmoothMap, point: &RealVector) -> Result<RealMatrix> {
    let sys = minor_system(map, point)?;
    let js = crate::smallmath::jacobian(&sys, point)?;
    let codim = sys.n_equations();
    let n = point.len();
    if numeric_rank(&js, 1e-6)? < codim {
        return Err(Error::Rejected("corank-1 locus is not a smooth submanifold here".into()));
    }
    Ok(kernel_basis(&js, n - codim))
}

fn grid_points(b: &DomainBox, res: &[usize]) -> Vec<RealVector> {
    let dim = b.dim();
    let total: usize = res.iter().product();
    (0..total)
        .map(|mut idx| {
            let mut p = DVector::zeros(dim);
            for k in 0..dim {
                let r = res[k];
                let i = idx % r;
                idx /= r;
                p[k] = if r == 1 {
                    0.5 * (b.lo[k] + b.hi[k])
                } else {
                    b.lo[k] + (b.hi[k] - b.lo[k]) * i as f64 / (r - 1) as f64
                };
            }
            p
        })
        .collect()
}

/// Sample the corank-1 locus of `map` inside `domain`.
///
/// Grid points whose smallest singular value could vanish within one cell
/// (it is no larger than its variation to some axis neighbor) are refined by
/// Newton on the Schur-complement minor system.
pub fn singular_locus(
    map: &dyn SmoothMap,
    domain: &DomainBox,
    opts: &LocusOptions,
) -> Result<Vec<SingularSample>> {
    let dim = map.dim_in();
    if domain.dim() != dim || opts.resolution.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: domain.dim() });
    }
    let res = &opts.resolution;
    let pts = grid_points(domain, res);
    let sigma: Vec<Option<f64>> = pts
        .par_iter()
        .map(|p| {
            jacobian(map, p)
                .ok()
                .map(|j| singular_values(&j).last().copied().unwrap_or(0.0))
        })
        .collect();
    let strides: Vec<usize> = (0..dim)
        .map(|k| res[..k].iter().product())
        .collect();
    let candidates: Vec<usize> = (0..pts.len())
        .filter(|&idx| {
            let Some(s0) = sigma[idx] else { return false };
            let mut spread = 0.0_f64;
            let mut rem = idx;
            for k in 0..dim {
                let i = rem % res[k];
                rem /= res[k];
                for (ok, nb) in [(i > 0, idx.wrapping_sub(strides[k])), (i + 1 < res[k], idx + strides[k])] {
                    if ok {
                        if let Some(s1) = sigma[nb] {
                            spread = spread.max((s1 - s0).abs());
                        }
                    }
                }
            }
            s0 <= spread
        })
        .collect();
    let slack = 1e-9 * domain.diameter().max(1.0);
    let refined: Vec<Option<SingularSample>> = candidates
        .par_iter()
        .map(|&idx| {
            refine_singular_point(map, &pts[idx], opts.refine_tol, opts.max_iter, opts.rank_tol)
                .ok()
                .filter(|s| s.corank == 1 && domain.contains(&s.point, slack))
        })
        .collect();
    let mut out: Vec<SingularSample> = Vec::new();
    for s in refined.into_iter().flatten() {
        if out.iter().all(|o| (&o.point - &s.point).norm() > opts.merge_radius) {
            out.push(s);
        }
    }
    if let Some(cap) = opts.max_samples {
        if out.len() > cap && cap > 0 {
            let stride = out.len() as f64 / cap as f64;
            out = (0..cap).map(|i| out[(i as f64 * stride) as usize].clone()).collect();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smallmath::FnMap;

    #[test]
    fn fold_locus_on_axis() {
        let f = FnMap::new(2, 2, |x: &RealVector| Ok(DVector::from_vec(vec![x[0], x[1] * x[1]])));
        let b = DomainBox::cube(2, -1.0, 1.0);
        let s = singular_locus(&f, &b, &LocusOptions::grid(vec![11, 10])).unwrap();
        assert!(!s.is_empty());
        for p in &s {
            assert!(p.point[1].abs() <= 1e-8, "{}", p.point);
            assert_eq!(p.corank, 1);
        }
    }

    #[test]
    fn identity_has_no_locus() {
        let f = FnMap::new(2, 2, |x: &RealVector| Ok(x.clone()));
        let b = DomainBox::cube(2, -1.0, 1.0);
        assert!(singular_locus(&f, &b, &LocusOptions::grid(vec![7, 7])).unwrap().is_empty());
    }

    #[test]
    fn tangent_of_fold_locus() {
        let f = FnMap::new(2, 2, |x: &RealVector| Ok(DVector::from_vec(vec![x[0], x[1] * x[1]])));
        let t = locus_tangent(&f, &DVector::from_vec(vec![0.3, 0.0])).unwrap();
        assert_eq!(t.ncols(), 1);
        assert!(t[(1, 0)].abs() < 1e-6 && (t[(0, 0)].abs() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn minor_jacobian_matches_fd_with_nonsymmetric_pivot() {
        // pivot block [[2, 1], [0, 3]] is far from symmetric
        let f = FnMap::new(3, 3, |x: &RealVector| {
            Ok(DVector::from_vec(vec![
                2.0 * x[0] + x[1] + 0.5 * x[2] * x[2],
                3.0 * x[1] + x[0] * x[2],
                x[0] * x[1] + x[2] * x[2] * x[2] + 0.7 * x[0] * x[2],
            ]))
        });
        let p = DVector::from_vec(vec![0.1, -0.2, 0.0]);
        let sys = minor_system(&f, &p).unwrap();
        let analytic = sys.analytic_jacobian(&p).unwrap().unwrap();
        let fd = crate::smallmath::fd_jacobian(&sys, &p).unwrap();
        assert!((&analytic - &fd).amax() < 1e-5, "{analytic} vs {fd}");
    }
}
