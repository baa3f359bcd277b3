use nalgebra::DMatrix;

use super::ComposedPoint;
use crate::canrel::CanonicalRelationChart;
use crate::error::{Error, Result};
use crate::singularity::DomainBox;
use crate::smallmath::{jacobian, newton_solve, RealMatrix, RealVector, SmoothMap};

/// Solutions closer than this (relative to their size) are merged.
pub const MERGE_RADIUS: f64 = 1e-6;
pub const DEFAULT_SEED_COUNT: usize = 8;

#[derive(Debug, Clone)]
pub struct ComposeOptions {
    /// Residual bound `|π_L(p) − π_L(q)|` for an accepted solution.
    pub tol: f64,
    pub max_iter: usize,
    pub merge_radius: f64,
    /// Box the legs must stay in. `None` uses the chart's sample box widened
    /// by a quarter of its width on each side.
    pub admissible: Option<DomainBox>,
}

impl Default for ComposeOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 60, merge_radius: MERGE_RADIUS, admissible: None }
    }
}

#[derive(Debug, Clone)]
pub struct ComposeOutcome {
    pub points: Vec<ComposedPoint>,
    /// Smallest residual reached from any seed (`∞` if no seed was usable).
    pub best_residual: f64,
    pub seeds_used: usize,
}

/// `2k` second-leg seeds `q = p + jδ e_f`, `j = ±1, …, ±k`, shifting the
/// fiber coordinates `f ∈ fiber` of the first leg symmetrically.
pub fn symmetric_seeds(first_leg: &RealVector, fiber: &[usize], delta: f64, count: usize) -> Vec<RealVector> {
    let mut out = Vec::with_capacity(count);
    for j in 1..=count.div_ceil(2) {
        for sign in [1.0, -1.0] {
            if out.len() == count {
                break;
            }
            let mut q = first_leg.clone();
            for &f in fiber {
                q[f] += sign * j as f64 * delta;
            }
            out.push(q);
        }
    }
    out
}

struct MatchSystem<'a> {
    chart: &'a CanonicalRelationChart,
    base: &'a RealVector,
    free: &'a [usize],
}

impl MatchSystem<'_> {
    fn split(&self, u: &RealVector) -> (RealVector, RealVector) {
        let mut p = self.base.clone();
        for (k, &i) in self.free.iter().enumerate() {
            p[i] = u[k];
        }
        let q = u.rows(self.free.len(), self.chart.dim()).clone_owned();
        (p, q)
    }
}

impl SmoothMap for MatchSystem<'_> {
    fn dim_in(&self) -> usize {
        self.free.len() + self.chart.dim()
    }
    fn dim_out(&self) -> usize {
        2 * self.chart.n_left
    }
    fn eval(&self, u: &RealVector) -> Result<RealVector> {
        let (p, q) = self.split(u);
        Ok(self.chart.left.eval(&p)? - self.chart.left.eval(&q)?)
    }
    fn analytic_jacobian(&self, u: &RealVector) -> Option<Result<RealMatrix>> {
        let (p, q) = self.split(u);
        let jp = match jacobian(self.chart.left.as_ref(), &p) {
            Ok(j) => j,
            Err(e) => return Some(Err(e)),
        };
        let jq = match jacobian(self.chart.left.as_ref(), &q) {
            Ok(j) => j,
            Err(e) => return Some(Err(e)),
        };
        let nf = self.free.len();
        let mut j = DMatrix::zeros(self.dim_out(), self.dim_in());
        for (k, &i) in self.free.iter().enumerate() {
            j.set_column(k, &jp.column(i));
        }
        j.columns_mut(nf, self.chart.dim()).copy_from(&(-jq));
        Some(Ok(j))
    }
}

/// Points of `Cᵗ∘C` reached from a first leg `p` of the chart.
///
/// The unknowns are the first-leg coordinates listed in `free` and the whole
/// second leg `q`; damped Gauss–Newton drives `π_L(p) − π_L(q)` to zero from
/// every seed for `q`. Accepted solutions are merged by distance.
pub fn compose_numeric(
    chart: &CanonicalRelationChart,
    first_leg: &RealVector,
    free: &[usize],
    seeds: &[RealVector],
    opts: &ComposeOptions,
) -> Result<ComposeOutcome> {
    let d = chart.dim();
    if first_leg.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: first_leg.len() });
    }
    if let Some(&i) = free.iter().find(|&&i| i >= d) {
        return Err(Error::Precondition(format!("free index {i} outside the chart")));
    }
    let admissible = opts.admissible.clone().unwrap_or_else(|| widen(&chart.sample_box, 0.25));
    let sys = MatchSystem { chart, base: first_leg, free };
    let mut points: Vec<ComposedPoint> = Vec::new();
    let mut best = f64::INFINITY;
    let mut used = 0;
    for seed in seeds {
        if seed.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: seed.len() });
        }
        if !admissible.contains(seed, 0.0) {
            continue;
        }
        used += 1;
        let mut u0 = RealVector::zeros(sys.dim_in());
        for (k, &i) in free.iter().enumerate() {
            u0[k] = first_leg[i];
        }
        u0.rows_mut(free.len(), d).copy_from(seed);
        let (root, res) = match newton_solve(&sys, &u0, opts.tol, opts.max_iter) {
            Ok(r) => (r.root, r.residual),
            Err(Error::NoConvergence { residual, .. }) => {
                best = best.min(residual);
                continue;
            }
            Err(_) => continue,
        };
        best = best.min(res);
        let (p, q) = sys.split(&root);
        if !admissible.contains(&p, 0.0) || !admissible.contains(&q, 0.0) {
            continue;
        }
        let cp = assemble(chart, &p, &q, res)?;
        let flat = cp.flat();
        let scale = flat.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        let dup = points
            .iter()
            .any(|o| super::dist(&o.flat(), &flat) < opts.merge_radius * scale);
        if !dup {
            points.push(cp);
        }
    }
    Ok(ComposeOutcome { points, best_residual: best, seeds_used: used })
}

fn assemble(chart: &CanonicalRelationChart, p: &RealVector, q: &RealVector, residual: f64) -> Result<ComposedPoint> {
    let m = chart.n_right;
    let n = chart.n_left;
    let rp = chart.right.eval(p)?;
    let rq = chart.right.eval(q)?;
    let lp = chart.left.eval(p)?;
    let sl = |v: &RealVector, a: usize, len: usize| v.as_slice()[a..a + len].to_vec();
    Ok(ComposedPoint {
        x: sl(&rp, 0, m),
        xi: sl(&rp, m, m),
        y: sl(&rq, 0, m),
        eta: sl(&rq, m, m),
        z: sl(&lp, 0, n),
        zeta: sl(&lp, n, n),
        residual,
        first_leg: p.iter().copied().collect(),
        second_leg: q.iter().copied().collect(),
    })
}

fn widen(b: &DomainBox, frac: f64) -> DomainBox {
    let lo = b.lo.iter().zip(&b.hi).map(|(l, h)| l - frac * (h - l)).collect();
    let hi = b.lo.iter().zip(&b.hi).map(|(l, h)| h + frac * (h - l)).collect();
    DomainBox::new(lo, hi)
}
