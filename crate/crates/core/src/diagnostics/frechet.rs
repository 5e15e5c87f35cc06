use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Eigenvalues above `-EIG_TOL` count as numerically PSD and are clipped to 0.
pub const EIG_TOL: f64 = 1e-8;
const SYM_TOL: f64 = 1e-8;
const MOMENT_SHARD: usize = 1024;

/// Mean and covariance of a distribution, estimated or exact.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Sample count; `None` for exact moments.
    pub n: Option<usize>,
}

/// Running sums for one shard: count, mean, centered scatter matrix.
struct Partial {
    n: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl Partial {
    fn from_rows(x: &[f64], d: usize) -> Self {
        let n = x.len() / d;
        let m = DMatrix::from_row_slice(n, d, x);
        let mean = m.row_mean().transpose();
        let mut c = m;
        for mut row in c.row_iter_mut() {
            row -= mean.transpose();
        }
        let m2 = c.tr_mul(&c);
        Partial { n, mean, m2 }
    }

    // Chan et al. pairwise combination.
    fn merge(a: Partial, b: Partial) -> Partial {
        let n = a.n + b.n;
        let delta = &b.mean - &a.mean;
        let w = (a.n * b.n) as f64 / n as f64;
        let mean = &a.mean + &delta * (b.n as f64 / n as f64);
        let m2 = a.m2 + b.m2 + (&delta * delta.transpose()) * w;
        Partial { n, mean, m2 }
    }
}

fn merge_tree(mut parts: Vec<Partial>) -> Partial {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => Partial::merge(a, b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().unwrap()
}

impl MomentStats {
    /// Sample mean and unbiased covariance of row-major `n x dim` samples.
    /// Shards are merged in a fixed pairwise order.
    pub fn from_samples(x: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || !x.len().is_multiple_of(dim) || x.len() < 2 * dim {
            return Err(Error::Input(format!(
                "moment estimate needs at least two {dim}-dim rows, got {} values",
                x.len()
            )));
        }
        let parts: Vec<Partial> = x
            .par_chunks(MOMENT_SHARD * dim)
            .map(|c| Partial::from_rows(c, dim))
            .collect();
        let p = merge_tree(parts);
        let mut cov = p.m2 / (p.n as f64 - 1.0);
        cov = (&cov + cov.transpose()) * 0.5;
        Ok(MomentStats {
            mean: p.mean,
            cov,
            n: Some(p.n),
        })
    }

    pub fn exact(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.len() != d * d {
            return Err(Error::shape("covariance", d * d, cov.len()));
        }
        Ok(MomentStats {
            mean: DVector::from_vec(mean),
            cov: DMatrix::from_row_slice(d, d, &cov),
            n: None,
        })
    }

    /// `N(0, std^2 I)`.
    pub fn isotropic(dim: usize, std: f64) -> Self {
        MomentStats {
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim) * (std * std),
            n: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Adds `eps I` with `eps = 1e-6 tr(cov) / dim`.
    pub fn regularized(&self) -> Self {
        let d = self.dim() as f64;
        let eps = 1e-6 * self.cov.trace() / d;
        let mut out = self.clone();
        for i in 0..self.dim() {
            out.cov[(i, i)] += eps;
        }
        out
    }

    /// Blends the covariance toward `(tr / d) I` when there are too few
    /// samples for a full-rank estimate.
    pub fn shrunk(&self) -> Self {
        let d = self.dim();
        let n = match self.n {
            Some(n) if n < d + 1 => n,
            _ => return self.clone(),
        };
        let lambda = 1.0 - n as f64 / (d + 1) as f64;
        let target = self.cov.trace() / d as f64;
        let mut out = self.clone();
        out.cov *= 1.0 - lambda;
        for i in 0..d {
            out.cov[(i, i)] += lambda * target;
        }
        out
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Input(format!(
            "matrix is {}x{}, not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYM_TOL * scale {
        return Err(Error::Input(format!(
            "matrix is not symmetric (max deviation {asym:e})"
        )));
    }
    Ok(())
}

/// Principal square root of a symmetric PSD matrix via eigendecomposition.
/// Eigenvalues in `[-1e-8, 0)` are clipped to zero.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(m)?;
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = m.amax().max(1.0);
    let mut roots = eig.eigenvalues.clone();
    for l in roots.iter_mut() {
        if *l < -EIG_TOL * scale {
            return Err(Error::Numeric(format!("matrix has eigenvalue {l:e} < 0")));
        }
        *l = l.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    let s = q * DMatrix::from_diagonal(&roots) * q.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// Frechet distance between the Gaussians with moments `a` and `b`:
/// `||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)`.
pub fn frechet_gaussian(a: &MomentStats, b: &MomentStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape("frechet dimension", a.dim(), b.dim()));
    }
    let mean_term = (&a.mean - &b.mean).norm_squared();
    let ra = sqrtm_psd(&a.cov)?;
    let inner = &ra * &b.cov * &ra;
    let cross = sqrtm_psd(&((&inner + inner.transpose()) * 0.5))?;
    let value = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    // round-off can leave tiny negatives for identical inputs
    Ok(value.max(0.0))
}

/// Frechet distance between the two halves of a sample; an estimate of the
/// finite-sample noise floor at half the sample size.
pub fn split_half_floor(x: &[f64], dim: usize) -> Result<f64> {
    let n = x.len() / dim.max(1);
    let half = n / 2;
    let a = MomentStats::from_samples(&x[..half * dim], dim)?.regularized();
    let b = MomentStats::from_samples(&x[half * dim..2 * half * dim], dim)?.regularized();
    frechet_gaussian(&a, &b)
}
