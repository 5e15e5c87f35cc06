//! Closed-form flow-matching quantities for isotropic Gaussian data.
//!
//! With `x1 ~ N(0, s1^2 I)` and `x0 ~ N(0, I)` every coordinate of
//! `(x0, x1, x_t)` is jointly Gaussian and independent of the others, so the
//! MSE-optimal field, the conditional means, and the exact conditional law of
//! `(x0, x1)` given `x_t` all reduce to scalar formulas.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit_time, Error, Result};
use crate::field::VelocityField;
use crate::interpolant::{Coefficients, Interpolant, PathKind};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFlowSpec {
    pub dim: usize,
    pub data_std: f64,
}

impl GaussianFlowSpec {
    pub fn new(dim: usize, data_std: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("dimension must be at least 1".into()));
        }
        if !(data_std > 0.0 && data_std.is_finite()) {
            return Err(Error::Domain {
                what: "data_std",
                value: data_std,
                domain: "(0, inf)",
            });
        }
        Ok(GaussianFlowSpec { dim, data_std })
    }

    /// Per-coordinate marginal variance of `x_t`.
    pub fn marginal_variance(&self, c: &Coefficients) -> f64 {
        let v1 = self.data_std * self.data_std;
        c.alpha * c.alpha * v1 + c.sigma * c.sigma
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::shape("gaussian oracle state", self.dim, x.len()));
        }
        Ok(())
    }
}

/// Scalar `c(t)` with `v*(x, t) = c(t) x`.
pub fn oracle_coefficient(spec: &GaussianFlowSpec, interp: &Interpolant, t: f64) -> Result<f64> {
    let c = interp.coefficients(t)?;
    let var = spec.marginal_variance(&c);
    if !(var > 0.0) {
        return Err(Error::Numeric(format!(
            "degenerate marginal variance {var} at t={t}"
        )));
    }
    let v1 = spec.data_std * spec.data_std;
    Ok((c.alpha_dot * c.alpha * v1 + c.sigma_dot * c.sigma) / var)
}

pub fn oracle_velocity(
    spec: &GaussianFlowSpec,
    interp: &Interpolant,
    x: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    spec.check_dim(x)?;
    let k = oracle_coefficient(spec, interp, t)?;
    Ok(x.iter().map(|&v| k * v).collect())
}

/// `(E[x1 | x_t = x], E[x0 | x_t = x])`.
pub fn conditional_means(
    spec: &GaussianFlowSpec,
    interp: &Interpolant,
    x: &[f64],
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.check_dim(x)?;
    let c = interp.coefficients(t)?;
    let var = spec.marginal_variance(&c);
    let k1 = c.alpha * spec.data_std * spec.data_std / var;
    let k0 = c.sigma / var;
    Ok((
        x.iter().map(|&v| k1 * v).collect(),
        x.iter().map(|&v| k0 * v).collect(),
    ))
}

/// Exact sampler for `(x0, x1) | x_t`.
///
/// Per coordinate the conditional covariance has rank one, so a single
/// standard normal `z` per coordinate generates it:
/// `x1 = a s1^2 y / s^2 + (s1 sigma / s) z`, `x0 = sigma y / s^2 - (a s1 / s) z`.
#[derive(Debug, Clone, Copy)]
pub struct ConditionalSampler {
    mean1: f64,
    mean0: f64,
    spread1: f64,
    spread0: f64,
}

impl ConditionalSampler {
    pub fn new(spec: &GaussianFlowSpec, interp: &Interpolant, t: f64) -> Result<Self> {
        let c = interp.coefficients(t)?;
        let var = spec.marginal_variance(&c);
        let s = var.sqrt();
        let v1 = spec.data_std * spec.data_std;
        Ok(ConditionalSampler {
            mean1: c.alpha * v1 / var,
            mean0: c.sigma / var,
            spread1: spec.data_std * c.sigma / s,
            spread0: -c.alpha * spec.data_std / s,
        })
    }

    /// Fills `x0`, `x1` with one draw conditioned on `x_t = y`.
    pub fn sample<R: Rng + ?Sized>(&self, y: &[f64], rng: &mut R, x0: &mut [f64], x1: &mut [f64]) {
        for i in 0..y.len() {
            let z: f64 = StandardNormal.sample(rng);
            x1[i] = self.mean1 * y[i] + self.spread1 * z;
            x0[i] = self.mean0 * y[i] + self.spread0 * z;
        }
    }
}

/// Closed form of `E[<x0, x1> | x_t]` on the linear path.
pub fn cross_term_expectation(
    spec: &GaussianFlowSpec,
    interp: &Interpolant,
    x_t: &[f64],
    t: f64,
) -> Result<f64> {
    if interp.kind != PathKind::Linear {
        return Err(Error::UnsupportedPath {
            op: "cross_term_expectation",
            supported: "linear",
            got: interp.kind.name(),
        });
    }
    spec.check_dim(x_t)?;
    check_unit_time(t)?;
    let v1 = spec.data_std * spec.data_std;
    let var = t * t * v1 + (1.0 - t) * (1.0 - t);
    let norm2: f64 = x_t.iter().map(|v| v * v).sum();
    Ok((1.0 - t) * t * (v1 / var) * (norm2 / var - spec.dim as f64))
}

/// Monte Carlo mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Number of draws per independent RNG shard. Fixed so results do not depend
/// on the worker count.
const MC_SHARD: usize = 4096;

/// Shard-parallel estimate of `E[f(x0, x1) | x_t = y]` under the exact
/// conditional law.
fn conditional_mc<F>(
    spec: &GaussianFlowSpec,
    interp: &Interpolant,
    y: &[f64],
    t: f64,
    n: usize,
    seed: u64,
    label: &str,
    f: F,
) -> Result<McEstimate>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    spec.check_dim(y)?;
    let sampler = ConditionalSampler::new(spec, interp, t)?;
    let shards = n.div_ceil(MC_SHARD);
    let partial: Vec<(f64, f64, usize)> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let count = MC_SHARD.min(n - s * MC_SHARD);
            let mut r = rng::shard(seed, label, s as u64);
            let mut x0 = vec![0.0; y.len()];
            let mut x1 = vec![0.0; y.len()];
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            for _ in 0..count {
                sampler.sample(y, &mut r, &mut x0, &mut x1);
                let v = f(&x0, &x1);
                sum += v;
                sum2 += v * v;
            }
            (sum, sum2, count)
        })
        .collect();
    let (sum, sum2) = partial
        .iter()
        .fold((0.0, 0.0), |(a, b), &(s, s2, _)| (a + s, b + s2));
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum2 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    Ok(McEstimate {
        mean,
        stderr: (var / nf).sqrt(),
        n,
    })
}

/// Monte Carlo counterpart of [`cross_term_expectation`], valid on any path.
pub fn cross_term_mc(
    spec: &GaussianFlowSpec,
    interp: &Interpolant,
    x_t: &[f64],
    t: f64,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n < 2 {
        return Err(Error::Input("need at least two Monte Carlo draws".into()));
    }
    conditional_mc(spec, interp, x_t, t, n, seed, "cross-term", |x0, x1| {
        x0.iter().zip(x1).map(|(a, b)| a * b).sum()
    })
}

pub const MIN_JENSEN_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JensenGap {
    pub t: f64,
    /// `||v*(x, t)||^2`.
    pub learned_energy: f64,
    /// Monte Carlo `E[||v_target||^2 | x_t = x]`.
    pub target_energy: f64,
    pub mc_stderr: f64,
    /// `true` when the gap exceeds three standard errors.
    pub resolved: bool,
}

impl JensenGap {
    pub fn gap(&self) -> f64 {
        self.target_energy - self.learned_energy
    }
}

pub fn jensen_gap(
    spec: &GaussianFlowSpec,
    interp: &Interpolant,
    x: &[f64],
    t: f64,
    n_mc: usize,
    seed: u64,
) -> Result<JensenGap> {
    if n_mc < MIN_JENSEN_DRAWS {
        return Err(Error::Input(format!(
            "jensen gap needs at least {MIN_JENSEN_DRAWS} draws, got {n_mc}"
        )));
    }
    let learned: f64 = oracle_velocity(spec, interp, x, t)?
        .iter()
        .map(|v| v * v)
        .sum();
    let c = interp.coefficients(t)?;
    let est = conditional_mc(spec, interp, x, t, n_mc, seed, "jensen", |x0, x1| {
        x0.iter()
            .zip(x1)
            .map(|(a, b)| {
                let v = c.alpha_dot * b + c.sigma_dot * a;
                v * v
            })
            .sum()
    })?;
    let gap = est.mean - learned;
    Ok(JensenGap {
        t,
        learned_energy: learned,
        target_energy: est.mean,
        mc_stderr: est.stderr,
        resolved: gap > 3.0 * est.stderr,
    })
}

/// Closed-form conditional variance mass `E[||v_target - v*||^2 | x_t]`.
pub fn conditional_velocity_variance(
    spec: &GaussianFlowSpec,
    interp: &Interpolant,
    t: f64,
) -> Result<f64> {
    let c = interp.coefficients(t)?;
    let var = spec.marginal_variance(&c);
    // Per coordinate the conditional law is mean + u z with u = (spread1, spread0).
    let s = var.sqrt();
    let u1 = spec.data_std * c.sigma / s;
    let u0 = -c.alpha * spec.data_std / s;
    let w = c.alpha_dot * u1 + c.sigma_dot * u0;
    Ok(spec.dim as f64 * w * w)
}

/// Irreducible FM loss `E_t E ||v_target - v*||^2` for uniform `t`, by
/// composite Simpson quadrature.
pub fn irreducible_fm_loss(spec: &GaussianFlowSpec, interp: &Interpolant) -> Result<f64> {
    let n = 2000;
    let h = 1.0 / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * conditional_velocity_variance(spec, interp, i as f64 * h)?;
    }
    Ok(acc * h / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoStats {
    pub dim: usize,
    pub n_pairs: usize,
    pub mean: f64,
    pub p99: f64,
    pub max: f64,
}

pub const MIN_RHO_PAIRS: usize = 10_000;
const RHO_SHARD: usize = 512;

/// Summary of `rho = 2 |<x0, x1>| / (||x0||^2 + ||x1||^2)` over independent
/// Gaussian pairs.
pub fn rho_statistics(dim: usize, n_pairs: usize, data_std: f64, seed: u64) -> Result<RhoStats> {
    GaussianFlowSpec::new(dim, data_std)?;
    if n_pairs < MIN_RHO_PAIRS {
        return Err(Error::Input(format!(
            "rho statistics need at least {MIN_RHO_PAIRS} pairs, got {n_pairs}"
        )));
    }
    let shards = n_pairs.div_ceil(RHO_SHARD);
    let mut rho: Vec<f64> = (0..shards)
        .into_par_iter()
        .flat_map_iter(|s| {
            let count = RHO_SHARD.min(n_pairs - s * RHO_SHARD);
            let mut r = rng::shard(seed, "rho", s as u64);
            (0..count)
                .map(|_| {
                    let (mut dot, mut n0, mut n1) = (0.0, 0.0, 0.0);
                    for _ in 0..dim {
                        let a: f64 = StandardNormal.sample(&mut r);
                        let b: f64 = StandardNormal.sample(&mut r);
                        let b = data_std * b;
                        dot += a * b;
                        n0 += a * a;
                        n1 += b * b;
                    }
                    2.0 * dot.abs() / (n0 + n1)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mean = rho.iter().sum::<f64>() / n_pairs as f64;
    rho.sort_by(f64::total_cmp);
    Ok(RhoStats {
        dim,
        n_pairs,
        mean,
        p99: quantile_sorted(&rho, 0.99),
        max: *rho.last().unwrap(),
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// The MSE-optimal Gaussian field as a [`VelocityField`].
#[derive(Debug, Clone, Copy)]
pub struct OracleField {
    pub spec: GaussianFlowSpec,
    pub interp: Interpolant,
}

impl OracleField {
    pub fn new(spec: GaussianFlowSpec, interp: Interpolant) -> Self {
        OracleField { spec, interp }
    }
}

impl VelocityField for OracleField {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn eval_batch(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let k = oracle_coefficient(&self.spec, &self.interp, t)?;
        for (o, &v) in out.iter_mut().zip(x) {
            *o = k * v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(dim: usize, s: f64) -> GaussianFlowSpec {
        GaussianFlowSpec::new(dim, s).unwrap()
    }

    /// Unconditional joint draws `(x0, x1)` regressed on `x_t` by least squares
    /// through the origin: pools every coordinate, so slope estimates
    /// `E[target | x_t] / x_t` for a linear conditional mean.
    fn regression_slope(
        s: &GaussianFlowSpec,
        p: &Interpolant,
        t: f64,
        n: usize,
        target: impl Fn(&Coefficients, f64, f64) -> f64,
    ) -> f64 {
        let mut r = rng::stream(99, "regression-oracle");
        let c = p.coefficients(t).unwrap();
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for _ in 0..n {
            let a: f64 = StandardNormal.sample(&mut r);
            let b: f64 = StandardNormal.sample(&mut r);
            let b = s.data_std * b;
            let x = c.alpha * b + c.sigma * a;
            sxy += x * target(&c, a, b);
            sxx += x * x;
        }
        sxy / sxx
    }

    #[test]
    fn oracle_examples() {
        let p = Interpolant::linear();
        let x0 = vec![0.3, -1.2, 2.0];
        let v = oracle_velocity(&spec(3, 1.0), &p, &x0, 0.0).unwrap();
        assert_eq!(v, x0.iter().map(|a| -a).collect::<Vec<_>>());
        let v = oracle_velocity(&spec(3, 1.0), &p, &x0, 0.5).unwrap();
        assert!(v.iter().all(|&a| a == 0.0));
        let v = oracle_velocity(&spec(4, 2.0), &p, &[1.0; 4], 0.5).unwrap();
        for a in v {
            assert_relative_eq!(a, 1.2, epsilon = 1e-14);
        }
    }

    #[test]
    fn oracle_coefficient_matches_monte_carlo_regression() {
        let s = spec(1, 2.0);
        let p = Interpolant::linear();
        let slope = regression_slope(&s, &p, 0.5, 1_000_000, |c, a, b| {
            c.alpha_dot * b + c.sigma_dot * a
        });
        assert!((slope - 1.2).abs() < 0.01, "slope {slope}");
        for kind in PathKind::ALL {
            let p = Interpolant::new(kind);
            for t in [0.2, 0.7] {
                let slope = regression_slope(&s, &p, t, 400_000, |c, a, b| {
                    c.alpha_dot * b + c.sigma_dot * a
                });
                let exact = oracle_coefficient(&s, &p, t).unwrap();
                assert!(
                    (slope - exact).abs() < 0.02 * exact.abs().max(1.0),
                    "{kind} t={t}"
                );
            }
        }
    }

    #[test]
    fn conditional_means_examples() {
        let p = Interpolant::linear();
        let s = spec(2, 1.0);
        let (m1, _) = conditional_means(&s, &p, &[0.4, -0.7], 0.0).unwrap();
        assert_eq!(m1, vec![0.0, 0.0]);
        let (_, m0) = conditional_means(&s, &p, &[0.4, -0.7], 1.0).unwrap();
        assert_eq!(m0, vec![0.0, 0.0]);
        let (m1, m0) = conditional_means(&s, &p, &[1.0, 0.0], 0.5).unwrap();
        assert_relative_eq!(m1[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(m0[0], 1.0, epsilon = 1e-15);
        let slope1 = regression_slope(&spec(1, 1.0), &p, 0.5, 500_000, |_, _, b| b);
        let slope0 = regression_slope(&spec(1, 1.0), &p, 0.5, 500_000, |_, a, _| a);
        assert!((slope1 - 1.0).abs() < 0.01 && (slope0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn boundary_exactness_all_paths() {
        let x = [0.7, -1.3, 2.2, 0.01];
        for kind in PathKind::ALL {
            let p = Interpolant::new(kind);
            for sd in [0.5, 1.0, 3.0] {
                let s = spec(4, sd);
                let c0 = p.coefficients(0.0).unwrap();
                let c1 = p.coefficients(1.0).unwrap();
                let v0 = oracle_velocity(&s, &p, &x, 0.0).unwrap();
                let v1 = oracle_velocity(&s, &p, &x, 1.0).unwrap();
                for i in 0..4 {
                    assert_eq!(v0[i], c0.sigma_dot * x[i], "{kind} sd={sd}");
                    assert_eq!(v1[i], c1.alpha_dot * x[i], "{kind} sd={sd}");
                }
            }
        }
    }

    #[test]
    fn cross_term_examples() {
        let p = Interpolant::linear();
        let s = spec(4, 1.0);
        assert_eq!(
            cross_term_expectation(&s, &p, &[1.0, 2.0, 3.0, 4.0], 0.0).unwrap(),
            0.0
        );
        assert_eq!(
            cross_term_expectation(&s, &p, &[1.0, 2.0, 3.0, 4.0], 1.0).unwrap(),
            0.0
        );
        let v = cross_term_expectation(&s, &p, &[1.0; 4], 0.5).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-14);
        // typical shell: ||x||^2 = D s^2 with s^2 = 0.5
        let shell = [0.5f64.sqrt(); 4];
        assert!(cross_term_expectation(&s, &p, &shell, 0.5).unwrap().abs() < 1e-14);
        let mc = cross_term_mc(&s, &p, &[1.0; 4], 0.5, 200_000, 5).unwrap();
        assert!((mc.mean - 2.0).abs() < 3.0 * mc.stderr, "{mc:?}");
        assert!(matches!(
            cross_term_expectation(&s, &Interpolant::new(PathKind::Gvp), &[1.0; 4], 0.5),
            Err(Error::UnsupportedPath { .. })
        ));
    }

    #[test]
    fn conditional_sampler_reproduces_observation() {
        let s = spec(3, 1.7);
        let y = [0.2, -0.5, 1.1];
        for kind in PathKind::ALL {
            let p = Interpolant::new(kind);
            for t in [0.0, 0.3, 0.8, 1.0] {
                let c = p.coefficients(t).unwrap();
                let sampler = ConditionalSampler::new(&s, &p, t).unwrap();
                let mut r = rng::stream(1, "t");
                let (mut x0, mut x1) = ([0.0; 3], [0.0; 3]);
                sampler.sample(&y, &mut r, &mut x0, &mut x1);
                for i in 0..3 {
                    assert_relative_eq!(c.alpha * x1[i] + c.sigma * x0[i], y[i], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn jensen_gap_examples() {
        let p = Interpolant::linear();
        let s = spec(64, 1.0);
        let shell = vec![0.5f64.sqrt(); 64];
        let g = jensen_gap(&s, &p, &shell, 0.5, 20_000, 3).unwrap();
        assert_eq!(g.learned_energy, 0.0);
        assert!(g.resolved);
        let exact = conditional_velocity_variance(&s, &p, 0.5).unwrap();
        assert!((g.target_energy - exact).abs() < 4.0 * g.mc_stderr);

        let x0: Vec<f64> = (0..64)
            .map(|i| ((i * 37 % 11) as f64 - 5.0) / 4.0)
            .collect();
        let n0: f64 = x0.iter().map(|v| v * v).sum();
        let g = jensen_gap(&s, &p, &x0, 0.0, 20_000, 3).unwrap();
        assert_relative_eq!(g.learned_energy, n0, epsilon = 1e-12);
        assert!((g.target_energy - (n0 + 64.0)).abs() < 4.0 * g.mc_stderr);
        let g = jensen_gap(&s, &p, &x0, 1.0, 20_000, 3).unwrap();
        assert_relative_eq!(g.learned_energy, n0, epsilon = 1e-12);
        assert!((g.target_energy - (n0 + 64.0)).abs() < 4.0 * g.mc_stderr);

        assert!(jensen_gap(&s, &p, &x0, 0.5, 999, 3).is_err());
    }

    #[test]
    fn oracle_minimizes_fm_loss_over_linear_fields() {
        // Empirical FM loss at fixed t for fields k x; the oracle slope must
        // beat perturbed slopes on shared draws.
        let s = spec(8, 1.5);
        for kind in PathKind::ALL {
            let p = Interpolant::new(kind);
            let t = 0.35;
            let c = p.coefficients(t).unwrap();
            let k = oracle_coefficient(&s, &p, t).unwrap();
            let mut r = rng::stream(11, "fm-loss");
            let draws: Vec<(f64, f64)> = (0..200_000)
                .map(|_| {
                    let a: f64 = StandardNormal.sample(&mut r);
                    let b: f64 = StandardNormal.sample(&mut r);
                    (a, s.data_std * b)
                })
                .collect();
            let loss = |slope: f64| {
                draws
                    .iter()
                    .map(|&(a, b)| {
                        let x = c.alpha * b + c.sigma * a;
                        let v = c.alpha_dot * b + c.sigma_dot * a;
                        (slope * x - v).powi(2)
                    })
                    .sum::<f64>()
            };
            let base = loss(k);
            for eps in [-0.05, -0.01, 0.01, 0.05] {
                assert!(loss(k + eps) > base, "{kind} eps={eps}");
            }
        }
    }

    #[test]
    fn rho_examples() {
        let st = rho_statistics(1, 10_000, 1.0, 0).unwrap();
        assert!(st.mean > 0.3, "1-D mean rho {}", st.mean);
        let a = rho_statistics(64, 10_000, 1.0, 0).unwrap();
        let b = rho_statistics(256, 10_000, 1.0, 0).unwrap();
        let ratio = a.mean / b.mean;
        assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
        assert!((a.mean - (2.0 / (std::f64::consts::PI * 64.0)).sqrt()).abs() < 0.003);
        assert!(rho_statistics(64, 9_999, 1.0, 0).is_err());
    }

    #[test]
    fn rho_is_deterministic_per_seed() {
        let a = rho_statistics(16, 10_000, 1.0, 4).unwrap();
        let b = rho_statistics(16, 10_000, 1.0, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn irreducible_loss_linear_unit_std() {
        // D * integral 1 / (t^2 + (1-t)^2) dt = D pi / 2
        let v = irreducible_fm_loss(&spec(16, 1.0), &Interpolant::linear()).unwrap();
        assert_relative_eq!(v, 16.0 * std::f64::consts::FRAC_PI_2, max_relative = 1e-9);
    }
}
