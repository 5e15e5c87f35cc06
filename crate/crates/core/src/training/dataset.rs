use std::f64::consts::PI;

use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub std: f64,
}

/// Target distributions for `x1`. Every kind is shifted to zero mean and,
/// for the 2-D toys, scaled into roughly the unit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    Gaussian {
        dim: usize,
        std: f64,
    },
    GaussianMixture {
        dim: usize,
        components: Vec<MixtureComponent>,
    },
    Checkerboard,
    TwoMoons {
        #[serde(default = "default_moon_noise")]
        noise: f64,
    },
}

fn default_moon_noise() -> f64 {
    0.05
}

/// Affine map applied to raw draws: `x = (raw - shift) * scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub shift: Vec<f64>,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    spec: DatasetSpec,
    norm: Normalization,
    cumulative: Vec<f64>,
}

impl Dataset {
    pub fn new(spec: DatasetSpec) -> Result<Self> {
        let bad = |m: String| Err(Error::Config(m));
        let (norm, cumulative) = match &spec {
            DatasetSpec::Gaussian { dim, std } => {
                if *dim == 0 || !(*std > 0.0 && std.is_finite()) {
                    return bad(format!(
                        "gaussian dataset needs dim > 0 and std > 0, got {dim}, {std}"
                    ));
                }
                (
                    Normalization {
                        shift: vec![0.0; *dim],
                        scale: 1.0,
                    },
                    Vec::new(),
                )
            }
            DatasetSpec::GaussianMixture { dim, components } => {
                if *dim == 0 || components.is_empty() {
                    return bad("gaussian-mixture needs dim > 0 and at least one component".into());
                }
                let mut total = 0.0;
                let mut cumulative = Vec::with_capacity(components.len());
                let mut shift = vec![0.0; *dim];
                for c in components {
                    if c.mean.len() != *dim || !(c.weight > 0.0) || !(c.std >= 0.0) {
                        return bad(format!(
                            "mixture component needs a {dim}-vector mean, weight > 0 and std >= 0"
                        ));
                    }
                    total += c.weight;
                    cumulative.push(total);
                    for (s, m) in shift.iter_mut().zip(&c.mean) {
                        *s += c.weight * m;
                    }
                }
                shift.iter_mut().for_each(|s| *s /= total);
                cumulative.iter_mut().for_each(|c| *c /= total);
                (Normalization { shift, scale: 1.0 }, cumulative)
            }
            DatasetSpec::Checkerboard => (
                Normalization {
                    shift: vec![0.0, 0.0],
                    scale: 0.5,
                },
                Vec::new(),
            ),
            DatasetSpec::TwoMoons { noise } => {
                if !(*noise >= 0.0) {
                    return bad(format!("two-moons noise must be >= 0, got {noise}"));
                }
                (
                    Normalization {
                        shift: vec![0.5, 0.25],
                        scale: 2.0 / 3.0,
                    },
                    Vec::new(),
                )
            }
        };
        Ok(Dataset {
            spec,
            norm,
            cumulative,
        })
    }

    pub fn gaussian(dim: usize, std: f64) -> Result<Self> {
        Self::new(DatasetSpec::Gaussian { dim, std })
    }

    pub fn spec(&self) -> &DatasetSpec {
        &self.spec
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn dim(&self) -> usize {
        self.norm.shift.len()
    }

    /// Fills `out` (length a multiple of `dim`) with normalized draws.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let d = self.dim();
        match &self.spec {
            DatasetSpec::Gaussian { std, .. } => {
                for v in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *v = std * z;
                }
                return;
            }
            DatasetSpec::GaussianMixture { components, .. } => {
                for row in out.chunks_mut(d) {
                    let u: f64 = rng.random();
                    let k = self.cumulative.partition_point(|&c| c <= u);
                    let c = &components[k.min(components.len() - 1)];
                    for (v, m) in row.iter_mut().zip(&c.mean) {
                        let z: f64 = StandardNormal.sample(rng);
                        *v = m + c.std * z;
                    }
                }
            }
            DatasetSpec::Checkerboard => {
                for row in out.chunks_mut(2) {
                    // 8 dark cells of a 4x4 board on [-2, 2]^2
                    let cell = rng.random_range(0..8usize);
                    let i = cell / 2;
                    let j = 2 * (cell % 2) + (i % 2);
                    let u: f64 = rng.random();
                    let w: f64 = rng.random();
                    row[0] = i as f64 + u - 2.0;
                    row[1] = j as f64 + w - 2.0;
                }
            }
            DatasetSpec::TwoMoons { noise } => {
                for row in out.chunks_mut(2) {
                    let theta = PI * rng.random::<f64>();
                    let (s, c) = theta.sin_cos();
                    let (x, y) = if rng.random::<bool>() {
                        (c, s)
                    } else {
                        (1.0 - c, 0.5 - s)
                    };
                    let zx: f64 = StandardNormal.sample(rng);
                    let zy: f64 = StandardNormal.sample(rng);
                    row[0] = x + noise * zx;
                    row[1] = y + noise * zy;
                }
            }
        }
        for row in out.chunks_mut(d) {
            for (v, s) in row.iter_mut().zip(&self.norm.shift) {
                *v = (*v - s) * self.norm.scale;
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * self.dim()];
        self.sample_into(rng, &mut out);
        out
    }

    /// Exact mean and row-major covariance where they are known in closed form.
    pub fn analytic_moments(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let d = self.dim();
        match &self.spec {
            DatasetSpec::Gaussian { std, .. } => {
                let mut cov = vec![0.0; d * d];
                for i in 0..d {
                    cov[i * d + i] = std * std;
                }
                Some((vec![0.0; d], cov))
            }
            DatasetSpec::GaussianMixture { components, .. } => {
                let mut cov = vec![0.0; d * d];
                let mut prev = 0.0;
                for (c, &cum) in components.iter().zip(&self.cumulative) {
                    let w = cum - prev;
                    prev = cum;
                    for i in 0..d {
                        let mi = c.mean[i] - self.norm.shift[i];
                        cov[i * d + i] += w * c.std * c.std;
                        for j in 0..d {
                            cov[i * d + j] += w * mi * (c.mean[j] - self.norm.shift[j]);
                        }
                    }
                }
                Some((vec![0.0; d], cov))
            }
            DatasetSpec::Checkerboard | DatasetSpec::TwoMoons { .. } => None,
        }
    }

    pub fn name(&self) -> String {
        match &self.spec {
            DatasetSpec::Gaussian { dim, std } => format!("gaussian(d={dim},std={std})"),
            DatasetSpec::GaussianMixture { dim, components } => {
                format!("gaussian-mixture(d={dim},k={})", components.len())
            }
            DatasetSpec::Checkerboard => "checkerboard".into(),
            DatasetSpec::TwoMoons { noise } => format!("two-moons(noise={noise})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn mean_norm(ds: &Dataset, n: usize) -> f64 {
        let d = ds.dim();
        let x = ds.sample(&mut rng::stream(3, "ds"), n);
        let mut m = vec![0.0; d];
        for row in x.chunks(d) {
            for (a, b) in m.iter_mut().zip(row) {
                *a += b / n as f64;
            }
        }
        m.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn every_dataset_is_centered() {
        let specs = vec![
            DatasetSpec::Gaussian { dim: 16, std: 1.0 },
            DatasetSpec::GaussianMixture {
                dim: 2,
                components: vec![
                    MixtureComponent {
                        weight: 1.0,
                        mean: vec![3.0, 0.0],
                        std: 0.2,
                    },
                    MixtureComponent {
                        weight: 3.0,
                        mean: vec![-1.0, 2.0],
                        std: 0.5,
                    },
                ],
            },
            DatasetSpec::Checkerboard,
            DatasetSpec::TwoMoons { noise: 0.05 },
        ];
        for spec in specs {
            let ds = Dataset::new(spec).unwrap();
            let m = mean_norm(&ds, 100_000);
            assert!(m < 0.01 * (ds.dim() as f64).sqrt(), "{}: {m}", ds.name());
        }
    }

    #[test]
    fn toys_fit_the_unit_box() {
        let ds = Dataset::new(DatasetSpec::Checkerboard).unwrap();
        let x = ds.sample(&mut rng::stream(0, "ds"), 10_000);
        assert!(x.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn mixture_moments_match_samples() {
        let ds = Dataset::new(DatasetSpec::GaussianMixture {
            dim: 2,
            components: vec![
                MixtureComponent {
                    weight: 1.0,
                    mean: vec![1.0, 1.0],
                    std: 0.1,
                },
                MixtureComponent {
                    weight: 1.0,
                    mean: vec![-1.0, 1.0],
                    std: 0.1,
                },
            ],
        })
        .unwrap();
        let (_, cov) = ds.analytic_moments().unwrap();
        // x-coordinate is +-1 with equal weight plus noise, y is constant
        assert!((cov[0] - 1.01).abs() < 1e-12);
        assert!((cov[3] - 0.01).abs() < 1e-12);
        assert!(cov[1].abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(Dataset::gaussian(0, 1.0).is_err());
        assert!(Dataset::gaussian(3, -1.0).is_err());
        let json = r#"{"kind":"gaussian","dim":2,"std":1,"extra":3}"#;
        assert!(serde_json::from_str::<DatasetSpec>(json).is_err());
    }
}
