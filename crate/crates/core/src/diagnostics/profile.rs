use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::interpolant::Interpolant;
use crate::rng;
use crate::training::Dataset;

pub const MIN_PROFILE_SAMPLES: usize = 1000;

/// Speed of a field along the forward marginals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormProfile {
    pub times: Vec<f64>,
    /// Mean of `||v(x_t, t)||` at each time.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Standard error of `mean`.
    pub stderr: Vec<f64>,
    /// `sqrt(mean ||v_target||^2)` at each time.
    pub target_norm: Vec<f64>,
    pub n_samples: usize,
}

impl NormProfile {
    /// Profile value at the grid node nearest `t`.
    pub fn at(&self, t: f64) -> f64 {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.mean[i]
    }

    /// Mean of the profile over grid nodes inside `[lo, hi]`.
    pub fn mean_over(&self, lo: f64, hi: f64) -> f64 {
        let vals: Vec<f64> = self
            .times
            .iter()
            .zip(&self.mean)
            .filter(|(t, _)| (lo..=hi).contains(*t))
            .map(|(_, m)| *m)
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t", "value", "stderr", "std", "target_norm"])
            .map_err(csv_err)?;
        for i in 0..self.times.len() {
            w.write_record(&[
                self.times[i].to_string(),
                self.mean[i].to_string(),
                self.stderr[i].to_string(),
                self.std[i].to_string(),
                self.target_norm[i].to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish_csv(w)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Measures `||field(x_t, t)||` on a grid of times.
///
/// One pool of `(x0, x1)` pairs is drawn and reused at every grid time, so
/// differences between times are not blurred by fresh sampling noise.
pub fn norm_profile(
    field: &dyn VelocityField,
    interp: &Interpolant,
    data: &Dataset,
    grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<NormProfile> {
    if n_samples < MIN_PROFILE_SAMPLES {
        return Err(Error::Input(format!(
            "norm profile needs at least {MIN_PROFILE_SAMPLES} samples, got {n_samples}"
        )));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Input("profile grid must be sorted".into()));
    }
    let d = data.dim();
    if field.dim() != d {
        return Err(Error::shape("profile field dim", d, field.dim()));
    }
    let x1 = data.sample(&mut rng::stream(seed, "profile/data"), n_samples);
    let mut noise = rng::stream(seed, "profile/noise");
    let x0: Vec<f64> = (0..n_samples * d)
        .map(|_| StandardNormal.sample(&mut noise))
        .collect();
    let mut xt = vec![0.0; n_samples * d];
    let mut v = vec![0.0; n_samples * d];
    let mut out = NormProfile {
        times: grid.to_vec(),
        mean: Vec::with_capacity(grid.len()),
        std: Vec::with_capacity(grid.len()),
        stderr: Vec::with_capacity(grid.len()),
        target_norm: Vec::with_capacity(grid.len()),
        n_samples,
    };
    for &t in grid {
        let c = interp.coefficients(t)?;
        let mut target2 = 0.0;
        for ((x, &a), &b) in xt.iter_mut().zip(&x0).zip(&x1) {
            *x = c.alpha * b + c.sigma * a;
            let u = c.alpha_dot * b + c.sigma_dot * a;
            target2 += u * u;
        }
        field.eval_batch(&xt, t, &mut v)?;
        let norms: Vec<f64> = v
            .chunks(d)
            .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let n = n_samples as f64;
        let mean = norms.iter().sum::<f64>() / n;
        let var = norms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        out.mean.push(mean);
        out.std.push(var.sqrt());
        out.stderr.push((var / n).sqrt());
        out.target_norm.push((target2 / n).sqrt());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ConstantField;
    use crate::oracle::{GaussianFlowSpec, OracleField};

    #[test]
    fn constant_field_has_flat_profile() {
        let data = Dataset::gaussian(3, 1.0).unwrap();
        let f = ConstantField {
            velocity: vec![0.0, 2.5, 0.0],
        };
        let p = norm_profile(&f, &Interpolant::linear(), &data, &[0.0, 0.5, 1.0], 1000, 0).unwrap();
        for m in &p.mean {
            assert!((m - 2.5).abs() < 1e-12);
        }
        assert!(p.std.iter().all(|s| s.abs() < 1e-9));
    }

    #[test]
    fn oracle_profile_shape() {
        let d = 64;
        let data = Dataset::gaussian(d, 1.0).unwrap();
        let f = OracleField::new(
            GaussianFlowSpec::new(d, 1.0).unwrap(),
            Interpolant::linear(),
        );
        let p = norm_profile(&f, &Interpolant::linear(), &data, &[0.0, 0.5, 1.0], 4000, 1).unwrap();
        let root_d = (d as f64).sqrt();
        assert!(p.mean[1].abs() < 1e-12);
        assert!((p.mean[0] / root_d - 1.0).abs() < 0.02);
        assert!((p.mean[2] / root_d - 1.0).abs() < 0.02);
        for tn in &p.target_norm {
            assert!((tn / (2.0 * d as f64).sqrt() - 1.0).abs() < 0.02);
        }
        assert_eq!(p.at(0.49), p.mean[1]);
        assert!(norm_profile(&f, &Interpolant::linear(), &data, &[0.5], 10, 1).is_err());
    }
}
