use serde::Serialize;

use super::frechet::{frechet_gaussian, split_half_floor, MomentStats};
use super::profile::{csv_err, finish_csv};
use crate::error::{Error, Result};
use crate::solver::Trajectory;

/// Distance to the target distribution at each checkpoint of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FldReport {
    pub times: Vec<f64>,
    pub fld: Vec<f64>,
    pub reference: String,
    pub n_samples: usize,
}

impl FldReport {
    pub fn terminal(&self) -> f64 {
        *self.fld.last().unwrap_or(&f64::NAN)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t", "value", "stderr"]).map_err(csv_err)?;
        for (t, v) in self.times.iter().zip(&self.fld) {
            w.write_record(&[t.to_string(), v.to_string(), String::new()])
                .map_err(csv_err)?;
        }
        finish_csv(w)
    }
}

/// Frechet distance between each checkpoint batch (regularized) and the
/// terminal target `reference`.
pub fn track_fld(traj: &Trajectory, reference: &MomentStats, label: &str) -> Result<FldReport> {
    if reference.dim() != traj.dim {
        return Err(Error::shape(
            "reference dimension",
            traj.dim,
            reference.dim(),
        ));
    }
    let fld = traj
        .states
        .iter()
        .map(|batch| {
            let n = batch.len() / traj.dim;
            let stats = if n < traj.dim + 1 {
                log::warn!(
                    "checkpoint batch of {n} particles cannot give a full-rank {}-dim covariance; shrinking",
                    traj.dim
                );
                MomentStats::from_samples(batch, traj.dim)?.shrunk()
            } else {
                MomentStats::from_samples(batch, traj.dim)?
            };
            frechet_gaussian(&stats.regularized(), reference)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FldReport {
        times: traj.times.clone(),
        fld,
        reference: label.to_string(),
        n_samples: traj.n_particles,
    })
}

/// Split-half distance of the terminal batch, the noise floor reported next
/// to lag tables.
pub fn terminal_noise_floor(traj: &Trajectory) -> Result<f64> {
    split_half_floor(traj.terminal(), traj.dim)
}

/// `(baseline - corrected) / baseline` per checkpoint; positive means the
/// corrected run is closer to the target. Defined as 0 where both are 0.
pub fn lag_improvement(baseline: &FldReport, corrected: &FldReport) -> Result<Vec<f64>> {
    if baseline.times != corrected.times {
        return Err(Error::Input(format!(
            "checkpoint grids differ: {:?} vs {:?}",
            baseline.times, corrected.times
        )));
    }
    if baseline.reference != corrected.reference {
        return Err(Error::Input(format!(
            "reference distributions differ: {} vs {}",
            baseline.reference, corrected.reference
        )));
    }
    Ok(baseline
        .fld
        .iter()
        .zip(&corrected.fld)
        .map(|(&b, &c)| if b == c { 0.0 } else { (b - c) / b })
        .collect())
}

/// One labelled row of a lag table.
#[derive(Debug, Clone)]
pub struct LagRow {
    pub label: String,
    pub nfe: usize,
    pub s_start: f64,
    pub s_end: f64,
    pub report: FldReport,
}

/// Table with `FLD@t` columns and, for every row but the baseline, the
/// relative change against the baseline row with the same NFE.
pub fn lag_table_csv(rows: &[LagRow], baseline_label: &str) -> Result<String> {
    let Some(first) = rows.first() else {
        return Ok(String::new());
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "config".to_string(),
        "nfe".into(),
        "s_start".into(),
        "s_end".into(),
    ];
    header.extend(first.report.times.iter().map(|t| format!("fld@{t}")));
    header.extend(first.report.times.iter().map(|t| format!("delta@{t}")));
    w.write_record(&header).map_err(csv_err)?;
    for row in rows {
        let base = rows
            .iter()
            .find(|r| r.label == baseline_label && r.nfe == row.nfe);
        let deltas = match base {
            Some(b) => lag_improvement(&b.report, &row.report)?,
            None => vec![f64::NAN; row.report.fld.len()],
        };
        let mut rec = vec![
            row.label.clone(),
            row.nfe.to_string(),
            row.s_start.to_string(),
            row.s_end.to_string(),
        ];
        rec.extend(row.report.fld.iter().map(|v| format!("{v:.6}")));
        rec.extend(deltas.iter().map(|v| format!("{:.2}%", 100.0 * v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish_csv(w)
}
