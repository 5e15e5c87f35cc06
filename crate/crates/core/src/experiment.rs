//! Experiment tasks, their artifacts and the run manifest.
//!
//! Every CLI subcommand builds an [`ExperimentConfig`] and hands it to
//! [`run_experiment`]. Tasks compute everything in memory; files are only
//! written once the task has finished, so a failed run leaves no partial
//! output directory behind.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::profile::{csv_err, finish_csv};
use crate::diagnostics::svg::{line_chart, Series};
use crate::diagnostics::{
    lag_table_csv, norm_profile, terminal_noise_floor, track_fld, FldReport, LagRow, MomentStats,
    NormProfile,
};
use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::interpolant::{Interpolant, PathKind};
use crate::nn::{read_checkpoint, Checkpoint};
use crate::oracle::{self, GaussianFlowSpec};
use crate::rng;
use crate::solver::{
    calibrate_s_start, integrate, read_trajectory, Method, ScaleSchedule, ScheduleShape, SolverSpec,
};
use crate::training::{self, Dataset, DatasetSpec, TrainConfig, TrainOutcome};

/// Warning attached to a lag sweep in which no `s_start > 1` helped.
pub const OVERSHOOT_CAVEAT: &str = "no s_start > 1 reduced the terminal distance: in low \
     dimensions a larger velocity scale may cause the solver to overshoot the target";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Master seed; every random stream of the run derives from it.
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Turns the task's contract checks into hard assertions (exit 3).
    #[serde(default)]
    pub verify: bool,
    pub task: Task,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("name must not be empty".into()));
        }
        self.task.validate()
    }

    /// SHA-256 of the canonical JSON encoding, leaving out the output
    /// directory so that where a run is written does not change its identity.
    pub fn hash(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        let bytes = serde_json::to_vec(&value)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    /// Closed-form target moments; falls back to sampling when the dataset
    /// has none.
    #[default]
    Analytic,
    Empirical,
}

impl std::str::FromStr for ReferenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(ReferenceKind::Analytic),
            "empirical" => Ok(ReferenceKind::Empirical),
            _ => Err(Error::Config(format!(
                "reference must be analytic or empirical, got {s:?}"
            ))),
        }
    }
}

fn default_particles() -> usize {
    16_384
}
fn default_floor_nfe() -> usize {
    500
}
fn default_reference_samples() -> usize {
    65_536
}
fn default_sweep_nfe() -> Vec<usize> {
    vec![10]
}
fn default_s_grid() -> Vec<f64> {
    vec![1.0, 1.05, 1.1, 1.15, 1.2]
}
fn default_linear() -> ScheduleShape {
    ScheduleShape::Linear
}
fn default_true() -> bool {
    true
}
fn default_checkpoints() -> Vec<f64> {
    vec![0.2, 0.4, 0.6, 0.8, 1.0]
}
fn default_times() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}
fn default_mc() -> usize {
    100_000
}
fn unit() -> f64 {
    1.0
}

/// Grid of the NFE x `s_start` lag sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_sweep_nfe")]
    pub nfe: Vec<usize>,
    /// `s_start` values, each annealed to `s_end = 1`.
    #[serde(default = "default_s_grid")]
    pub s_start: Vec<f64>,
    #[serde(default = "default_linear")]
    pub shape: ScheduleShape,
    /// Adds the `1.0 -> 1.1` and constant `1.05` rows.
    #[serde(default = "default_true")]
    pub extra_rows: bool,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_floor_nfe")]
    pub floor_nfe: usize,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            nfe: default_sweep_nfe(),
            s_start: default_s_grid(),
            shape: default_linear(),
            extra_rows: true,
            particles: default_particles(),
            floor_nfe: default_floor_nfe(),
            method: Method::default(),
            checkpoints: default_checkpoints(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nfe.is_empty() || self.nfe.contains(&0) {
            return Err(Error::Config(
                "nfe list must be non-empty and positive".into(),
            ));
        }
        if self.s_start.is_empty() {
            return Err(Error::Config("s_start list must not be empty".into()));
        }
        if !self.s_start.contains(&1.0) {
            return Err(Error::Config(
                "s_start list must contain 1.0, the uncorrected baseline".into(),
            ));
        }
        if self.particles < 2 || self.floor_nfe == 0 {
            return Err(Error::Config(
                "particles must be at least 2 and floor_nfe positive".into(),
            ));
        }
        for &s in &self.s_start {
            ScaleSchedule::new(self.shape, s, 1.0)?;
        }
        self.spec(1, ScaleSchedule::identity()).validate()
    }

    fn spec(&self, nfe: usize, schedule: ScaleSchedule) -> SolverSpec {
        SolverSpec::new(self.method, nfe)
            .with_schedule(schedule)
            .with_checkpoints(self.checkpoints.clone())
    }

    /// `(label, schedule)` for every row, baseline first.
    pub fn rows(&self) -> Result<Vec<(String, ScaleSchedule)>> {
        let mut rows = vec![("baseline".to_string(), ScaleSchedule::identity())];
        for &s in self.s_start.iter().filter(|&&s| s != 1.0) {
            let sched = ScaleSchedule::new(self.shape, s, 1.0)?;
            rows.push((sched.to_string(), sched));
        }
        if self.extra_rows {
            for (a, b) in [(1.0, 1.1), (1.05, 1.05)] {
                let sched = ScaleSchedule::new(self.shape, a, b)?;
                rows.push((sched.to_string(), sched));
            }
        }
        Ok(rows)
    }
}

/// Per-NFE outcome of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub nfe: usize,
    pub baseline: f64,
    pub floor: f64,
    /// `baseline / floor`, terminal distances.
    pub lag_ratio: f64,
    /// Minimizer over the `s_start` grid (extra rows excluded).
    pub best_s_start: f64,
    pub best: f64,
    /// Some `s_start > 1` strictly beat the baseline.
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<LagRow>,
    pub floor: FldReport,
    pub floor_nfe: usize,
    /// Split-half distance of the floor run's terminal batch.
    pub noise_floor: f64,
    pub summary: Vec<SweepSummary>,
}

impl SweepReport {
    /// Every row has a finite distance at every checkpoint.
    pub fn complete(&self, config: &SweepConfig) -> bool {
        let expected = config.rows().map(|r| r.len()).unwrap_or(0) * config.nfe.len();
        self.rows.len() == expected
            && self.rows.iter().all(|r| {
                r.report.fld.len() == config.checkpoints.len()
                    && r.report.fld.iter().all(|v| v.is_finite())
            })
    }

    pub fn improved(&self) -> bool {
        self.summary.iter().all(|s| s.improved)
    }

    pub fn table_csv(&self) -> Result<String> {
        let mut rows = self.rows.clone();
        rows.push(LagRow {
            label: "floor".into(),
            nfe: self.floor_nfe,
            s_start: 1.0,
            s_end: 1.0,
            report: self.floor.clone(),
        });
        lag_table_csv(&rows, "baseline")
    }

    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "nfe",
            "baseline",
            "floor",
            "floor_nfe",
            "noise_floor",
            "lag_ratio",
            "best_s_start",
            "best",
            "improved",
        ])
        .map_err(csv_err)?;
        for s in &self.summary {
            w.write_record(&[
                s.nfe.to_string(),
                s.baseline.to_string(),
                s.floor.to_string(),
                self.floor_nfe.to_string(),
                self.noise_floor.to_string(),
                s.lag_ratio.to_string(),
                s.best_s_start.to_string(),
                s.best.to_string(),
                s.improved.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish_csv(w)
    }

    pub fn chart(&self) -> String {
        let mut series: Vec<Series> = self
            .rows
            .iter()
            .map(|r| Series {
                name: &r.label,
                points: r
                    .report
                    .times
                    .iter()
                    .copied()
                    .zip(r.report.fld.iter().copied())
                    .collect(),
            })
            .collect();
        series.push(Series {
            name: "floor",
            points: self
                .floor
                .times
                .iter()
                .copied()
                .zip(self.floor.fld.iter().copied())
                .collect(),
        });
        line_chart(
            "Distance to target along the trajectory",
            "t",
            "FLD",
            &series,
        )
    }
}

/// Integrates `field` for every NFE x schedule cell plus one fine-grid floor
/// run, and measures each against `reference`.
pub fn lag_sweep(
    field: &dyn VelocityField,
    config: &SweepConfig,
    reference: &MomentStats,
    label: &str,
    seed: u64,
) -> Result<SweepReport> {
    config.validate()?;
    let floor_traj = integrate(
        field,
        &config.spec(config.floor_nfe, ScaleSchedule::identity()),
        config.particles,
        seed,
    )?;
    let floor = track_fld(&floor_traj, reference, label)?;
    let noise_floor = terminal_noise_floor(&floor_traj)?;
    drop(floor_traj);

    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &nfe in &config.nfe {
        let mut cell_rows = Vec::new();
        for (name, sched) in config.rows()? {
            let traj = integrate(field, &config.spec(nfe, sched), config.particles, seed)?;
            let report = track_fld(&traj, reference, label)?;
            log::info!("nfe {nfe} {name}: terminal {:.4}", report.terminal());
            cell_rows.push(LagRow {
                label: name,
                nfe,
                s_start: sched.s_start,
                s_end: sched.s_end,
                report,
            });
        }
        let baseline = cell_rows[0].report.terminal();
        let grid: Vec<&LagRow> = cell_rows
            .iter()
            .filter(|r| r.s_end == 1.0 && config.s_start.contains(&r.s_start))
            .collect();
        let best = grid
            .iter()
            .min_by(|a, b| a.report.terminal().total_cmp(&b.report.terminal()))
            .expect("grid contains the baseline");
        summary.push(SweepSummary {
            nfe,
            baseline,
            floor: floor.terminal(),
            lag_ratio: baseline / floor.terminal(),
            best_s_start: best.s_start,
            best: best.report.terminal(),
            improved: grid
                .iter()
                .any(|r| r.s_start > 1.0 && r.report.terminal() < baseline),
        });
        rows.extend(cell_rows);
    }
    Ok(SweepReport {
        rows,
        floor,
        floor_nfe: config.floor_nfe,
        noise_floor,
        summary,
    })
}

/// Target moments for distance tracking, with a label naming their origin.
pub fn reference_moments(
    data: &Dataset,
    kind: ReferenceKind,
    samples: usize,
    seed: u64,
) -> Result<(MomentStats, String)> {
    if kind == ReferenceKind::Analytic {
        if let Some((mean, cov)) = data.analytic_moments() {
            return Ok((
                MomentStats::exact(mean, cov)?,
                format!("{} (analytic)", data.name()),
            ));
        }
        log::warn!(
            "{} has no closed-form moments; sampling the reference",
            data.name()
        );
    }
    let x = data.sample(&mut rng::stream(seed, "reference"), samples);
    Ok((
        MomentStats::from_samples(&x, data.dim())?,
        format!("{} ({samples} samples)", data.name()),
    ))
}

/// A point on the shell `||x|| = radius * sqrt(D) * s_t` of the marginal at `t`.
pub fn shell_point(
    spec: &GaussianFlowSpec,
    interp: &Interpolant,
    t: f64,
    radius: f64,
    seed: u64,
    index: u64,
) -> Result<Vec<f64>> {
    let c = interp.coefficients(t)?;
    let s = spec.marginal_variance(&c).sqrt();
    let mut r = rng::shard(seed, "oracle/point", index);
    let z: Vec<f64> = (0..spec.dim)
        .map(|_| StandardNormal.sample(&mut r))
        .collect();
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let target = radius * (spec.dim as f64).sqrt() * s;
    Ok(z.iter().map(|v| v * target / norm).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    Train {
        config: TrainConfig,
        #[serde(default)]
        svg: bool,
    },
    Sample {
        checkpoint: PathBuf,
        solver: SolverSpec,
        #[serde(default = "default_particles")]
        particles: usize,
        /// Artifact name of the trajectory container.
        #[serde(default = "default_trajectory_name")]
        file_name: String,
    },
    Jensen {
        dim: usize,
        #[serde(default = "unit")]
        data_std: f64,
        #[serde(default)]
        path: PathKind,
        #[serde(default = "default_times")]
        times: Vec<f64>,
        #[serde(default = "default_mc")]
        n_mc: usize,
        /// Shell radius relative to the typical one.
        #[serde(default = "unit")]
        radius: f64,
    },
    CrossTerm {
        dim: usize,
        #[serde(default = "unit")]
        data_std: f64,
        #[serde(default = "default_times")]
        times: Vec<f64>,
        #[serde(default = "default_mc")]
        n_mc: usize,
        #[serde(default = "default_cross_radius")]
        radius: f64,
    },
    RhoStats {
        dims: Vec<usize>,
        #[serde(default = "default_pairs")]
        pairs: usize,
        #[serde(default = "unit")]
        data_std: f64,
    },
    DiagnoseNorm {
        checkpoint: PathBuf,
        #[serde(default = "default_points")]
        points: usize,
        #[serde(default = "default_profile_samples")]
        samples: usize,
        #[serde(default)]
        svg: bool,
    },
    DiagnoseFld {
        trajectory: PathBuf,
        /// Source of the dataset the trajectory should reach.
        checkpoint: Option<PathBuf>,
        dataset: Option<DatasetSpec>,
        #[serde(default)]
        reference: ReferenceKind,
        #[serde(default = "default_reference_samples")]
        reference_samples: usize,
    },
    DiagnoseLag {
        checkpoint: PathBuf,
        #[serde(default = "default_nfe")]
        nfe: usize,
        #[serde(default)]
        schedule: ScaleSchedule,
        #[serde(default = "default_particles")]
        particles: usize,
        #[serde(default = "default_floor_nfe")]
        floor_nfe: usize,
        #[serde(default)]
        method: Method,
        #[serde(default)]
        svg: bool,
    },
    LagSweep {
        checkpoint: PathBuf,
        #[serde(default)]
        sweep: SweepConfig,
        #[serde(default)]
        reference: ReferenceKind,
        #[serde(default)]
        svg: bool,
    },
    ScheduleCalibrate {
        shape: ScheduleShape,
        area: f64,
        #[serde(default = "unit")]
        s_end: f64,
    },
}

fn default_trajectory_name() -> String {
    "trajectory.fltr".into()
}
fn default_cross_radius() -> f64 {
    1.25
}
fn default_pairs() -> usize {
    50_000
}
fn default_points() -> usize {
    21
}
fn default_profile_samples() -> usize {
    4096
}
fn default_nfe() -> usize {
    10
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Config(format!(
            "times must be a non-empty subset of [0, 1], got {times:?}"
        )));
    }
    Ok(())
}

impl Task {
    pub fn kind(&self) -> &'static str {
        match self {
            Task::Train { .. } => "train",
            Task::Sample { .. } => "sample",
            Task::Jensen { .. } => "jensen",
            Task::CrossTerm { .. } => "cross-term",
            Task::RhoStats { .. } => "rho-stats",
            Task::DiagnoseNorm { .. } => "diagnose-norm",
            Task::DiagnoseFld { .. } => "diagnose-fld",
            Task::DiagnoseLag { .. } => "diagnose-lag",
            Task::LagSweep { .. } => "lag-sweep",
            Task::ScheduleCalibrate { .. } => "schedule-calibrate",
        }
    }

    /// Checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        match self {
            Task::Train { config, .. } => config.validate(),
            Task::Sample {
                solver,
                particles,
                file_name,
                ..
            } => {
                if *particles == 0 {
                    return Err(Error::Config("particles must be positive".into()));
                }
                if file_name.is_empty()
                    || file_name.contains(['/', '\\'])
                    || file_name == "manifest.json"
                {
                    return Err(Error::Config(format!(
                        "bad trajectory file name {file_name:?}"
                    )));
                }
                solver.validate()
            }
            Task::Jensen {
                dim,
                data_std,
                times,
                n_mc,
                radius,
                ..
            } => {
                GaussianFlowSpec::new(*dim, *data_std).map_err(config_err)?;
                check_times(times)?;
                if *n_mc < oracle::MIN_JENSEN_DRAWS {
                    return Err(Error::Config(format!(
                        "n_mc must be at least {}, got {n_mc}",
                        oracle::MIN_JENSEN_DRAWS
                    )));
                }
                positive("radius", *radius)
            }
            Task::CrossTerm {
                dim,
                data_std,
                times,
                n_mc,
                radius,
            } => {
                GaussianFlowSpec::new(*dim, *data_std).map_err(config_err)?;
                check_times(times)?;
                if *n_mc < 2 {
                    return Err(Error::Config("n_mc must be at least 2".into()));
                }
                positive("radius", *radius)
            }
            Task::RhoStats {
                dims,
                pairs,
                data_std,
            } => {
                if dims.is_empty() || dims.contains(&0) {
                    return Err(Error::Config("dims must be non-empty and positive".into()));
                }
                if *pairs < oracle::MIN_RHO_PAIRS {
                    return Err(Error::Config(format!(
                        "pairs must be at least {}, got {pairs}",
                        oracle::MIN_RHO_PAIRS
                    )));
                }
                positive("data_std", *data_std)
            }
            Task::DiagnoseNorm {
                points, samples, ..
            } => {
                if *points < 2 || *samples < crate::diagnostics::MIN_PROFILE_SAMPLES {
                    return Err(Error::Config(format!(
                        "norm profiles need at least 2 points and {} samples",
                        crate::diagnostics::MIN_PROFILE_SAMPLES
                    )));
                }
                Ok(())
            }
            Task::DiagnoseFld {
                checkpoint,
                dataset,
                reference_samples,
                ..
            } => {
                match (checkpoint, dataset) {
                    (Some(_), Some(_)) | (None, None) => {
                        return Err(Error::Config(
                            "give exactly one of checkpoint or dataset".into(),
                        ))
                    }
                    (None, Some(d)) => {
                        Dataset::new(d.clone()).map_err(config_err)?;
                    }
                    _ => {}
                }
                if *reference_samples < 2 {
                    return Err(Error::Config("reference_samples must be at least 2".into()));
                }
                Ok(())
            }
            Task::DiagnoseLag {
                nfe,
                schedule,
                particles,
                floor_nfe,
                method,
                ..
            } => SolverSpec::new(*method, *nfe)
                .with_schedule(*schedule)
                .validate()
                .and_then(|_| {
                    if *particles < 2 || *floor_nfe == 0 {
                        Err(Error::Config(
                            "particles must be at least 2 and floor_nfe positive".into(),
                        ))
                    } else {
                        Ok(())
                    }
                }),
            Task::LagSweep { sweep, .. } => sweep.validate(),
            Task::ScheduleCalibrate { shape, area, s_end } => {
                calibrate_s_start(*shape, *s_end, *area).map(|_| ())
            }
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// How a finished task ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// A contract check did not hold (exit 3 in verify mode).
    Violated(String),
    /// Completed with a caveat that the caller must surface (exit 5).
    FailSoft(String),
}

#[derive(Debug, Clone)]
pub struct TaskOutput {
    pub artifacts: Vec<(String, Vec<u8>)>,
    /// Human-readable summary for stdout.
    pub stdout: String,
    pub status: Status,
}

impl TaskOutput {
    fn new() -> Self {
        TaskOutput {
            artifacts: Vec::new(),
            stdout: String::new(),
            status: Status::Ok,
        }
    }

    fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.artifacts.push((name.into(), bytes.into()));
    }

    fn violate(&mut self, msg: String) {
        if self.status == Status::Ok {
            self.status = Status::Violated(msg);
        }
    }
}

/// Loads a checkpoint and the training config stored in its header.
pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, TrainConfig)> {
    let ckpt = read_checkpoint(path)?;
    let cfg: TrainConfig =
        serde_json::from_value(ckpt.meta.config.clone()).map_err(|e| Error::Format {
            kind: "checkpoint",
            detail: format!("embedded training config: {e}"),
        })?;
    Ok((ckpt, cfg))
}

fn profile_chart(p: &NormProfile) -> String {
    line_chart(
        "Predicted velocity norm",
        "t",
        "norm",
        &[
            Series {
                name: "model",
                points: p
                    .times
                    .iter()
                    .copied()
                    .zip(p.mean.iter().copied())
                    .collect(),
            },
            Series {
                name: "target",
                points: p
                    .times
                    .iter()
                    .copied()
                    .zip(p.target_norm.iter().copied())
                    .collect(),
            },
        ],
    )
}

/// Runs a task without touching the filesystem except to read inputs.
pub fn execute(task: &Task, seed: u64) -> Result<TaskOutput> {
    task.validate()?;
    let mut out = TaskOutput::new();
    match task {
        Task::Train { config, svg } => {
            let mut config = config.clone();
            config.seed = seed;
            let outcome = training::train(&config)?;
            write_train_outputs(&outcome, *svg, &mut out)?;
            let last = outcome.losses.last().expect("at least one step");
            let _ = writeln!(
                out.stdout,
                "trained {} steps: fm {:.6}, magnitude {:.6}",
                last.step, last.fm_term, last.magnitude_term
            );
        }
        Task::Sample {
            checkpoint,
            solver,
            particles,
            file_name,
        } => {
            let (ckpt, _) = load_checkpoint(checkpoint)?;
            let traj = integrate(&ckpt.net, solver, *particles, seed)?;
            out.add(file_name.clone(), traj.to_bytes()?);
            let _ = writeln!(
                out.stdout,
                "sampled {particles} particles, checkpoints at {:?}",
                traj.times
            );
        }
        Task::Jensen {
            dim,
            data_std,
            path,
            times,
            n_mc,
            radius,
        } => {
            let spec = GaussianFlowSpec::new(*dim, *data_std)?;
            let interp = Interpolant::new(*path);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "t",
                "learned_energy",
                "target_energy",
                "mc_stderr",
                "resolved",
            ])
            .map_err(csv_err)?;
            for (k, &t) in times.iter().enumerate() {
                let x = shell_point(&spec, &interp, t, *radius, seed, k as u64)?;
                let g = oracle::jensen_gap(
                    &spec,
                    &interp,
                    &x,
                    t,
                    *n_mc,
                    rng::child_seed(seed, "oracle/mc", k as u64),
                )?;
                w.write_record(&[
                    t.to_string(),
                    g.learned_energy.to_string(),
                    g.target_energy.to_string(),
                    g.mc_stderr.to_string(),
                    g.resolved.to_string(),
                ])
                .map_err(csv_err)?;
                if !g.resolved {
                    out.violate(format!(
                        "gap at t = {t} not resolved: {} vs {} (stderr {})",
                        g.learned_energy, g.target_energy, g.mc_stderr
                    ));
                }
            }
            let csv = finish_csv(w)?;
            out.stdout.push_str(&csv);
            out.add("jensen.csv", csv);
        }
        Task::CrossTerm {
            dim,
            data_std,
            times,
            n_mc,
            radius,
        } => {
            let spec = GaussianFlowSpec::new(*dim, *data_std)?;
            let interp = Interpolant::linear();
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["t", "closed_form", "mc_mean", "mc_stderr"])
                .map_err(csv_err)?;
            for (k, &t) in times.iter().enumerate() {
                let x = shell_point(&spec, &interp, t, *radius, seed, k as u64)?;
                let exact = oracle::cross_term_expectation(&spec, &interp, &x, t)?;
                let mc = oracle::cross_term_mc(
                    &spec,
                    &interp,
                    &x,
                    t,
                    *n_mc,
                    rng::child_seed(seed, "oracle/mc", k as u64),
                )?;
                w.write_record(&[
                    t.to_string(),
                    exact.to_string(),
                    mc.mean.to_string(),
                    mc.stderr.to_string(),
                ])
                .map_err(csv_err)?;
                if (exact - mc.mean).abs() > 3.0 * mc.stderr {
                    out.violate(format!(
                        "cross term at t = {t}: closed form {exact} vs Monte Carlo {} +- {}",
                        mc.mean, mc.stderr
                    ));
                }
            }
            let csv = finish_csv(w)?;
            out.stdout.push_str(&csv);
            out.add("cross_term.csv", csv);
        }
        Task::RhoStats {
            dims,
            pairs,
            data_std,
        } => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["D", "mean_rho", "p99_rho", "max_rho"])
                .map_err(csv_err)?;
            for &d in dims {
                let r = oracle::rho_statistics(d, *pairs, *data_std, seed)?;
                w.write_record(&[
                    d.to_string(),
                    r.mean.to_string(),
                    r.p99.to_string(),
                    r.max.to_string(),
                ])
                .map_err(csv_err)?;
            }
            let csv = finish_csv(w)?;
            out.stdout.push_str(&csv);
            out.add("rho.csv", csv);
        }
        Task::DiagnoseNorm {
            checkpoint,
            points,
            samples,
            svg,
        } => {
            let (ckpt, cfg) = load_checkpoint(checkpoint)?;
            let data = Dataset::new(cfg.dataset.clone())?;
            let grid = training::ProfileConfig {
                points: *points,
                samples: *samples,
            }
            .grid();
            let p = norm_profile(
                &ckpt.net,
                &Interpolant::new(cfg.path),
                &data,
                &grid,
                *samples,
                seed,
            )?;
            let csv = p.to_csv()?;
            out.stdout.push_str(&csv);
            out.add("norm_profile.csv", csv);
            if *svg {
                out.add("norm_profile.svg", profile_chart(&p));
            }
        }
        Task::DiagnoseFld {
            trajectory,
            checkpoint,
            dataset,
            reference,
            reference_samples,
        } => {
            let traj = read_trajectory(trajectory)?;
            let spec = match (checkpoint, dataset) {
                (Some(c), _) => load_checkpoint(c)?.1.dataset,
                (None, Some(d)) => d.clone(),
                (None, None) => unreachable!("validated"),
            };
            let data = Dataset::new(spec)?;
            let (stats, label) = reference_moments(&data, *reference, *reference_samples, seed)?;
            let report = track_fld(&traj, &stats, &label)?;
            let floor = terminal_noise_floor(&traj)?;
            let csv = report.to_csv()?;
            out.stdout.push_str(&csv);
            let _ = writeln!(out.stdout, "split-half noise floor: {floor}");
            out.add("fld.csv", csv);
            out.add(
                "fld_floor.csv",
                format!("noise_floor,n_samples\n{floor},{}\n", traj.n_particles),
            );
        }
        Task::DiagnoseLag {
            checkpoint,
            nfe,
            schedule,
            particles,
            floor_nfe,
            method,
            svg,
        } => {
            let (ckpt, cfg) = load_checkpoint(checkpoint)?;
            let data = Dataset::new(cfg.dataset.clone())?;
            let (stats, label) = reference_moments(
                &data,
                ReferenceKind::Analytic,
                default_reference_samples(),
                seed,
            )?;
            let sweep = SweepConfig {
                nfe: vec![*nfe],
                s_start: vec![1.0],
                extra_rows: false,
                particles: *particles,
                floor_nfe: *floor_nfe,
                method: *method,
                ..SweepConfig::default()
            };
            let mut report = lag_sweep(&ckpt.net, &sweep, &stats, &label, seed)?;
            if !schedule.is_identity() {
                let spec = sweep.spec(*nfe, *schedule);
                let traj = integrate(&ckpt.net, &spec, *particles, seed)?;
                report.rows.push(LagRow {
                    label: schedule.to_string(),
                    nfe: *nfe,
                    s_start: schedule.s_start,
                    s_end: schedule.s_end,
                    report: track_fld(&traj, &stats, &label)?,
                });
            }
            emit_sweep(&report, *svg, "lag", &mut out)?;
        }
        Task::LagSweep {
            checkpoint,
            sweep,
            reference,
            svg,
        } => {
            let (ckpt, cfg) = load_checkpoint(checkpoint)?;
            let data = Dataset::new(cfg.dataset.clone())?;
            let (stats, label) =
                reference_moments(&data, *reference, default_reference_samples(), seed)?;
            let report = lag_sweep(&ckpt.net, sweep, &stats, &label, seed)?;
            emit_sweep(&report, *svg, "lag_sweep", &mut out)?;
            if !report.complete(sweep) {
                out.violate("sweep report has missing or non-finite cells".into());
            } else if !report.improved() {
                let _ = writeln!(out.stdout, "caveat: {OVERSHOOT_CAVEAT}");
                out.status = Status::FailSoft(OVERSHOOT_CAVEAT.into());
            }
        }
        Task::ScheduleCalibrate { shape, area, s_end } => {
            let s = calibrate_s_start(*shape, *s_end, *area)?;
            let _ = writeln!(out.stdout, "s_start = {}", format_calibrated(s));
            out.add(
                "calibration.csv",
                format!("shape,area,s_end,s_start\n{shape},{area},{s_end},{s}\n"),
            );
        }
    }
    Ok(out)
}

/// Rounds away binary noise below 1e-12 for display.
pub fn format_calibrated(s: f64) -> String {
    let rounded = (s * 1e12).round() / 1e12;
    format!("{rounded}")
}

fn emit_sweep(report: &SweepReport, svg: bool, stem: &str, out: &mut TaskOutput) -> Result<()> {
    let table = report.table_csv()?;
    let summary = report.summary_csv()?;
    out.stdout.push_str(&summary);
    out.add(format!("{stem}_table.csv"), table);
    out.add(format!("{stem}_summary.csv"), summary);
    if svg {
        out.add(format!("{stem}.svg"), report.chart());
    }
    Ok(())
}

fn write_train_outputs(outcome: &TrainOutcome, svg: bool, out: &mut TaskOutput) -> Result<()> {
    out.add("checkpoint.flck", outcome.checkpoint.to_bytes()?);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "fm_term", "magnitude_term", "total"])
        .map_err(csv_err)?;
    for r in &outcome.losses {
        w.write_record(&[
            r.step.to_string(),
            r.fm_term.to_string(),
            r.magnitude_term.to_string(),
            r.total.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.add("loss.csv", finish_csv(w)?);
    for (step, p) in &outcome.profiles {
        out.add(format!("norm_profile_{step}.csv"), p.to_csv()?);
        if svg {
            out.add(format!("norm_profile_{step}.svg"), profile_chart(p));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub task: String,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub config: ExperimentConfig,
    pub artifacts: Vec<ArtifactEntry>,
}

#[derive(Debug)]
pub struct RunResult {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub output: TaskOutput,
}

/// Validates, executes and then writes the artifacts plus `manifest.json`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    let output = execute(&config.task, config.seed)?;
    let manifest = Manifest {
        name: config.name.clone(),
        task: config.task.kind().to_string(),
        config_sha256: config.hash()?,
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        artifacts: output
            .artifacts
            .iter()
            .map(|(name, bytes)| ArtifactEntry {
                name: name.clone(),
                sha256: hex::encode(Sha256::digest(bytes)),
                bytes: bytes.len(),
            })
            .collect(),
    };
    fs::create_dir_all(&config.output_dir)?;
    for (name, bytes) in &output.artifacts {
        fs::write(config.output_dir.join(name), bytes)?;
    }
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    fs::write(config.output_dir.join("manifest.json"), json)?;
    Ok(RunResult {
        output_dir: config.output_dir.clone(),
        manifest,
        output,
    })
}
