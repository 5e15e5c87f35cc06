//! Command-line front end. Every subcommand becomes an [`ExperimentConfig`]
//! except `verify`, which runs the acceptance playbook.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiment::{
    execute, run_experiment, ExperimentConfig, ReferenceKind, Status, SweepConfig, Task,
};
use crate::interpolant::PathKind;
use crate::playbook::{Playbook, Verdict, CRITERIA};
use crate::solver::{Method, ScaleSchedule, ScheduleShape, SolverSpec};
use crate::training::{DatasetSpec, TrainConfig};

#[derive(Debug, Parser)]
#[command(
    name = "flowlag",
    version,
    about = "Velocity-deficit lab for flow-matching models"
)]
pub struct Cli {
    /// Master seed for every random stream of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Turn contract violations into exit code 3 (and caveats into 5).
    #[arg(long, global = true)]
    pub verify: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a velocity network from a JSON TrainConfig.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write SVG plots of the norm profiles.
        #[arg(long)]
        svg: bool,
    },
    /// Integrate a trained network from noise to data.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 50)]
        nfe: usize,
        #[arg(long, default_value = "euler")]
        method: Method,
        /// `shape:s_start:s_end`, e.g. `linear:1.1:1.0`, or `none`.
        #[arg(long, default_value = "none")]
        schedule: ScaleSchedule,
        #[arg(long, default_value_t = 16_384)]
        particles: usize,
        /// Interpolant path used to build the SDE score.
        #[arg(long)]
        path: Option<PathKind>,
        /// Trajectory file; the manifest is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form Gaussian oracle checks.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Diagnostics of trained networks and trajectories.
    #[command(subcommand)]
    Diagnose(DiagnoseCommand),
    /// Sweep scale schedules against the baseline sampler.
    LagSweep {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSON sweep block; flags below override single fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        nfe: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        s_start: Option<Vec<f64>>,
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long, default_value = "analytic")]
        reference: ReferenceKind,
        #[arg(long)]
        svg: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve for the s_start that gives a schedule the requested area.
    ScheduleCalibrate {
        #[arg(long)]
        shape: ScheduleShape,
        #[arg(long)]
        area: f64,
        #[arg(long, default_value_t = 1.0)]
        s_end: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full experiment JSON document.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run acceptance criteria and print one PASS/FAIL line each.
    Verify {
        #[arg(long, conflicts_with = "all", required_unless_present = "all")]
        criterion: Option<u8>,
        #[arg(long)]
        all: bool,
        /// Directory for the CSV/SVG artifacts of each criterion.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Learned vs target kinetic energy at points on the typical shell.
    Jensen {
        #[command(flatten)]
        common: OracleArgs,
        #[arg(long, default_value = "linear")]
        path: PathKind,
        #[arg(
            long = "t",
            value_delimiter = ',',
            default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"
        )]
        times: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
    /// Closed-form cross-term expectation vs Monte Carlo.
    CrossTerm {
        #[command(flatten)]
        common: OracleArgs,
        #[arg(long = "t", value_delimiter = ',', default_value = "0.25,0.5,0.75")]
        times: Vec<f64>,
        #[arg(long, default_value_t = 1.25)]
        radius: f64,
    },
    /// Posterior-weight concentration statistics.
    Rho {
        #[arg(long, value_delimiter = ',', default_value = "1024,4096")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 50_000)]
        pairs: usize,
        #[arg(long, default_value_t = 1.0)]
        data_std: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub data_std: f64,
    #[arg(long, default_value_t = 100_000)]
    pub n_mc: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DiagnoseCommand {
    /// Mean velocity norm along t.
    Norm {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 21)]
        points: usize,
        #[arg(long, default_value_t = 4096)]
        samples: usize,
        #[arg(long)]
        svg: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Frechet distance of a stored trajectory to its target.
    Fld {
        #[arg(long)]
        trajectory: PathBuf,
        /// Take the target dataset from this checkpoint...
        #[arg(long, conflicts_with = "dataset", required_unless_present = "dataset")]
        checkpoint: Option<PathBuf>,
        /// ...or from a JSON dataset block.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "analytic")]
        reference: ReferenceKind,
        #[arg(long, default_value_t = 65_536)]
        reference_samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Terminal distance of one schedule against the high-NFE floor.
    Lag {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        nfe: usize,
        #[arg(long, default_value = "none")]
        schedule: ScaleSchedule,
        #[arg(long, default_value_t = 16_384)]
        particles: usize,
        #[arg(long, default_value_t = 500)]
        floor_nfe: usize,
        #[arg(long, default_value = "euler")]
        method: Method,
        #[arg(long)]
        svg: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// A task plus where its artifacts go; `None` prints to stdout only.
fn plan(cli: &Cli) -> Result<Option<(Task, Option<PathBuf>)>> {
    let planned = match &cli.command {
        Command::Train { config, out, svg } => {
            let config: TrainConfig = read_json(config)?;
            (Task::Train { config, svg: *svg }, Some(out.clone()))
        }
        Command::Sample {
            checkpoint,
            nfe,
            method,
            schedule,
            particles,
            path,
            out,
        } => {
            let file_name = out
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| {
                    Error::Config(format!("--out {} is not a file path", out.display()))
                })?
                .to_string();
            let dir = match out.parent() {
                Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                _ => PathBuf::from("."),
            };
            let mut solver = SolverSpec::new(*method, *nfe).with_schedule(*schedule);
            if let Some(p) = path {
                solver = solver.with_path(*p);
            }
            let task = Task::Sample {
                checkpoint: checkpoint.clone(),
                solver,
                particles: *particles,
                file_name,
            };
            (task, Some(dir))
        }
        Command::Oracle(cmd) => match cmd {
            OracleCommand::Jensen {
                common,
                path,
                times,
                radius,
            } => (
                Task::Jensen {
                    dim: common.dim,
                    data_std: common.data_std,
                    path: *path,
                    times: times.clone(),
                    n_mc: common.n_mc,
                    radius: *radius,
                },
                common.out.clone(),
            ),
            OracleCommand::CrossTerm {
                common,
                times,
                radius,
            } => (
                Task::CrossTerm {
                    dim: common.dim,
                    data_std: common.data_std,
                    times: times.clone(),
                    n_mc: common.n_mc,
                    radius: *radius,
                },
                common.out.clone(),
            ),
            OracleCommand::Rho {
                dims,
                pairs,
                data_std,
                out,
            } => (
                Task::RhoStats {
                    dims: dims.clone(),
                    pairs: *pairs,
                    data_std: *data_std,
                },
                out.clone(),
            ),
        },
        Command::Diagnose(cmd) => match cmd {
            DiagnoseCommand::Norm {
                checkpoint,
                points,
                samples,
                svg,
                out,
            } => (
                Task::DiagnoseNorm {
                    checkpoint: checkpoint.clone(),
                    points: *points,
                    samples: *samples,
                    svg: *svg,
                },
                Some(out.clone()),
            ),
            DiagnoseCommand::Fld {
                trajectory,
                checkpoint,
                dataset,
                reference,
                reference_samples,
                out,
            } => {
                let dataset: Option<DatasetSpec> = dataset.as_deref().map(read_json).transpose()?;
                (
                    Task::DiagnoseFld {
                        trajectory: trajectory.clone(),
                        checkpoint: checkpoint.clone(),
                        dataset,
                        reference: *reference,
                        reference_samples: *reference_samples,
                    },
                    Some(out.clone()),
                )
            }
            DiagnoseCommand::Lag {
                checkpoint,
                nfe,
                schedule,
                particles,
                floor_nfe,
                method,
                svg,
                out,
            } => (
                Task::DiagnoseLag {
                    checkpoint: checkpoint.clone(),
                    nfe: *nfe,
                    schedule: *schedule,
                    particles: *particles,
                    floor_nfe: *floor_nfe,
                    method: *method,
                    svg: *svg,
                },
                Some(out.clone()),
            ),
        },
        Command::LagSweep {
            checkpoint,
            config,
            nfe,
            s_start,
            particles,
            reference,
            svg,
            out,
        } => {
            let mut sweep: SweepConfig = match config {
                Some(p) => read_json(p)?,
                None => SweepConfig::default(),
            };
            if let Some(v) = nfe {
                sweep.nfe = v.clone();
            }
            if let Some(v) = s_start {
                sweep.s_start = v.clone();
            }
            if let Some(v) = particles {
                sweep.particles = *v;
            }
            let task = Task::LagSweep {
                checkpoint: checkpoint.clone(),
                sweep,
                reference: *reference,
                svg: *svg,
            };
            (task, Some(out.clone()))
        }
        Command::ScheduleCalibrate {
            shape,
            area,
            s_end,
            out,
        } => (
            Task::ScheduleCalibrate {
                shape: *shape,
                area: *area,
                s_end: *s_end,
            },
            out.clone(),
        ),
        Command::Run { .. } | Command::Verify { .. } => return Ok(None),
    };
    Ok(Some(planned))
}

/// Exit status of a finished task.
fn status_code(status: &Status, verify: bool) -> i32 {
    match status {
        Status::Ok => 0,
        Status::Violated(msg) => {
            eprintln!("contract violated: {msg}");
            if verify {
                3
            } else {
                0
            }
        }
        Status::FailSoft(msg) => {
            eprintln!("caveat: {msg}");
            if verify {
                5
            } else {
                0
            }
        }
    }
}

fn print(text: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes());
    let _ = stdout.flush();
}

fn verify(seed: u64, ids: &[u8], out: Option<PathBuf>) -> Result<i32> {
    let mut pb = Playbook::new(seed);
    if let Some(dir) = out {
        pb = pb.with_output(dir);
    }
    let mut worst = Verdict::Pass;
    for &id in ids {
        let report = pb.run(id)?;
        println!("{report}");
        worst = match (worst, report.verdict) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::FailSoft, _) | (_, Verdict::FailSoft) => Verdict::FailSoft,
            _ => Verdict::Pass,
        };
    }
    Ok(worst.exit_code())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match &cli.command {
        Command::Verify {
            criterion,
            all,
            out,
        } => {
            let ids: Vec<u8> = if *all {
                CRITERIA.to_vec()
            } else {
                criterion.iter().copied().collect()
            };
            return verify(cli.seed, &ids, out.clone());
        }
        Command::Run { config } => {
            let text = fs::read_to_string(config)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", config.display())))?;
            let cfg = ExperimentConfig::from_json(&text)?;
            let result = run_experiment(&cfg)?;
            print(&result.output.stdout);
            return Ok(status_code(&result.output.status, cfg.verify));
        }
        _ => {}
    }
    let (task, out) = plan(&cli)?.expect("handled above");
    match out {
        Some(dir) => {
            let cfg = ExperimentConfig {
                name: task.kind().to_string(),
                seed: cli.seed,
                output_dir: dir,
                verify: cli.verify,
                task,
            };
            cfg.validate()?;
            let result = run_experiment(&cfg)?;
            print(&result.output.stdout);
            log::info!("artifacts written to {}", result.output_dir.display());
            Ok(status_code(&result.output.status, cli.verify))
        }
        None => {
            let output = execute(&task, cli.seed)?;
            print(&output.stdout);
            Ok(status_code(&output.status, cli.verify))
        }
    }
}

/// Applies `FLOWLAG_THREADS` to the global worker pool.
pub fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("FLOWLAG_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Error::Config(format!(
                "FLOWLAG_THREADS must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_line_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn sample_out_splits_into_dir_and_name() {
        let cli = Cli::parse_from([
            "flowlag",
            "sample",
            "--checkpoint",
            "c.flck",
            "--schedule",
            "linear:1.1:1.0",
            "--out",
            "runs/traj.bin",
        ]);
        let (task, dir) = plan(&cli).unwrap().unwrap();
        assert_eq!(dir, Some(PathBuf::from("runs")));
        match task {
            Task::Sample {
                file_name, solver, ..
            } => {
                assert_eq!(file_name, "traj.bin");
                assert_eq!(solver.schedule, ScaleSchedule::linear(1.1, 1.0).unwrap());
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
