//! Executable acceptance criteria.
//!
//! Each criterion is one function returning a [`CriterionReport`]. Trained
//! networks and lag sweeps are cached inside a [`Playbook`] so criteria that
//! share a model train it once per process.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};

use crate::diagnostics::{frechet_gaussian, split_half_floor, sqrtm_psd, MomentStats};
use crate::error::{Error, Result};
use crate::experiment::{lag_sweep, shell_point, SweepConfig, SweepReport, OVERSHOOT_CAVEAT};
use crate::field::VelocityField;
use crate::interpolant::{Interpolant, PathKind};
use crate::nn::{Mlp, MlpArch};
use crate::oracle::{self, GaussianFlowSpec, OracleField};
use crate::rng;
use crate::solver::{
    calibrate_s_start, integrate, numeric_area, scaled_velocity, Method, ScaleSchedule,
    ScheduleShape, SolverSpec, Trajectory,
};
use crate::training::{
    forward_loss, loss_and_grad, train, Batch, DatasetSpec, LossKind, LrSchedule,
    MafmWeightSchedule, MagnitudeTarget, Objective, TrainConfig, TrainOutcome, WeightShape,
    Workspace,
};

pub const CRITERIA: [u8; 12] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];

pub const PATHS: [PathKind; 3] = [PathKind::Linear, PathKind::Vp, PathKind::Gvp];

/// Data standard deviation of the lag-harness target. Variance-preserving
/// paths reduce to the identity map when the target is standard normal, so
/// the harness uses a wider target.
pub const LAG_DATA_STD: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Completed with a documented caveat.
    FailSoft,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 3,
            Verdict::FailSoft => 5,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::FailSoft => "FAIL-SOFT",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: u8,
    pub title: &'static str,
    pub verdict: Verdict,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} criterion {:>2} ({}) [{:.1}s]: {}",
            self.verdict,
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

pub fn title(id: u8) -> &'static str {
    match id {
        1 => "velocity deficit strictness",
        2 => "oracle boundary limits",
        3 => "cross-term closed form",
        4 => "rho concentration",
        5 => "schedule calibration",
        6 => "scale schedule identity and scaling",
        7 => "loss gradient checks",
        8 => "norm profile of a trained FM net",
        9 => "magnitude-aware training effect",
        10 => "Frechet distance correctness",
        11 => "integration-lag harness",
        12 => "interpolant-path robustness",
        _ => "unknown",
    }
}

/// Training recipe for the Gaussian nets used by the profile and lag
/// criteria.
pub fn gaussian_net_config(
    data_std: f64,
    path: PathKind,
    loss: LossKind,
    steps: u64,
    seed: u64,
) -> TrainConfig {
    let mut cfg = TrainConfig::new(DatasetSpec::Gaussian {
        dim: 64,
        std: data_std,
    });
    cfg.path = path;
    cfg.loss = loss;
    cfg.steps = steps;
    cfg.seed = seed;
    cfg.batch_size = 256;
    cfg.lr = 3e-3;
    cfg.lr_schedule = LrSchedule::Cosine;
    cfg.network.hidden = vec![128; 3];
    cfg.profile.points = 21;
    cfg.profile.samples = 4096;
    cfg
}

pub const PROFILE_STEPS: u64 = 20_000;
pub const LAG_STEPS: u64 = 30_000;

#[derive(Debug, Clone)]
pub struct LagOutcome {
    pub report: SweepReport,
    pub config: SweepConfig,
    /// Training plus sweep wall time.
    pub elapsed: Duration,
}

pub struct Playbook {
    seed: u64,
    out_dir: Option<PathBuf>,
    nets: Mutex<BTreeMap<String, (Arc<TrainOutcome>, Duration)>>,
    lags: Mutex<BTreeMap<&'static str, Arc<LagOutcome>>>,
}

impl Playbook {
    pub fn new(seed: u64) -> Self {
        Playbook {
            seed,
            out_dir: None,
            nets: Mutex::new(BTreeMap::new()),
            lags: Mutex::new(BTreeMap::new()),
        }
    }

    /// Directory receiving the CSV/SVG artifacts of each criterion.
    pub fn with_output(mut self, dir: PathBuf) -> Self {
        self.out_dir = Some(dir);
        self
    }

    pub fn run(&self, id: u8) -> Result<CriterionReport> {
        let start = Instant::now();
        let (verdict, detail) = match id {
            1 => self.jensen()?,
            2 => self.boundaries()?,
            3 => self.cross_term()?,
            4 => self.rho()?,
            5 => self.calibration()?,
            6 => self.ssc_identity()?,
            7 => self.gradients()?,
            8 => self.fm_profile()?,
            9 => self.mafm_effect()?,
            10 => self.frechet()?,
            11 => self.lag_harness()?,
            12 => self.path_robustness()?,
            _ => {
                return Err(Error::Config(format!(
                    "no criterion {id}; valid ids are 1-12"
                )))
            }
        };
        Ok(CriterionReport {
            id,
            title: title(id),
            verdict,
            detail,
            elapsed: start.elapsed(),
        })
    }

    fn save(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        if let Some(dir) = &self.out_dir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), contents)?;
        }
        Ok(())
    }

    /// Trains (or fetches) a net; also returns the time training took.
    pub fn net(&self, cfg: &TrainConfig) -> Result<(Arc<TrainOutcome>, Duration)> {
        let key = serde_json::to_string(cfg)?;
        if let Some(hit) = self.nets.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let start = Instant::now();
        let outcome = Arc::new(train(cfg)?);
        let entry = (outcome, start.elapsed());
        self.nets.lock().unwrap().insert(key, entry.clone());
        Ok(entry)
    }

    fn jensen(&self) -> Result<(Verdict, String)> {
        let start = Instant::now();
        let spec = GaussianFlowSpec::new(64, 1.0)?;
        let interp = Interpolant::linear();
        let mut worst = f64::INFINITY;
        let mut ok = true;
        let mut csv = String::from("t,learned_energy,target_energy,mc_stderr,z\n");
        for k in 1..=9u64 {
            let t = k as f64 / 10.0;
            let x = shell_point(&spec, &interp, t, 1.0, self.seed, k)?;
            let g = oracle::jensen_gap(
                &spec,
                &interp,
                &x,
                t,
                100_000,
                rng::child_seed(self.seed, "c1", k),
            )?;
            let z = g.gap() / g.mc_stderr;
            worst = worst.min(z);
            ok &= g.learned_energy < g.target_energy && g.resolved;
            let _ = writeln!(
                csv,
                "{t},{},{},{},{z}",
                g.learned_energy, g.target_energy, g.mc_stderr
            );
        }
        self.save("c01_jensen.csv", csv)?;
        let secs = start.elapsed().as_secs_f64();
        Ok((
            verdict(ok && secs < 10.0),
            format!("smallest gap {worst:.1} stderr over t = 0.1..0.9 (need > 3); {secs:.2}s (need < 10s)"),
        ))
    }

    fn boundaries(&self) -> Result<(Verdict, String)> {
        let mut worst = 0.0f64;
        let mut r = rng::stream(self.seed, "c2");
        for path in PATHS {
            let interp = Interpolant::new(path);
            for std in [0.5, 1.0, 4.0] {
                let spec = GaussianFlowSpec::new(32, std)?;
                let x: Vec<f64> = (0..32).map(|_| StandardNormal.sample(&mut r)).collect();
                for (t, coef) in [
                    (0.0, interp.coefficients(0.0)?.sigma_dot),
                    (1.0, interp.coefficients(1.0)?.alpha_dot),
                ] {
                    let v = oracle::oracle_velocity(&spec, &interp, &x, t)?;
                    let expect: Vec<f64> = x.iter().map(|xi| coef * xi).collect();
                    worst = worst.max(rel_err(&v, &expect));
                }
            }
        }
        Ok((
            verdict(worst <= 1e-12),
            format!("max relative error {worst:.2e} over 3 paths x 3 data scales (need <= 1e-12)"),
        ))
    }

    fn cross_term(&self) -> Result<(Verdict, String)> {
        let spec = GaussianFlowSpec::new(16, 1.0)?;
        let interp = Interpolant::linear();
        let mut ok = true;
        let mut worst_z = 0.0f64;
        let mut csv = String::from("t,closed_form,mc_mean,mc_stderr\n");
        for (k, t) in [0.25, 0.5, 0.75].into_iter().enumerate() {
            let x = shell_point(&spec, &interp, t, 1.25, self.seed, k as u64)?;
            let exact = oracle::cross_term_expectation(&spec, &interp, &x, t)?;
            let mc = oracle::cross_term_mc(
                &spec,
                &interp,
                &x,
                t,
                100_000,
                rng::child_seed(self.seed, "c3", k as u64),
            )?;
            let z = (exact - mc.mean).abs() / mc.stderr;
            worst_z = worst_z.max(z);
            ok &= z <= 3.0 && exact != 0.0;
            let _ = writeln!(csv, "{t},{exact},{},{}", mc.mean, mc.stderr);
        }
        let mut r = rng::stream(self.seed, "c3/boundary");
        let mut boundary_ok = true;
        for t in [0.0, 1.0] {
            for _ in 0..8 {
                let x: Vec<f64> = (0..16)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut r);
                        3.0 * z
                    })
                    .collect();
                boundary_ok &= oracle::cross_term_expectation(&spec, &interp, &x, t)? == 0.0;
            }
        }
        self.save("c03_cross_term.csv", csv)?;
        Ok((
            verdict(ok && boundary_ok),
            format!(
                "max |closed - MC| = {worst_z:.2} stderr (need <= 3); exactly 0 at t in {{0, 1}}: {boundary_ok}"
            ),
        ))
    }

    fn rho(&self) -> Result<(Verdict, String)> {
        let start = Instant::now();
        let big = oracle::rho_statistics(4096, 50_000, 1.0, self.seed)?;
        let small = oracle::rho_statistics(1024, 50_000, 1.0, self.seed)?;
        let secs = start.elapsed().as_secs_f64();
        let ratio = small.mean / big.mean;
        let checks = [
            (0.0115..=0.0135).contains(&big.mean),
            big.p99 < 0.04,
            big.max < 0.075,
            (1.8..=2.2).contains(&ratio),
            secs < 30.0,
        ];
        self.save(
            "c04_rho.csv",
            format!(
                "D,mean_rho,p99_rho,max_rho\n1024,{},{},{}\n4096,{},{},{}\n",
                small.mean, small.p99, small.max, big.mean, big.p99, big.max
            ),
        )?;
        Ok((
            verdict(checks.iter().all(|&c| c)),
            format!(
                "D=4096: mean {:.5} (need [0.0115, 0.0135]), p99 {:.5} (need < 0.04), max {:.5} (need < 0.075); \
                 mean(1024)/mean(4096) = {ratio:.3} (need 2 +- 10%); {secs:.1}s (need < 30s)",
                big.mean, big.p99, big.max
            ),
        ))
    }

    fn calibration(&self) -> Result<(Verdict, String)> {
        let mut worst_exact = 0.0f64;
        let mut worst_quad = 0.0f64;
        let linear = ScaleSchedule::linear(1.1, 1.0)?;
        worst_exact = worst_exact.max((linear.area() - 1.05).abs());
        worst_quad = worst_quad.max((numeric_area(&linear, 500) - 1.05).abs());
        for (shape, expect) in [
            (ScheduleShape::QuadIn, 1.075),
            (ScheduleShape::QuadOut, 1.15),
            (ScheduleShape::Cosine, 1.10),
        ] {
            let s = calibrate_s_start(shape, 1.0, 1.05)?;
            worst_exact = worst_exact.max((s - expect).abs());
            let sched = ScaleSchedule::new(shape, s, 1.0)?;
            worst_quad = worst_quad.max((numeric_area(&sched, 500) - 1.05).abs());
        }
        Ok((
            verdict(worst_exact <= 1e-9 && worst_quad <= 1e-6),
            format!(
                "closed-form error {worst_exact:.1e} (need <= 1e-9), quadrature area error {worst_quad:.1e} (need <= 1e-6)"
            ),
        ))
    }

    fn ssc_identity(&self) -> Result<(Verdict, String)> {
        let mut lines = Vec::new();
        let mut ok = true;
        for path in PATHS {
            let (pass, detail) = ssc_identity_check(path, self.seed)?;
            ok &= pass;
            lines.push(format!("{}: {detail}", path.name()));
        }
        Ok((verdict(ok), lines.join("; ")))
    }

    fn gradients(&self) -> Result<(Verdict, String)> {
        let mut r = rng::stream(self.seed, "c7");
        let arch = MlpArch::new(6, vec![24, 24]);
        let mut net = Mlp::<f64>::new(arch, &mut r)?;
        let n = 12;
        let d = 6;
        let mut normal =
            |k: usize| -> Vec<f64> { (0..k).map(|_| StandardNormal.sample(&mut r)).collect() };
        let x0 = normal(n * d);
        let x1 = normal(n * d);
        let mut r = rng::stream(self.seed, "c7/t");
        let t: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let batch = Batch { dim: d, x0, x1, t };
        let interp = Interpolant::linear();
        let objectives = [
            ("fm", Objective::Fm),
            (
                "mafm",
                Objective::Mafm {
                    schedule: MafmWeightSchedule {
                        shape: WeightShape::Linear,
                        lambda0: 0.2,
                    },
                    target: MagnitudeTarget::PairDifference,
                },
            ),
        ];
        let mut ws = Workspace::new();
        let mut worst = 0.0f64;
        let mut probes = 0;
        for (_, obj) in &objectives {
            let mut g = vec![0.0; net.n_params()];
            loss_and_grad(&net, &interp, obj, &batch, &mut ws, &mut g)?;
            for _ in 0..20 {
                let idx = r.random_range(0..net.n_params());
                let orig = net.params()[idx];
                let h = 1e-6;
                net.params_mut()[idx] = orig + h;
                let up = forward_loss(&net, &interp, obj, &batch, &mut ws)?.total();
                net.params_mut()[idx] = orig - h;
                let dn = forward_loss(&net, &interp, obj, &batch, &mut ws)?.total();
                net.params_mut()[idx] = orig;
                let fd = (up - dn) / (2.0 * h);
                let rel = (fd - g[idx]).abs() / fd.abs().max(g[idx].abs()).max(1e-8);
                worst = worst.max(rel);
                probes += 1;
            }
        }
        Ok((
            verdict(worst < 1e-4),
            format!("{probes} probes over FM and MAFM (lambda0 = 0.2), max relative error {worst:.2e} (need < 1e-4)"),
        ))
    }

    fn profile_nets(&self) -> Result<(Arc<TrainOutcome>, Arc<TrainOutcome>)> {
        let fm = self
            .net(&gaussian_net_config(
                1.0,
                PathKind::Linear,
                LossKind::Fm,
                PROFILE_STEPS,
                self.seed,
            ))?
            .0;
        let mafm = self
            .net(&gaussian_net_config(
                1.0,
                PathKind::Linear,
                LossKind::Mafm,
                PROFILE_STEPS,
                self.seed,
            ))?
            .0;
        Ok((fm, mafm))
    }

    fn fm_profile(&self) -> Result<(Verdict, String)> {
        let fm = self
            .net(&gaussian_net_config(
                1.0,
                PathKind::Linear,
                LossKind::Fm,
                PROFILE_STEPS,
                self.seed,
            ))?
            .0;
        let (_, p) = fm.profiles.last().expect("final profile");
        self.save("c08_norm_profile_fm.csv", p.to_csv()?)?;
        let d = 64.0f64;
        let bound = (2.0 * d).sqrt() * (1.0 - 0.02);
        let n = p.times.len();
        let interior_max = p.mean[1..n - 1].iter().copied().fold(f64::MIN, f64::max);
        let n01 = p.at(0.1);
        let n09 = p.at(0.9);
        let r0 = p.mean[0] / d.sqrt();
        let r1 = p.mean[n - 1] / d.sqrt();
        let checks = [
            interior_max < bound,
            n09 < n01,
            (0.85..=1.15).contains(&r0),
            (0.85..=1.15).contains(&r1),
        ];
        Ok((
            verdict(checks.iter().all(|&c| c)),
            format!(
                "max interior norm {interior_max:.3} (need < {bound:.3}); norm(0.9) = {n09:.3} vs norm(0.1) = {n01:.3} \
                 (need <); endpoint ratios {r0:.3}, {r1:.3} (need [0.85, 1.15])"
            ),
        ))
    }

    fn mafm_effect(&self) -> Result<(Verdict, String)> {
        let (fm, mafm) = self.profile_nets()?;
        let pf = &fm.profiles.last().expect("final profile").1;
        let pm = &mafm.profiles.last().expect("final profile").1;
        self.save("c09_norm_profile_mafm.csv", pm.to_csv()?)?;
        let early_fm = pf.mean_over(0.0, 0.3);
        let early_mafm = pm.mean_over(0.0, 0.3);
        // window means over the last 2000 steps
        let loss_fm = fm.tail_fm(20);
        let loss_mafm = mafm.tail_fm(20);
        let rel = (loss_mafm - loss_fm).abs() / loss_fm;
        Ok((
            verdict(early_mafm > early_fm && rel <= 0.10),
            format!(
                "mean norm on [0, 0.3]: MAFM {early_mafm:.4} vs FM {early_fm:.4} (need >); FM term {loss_mafm:.3} vs \
                 {loss_fm:.3}, {:.1}% apart (need <= 10%)",
                100.0 * rel
            ),
        ))
    }

    fn frechet(&self) -> Result<(Verdict, String)> {
        let a = MomentStats::exact(vec![1.5], vec![4.0])?;
        let b = MomentStats::exact(vec![-0.5], vec![0.25])?;
        let one_d = (frechet_gaussian(&a, &b)? - 6.25).abs();

        let mut r = rng::stream(self.seed, "c10");
        let d = 6;
        let (mut m1, mut m2, mut v1, mut v2): (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) =
            (vec![], vec![], vec![], vec![]);
        for _ in 0..d {
            m1.push(StandardNormal.sample(&mut r));
            m2.push(StandardNormal.sample(&mut r));
            v1.push(0.1 + 3.0 * r.random::<f64>());
            v2.push(0.1 + 3.0 * r.random::<f64>());
        }
        let diag = |v: &[f64]| {
            let mut c = vec![0.0; d * d];
            for i in 0..d {
                c[i * d + i] = v[i];
            }
            c
        };
        let expect: f64 = (0..d)
            .map(|i| (m1[i] - m2[i]).powi(2) + (v1[i].sqrt() - v2[i].sqrt()).powi(2))
            .sum();
        let got = frechet_gaussian(
            &MomentStats::exact(m1.clone(), diag(&v1))?,
            &MomentStats::exact(m2.clone(), diag(&v2))?,
        )?;
        let diag_err = (got - expect).abs();

        let n = 48;
        let g = nalgebra::DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut r));
        let m = &g * g.transpose() + nalgebra::DMatrix::<f64>::identity(n, n);
        let s = sqrtm_psd(&m)?;
        let recon = (&s * &s - &m).norm() / m.norm();

        let x: Vec<f64> = (0..16_384 * 64)
            .map(|_| StandardNormal.sample(&mut r))
            .collect();
        let floor = split_half_floor(&x, 64)?;
        self.save("c10_frechet.csv", format!("check,value\none_d_error,{one_d}\ndiagonal_error,{diag_err}\nsqrtm_relative_residual,{recon}\nsplit_half_floor_n16384_d64,{floor}\n"))?;
        Ok((
            verdict(one_d <= 1e-9 && diag_err <= 1e-9 && recon <= 1e-8 && floor.is_finite() && floor > 0.0),
            format!(
                "1-D error {one_d:.1e}, diagonal error {diag_err:.1e} (need <= 1e-9); sqrtm residual {recon:.1e} \
                 (need <= 1e-8); split-half floor at n = 16384, D = 64: {floor:.4}"
            ),
        ))
    }

    /// Trains the lag net for `path` and runs the sweep, once per process.
    pub fn lag(&self, path: PathKind) -> Result<Arc<LagOutcome>> {
        if let Some(hit) = self.lags.lock().unwrap().get(path.name()) {
            return Ok(hit.clone());
        }
        let cfg = gaussian_net_config(LAG_DATA_STD, path, LossKind::Fm, LAG_STEPS, self.seed);
        let (net, train_time) = self.net(&cfg)?;
        let start = Instant::now();
        let config = SweepConfig::default();
        let reference = MomentStats::isotropic(64, LAG_DATA_STD);
        let report = lag_sweep(net.net(), &config, &reference, "N(0, 16 I)", self.seed)?;
        let outcome = Arc::new(LagOutcome {
            report,
            config,
            elapsed: train_time + start.elapsed(),
        });
        self.save(
            &format!("c11_lag_table_{}.csv", path.name()),
            outcome.report.table_csv()?,
        )?;
        self.save(
            &format!("c11_lag_summary_{}.csv", path.name()),
            outcome.report.summary_csv()?,
        )?;
        self.save(
            &format!("c11_lag_{}.svg", path.name()),
            outcome.report.chart(),
        )?;
        self.lags
            .lock()
            .unwrap()
            .insert(path.name(), outcome.clone());
        Ok(outcome)
    }

    fn lag_harness(&self) -> Result<(Verdict, String)> {
        let lag = self.lag(PathKind::Linear)?;
        let s = &lag.report.summary[0];
        let a = s.lag_ratio >= 5.0;
        let complete = lag.report.complete(&lag.config);
        let b = complete && s.best <= s.baseline;
        let secs = lag.elapsed.as_secs_f64();
        let timely = secs < 300.0;
        let mut detail = format!(
            "(a) NFE=10 terminal FLD {:.3} vs NFE={} floor {:.3}: ratio {:.2} (need >= 5); (b) sweep complete: {complete}, \
             best s_start {} gives {:.3} (need <= baseline); end-to-end {secs:.0}s (need < 300s)",
            s.baseline, lag.report.floor_nfe, s.floor, s.lag_ratio, s.best_s_start, s.best
        );
        let v = if !(a && b && timely) {
            Verdict::Fail
        } else if !s.improved {
            let _ = write!(detail, "; caveat: {OVERSHOOT_CAVEAT}");
            Verdict::FailSoft
        } else {
            Verdict::Pass
        };
        Ok((v, detail))
    }

    fn path_robustness(&self) -> Result<(Verdict, String)> {
        let mut ok = true;
        let mut parts = Vec::new();
        for path in PATHS {
            let (ident, _) = ssc_identity_check(path, self.seed)?;
            let lag = self.lag(path)?;
            let s = &lag.report.summary[0];
            let pass = ident && s.lag_ratio >= 5.0;
            ok &= pass;
            parts.push(format!(
                "{}: identity {}, lag ratio {:.2}",
                path.name(),
                if ident { "ok" } else { "broken" },
                s.lag_ratio
            ));
        }
        Ok((
            verdict(ok),
            format!(
                "{} (need identity ok and ratio >= 5 on every path)",
                parts.join("; ")
            ),
        ))
    }
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn rel_err(got: &[f64], expect: &[f64]) -> f64 {
    let diff = got
        .iter()
        .zip(expect)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    if diff == 0.0 {
        return 0.0;
    }
    diff / expect.iter().map(|b| b * b).sum::<f64>().sqrt()
}

fn same_bits(a: &Trajectory, b: &Trajectory) -> bool {
    a.times == b.times
        && a.states.len() == b.states.len()
        && a.states.iter().zip(&b.states).all(|(x, y)| {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
        })
}

/// Plain Euler integration of one shard with no velocity multiplier at all.
fn reference_euler(field: &dyn VelocityField, nfe: usize, n: usize, seed: u64) -> Result<Vec<f64>> {
    let d = field.dim();
    let mut init = rng::shard(seed, "sample/x0", 0);
    let mut x: Vec<f64> = (0..n * d)
        .map(|_| StandardNormal.sample(&mut init))
        .collect();
    let mut v = vec![0.0; x.len()];
    for k in 0..nfe {
        let t = k as f64 / nfe as f64;
        let dt = (k + 1) as f64 / nfe as f64 - t;
        field.eval_batch(&x, t, &mut v)?;
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += dt * vi;
        }
    }
    Ok(x)
}

/// Unit-endpoint schedules must reproduce the uncorrected solver bit for bit,
/// and a non-trivial schedule must scale every velocity by exactly gamma(t).
pub fn ssc_identity_check(path: PathKind, seed: u64) -> Result<(bool, String)> {
    let oracle = OracleField::new(
        GaussianFlowSpec::new(64, LAG_DATA_STD)?,
        Interpolant::new(path),
    );
    let untrained = Mlp::<f64>::new(
        MlpArch::new(64, vec![32, 32]),
        &mut rng::stream(seed, "c6/net"),
    )?;
    let fields: [&dyn VelocityField; 2] = [&oracle, &untrained];
    let n = 512;
    let mut identical = true;
    for field in fields {
        // one shard, so the plain loop sees the same initial draws
        let plain = reference_euler(field, 10, n, seed)?;
        for method in [Method::Euler, Method::Heun, Method::EulerMaruyama] {
            let base = SolverSpec::new(method, 10).with_path(path);
            let reference = integrate(field, &base, n, seed)?;
            if method == Method::Euler {
                identical &= reference
                    .terminal()
                    .iter()
                    .zip(&plain)
                    .all(|(a, b)| a.to_bits() == b.to_bits());
            }
            for shape in [
                ScheduleShape::Linear,
                ScheduleShape::Cosine,
                ScheduleShape::QuadIn,
                ScheduleShape::QuadOut,
            ] {
                let spec = base
                    .clone()
                    .with_schedule(ScaleSchedule::new(shape, 1.0, 1.0)?);
                identical &= same_bits(&reference, &integrate(field, &spec, n, seed)?);
            }
        }
    }

    let sched = ScaleSchedule::linear(1.2, 1.0)?;
    let mut r = rng::stream(seed, "c6/x");
    let x: Vec<f64> = (0..64 * 16)
        .map(|_| StandardNormal.sample(&mut r))
        .collect();
    let mut scaled_exact = true;
    let mut worst_norm = 0.0f64;
    for k in 0..=10 {
        let t = k as f64 / 10.0;
        let gamma = sched.gamma(t)?;
        let plain = oracle.eval(&x, t)?;
        let mut out = vec![0.0; x.len()];
        scaled_velocity(&oracle, &sched, &x, t, &mut out)?;
        scaled_exact &= out
            .iter()
            .zip(&plain)
            .all(|(o, p)| o.to_bits() == (gamma * p).to_bits());
        for (o, p) in out.chunks(64).zip(plain.chunks(64)) {
            let no = o.iter().map(|v| v * v).sum::<f64>().sqrt();
            let np = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if np > 0.0 {
                worst_norm = worst_norm.max((no - gamma * np).abs() / (gamma * np));
            }
        }
    }
    let ok = identical && scaled_exact && worst_norm <= 1e-15;
    Ok((
        ok,
        format!(
            "unit schedules bitwise identical: {identical}; components equal gamma*v bitwise: {scaled_exact}; \
             norm ratio error {worst_norm:.1e}"
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_criteria_pass() {
        let pb = Playbook::new(0);
        for id in [2, 5, 6, 7, 10] {
            let r = pb.run(id).unwrap();
            assert_eq!(r.verdict, Verdict::Pass, "{r}");
        }
        assert!(pb.run(13).is_err());
    }

    #[test]
    fn report_line_format() {
        let r = CriterionReport {
            id: 5,
            title: title(5),
            verdict: Verdict::Pass,
            detail: "ok".into(),
            elapsed: Duration::from_millis(1500),
        };
        assert_eq!(
            r.to_string(),
            "PASS criterion  5 (schedule calibration) [1.5s]: ok"
        );
    }
}
