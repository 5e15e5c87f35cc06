//! Datasets, FM/MAFM objectives and the training loop.

mod dataset;
mod loss;

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use dataset::{Dataset, DatasetSpec, MixtureComponent, Normalization};
pub use loss::{
    forward_loss, loss_and_grad, mafm_weight, Batch, LossParts, MafmWeightSchedule,
    MagnitudeTarget, Objective, WeightShape, Workspace,
};

use crate::diagnostics::{norm_profile, NormProfile};
use crate::error::{Error, Result};
use crate::interpolant::{Interpolant, PathKind};
use crate::nn::{
    Activation, AdamConfig, AnyAdam, AnyMlp, Checkpoint, CheckpointMeta, Mlp, MlpArch,
    OptimizerState, Precision, Real, TimeEmbedding,
};
use crate::rng::{self, LabRng, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Fm,
    Mafm,
}

/// Learning-rate profile over the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from `lr` at the first step down to 0 after the last.
    Cosine,
}

impl LrSchedule {
    pub fn lr(self, base: f64, step: u64, total: u64) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let frac = (step - 1) as f64 / total as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub embedding: TimeEmbedding,
}

fn default_hidden() -> Vec<usize> {
    vec![256; 3]
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            hidden: default_hidden(),
            activation: Activation::default(),
            embedding: TimeEmbedding::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    #[serde(default = "default_profile_points")]
    pub points: usize,
    #[serde(default = "default_profile_samples")]
    pub samples: usize,
}

fn default_profile_points() -> usize {
    21
}
fn default_profile_samples() -> usize {
    2048
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            points: default_profile_points(),
            samples: default_profile_samples(),
        }
    }
}

impl ProfileConfig {
    /// Uniform grid on `[0, 1]` with `points` nodes.
    pub fn grid(&self) -> Vec<f64> {
        let k = self.points.max(2) - 1;
        (0..=k).map(|i| i as f64 / k as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub path: PathKind,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default = "default_lambda0")]
    pub lambda0: f64,
    #[serde(default)]
    pub mafm_shape: WeightShape,
    #[serde(default)]
    pub magnitude_target: MagnitudeTarget,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub network: NetworkConfig,
    /// Loss rows are window means over this many steps.
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    /// Norm profiles every this many steps; 0 means only after the last step.
    #[serde(default)]
    pub profile_every: u64,
    #[serde(default)]
    pub profile: ProfileConfig,
}

fn default_batch() -> usize {
    256
}
fn default_steps() -> u64 {
    20_000
}
fn default_lr() -> f64 {
    1e-3
}
fn default_lambda0() -> f64 {
    0.2
}
fn default_log_every() -> u64 {
    100
}

impl TrainConfig {
    pub fn new(dataset: DatasetSpec) -> Self {
        TrainConfig {
            dataset,
            path: PathKind::default(),
            batch_size: default_batch(),
            steps: default_steps(),
            lr: default_lr(),
            lr_schedule: LrSchedule::default(),
            loss: LossKind::default(),
            lambda0: default_lambda0(),
            mafm_shape: WeightShape::default(),
            magnitude_target: MagnitudeTarget::default(),
            seed: 0,
            precision: Precision::default(),
            network: NetworkConfig::default(),
            log_every: default_log_every(),
            profile_every: 0,
            profile: ProfileConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size as u64),
            ("steps", self.steps),
            ("log_every", self.log_every),
            ("profile.points", self.profile.points as u64),
            ("profile.samples", self.profile.samples as u64),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        AdamConfig {
            lr: self.lr,
            ..Default::default()
        }
        .validate()?;
        self.schedule().validate()?;
        Dataset::new(self.dataset.clone())?;
        self.arch()?.validate()
    }

    pub fn schedule(&self) -> MafmWeightSchedule {
        MafmWeightSchedule {
            shape: self.mafm_shape,
            lambda0: self.lambda0,
        }
    }

    pub fn objective(&self) -> Objective {
        match self.loss {
            LossKind::Fm => Objective::Fm,
            LossKind::Mafm => Objective::Mafm {
                schedule: self.schedule(),
                target: self.magnitude_target,
            },
        }
    }

    pub fn arch(&self) -> Result<MlpArch> {
        let dim = Dataset::new(self.dataset.clone())?.dim();
        Ok(MlpArch {
            dim,
            hidden: self.network.hidden.clone(),
            activation: self.network.activation,
            embedding: self.network.embedding,
        })
    }
}

/// One line of `loss.csv`: window means ending at `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossRow {
    pub step: u64,
    pub fm_term: f64,
    pub magnitude_term: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub losses: Vec<LossRow>,
    pub profiles: Vec<(u64, NormProfile)>,
}

impl TrainOutcome {
    pub fn net(&self) -> &AnyMlp {
        &self.checkpoint.net
    }

    /// Mean of the logged FM term over the last `rows` rows.
    pub fn tail_fm(&self, rows: usize) -> f64 {
        let k = rows.min(self.losses.len()).max(1);
        let tail = &self.losses[self.losses.len() - k..];
        tail.iter().map(|r| r.fm_term).sum::<f64>() / tail.len() as f64
    }
}

/// Random streams for training. Noise and data are drawn from separate
/// streams and paired by position, so the coupling is independent.
struct Streams {
    init: LabRng,
    data: LabRng,
    noise: LabRng,
    time: LabRng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Streams {
            init: rng::stream(seed, "train/init"),
            data: rng::stream(seed, "train/data"),
            noise: rng::stream(seed, "train/noise"),
            time: rng::stream(seed, "train/time"),
        }
    }

    fn snapshot(&self) -> BTreeMap<String, RngState> {
        [
            ("init", &self.init),
            ("data", &self.data),
            ("noise", &self.noise),
            ("time", &self.time),
        ]
        .into_iter()
        .map(|(k, r)| (k.to_string(), RngState::capture(r)))
        .collect()
    }
}

pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    match config.precision {
        Precision::F32 => train_typed::<f32>(config),
        Precision::F64 => train_typed::<f64>(config),
    }
}

fn train_typed<T: Real>(config: &TrainConfig) -> Result<TrainOutcome>
where
    AnyMlp: From<Mlp<T>>,
    AnyAdam: From<OptimizerState<T>>,
{
    let dataset = Dataset::new(config.dataset.clone())?;
    let interp = Interpolant::new(config.path);
    let objective = config.objective();
    let mut streams = Streams::new(config.seed);
    let mut net = Mlp::<T>::new(config.arch()?, &mut streams.init)?;
    let adam = AdamConfig {
        lr: config.lr,
        ..Default::default()
    };
    let mut opt = OptimizerState::<T>::new(adam, net.n_params());
    let mut grads = vec![T::zero(); net.n_params()];
    let mut ws = Workspace::new();
    let d = dataset.dim();
    let n = config.batch_size;
    let mut batch = Batch {
        dim: d,
        x0: vec![0.0; n * d],
        x1: vec![0.0; n * d],
        t: vec![0.0; n],
    };
    let grid = config.profile.grid();
    let mut losses = Vec::new();
    let mut profiles = Vec::new();
    let mut window = LossParts::default();
    let mut window_len = 0u64;

    for step in 1..=config.steps {
        dataset.sample_into(&mut streams.data, &mut batch.x1);
        for v in &mut batch.x0 {
            *v = StandardNormal.sample(&mut streams.noise);
        }
        for t in &mut batch.t {
            *t = rand::RngExt::random::<f64>(&mut streams.time);
        }
        let parts = loss_and_grad(&net, &interp, &objective, &batch, &mut ws, &mut grads)?;
        if !parts.total().is_finite() {
            return Err(Error::Divergence {
                step,
                detail: format!(
                    "loss is {} (fm {}, magnitude {}); last logged row {:?}",
                    parts.total(),
                    parts.fm,
                    parts.magnitude,
                    losses.last()
                ),
            });
        }
        opt.config.lr = config.lr_schedule.lr(config.lr, step, config.steps);
        opt.step(net.params_mut(), &grads)?;
        if !net.all_finite() {
            let bad = net.params().iter().filter(|p| !p.is_finite()).count();
            return Err(Error::Divergence {
                step,
                detail: format!("{bad} non-finite parameters after the update"),
            });
        }
        window.fm += parts.fm;
        window.magnitude += parts.magnitude;
        window_len += 1;
        if step % config.log_every == 0 || step == config.steps {
            let k = window_len as f64;
            losses.push(LossRow {
                step,
                fm_term: window.fm / k,
                magnitude_term: window.magnitude / k,
                total: window.total() / k,
            });
            window = LossParts::default();
            window_len = 0;
            log::debug!("step {step}: loss {:.5}", losses.last().unwrap().total);
        }
        let profile_now = if config.profile_every > 0 {
            step % config.profile_every == 0 || step == config.steps
        } else {
            step == config.steps
        };
        if profile_now {
            let p = norm_profile(
                &net,
                &interp,
                &dataset,
                &grid,
                config.profile.samples,
                config.seed,
            )?;
            profiles.push((step, p));
        }
    }

    opt.config.lr = config.lr;
    let meta = CheckpointMeta {
        step: config.steps,
        seed: config.seed,
        rng: streams.snapshot(),
        config: serde_json::to_value(config)?,
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            net: net.into(),
            optimizer: Some(opt.into()),
            meta,
        },
        losses,
        profiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_decays_to_zero() {
        let s = LrSchedule::Cosine;
        assert_eq!(s.lr(1e-3, 1, 100), 1e-3);
        assert!((s.lr(1e-3, 51, 100) - 5e-4).abs() < 1e-15);
        assert!(s.lr(1e-3, 100, 100) < 1e-6);
        assert_eq!(LrSchedule::Constant.lr(1e-3, 77, 100), 1e-3);
    }

    #[test]
    fn config_defaults_and_strictness() {
        let cfg: TrainConfig =
            serde_json::from_str(r#"{"dataset":{"kind":"gaussian","dim":4,"std":1.0}}"#).unwrap();
        assert_eq!(cfg.batch_size, 256);
        assert_eq!(cfg.steps, 20_000);
        assert_eq!(cfg.lr, 1e-3);
        assert_eq!(cfg.lambda0, 0.2);
        assert_eq!(cfg.loss, LossKind::Fm);
        assert_eq!(cfg.network.hidden, vec![256; 3]);
        assert!(serde_json::from_str::<TrainConfig>(
            r#"{"dataset":{"kind":"gaussian","dim":4,"std":1.0},"stepz":3}"#
        )
        .is_err());
        let mut bad = cfg.clone();
        bad.batch_size = 0;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    fn small(seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(DatasetSpec::Gaussian { dim: 4, std: 1.0 });
        cfg.steps = 30;
        cfg.batch_size = 16;
        cfg.log_every = 10;
        cfg.seed = seed;
        cfg.network.hidden = vec![16];
        cfg.profile.samples = 1000;
        cfg.profile.points = 5;
        cfg
    }

    #[test]
    fn training_is_deterministic() {
        let a = train(&small(1)).unwrap();
        let b = train(&small(1)).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.checkpoint, b.checkpoint);
        let c = train(&small(2)).unwrap();
        assert_ne!(a.losses, c.losses);
        assert_eq!(a.losses.len(), 3);
        assert_eq!(a.profiles.len(), 1);
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = small(0);
        cfg.lr = 1e30;
        cfg.steps = 50;
        match train(&cfg) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {:?}", other.map(|o| o.losses)),
        }
    }
}
