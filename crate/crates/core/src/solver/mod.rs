//! ODE/SDE samplers with a time-dependent velocity multiplier.

mod schedule;
mod trajectory;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use schedule::{calibrate_s_start, numeric_area, ScaleSchedule, ScheduleShape};
pub use trajectory::{read_trajectory, write_trajectory, Trajectory};

use crate::error::{Error, Result};
use crate::field::{check_batch, VelocityField};
use crate::interpolant::{Interpolant, PathKind};
use crate::rng;

/// Time clamp for the velocity-to-score conversion.
pub const SCORE_T_MIN: f64 = 1e-3;

/// Particles per independently seeded shard.
const SHARD: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Euler,
    Heun,
    EulerMaruyama,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Method::Euler),
            "heun" => Ok(Method::Heun),
            "euler-maruyama" | "em" | "sde" => Ok(Method::EulerMaruyama),
            _ => Err(Error::Config(format!("unknown solver method {s:?}"))),
        }
    }
}

/// Diffusion weight of the SDE sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Diffusion {
    /// `w_t = sigma_t`.
    #[default]
    Sigma,
    /// `w_t = 0`: the SDE step degenerates to an Euler step.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default)]
    pub method: Method,
    /// Number of uniform steps from t = 0 to t = 1.
    pub nfe: usize,
    #[serde(default)]
    pub schedule: ScaleSchedule,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub diffusion: Diffusion,
    /// Path used to turn velocities into scores (SDE only).
    #[serde(default)]
    pub path: PathKind,
}

fn default_checkpoints() -> Vec<f64> {
    vec![0.2, 0.4, 0.6, 0.8, 1.0]
}

impl SolverSpec {
    pub fn new(method: Method, nfe: usize) -> Self {
        SolverSpec {
            method,
            nfe,
            schedule: ScaleSchedule::identity(),
            checkpoints: default_checkpoints(),
            diffusion: Diffusion::Sigma,
            path: PathKind::Linear,
        }
    }

    pub fn with_schedule(mut self, schedule: ScaleSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<f64>) -> Self {
        self.checkpoints = checkpoints;
        self
    }

    pub fn with_path(mut self, path: PathKind) -> Self {
        self.path = path;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.nfe == 0 {
            return Err(Error::Config("nfe must be at least 1".into()));
        }
        if self.checkpoints.is_empty() {
            return Err(Error::Config(
                "at least one checkpoint time is required".into(),
            ));
        }
        if self.checkpoints.iter().any(|t| !(0.0..=1.0).contains(t))
            || self.checkpoints.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::Config(format!(
                "checkpoint times must be sorted within [0, 1], got {:?}",
                self.checkpoints
            )));
        }
        self.schedule.validate()
    }

    /// `t_k = k / nfe`.
    pub fn grid(&self) -> Vec<f64> {
        (0..=self.nfe).map(|k| k as f64 / self.nfe as f64).collect()
    }

    /// Grid node nearest to each checkpoint time.
    pub fn checkpoint_nodes(&self) -> Vec<usize> {
        self.checkpoints
            .iter()
            .map(|&c| (c * self.nfe as f64).round() as usize)
            .collect()
    }
}

/// `gamma(t) v(x, t)`, the velocity every step actually applies.
pub fn scaled_velocity(
    field: &dyn VelocityField,
    schedule: &ScaleSchedule,
    x: &[f64],
    t: f64,
    out: &mut [f64],
) -> Result<()> {
    let gamma = schedule.gamma(t)?;
    field.eval_batch(x, t, out)?;
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        let d = field.dim();
        let row = i / d;
        return Err(Error::Numeric(format!(
            "non-finite velocity at t = {t}, particle {row}: state {:?}, velocity {:?}",
            &x[row * d..(row + 1) * d],
            &out[row * d..(row + 1) * d]
        )));
    }
    if gamma != 1.0 {
        out.iter_mut().for_each(|v| *v *= gamma);
    }
    Ok(())
}

fn check_step(field: &dyn VelocityField, x: &[f64], t: f64, dt: f64) -> Result<()> {
    check_batch(field.dim(), x)?;
    let end = t + dt;
    if !(0.0..=1.0).contains(&t) || !(-1e-12..=1.0 + 1e-12).contains(&end) {
        return Err(Error::Domain {
            what: "t + dt",
            value: end,
            domain: "[0, 1]",
        });
    }
    Ok(())
}

/// `x + dt gamma(t) v(x, t)`.
pub fn euler_step(
    field: &dyn VelocityField,
    schedule: &ScaleSchedule,
    x: &[f64],
    t: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    check_step(field, x, t, dt)?;
    let mut out = x.to_vec();
    let mut v = vec![0.0; x.len()];
    euler_in_place(field, schedule, &mut out, t, dt, &mut v)?;
    Ok(out)
}

fn euler_in_place(
    field: &dyn VelocityField,
    schedule: &ScaleSchedule,
    x: &mut [f64],
    t: f64,
    dt: f64,
    v: &mut [f64],
) -> Result<()> {
    scaled_velocity(field, schedule, x, t, v)?;
    for (xi, vi) in x.iter_mut().zip(v.iter()) {
        *xi += dt * vi;
    }
    Ok(())
}

/// Heun predictor-corrector; each stage is scaled by gamma at its own time.
pub fn heun_step(
    field: &dyn VelocityField,
    schedule: &ScaleSchedule,
    x: &[f64],
    t: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    check_step(field, x, t, dt)?;
    let mut out = x.to_vec();
    let mut buf = HeunBuffers::new(x.len());
    heun_in_place(field, schedule, &mut out, t, dt, &mut buf)?;
    Ok(out)
}

struct HeunBuffers {
    v0: Vec<f64>,
    v1: Vec<f64>,
    pred: Vec<f64>,
}

impl HeunBuffers {
    fn new(n: usize) -> Self {
        HeunBuffers {
            v0: vec![0.0; n],
            v1: vec![0.0; n],
            pred: vec![0.0; n],
        }
    }
}

fn heun_in_place(
    field: &dyn VelocityField,
    schedule: &ScaleSchedule,
    x: &mut [f64],
    t: f64,
    dt: f64,
    buf: &mut HeunBuffers,
) -> Result<()> {
    let t1 = (t + dt).min(1.0);
    scaled_velocity(field, schedule, x, t, &mut buf.v0)?;
    for ((p, xi), v) in buf.pred.iter_mut().zip(x.iter()).zip(&buf.v0) {
        *p = xi + dt * v;
    }
    scaled_velocity(field, schedule, &buf.pred, t1, &mut buf.v1)?;
    let half = 0.5 * dt;
    for ((xi, a), b) in x.iter_mut().zip(&buf.v0).zip(&buf.v1) {
        *xi += half * (a + b);
    }
    Ok(())
}

/// Euler-Maruyama step of the SDE sharing the marginals of the flow:
/// `dx = [v + w s] dt + sqrt(2 w) dW`, with the score `s` recovered from the
/// scaled velocity and `w` set by `diffusion`.
#[allow(clippy::too_many_arguments)]
pub fn em_step<R: Rng + ?Sized>(
    field: &dyn VelocityField,
    schedule: &ScaleSchedule,
    interp: &Interpolant,
    diffusion: Diffusion,
    x: &[f64],
    t: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_step(field, x, t, dt)?;
    let mut out = x.to_vec();
    let mut v = vec![0.0; x.len()];
    em_in_place(
        field, schedule, interp, diffusion, &mut out, t, dt, &mut v, rng,
    )?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn em_in_place<R: Rng + ?Sized>(
    field: &dyn VelocityField,
    schedule: &ScaleSchedule,
    interp: &Interpolant,
    diffusion: Diffusion,
    x: &mut [f64],
    t: f64,
    dt: f64,
    v: &mut [f64],
    rng: &mut R,
) -> Result<()> {
    scaled_velocity(field, schedule, x, t, v)?;
    let tc = t.clamp(SCORE_T_MIN, 1.0 - SCORE_T_MIN);
    let c = interp.coefficients(tc)?;
    let w = match diffusion {
        Diffusion::Sigma => c.sigma,
        Diffusion::Zero => 0.0,
    };
    if w == 0.0 {
        for (xi, vi) in x.iter_mut().zip(v.iter()) {
            *xi += dt * vi;
        }
        return Ok(());
    }
    // score = (alpha_dot x - alpha v) / (sigma (alpha sigma_dot - alpha_dot sigma))
    let denom = c.sigma * (c.alpha * c.sigma_dot - c.alpha_dot * c.sigma);
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Numeric(format!(
            "degenerate score conversion at t = {tc}"
        )));
    }
    let noise = (2.0 * w * dt).sqrt();
    for (xi, vi) in x.iter_mut().zip(v.iter()) {
        let score = (c.alpha_dot * *xi - c.alpha * vi) / denom;
        let z: f64 = StandardNormal.sample(rng);
        *xi += (vi + w * score) * dt + noise * z;
    }
    Ok(())
}

/// Integrates `n_particles` standard-normal draws from t = 0 to t = 1 on the
/// uniform grid and snapshots them at the checkpoint nodes.
///
/// Particles are split into fixed-size shards with their own streams, so the
/// result does not depend on the worker count.
pub fn integrate(
    field: &dyn VelocityField,
    spec: &SolverSpec,
    n_particles: usize,
    seed: u64,
) -> Result<Trajectory> {
    spec.validate()?;
    if n_particles == 0 {
        return Err(Error::Input("n_particles must be positive".into()));
    }
    let d = field.dim();
    let n_shards = n_particles.div_ceil(SHARD);
    let shards: Vec<Vec<Vec<f64>>> = (0..n_shards)
        .into_par_iter()
        .map(|k| {
            let rows = SHARD.min(n_particles - k * SHARD);
            let mut init = rng::shard(seed, "sample/x0", k as u64);
            let x0: Vec<f64> = (0..rows * d)
                .map(|_| StandardNormal.sample(&mut init))
                .collect();
            integrate_shard(field, spec, x0, rng::shard(seed, "sample/noise", k as u64))
        })
        .collect::<Result<_>>()?;
    let nodes = spec.checkpoint_nodes();
    let grid = spec.grid();
    let states = (0..nodes.len())
        .map(|c| shards.iter().flat_map(|s| s[c].iter().copied()).collect())
        .collect();
    Ok(Trajectory {
        dim: d,
        n_particles,
        seed,
        requested: spec.checkpoints.clone(),
        times: nodes.iter().map(|&k| grid[k]).collect(),
        states,
        spec: spec.clone(),
    })
}

/// Runs one shard, returning one snapshot per checkpoint.
fn integrate_shard(
    field: &dyn VelocityField,
    spec: &SolverSpec,
    mut x: Vec<f64>,
    mut noise: rng::LabRng,
) -> Result<Vec<Vec<f64>>> {
    let nodes = spec.checkpoint_nodes();
    let grid = spec.grid();
    let interp = Interpolant::new(spec.path);
    let mut snaps = Vec::with_capacity(nodes.len());
    let mut next = 0;
    let take = |k: usize, x: &[f64], snaps: &mut Vec<Vec<f64>>, next: &mut usize| {
        while *next < nodes.len() && nodes[*next] == k {
            snaps.push(x.to_vec());
            *next += 1;
        }
    };
    take(0, &x, &mut snaps, &mut next);
    let mut v = vec![0.0; x.len()];
    let mut heun = HeunBuffers::new(if spec.method == Method::Heun {
        x.len()
    } else {
        0
    });
    for k in 0..spec.nfe {
        let (t, dt) = (grid[k], grid[k + 1] - grid[k]);
        match spec.method {
            Method::Euler => euler_in_place(field, &spec.schedule, &mut x, t, dt, &mut v)?,
            Method::Heun => heun_in_place(field, &spec.schedule, &mut x, t, dt, &mut heun)?,
            Method::EulerMaruyama => em_in_place(
                field,
                &spec.schedule,
                &interp,
                spec.diffusion,
                &mut x,
                t,
                dt,
                &mut v,
                &mut noise,
            )?,
        }
        take(k + 1, &x, &mut snaps, &mut next);
    }
    Ok(snaps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ConstantField;
    use crate::oracle::{GaussianFlowSpec, OracleField};

    fn oracle(dim: usize, std: f64, kind: PathKind) -> OracleField {
        OracleField {
            spec: GaussianFlowSpec::new(dim, std).unwrap(),
            interp: Interpolant::new(kind),
        }
    }

    #[test]
    fn constant_field_steps() {
        let k = ConstantField {
            velocity: vec![2.0, -1.0],
        };
        let id = ScaleSchedule::identity();
        let x = [0.5, 0.5];
        assert_eq!(euler_step(&k, &id, &x, 0.2, 0.1).unwrap(), vec![0.7, 0.4]);
        assert_eq!(
            heun_step(&k, &id, &x, 0.2, 0.1).unwrap(),
            euler_step(&k, &id, &x, 0.2, 0.1).unwrap()
        );
        let zero = ConstantField {
            velocity: vec![0.0, 0.0],
        };
        assert_eq!(euler_step(&zero, &id, &x, 0.0, 0.5).unwrap(), x.to_vec());

        let s = ScaleSchedule::linear(1.1, 1.0).unwrap();
        let (t, dt) = (0.3, 0.2);
        let h = heun_step(&k, &s, &x, t, dt).unwrap();
        let g = 0.5 * (s.gamma(t).unwrap() + s.gamma(t + dt).unwrap());
        assert!((h[0] - (0.5 + 2.0 * dt * g)).abs() < 1e-15);
        assert!((h[1] - (0.5 - dt * g)).abs() < 1e-15);
    }

    #[test]
    fn one_euler_step_of_the_oracle_collapses_noise() {
        let f = oracle(3, 1.0, PathKind::Linear);
        let x = [0.3, -1.2, 2.0];
        let y = euler_step(&f, &ScaleSchedule::identity(), &x, 0.0, 1.0).unwrap();
        assert_eq!(y, vec![0.0; 3]);
        let spec = SolverSpec::new(Method::Euler, 1).with_checkpoints(vec![1.0]);
        let tr = integrate(&f, &spec, 5, 0).unwrap();
        assert!(tr.states[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn out_of_range_step_is_rejected() {
        let f = oracle(2, 1.0, PathKind::Linear);
        let id = ScaleSchedule::identity();
        assert!(euler_step(&f, &id, &[0.0, 0.0], 0.9, 0.2).is_err());
        assert!(euler_step(&f, &id, &[0.0, 0.0, 1.0], 0.1, 0.2).is_err());
    }

    #[test]
    fn non_finite_velocity_aborts_with_state() {
        let bad = ConstantField {
            velocity: vec![f64::NAN],
        };
        match euler_step(&bad, &ScaleSchedule::identity(), &[1.0], 0.0, 0.1) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("state")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_diffusion_is_euler() {
        let f = oracle(4, 2.0, PathKind::Gvp);
        let s = ScaleSchedule::linear(1.1, 1.0).unwrap();
        let interp = Interpolant::new(PathKind::Gvp);
        let x = [0.1, 0.2, -0.3, 1.0];
        let mut r = rng::stream(0, "em");
        let e = em_step(&f, &s, &interp, Diffusion::Zero, &x, 0.4, 0.05, &mut r).unwrap();
        assert_eq!(e, euler_step(&f, &s, &x, 0.4, 0.05).unwrap());
        let a = em_step(
            &f,
            &s,
            &interp,
            Diffusion::Sigma,
            &x,
            0.4,
            0.05,
            &mut rng::stream(1, "em"),
        )
        .unwrap();
        let b = em_step(
            &f,
            &s,
            &interp,
            Diffusion::Sigma,
            &x,
            0.4,
            0.05,
            &mut rng::stream(1, "em"),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identity_schedule_is_bitwise_uncorrected() {
        let f = oracle(8, 4.0, PathKind::Vp);
        for method in [Method::Euler, Method::Heun, Method::EulerMaruyama] {
            let base = SolverSpec::new(method, 12).with_path(PathKind::Vp);
            let ones = base
                .clone()
                .with_schedule(ScaleSchedule::linear(1.0, 1.0).unwrap());
            let a = integrate(&f, &base, 300, 5).unwrap();
            let b = integrate(&f, &ones, 300, 5).unwrap();
            assert_eq!(a.states, b.states, "{method:?}");
        }
    }

    #[test]
    fn checkpoints_snap_to_nearest_node() {
        let spec = SolverSpec::new(Method::Euler, 10).with_checkpoints(vec![0.0, 0.26, 0.5, 1.0]);
        assert_eq!(spec.checkpoint_nodes(), vec![0, 3, 5, 10]);
        let f = oracle(2, 1.0, PathKind::Linear);
        let tr = integrate(&f, &spec, 2000, 3).unwrap();
        assert_eq!(tr.states.len(), 4);
        assert!(tr.states.iter().all(|s| s.len() == 4000));
        assert!((tr.times[1] - 0.3).abs() < 1e-15);
        let unsorted = SolverSpec::new(Method::Euler, 10).with_checkpoints(vec![0.5, 0.2]);
        assert!(unsorted.validate().is_err());
    }

    /// Terminal error against the exact solution `x(1) = (s_1 / s_0) x0`.
    fn terminal_error(method: Method, nfe: usize) -> f64 {
        let f = oracle(1, 2.0, PathKind::Linear);
        let spec = SolverSpec::new(method, nfe).with_checkpoints(vec![1.0]);
        let mut x = vec![1.0];
        let grid = spec.grid();
        let id = ScaleSchedule::identity();
        for k in 0..nfe {
            let dt = grid[k + 1] - grid[k];
            x = match method {
                Method::Euler => euler_step(&f, &id, &x, grid[k], dt).unwrap(),
                _ => heun_step(&f, &id, &x, grid[k], dt).unwrap(),
            };
        }
        (x[0] - 2.0).abs()
    }

    #[test]
    fn convergence_orders() {
        for (method, order) in [(Method::Euler, 1.0), (Method::Heun, 2.0)] {
            let ns = [20usize, 40, 80, 160];
            let pts: Vec<(f64, f64)> = ns
                .iter()
                .map(|&n| ((1.0 / n as f64).ln(), terminal_error(method, n).ln()))
                .collect();
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / 4.0;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / 4.0;
            let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
                / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
            assert!((slope - order).abs() < 0.15, "{method:?}: slope {slope}");
        }
    }

    #[test]
    fn sde_reaches_target_variance() {
        for kind in PathKind::ALL {
            let std = 2.0;
            let f = oracle(8, std, kind);
            let spec = SolverSpec::new(Method::EulerMaruyama, 500)
                .with_path(kind)
                .with_checkpoints(vec![1.0]);
            let tr = integrate(&f, &spec, 4096, 11).unwrap();
            let x = &tr.states[0];
            let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
            assert!((var / (std * std) - 1.0).abs() < 0.05, "{kind}: {var}");
        }
    }
}
