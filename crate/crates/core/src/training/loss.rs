use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpolant::Interpolant;
use crate::nn::{ForwardCache, Mlp, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightShape {
    #[default]
    Linear,
    Cosine,
    QuadIn,
    QuadOut,
}

impl WeightShape {
    pub const ALL: [WeightShape; 4] = [
        WeightShape::Linear,
        WeightShape::Cosine,
        WeightShape::QuadIn,
        WeightShape::QuadOut,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WeightShape::Linear => "linear",
            WeightShape::Cosine => "cosine",
            WeightShape::QuadIn => "quad-in",
            WeightShape::QuadOut => "quad-out",
        }
    }

    /// Unit-amplitude profile; 1 at t = 0 and 0 at t = 1.
    pub fn profile(self, t: f64) -> f64 {
        match self {
            WeightShape::Linear => 1.0 - t,
            WeightShape::Cosine => 0.5 * (1.0 + (PI * t).cos()),
            WeightShape::QuadIn => 1.0 - t * t,
            WeightShape::QuadOut => (1.0 - t) * (1.0 - t),
        }
    }

    /// `integral_0^1 profile(t) dt`.
    pub fn area(self) -> f64 {
        match self {
            WeightShape::Linear | WeightShape::Cosine => 0.5,
            WeightShape::QuadIn => 2.0 / 3.0,
            WeightShape::QuadOut => 1.0 / 3.0,
        }
    }
}

impl fmt::Display for WeightShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WeightShape::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown weight shape {s:?}")))
    }
}

/// Time weight of the magnitude penalty. Every shape is rescaled so that its
/// integral over `[0, 1]` equals that of `lambda0 (1 - t)`, i.e. `lambda0 / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MafmWeightSchedule {
    pub shape: WeightShape,
    pub lambda0: f64,
}

impl Default for MafmWeightSchedule {
    fn default() -> Self {
        MafmWeightSchedule {
            shape: WeightShape::Linear,
            lambda0: 0.2,
        }
    }
}

impl MafmWeightSchedule {
    pub fn amplitude(&self) -> f64 {
        0.5 * self.lambda0 / self.shape.area()
    }

    pub fn weight(&self, t: f64) -> f64 {
        self.amplitude() * self.shape.profile(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda0 >= 0.0 && self.lambda0.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "lambda0 must be >= 0, got {}",
                self.lambda0
            )))
        }
    }
}

pub fn mafm_weight(t: f64, shape: WeightShape, lambda0: f64) -> Result<f64> {
    crate::error::check_unit_time(t)?;
    Ok(MafmWeightSchedule { shape, lambda0 }.weight(t))
}

/// What the predicted norm is pulled toward in the magnitude term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MagnitudeTarget {
    /// `||x1 - x0||`, independent of the path.
    #[default]
    PairDifference,
    /// `||v_target||` of the path in use.
    PathVelocity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Fm,
    Mafm {
        schedule: MafmWeightSchedule,
        target: MagnitudeTarget,
    },
}

/// Noise, data and times for one step; `x0`, `x1` are row-major `n x dim`.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub dim: usize,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub t: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn check(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let n = self.len() * self.dim;
        if self.x0.len() != n {
            return Err(Error::shape("batch noise", n, self.x0.len()));
        }
        if self.x1.len() != n {
            return Err(Error::shape("batch data", n, self.x1.len()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossParts {
    /// Mean squared velocity error.
    pub fm: f64,
    /// Mean weighted squared norm error (zero for plain FM).
    pub magnitude: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.fm + self.magnitude
    }
}

/// Reusable buffers for [`loss_and_grad`].
#[derive(Debug, Default)]
pub struct Workspace<T> {
    xt: Vec<T>,
    target: Vec<f64>,
    grad_out: Vec<T>,
    cache: ForwardCache<T>,
}

impl<T: Real> Workspace<T> {
    pub fn new() -> Self {
        Workspace {
            xt: Vec::new(),
            target: Vec::new(),
            grad_out: Vec::new(),
            cache: ForwardCache::new(),
        }
    }
}

/// Evaluates the objective on `batch` and writes `dL/dparams` into `grads`.
pub fn loss_and_grad<T: Real>(
    net: &Mlp<T>,
    interp: &Interpolant,
    objective: &Objective,
    batch: &Batch,
    ws: &mut Workspace<T>,
    grads: &mut [T],
) -> Result<LossParts> {
    let parts = forward_loss(net, interp, objective, batch, ws)?;
    net.backward(&mut ws.cache, &ws.grad_out, grads)?;
    Ok(parts)
}

/// Loss only; `ws` is left holding the output gradient.
pub fn forward_loss<T: Real>(
    net: &Mlp<T>,
    interp: &Interpolant,
    objective: &Objective,
    batch: &Batch,
    ws: &mut Workspace<T>,
) -> Result<LossParts> {
    batch.check()?;
    let d = batch.dim;
    if d != net.arch().dim {
        return Err(Error::shape("batch dim", net.arch().dim, d));
    }
    let n = batch.len();
    ws.xt.clear();
    ws.target.clear();
    for i in 0..n {
        let c = interp.coefficients(batch.t[i])?;
        let r = i * d..(i + 1) * d;
        for (&a, &b) in batch.x0[r.clone()].iter().zip(&batch.x1[r]) {
            ws.xt.push(T::of(c.alpha * b + c.sigma * a));
            ws.target.push(c.alpha_dot * b + c.sigma_dot * a);
        }
    }
    let v = net.forward_cached(&ws.xt, &batch.t, &mut ws.cache)?;
    let inv_n = 1.0 / n as f64;
    let mut parts = LossParts::default();
    ws.grad_out.clear();
    ws.grad_out.resize(n * d, T::zero());
    for i in 0..n {
        let r = i * d..(i + 1) * d;
        let vi = &v[r.clone()];
        let ui = &ws.target[r.clone()];
        let mut err = 0.0;
        let mut vnorm2 = 0.0;
        let mut unorm2 = 0.0;
        for (&a, &b) in vi.iter().zip(ui) {
            let a = a.to_f64().unwrap();
            err += (a - b) * (a - b);
            vnorm2 += a * a;
            unorm2 += b * b;
        }
        parts.fm += err * inv_n;
        let mut mag_coef = 0.0;
        if let Objective::Mafm { schedule, target } = objective {
            let lam = schedule.weight(batch.t[i]);
            let goal = match target {
                MagnitudeTarget::PairDifference => batch.x1[r.clone()]
                    .iter()
                    .zip(&batch.x0[r.clone()])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
                MagnitudeTarget::PathVelocity => unorm2.sqrt(),
            };
            let vnorm = vnorm2.sqrt();
            let gap = vnorm - goal;
            parts.magnitude += lam * gap * gap * inv_n;
            // d||v||/dv = v / ||v||, taken as 0 at the origin
            if vnorm > 0.0 {
                mag_coef = 2.0 * lam * gap / vnorm * inv_n;
            }
        }
        for ((g, &a), &b) in ws.grad_out[r].iter_mut().zip(vi).zip(ui) {
            let a = a.to_f64().unwrap();
            *g = T::of(2.0 * (a - b) * inv_n + mag_coef * a);
        }
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpolant::PathKind;
    use crate::nn::MlpArch;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal, Uniform};

    #[test]
    fn weights_vanish_at_one_and_share_area() {
        for shape in WeightShape::ALL {
            let s = MafmWeightSchedule {
                shape,
                lambda0: 0.2,
            };
            assert_eq!(s.weight(1.0), 0.0);
            let n = 20_000;
            let h = 1.0 / n as f64;
            let mut area = 0.0;
            for k in 0..=n {
                let w = if k == 0 || k == n {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                area += w * s.weight(k as f64 * h);
            }
            area *= h / 3.0;
            assert!((area - 0.1).abs() < 1e-6, "{shape}: {area}");
            assert!(s.weight(0.3) >= 0.0);
        }
        assert!((mafm_weight(0.0, WeightShape::Linear, 0.2).unwrap() - 0.2).abs() < 1e-15);
        let quad_in = MafmWeightSchedule {
            shape: WeightShape::QuadIn,
            lambda0: 0.2,
        };
        assert!((quad_in.amplitude() - 0.15).abs() < 1e-15);
        assert!("sideways".parse::<WeightShape>().is_err());
        assert!(mafm_weight(1.5, WeightShape::Cosine, 0.2).is_err());
    }

    fn batch(dim: usize, n: usize, seed: u64) -> Batch {
        let mut r = rng::stream(seed, "batch");
        let mut g = || -> f64 { StandardNormal.sample(&mut r) };
        let x0 = (0..n * dim).map(|_| g()).collect();
        let x1 = (0..n * dim).map(|_| g()).collect();
        let mut r = rng::stream(seed, "t");
        let u = Uniform::new(0.0, 1.0).unwrap();
        let t = (0..n).map(|_| u.sample(&mut r)).collect();
        Batch { dim, x0, x1, t }
    }

    fn tiny(dim: usize) -> Mlp<f64> {
        let mut arch = MlpArch::new(dim, vec![6, 5]);
        arch.embedding.n_freqs = 2;
        Mlp::new(arch, &mut rng::stream(1, "init")).unwrap()
    }

    fn mafm() -> Objective {
        Objective::Mafm {
            schedule: MafmWeightSchedule::default(),
            target: MagnitudeTarget::PairDifference,
        }
    }

    #[test]
    fn zero_net_gives_pair_distance() {
        let mut net = tiny(3);
        net.zero_output_layer();
        let b = batch(3, 7, 2);
        let mut ws = Workspace::new();
        let l = forward_loss(&net, &Interpolant::linear(), &Objective::Fm, &b, &mut ws).unwrap();
        let expect: f64 =
            b.x1.iter()
                .zip(&b.x0)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()
                / 7.0;
        assert!((l.fm - expect).abs() < 1e-12);
        assert_eq!(l.magnitude, 0.0);
    }

    #[test]
    fn losses_match_loop_oracle() {
        let net = tiny(2);
        let b = batch(2, 5, 3);
        for kind in PathKind::ALL {
            let interp = Interpolant::new(kind);
            let mut ws = Workspace::new();
            let l = forward_loss(&net, &interp, &mafm(), &b, &mut ws).unwrap();
            let (mut fm, mut mag) = (0.0, 0.0);
            for i in 0..5 {
                let x0 = &b.x0[2 * i..2 * i + 2];
                let x1 = &b.x1[2 * i..2 * i + 2];
                let xt = interp.sample_xt(x0, x1, b.t[i]).unwrap();
                let u = interp.target_velocity(x0, x1, b.t[i]).unwrap();
                let v = net.forward_one(&xt, b.t[i]).unwrap();
                fm += (v[0] - u[0]).powi(2) + (v[1] - u[1]).powi(2);
                let vn = v[0].hypot(v[1]);
                let dn = (x1[0] - x0[0]).hypot(x1[1] - x0[1]);
                mag += 0.2 * (1.0 - b.t[i]) * (vn - dn).powi(2);
            }
            assert!((l.fm - fm / 5.0).abs() < 1e-12, "{kind}");
            assert!((l.magnitude - mag / 5.0).abs() < 1e-12, "{kind}");
        }
    }

    #[test]
    fn mafm_equals_fm_at_t_one() {
        let net = tiny(3);
        let mut b = batch(3, 4, 5);
        b.t = vec![1.0; 4];
        let mut ws = Workspace::new();
        let interp = Interpolant::linear();
        let fm = forward_loss(&net, &interp, &Objective::Fm, &b, &mut ws).unwrap();
        let mf = forward_loss(&net, &interp, &mafm(), &b, &mut ws).unwrap();
        assert_eq!(fm.total(), mf.total());
    }

    #[test]
    fn empty_batch_is_rejected() {
        let net = tiny(2);
        let b = Batch {
            dim: 2,
            ..Default::default()
        };
        let mut ws = Workspace::new();
        assert!(matches!(
            forward_loss(&net, &Interpolant::linear(), &Objective::Fm, &b, &mut ws),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn zero_output_has_zero_norm_subgradient() {
        let mut net = tiny(2);
        net.zero_output_layer();
        let b = batch(2, 3, 9);
        let mut ws = Workspace::new();
        let interp = Interpolant::linear();
        forward_loss(&net, &interp, &mafm(), &b, &mut ws).unwrap();
        let with_mag = ws.grad_out.clone();
        forward_loss(&net, &interp, &Objective::Fm, &b, &mut ws).unwrap();
        assert_eq!(with_mag, ws.grad_out);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for objective in [Objective::Fm, mafm()] {
            let mut net = tiny(3);
            let b = batch(3, 6, 4);
            let interp = Interpolant::new(PathKind::Gvp);
            let mut ws = Workspace::new();
            let mut g = vec![0.0; net.n_params()];
            loss_and_grad(&net, &interp, &objective, &b, &mut ws, &mut g).unwrap();
            for k in 0..20 {
                let idx = (k * 104_729) % net.n_params();
                let orig = net.params()[idx];
                let h = 1e-6;
                net.params_mut()[idx] = orig + h;
                let up = forward_loss(&net, &interp, &objective, &b, &mut ws)
                    .unwrap()
                    .total();
                net.params_mut()[idx] = orig - h;
                let dn = forward_loss(&net, &interp, &objective, &b, &mut ws)
                    .unwrap()
                    .total();
                net.params_mut()[idx] = orig;
                let fd = (up - dn) / (2.0 * h);
                let rel = (fd - g[idx]).abs() / fd.abs().max(g[idx].abs()).max(1e-8);
                assert!(rel < 1e-4, "{objective:?} {idx}: {fd} vs {}", g[idx]);
            }
        }
    }
}
