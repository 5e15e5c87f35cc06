//! Probability paths `x_t = alpha(t) x1 + sigma(t) x0` from noise (t = 0) to
//! data (t = 1).

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit_time, Error, Result};

/// `beta_max - beta_min` of the SBDM-VP log-mean coefficient.
pub const VP_BETA_SPAN: f64 = 19.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    #[default]
    Linear,
    Vp,
    Gvp,
}

impl PathKind {
    pub const ALL: [PathKind; 3] = [PathKind::Linear, PathKind::Vp, PathKind::Gvp];

    pub fn name(self) -> &'static str {
        match self {
            PathKind::Linear => "linear",
            PathKind::Vp => "vp",
            PathKind::Gvp => "gvp",
        }
    }
}

impl fmt::Display for PathKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PathKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(PathKind::Linear),
            "vp" => Ok(PathKind::Vp),
            "gvp" => Ok(PathKind::Gvp),
            other => Err(Error::Config(format!(
                "unknown path {other:?}, expected linear | vp | gvp"
            ))),
        }
    }
}

/// Path coefficients at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub alpha: f64,
    pub sigma: f64,
    pub alpha_dot: f64,
    pub sigma_dot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interpolant {
    pub kind: PathKind,
}

impl Interpolant {
    pub fn new(kind: PathKind) -> Self {
        Interpolant { kind }
    }

    pub fn linear() -> Self {
        Self::new(PathKind::Linear)
    }

    pub fn coefficients(&self, t: f64) -> Result<Coefficients> {
        check_unit_time(t)?;
        Ok(self.coefficients_unchecked(t))
    }

    /// Same as [`Interpolant::coefficients`] for callers that already
    /// validated `t`.
    pub(crate) fn coefficients_unchecked(&self, t: f64) -> Coefficients {
        match self.kind {
            PathKind::Linear => Coefficients {
                alpha: t,
                sigma: 1.0 - t,
                alpha_dot: 1.0,
                sigma_dot: -1.0,
            },
            PathKind::Gvp => gvp(t),
            PathKind::Vp => vp(t),
        }
    }

    pub fn target_velocity(&self, x0: &[f64], x1: &[f64], t: f64) -> Result<Vec<f64>> {
        check_pair(x0, x1)?;
        let c = self.coefficients(t)?;
        Ok(x0
            .iter()
            .zip(x1)
            .map(|(&a, &b)| c.alpha_dot * b + c.sigma_dot * a)
            .collect())
    }

    pub fn sample_xt(&self, x0: &[f64], x1: &[f64], t: f64) -> Result<Vec<f64>> {
        check_pair(x0, x1)?;
        let c = self.coefficients(t)?;
        Ok(x0
            .iter()
            .zip(x1)
            .map(|(&a, &b)| c.alpha * b + c.sigma * a)
            .collect())
    }
}

fn check_pair(x0: &[f64], x1: &[f64]) -> Result<()> {
    if x0.is_empty() {
        return Err(Error::Input("empty state vector".into()));
    }
    if x0.len() != x1.len() {
        return Err(Error::shape("x0/x1 pair", x0.len(), x1.len()));
    }
    Ok(())
}

// alpha = sin(pi t / 2), sigma = cos(pi t / 2). Each half of [0, 1] is
// evaluated in the form whose argument vanishes at the nearer endpoint, so the
// boundary values come out exact.
fn gvp(t: f64) -> Coefficients {
    if t <= 0.5 {
        let (s, c) = (FRAC_PI_2 * t).sin_cos();
        Coefficients {
            alpha: s,
            sigma: c,
            alpha_dot: FRAC_PI_2 * c,
            sigma_dot: -FRAC_PI_2 * s,
        }
    } else {
        let (s, c) = (FRAC_PI_2 * (1.0 - t)).sin_cos();
        Coefficients {
            alpha: c,
            sigma: s,
            alpha_dot: FRAC_PI_2 * s,
            sigma_dot: -FRAC_PI_2 * c,
        }
    }
}

// SBDM-VP mean coefficient exp(-a u^2 / 4), u = 1 - t, pinned affinely so that
// alpha(0) = 0 and alpha(1) = 1; sigma = sqrt(1 - alpha^2).
fn vp(t: f64) -> Coefficients {
    let a = VP_BETA_SPAN;
    let u = 1.0 - t;
    let floor = (-0.25 * a).exp();
    let span = 1.0 - floor;
    let g = (-0.25 * a * u * u).exp();
    let alpha = (g - floor) / span;
    let alpha_dot = 0.5 * a * u * g / span;
    // 1 - alpha without cancellation near the data end.
    let one_minus_alpha = -(-0.25 * a * u * u).exp_m1() / span;
    let sigma = (one_minus_alpha * (1.0 + alpha)).sqrt();
    let sigma_dot = if sigma > 0.0 {
        -alpha * alpha_dot / sigma
    } else {
        -(0.5 * a / span).sqrt()
    };
    Coefficients {
        alpha,
        sigma,
        alpha_dot,
        sigma_dot,
    }
}
