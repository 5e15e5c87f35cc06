use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit_time, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleShape {
    Linear,
    Cosine,
    QuadIn,
    QuadOut,
    ConstantOne,
}

impl ScheduleShape {
    pub const ALL: [ScheduleShape; 5] = [
        ScheduleShape::Linear,
        ScheduleShape::Cosine,
        ScheduleShape::QuadIn,
        ScheduleShape::QuadOut,
        ScheduleShape::ConstantOne,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleShape::Linear => "linear",
            ScheduleShape::Cosine => "cosine",
            ScheduleShape::QuadIn => "quad-in",
            ScheduleShape::QuadOut => "quad-out",
            ScheduleShape::ConstantOne => "constant-one",
        }
    }

    /// Blend weight of `s_start`: 1 at t = 0, 0 at t = 1.
    pub fn weight(self, t: f64) -> f64 {
        match self {
            ScheduleShape::Linear => 1.0 - t,
            ScheduleShape::Cosine => 0.5 * (1.0 + (PI * t).cos()),
            // slow early decay
            ScheduleShape::QuadIn => 1.0 - t * t,
            // fast early decay
            ScheduleShape::QuadOut => (1.0 - t) * (1.0 - t),
            ScheduleShape::ConstantOne => 0.0,
        }
    }

    /// `integral_0^1 weight(t) dt`.
    pub fn weight_area(self) -> f64 {
        match self {
            ScheduleShape::Linear | ScheduleShape::Cosine => 0.5,
            ScheduleShape::QuadIn => 2.0 / 3.0,
            ScheduleShape::QuadOut => 1.0 / 3.0,
            ScheduleShape::ConstantOne => 0.0,
        }
    }
}

impl fmt::Display for ScheduleShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScheduleShape::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown schedule shape {s:?}")))
    }
}

/// Velocity multiplier `gamma(t) = s_end + (s_start - s_end) w(t)`.
///
/// Written as an offset from `s_end` so that `s_start == s_end == 1` gives
/// exactly 1.0 at every t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSchedule {
    pub shape: ScheduleShape,
    pub s_start: f64,
    pub s_end: f64,
}

impl Default for ScaleSchedule {
    fn default() -> Self {
        ScaleSchedule::identity()
    }
}

impl ScaleSchedule {
    pub fn new(shape: ScheduleShape, s_start: f64, s_end: f64) -> Result<Self> {
        let s = if shape == ScheduleShape::ConstantOne {
            ScaleSchedule::identity()
        } else {
            ScaleSchedule {
                shape,
                s_start,
                s_end,
            }
        };
        s.validate()?;
        Ok(s)
    }

    pub fn identity() -> Self {
        ScaleSchedule {
            shape: ScheduleShape::ConstantOne,
            s_start: 1.0,
            s_end: 1.0,
        }
    }

    pub fn linear(s_start: f64, s_end: f64) -> Result<Self> {
        Self::new(ScheduleShape::Linear, s_start, s_end)
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.s_start, self.s_end] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "schedule endpoints must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.shape == ScheduleShape::ConstantOne && (self.s_start != 1.0 || self.s_end != 1.0) {
            return Err(Error::Config(
                "constant-one schedule has endpoints 1, 1".into(),
            ));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.shape == ScheduleShape::ConstantOne || (self.s_start == 1.0 && self.s_end == 1.0)
    }

    pub fn gamma(&self, t: f64) -> Result<f64> {
        check_unit_time(t)?;
        Ok(self.gamma_unchecked(t))
    }

    pub(crate) fn gamma_unchecked(&self, t: f64) -> f64 {
        if self.shape == ScheduleShape::ConstantOne {
            return 1.0;
        }
        self.s_end + (self.s_start - self.s_end) * self.shape.weight(t)
    }

    /// `integral_0^1 gamma(t) dt`, closed form.
    pub fn area(&self) -> f64 {
        if self.shape == ScheduleShape::ConstantOne {
            return 1.0;
        }
        self.s_end + (self.s_start - self.s_end) * self.shape.weight_area()
    }

    /// Parses `shape:s_start:s_end`, or `constant-one` / `none`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        match parts.as_slice() {
            ["none"] | ["constant-one"] => Ok(ScaleSchedule::identity()),
            [shape, a, b] => {
                let num = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad schedule endpoint {s:?}")))
                };
                ScaleSchedule::new(shape.parse()?, num(a)?, num(b)?)
            }
            _ => Err(Error::Config(format!(
                "schedule must look like linear:1.1:1.0, got {text:?}"
            ))),
        }
    }
}

impl fmt::Display for ScaleSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.shape == ScheduleShape::ConstantOne {
            f.write_str("constant-one")
        } else {
            write!(f, "{}:{}:{}", self.shape, self.s_start, self.s_end)
        }
    }
}

impl FromStr for ScaleSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScaleSchedule::parse(s)
    }
}

/// The `s_start` giving `integral_0^1 gamma = target_area` for a fixed `s_end`.
pub fn calibrate_s_start(shape: ScheduleShape, s_end: f64, target_area: f64) -> Result<f64> {
    if shape == ScheduleShape::ConstantOne {
        return Err(Error::Config(
            "the constant-one schedule has no free endpoint".into(),
        ));
    }
    if !(s_end >= 0.0 && s_end.is_finite() && target_area.is_finite()) {
        return Err(Error::Config(format!(
            "calibration needs finite s_end >= 0 and area, got {s_end}, {target_area}"
        )));
    }
    let s_start = s_end + (target_area - s_end) / shape.weight_area();
    if s_start < 0.0 {
        return Err(Error::Config(format!(
            "area {target_area} needs s_start = {s_start} < 0 for {shape} with s_end = {s_end}"
        )));
    }
    Ok(s_start)
}

/// Composite Simpson quadrature of `gamma` with `2 * half_intervals` panels.
pub fn numeric_area(schedule: &ScaleSchedule, half_intervals: usize) -> f64 {
    let n = 2 * half_intervals.max(1);
    let h = 1.0 / n as f64;
    let mut acc = schedule.gamma_unchecked(0.0) + schedule.gamma_unchecked(1.0);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * schedule.gamma_unchecked(k as f64 * h);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_midpoint() {
        let s = ScaleSchedule::linear(1.1, 1.0).unwrap();
        assert!((s.gamma(0.5).unwrap() - 1.05).abs() < 1e-15);
        assert!((s.area() - 1.05).abs() < 1e-15);
    }

    #[test]
    fn table_calibrations() {
        let cases = [
            (ScheduleShape::Linear, 1.1),
            (ScheduleShape::QuadIn, 1.075),
            (ScheduleShape::QuadOut, 1.15),
            (ScheduleShape::Cosine, 1.1),
        ];
        for (shape, expect) in cases {
            let s = calibrate_s_start(shape, 1.0, 1.05).unwrap();
            assert!((s - expect).abs() < 1e-9, "{shape}: {s}");
            let sched = ScaleSchedule::new(shape, s, 1.0).unwrap();
            assert!((numeric_area(&sched, 500) - 1.05).abs() < 1e-9);
        }
        let quad_in = ScaleSchedule::new(ScheduleShape::QuadIn, 1.075, 1.0).unwrap();
        assert!((quad_in.area() - (1.0 + 0.075 * 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn infeasible_calibration_fails() {
        assert!(calibrate_s_start(ScheduleShape::Linear, 1.0, 0.2).is_err());
        assert!(calibrate_s_start(ScheduleShape::ConstantOne, 1.0, 1.0).is_err());
    }

    #[test]
    fn parse_and_display() {
        let s: ScaleSchedule = "quad-out:1.15:1.0".parse().unwrap();
        assert_eq!(s.shape, ScheduleShape::QuadOut);
        assert_eq!(s.to_string(), "quad-out:1.15:1");
        assert!(ScaleSchedule::parse("none").unwrap().is_identity());
        assert!(ScaleSchedule::parse("linear:1.1").is_err());
        assert!(ScaleSchedule::parse("wiggle:1:1").is_err());
        assert!(ScaleSchedule::parse("linear:-1:1").is_err());
        assert!(ScaleSchedule::identity().gamma(1.5).is_err());
    }

    proptest! {
        #[test]
        fn endpoints_and_identity(a in 0.0..3.0f64, b in 0.0..3.0f64, t in 0.0..=1.0f64) {
            for shape in ScheduleShape::ALL {
                if shape == ScheduleShape::ConstantOne {
                    prop_assert_eq!(ScaleSchedule::identity().gamma(t).unwrap(), 1.0);
                    continue;
                }
                let s = ScaleSchedule::new(shape, a, b).unwrap();
                prop_assert!((s.gamma(0.0).unwrap() - a).abs() < 1e-15);
                prop_assert!((s.gamma(1.0).unwrap() - b).abs() < 1e-15);
                let one = ScaleSchedule::new(shape, 1.0, 1.0).unwrap();
                prop_assert_eq!(one.gamma(t).unwrap(), 1.0);
            }
        }

        #[test]
        fn calibration_round_trip(area in 0.5..2.0f64, s_end in 0.5..1.5f64) {
            for shape in &ScheduleShape::ALL[..4] {
                if let Ok(s) = calibrate_s_start(*shape, s_end, area) {
                    let sched = ScaleSchedule::new(*shape, s, s_end).unwrap();
                    prop_assert!((sched.area() - area).abs() < 1e-12);
                    prop_assert!((numeric_area(&sched, 500) - area).abs() < 1e-9);
                }
            }
        }
    }
}
