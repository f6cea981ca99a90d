//! Elliptical gait family and joint-angle trajectories.
//!
//! `u(t) = wm (sin wt, sin(wt + phi))` has its long axis on the diagonal of the
//! shape plane; the path is then rotated so the long axis makes angle `theta`
//! with the `w1` axis. `phi = 0` is a standing wave (a segment), `phi = pi/2` a
//! traveling wave (a circle). Positive `omega` traverses the path clockwise.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::chain::{shape_to_joints, JointVector, RobotSpec, ShapePoint};
use crate::error::{OalError, Result};
use crate::se2::rotation;

pub const DEFAULT_SAMPLES_PER_CYCLE: usize = 128;
pub const MIN_SAMPLES_PER_CYCLE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitSpec {
    pub wm: f64,
    pub phi: f64,
    pub theta: f64,
    pub omega: f64,
    pub samples_per_cycle: usize,
    /// Center of the loop in shape space.
    #[serde(default)]
    pub center: [f64; 2],
}

impl GaitSpec {
    pub fn new(phi: f64, theta: f64, wm: f64) -> Self {
        Self {
            wm,
            phi,
            theta,
            omega: 2.0 * PI,
            samples_per_cycle: DEFAULT_SAMPLES_PER_CYCLE,
            center: [0.0, 0.0],
        }
    }

    pub fn with_center(self, w1: f64, w2: f64) -> Self {
        Self {
            center: [w1, w2],
            ..self
        }
    }

    pub fn with_samples(self, samples_per_cycle: usize) -> Self {
        Self {
            samples_per_cycle,
            ..self
        }
    }

    pub fn with_omega(self, omega: f64) -> Self {
        Self { omega, ..self }
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega.abs()
    }

    /// Checks the family's own ranges; `theta_m` bounds the amplitude when given.
    pub fn validate(&self, theta_m: Option<f64>) -> Result<()> {
        let bad = |m: String| Err(OalError::InvalidConfig(m));
        if !(self.wm.is_finite() && self.wm >= 0.0) {
            return bad(format!("wm must be non-negative, got {}", self.wm));
        }
        if let Some(tm) = theta_m {
            if self.wm > tm + 1e-12 {
                return bad(format!("wm = {} exceeds the joint limit {tm}", self.wm));
            }
        }
        if !(self.phi >= -1e-12 && self.phi <= FRAC_PI_2 + 1e-12) {
            return bad(format!("phi must lie in [0, pi/2], got {}", self.phi));
        }
        if !(self.theta.is_finite() && self.center.iter().all(|c| c.is_finite())) {
            return bad("theta and center must be finite".into());
        }
        if !(self.omega.is_finite() && self.omega != 0.0) {
            return bad(format!("omega must be finite and nonzero, got {}", self.omega));
        }
        if self.samples_per_cycle < MIN_SAMPLES_PER_CYCLE {
            return bad(format!(
                "samples_per_cycle must be >= {MIN_SAMPLES_PER_CYCLE}, got {}",
                self.samples_per_cycle
            ));
        }
        Ok(())
    }

    /// Shape and shape velocity at time `t`.
    pub fn state(&self, t: f64) -> (ShapePoint, Vector2<f64>) {
        let s = self.omega * t;
        let u = self.wm * Vector2::new(s.sin(), (s + self.phi).sin());
        let du = self.wm * self.omega * Vector2::new(s.cos(), (s + self.phi).cos());
        let r = rotation(self.theta - FRAC_PI_4);
        let c = Vector2::new(self.center[0], self.center[1]);
        (ShapePoint::from_vector(c + r * u), r * du)
    }

    /// Ratio of short to long semi-axis.
    pub fn flatness(&self) -> f64 {
        (self.phi / 2.0).tan()
    }

    /// Signed enclosed area, negative for clockwise traversal.
    pub fn signed_area(&self) -> f64 {
        -self.omega.signum() * PI * self.wm * self.wm * self.phi.sin()
    }
}

impl fmt::Display for GaitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ellipse:phi={},theta={},wm={}", self.phi, self.theta, self.wm)?;
        if self.omega != 2.0 * PI {
            write!(f, ",omega={}", self.omega)?;
        }
        if self.samples_per_cycle != DEFAULT_SAMPLES_PER_CYCLE {
            write!(f, ",samples={}", self.samples_per_cycle)?;
        }
        if self.center != [0.0, 0.0] {
            write!(f, ",cx={},cy={}", self.center[0], self.center[1])?;
        }
        Ok(())
    }
}

impl FromStr for GaitSpec {
    type Err = OalError;

    /// `ellipse:phi=<rad>,theta=<rad>,wm=<rad>[,omega=<rad/s>][,samples=<n>][,cx=<rad>,cy=<rad>]`.
    fn from_str(s: &str) -> Result<Self> {
        let rest = s
            .trim()
            .strip_prefix("ellipse:")
            .ok_or_else(|| OalError::Parse(format!("gait must start with 'ellipse:', got '{s}'")))?;
        let mut phi = None;
        let mut theta = None;
        let mut wm = None;
        let mut omega = None;
        let mut samples = None;
        let mut cx = None;
        let mut cy = None;
        for kv in rest.split(',') {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| OalError::Parse(format!("expected key=value, got '{kv}'")))?;
            let v = v.trim();
            let num = || -> Result<f64> {
                let x: f64 = v
                    .parse()
                    .map_err(|_| OalError::Parse(format!("bad number '{v}' for '{}'", k.trim())))?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(OalError::Parse(format!("non-finite value for '{}'", k.trim())))
                }
            };
            let slot = match k.trim() {
                "phi" => &mut phi,
                "theta" => &mut theta,
                "wm" => &mut wm,
                "omega" => &mut omega,
                "cx" => &mut cx,
                "cy" => &mut cy,
                "samples" => {
                    let n: usize = v
                        .parse()
                        .map_err(|_| OalError::Parse(format!("bad sample count '{v}'")))?;
                    if samples.replace(n).is_some() {
                        return Err(OalError::Parse("duplicate key 'samples'".into()));
                    }
                    continue;
                }
                other => return Err(OalError::Parse(format!("unknown gait key '{other}'"))),
            };
            if slot.replace(num()?).is_some() {
                return Err(OalError::Parse(format!("duplicate key '{}'", k.trim())));
            }
        }
        let (Some(phi), Some(theta), Some(wm)) = (phi, theta, wm) else {
            return Err(OalError::Parse("gait needs phi=, theta= and wm=".into()));
        };
        let g = GaitSpec {
            wm,
            phi,
            theta,
            omega: omega.unwrap_or(2.0 * PI),
            samples_per_cycle: samples.unwrap_or(DEFAULT_SAMPLES_PER_CYCLE),
            center: [cx.unwrap_or(0.0), cy.unwrap_or(0.0)],
        };
        g.validate(None).map_err(|e| OalError::Parse(e.to_string()))?;
        Ok(g)
    }
}

/// Sampled path through shape space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitPath {
    pub points: Vec<ShapePoint>,
    pub times: Vec<f64>,
    pub closed: bool,
    pub period: f64,
}

impl GaitPath {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn reversed(&self) -> GaitPath {
        let mut points = self.points.clone();
        points.reverse();
        GaitPath { points, ..self.clone() }
    }
}

/// One period sampled uniformly in time, first and last sample coinciding.
pub fn elliptical_gait(g: &GaitSpec) -> GaitPath {
    let n = g.samples_per_cycle.max(1);
    let period = g.period();
    let times: Vec<f64> = (0..=n).map(|k| period * k as f64 / n as f64).collect();
    let mut points: Vec<ShapePoint> = times.iter().map(|&t| g.state(t).0).collect();
    // close exactly
    points[n] = points[0];
    GaitPath {
        points,
        times,
        closed: true,
        period,
    }
}

/// Joint angles at every sample; fails at the first sample beyond the joint limit.
pub fn joint_trajectory(path: &GaitPath, spec: &RobotSpec) -> Result<Vec<JointVector>> {
    path.points
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let j = shape_to_joints(*w, spec);
            if let Some((joint, angle)) = j.0.iter().enumerate().find(|(_, a)| a.abs() > spec.joint_limit + 1e-12) {
                return Err(OalError::JointLimitExceeded {
                    sample: k,
                    joint,
                    angle: *angle,
                });
            }
            Ok(j)
        })
        .collect()
}

/// `phi` values `0, pi/2/(count-1), ..., pi/2`.
pub fn phi_family(count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![FRAC_PI_2],
        _ => (0..count).map(|k| FRAC_PI_2 * k as f64 / (count - 1) as f64).collect(),
    }
}
