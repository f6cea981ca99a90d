//! Planar N-link chain with a two-dimensional shape basis.
//!
//! Links are numbered from the head (link 1) to the tail (link N+1); joint
//! `i` (0-based) sits between link `i+1` and link `i+2`. Each link's local
//! x-axis points toward the head, so "forward" means head-first.

use std::path::Path;

use nalgebra::{Matrix2, Matrix2x5, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{OalError, Result};
use crate::se2::{perp, rotation, Pose};

/// Ground reaction model applied per link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DragModel {
    #[default]
    LinearViscous,
    CoulombAnisotropic,
}

/// Robot morphology and ground model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobotSpec {
    pub num_joints: usize,
    pub link_length: f64,
    pub joint_limit: f64,
    pub wave_number: f64,
    pub drag_ratio: f64,
    pub drag_model: DragModel,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRobotSpec {
    num_joints: usize,
    #[serde(default)]
    link_length: Option<f64>,
    joint_limit: f64,
    wave_number: f64,
    drag_ratio: f64,
    drag_model: DragModel,
}

pub const DEFAULT_NUM_JOINTS: usize = 6;
pub const DEFAULT_JOINT_LIMIT: f64 = 1.0;
pub const DEFAULT_WAVE_NUMBER: f64 = 0.5;
pub const DEFAULT_DRAG_RATIO: f64 = 2.0;

impl Default for RobotSpec {
    fn default() -> Self {
        Self {
            num_joints: DEFAULT_NUM_JOINTS,
            link_length: 1.0 / (DEFAULT_NUM_JOINTS as f64 + 1.0),
            joint_limit: DEFAULT_JOINT_LIMIT,
            wave_number: DEFAULT_WAVE_NUMBER,
            drag_ratio: DEFAULT_DRAG_RATIO,
            drag_model: DragModel::LinearViscous,
        }
    }
}

impl RobotSpec {
    pub fn num_links(&self) -> usize {
        self.num_joints + 1
    }

    pub fn with_wave_number(&self, wave_number: f64) -> Self {
        Self {
            wave_number,
            ..self.clone()
        }
    }

    pub fn with_drag_ratio(&self, drag_ratio: f64) -> Self {
        Self {
            drag_ratio,
            ..self.clone()
        }
    }

    pub fn with_joint_limit(&self, joint_limit: f64) -> Self {
        Self {
            joint_limit,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OalError::InvalidConfig(m));
        if self.num_joints < 2 {
            return bad(format!("num_joints must be >= 2, got {}", self.num_joints));
        }
        if !(self.link_length.is_finite() && self.link_length > 0.0) {
            return bad(format!("link_length must be positive, got {}", self.link_length));
        }
        let total = self.link_length * self.num_links() as f64;
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!(
                "link_length * (num_joints + 1) must equal one body length, got {total}"
            ));
        }
        if !(self.joint_limit > 0.0 && self.joint_limit < std::f64::consts::PI) {
            return bad(format!("joint_limit must lie in (0, pi), got {}", self.joint_limit));
        }
        if !(self.wave_number.is_finite() && self.wave_number > 0.0) {
            return bad(format!("wave_number must be positive, got {}", self.wave_number));
        }
        if !(self.drag_ratio.is_finite() && self.drag_ratio > 1.0) {
            return bad(format!("drag_ratio must exceed 1, got {}", self.drag_ratio));
        }
        Ok(())
    }

    /// Parse and validate a JSON configuration.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawRobotSpec = serde_json::from_str(s).map_err(|e| OalError::InvalidConfig(e.to_string()))?;
        let link_length = raw.link_length.unwrap_or(1.0 / (raw.num_joints as f64 + 1.0));
        let spec = RobotSpec {
            num_joints: raw.num_joints,
            link_length,
            joint_limit: raw.joint_limit,
            wave_number: raw.wave_number,
            drag_ratio: raw.drag_ratio,
            drag_model: raw.drag_model,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let s =
            std::fs::read_to_string(path).map_err(|e| OalError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&s)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

/// Reduced shape coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ShapePoint {
    pub w1: f64,
    pub w2: f64,
}

impl ShapePoint {
    pub fn new(w1: f64, w2: f64) -> Self {
        Self { w1, w2 }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.w1, self.w2)
    }

    pub fn from_vector(v: Vector2<f64>) -> Self {
        Self::new(v.x, v.y)
    }

    pub fn within_limits(&self, limit: f64) -> bool {
        self.w1.abs() <= limit + 1e-12 && self.w2.abs() <= limit + 1e-12
    }
}

/// Joint angles of the chain, head to tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointVector(pub Vec<f64>);

impl JointVector {
    pub fn angles(&self) -> &[f64] {
        &self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
    }
}

/// Reference frame in which a body velocity or connection is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameTag {
    CentralAxis,
    /// 1-based link index (1 = head).
    Link(usize),
}

/// Body velocity `(xi_x, xi_y, xi_theta)` of a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyVelocity {
    pub xi: nalgebra::Vector3<f64>,
    pub frame: FrameTag,
}

impl BodyVelocity {
    pub fn new(xi_x: f64, xi_y: f64, xi_theta: f64, frame: FrameTag) -> Self {
        Self {
            xi: nalgebra::Vector3::new(xi_x, xi_y, xi_theta),
            frame,
        }
    }
}

/// `(beta1, beta2)` sampled at joints `0..N`.
pub fn basis_functions(spec: &RobotSpec) -> (Vec<f64>, Vec<f64>) {
    let n = spec.num_joints;
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let phase = 2.0 * std::f64::consts::PI * spec.wave_number * i as f64 / denom;
            (phase.sin(), phase.cos())
        })
        .unzip()
}

pub fn shape_to_joints(w: ShapePoint, spec: &RobotSpec) -> JointVector {
    let (b1, b2) = basis_functions(spec);
    JointVector(b1.iter().zip(&b2).map(|(a, b)| a * w.w1 + b * w.w2).collect())
}

/// One link's midpoint pose and its shape derivatives, in some reference frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkState {
    pub position: Vector2<f64>,
    pub orientation: f64,
    /// Column `j` is the derivative of `position` with respect to `w_j`.
    pub d_position: Matrix2<f64>,
    pub d_orientation: Vector2<f64>,
}

impl LinkState {
    pub fn pose(&self) -> Pose {
        Pose::new(self.position.x, self.position.y, self.orientation)
    }

    /// Maps `(xi_x, xi_y, xi_theta, wdot_1, wdot_2)` to the midpoint velocity
    /// in this link's own axes `(v_parallel, v_perpendicular)`.
    pub fn velocity_jacobian(&self) -> Matrix2x5<f64> {
        let jp = perp(self.position);
        let frame_jac = Matrix2x5::new(
            1.0,
            0.0,
            jp.x,
            self.d_position[(0, 0)],
            self.d_position[(0, 1)],
            0.0,
            1.0,
            jp.y,
            self.d_position[(1, 0)],
            self.d_position[(1, 1)],
        );
        rotation(-self.orientation) * frame_jac
    }

    /// Velocity of the point at `offset` along the link axis, in reference-frame axes.
    pub fn point_velocity_jacobian(&self, offset: f64) -> Matrix2x5<f64> {
        let (s, c) = self.orientation.sin_cos();
        let along = Vector2::new(c, s);
        let point = self.position + offset * along;
        let jp = perp(point);
        let d_along = perp(along) * self.d_orientation.transpose();
        let d_point = self.d_position + offset * d_along;
        Matrix2x5::new(
            1.0,
            0.0,
            jp.x,
            d_point[(0, 0)],
            d_point[(0, 1)],
            0.0,
            1.0,
            jp.y,
            d_point[(1, 0)],
            d_point[(1, 1)],
        )
    }
}

/// Link midpoints and orientations of a shape, expressed in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainFrames {
    pub frame: FrameTag,
    pub link_length: f64,
    pub links: Vec<LinkState>,
}

/// Forward kinematics in the central body-axis frame.
///
/// The central frame sits at the mean of the link midpoints with heading equal
/// to the mean link orientation.
pub fn link_frames(w: ShapePoint, spec: &RobotSpec) -> ChainFrames {
    let (b1, b2) = basis_functions(spec);
    let joints = shape_to_joints(w, spec);
    let k = spec.num_links();
    let len = spec.link_length;

    // head-anchored chain: orientations accumulate joint angles from the head
    let mut theta = vec![0.0; k];
    let mut d_theta = vec![Vector2::zeros(); k];
    for i in 1..k {
        theta[i] = theta[i - 1] + joints.0[i - 1];
        d_theta[i] = d_theta[i - 1] + Vector2::new(b1[i - 1], b2[i - 1]);
    }

    let mut pos = vec![Vector2::zeros(); k];
    let mut d_pos = vec![Matrix2::zeros(); k];
    let mut acc = Vector2::zeros();
    let mut d_acc = Matrix2::zeros();
    for i in 0..k {
        let (s, c) = theta[i].sin_cos();
        let u = Vector2::new(c, s);
        let du = perp(u) * d_theta[i].transpose();
        pos[i] = acc - 0.5 * len * u;
        d_pos[i] = d_acc - 0.5 * len * du;
        acc -= len * u;
        d_acc -= len * du;
    }

    let inv_k = 1.0 / k as f64;
    let mean_theta = theta.iter().sum::<f64>() * inv_k;
    let d_mean_theta = d_theta.iter().fold(Vector2::zeros(), |a, b| a + b) * inv_k;
    let mean_pos = pos.iter().fold(Vector2::zeros(), |a, b| a + b) * inv_k;
    let d_mean_pos = d_pos.iter().fold(Matrix2::zeros(), |a, b| a + b) * inv_k;

    let back = rotation(-mean_theta);
    let links = (0..k)
        .map(|i| {
            let q = back * (pos[i] - mean_pos);
            let dq = back * (d_pos[i] - d_mean_pos) - perp(q) * d_mean_theta.transpose();
            LinkState {
                position: q,
                orientation: theta[i] - mean_theta,
                d_position: dq,
                d_orientation: d_theta[i] - d_mean_theta,
            }
        })
        .collect();

    ChainFrames {
        frame: FrameTag::CentralAxis,
        link_length: len,
        links,
    }
}

impl ChainFrames {
    /// Number of links.
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Link by 1-based index.
    pub fn link(&self, index: usize) -> &LinkState {
        &self.links[index - 1]
    }

    /// Re-express every link relative to the midpoint frame of link `index` (1-based).
    pub fn relative_to_link(&self, index: usize) -> ChainFrames {
        self.relative_to_point(index, 0.0)
    }

    /// Re-express relative to a frame on link `index` displaced `offset` along its axis.
    pub fn relative_to_point(&self, index: usize, offset: f64) -> ChainFrames {
        let r = *self.link(index);
        let (s, c) = r.orientation.sin_cos();
        let along = Vector2::new(c, s);
        let origin = r.position + offset * along;
        let d_origin = r.d_position + offset * perp(along) * r.d_orientation.transpose();
        let back = rotation(-r.orientation);
        let links = self
            .links
            .iter()
            .map(|l| {
                let q = back * (l.position - origin);
                let dq = back * (l.d_position - d_origin) - perp(q) * r.d_orientation.transpose();
                LinkState {
                    position: q,
                    orientation: l.orientation - r.orientation,
                    d_position: dq,
                    d_orientation: l.d_orientation - r.d_orientation,
                }
            })
            .collect();
        ChainFrames {
            frame: FrameTag::Link(index),
            link_length: self.link_length,
            links,
        }
    }

    /// Frames for an arbitrary tag, starting from the central frame.
    pub fn in_frame(&self, frame: FrameTag) -> ChainFrames {
        match frame {
            FrameTag::CentralAxis => {
                debug_assert_eq!(self.frame, FrameTag::CentralAxis);
                self.clone()
            }
            FrameTag::Link(i) => self.relative_to_link(i),
        }
    }

    /// Segment endpoints `(head_end, tail_end)` of every link in this frame.
    pub fn segments(&self) -> Vec<(Vector2<f64>, Vector2<f64>)> {
        self.links
            .iter()
            .map(|l| {
                let (s, c) = l.orientation.sin_cos();
                let half = 0.5 * self.link_length * Vector2::new(c, s);
                (l.position + half, l.position - half)
            })
            .collect()
    }
}
