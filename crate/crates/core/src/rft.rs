//! Resistive force model and the local connection under contact constraints.
//!
//! Every solve is one instance of the same constrained balance: the body
//! velocity is parameterised as `xi = E x` (the admissible motions) and only the
//! wrench components `S * wrench` must vanish (the obstacle absorbs the rest).
//!
//! | condition | frame               | `E`                          | active rows                 |
//! |-----------|---------------------|------------------------------|-----------------------------|
//! | free      | any                 | identity                     | all three                   |
//! | single    | contact point, link | `(x0, -s x1, x1)`            | forward, torque - s lateral |
//! | multi     | central axis        | `(x0, 0, 0)`                 | forward                     |

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Matrix3x2, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{link_frames, ChainFrames, DragModel, FrameTag, LinkState, RobotSpec, ShapePoint};
use crate::error::{OalError, Result};
use crate::grid::{ConnectionGrid, FieldGrid, Lattice, VectorGrid};
use crate::se2::{cross, perp, rotation};

/// Condition numbers above this make a balance singular.
pub const SINGULAR_CONDITION: f64 = 1e12;
/// Velocity regularisation of the Coulomb law.
pub const COULOMB_REGULARIZATION: f64 = 1e-3;
pub const NEWTON_TOLERANCE: f64 = 1e-10;
pub const NEWTON_MAX_ITERATIONS: usize = 100;

/// Which side of the contact link the obstacle is on, looking toward the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "lhs")]
    Lhs,
    #[serde(rename = "rhs")]
    Rhs,
}

impl Side {
    /// `+1` if the obstacle lies toward the link's `+y` axis.
    pub fn sign(self) -> f64 {
        match self {
            Side::Lhs => 1.0,
            Side::Rhs => -1.0,
        }
    }

    pub fn flipped(self) -> Side {
        match self {
            Side::Lhs => Side::Rhs,
            Side::Rhs => Side::Lhs,
        }
    }

    pub fn from_lateral_offset(y: f64) -> Side {
        if y >= 0.0 {
            Side::Lhs
        } else {
            Side::Rhs
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Lhs => "lhs",
            Side::Rhs => "rhs",
        })
    }
}

impl FromStr for Side {
    type Err = OalError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lhs" | "left" | "l" => Ok(Side::Lhs),
            "rhs" | "right" | "r" => Ok(Side::Rhs),
            other => Err(OalError::Parse(format!("unknown side '{other}'"))),
        }
    }
}

/// Active force-balance equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContactCondition {
    Free,
    /// `link` is 1-based, head first.
    SingleObstacle {
        link: usize,
        side: Side,
    },
    MultiObstacle,
}

impl ContactCondition {
    pub fn validate(&self, spec: &RobotSpec) -> Result<()> {
        if let ContactCondition::SingleObstacle { link, .. } = *self {
            if link == 0 || link > spec.num_links() {
                return Err(OalError::InvalidConfig(format!(
                    "contact link {link} outside 1..={}",
                    spec.num_links()
                )));
            }
        }
        Ok(())
    }

    /// Frame the connection of this condition is naturally expressed in.
    pub fn natural_frame(&self) -> FrameTag {
        match *self {
            ContactCondition::SingleObstacle { link, .. } => FrameTag::Link(link),
            _ => FrameTag::CentralAxis,
        }
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            ContactCondition::Free => "free",
            ContactCondition::SingleObstacle { .. } => "single",
            ContactCondition::MultiObstacle => "multi",
        }
    }
}

impl fmt::Display for ContactCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContactCondition::Free => f.write_str("free"),
            ContactCondition::SingleObstacle { link, side } => {
                write!(f, "single:link={link},side={side}")
            }
            ContactCondition::MultiObstacle => f.write_str("multi"),
        }
    }
}

impl FromStr for ContactCondition {
    type Err = OalError;

    /// Accepts `free`, `multi` and `single:link=<i>,side=<lhs|rhs>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        match (head.to_ascii_lowercase().as_str(), rest) {
            ("free", None) => Ok(ContactCondition::Free),
            ("multi", None) => Ok(ContactCondition::MultiObstacle),
            ("single", Some(args)) => {
                let mut link = None;
                let mut side = None;
                for kv in args.split(',') {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| OalError::Parse(format!("expected key=value, got '{kv}'")))?;
                    match k.trim() {
                        "link" => {
                            let i: usize = v
                                .trim()
                                .parse()
                                .map_err(|_| OalError::Parse(format!("bad link index '{v}'")))?;
                            if i == 0 {
                                return Err(OalError::Parse("link index is 1-based".into()));
                            }
                            if link.replace(i).is_some() {
                                return Err(OalError::Parse("duplicate key 'link'".into()));
                            }
                        }
                        "side" => {
                            if side.replace(v.parse::<Side>()?).is_some() {
                                return Err(OalError::Parse("duplicate key 'side'".into()));
                            }
                        }
                        other => return Err(OalError::Parse(format!("unknown key '{other}'"))),
                    }
                }
                match (link, side) {
                    (Some(link), Some(side)) => Ok(ContactCondition::SingleObstacle { link, side }),
                    _ => Err(OalError::Parse("single contact needs link= and side=".into())),
                }
            }
            _ => Err(OalError::Parse(format!("unknown contact condition '{s}'"))),
        }
    }
}

/// 3x2 map from shape velocity to body velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalConnection {
    pub matrix: Matrix3x2<f64>,
    pub frame: FrameTag,
    pub condition: ContactCondition,
}

impl LocalConnection {
    pub fn apply(&self, wdot: Vector2<f64>) -> Vector3<f64> {
        self.matrix * wdot
    }

    /// Row `k` as a covector on shape velocities.
    pub fn row(&self, k: usize) -> Vector2<f64> {
        Vector2::new(self.matrix[(k, 0)], self.matrix[(k, 1)])
    }
}

/// Wrench the obstacles exert per unit shape velocity, in the connection's frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionRecord {
    /// Columns: obstacle wrench `(F_x, F_y, tau)` for `wdot = e_1`, `e_2`.
    pub per_unit: Matrix3x2<f64>,
    pub condition: ContactCondition,
}

impl ReactionRecord {
    pub fn wrench(&self, wdot: Vector2<f64>) -> Vector3<f64> {
        self.per_unit * wdot
    }

    /// Normal force of a single obstacle; positive pushes the link away from
    /// the obstacle. Zero for other conditions.
    pub fn normal_force(&self, wdot: Vector2<f64>) -> f64 {
        match self.condition {
            ContactCondition::SingleObstacle { side, .. } => -side.sign() * self.wrench(wdot).y,
            _ => 0.0,
        }
    }

    /// Lateral force and torque `(F_y, F_tau)` carried by the obstacle field.
    pub fn multi_forces(&self, wdot: Vector2<f64>) -> (f64, f64) {
        let r = self.wrench(wdot);
        (r.y, r.z)
    }
}

/// Drag coefficients and law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DragLaw {
    pub model: DragModel,
    pub c_parallel: f64,
    pub c_perpendicular: f64,
    /// Velocity scale below which the Coulomb law is smoothed.
    pub regularization: f64,
}

impl DragLaw {
    pub fn from_spec(spec: &RobotSpec) -> Self {
        Self {
            model: spec.drag_model,
            c_parallel: 1.0,
            c_perpendicular: spec.drag_ratio,
            regularization: COULOMB_REGULARIZATION,
        }
    }

    pub fn scaled(self, k: f64) -> Self {
        Self {
            c_parallel: k * self.c_parallel,
            c_perpendicular: k * self.c_perpendicular,
            ..self
        }
    }

    /// Force on a segment moving at `v` (both in the segment's own axes).
    pub fn force(&self, v: Vector2<f64>) -> Vector2<f64> {
        let f = Vector2::new(-self.c_parallel * v.x, -self.c_perpendicular * v.y);
        match self.model {
            DragModel::LinearViscous => f,
            DragModel::CoulombAnisotropic => {
                let n2 = v.norm_squared();
                if n2 == 0.0 {
                    Vector2::zeros()
                } else {
                    f / (n2 + self.regularization * self.regularization).sqrt()
                }
            }
        }
    }

    /// `(force, d force / d v)` in segment axes.
    fn force_and_derivative(&self, v: Vector2<f64>) -> (Vector2<f64>, Matrix2<f64>) {
        let c = Matrix2::new(self.c_parallel, 0.0, 0.0, self.c_perpendicular);
        match self.model {
            DragModel::LinearViscous => (-(c * v), -c),
            DragModel::CoulombAnisotropic => {
                let n = (v.norm_squared() + self.regularization * self.regularization).sqrt();
                let cv = c * v;
                let d = -c / n + cv * v.transpose() / (n * n * n);
                (-cv / n, d)
            }
        }
    }
}

/// Linear-drag force on one segment; see [`DragLaw::force`].
pub fn segment_force(link_velocity: Vector2<f64>, spec: &RobotSpec) -> Vector2<f64> {
    DragLaw::from_spec(spec).force(link_velocity)
}

/// Drag wrench evaluator for one shape in one reference frame.
#[derive(Debug, Clone)]
pub struct BalanceSystem {
    links: Vec<LinkState>,
    weight: f64,
    law: DragLaw,
}

impl BalanceSystem {
    pub fn new(frames: &ChainFrames, law: DragLaw) -> Self {
        Self {
            links: frames.links.clone(),
            weight: frames.link_length,
            law,
        }
    }

    /// Drag wrench about the frame origin, in frame axes.
    pub fn wrench(&self, xi: &Vector3<f64>, wdot: &Vector2<f64>) -> Vector3<f64> {
        let mut total = Vector3::zeros();
        for l in &self.links {
            let v = Vector2::new(xi.x, xi.y) + xi.z * perp(l.position) + l.d_position * wdot;
            let rot = rotation(l.orientation);
            let f = rot * self.law.force(rot.transpose() * v) * self.weight;
            total += Vector3::new(f.x, f.y, cross(l.position, f));
        }
        total
    }

    /// Wrench and its Jacobian with respect to `xi`.
    pub fn wrench_and_jacobian(&self, xi: &Vector3<f64>, wdot: &Vector2<f64>) -> (Vector3<f64>, Matrix3<f64>) {
        let mut total = Vector3::zeros();
        let mut jac = Matrix3::zeros();
        for l in &self.links {
            let jp = perp(l.position);
            let v = Vector2::new(xi.x, xi.y) + xi.z * jp + l.d_position * wdot;
            let rot = rotation(l.orientation);
            let (fl, dfl) = self.law.force_and_derivative(rot.transpose() * v);
            let f = rot * fl * self.weight;
            let df = rot * dfl * rot.transpose() * self.weight;
            total += Vector3::new(f.x, f.y, cross(l.position, f));
            // d v / d xi = [I | J q]
            let dv = nalgebra::Matrix2x3::new(1.0, 0.0, jp.x, 0.0, 1.0, jp.y);
            let dfx = df * dv;
            for c in 0..3 {
                jac[(0, c)] += dfx[(0, c)];
                jac[(1, c)] += dfx[(1, c)];
                jac[(2, c)] += l.position.x * dfx[(1, c)] - l.position.y * dfx[(0, c)];
            }
        }
        (total, jac)
    }

    /// `(W_xi, W_w)` with `wrench = W_xi xi + W_w wdot` under linear drag.
    pub fn linear_matrices(&self) -> (Matrix3<f64>, Matrix3x2<f64>) {
        let linear = BalanceSystem {
            law: DragLaw {
                model: DragModel::LinearViscous,
                ..self.law
            },
            ..self.clone()
        };
        let (_, w_xi) = linear.wrench_and_jacobian(&Vector3::zeros(), &Vector2::zeros());
        let mut w_w = Matrix3x2::zeros();
        for j in 0..2 {
            let e = if j == 0 { Vector2::x() } else { Vector2::y() };
            w_w.set_column(j, &linear.wrench(&Vector3::zeros(), &e));
        }
        (w_xi, w_w)
    }
}

/// Admissible velocities `xi = E x` and active equations `S wrench = 0`.
#[derive(Debug, Clone)]
struct Constraint {
    e: DMatrix<f64>,
    s: DMatrix<f64>,
}

impl Constraint {
    fn free() -> Self {
        Self {
            e: DMatrix::identity(3, 3),
            s: DMatrix::identity(3, 3),
        }
    }

    /// Obstacle touching the link axis at `offset` from the frame origin.
    fn point_contact(offset: f64) -> Self {
        Self {
            e: DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, -offset, 0.0, 1.0]),
            s: DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, -offset, 1.0]),
        }
    }

    fn forward_only() -> Self {
        Self {
            e: DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]),
            s: DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
        }
    }

    fn dim(&self) -> usize {
        self.e.ncols()
    }

    /// Unknowns `x` with `E x = xi`, for `xi` in the range of `E`.
    fn reduce(&self, xi: &Vector3<f64>) -> DVector<f64> {
        let et = self.e.transpose();
        (&et * &self.e)
            .lu()
            .solve(&(&et * to_d3(xi)))
            .expect("E has full column rank")
    }
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

fn to_d3(v: &Vector3<f64>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

fn from_d3(v: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

/// Solve the constrained balance for each unit shape velocity.
///
/// Returns `(A, reaction per unit)` where reaction is minus the drag wrench.
fn solve_constrained(sys: &BalanceSystem, c: &Constraint, w: ShapePoint) -> Result<(Matrix3x2<f64>, Matrix3x2<f64>)> {
    let (w_xi, w_w) = sys.linear_matrices();
    let w_xi_d = DMatrix::from_column_slice(3, 3, w_xi.as_slice());
    let w_w_d = DMatrix::from_column_slice(3, 2, w_w.as_slice());
    let reduced = &c.s * &w_xi_d * &c.e;
    let cond = condition_number(&reduced);
    if cond > SINGULAR_CONDITION {
        return Err(OalError::SingularBalance {
            w1: w.w1,
            w2: w.w2,
            condition: cond,
        });
    }
    let lu = reduced.clone().lu();
    let rhs = -(&c.s * &w_w_d);
    let x_lin = lu.solve(&rhs).ok_or(OalError::SingularBalance {
        w1: w.w1,
        w2: w.w2,
        condition: f64::INFINITY,
    })?;
    let xi_lin = &c.e * &x_lin;

    let mut a = Matrix3x2::zeros();
    let mut reaction = Matrix3x2::zeros();
    for j in 0..2 {
        let wd = if j == 0 { Vector2::x() } else { Vector2::y() };
        let xi = match sys.law.model {
            DragModel::LinearViscous => from_d3(&xi_lin.column(j).into_owned()),
            DragModel::CoulombAnisotropic => {
                let x0 = x_lin.column(j).into_owned();
                coulomb_solve(sys, c, &wd, x0, w)?
            }
        };
        a.set_column(j, &xi);
        reaction.set_column(j, &(-sys.wrench(&xi, &wd)));
    }
    Ok((a, reaction))
}

/// Newton from the linear-drag guess, falling back to continuation in the
/// smoothing scale when the solution sits near a stick/slip kink.
fn coulomb_solve(
    sys: &BalanceSystem,
    c: &Constraint,
    wdot: &Vector2<f64>,
    x0: DVector<f64>,
    w: ShapePoint,
) -> Result<Vector3<f64>> {
    let first = match coulomb_newton(sys, c, wdot, x0.clone(), w) {
        Ok(xi) => return Ok(xi),
        Err(e) => e,
    };
    let target = sys.law.regularization;
    let mut x = x0;
    let mut delta = 1e-1_f64.max(target);
    loop {
        let mut smoothed = sys.clone();
        smoothed.law.regularization = delta;
        match coulomb_newton(&smoothed, c, wdot, x.clone(), w) {
            Ok(xi) => {
                // back to the reduced unknowns
                x = c.reduce(&xi);
            }
            Err(_) => return Err(first),
        }
        if delta <= target {
            return Ok(from_d3(&(&c.e * &x)));
        }
        delta = (delta * 0.1).max(target);
    }
}

/// Levenberg-damped Newton on the active wrench components.
fn coulomb_newton(
    sys: &BalanceSystem,
    c: &Constraint,
    wdot: &Vector2<f64>,
    mut x: DVector<f64>,
    w: ShapePoint,
) -> Result<Vector3<f64>> {
    let eval = |x: &DVector<f64>| {
        let xi = from_d3(&(&c.e * x));
        let (f, jac) = sys.wrench_and_jacobian(&xi, wdot);
        let jd = DMatrix::from_column_slice(3, 3, jac.as_slice());
        (&c.s * to_d3(&f), &c.s * jd * &c.e)
    };
    let (mut r, mut jm) = eval(&x);
    let mut mu = 1e-8;
    let m = c.dim();
    for _ in 0..NEWTON_MAX_ITERATIONS {
        if r.amax() < NEWTON_TOLERANCE {
            return Ok(from_d3(&(&c.e * &x)));
        }
        let jt = jm.transpose();
        let jtj = &jt * &jm;
        let g = &jt * &r;
        let scale = jtj.diagonal().amax().max(1e-300);
        let mut accepted = false;
        for _ in 0..40 {
            let damped = &jtj + DMatrix::identity(m, m) * (mu * scale);
            let step = match damped.lu().solve(&(-&g)) {
                Some(s) => s,
                None => {
                    mu *= 10.0;
                    continue;
                }
            };
            let trial = &x + &step;
            let (r2, j2) = eval(&trial);
            if r2.norm() < r.norm() {
                x = trial;
                r = r2;
                jm = j2;
                mu = (mu / 10.0).max(1e-14);
                accepted = true;
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    if r.amax() < NEWTON_TOLERANCE {
        return Ok(from_d3(&(&c.e * &x)));
    }
    Err(OalError::NoConvergence {
        w1: w.w1,
        w2: w.w2,
        iterations: NEWTON_MAX_ITERATIONS,
        residual: r.amax(),
    })
}

/// Drag wrench for a body velocity in `xi.frame`.
pub fn net_wrench(
    xi: &crate::chain::BodyVelocity,
    w: ShapePoint,
    wdot: Vector2<f64>,
    spec: &RobotSpec,
) -> Vector3<f64> {
    net_wrench_with_law(xi, w, wdot, spec, DragLaw::from_spec(spec))
}

pub fn net_wrench_with_law(
    xi: &crate::chain::BodyVelocity,
    w: ShapePoint,
    wdot: Vector2<f64>,
    spec: &RobotSpec,
    law: DragLaw,
) -> Vector3<f64> {
    let frames = link_frames(w, spec).in_frame(xi.frame);
    BalanceSystem::new(&frames, law).wrench(&xi.xi, &wdot)
}

/// Free-body connection in the central axis frame.
pub fn solve_connection_free(w: ShapePoint, spec: &RobotSpec) -> Result<LocalConnection> {
    solve_connection_free_in_frame(w, spec, FrameTag::CentralAxis)
}

/// Free-body connection expressed in any frame.
pub fn solve_connection_free_in_frame(w: ShapePoint, spec: &RobotSpec, frame: FrameTag) -> Result<LocalConnection> {
    solve_connection_free_with_law(w, spec, frame, DragLaw::from_spec(spec))
}

pub fn solve_connection_free_with_law(
    w: ShapePoint,
    spec: &RobotSpec,
    frame: FrameTag,
    law: DragLaw,
) -> Result<LocalConnection> {
    let frames = link_frames(w, spec).in_frame(frame);
    let sys = BalanceSystem::new(&frames, law);
    let (matrix, _) = solve_constrained(&sys, &Constraint::free(), w)?;
    Ok(LocalConnection {
        matrix,
        frame,
        condition: ContactCondition::Free,
    })
}

/// One obstacle at the midpoint of link `i0`; connection in the link-`i0` frame.
pub fn solve_connection_single_obstacle(
    w: ShapePoint,
    i0: usize,
    side: Side,
    spec: &RobotSpec,
) -> Result<(LocalConnection, ReactionRecord)> {
    solve_connection_single_obstacle_at(w, i0, side, 0.0, spec)
}

/// One obstacle touching link `i0` at `offset` (along the link axis, toward the
/// head) from its midpoint. The connection is the velocity of the frame
/// located at the contact point and aligned with link `i0`.
pub fn solve_connection_single_obstacle_at(
    w: ShapePoint,
    i0: usize,
    side: Side,
    offset: f64,
    spec: &RobotSpec,
) -> Result<(LocalConnection, ReactionRecord)> {
    let condition = ContactCondition::SingleObstacle { link: i0, side };
    condition.validate(spec)?;
    let frames = link_frames(w, spec).relative_to_link(i0);
    let sys = BalanceSystem::new(&frames, DragLaw::from_spec(spec));
    let (matrix, per_unit) = solve_constrained(&sys, &Constraint::point_contact(offset), w)?;
    // re-express in the frame at the contact point (same axes, shifted origin)
    let shift = |m: &Matrix3x2<f64>, is_wrench: bool| {
        let mut out = *m;
        for j in 0..2 {
            if is_wrench {
                // torque about the contact point
                out[(2, j)] = m[(2, j)] - offset * m[(1, j)];
            } else {
                out[(1, j)] = m[(1, j)] + offset * m[(2, j)];
            }
        }
        out
    };
    let matrix = shift(&matrix, false);
    let per_unit = shift(&per_unit, true);
    Ok((
        LocalConnection {
            matrix,
            frame: FrameTag::Link(i0),
            condition,
        },
        ReactionRecord { per_unit, condition },
    ))
}

/// Lateral and rotational motion blocked; connection in the central axis frame.
pub fn solve_connection_multi_obstacle(w: ShapePoint, spec: &RobotSpec) -> Result<(LocalConnection, ReactionRecord)> {
    let frames = link_frames(w, spec);
    let sys = BalanceSystem::new(&frames, DragLaw::from_spec(spec));
    let (matrix, per_unit) = solve_constrained(&sys, &Constraint::forward_only(), w)?;
    let condition = ContactCondition::MultiObstacle;
    Ok((
        LocalConnection {
            matrix,
            frame: FrameTag::CentralAxis,
            condition,
        },
        ReactionRecord { per_unit, condition },
    ))
}

/// Dispatch on the condition; free solves report a zero reaction.
pub fn solve_connection(
    w: ShapePoint,
    condition: ContactCondition,
    spec: &RobotSpec,
) -> Result<(LocalConnection, ReactionRecord)> {
    match condition {
        ContactCondition::Free => {
            let conn = solve_connection_free(w, spec)?;
            Ok((
                conn,
                ReactionRecord {
                    per_unit: Matrix3x2::zeros(),
                    condition,
                },
            ))
        }
        ContactCondition::SingleObstacle { link, side } => solve_connection_single_obstacle(w, link, side, spec),
        ContactCondition::MultiObstacle => solve_connection_multi_obstacle(w, spec),
    }
}

/// Pose of a frame attached to the body relative to the central frame, and its
/// shape derivatives.
#[derive(Debug, Clone, Copy)]
pub struct AttachedFrame {
    pub translation: Vector2<f64>,
    pub angle: f64,
    pub d_translation: Matrix2<f64>,
    pub d_angle: Vector2<f64>,
}

impl AttachedFrame {
    /// Frame on link `i0` (1-based) displaced `offset` along the link axis.
    pub fn on_link(w: ShapePoint, i0: usize, offset: f64, spec: &RobotSpec) -> Self {
        let central = link_frames(w, spec);
        let l = central.link(i0);
        let (s, c) = l.orientation.sin_cos();
        let along = Vector2::new(c, s);
        Self {
            translation: l.position + offset * along,
            angle: l.orientation,
            d_translation: l.d_position + offset * perp(along) * l.d_orientation.transpose(),
            d_angle: l.d_orientation,
        }
    }

    /// Body velocity of the central frame given that of this frame.
    pub fn to_central(&self, xi_f: &Vector3<f64>, wdot: &Vector2<f64>) -> Vector3<f64> {
        let r = rotation(self.angle);
        let rel_v = r.transpose() * (self.d_translation * wdot);
        let rel_w = self.d_angle.dot(wdot);
        let v = Vector2::new(xi_f.x, xi_f.y) - rel_v;
        let om = xi_f.z - rel_w;
        let vc = r * v - om * perp(self.translation);
        Vector3::new(vc.x, vc.y, om)
    }

    /// Body velocity of this frame given that of the central frame.
    pub fn from_central(&self, xi_c: &Vector3<f64>, wdot: &Vector2<f64>) -> Vector3<f64> {
        let r = rotation(self.angle);
        let vc = Vector2::new(xi_c.x, xi_c.y) + xi_c.z * perp(self.translation);
        let v = r.transpose() * vc + r.transpose() * (self.d_translation * wdot);
        Vector3::new(v.x, v.y, xi_c.z + self.d_angle.dot(wdot))
    }

    pub fn connection_to_central(&self, a_f: &Matrix3x2<f64>) -> Matrix3x2<f64> {
        let mut out = Matrix3x2::zeros();
        for j in 0..2 {
            let e = if j == 0 { Vector2::x() } else { Vector2::y() };
            let col = a_f.column(j).into_owned();
            out.set_column(j, &self.to_central(&col, &e));
        }
        out
    }
}

/// Convert any connection to the central axis frame.
pub fn connection_in_central(conn: &LocalConnection, w: ShapePoint, spec: &RobotSpec) -> LocalConnection {
    match conn.frame {
        FrameTag::CentralAxis => *conn,
        FrameTag::Link(i) => LocalConnection {
            matrix: AttachedFrame::on_link(w, i, 0.0, spec).connection_to_central(&conn.matrix),
            frame: FrameTag::CentralAxis,
            condition: conn.condition,
        },
    }
}

/// Lateral-row field used as the engagement constraint for a contact on `i0`.
///
/// `V2(w) . wdot > 0` means the free body would press link `i0` into an
/// obstacle on `side`, so the contact persists.
pub fn lateral_row_field(i0: usize, side: Side, lattice: Lattice, spec: &RobotSpec) -> Result<VectorGrid> {
    ContactCondition::SingleObstacle { link: i0, side }.validate(spec)?;
    let results: Vec<Option<Vector2<f64>>> = (0..lattice.len())
        .into_par_iter()
        .map(|k| {
            solve_connection_free_in_frame(lattice.point_at(k), spec, FrameTag::Link(i0))
                .ok()
                .map(|c| c.row(1) * side.sign())
        })
        .collect();
    let valid = results.iter().map(Option::is_some).collect();
    let values = results.into_iter().map(|v| v.unwrap_or_default()).collect();
    FieldGrid::from_values(lattice, values, valid)
}

/// Connection sampled at every vertex in the condition's natural frame.
pub fn connection_grid(condition: ContactCondition, lattice: Lattice, spec: &RobotSpec) -> Result<ConnectionGrid> {
    connection_grid_in_frame(condition, lattice, spec, condition.natural_frame())
}

/// Connection sampled at every vertex, converted to `frame` when it differs
/// from the condition's natural frame.
pub fn connection_grid_in_frame(
    condition: ContactCondition,
    lattice: Lattice,
    spec: &RobotSpec,
    frame: FrameTag,
) -> Result<ConnectionGrid> {
    condition.validate(spec)?;
    let natural = condition.natural_frame();
    let results: Vec<std::result::Result<Matrix3x2<f64>, String>> = (0..lattice.len())
        .into_par_iter()
        .map(|k| {
            let w = lattice.point_at(k);
            let solved = match condition {
                ContactCondition::Free => solve_connection_free_in_frame(w, spec, frame),
                _ => solve_connection(w, condition, spec).map(|(c, _)| c),
            };
            solved
                .map(|c| {
                    if frame == natural || condition == ContactCondition::Free {
                        c.matrix
                    } else {
                        let central = connection_in_central(&c, w, spec);
                        match frame {
                            FrameTag::CentralAxis => central.matrix,
                            FrameTag::Link(i) => {
                                let af = AttachedFrame::on_link(w, i, 0.0, spec);
                                let mut m = Matrix3x2::zeros();
                                for j in 0..2 {
                                    let e = if j == 0 { Vector2::x() } else { Vector2::y() };
                                    let col = central.matrix.column(j).into_owned();
                                    m.set_column(j, &af.from_central(&col, &e));
                                }
                                m
                            }
                        }
                    }
                })
                .map_err(|e| e.to_string())
        })
        .collect();
    let mut values = Vec::with_capacity(results.len());
    let mut valid = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(m) => {
                values.push(m);
                valid.push(true);
            }
            Err(msg) => {
                values.push(Matrix3x2::zeros());
                valid.push(false);
                failures.push((k, msg));
            }
        }
    }
    Ok(ConnectionGrid {
        grid: FieldGrid::from_values(lattice, values, valid)?,
        condition,
        frame,
        failures,
    })
}
