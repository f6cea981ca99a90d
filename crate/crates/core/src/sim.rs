//! Quasistatic simulation of gaits among obstacles.
//!
//! The pose of the central frame is advanced with a fourth-order Magnus step
//! (two Gauss points) while the contact mode is held fixed over each step.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{link_frames, RobotSpec, ShapePoint};
use crate::env::{EnvMode, Environment};
use crate::error::{OalError, Result};
use crate::fields::CONSERVATIVE_LIMIT;
use crate::gait::GaitSpec;
use crate::optimizer::{optimize_single_obstacle, OalOptions};
use crate::rft::{
    solve_connection_free, solve_connection_free_in_frame, solve_connection_multi_obstacle,
    solve_connection_single_obstacle_at, AttachedFrame, ContactCondition, Side,
};
use crate::se2::{bracket, rotation, wrap_angle, Pose};

pub const DEFAULT_CONTACT_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_STALL_THRESHOLD: f64 = 0.01;
pub const DEFAULT_BAND: f64 = PI / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub steps_per_cycle: usize,
    pub contact_tolerance: f64,
    /// Half-width of the beneficial and detrimental cones, radians.
    pub band: f64,
    pub stall_threshold: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            steps_per_cycle: crate::gait::DEFAULT_SAMPLES_PER_CYCLE,
            contact_tolerance: DEFAULT_CONTACT_TOLERANCE,
            band: DEFAULT_BAND,
            stall_threshold: DEFAULT_STALL_THRESHOLD,
        }
    }
}

/// Contact mode held during one integration step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ContactMode {
    Free,
    Single {
        link: usize,
        side: Side,
        obstacle: usize,
        /// Contact point along link `link`, from its midpoint toward the head.
        offset: f64,
    },
    Multi,
    /// Touching geometrically, but the obstacle would have to pull.
    Detached,
}

impl ContactMode {
    pub fn condition(&self) -> ContactCondition {
        match *self {
            ContactMode::Free | ContactMode::Detached => ContactCondition::Free,
            ContactMode::Single { link, side, .. } => ContactCondition::SingleObstacle { link, side },
            ContactMode::Multi => ContactCondition::MultiObstacle,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ContactMode::Free => "free",
            ContactMode::Single { .. } => "single",
            ContactMode::Multi => "multi",
            ContactMode::Detached => "detached",
        }
    }

    pub fn is_engaged(&self) -> bool {
        matches!(self, ContactMode::Single { .. } | ContactMode::Multi)
    }
}

/// Central-frame body velocity under a contact mode.
pub fn central_velocity(
    mode: &ContactMode,
    w: ShapePoint,
    wdot: Vector2<f64>,
    spec: &RobotSpec,
) -> Result<Vector3<f64>> {
    match *mode {
        ContactMode::Free | ContactMode::Detached => Ok(solve_connection_free(w, spec)?.apply(wdot)),
        ContactMode::Multi => Ok(solve_connection_multi_obstacle(w, spec)?.0.apply(wdot)),
        ContactMode::Single { link, side, offset, .. } => {
            let (c, _) = solve_connection_single_obstacle_at(w, link, side, offset, spec)?;
            Ok(AttachedFrame::on_link(w, link, offset, spec).to_central(&c.apply(wdot), &wdot))
        }
    }
}

/// Fourth-order Magnus step of `g' = g xi(t)` given `xi` at the two Gauss points.
pub fn magnus_step(g: &Pose, xi1: &Vector3<f64>, xi2: &Vector3<f64>, dt: f64) -> Pose {
    let omega = (xi1 + xi2) * (0.5 * dt) + bracket(xi1, xi2) * (3f64.sqrt() / 12.0 * dt * dt);
    g.compose(&Pose::exp(&omega))
}

const GAUSS_OFFSETS: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub poses: Vec<Pose>,
    pub shapes: Vec<ShapePoint>,
    pub modes: Vec<String>,
}

impl Trajectory {
    pub fn final_pose(&self) -> Pose {
        *self.poses.last().expect("trajectory has a start")
    }

    /// Net motion expressed in the starting frame.
    pub fn displacement(&self) -> Pose {
        self.poses[0].inverse().compose(&self.final_pose())
    }
}

/// Integrate whole cycles of a gait under a fixed contact condition (contact
/// at the link midpoint for single-obstacle conditions).
pub fn integrate_cycle(
    gait: &GaitSpec,
    start: Pose,
    condition: ContactCondition,
    spec: &RobotSpec,
    steps_per_cycle: usize,
    cycles: usize,
) -> Result<Trajectory> {
    condition.validate(spec)?;
    let mode = match condition {
        ContactCondition::Free => ContactMode::Free,
        ContactCondition::MultiObstacle => ContactMode::Multi,
        ContactCondition::SingleObstacle { link, side } => ContactMode::Single {
            link,
            side,
            obstacle: 0,
            offset: 0.0,
        },
    };
    let steps = steps_per_cycle.max(1) * cycles;
    let dt = gait.period() / steps_per_cycle.max(1) as f64;
    let mut g = start;
    let mut traj = Trajectory {
        times: vec![0.0],
        poses: vec![g],
        shapes: vec![gait.state(0.0).0],
        modes: vec![mode.label().into()],
    };
    for k in 0..steps {
        let t = k as f64 * dt;
        let mut xi = [Vector3::zeros(); 2];
        for (q, c) in GAUSS_OFFSETS.iter().enumerate() {
            let (w, wd) = gait.state(t + c * dt);
            xi[q] = central_velocity(&mode, w, wd, spec)?;
        }
        g = magnus_step(&g, &xi[0], &xi[1], dt);
        let t1 = (k + 1) as f64 * dt;
        traj.times.push(t1);
        traj.poses.push(g);
        traj.shapes.push(gait.state(t1).0);
        traj.modes.push(mode.label().into());
    }
    Ok(traj)
}

/// Forward displacement over one cycle under a fixed condition.
pub fn cycle_displacement(
    gait: &GaitSpec,
    condition: ContactCondition,
    spec: &RobotSpec,
    steps_per_cycle: usize,
) -> Result<Pose> {
    Ok(integrate_cycle(gait, Pose::IDENTITY, condition, spec, steps_per_cycle, 1)?.displacement())
}

/// One obstacle touching one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Touch {
    pub obstacle: usize,
    pub link: usize,
    pub side: Side,
    pub offset: f64,
    pub gap: f64,
}

/// Obstacles within reach of the body, each attributed to its nearest link.
/// `previous` obstacles stay attached until the gap exceeds twice the tolerance.
pub fn detect_contacts(
    pose: &Pose,
    w: ShapePoint,
    env: &Environment,
    spec: &RobotSpec,
    tolerance: f64,
    previous: &BTreeMap<usize, Touch>,
) -> Vec<Touch> {
    let frames = link_frames(w, spec);
    let half = 0.5 * frames.link_length;
    let mut out = Vec::new();
    for (k, o) in env.obstacles.iter().enumerate() {
        let p = pose.inverse_transform_point(Vector2::new(o.x, o.y));
        if p.norm() > 0.5 + half + o.r + 2.0 * tolerance {
            continue;
        }
        let mut best: Option<(f64, usize, f64, f64)> = None;
        for (idx, l) in frames.links.iter().enumerate() {
            let rel = rotation(-l.orientation) * (p - l.position);
            let along = rel.x.abs() - half;
            let d = if along <= 0.0 { rel.y.abs() } else { along.hypot(rel.y) };
            if best.is_none_or(|b| d < b.0) {
                best = Some((d, idx + 1, rel.x, rel.y));
            }
        }
        let Some((d, link, s, y)) = best else { continue };
        let reach = if previous.contains_key(&k) {
            2.0 * tolerance
        } else {
            tolerance
        };
        if d - o.r < reach {
            out.push(Touch {
                obstacle: k,
                link,
                side: Side::from_lateral_offset(y),
                offset: s.clamp(-half, half),
                gap: d - o.r,
            });
        }
    }
    out
}

/// Lateral velocity of a contact point toward its obstacle under free motion.
fn free_approach_speed(w: ShapePoint, wdot: Vector2<f64>, touch: &Touch, spec: &RobotSpec) -> Result<f64> {
    let c = solve_connection_free_in_frame(w, spec, crate::chain::FrameTag::Link(touch.link))?;
    let xi = c.apply(wdot);
    Ok(touch.side.sign() * (xi.y + touch.offset * xi.z))
}

/// Contact mode for the next step.
///
/// Walls force the all-sides constraint. Otherwise contacts on both sides give
/// the all-sides constraint; contacts on one side give a single-obstacle
/// constraint on the ongoing interaction (or the contact nearest the head),
/// released when the free body would move away and the obstacle would pull.
pub fn contact_state_machine(
    previous: &ContactMode,
    touches: &[Touch],
    env: &Environment,
    w: ShapePoint,
    wdot: Vector2<f64>,
    spec: &RobotSpec,
) -> Result<ContactMode> {
    if env.mode() == EnvMode::Walls || env.walls.is_some() {
        return Ok(ContactMode::Multi);
    }
    if touches.is_empty() {
        return Ok(ContactMode::Free);
    }
    let has = |s: Side| touches.iter().any(|t| t.side == s);
    if has(Side::Lhs) && has(Side::Rhs) {
        return Ok(ContactMode::Multi);
    }
    let ongoing = match *previous {
        ContactMode::Single { obstacle, link, .. } => touches.iter().find(|t| t.obstacle == obstacle && t.link == link),
        _ => None,
    };
    let touch = ongoing
        .or_else(|| touches.iter().min_by_key(|t| (t.link, t.obstacle)))
        .expect("nonempty");
    let (_, reaction) = solve_connection_single_obstacle_at(w, touch.link, touch.side, touch.offset, spec)?;
    let force = reaction.normal_force(wdot);
    let approaching = free_approach_speed(w, wdot, touch, spec)? > 0.0;
    if force < 0.0 && !approaching {
        return Ok(ContactMode::Detached);
    }
    Ok(ContactMode::Single {
        link: touch.link,
        side: touch.side,
        obstacle: touch.obstacle,
        offset: touch.offset,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Beneficial,
    Detrimental,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub obstacle: usize,
    pub link: usize,
    pub side: Side,
    pub start: f64,
    pub end: f64,
    pub attack_angle: f64,
    pub classification: Classification,
    /// Time integral of the obstacle force in the world frame.
    pub impulse: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub displacement_per_cycle: f64,
    pub total_displacement: f64,
    pub cycle_displacements: Vec<f64>,
    pub contact_fraction: f64,
    pub mean_attack_angle: Option<f64>,
    pub p_d: f64,
    pub interactions: usize,
    pub beneficial: usize,
    pub detrimental: usize,
    pub neutral: usize,
    pub stalled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub metrics: SimMetrics,
    pub trajectory: Trajectory,
    pub interactions: Vec<Interaction>,
}

struct OpenInteraction {
    link: usize,
    side: Side,
    start: f64,
    impulse: Vector2<f64>,
}

fn classify(impulse: Vector2<f64>, desired: Vector2<f64>, band: f64) -> Classification {
    if impulse.norm() == 0.0 {
        return Classification::Neutral;
    }
    let ang = (impulse.perp(&desired)).atan2(impulse.dot(&desired)).abs();
    if ang <= band {
        Classification::Beneficial
    } else if ang >= PI - band {
        Classification::Detrimental
    } else {
        Classification::Neutral
    }
}

/// World-frame force each touching obstacle exerts during a step.
fn obstacle_forces(
    mode: &ContactMode,
    touches: &[Touch],
    pose: &Pose,
    w: ShapePoint,
    wdot: Vector2<f64>,
    spec: &RobotSpec,
) -> Result<Vec<(usize, Vector2<f64>)>> {
    let frames = link_frames(w, spec);
    let away = |t: &Touch| {
        let ang = pose.alpha + frames.link(t.link).orientation;
        rotation(ang) * Vector2::new(0.0, -t.side.sign())
    };
    match *mode {
        ContactMode::Single {
            link,
            side,
            obstacle,
            offset,
        } => {
            let (_, r) = solve_connection_single_obstacle_at(w, link, side, offset, spec)?;
            let f = r.normal_force(wdot);
            let t = touches.iter().find(|t| t.obstacle == obstacle);
            Ok(t.map(|t| vec![(obstacle, away(t) * f)]).unwrap_or_default())
        }
        ContactMode::Multi if !touches.is_empty() => {
            let (_, r) = solve_connection_multi_obstacle(w, spec)?;
            let (fy, _) = r.multi_forces(wdot);
            let share = fy.abs() / touches.len() as f64;
            Ok(touches.iter().map(|t| (t.obstacle, away(t) * share)).collect())
        }
        _ => Ok(vec![]),
    }
}

/// Simulate `cycles` gait cycles from `start` in `env`.
pub fn run_scenario_from(
    gait: &GaitSpec,
    env: &Environment,
    cycles: usize,
    spec: &RobotSpec,
    cfg: &SimConfig,
    start: Pose,
) -> Result<ScenarioResult> {
    env.validate()?;
    let spc = cfg.steps_per_cycle.max(4);
    let dt = gait.period() / spc as f64;
    let steps = spc * cycles;
    let quarter = (spc / 4).max(1);

    let mut g = start;
    let mut touching: BTreeMap<usize, Touch> = BTreeMap::new();
    let mut open: BTreeMap<usize, OpenInteraction> = BTreeMap::new();
    let mut done: Vec<Interaction> = Vec::new();
    let mut mode = ContactMode::Free;
    let mut headings: Vec<f64> = vec![g.alpha];
    let mut engaged_steps = 0usize;
    let mut traj = Trajectory {
        times: vec![0.0],
        poses: vec![g],
        shapes: vec![gait.state(0.0).0],
        modes: vec![],
    };

    let desired = |headings: &[f64]| {
        let from = headings.len().saturating_sub(quarter);
        let mean = headings[from..].iter().sum::<f64>() / (headings.len() - from) as f64;
        Vector2::new(mean.cos(), mean.sin())
    };
    let attack_angle = |pose: &Pose, w: ShapePoint, obstacle: usize| {
        let frames = link_frames(w, spec);
        let head = frames.link(1);
        let mid = pose.transform_point(head.position);
        let dir = rotation(pose.alpha + head.orientation) * Vector2::x();
        let o = &env.obstacles[obstacle];
        let to = Vector2::new(o.x, o.y) - mid;
        dir.perp(&to).atan2(dir.dot(&to)).abs()
    };

    for k in 0..steps {
        let t = k as f64 * dt;
        let (w, wd) = gait.state(t);
        let touches = detect_contacts(&g, w, env, spec, cfg.contact_tolerance, &touching);
        mode = contact_state_machine(&mode, &touches, env, w, wd, spec)?;
        if mode.is_engaged() {
            engaged_steps += 1;
        }

        // interaction bookkeeping
        let now: BTreeMap<usize, Touch> = touches.iter().map(|t| (t.obstacle, *t)).collect();
        let ended: Vec<usize> = open.keys().filter(|o| !now.contains_key(o)).cloned().collect();
        for o in ended {
            let it = open.remove(&o).expect("open");
            done.push(Interaction {
                obstacle: o,
                link: it.link,
                side: it.side,
                start: it.start,
                end: t,
                attack_angle: attack_angle(&g, w, o),
                classification: classify(it.impulse, desired(&headings), cfg.band),
                impulse: (it.impulse.x, it.impulse.y),
            });
        }
        for tch in &touches {
            open.entry(tch.obstacle).or_insert(OpenInteraction {
                link: tch.link,
                side: tch.side,
                start: t,
                impulse: Vector2::zeros(),
            });
        }
        if env.walls.is_none() {
            for (o, f) in obstacle_forces(&mode, &touches, &g, w, wd, spec)? {
                if let Some(it) = open.get_mut(&o) {
                    it.impulse += f * dt;
                }
            }
        }
        touching = now;

        let mut xi = [Vector3::zeros(); 2];
        for (q, c) in GAUSS_OFFSETS.iter().enumerate() {
            let (wq, wdq) = gait.state(t + c * dt);
            xi[q] = central_velocity(&mode, wq, wdq, spec)?;
        }
        g = magnus_step(&g, &xi[0], &xi[1], dt);
        headings.push(g.alpha);
        let t1 = (k + 1) as f64 * dt;
        traj.times.push(t1);
        traj.poses.push(g);
        traj.shapes.push(gait.state(t1).0);
        traj.modes.push(mode.label().into());
    }
    let t_end = steps as f64 * dt;
    let w_end = gait.state(t_end).0;
    for (o, it) in std::mem::take(&mut open) {
        done.push(Interaction {
            obstacle: o,
            link: it.link,
            side: it.side,
            start: it.start,
            end: t_end,
            attack_angle: attack_angle(&g, w_end, o),
            classification: classify(it.impulse, desired(&headings), cfg.band),
            impulse: (it.impulse.x, it.impulse.y),
        });
    }
    done.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.obstacle.cmp(&b.obstacle)));
    traj.modes.push(mode.label().into());
    // the first entry described the start; align modes with steps
    traj.modes.rotate_right(1);

    let cycle_displacements: Vec<f64> = (0..cycles)
        .map(|c| traj.poses[(c + 1) * spc].x - traj.poses[c * spc].x)
        .collect();
    let total = traj.final_pose().x - start.x;
    let count = |c: Classification| done.iter().filter(|i| i.classification == c).count();
    let (b, d, n) = (
        count(Classification::Beneficial),
        count(Classification::Detrimental),
        count(Classification::Neutral),
    );
    let metrics = SimMetrics {
        displacement_per_cycle: if cycles > 0 { total / cycles as f64 } else { 0.0 },
        total_displacement: total,
        stalled: cycle_displacements.last().is_none_or(|d| d.abs() < cfg.stall_threshold),
        cycle_displacements,
        contact_fraction: if steps > 0 {
            engaged_steps as f64 / steps as f64
        } else {
            0.0
        },
        mean_attack_angle: if done.is_empty() {
            None
        } else {
            Some(done.iter().map(|i| i.attack_angle).sum::<f64>() / done.len() as f64)
        },
        p_d: if done.is_empty() {
            0.0
        } else {
            d as f64 / done.len() as f64
        },
        interactions: done.len(),
        beneficial: b,
        detrimental: d,
        neutral: n,
    };
    Ok(ScenarioResult {
        metrics,
        trajectory: traj,
        interactions: done,
    })
}

pub fn run_scenario(
    gait: &GaitSpec,
    env: &Environment,
    cycles: usize,
    spec: &RobotSpec,
    cfg: &SimConfig,
) -> Result<ScenarioResult> {
    run_scenario_from(gait, env, cycles, spec, cfg, Pose::IDENTITY)
}

/// Second-order prediction of the net displacement of a closed gait from
/// the height functions, evaluated pointwise with polar quadrature over the
/// enclosed ellipse.
pub fn height_prediction(gait: &GaitSpec, spec: &RobotSpec, include_bracket: bool) -> Result<Vector3<f64>> {
    let r = rotation(gait.theta - std::f64::consts::FRAC_PI_4);
    // u = wm (sin s, sin(s + phi)) = M (sin s, cos s)
    let m = nalgebra::Matrix2::new(1.0, 0.0, gait.phi.cos(), gait.phi.sin()) * gait.wm;
    let map = r * m;
    let jac = map.determinant().abs();
    if jac == 0.0 {
        return Ok(Vector3::zeros());
    }
    let h = 1e-5 * gait.wm.max(1e-3);
    let da = |w: Vector2<f64>| -> Result<Vector3<f64>> {
        let at = |v: Vector2<f64>| solve_connection_free(ShapePoint::from_vector(v), spec).map(|c| c.matrix);
        let a = at(w)?;
        let d1 = (at(w + Vector2::new(h, 0.0))? - at(w - Vector2::new(h, 0.0))?) / (2.0 * h);
        let d2 = (at(w + Vector2::new(0.0, h))? - at(w - Vector2::new(0.0, h))?) / (2.0 * h);
        let curl = d1.column(1) - d2.column(0);
        let mut out = Vector3::new(curl[0], curl[1], curl[2]);
        if include_bracket {
            out += bracket(&a.column(0).into_owned(), &a.column(1).into_owned());
        }
        Ok(out)
    };
    // Gauss-Legendre in radius, trapezoid in angle (exact for trigonometric polynomials)
    let (nodes, weights) = gauss_legendre_8();
    let n_ang = 48;
    let mut total = Vector3::zeros();
    for (x, wt) in nodes.iter().zip(weights.iter()) {
        let rho = 0.5 * (x + 1.0);
        for a in 0..n_ang {
            let ang = 2.0 * PI * a as f64 / n_ang as f64;
            let p = Vector2::new(gait.center[0], gait.center[1]) + map * Vector2::new(rho * ang.cos(), rho * ang.sin());
            total += da(p)? * (0.5 * wt * rho * 2.0 * PI / n_ang as f64);
        }
    }
    // clockwise traversal for positive omega
    Ok(total * jac * (-gait.omega.signum()))
}

fn gauss_legendre_8() -> ([f64; 8], [f64; 8]) {
    let x = [
        -0.960_289_856_497_536_3,
        -0.796_666_477_413_626_7,
        -0.525_532_409_916_329,
        -0.183_434_642_495_649_8,
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    let w = [
        0.101_228_536_290_376_26,
        0.222_381_034_453_374_47,
        0.313_706_645_877_887_3,
        0.362_683_783_378_362,
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_47,
        0.101_228_536_290_376_26,
    ];
    (x, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyPoint {
    pub epsilon: f64,
    pub simulated: f64,
    pub predicted: f64,
    pub predicted_without_bracket: f64,
    pub error: f64,
    pub error_without_bracket: f64,
}

/// Free-space forward displacement of gaits scaled by each `epsilon` versus
/// the height-function prediction. Loops are centred on `center`; for loops
/// around the straight shape the odd-order error terms cancel by symmetry.
pub fn small_amplitude_consistency(
    phi: f64,
    theta: f64,
    center: ShapePoint,
    epsilons: &[f64],
    spec: &RobotSpec,
    steps_per_cycle: usize,
) -> Result<Vec<ConsistencyPoint>> {
    epsilons
        .par_iter()
        .map(|&eps| {
            let g = GaitSpec::new(phi, theta, eps)
                .with_samples(steps_per_cycle.max(16))
                .with_center(center.w1, center.w2);
            if eps == 0.0 {
                return Ok(ConsistencyPoint {
                    epsilon: 0.0,
                    simulated: 0.0,
                    predicted: 0.0,
                    predicted_without_bracket: 0.0,
                    error: 0.0,
                    error_without_bracket: 0.0,
                });
            }
            let sim = cycle_displacement(&g, ContactCondition::Free, spec, steps_per_cycle)?.x;
            let with = height_prediction(&g, spec, true)?.x;
            let without = height_prediction(&g, spec, false)?.x;
            Ok(ConsistencyPoint {
                epsilon: eps,
                simulated: sim,
                predicted: with,
                predicted_without_bracket: without,
                error: (sim - with).abs(),
                error_without_bracket: (sim - without).abs(),
            })
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Layout used for spacing studies: a straight row of posts along the path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineLayout {
    /// Lateral offset of the line from the start axis.
    pub lateral: f64,
    /// `x` of the first post.
    pub first: f64,
    pub count: usize,
    pub radius: f64,
}

impl Default for LineLayout {
    fn default() -> Self {
        Self {
            lateral: 0.0,
            first: 0.3,
            count: 40,
            radius: crate::env::DEFAULT_OBSTACLE_RADIUS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingRow {
    pub spacing: f64,
    pub displacement: f64,
    pub displacement_per_cycle: f64,
    pub stalled: bool,
    pub interactions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingReport {
    pub rows: Vec<SpacingRow>,
    /// Largest spacing without a stall, if any.
    pub largest_unstalled: Option<f64>,
    /// Optimised single-contact displacement at the head link, when computed.
    pub theory_bound: Option<f64>,
}

/// Run the gait beside a line of posts for each spacing.
pub fn spacing_analysis(
    gait: &GaitSpec,
    spacings: &[f64],
    spec: &RobotSpec,
    cfg: &SimConfig,
    layout: &LineLayout,
    cycles: usize,
) -> Result<SpacingReport> {
    let rows = spacings
        .par_iter()
        .map(|&s| {
            if !(s > 0.0) {
                return Err(OalError::InvalidConfig(format!("spacing must be positive, got {s}")));
            }
            let env = crate::env::obstacle_line(layout.first, layout.lateral, s, layout.count, layout.radius);
            let r = run_scenario(gait, &env, cycles, spec, cfg)?;
            Ok(SpacingRow {
                spacing: s,
                displacement: r.metrics.total_displacement,
                displacement_per_cycle: r.metrics.displacement_per_cycle,
                stalled: r.metrics.stalled,
                interactions: r.metrics.interactions,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let largest_unstalled = rows
        .iter()
        .filter(|r| !r.stalled)
        .map(|r| r.spacing)
        .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.max(s))));
    Ok(SpacingReport {
        rows,
        largest_unstalled,
        theory_bound: None,
    })
}

/// Displacement gained from one isolated post of the layout, run until the
/// body has left it behind or stalled.
pub fn single_post_displacement(
    gait: &GaitSpec,
    spec: &RobotSpec,
    cfg: &SimConfig,
    layout: &LineLayout,
    cycles: usize,
) -> Result<f64> {
    let env = crate::env::obstacle_line(layout.first, layout.lateral, 1.0, 1, layout.radius);
    let with = run_scenario(gait, &env, cycles, spec, cfg)?.metrics.total_displacement;
    let without = run_scenario(gait, &Environment::empty(), cycles, spec, cfg)?
        .metrics
        .total_displacement;
    Ok(with - without)
}

/// Head-link optimum used as the theoretical per-interaction displacement.
pub fn theory_bound(spec: &RobotSpec, opts: &OalOptions) -> Result<f64> {
    let o = OalOptions {
        conservative_limit: opts.conservative_limit.or(Some(CONSERVATIVE_LIMIT)),
        ..*opts
    };
    Ok(optimize_single_obstacle(1, Side::Lhs, spec, &o)?.best.weight)
}

/// Mean and standard error.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Heading change wrapped into `(-pi, pi]`.
pub fn heading_change(traj: &Trajectory) -> f64 {
    wrap_angle(traj.final_pose().alpha - traj.poses[0].alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{obstacle_line, Obstacle};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn spec() -> RobotSpec {
        RobotSpec::default()
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let g = GaitSpec::new(FRAC_PI_2, 0.0, 0.0);
        let d = cycle_displacement(&g, ContactCondition::Free, &spec(), 64).unwrap();
        assert_eq!(d, Pose::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn magnus_matches_fine_rk4() {
        let s = spec();
        let g = GaitSpec::new(1.0, 0.3, 0.8);
        let coarse = cycle_displacement(&g, ContactCondition::Free, &s, 64).unwrap();
        // reference: classical RK4 on (x, y, alpha) with a very fine step
        let n = 20_000;
        let dt = g.period() / n as f64;
        let f = |t: f64, y: &Vector3<f64>| {
            let (w, wd) = g.state(t);
            let xi = solve_connection_free(w, &s).unwrap().apply(wd);
            Pose::new(y.x, y.y, y.z).world_velocity(&xi)
        };
        let mut y = Vector3::zeros();
        for k in 0..n {
            let t = k as f64 * dt;
            let k1 = f(t, &y);
            let k2 = f(t + dt / 2.0, &(y + k1 * dt / 2.0));
            let k3 = f(t + dt / 2.0, &(y + k2 * dt / 2.0));
            let k4 = f(t + dt, &(y + k3 * dt));
            y += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * dt / 6.0;
        }
        assert_abs_diff_eq!(coarse.x, y.x, epsilon = 1e-8);
        assert_abs_diff_eq!(coarse.y, y.y, epsilon = 1e-8);
        assert_abs_diff_eq!(coarse.alpha, y.z, epsilon = 1e-8);
    }

    #[test]
    fn step_halving_converges() {
        let s = spec();
        let g = GaitSpec::new(FRAC_PI_4, FRAC_PI_4, 0.9);
        let a = cycle_displacement(&g, ContactCondition::Free, &s, 64).unwrap().x;
        let b = cycle_displacement(&g, ContactCondition::Free, &s, 128).unwrap().x;
        assert!((a - b).abs() < 0.005 * b.abs().max(1e-9));
    }

    #[test]
    fn left_translation_equivariance() {
        let s = spec();
        let g = GaitSpec::new(0.7, 0.2, 0.6);
        let h = Pose::new(1.3, -0.4, 0.8);
        let a = integrate_cycle(&g, Pose::IDENTITY, ContactCondition::Free, &s, 32, 2).unwrap();
        let b = integrate_cycle(&g, h, ContactCondition::Free, &s, 32, 2).unwrap();
        for (p, q) in a.poses.iter().zip(&b.poses) {
            let hp = h.compose(p);
            assert_abs_diff_eq!(hp.x, q.x, epsilon = 1e-10);
            assert_abs_diff_eq!(hp.y, q.y, epsilon = 1e-10);
            assert_abs_diff_eq!(hp.alpha, q.alpha, epsilon = 1e-10);
        }
    }

    #[test]
    fn time_reparameterisation_invariance() {
        let s = spec();
        let g = GaitSpec::new(1.1, 0.5, 0.7);
        let a = cycle_displacement(&g, ContactCondition::Free, &s, 64).unwrap();
        let b = cycle_displacement(&g.with_omega(0.37), ContactCondition::Free, &s, 64).unwrap();
        assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-8);
        assert_abs_diff_eq!(a.alpha, b.alpha, epsilon = 1e-8);
    }

    #[test]
    fn no_obstacles_means_free() {
        let s = spec();
        let g = GaitSpec::new(FRAC_PI_4, FRAC_PI_4, 0.6).with_samples(32);
        let cfg = SimConfig {
            steps_per_cycle: 32,
            ..SimConfig::default()
        };
        let r = run_scenario(&g, &Environment::empty(), 2, &s, &cfg).unwrap();
        assert!(r.trajectory.modes.iter().all(|m| m == "free"));
        assert_eq!(r.metrics.contact_fraction, 0.0);
        assert_eq!(r.metrics.p_d, 0.0);
        let free = integrate_cycle(&g, Pose::IDENTITY, ContactCondition::Free, &s, 32, 2).unwrap();
        assert_abs_diff_eq!(r.trajectory.final_pose().x, free.final_pose().x, epsilon = 1e-12);
    }

    #[test]
    fn head_contact_persists_while_engaging() {
        let s = spec();
        let w = ShapePoint::new(0.2, -0.3);
        let frames = link_frames(w, &s);
        let head = frames.link(1);
        // obstacle just left of the head link midpoint
        let left = head.position + rotation(head.orientation) * Vector2::new(0.0, 0.02);
        let env = Environment {
            obstacles: vec![Obstacle {
                x: left.x,
                y: left.y,
                r: 0.02,
            }],
            ..Environment::empty()
        };
        let touches = detect_contacts(&Pose::IDENTITY, w, &env, &s, 1e-3, &BTreeMap::new());
        assert_eq!(touches.len(), 1);
        assert_eq!((touches[0].link, touches[0].side), (1, Side::Lhs));
        // pick a shape velocity that presses the head into the obstacle
        let c = solve_connection_free_in_frame(w, &s, crate::chain::FrameTag::Link(1)).unwrap();
        let v2 = c.row(1);
        let wd = v2 / v2.norm();
        let mode = contact_state_machine(&ContactMode::Free, &touches, &env, w, wd, &s).unwrap();
        assert!(matches!(
            mode,
            ContactMode::Single {
                link: 1,
                side: Side::Lhs,
                ..
            }
        ));
        let away = contact_state_machine(&mode, &touches, &env, w, -wd, &s).unwrap();
        assert_eq!(away, ContactMode::Detached);
    }

    #[test]
    fn flanking_obstacles_give_multi() {
        let s = spec();
        let w = ShapePoint::default();
        let env = Environment {
            obstacles: vec![
                Obstacle {
                    x: 0.0,
                    y: 0.02,
                    r: 0.02,
                },
                Obstacle {
                    x: -0.2,
                    y: -0.02,
                    r: 0.02,
                },
            ],
            ..Environment::empty()
        };
        let touches = detect_contacts(&Pose::IDENTITY, w, &env, &s, 1e-3, &BTreeMap::new());
        assert_eq!(touches.len(), 2);
        let mode = contact_state_machine(&ContactMode::Free, &touches, &env, w, Vector2::x(), &s).unwrap();
        assert_eq!(mode, ContactMode::Multi);
    }

    #[test]
    fn mirrored_world_mirrors_trajectory() {
        let s = spec();
        let g = GaitSpec::new(FRAC_PI_4, FRAC_PI_4, 0.8).with_samples(32);
        let cfg = SimConfig {
            steps_per_cycle: 32,
            ..SimConfig::default()
        };
        let env = obstacle_line(0.3, 0.05, 0.3, 8, 0.02);
        let a = run_scenario(&g, &env, 2, &s, &cfg).unwrap();
        let gm = GaitSpec {
            theta: g.theta + PI,
            ..g
        };
        let b = run_scenario(&gm, &env.mirrored(), 2, &s, &cfg).unwrap();
        for (p, q) in a.trajectory.poses.iter().zip(&b.trajectory.poses) {
            assert_abs_diff_eq!(p.x, q.x, epsilon = 1e-9);
            assert_abs_diff_eq!(p.y, -q.y, epsilon = 1e-9);
            assert_abs_diff_eq!(p.alpha, -q.alpha, epsilon = 1e-9);
        }
        let m = &a.metrics;
        assert!((0.0..=1.0).contains(&m.contact_fraction));
        assert!((0.0..=1.0).contains(&m.p_d));
    }

    #[test]
    fn slope_and_stats() {
        let pts: Vec<(f64, f64)> = [0.1, 0.2, 0.4].iter().map(|x| (*x, 3.0 * x * x * x)).collect();
        assert_abs_diff_eq!(loglog_slope(&pts).unwrap(), 3.0, epsilon = 1e-12);
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_abs_diff_eq!(se, (1.0f64 / 3.0).sqrt(), epsilon = 1e-12);
    }
}
