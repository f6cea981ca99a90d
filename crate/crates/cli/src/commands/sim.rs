//! Simulation commands. The sweep and environment helpers are public so the
//! acceptance suite runs exactly what the CLI runs.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use oal_core::env::{
    default_bounds, dense_environment, sparse_environment, DEFAULT_OBSTACLE_RADIUS, DENSE_SPACING, SPARSE_MIN_SPACING,
};
use oal_core::gait::elliptical_gait;
use oal_core::sim::{
    heading_change, mean_and_se, run_scenario, single_post_displacement, spacing_analysis, LineLayout, SimConfig,
    SimMetrics,
};
use oal_core::{link_frames, shape_to_joints, Environment, GaitSpec, RobotSpec};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::{stepped, Ctx};
use crate::args::{SimRunArgs, SimSettings, SpacingArgs, SweepArgs, SweepParam};
use crate::manifest::MANIFEST_FILE;
use crate::output::{Cell, Table};
use crate::svg::{lineplot, world};
use crate::{CliError, CliResult};

/// Generated obstacles closer than this to the starting body are removed.
pub const OVERLAP_CLEARANCE: f64 = 0.05;
/// Wall gap used by `--env walls` without an explicit gap.
pub const DEFAULT_WALL_GAP: f64 = 0.3;

pub fn sim_config(s: &SimSettings) -> SimConfig {
    SimConfig {
        steps_per_cycle: s.steps,
        contact_tolerance: s.tolerance,
        ..SimConfig::default()
    }
}

/// Applies the `--fs` override to the robot.
fn apply_settings(ctx: &mut Ctx, s: &SimSettings) -> CliResult<SimConfig> {
    if let Some(fs) = s.fs {
        ctx.spec = ctx.spec.with_wave_number(fs);
        ctx.spec.validate()?;
    }
    Ok(sim_config(s))
}

pub fn parse_gait(s: &str) -> CliResult<GaitSpec> {
    Ok(s.parse::<GaitSpec>()?)
}

/// Environment named by `kind`: an existing JSON file, or one of `none`,
/// `sparse`, `dense`, `walls[:gap]`. Generated fields use `seed` and lose
/// every obstacle overlapping the starting body of any gait in `gaits`.
/// Returns the file read, if any.
pub fn environment_for(
    kind: &str,
    seed: u64,
    gaits: &[GaitSpec],
    spec: &RobotSpec,
) -> CliResult<(Environment, Option<PathBuf>)> {
    let path = Path::new(kind);
    if path.is_file() {
        return Ok((Environment::from_json_file(path)?, Some(path.to_path_buf())));
    }
    let r = DEFAULT_OBSTACLE_RADIUS;
    let env = match kind {
        "none" => Environment::empty(),
        "sparse" => sparse_environment(seed, default_bounds(), SPARSE_MIN_SPACING, r),
        "dense" => dense_environment(seed, default_bounds(), DENSE_SPACING, r),
        "walls" => Environment::parallel_walls(DEFAULT_WALL_GAP),
        k if k.starts_with("walls:") => {
            let gap: f64 = k[6..]
                .parse()
                .map_err(|_| CliError::Usage(format!("bad wall gap in '{k}'")))?;
            let env = Environment::parallel_walls(gap);
            env.validate()?;
            env
        }
        _ => {
            return Err(CliError::Usage(format!(
                "environment '{kind}' is neither a file nor one of none, sparse, dense, walls[:gap]"
            )))
        }
    };
    let segs: Vec<_> = gaits
        .iter()
        .flat_map(|g| link_frames(g.state(0.0).0, spec).segments())
        .collect();
    Ok((env.without_overlap(&segs, OVERLAP_CLEARANCE), None))
}

pub(super) fn run(ctx: &mut Ctx, a: &SimRunArgs) -> CliResult<()> {
    let cfg = apply_settings(ctx, &a.settings)?;
    let gait = parse_gait(&a.gait)?;
    gait.validate(Some(ctx.spec.joint_limit))?;
    let (env, file) = environment_for(&a.env, ctx.global.seed, &[gait], &ctx.spec)?;
    ctx.inputs.extend(file);
    let res = run_scenario(&gait, &env, a.settings.cycles, &ctx.spec, &cfg)?;
    let path = elliptical_gait(&gait);
    // joint angles are reported, not enforced: the limit bounds shape space
    let joints: Vec<_> = path.points.iter().map(|w| shape_to_joints(*w, &ctx.spec)).collect();
    let max_joint = joints.iter().map(|j| j.max_abs()).fold(0.0, f64::max);

    let mut env_json = env.to_json_string();
    env_json.push('\n');
    ctx.out.write_bytes("env.json", env_json.as_bytes())?;
    ctx.out.write_json(
        "metrics.json",
        &json!({
            "gait": gait.to_string(),
            "cycles": a.settings.cycles,
            "metrics": res.metrics,
            "final_pose": res.trajectory.final_pose(),
            "heading_change": heading_change(&res.trajectory),
            "max_joint_angle": max_joint,
            "manifest": MANIFEST_FILE,
        }),
    )?;

    let tr = &res.trajectory;
    let mut t = Table::new(&["t", "x", "y", "alpha", "w1", "w2", "contact_mode"]);
    for k in 0..tr.times.len() {
        let (p, w) = (tr.poses[k], tr.shapes[k]);
        t.push(vec![
            tr.times[k].into(),
            p.x.into(),
            p.y.into(),
            p.alpha.into(),
            w.w1.into(),
            w.w2.into(),
            tr.modes[k].clone().into(),
        ]);
    }
    ctx.out.write_csv("trajectory.csv", &t)?;

    let mut t = Table::new(&[
        "obstacle",
        "link",
        "side",
        "start",
        "end",
        "attack_angle",
        "classification",
        "impulse_x",
        "impulse_y",
    ]);
    for i in &res.interactions {
        t.push(vec![
            i.obstacle.into(),
            i.link.into(),
            i.side.to_string().into(),
            i.start.into(),
            i.end.into(),
            i.attack_angle.into(),
            format!("{:?}", i.classification).to_ascii_lowercase().into(),
            i.impulse.0.into(),
            i.impulse.1.into(),
        ]);
    }
    ctx.out.write_csv("interactions.csv", &t)?;

    let mut t = Table::new(&["t", "w1", "w2"]);
    for (k, w) in path.points.iter().enumerate() {
        t.push(vec![path.times[k].into(), w.w1.into(), w.w2.into()]);
    }
    ctx.out.write_csv("gait_path.csv", &t)?;
    let names: Vec<String> = (0..ctx.spec.num_joints).map(|j| format!("joint_{j}")).collect();
    let mut headers = vec!["t"];
    headers.extend(names.iter().map(String::as_str));
    let mut t = Table::new(&headers);
    for (k, j) in joints.iter().enumerate() {
        let mut row: Vec<Cell> = vec![path.times[k].into()];
        row.extend(j.angles().iter().map(|&v| Cell::F(v)));
        t.push(row);
    }
    ctx.out.write_csv("joints.csv", &t)?;

    if ctx.out.svg {
        let spc = cfg.steps_per_cycle.max(4);
        let mut lines = vec![tr.poses.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>()];
        for k in (0..tr.poses.len()).step_by(spc) {
            let f = link_frames(tr.shapes[k], &ctx.spec);
            let mut outline = Vec::new();
            for (head, tail) in f.segments() {
                let a = tr.poses[k].transform_point(head);
                let b = tr.poses[k].transform_point(tail);
                if outline.is_empty() {
                    outline.push((a.x, a.y));
                }
                outline.push((b.x, b.y));
            }
            lines.push(outline);
        }
        let circles: Vec<_> = env.obstacles.iter().map(|o| (o.x, o.y, o.r)).collect();
        let svg = world(
            &format!("trajectory, {}", gait),
            &circles,
            &lines,
            env.walls.map(|w| w.gap),
        );
        ctx.out.write_svg("trajectory.svg", &svg)?;
    }
    Ok(())
}

pub(super) fn spacing(ctx: &mut Ctx, a: &SpacingArgs) -> CliResult<()> {
    let cfg = apply_settings(ctx, &a.settings)?;
    let gait = parse_gait(&a.gait)?;
    gait.validate(Some(ctx.spec.joint_limit))?;
    let spacings = stepped(a.min, a.max, a.step)?;
    let layout = LineLayout {
        lateral: a.lateral,
        first: a.first,
        count: a.count,
        radius: DEFAULT_OBSTACLE_RADIUS,
    };
    let report = spacing_analysis(&gait, &spacings, &ctx.spec, &cfg, &layout, a.settings.cycles)?;
    let single = single_post_displacement(&gait, &ctx.spec, &cfg, &layout, a.settings.cycles)?;
    let mut t = Table::new(&[
        "spacing",
        "displacement",
        "displacement_per_cycle",
        "stalled",
        "interactions",
    ]);
    for r in &report.rows {
        t.push(vec![
            r.spacing.into(),
            r.displacement.into(),
            r.displacement_per_cycle.into(),
            r.stalled.into(),
            r.interactions.into(),
        ]);
    }
    ctx.out.write_csv("spacing.csv", &t)?;
    let stalled: Vec<f64> = report.rows.iter().filter(|r| r.stalled).map(|r| r.spacing).collect();
    ctx.out.write_json(
        "spacing.json",
        &json!({
            "gait": gait.to_string(),
            "layout": layout,
            "stall_threshold": cfg.stall_threshold,
            "largest_unstalled": report.largest_unstalled,
            "smallest_stalled": stalled.iter().copied().reduce(f64::min),
            "single_post_displacement": single,
            "rows": report.rows,
            "manifest": MANIFEST_FILE,
        }),
    )?;
    let pts: Vec<_> = report
        .rows
        .iter()
        .map(|r| (r.spacing, r.displacement_per_cycle))
        .collect();
    let svg = lineplot(
        "displacement beside a row of posts",
        "spacing (BL)",
        "BL per cycle",
        &[("gait", pts)],
    );
    ctx.out.write_svg("spacing.svg", &svg)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRun {
    pub value: f64,
    pub seed: u64,
    pub metrics: SimMetrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub value: f64,
    pub n: usize,
    /// Mean forward displacement per cycle.
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub mean_contact_fraction: f64,
    /// Detrimental interactions over all interactions, pooled over seeds.
    pub p_d: f64,
    pub stalled: usize,
}

/// Printed values such as 1.571 round pi/2 up; phi within this of pi/2 is snapped.
pub const PHI_SNAP: f64 = 1e-3;

pub fn with_param(base: &GaitSpec, param: SweepParam, v: f64) -> GaitSpec {
    let mut g = *base;
    match param {
        SweepParam::Phi if v > FRAC_PI_2 && v - FRAC_PI_2 < PHI_SNAP => g.phi = FRAC_PI_2,
        SweepParam::Phi => g.phi = v,
        SweepParam::Theta => g.theta = v,
        SweepParam::Wm => g.wm = v,
    }
    g
}

/// Every (value, seed) pair, run in parallel and returned value-major.
/// Each seed's environment is cleared around the starting body of every
/// swept gait, so all values see the same obstacles.
#[allow(clippy::too_many_arguments)]
pub fn sweep_runs(
    base: &GaitSpec,
    param: SweepParam,
    values: &[f64],
    env_kind: &str,
    seeds: std::ops::Range<u64>,
    spec: &RobotSpec,
    cfg: &SimConfig,
    cycles: usize,
) -> CliResult<Vec<SweepRun>> {
    let jobs: Vec<(f64, u64)> = values
        .iter()
        .flat_map(|&v| seeds.clone().map(move |s| (v, s)))
        .collect();
    let gaits: Vec<GaitSpec> = values.iter().map(|&v| with_param(base, param, v)).collect();
    for g in &gaits {
        g.validate(Some(spec.joint_limit))?;
    }
    jobs.par_iter()
        .map(|&(value, seed)| {
            let g = with_param(base, param, value);
            // one environment per seed, shared by every swept value
            let (env, _) = environment_for(env_kind, seed, &gaits, spec)?;
            let r = run_scenario(&g, &env, cycles, spec, cfg)?;
            Ok(SweepRun {
                value,
                seed,
                metrics: r.metrics,
            })
        })
        .collect()
}

pub fn summarize(values: &[f64], runs: &[SweepRun]) -> Vec<SweepSummary> {
    values
        .iter()
        .map(|&v| {
            let rs: Vec<&SweepRun> = runs.iter().filter(|r| r.value == v).collect();
            let d: Vec<f64> = rs.iter().map(|r| r.metrics.displacement_per_cycle).collect();
            let (mean, se) = mean_and_se(&d);
            let n = d.len();
            let inter: usize = rs.iter().map(|r| r.metrics.interactions).sum();
            let det: usize = rs.iter().map(|r| r.metrics.detrimental).sum();
            SweepSummary {
                value: v,
                n,
                mean,
                sd: se * (n as f64).sqrt(),
                se,
                mean_contact_fraction: rs.iter().map(|r| r.metrics.contact_fraction).sum::<f64>() / n.max(1) as f64,
                p_d: if inter == 0 { 0.0 } else { det as f64 / inter as f64 },
                stalled: rs.iter().filter(|r| r.metrics.stalled).count(),
            }
        })
        .collect()
}

pub(super) fn sweep(ctx: &mut Ctx, a: &SweepArgs) -> CliResult<()> {
    let cfg = apply_settings(ctx, &a.settings)?;
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be positive".into()));
    }
    let base = parse_gait(&a.gait)?;
    let seeds = ctx.global.seed..ctx.global.seed + a.seeds;
    ctx.seeds = seeds.clone().collect();
    if Path::new(&a.env).is_file() {
        ctx.inputs.push(PathBuf::from(&a.env));
    }
    let runs = sweep_runs(
        &base,
        a.param,
        &a.values,
        &a.env,
        seeds,
        &ctx.spec,
        &cfg,
        a.settings.cycles,
    )?;
    let summary = summarize(&a.values, &runs);

    let mut t = Table::new(&[
        "value",
        "seed",
        "displacement_per_cycle",
        "total_displacement",
        "contact_fraction",
        "p_d",
        "interactions",
        "beneficial",
        "detrimental",
        "neutral",
        "stalled",
    ]);
    for r in &runs {
        let m = &r.metrics;
        t.push(vec![
            r.value.into(),
            Cell::I(r.seed as i64),
            m.displacement_per_cycle.into(),
            m.total_displacement.into(),
            m.contact_fraction.into(),
            m.p_d.into(),
            m.interactions.into(),
            m.beneficial.into(),
            m.detrimental.into(),
            m.neutral.into(),
            m.stalled.into(),
        ]);
    }
    ctx.out.write_csv("sweep_runs.csv", &t)?;
    let mut t = Table::new(&[
        "value",
        "n",
        "mean",
        "sd",
        "se",
        "mean_contact_fraction",
        "p_d",
        "stalled",
    ]);
    for s in &summary {
        t.push(vec![
            s.value.into(),
            s.n.into(),
            s.mean.into(),
            s.sd.into(),
            s.se.into(),
            s.mean_contact_fraction.into(),
            s.p_d.into(),
            s.stalled.into(),
        ]);
    }
    ctx.out.write_csv("sweep_summary.csv", &t)?;
    let best = summary
        .iter()
        .reduce(|a, b| if b.mean > a.mean { b } else { a })
        .map(|s| s.value);
    ctx.out.write_json(
        "sweep.json",
        &json!({
            "param": a.param,
            "env": a.env,
            "gait": base.to_string(),
            "seeds": ctx.seeds,
            "best_value": best,
            "summary": summary,
            "manifest": MANIFEST_FILE,
        }),
    )?;
    let pts: Vec<_> = summary.iter().map(|s| (s.value, s.mean)).collect();
    let lo: Vec<_> = summary.iter().map(|s| (s.value, s.mean - s.se)).collect();
    let hi: Vec<_> = summary.iter().map(|s| (s.value, s.mean + s.se)).collect();
    let svg = lineplot(
        &format!("sweep over {:?} in {}", a.param, a.env),
        "value",
        "BL per cycle",
        &[("mean", pts), ("mean - se", lo), ("mean + se", hi)],
    );
    ctx.out.write_svg("sweep.svg", &svg)
}
