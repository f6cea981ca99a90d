use std::f64::consts::{FRAC_PI_2, PI};

use oal_core::fields::CONSERVATIVE_LIMIT;
use oal_core::optimizer::{
    best_per_phi, dense_obstacle_gait, effective_from_outcome, fit_ellipse, optimize_single_obstacle, ArcWeighting,
    OalOptions, OptimalPathResult, SingleObstacleOutcome, V1Frame,
};
use oal_core::Lattice;
use serde_json::{json, Value};

use super::fields::contact_side;
use super::{heatmap_svg, lattice, Ctx};
use crate::args::{DenseArgs, EffectiveSetArgs, FamilyArg, OptimizeArgs, V1FrameArg, WeightingArg};
use crate::manifest::MANIFEST_FILE;
use crate::output::{Cell, Table};
use crate::svg::lineplot;
use crate::{CliError, CliResult};

fn options(ctx: &Ctx, a: &OptimizeArgs) -> CliResult<OalOptions> {
    let mut o = OalOptions::for_spec(&ctx.spec, a.lattice.resolution)?;
    o.v1_frame = match a.v1_frame {
        V1FrameArg::Central => V1Frame::CentralAxis,
        V1FrameArg::Link => V1Frame::ContactLink,
    };
    o.weighting = match a.weighting {
        WeightingArg::Tail => ArcWeighting::Tail,
        WeightingArg::Midpoint => ArcWeighting::Midpoint,
    };
    o.conservative_limit = (!ctx.global.override_conservativeness).then_some(CONSERVATIVE_LIMIT);
    Ok(o)
}

fn solve(ctx: &Ctx, a: &OptimizeArgs) -> CliResult<(SingleObstacleOutcome, Lattice)> {
    let o = options(ctx, a)?;
    let side = contact_side(&a.contact)?;
    let out = optimize_single_obstacle(a.contact.link, side, &ctx.spec, &o)?;
    Ok((out, o.lattice))
}

fn path_json(r: &OptimalPathResult, lat: &Lattice, audit: bool) -> Value {
    json!({
        "start": r.path.first().map(|&v| { let p = lat.point_at(v); [p.w1, p.w2] }),
        "path": r.points(lat).iter().map(|p| [p.w1, p.w2]).collect::<Vec<_>>(),
        "weight_BL": r.weight,
        "arc_weights": r.arc_weights,
        "constraint_audit": if audit { "pass" } else { "fail" },
    })
}

fn xy(r: &OptimalPathResult, lat: &Lattice) -> Vec<(f64, f64)> {
    r.points(lat).iter().map(|p| (p.w1, p.w2)).collect()
}

fn overlay(
    ctx: &mut Ctx,
    name: &str,
    out: &SingleObstacleOutcome,
    lat: &Lattice,
    paths: &[Vec<(f64, f64)>],
) -> CliResult<()> {
    let p = &out.fit.potential;
    let title = format!("potential of V2 with paths, link {} {}", out.link, out.side);
    ctx.out
        .write_svg(name, &heatmap_svg(&title, lat, &p.values, &p.valid, paths))?;
    let v1: Vec<f64> = out.v1.values.iter().map(|v| v.norm()).collect();
    let title = format!("|V1| with paths, link {} {}", out.link, out.side);
    let stem = name.trim_end_matches(".svg");
    ctx.out.write_svg(
        &format!("{stem}_v1.svg"),
        &heatmap_svg(&title, lat, &v1, &out.v1.valid, paths),
    )
}

pub(super) fn optimize(ctx: &mut Ctx, a: &OptimizeArgs) -> CliResult<()> {
    let (out, lat) = solve(ctx, a)?;
    let audit = oal_core::optimizer::audit_path(&out.best.points(&lat), &out.v2);
    let mut body = path_json(&out.best, &lat, audit);
    let extra = json!({
        "link": out.link,
        "side": out.side.to_string(),
        "rho": out.fit.rho,
        "conservative_limit": CONSERVATIVE_LIMIT,
        "conservativeness_overridden": ctx.global.override_conservativeness,
        "manifest": MANIFEST_FILE,
    });
    if let (Value::Object(b), Value::Object(e)) = (&mut body, extra) {
        b.extend(e);
    }
    ctx.out.write_json("optimize.json", &body)?;
    let mut t = Table::new(&["step", "w1", "w2"]);
    for (k, p) in out.best.points(&lat).iter().enumerate() {
        t.push(vec![k.into(), p.w1.into(), p.w2.into()]);
    }
    ctx.out.write_csv("path.csv", &t)?;
    let paths = vec![xy(&out.best, &lat)];
    overlay(ctx, "optimize.svg", &out, &lat, &paths)
}

pub(super) fn effective_set(ctx: &mut Ctx, a: &EffectiveSetArgs) -> CliResult<()> {
    let (out, lat) = solve(ctx, &a.optimize)?;
    let set = effective_from_outcome(&out, a.threshold);
    let ellipse = if set.is_empty() {
        json!(null)
    } else {
        match fit_ellipse(&set.points(&lat)) {
            Ok(f) => json!(f),
            Err(e) => json!({ "error": e.to_string() }),
        }
    };
    ctx.out.write_json(
        "effective_set.json",
        &json!({
            "link": set.link,
            "side": set.side.to_string(),
            "threshold": set.threshold,
            "count": set.len(),
            "rho": set.rho,
            "gaits": set.gaits.iter().map(|g| path_json(&g.result, &lat, g.audit_pass)).collect::<Vec<_>>(),
            "ellipse": ellipse,
            "manifest": MANIFEST_FILE,
        }),
    )?;
    let mut t = Table::new(&["gait", "step", "w1", "w2", "weight_BL"]);
    for (k, g) in set.gaits.iter().enumerate() {
        for (s, p) in g.result.points(&lat).iter().enumerate() {
            t.push(vec![
                k.into(),
                s.into(),
                p.w1.into(),
                p.w2.into(),
                g.result.weight.into(),
            ]);
        }
    }
    ctx.out.write_csv("effective_set.csv", &t)?;
    let paths: Vec<_> = set.gaits.iter().map(|g| xy(&g.result, &lat)).collect();
    overlay(ctx, "effective_set.svg", &out, &lat, &paths)
}

pub(super) fn dense(ctx: &mut Ctx, a: &DenseArgs) -> CliResult<()> {
    let FamilyArg::Ellipse = a.family;
    if a.phi_steps == 0 || a.theta_steps == 0 {
        return Err(CliError::Usage("--phi-steps and --theta-steps must be positive".into()));
    }
    let lat = lattice(&ctx.spec, &a.lattice)?;
    let phis: Vec<f64> = (0..=a.phi_steps)
        .map(|k| FRAC_PI_2 * k as f64 / a.phi_steps as f64)
        .collect();
    let thetas: Vec<f64> = (0..a.theta_steps)
        .map(|k| PI * k as f64 / a.theta_steps as f64)
        .collect();
    // largest amplitude keeping every orientation of the flattest loop inside the lattice
    let wm = a.wm.unwrap_or(ctx.spec.joint_limit * std::f64::consts::FRAC_1_SQRT_2);
    let res = dense_obstacle_gait(&ctx.spec, lat, &phis, &thetas, wm, a.samples)?;
    let mut t = Table::new(&["phi", "theta", "wm", "direction", "surface_integral", "line_integral"]);
    for e in &res.evaluations {
        t.push(
            [e.phi, e.theta, e.wm, e.direction, e.surface_integral, e.line_integral]
                .into_iter()
                .map(Cell::F)
                .collect(),
        );
    }
    ctx.out.write_csv("dense.csv", &t)?;
    let per_phi = best_per_phi(&res);
    let b = res.best;
    let stokes = (b.surface_integral - b.line_integral).abs() / b.line_integral.abs().max(1e-300);
    ctx.out.write_json(
        "dense.json",
        &json!({
            "family": "ellipse",
            "best": b,
            "best_phi": b.phi,
            "phi_step": FRAC_PI_2 / a.phi_steps as f64,
            "best_per_phi": per_phi,
            "stokes_relative_error": stokes,
            "manifest": MANIFEST_FILE,
        }),
    )?;
    let svg = lineplot(
        "best surface integral per phi",
        "phi (rad)",
        "surface integral",
        &[("multi-contact", per_phi)],
    );
    ctx.out.write_svg("dense.svg", &svg)
}
