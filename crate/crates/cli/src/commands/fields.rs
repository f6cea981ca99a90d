use oal_core::fields::{frobenius_scan, height_function, potential_fit, ScanRows, CONSERVATIVE_LIMIT};
use oal_core::rft::{lateral_row_field, ContactCondition, Side};
use serde_json::json;

use super::{grid_json, grid_table, heatmap_svg, lattice, stepped, Ctx};
use crate::args::{ContactArgs, HeightArgs, PotentialArgs, RowsArg, ScanFsArgs};
use crate::manifest::MANIFEST_FILE;
use crate::output::Table;
use crate::svg::lineplot;
use crate::{CliError, CliResult};

pub const HEIGHT_COLUMNS: [&str; 9] = [
    "da_x",
    "da_y",
    "da_theta",
    "curl_x",
    "curl_y",
    "curl_theta",
    "bracket_x",
    "bracket_y",
    "bracket_theta",
];

pub(super) fn contact_side(c: &ContactArgs) -> CliResult<Side> {
    Ok(c.side.parse::<Side>()?)
}

pub(super) fn height(ctx: &mut Ctx, a: &HeightArgs) -> CliResult<()> {
    if let Some(fs) = a.fs {
        ctx.spec = ctx.spec.with_wave_number(fs);
        ctx.spec.validate()?;
    }
    let lat = lattice(&ctx.spec, &a.lattice)?;
    let cond: ContactCondition = a.condition.parse()?;
    let h = height_function(cond, &ctx.spec, lat)?;
    let valid: Vec<bool> = (0..lat.len()).map(|i| (0..3).all(|k| h.da[k].valid[i])).collect();
    let columns: Vec<Vec<f64>> =
        h.da.iter()
            .chain(&h.curl_term)
            .chain(&h.bracket_term)
            .map(|g| g.values.clone())
            .collect();
    ctx.out
        .write_csv("height.csv", &grid_table(&lat, &valid, &HEIGHT_COLUMNS, &columns))?;
    let max_abs: serde_json::Map<String, serde_json::Value> = HEIGHT_COLUMNS
        .iter()
        .zip(h.da.iter().chain(&h.curl_term).chain(&h.bracket_term))
        .map(|(n, g)| (n.to_string(), json!(g.max_abs())))
        .collect();
    ctx.out.write_json(
        "height.json",
        &json!({
            "condition": cond.to_string(),
            "wave_number": ctx.spec.wave_number,
            "max_abs": max_abs,
            "grid": grid_json(&lat, &valid, &HEIGHT_COLUMNS, &columns),
            "manifest": MANIFEST_FILE,
        }),
    )?;
    let fs = ctx.spec.wave_number;
    for (k, name) in [(0, "da_x"), (3, "curl_x"), (6, "bracket_x"), (2, "da_theta")] {
        let svg = heatmap_svg(&format!("{name}, {cond}, fs = {fs}"), &lat, &columns[k], &valid, &[]);
        ctx.out.write_svg(&format!("height_{name}.svg"), &svg)?;
    }
    Ok(())
}

pub(super) fn scan_fs(ctx: &mut Ctx, a: &ScanFsArgs) -> CliResult<()> {
    let lat = lattice(&ctx.spec, &a.lattice)?;
    let values = stepped(a.from, a.to, a.step)?;
    let rows = match a.rows {
        RowsArg::Forward => ScanRows::Forward,
        RowsArg::All => ScanRows::All,
    };
    let scan = frobenius_scan(&values, &ctx.spec, lat, rows)?;
    let mut t = Table::new(&["fs", "frobenius"]);
    for &(fs, v) in &scan {
        t.push(vec![fs.into(), v.into()]);
    }
    ctx.out.write_csv("scan_fs.csv", &t)?;
    let (arg, max) = scan
        .iter()
        .copied()
        .reduce(|a, b| if b.1 > a.1 { b } else { a })
        .ok_or_else(|| CliError::Usage("empty scan".into()))?;
    ctx.out.write_json(
        "scan_fs.json",
        &json!({
            "rows": a.rows,
            "argmax_fs": arg,
            "max": max,
            "scan": scan,
            "manifest": MANIFEST_FILE,
        }),
    )?;
    let svg = lineplot("Frobenius norm of dA_x", "fs", "norm", &[("free", scan)]);
    ctx.out.write_svg("scan_fs.svg", &svg)
}

pub(super) fn potential(ctx: &mut Ctx, a: &PotentialArgs) -> CliResult<()> {
    let lat = lattice(&ctx.spec, &a.lattice)?;
    let side = contact_side(&a.contact)?;
    let v2 = lateral_row_field(a.contact.link, side, lat, &ctx.spec)?;
    let fit = potential_fit(&v2)?;
    let names = ["v2_w1", "v2_w2", "potential"];
    let columns = vec![
        v2.values.iter().map(|v| v.x).collect::<Vec<_>>(),
        v2.values.iter().map(|v| v.y).collect(),
        fit.potential.values.clone(),
    ];
    ctx.out
        .write_csv("potential.csv", &grid_table(&lat, &v2.valid, &names, &columns))?;
    ctx.out.write_json(
        "potential.json",
        &json!({
            "link": a.contact.link,
            "side": side.to_string(),
            "rho": fit.rho,
            "iterations": fit.iterations,
            "conservative_limit": CONSERVATIVE_LIMIT,
            "conservative": fit.rho <= CONSERVATIVE_LIMIT,
            "grid": grid_json(&lat, &v2.valid, &names, &columns),
            "manifest": MANIFEST_FILE,
        }),
    )?;
    let svg = heatmap_svg(
        &format!("potential of V2, link {}, {side}", a.contact.link),
        &lat,
        &columns[2],
        &v2.valid,
        &[],
    );
    ctx.out.write_svg("potential.svg", &svg)
}
