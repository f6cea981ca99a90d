use oal_core::rft::{connection_grid_in_frame, ContactCondition};
use oal_core::FrameTag;
use serde_json::json;

use super::{grid_json, grid_table, heatmap_svg, lattice, Ctx};
use crate::args::ConnectionArgs;
use crate::manifest::MANIFEST_FILE;
use crate::{CliError, CliResult};

/// Value columns of a connection grid, in CSV order.
pub const COLUMNS: [&str; 6] = ["x_w1", "x_w2", "y_w1", "y_w2", "theta_w1", "theta_w2"];

/// `central`, `link:<i>` or `link<i>`.
pub fn parse_frame(s: &str) -> CliResult<FrameTag> {
    let t = s.trim().to_ascii_lowercase();
    if t == "central" {
        return Ok(FrameTag::CentralAxis);
    }
    let idx = t
        .strip_prefix("link:")
        .or_else(|| t.strip_prefix("link"))
        .and_then(|r| r.parse::<usize>().ok())
        .filter(|&i| i >= 1)
        .ok_or_else(|| CliError::Usage(format!("unknown frame '{s}' (use central or link:<i>)")))?;
    Ok(FrameTag::Link(idx))
}

fn frame_label(f: FrameTag) -> String {
    match f {
        FrameTag::CentralAxis => "central".into(),
        FrameTag::Link(i) => format!("link:{i}"),
    }
}

pub(super) fn run(ctx: &mut Ctx, a: &ConnectionArgs) -> CliResult<()> {
    let lat = lattice(&ctx.spec, &a.lattice)?;
    let cond: ContactCondition = a.condition.parse()?;
    let frame = match &a.frame {
        Some(f) => parse_frame(f)?,
        None => cond.natural_frame(),
    };
    if let FrameTag::Link(i) = frame {
        if i > ctx.spec.num_links() {
            return Err(CliError::Usage(format!(
                "frame link {i} outside 1..={}",
                ctx.spec.num_links()
            )));
        }
    }
    let grid = connection_grid_in_frame(cond, lat, &ctx.spec, frame)?;
    if let Some((idx, msg)) = grid.failures.first() {
        let (i, j) = lat.ij(*idx);
        let w = lat.point_at(*idx);
        return Err(CliError::Numerical(format!(
            "connection solve failed at grid point (i={i}, j={j}), w = ({}, {}): {msg} ({} failing points)",
            w.w1,
            w.w2,
            grid.failures.len()
        )));
    }
    let columns: Vec<Vec<f64>> = (0..6)
        .map(|c| grid.grid.values.iter().map(|m| m[(c / 2, c % 2)]).collect())
        .collect();
    let valid = &grid.grid.valid;
    ctx.out
        .write_csv("connection.csv", &grid_table(&lat, valid, &COLUMNS, &columns))?;
    ctx.out.write_json(
        "connection.json",
        &json!({
            "condition": cond.to_string(),
            "frame": frame_label(frame),
            "grid": grid_json(&lat, valid, &COLUMNS, &columns),
            "manifest": MANIFEST_FILE,
        }),
    )?;
    for (k, name) in ["x", "y", "theta"].iter().enumerate() {
        for c in 0..2 {
            let title = format!("A_{name} (w{}-component), {cond}", c + 1);
            let svg = heatmap_svg(&title, &lat, &columns[2 * k + c], valid, &[]);
            ctx.out.write_svg(&format!("connection_{name}_w{}.svg", c + 1), &svg)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_parse() {
        assert_eq!(parse_frame("central").unwrap(), FrameTag::CentralAxis);
        assert_eq!(parse_frame("link:3").unwrap(), FrameTag::Link(3));
        assert_eq!(parse_frame("LINK2").unwrap(), FrameTag::Link(2));
        assert!(parse_frame("link:0").is_err());
        assert!(parse_frame("head").is_err());
    }
}
