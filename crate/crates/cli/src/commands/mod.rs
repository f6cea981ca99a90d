//! Command implementations. Each command fills an [`OutputDir`] and the
//! dispatcher closes it with a manifest.

mod connection;
pub use connection::parse_frame;
mod fields;
mod oal;
pub mod sim;

use std::path::PathBuf;

use clap::Parser;
use oal_core::{Lattice, RobotSpec};
use serde_json::json;

use crate::args::{Cli, Command, FieldsCommand, GlobalArgs, LatticeArgs, OalCommand, SimCommand};
use crate::manifest::{sha256_hex, RunManifest};
use crate::output::{Cell, OutputDir, Table};
use crate::{CliError, CliResult};

/// State shared by one command run.
pub(crate) struct Ctx {
    pub spec: RobotSpec,
    pub global: GlobalArgs,
    pub out: OutputDir,
    pub inputs: Vec<PathBuf>,
    pub seeds: Vec<u64>,
}

pub fn execute(cli: Cli, recorded: Vec<String>) -> CliResult<()> {
    if let Command::Replay(r) = &cli.command {
        return replay(&r.manifest, &cli.global);
    }
    match cli.global.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(cli, recorded))
        }
        None => dispatch(cli, recorded),
    }
}

fn load_spec(global: &GlobalArgs) -> CliResult<RobotSpec> {
    match &global.config {
        Some(p) => Ok(RobotSpec::from_json_file(p)?),
        None => Ok(RobotSpec::default()),
    }
}

fn dispatch(cli: Cli, recorded: Vec<String>) -> CliResult<()> {
    let spec = load_spec(&cli.global)?;
    let out = OutputDir::create(&cli.global.out_dir, cli.global.want_svg())?;
    let mut ctx = Ctx {
        spec,
        global: cli.global.clone(),
        out,
        inputs: cli.global.config.iter().cloned().collect(),
        seeds: vec![cli.global.seed],
    };
    match &cli.command {
        Command::Connection(a) => connection::run(&mut ctx, a)?,
        Command::Fields { command } => match command {
            FieldsCommand::Height(a) => fields::height(&mut ctx, a)?,
            FieldsCommand::ScanFs(a) => fields::scan_fs(&mut ctx, a)?,
            FieldsCommand::Potential(a) => fields::potential(&mut ctx, a)?,
        },
        Command::Oal { command } => match command {
            OalCommand::Optimize(a) => oal::optimize(&mut ctx, a)?,
            OalCommand::EffectiveSet(a) => oal::effective_set(&mut ctx, a)?,
            OalCommand::Dense(a) => oal::dense(&mut ctx, a)?,
        },
        Command::Sim { command } => match command {
            SimCommand::Run(a) => sim::run(&mut ctx, a)?,
            SimCommand::Spacing(a) => sim::spacing(&mut ctx, a)?,
            SimCommand::Sweep(a) => sim::sweep(&mut ctx, a)?,
        },
        Command::Replay(_) => unreachable!("handled in execute"),
    }
    let config = json!({
        "robot": ctx.spec,
        "global": cli.global,
        "command": cli.command,
    });
    let mut manifest = RunManifest::new(recorded, config, ctx.seeds.clone());
    for p in &ctx.inputs {
        manifest.add_input(p)?;
    }
    ctx.out.finish(manifest)
}

/// Re-run a recorded command into the current `--out-dir`.
fn replay(path: &std::path::Path, global: &GlobalArgs) -> CliResult<()> {
    let m = RunManifest::load(path)?;
    for input in &m.inputs {
        match std::fs::read(&input.path) {
            Ok(bytes) if sha256_hex(&bytes) == input.sha256 => {}
            Ok(_) => eprintln!("warning: {} changed since the recorded run", input.path),
            Err(e) => return Err(CliError::io(&input.path, e)),
        }
    }
    let argv = std::iter::once("oal".to_string()).chain(m.command.iter().cloned());
    let mut cli =
        Cli::try_parse_from(argv).map_err(|e| CliError::Usage(format!("manifest command does not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Usage("a manifest cannot replay another replay".into()));
    }
    cli.global.out_dir = global.out_dir.clone();
    if global.threads.is_some() {
        cli.global.threads = global.threads;
    }
    execute(cli, m.command)
}

pub(crate) fn lattice(spec: &RobotSpec, a: &LatticeArgs) -> CliResult<Lattice> {
    Ok(Lattice::new(a.resolution, spec.joint_limit)?)
}

/// `from, from + step, ...` up to `to` inclusive, free of float drift.
pub fn stepped(from: f64, to: f64, step: f64) -> CliResult<Vec<f64>> {
    Ok(oal_core::fields::wave_number_range(from, to, step)?)
}

/// Grid CSV with leading `i, j, w1, w2, valid` columns.
pub(crate) fn grid_table(lattice: &Lattice, valid: &[bool], names: &[&str], columns: &[Vec<f64>]) -> Table {
    let mut headers = vec!["i", "j", "w1", "w2", "valid"];
    headers.extend_from_slice(names);
    let mut t = Table::new(&headers);
    for idx in 0..lattice.len() {
        let (i, j) = lattice.ij(idx);
        let w = lattice.point_at(idx);
        let mut row: Vec<Cell> = vec![i.into(), j.into(), w.w1.into(), w.w2.into(), valid[idx].into()];
        row.extend(columns.iter().map(|c| Cell::F(c[idx])));
        t.push(row);
    }
    t
}

/// Grid metadata plus row-major component arrays.
pub(crate) fn grid_json(lattice: &Lattice, valid: &[bool], names: &[&str], columns: &[Vec<f64>]) -> serde_json::Value {
    let comps: serde_json::Map<String, serde_json::Value> = names
        .iter()
        .zip(columns)
        .map(|(n, c)| (n.to_string(), json!(c)))
        .collect();
    json!({
        "n": lattice.n,
        "theta_m": lattice.theta_m,
        "coords": (0..lattice.side()).map(|i| lattice.coord(i)).collect::<Vec<_>>(),
        "layout": "row-major, index = i*(n+1) + j, i along w1",
        "valid": valid,
        "components": comps,
    })
}

pub(crate) fn heatmap_svg(
    title: &str,
    lattice: &Lattice,
    values: &[f64],
    valid: &[bool],
    paths: &[Vec<(f64, f64)>],
) -> String {
    crate::svg::Heatmap {
        title,
        side: lattice.side(),
        extent: lattice.theta_m,
        values,
        valid,
        paths,
    }
    .render()
}
