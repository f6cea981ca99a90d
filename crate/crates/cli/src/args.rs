use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "oal",
    version,
    about = "Gait design and simulation for limbless robots that push off obstacles"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Robot configuration JSON; built-in defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory receiving outputs and manifest.json.
    #[arg(long, global = true, default_value = "out")]
    #[serde(skip)]
    pub out_dir: PathBuf,

    /// Base seed for generated environments.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,

    /// Also write SVG plots (default).
    #[arg(long, global = true, overrides_with = "no_svg")]
    pub svg: bool,

    /// Skip SVG plots.
    #[arg(long, global = true, overrides_with = "svg")]
    pub no_svg: bool,

    /// Continue when the lateral field fails the conservativeness check.
    #[arg(long, global = true)]
    pub override_conservativeness: bool,
}

impl GlobalArgs {
    pub fn want_svg(&self) -> bool {
        !self.no_svg
    }
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Local connection on the shape lattice.
    Connection(ConnectionArgs),
    /// Height functions, wave-number scans and potentials.
    Fields {
        #[command(subcommand)]
        command: FieldsCommand,
    },
    /// Obstacle-aided gait optimisation.
    Oal {
        #[command(subcommand)]
        command: OalCommand,
    },
    /// Quasistatic simulation among obstacles.
    Sim {
        #[command(subcommand)]
        command: SimCommand,
    },
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LatticeArgs {
    /// Lattice intervals per axis; the grid has (n+1)^2 points.
    #[arg(long, default_value_t = 40)]
    pub resolution: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConnectionArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,

    /// free, multi or single:link=<i>,side=<lhs|rhs>.
    #[arg(long, default_value = "free")]
    pub condition: String,

    /// Output frame: central or link:<i>; defaults to the condition's natural frame.
    #[arg(long)]
    pub frame: Option<String>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldsCommand {
    /// Height function and its curl and bracket terms.
    Height(HeightArgs),
    /// Frobenius norm of the forward curl term over wave numbers.
    ScanFs(ScanFsArgs),
    /// Potential fitted to the lateral field of a contact link.
    Potential(PotentialArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HeightArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,

    /// Wave number override.
    #[arg(long)]
    pub fs: Option<f64>,

    #[arg(long, default_value = "free")]
    pub condition: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowsArg {
    Forward,
    All,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScanFsArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,

    #[arg(long, default_value_t = 0.25)]
    pub from: f64,

    #[arg(long, default_value_t = 1.5)]
    pub to: f64,

    #[arg(long, default_value_t = 0.05)]
    pub step: f64,

    /// Connection rows entering the norm.
    #[arg(long, value_enum, default_value_t = RowsArg::Forward)]
    pub rows: RowsArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ContactArgs {
    /// Contact link, 1 = head.
    #[arg(long, default_value_t = 1)]
    pub link: usize,

    /// Obstacle side: lhs or rhs.
    #[arg(long, default_value = "lhs")]
    pub side: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PotentialArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,

    #[command(flatten)]
    pub contact: ContactArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum V1FrameArg {
    Central,
    Link,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightingArg {
    Tail,
    Midpoint,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,

    #[command(flatten)]
    pub contact: ContactArgs,

    /// Frame of the forward displacement field.
    #[arg(long, value_enum, default_value_t = V1FrameArg::Central)]
    pub v1_frame: V1FrameArg,

    /// Where arc weights sample the forward field.
    #[arg(long, value_enum, default_value_t = WeightingArg::Tail)]
    pub weighting: WeightingArg,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OalCommand {
    /// Best single-obstacle gait for one contact link.
    Optimize(OptimizeArgs),
    /// Best path from every start that reaches a displacement threshold.
    EffectiveSet(EffectiveSetArgs),
    /// Elliptical gait maximising the all-sides constrained height integral.
    Dense(DenseArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EffectiveSetArgs {
    #[command(flatten)]
    pub optimize: OptimizeArgs,

    /// Minimum displacement per interaction, body lengths.
    #[arg(long, default_value_t = 0.1)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    Ellipse,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DenseArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,

    #[arg(long, value_enum, default_value_t = FamilyArg::Ellipse)]
    pub family: FamilyArg,

    /// Number of intervals over phi in [0, pi/2].
    #[arg(long, default_value_t = 8)]
    pub phi_steps: usize,

    /// Number of orientations over [0, pi).
    #[arg(long, default_value_t = 12)]
    pub theta_steps: usize,

    /// Gait amplitude; defaults to the joint limit over sqrt(2).
    #[arg(long)]
    pub wm: Option<f64>,

    #[arg(long, default_value_t = 256)]
    pub samples: usize,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimCommand {
    /// Simulate one gait in one environment.
    Run(SimRunArgs),
    /// Stall study along a row of posts.
    Spacing(SpacingArgs),
    /// Monte-Carlo sweep of one gait parameter over seeded environments.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimSettings {
    #[arg(long, default_value_t = 10)]
    pub cycles: usize,

    /// Integration steps per gait cycle.
    #[arg(long, default_value_t = 128)]
    pub steps: usize,

    /// Contact detection tolerance, body lengths.
    #[arg(long, default_value_t = oal_core::sim::DEFAULT_CONTACT_TOLERANCE)]
    pub tolerance: f64,

    /// Wave number override.
    #[arg(long)]
    pub fs: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimRunArgs {
    /// Environment JSON file, or sparse, dense, walls[:gap], none.
    #[arg(long, default_value = "none")]
    pub env: String,

    /// Gait, e.g. ellipse:phi=0.785,theta=0.785,wm=1.0
    #[arg(long)]
    pub gait: String,

    #[command(flatten)]
    pub settings: SimSettings,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SpacingArgs {
    #[arg(long)]
    pub gait: String,

    #[arg(long, default_value_t = 0.1)]
    pub min: f64,

    #[arg(long, default_value_t = 1.0)]
    pub max: f64,

    #[arg(long, default_value_t = 0.05)]
    pub step: f64,

    /// Lateral offset of the row from the start axis.
    #[arg(long, default_value_t = 0.0)]
    pub lateral: f64,

    /// Position of the first post ahead of the body center.
    #[arg(long, default_value_t = 0.3)]
    pub first: f64,

    #[arg(long, default_value_t = 60)]
    pub count: usize,

    #[command(flatten)]
    pub settings: SimSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    Phi,
    Theta,
    Wm,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub param: SweepParam,

    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,

    /// sparse, dense or an environment JSON file (same file for every seed).
    #[arg(long, default_value = "sparse")]
    pub env: String,

    /// Number of seeded environments, starting at --seed.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,

    /// Gait supplying the parameters that are not swept.
    #[arg(long, default_value = "ellipse:phi=0.7853981633974483,theta=0.7853981633974483,wm=1")]
    pub gait: String,

    #[command(flatten)]
    pub settings: SimSettings,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    /// manifest.json from an earlier run.
    pub manifest: PathBuf,
}
