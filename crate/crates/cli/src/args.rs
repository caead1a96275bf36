use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use panofuse::evalkit::{EvalOptions, TrajectoryMode};
use panofuse::world::AblationVariant;

#[derive(Debug, Parser)]
#[command(
    name = "panofuse",
    version,
    about = "Fuse chains of 360° panoramas into navigable point-cloud worlds"
)]
pub struct Cli {
    /// Worker threads for parallel stages; defaults to one per core.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// More log output (-v info, -vv debug); RUST_LOG also applies.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a world and write world.ply, poses.json and provenance.json.
    Generate(GenerateArgs),
    /// Render perspective frames of a world along a sampled trajectory.
    Render(RenderArgs),
    /// Score a world's coverage (and depth, when ground truth is known).
    Eval(EvalArgs),
    /// Build and score the full pipeline against its ablated variants.
    Ablate(AblateArgs),
    /// Mask reference depth maps and compare seam quality across blends.
    Depthfill(DepthfillArgs),
    /// Summarize a world directory, PLY, PFM, PNG or JSON file.
    Inspect(InspectArgs),
}

/// World configuration: a JSON file, `--set key=value` assignments and
/// named flags, in increasing precedence. Each named flag sets the config
/// key shown in its help.
#[derive(Debug, Clone, Default, Args)]
pub struct WorldArgs {
    /// World configuration JSON; missing keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Set any config key by dotted path, e.g. `oracle.http.attempts=5`; the value is JSON or a bare string.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// prompt
    #[arg(long)]
    pub prompt: Option<String>,
    /// n: number of panoramas (at least 2)
    #[arg(long)]
    pub n: Option<usize>,
    /// width
    #[arg(long)]
    pub width: Option<usize>,
    /// height
    #[arg(long)]
    pub height: Option<usize>,
    /// spacing = {mode: median, factor}
    #[arg(long, conflicts_with = "spacing_distance")]
    pub spacing_factor: Option<f64>,
    /// spacing = {mode: absolute, distance}
    #[arg(long)]
    pub spacing_distance: Option<f64>,
    /// direction, as x,y,z
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub direction: Option<Vec<f64>>,
    /// alpha_deg
    #[arg(long)]
    pub alpha_deg: Option<f64>,
    /// radius = {auto: {percentile}}
    #[arg(long, conflicts_with = "radius_fixed")]
    pub radius_percentile: Option<f64>,
    /// radius = {fixed: {radius}}
    #[arg(long)]
    pub radius_fixed: Option<f64>,
    /// deform
    #[arg(long, value_parser = ["push", "project"])]
    pub deform: Option<String>,
    /// scale_mode
    #[arg(long, value_parser = ["none", "median", "overlap"])]
    pub scale_mode: Option<String>,
    /// ldp
    #[arg(long)]
    pub ldp: Option<bool>,
    /// layered_fill
    #[arg(long)]
    pub layered_fill: Option<bool>,
    /// blend_method
    #[arg(long, value_parser = ["harmonic", "interpolation", "naive"])]
    pub blend_method: Option<String>,
    /// blend.k
    #[arg(long)]
    pub blend_k: Option<usize>,
    /// blend.tol
    #[arg(long)]
    pub blend_tol: Option<f64>,
    /// seam_guard: a log-ratio tolerance, or `off`
    #[arg(long)]
    pub seam_guard: Option<String>,
    /// oracle.backend
    #[arg(long, value_parser = ["synthetic", "http"])]
    pub oracle: Option<String>,
    /// oracle.http.base_url
    #[arg(long)]
    pub http_url: Option<String>,
    /// oracle.http.attempts
    #[arg(long)]
    pub http_attempts: Option<u32>,
    /// oracle.http.timeout_ms
    #[arg(long)]
    pub http_timeout_ms: Option<u64>,
    /// oracle.scene.preset
    #[arg(long, value_parser = ["canyon", "plain"])]
    pub scene: Option<String>,
    /// oracle.scene.objects
    #[arg(long)]
    pub objects: Option<usize>,
    /// oracle.scene.extent
    #[arg(long)]
    pub extent: Option<f64>,
    /// oracle.corruption.scale
    #[arg(long)]
    pub depth_scale: Option<f64>,
    /// oracle.corruption.offset
    #[arg(long)]
    pub depth_offset: Option<f64>,
    /// oracle.corruption.noise
    #[arg(long)]
    pub depth_noise: Option<f64>,
    /// seed
    #[arg(long)]
    pub seed: Option<u64>,
}

impl WorldArgs {
    /// Config keys set by named flags, in a fixed order.
    pub fn overrides(&self) -> Result<Vec<(&'static str, Value)>> {
        let mut out: Vec<(&'static str, Value)> = Vec::new();
        let mut put = |k: &'static str, v: Option<Value>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        put("prompt", self.prompt.as_ref().map(|v| json!(v)));
        put("n", self.n.map(|v| json!(v)));
        put("width", self.width.map(|v| json!(v)));
        put("height", self.height.map(|v| json!(v)));
        put(
            "spacing",
            self.spacing_factor
                .map(|v| json!({"mode": "median", "factor": v})),
        );
        put(
            "spacing",
            self.spacing_distance
                .map(|v| json!({"mode": "absolute", "distance": v})),
        );
        if self.direction.as_ref().is_some_and(|v| v.len() != 3) {
            bail!("--direction expects three comma-separated numbers");
        }
        put("direction", self.direction.as_ref().map(|v| json!(v)));
        put("alpha_deg", self.alpha_deg.map(|v| json!(v)));
        put(
            "radius",
            self.radius_percentile
                .map(|v| json!({"auto": {"percentile": v}})),
        );
        put(
            "radius",
            self.radius_fixed.map(|v| json!({"fixed": {"radius": v}})),
        );
        put("deform", self.deform.as_ref().map(|v| json!(v)));
        put("scale_mode", self.scale_mode.as_ref().map(|v| json!(v)));
        put("ldp", self.ldp.map(|v| json!(v)));
        put("layered_fill", self.layered_fill.map(|v| json!(v)));
        put("blend_method", self.blend_method.as_ref().map(|v| json!(v)));
        put("blend.k", self.blend_k.map(|v| json!(v)));
        put("blend.tol", self.blend_tol.map(|v| json!(v)));
        let guard = match self.seam_guard.as_deref() {
            None => None,
            Some("off") | Some("none") => Some(Value::Null),
            Some(t) => match t.parse::<f64>() {
                Ok(v) => Some(json!(v)),
                Err(_) => bail!("--seam-guard expects a number or `off`, got `{t}`"),
            },
        };
        put("seam_guard", guard);
        put("oracle.backend", self.oracle.as_ref().map(|v| json!(v)));
        put(
            "oracle.http.base_url",
            self.http_url.as_ref().map(|v| json!(v)),
        );
        put("oracle.http.attempts", self.http_attempts.map(|v| json!(v)));
        put(
            "oracle.http.timeout_ms",
            self.http_timeout_ms.map(|v| json!(v)),
        );
        put("oracle.scene.preset", self.scene.as_ref().map(|v| json!(v)));
        put("oracle.scene.objects", self.objects.map(|v| json!(v)));
        put("oracle.scene.extent", self.extent.map(|v| json!(v)));
        put(
            "oracle.corruption.scale",
            self.depth_scale.map(|v| json!(v)),
        );
        put(
            "oracle.corruption.offset",
            self.depth_offset.map(|v| json!(v)),
        );
        put(
            "oracle.corruption.noise",
            self.depth_noise.map(|v| json!(v)),
        );
        put("seed", self.seed.map(|v| json!(v)));
        Ok(out)
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub world: WorldArgs,
    /// Output directory, created if needed.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write per-stage rasters under <out>/debug.
    #[arg(long)]
    pub debug: bool,
}

/// Camera sampling around the world's panorama poses.
#[derive(Debug, Clone, Args)]
pub struct TrajectoryArgs {
    /// Cameras per trajectory mode.
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub trajectory_seed: u64,
    #[arg(long, default_value_t = 128)]
    pub view_width: usize,
    #[arg(long, default_value_t = 128)]
    pub view_height: usize,
    /// Horizontal field of view in degrees.
    #[arg(long, default_value_t = 90.0)]
    pub fov_deg: f64,
    #[arg(long, default_value_t = 45.0)]
    pub max_pitch_deg: f64,
    /// Fraction of the pose chain that translated cameras travel along.
    #[arg(long, default_value_t = 0.8)]
    pub translation_fraction: f64,
    /// Largest sideways displacement of translated cameras off the chain.
    #[arg(long, default_value_t = 0.0)]
    pub lateral_offset: f64,
}

impl TrajectoryArgs {
    pub fn options(&self, modes: Vec<TrajectoryMode>) -> EvalOptions {
        EvalOptions {
            modes,
            count: self.count,
            seed: self.trajectory_seed,
            width: self.view_width,
            height: self.view_height,
            fov: self.fov_deg.to_radians(),
            max_pitch: self.max_pitch_deg.to_radians(),
            translation_fraction: self.translation_fraction,
            lateral_offset: self.lateral_offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    Rotation,
    Translation,
    Combined,
}

impl From<ModeArg> for TrajectoryMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Rotation => TrajectoryMode::Rotation,
            ModeArg::Translation => TrajectoryMode::Translation,
            ModeArg::Combined => TrajectoryMode::Combined,
        }
    }
}

/// Splat sizing overrides; the world's recorded sizing applies otherwise.
#[derive(Debug, Clone, Args)]
pub struct SplatArgs {
    /// Splat radius in world units.
    #[arg(long)]
    pub splat_world_radius: Option<f64>,
    /// Smallest splat angular radius, in radians.
    #[arg(long)]
    pub splat_min_angle: Option<f64>,
    /// Largest splat radius in pixels.
    #[arg(long)]
    pub splat_max_radius_px: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// World directory holding world.ply and poses.json.
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Rotation)]
    pub mode: ModeArg,
    #[command(flatten)]
    pub trajectory: TrajectoryArgs,
    #[command(flatten)]
    pub splat: SplatArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub world: PathBuf,
    /// Trajectory modes to score.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [ModeArg::Rotation, ModeArg::Translation, ModeArg::Combined])]
    pub modes: Vec<ModeArg>,
    #[command(flatten)]
    pub trajectory: TrajectoryArgs,
    #[command(flatten)]
    pub splat: SplatArgs,
    /// Skip depth metrics even when the world came from a synthetic scene.
    #[arg(long)]
    pub no_ground_truth: bool,
    /// Method name in the report.
    #[arg(long, default_value = "world")]
    pub method: String,
    /// Write the JSON report here and print a table; otherwise JSON goes to stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum VariantArg {
    Full,
    Naive,
    Interpolation,
    NoLdp,
}

impl From<VariantArg> for AblationVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => AblationVariant::Full,
            VariantArg::Naive => AblationVariant::Naive,
            VariantArg::Interpolation => AblationVariant::Interpolation,
            VariantArg::NoLdp => AblationVariant::NoLdp,
        }
    }
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub world: WorldArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [VariantArg::Full, VariantArg::Naive, VariantArg::Interpolation, VariantArg::NoLdp])]
    pub variants: Vec<VariantArg>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [ModeArg::Rotation, ModeArg::Translation, ModeArg::Combined])]
    pub modes: Vec<ModeArg>,
    #[command(flatten)]
    pub trajectory: TrajectoryArgs,
    /// Write the JSON report here.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// Harness configuration: a JSON file, `--set` assignments and named
/// flags, in increasing precedence.
#[derive(Debug, Args)]
pub struct DepthfillArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Reference depth map (PFM, equirectangular); synthetic scenes otherwise.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// scenes
    #[arg(long)]
    pub scenes: Option<usize>,
    /// seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// width
    #[arg(long)]
    pub width: Option<usize>,
    /// height
    #[arg(long)]
    pub height: Option<usize>,
    /// mask_fraction
    #[arg(long)]
    pub mask_fraction: Option<f64>,
    /// scale_range, as lo,hi
    #[arg(long, value_delimiter = ',')]
    pub scale_range: Option<Vec<f64>>,
    /// offset_range, as lo,hi
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub offset_range: Option<Vec<f64>>,
    /// noise
    #[arg(long)]
    pub noise: Option<f64>,
    /// objects
    #[arg(long)]
    pub objects: Option<usize>,
    /// band
    #[arg(long)]
    pub band: Option<usize>,
    /// Write the JSON report here.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

impl DepthfillArgs {
    pub fn overrides(&self) -> Result<Vec<(&'static str, Value)>> {
        for (name, v) in [
            ("--scale-range", &self.scale_range),
            ("--offset-range", &self.offset_range),
        ] {
            if v.as_ref().is_some_and(|v| v.len() != 2) {
                bail!("{name} expects two comma-separated numbers");
            }
        }
        let mut out: Vec<(&'static str, Value)> = Vec::new();
        let mut put = |k: &'static str, v: Option<Value>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        put("scenes", self.scenes.map(|v| json!(v)));
        put("seed", self.seed.map(|v| json!(v)));
        put("width", self.width.map(|v| json!(v)));
        put("height", self.height.map(|v| json!(v)));
        put("mask_fraction", self.mask_fraction.map(|v| json!(v)));
        put("scale_range", self.scale_range.as_ref().map(|v| json!(v)));
        put("offset_range", self.offset_range.as_ref().map(|v| json!(v)));
        put("noise", self.noise.map(|v| json!(v)));
        put("objects", self.objects.map(|v| json!(v)));
        put("band", self.band.map(|v| json!(v)));
        Ok(out)
    }
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}
