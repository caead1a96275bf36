use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{
    AblateArgs, DepthfillArgs, EvalArgs, GenerateArgs, InspectArgs, RenderArgs, SplatArgs,
    WorldArgs,
};
use crate::{debug, overrides};
use panofuse::codec::{load_pfm, load_png, save_mask_png, save_pfm, save_png};
use panofuse::evalkit::{
    evaluate_world, run_depthfill, run_depthfill_on, sample_trajectories, DepthfillSpec,
    EvalReport, TrajectoryMode,
};
use panofuse::geom::{PointCloud, Pose};
use panofuse::oracle::SceneSpec;
use panofuse::render::{render_perspective, RenderOutput, SplatParams};
use panofuse::world::{
    build_world, load_ply, load_world, run_ablation, save_world, OracleBackend, PosesFile,
    Provenance, WorldConfig, POSES_FILE, PROVENANCE_FILE, WORLD_FILE,
};

/// `print!` that returns write errors instead of panicking on a closed pipe.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        write!(std::io::stdout().lock(), $($t)*)?
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        writeln!(std::io::stdout().lock(), $($t)*)?
    }};
}

/// Marks errors in the user's configuration or arguments.
#[derive(Debug)]
struct ConfigProblem(String);

impl fmt::Display for ConfigProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigProblem {}

fn config_problem(e: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(ConfigProblem(format!("{e:#}")))
}

/// True when stdout was closed early, as by `panofuse inspect ... | head`.
pub fn is_closed_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

pub fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<ConfigProblem>().is_some()
            || matches!(
                c.downcast_ref::<panofuse::Error>(),
                Some(panofuse::Error::Config(_))
            )
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn world_config(a: &WorldArgs) -> Result<WorldConfig> {
    let flags = a.overrides().map_err(config_problem)?;
    let c: WorldConfig =
        overrides::layered(a.config.as_deref(), &a.set, flags).map_err(config_problem)?;
    c.validate()?;
    Ok(c)
}

/// The synthetic scene a world was generated from, if any.
fn ground_truth(config: &WorldConfig) -> Option<SceneSpec> {
    (config.oracle.backend == OracleBackend::Synthetic)
        .then(|| config.oracle.scene.build(config.seed))
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let mut config = world_config(&a.world)?;
    let debug = a.debug || config.keep_artifacts;
    config.keep_artifacts = debug;
    let oracles = config.oracles()?;
    let bundle = build_world(&config, &oracles)?;
    save_world(&bundle, &a.out).with_context(|| format!("writing world to {}", a.out.display()))?;
    if debug {
        let n = debug::dump(&bundle, &a.out.join("debug"))?;
        log::info!("wrote {n} debug rasters");
    }
    outln!(
        "wrote {} points from {} panoramas to {}",
        bundle.cloud.len(),
        bundle.poses.len(),
        a.out.display()
    );
    Ok(())
}

struct LoadedWorld {
    cloud: PointCloud,
    poses: Vec<Pose>,
    provenance: Option<Provenance>,
}

impl LoadedWorld {
    /// A full world directory, or a bare `world.ply` plus `poses.json`.
    fn open(dir: &Path) -> Result<Self> {
        if dir.join(PROVENANCE_FILE).exists() {
            let b = load_world(dir).with_context(|| format!("loading world {}", dir.display()))?;
            return Ok(LoadedWorld {
                cloud: b.cloud,
                poses: b.poses,
                provenance: Some(b.provenance),
            });
        }
        let cloud = load_ply(&dir.join(WORLD_FILE))
            .with_context(|| format!("loading {}", dir.join(WORLD_FILE).display()))?;
        let path = dir.join(POSES_FILE);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let poses: PosesFile =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(LoadedWorld {
            cloud,
            poses: poses.poses,
            provenance: None,
        })
    }

    /// The recorded splat sizing, else one pixel per point, with overrides.
    fn splat(&self, a: &SplatArgs) -> SplatParams {
        let mut s = self
            .provenance
            .as_ref()
            .map_or_else(SplatParams::exact, |p| p.splat);
        if let Some(v) = a.splat_world_radius {
            s.world_radius = v;
        }
        if let Some(v) = a.splat_min_angle {
            s.min_angle = v;
        }
        if let Some(v) = a.splat_max_radius_px {
            s.max_radius_px = v;
        }
        s
    }
}

#[derive(Serialize)]
struct FrameEntry {
    index: usize,
    pose: Pose,
    coverage: f64,
    image: String,
    depth: String,
    visibility: String,
}

#[derive(Serialize)]
struct FrameManifest {
    mode: TrajectoryMode,
    count: usize,
    seed: u64,
    width: usize,
    height: usize,
    fov_x: f64,
    splat: SplatParams,
    mean_coverage: f64,
    frames: Vec<FrameEntry>,
}

pub fn render(a: &RenderArgs) -> Result<()> {
    let world = LoadedWorld::open(&a.world)?;
    let splat = world.splat(&a.splat);
    let mode: TrajectoryMode = a.mode.into();
    let options = a.trajectory.options(vec![mode]);
    let k = options.intrinsics().map_err(|e| config_problem(e.into()))?;
    let poses = sample_trajectories(&options.spec(mode), &world.poses)
        .map_err(|e| config_problem(e.into()))?;
    if world.cloud.is_empty() {
        log::warn!("world is empty; every frame will be black");
    }
    let frames: Vec<RenderOutput> = poses
        .par_iter()
        .map(|p| render_perspective(&world.cloud, p, &k, &splat))
        .collect::<panofuse::Result<_>>()?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut entries = Vec::with_capacity(frames.len());
    for (index, (pose, f)) in poses.iter().zip(&frames).enumerate() {
        let entry = FrameEntry {
            index,
            pose: *pose,
            coverage: f.coverage(),
            image: format!("frame_{index:04}.png"),
            depth: format!("depth_{index:04}.pfm"),
            visibility: format!("visibility_{index:04}.png"),
        };
        save_png(&f.image, &a.out.join(&entry.image))?;
        save_pfm(&f.depth, &a.out.join(&entry.depth))?;
        save_mask_png(&f.visibility, &a.out.join(&entry.visibility))?;
        log::info!("frame {index}: coverage {:.4}", entry.coverage);
        entries.push(entry);
    }
    let mean_coverage = entries.iter().map(|e| e.coverage).sum::<f64>() / entries.len() as f64;
    let manifest = FrameManifest {
        mode,
        count: entries.len(),
        seed: options.seed,
        width: k.width,
        height: k.height,
        fov_x: k.fov_x,
        splat,
        mean_coverage,
        frames: entries,
    };
    write_json(&manifest, &a.out.join("frames.json"))?;
    outln!(
        "rendered {} {} frames to {}; mean coverage {:.4}",
        manifest.count,
        mode.name(),
        a.out.display(),
        mean_coverage
    );
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let world = LoadedWorld::open(&a.world)?;
    let splat = world.splat(&a.splat);
    let options = a
        .trajectory
        .options(a.modes.iter().map(|&m| m.into()).collect());
    let gt = match (&world.provenance, a.no_ground_truth) {
        (Some(p), false) => ground_truth(&p.config),
        _ => None,
    };
    let report = evaluate_world(
        &a.method,
        &world.cloud,
        &world.poses,
        &splat,
        &options,
        gt.as_ref(),
    )?;
    match &a.out {
        Some(path) => {
            write_json(&report, path)?;
            out!("{}", EvalReport::table(std::slice::from_ref(&report)));
            for m in &report.modes {
                if let Some(d) = &m.depth {
                    outln!(
                        "{}: abs_rel {:.4} rmse {:.4} delta1 {:.4}",
                        m.mode.name(),
                        d.abs_rel,
                        d.rmse,
                        d.delta1
                    );
                }
            }
        }
        None => outln!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

pub fn ablate(a: &AblateArgs) -> Result<()> {
    let config = world_config(&a.world)?;
    let oracles = config.oracles()?;
    let options = a
        .trajectory
        .options(a.modes.iter().map(|&m| m.into()).collect());
    let variants: Vec<_> = a.variants.iter().map(|&v| v.into()).collect();
    let gt = ground_truth(&config);
    let report = run_ablation(&config, &oracles, &variants, &options, gt.as_ref())?;
    if let Some(path) = &a.out {
        write_json(&report, path)?;
    }
    out!("{}", report.table());
    Ok(())
}

pub fn depthfill(a: &DepthfillArgs) -> Result<()> {
    let spec: DepthfillSpec = a
        .overrides()
        .and_then(|flags| overrides::layered(a.config.as_deref(), &a.set, flags))
        .map_err(config_problem)?;
    let report = match &a.reference {
        Some(path) => {
            let reference =
                load_pfm(path).with_context(|| format!("loading {}", path.display()))?;
            run_depthfill_on(&reference, &spec)?
        }
        None => {
            spec.validate().map_err(|e| config_problem(e.into()))?;
            run_depthfill(&spec)?
        }
    };
    if let Some(path) = &a.out {
        write_json(&report, path)?;
    }
    out!("{}", report.table());
    Ok(())
}

fn bounds(cloud: &PointCloud) -> Value {
    if cloud.is_empty() {
        return Value::Null;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &cloud.positions {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    json!({"min": lo, "max": hi})
}

fn summarize_world(dir: &Path) -> Result<Value> {
    let world = LoadedWorld::open(dir)?;
    let mut v = json!({
        "kind": "world",
        "points": world.cloud.len(),
        "poses": world.poses.len(),
        "bounds": bounds(&world.cloud),
    });
    if let Some(p) = &world.provenance {
        let calls: Vec<_> = p.oracle_log.iter().flat_map(|t| t.calls.iter()).collect();
        let extra = json!({
            "format": p.format,
            "lambda": p.lambda,
            "direction": p.direction,
            "reference_median": p.reference_median,
            "splat": p.splat,
            "partial_points": p.partial_points,
            "fill_points": p.fill_points,
            "spheres": p.spheres.iter().map(|s| json!({
                "index": s.index,
                "points": s.points,
                "scale": s.scale,
                "foreground_points": s.foreground_points,
                "removed": s.removed,
            })).collect::<Vec<_>>(),
            "fills": p.fills.iter().map(|f| json!({
                "pair": f.pair,
                "points": f.points,
                "diagnostics": f.diagnostics,
            })).collect::<Vec<_>>(),
            "oracle_calls": calls.len(),
            "failed_oracle_calls": calls.iter().filter(|c| !c.ok).count(),
        });
        if let (Value::Object(a), Value::Object(b)) = (&mut v, extra) {
            a.extend(b);
        }
    }
    Ok(v)
}

fn summarize(path: &Path) -> Result<Value> {
    if path.is_dir() {
        return summarize_world(path);
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "ply" => {
            let cloud = load_ply(path)?;
            Ok(json!({"kind": "ply", "points": cloud.len(), "bounds": bounds(&cloud)}))
        }
        "pfm" => {
            let d = load_pfm(path)?;
            let mut defined: Vec<f64> = d
                .data()
                .iter()
                .copied()
                .filter(|v| panofuse::geom::depth_defined(*v))
                .collect();
            let n = defined.len();
            let median = panofuse::geom::median_in_place(&mut defined);
            let (lo, hi) = defined
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                    (a.min(*v), b.max(*v))
                });
            Ok(json!({
                "kind": "pfm",
                "width": d.width(),
                "height": d.height(),
                "defined": n,
                "min": (n > 0).then_some(lo),
                "median": median,
                "max": (n > 0).then_some(hi),
            }))
        }
        "png" => {
            let img = load_png(path)?;
            Ok(json!({"kind": "png", "width": img.width(), "height": img.height()}))
        }
        "json" => {
            let text = std::fs::read_to_string(path)?;
            let v: Value = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            let keys: Vec<String> = v
                .as_object()
                .map(|o| o.keys().cloned().collect())
                .unwrap_or_default();
            Ok(json!({"kind": "json", "keys": keys}))
        }
        _ => bail!(
            "cannot inspect {}: expected a world directory or a .ply, .pfm, .png or .json file",
            path.display()
        ),
    }
}

pub fn inspect(a: &InspectArgs) -> Result<()> {
    let v = summarize(&a.path)?;
    if a.json {
        outln!("{}", serde_json::to_string_pretty(&v)?);
        return Ok(());
    }
    if let Value::Object(m) = &v {
        for (k, val) in m {
            match val {
                Value::String(s) => outln!("{k}: {s}"),
                Value::Array(items) if items.iter().all(Value::is_object) && !items.is_empty() => {
                    outln!("{k}:");
                    for it in items {
                        outln!("  {it}");
                    }
                }
                other => outln!("{k}: {other}"),
            }
        }
    }
    Ok(())
}
