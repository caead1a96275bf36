use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    depth_metrics, sample_trajectories, DepthMetricsReport, TrajectoryMode, TrajectorySpec,
};
use crate::error::{Error, Result};
use crate::geom::{PointCloud, Pose};
use crate::oracle::SceneSpec;
use crate::render::{render_perspective, PerspectiveIntrinsics, SplatParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub modes: Vec<TrajectoryMode>,
    pub count: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub fov: f64,
    pub max_pitch: f64,
    pub translation_fraction: f64,
    pub lateral_offset: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        let t = TrajectorySpec::default();
        EvalOptions {
            modes: TrajectoryMode::ALL.to_vec(),
            count: t.count,
            seed: 0,
            width: 128,
            height: 128,
            fov: t.fov,
            max_pitch: t.max_pitch,
            translation_fraction: t.translation_fraction,
            lateral_offset: t.lateral_offset,
        }
    }
}

impl EvalOptions {
    pub fn spec(&self, mode: TrajectoryMode) -> TrajectorySpec {
        TrajectorySpec {
            mode,
            count: self.count,
            seed: self.seed,
            max_pitch: self.max_pitch,
            translation_fraction: self.translation_fraction,
            fov: self.fov,
            lateral_offset: self.lateral_offset,
        }
    }

    pub fn intrinsics(&self) -> Result<PerspectiveIntrinsics> {
        PerspectiveIntrinsics::new(self.width, self.height, self.fov)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseEval {
    pub pose: Pose,
    pub coverage: f64,
    pub depth: Option<DepthMetricsReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: TrajectoryMode,
    pub mean_coverage: f64,
    pub min_coverage: f64,
    /// Per-pose depth metrics averaged over the trajectory set.
    pub depth: Option<DepthMetricsReport>,
    /// No-reference image quality score; not computed by this toolkit.
    pub brisque: Option<f64>,
    pub poses: Vec<PoseEval>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub modes: Vec<ModeReport>,
}

impl EvalReport {
    pub fn mode(&self, mode: TrajectoryMode) -> Option<&ModeReport> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    /// One row per report, coverage and image-quality columns per mode.
    pub fn table(reports: &[EvalReport]) -> String {
        let mut modes: Vec<TrajectoryMode> = Vec::new();
        for r in reports {
            for m in &r.modes {
                if !modes.contains(&m.mode) {
                    modes.push(m.mode);
                }
            }
        }
        let name_w = reports
            .iter()
            .map(|r| r.method.len())
            .max()
            .unwrap_or(6)
            .max(6);
        let mut out = String::new();
        let _ = write!(out, "{:<name_w$}", "method");
        for m in &modes {
            let _ = write!(
                out,
                " | {:>11} {:>9}",
                format!("{} cov", abbrev(*m)),
                "brisque"
            );
        }
        out.push('\n');
        let _ = write!(out, "{}", "-".repeat(name_w));
        for _ in &modes {
            let _ = write!(out, "-+-{}", "-".repeat(21));
        }
        out.push('\n');
        for r in reports {
            let _ = write!(out, "{:<name_w$}", r.method);
            for m in &modes {
                match r.mode(*m) {
                    Some(mr) => {
                        let b = mr.brisque.map_or("n/a".to_string(), |v| format!("{v:.2}"));
                        let _ = write!(out, " | {:>10.2}% {:>9}", 100.0 * mr.mean_coverage, b);
                    }
                    None => {
                        let _ = write!(out, " | {:>11} {:>9}", "-", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

fn abbrev(m: TrajectoryMode) -> &'static str {
    match m {
        TrajectoryMode::Rotation => "rot",
        TrajectoryMode::Translation => "trans",
        TrajectoryMode::Combined => "comb",
    }
}

/// Renders `cloud` from sampled trajectories around the world poses and
/// scores coverage, plus depth accuracy when a ground-truth scene is given.
pub fn evaluate_world(
    method: &str,
    cloud: &PointCloud,
    poses: &[Pose],
    splat: &SplatParams,
    options: &EvalOptions,
    ground_truth: Option<&SceneSpec>,
) -> Result<EvalReport> {
    if options.modes.is_empty() {
        return Err(Error::invalid("no trajectory modes selected"));
    }
    let k = options.intrinsics()?;
    let mut modes = Vec::with_capacity(options.modes.len());
    for &mode in &options.modes {
        let cams = sample_trajectories(&options.spec(mode), poses)?;
        let evals: Vec<PoseEval> = cams
            .par_iter()
            .map(|pose| -> Result<PoseEval> {
                let out = render_perspective(cloud, pose, &k, splat)?;
                let depth = match ground_truth {
                    Some(scene) if out.visibility.count_ones() > 0 => {
                        let (_, gt) = scene.render_perspective(pose, &k, true)?;
                        Some(depth_metrics(&out.depth, &gt, &out.visibility)?)
                    }
                    _ => None,
                };
                Ok(PoseEval {
                    pose: *pose,
                    coverage: out.coverage(),
                    depth,
                })
            })
            .collect::<Result<_>>()?;
        let n = evals.len() as f64;
        let mean_coverage = evals.iter().map(|e| e.coverage).sum::<f64>() / n;
        let min_coverage = evals
            .iter()
            .map(|e| e.coverage)
            .fold(f64::INFINITY, f64::min);
        let depth = mean_metrics(evals.iter().filter_map(|e| e.depth.as_ref()));
        modes.push(ModeReport {
            mode,
            mean_coverage,
            min_coverage,
            depth,
            brisque: None,
            poses: evals,
        });
    }
    Ok(EvalReport {
        method: method.to_string(),
        modes,
    })
}

fn mean_metrics<'a>(
    items: impl Iterator<Item = &'a DepthMetricsReport>,
) -> Option<DepthMetricsReport> {
    let items: Vec<&DepthMetricsReport> = items.collect();
    if items.is_empty() {
        return None;
    }
    let n = items.len() as f64;
    let avg = |f: fn(&DepthMetricsReport) -> f64| items.iter().map(|m| f(m)).sum::<f64>() / n;
    Some(DepthMetricsReport {
        abs_rel: avg(|m| m.abs_rel),
        rmse: avg(|m| m.rmse),
        si_rmse: avg(|m| m.si_rmse),
        delta1: avg(|m| m.delta1),
        delta2: avg(|m| m.delta2),
        delta3: avg(|m| m.delta3),
        valid_pixels: items.iter().map(|m| m.valid_pixels).sum(),
        excluded: items.iter().map(|m| m.excluded).sum(),
    })
}
