//! Pipeline orchestration: panoramas to opened spheres, fill blocks between
//! neighbors, and the assembled world, plus its on-disk form.

mod ablation;
mod config;
mod persist;
mod ply;
mod record;

pub use ablation::{run_ablation, AblationReport, AblationRow, AblationVariant};
pub use config::{
    OracleBackend, OracleConfig, ScaleMode, SceneConfig, ScenePreset, Spacing, WorldConfig,
};
pub use persist::{
    load_world, save_world, PosesFile, POSES_FILE, PROVENANCE_FILE, TIMINGS_FILE, WORLD_FILE,
};
pub use ply::{decode_ply, encode_ply, load_ply, quantize_channel, save_ply};
pub use record::{OracleCall, TaskLog};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{
    build_fill_block, defer_to_neighbours, intermediate_pose, open_sphere, FillArtifacts,
    FillBlock, FillDiagnostics, FillOutput, FillParams, OpenedSphere, Opening,
};
use crate::geom::{
    backproject_spherical, depth_defined, direction_to_pixel, median_in_place, translate_pose,
    DepthMap, EqrImage, PointCloud, Pose, Vec3,
};
use crate::ldp::{build_ldp, LayeredDepthPanorama, LdpDebug, LdpReport};
use crate::oracle::OracleSet;
use crate::render::SplatParams;
use record::Recorder;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereReport {
    pub index: usize,
    pub pose: Pose,
    /// Median of the estimated depth before normalization.
    pub median_depth: f64,
    pub scale: f64,
    pub ldp: Option<LdpReport>,
    pub foreground_points: usize,
    pub background_points: usize,
    pub opening: Opening,
    pub removed: usize,
    pub radius_right: Option<f64>,
    pub radius_left: Option<f64>,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FillReport {
    pub pair: usize,
    pub pose: Pose,
    pub points: usize,
    pub diagnostics: FillDiagnostics,
}

/// Everything needed to reproduce and audit a world, minus wall-clock data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub format: String,
    pub config: WorldConfig,
    pub lambda: f64,
    /// World-frame unit travel direction.
    pub direction: [f64; 3],
    pub reference_median: f64,
    pub splat: SplatParams,
    pub spheres: Vec<SphereReport>,
    pub fills: Vec<FillReport>,
    pub partial_points: usize,
    pub fill_points: usize,
    pub total_points: usize,
    pub oracle_log: Vec<TaskLog>,
}

pub const PROVENANCE_FORMAT: &str = "panofuse-world/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SphereArtifacts {
    pub image: EqrImage,
    /// Estimated depth after scale normalization.
    pub depth: DepthMap,
    pub ldp: Option<(LayeredDepthPanorama, LdpDebug)>,
}

#[derive(Clone, Debug)]
pub struct WorldArtifacts {
    pub spheres: Vec<SphereArtifacts>,
    pub opened: Vec<OpenedSphere>,
    pub fill_blocks: Vec<FillBlock>,
    pub fills: Vec<Option<FillArtifacts>>,
}

#[derive(Clone, Debug)]
pub struct WorldBundle {
    pub cloud: PointCloud,
    pub poses: Vec<Pose>,
    pub provenance: Provenance,
    pub timings: Vec<StageTiming>,
    pub artifacts: Option<WorldArtifacts>,
}

impl WorldBundle {
    pub fn lambda(&self) -> f64 {
        self.provenance.lambda
    }

    pub fn splat(&self) -> SplatParams {
        self.provenance.splat
    }

    /// Poses halfway between consecutive panoramas.
    pub fn intermediate_poses(&self) -> Vec<Pose> {
        self.poses
            .windows(2)
            .map(|w| {
                let t = 0.5 * (w[0].translation + w[1].translation);
                Pose {
                    rotation: w[0].rotation,
                    translation: t,
                }
            })
            .collect()
    }
}

/// Opening pattern of a chain of `n` spheres.
pub fn opening_for(index: usize, n: usize) -> Opening {
    if index == 0 {
        Opening::Right
    } else if index + 1 == n {
        Opening::Left
    } else {
        Opening::Both
    }
}

/// Concatenates opened spheres after checking that the first opens right,
/// the last opens left and every other one opens both ways.
pub fn assemble_partial(spheres: &[OpenedSphere]) -> Result<PointCloud> {
    if spheres.len() < 2 {
        return Err(Error::invalid("a partial world needs at least two spheres"));
    }
    let n = spheres.len();
    for (i, s) in spheres.iter().enumerate() {
        let want = opening_for(i, n);
        if s.opening != want {
            return Err(Error::invalid(format!(
                "sphere {i} is opened {:?}, expected {want:?}",
                s.opening
            )));
        }
    }
    let mut out = PointCloud::with_capacity(spheres.iter().map(|s| s.cloud.len()).sum());
    for s in spheres {
        out.extend_from(&s.cloud);
    }
    Ok(out)
}

struct Stage1 {
    image: EqrImage,
    depth: DepthMap,
    median: f64,
}

fn acquire(
    oracles: &OracleSet,
    prompt: &str,
    pose: &Pose,
    w: usize,
    h: usize,
    i: usize,
) -> Result<Stage1> {
    let pano = oracles
        .panorama
        .generate(prompt, pose, w, h)
        .map_err(|e| e.at_stage("panorama", Some(i)))?;
    if pano.image.dims() != (w, h) {
        return Err(Error::Oracle {
            stage: "panorama".into(),
            message: format!("panorama is {:?}, expected {:?}", pano.image.dims(), (w, h)),
        }
        .at_stage("panorama", Some(i)));
    }
    let depth = oracles
        .depth
        .estimate(&pano.image, pose)
        .map_err(|e| e.at_stage("depth", Some(i)))?;
    let median = depth
        .median_defined()
        .ok_or_else(|| Error::invalid("estimated depth is empty").at_stage("depth", Some(i)))?;
    Ok(Stage1 {
        image: pano.image,
        depth,
        median,
    })
}

/// Chains scale factors from the first panorama outward. Falls back to
/// median matching when two neighbors barely overlap.
/// Median of the ratios, re-taken over ever narrower log windows around the
/// previous estimate so that occlusion outliers stop pulling it.
fn mode_ratio(ratios: &mut [f64]) -> Option<f64> {
    let mut s = median_in_place(ratios)?;
    for window in [0.2, 0.05, 0.01] {
        let mut near: Vec<f64> = ratios
            .iter()
            .copied()
            .filter(|r| (r / s).ln().abs() < window)
            .collect();
        match median_in_place(&mut near) {
            Some(m) => s = m,
            None => break,
        }
    }
    Some(s)
}

fn overlap_scales(acquired: &[(Stage1, Recorder)], poses: &[Pose]) -> Result<Vec<f64>> {
    let mut scales = vec![1.0];
    for i in 1..acquired.len() {
        let (prev, cur) = (&acquired[i - 1].0, &acquired[i].0);
        let prev_depth = prev.depth.map(|v| v * scales[i - 1]);
        let cloud = backproject_spherical(&prev.image, &prev_depth, &poses[i - 1], None)?;
        let (w, h) = cur.depth.dims();
        // Inverse depth on a plane is linear in the ray direction, so
        // interpolating it does not bias the ratio the way depth would.
        let inverse = cur
            .depth
            .map(|&d| if depth_defined(d) { 1.0 / d } else { f64::NAN });
        let mut ratios: Vec<f64> = cloud
            .positions
            .iter()
            .filter_map(|p| {
                let q = poses[i].inverse_transform_point(p);
                let (xf, yf) = direction_to_pixel(&q, w, h).ok()?;
                let inv = inverse.sample_bilinear(xf, yf)?;
                Some(q.norm() * inv)
            })
            .collect();
        let fallback = scales[0] * acquired[0].0.median / cur.median;
        let s = if ratios.len() * 100 < w * h {
            log::warn!(
                "panorama {i} overlaps its predecessor on {} pixels; matching medians instead",
                ratios.len()
            );
            fallback
        } else {
            mode_ratio(&mut ratios).unwrap_or(fallback)
        };
        scales.push(s);
    }
    Ok(scales)
}

struct SphereOut {
    opened: OpenedSphere,
    report: SphereReport,
    artifacts: Option<SphereArtifacts>,
    log: TaskLog,
}

#[allow(clippy::too_many_arguments)]
fn build_sphere(
    config: &WorldConfig,
    acquired: Stage1,
    pose: &Pose,
    index: usize,
    scale: f64,
    axis: &Vec3,
    recorder: Recorder,
) -> Result<SphereOut> {
    let rec_oracles = recorder.oracle_set();
    let depth = if scale == 1.0 {
        acquired.depth.clone()
    } else {
        acquired.depth.map(|v| v * scale)
    };
    let (cloud, ldp_report, fg_points, bg_points, ldp_art) = if config.ldp {
        let (ldp, report, debug) = build_ldp(
            &acquired.image,
            &depth,
            pose,
            &config.prompt,
            rec_oracles.segmenter.as_ref(),
            rec_oracles.inpainter.as_ref(),
            &config.ldp_params,
        )
        .map_err(|e| e.at_stage("ldp", Some(index)))?;
        let mut cloud = backproject_spherical(&ldp.fg_image, &ldp.fg_depth, pose, None)?;
        let fg = cloud.len();
        let bg = backproject_spherical(&ldp.bg_image, &ldp.bg_depth, pose, Some(&ldp.fg_mask))?;
        cloud.extend_from(&bg);
        (
            cloud,
            Some(report),
            fg,
            bg.len(),
            config.keep_artifacts.then_some((ldp, debug)),
        )
    } else {
        let cloud = backproject_spherical(&acquired.image, &depth, pose, None)?;
        let n = cloud.len();
        (cloud, None, n, 0, None)
    };
    let opening = opening_for(index, config.n);
    let opened = open_sphere(
        &cloud,
        pose,
        axis,
        opening,
        config.alpha(),
        config.radius,
        config.deform,
    )
    .map_err(|e| e.at_stage("open", Some(index)))?;
    let report = SphereReport {
        index,
        pose: *pose,
        median_depth: acquired.median,
        scale,
        ldp: ldp_report,
        foreground_points: fg_points,
        background_points: bg_points,
        opening,
        removed: opened.removed,
        radius_right: opened.radius_right,
        radius_left: opened.radius_left,
        points: opened.cloud.len(),
    };
    let artifacts = config.keep_artifacts.then_some(SphereArtifacts {
        image: acquired.image,
        depth,
        ldp: ldp_art,
    });
    drop(rec_oracles);
    Ok(SphereOut {
        opened,
        report,
        artifacts,
        log: recorder.finish(format!("sphere-{index}")),
    })
}

/// Runs the three pipeline stages. Stage I acquires and lifts every
/// panorama, Stage II builds a fill block between each consecutive pair and
/// Stage III assembles the world.
pub fn build_world(config: &WorldConfig, oracles: &OracleSet) -> Result<WorldBundle> {
    config.validate()?;
    let (w, h) = (config.width, config.height);
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Vec<StageTiming>| {
        timings.push(StageTiming {
            stage: name.to_string(),
            seconds: clock.elapsed().as_secs_f64(),
        });
        clock = Instant::now();
    };

    // Stage I
    let origin = Pose::identity();
    let first_rec = Recorder::new(oracles.clone());
    let first = acquire(&first_rec.oracle_set(), &config.prompt, &origin, w, h, 0)?;
    let reference_median = first.median;
    let lambda = match config.spacing {
        Spacing::Median { factor } => factor * reference_median,
        Spacing::Absolute { distance } => distance,
    };
    let axis = origin.transform_vector(&config.direction());
    let poses: Vec<Pose> = (0..config.n)
        .map(|i| translate_pose(&origin, &(axis * (lambda * i as f64))))
        .collect();
    let mut acquired: Vec<(Stage1, Recorder)> = vec![(first, first_rec)];
    let rest: Vec<(Stage1, Recorder)> = poses[1..]
        .par_iter()
        .enumerate()
        .map(|(k, pose)| {
            let rec = Recorder::new(oracles.clone());
            let s = acquire(&rec.oracle_set(), &config.prompt, pose, w, h, k + 1)?;
            Ok((s, rec))
        })
        .collect::<Result<_>>()?;
    acquired.extend(rest);
    lap("acquire", &mut timings);
    let splat = config
        .splat
        .unwrap_or_else(|| SplatParams::for_cloud(reference_median, w));
    let scales = match config.scale_mode {
        ScaleMode::None => vec![1.0; config.n],
        ScaleMode::Median => acquired
            .iter()
            .map(|(s, _)| reference_median / s.median)
            .collect(),
        ScaleMode::Overlap => overlap_scales(&acquired, &poses)?,
    };
    let spheres: Vec<SphereOut> = acquired
        .into_par_iter()
        .enumerate()
        .map(|(i, (s, rec))| build_sphere(config, s, &poses[i], i, scales[i], &axis, rec))
        .collect::<Result<_>>()?;
    lap("spheres", &mut timings);

    // Stage II
    let fill_params = FillParams {
        width: w,
        height: h,
        method: config.blend_method,
        blend: config.blend.clone(),
        layered: config.ldp && config.layered_fill,
        ldp: config.ldp_params.clone(),
        seam_guard: config.seam_guard,
        keep_artifacts: config.keep_artifacts,
    };
    let (mut fills, fill_logs): (Vec<FillOutput>, Vec<TaskLog>) = (0..config.n - 1)
        .into_par_iter()
        .map(|i| {
            let mid = intermediate_pose(&poses[i], lambda, &axis)?;
            let rec = Recorder::new(oracles.clone());
            let out = build_fill_block(
                &spheres[i].opened,
                &spheres[i + 1].opened,
                &mid,
                &config.prompt,
                &rec.oracle_set(),
                &splat,
                &fill_params,
            )
            .map_err(|e| e.at_stage("fill", Some(i)))?;
            Ok((out, rec.finish(format!("fill-{i}"))))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let opened: Vec<OpenedSphere> = spheres.iter().map(|s| s.opened.clone()).collect();
    defer_to_neighbours(&mut fills, &opened)?;
    lap("fills", &mut timings);

    // Stage III
    let mut cloud = assemble_partial(&opened)?;
    let partial_points = cloud.len();
    for f in &fills {
        cloud.extend_from(&f.block.cloud);
    }
    let fill_points = cloud.len() - partial_points;
    lap("assemble", &mut timings);

    let mut oracle_log: Vec<TaskLog> = Vec::new();
    let fill_reports: Vec<FillReport> = fills
        .iter()
        .enumerate()
        .map(|(i, f)| FillReport {
            pair: i,
            pose: f.block.source_pose,
            points: f.block.cloud.len(),
            diagnostics: f.diagnostics.clone(),
        })
        .collect();
    let mut sphere_reports = Vec::with_capacity(spheres.len());
    let mut sphere_art = Vec::new();
    for s in spheres {
        oracle_log.push(s.log);
        sphere_reports.push(s.report);
        if let Some(a) = s.artifacts {
            sphere_art.push(a);
        }
    }
    let mut fill_blocks = Vec::new();
    let mut fill_art = Vec::new();
    oracle_log.extend(fill_logs);
    for f in fills {
        fill_blocks.push(f.block);
        fill_art.push(f.artifacts);
    }
    let artifacts = config.keep_artifacts.then_some(WorldArtifacts {
        spheres: sphere_art,
        opened,
        fill_blocks,
        fills: fill_art,
    });
    let provenance = Provenance {
        format: PROVENANCE_FORMAT.to_string(),
        config: config.clone(),
        lambda,
        direction: [axis.x, axis.y, axis.z],
        reference_median,
        splat,
        spheres: sphere_reports,
        fills: fill_reports,
        partial_points,
        fill_points,
        total_points: cloud.len(),
        oracle_log,
    };
    log::info!(
        "world built: {} points ({} from spheres, {} from fills), lambda {:.4}",
        cloud.len(),
        partial_points,
        fill_points,
        lambda
    );
    Ok(WorldBundle {
        cloud,
        poses,
        provenance,
        timings,
        artifacts,
    })
}
