use std::f64::consts::TAU;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{transition_region_mae, transition_score};
use crate::blend::{harmonic_blend_depth, naive_blend, offset_interpolation_blend, BlendParams};
use crate::error::{Error, Result};
use crate::geom::{BitMask, DepthMap, Pose, Raster};
use crate::oracle::{DepthCorruption, SceneSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthfillMethod {
    Harmonic,
    Interpolation,
    Naive,
}

impl DepthfillMethod {
    pub const ALL: [DepthfillMethod; 3] = [
        DepthfillMethod::Harmonic,
        DepthfillMethod::Interpolation,
        DepthfillMethod::Naive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DepthfillMethod::Harmonic => "harmonic",
            DepthfillMethod::Interpolation => "interpolation",
            DepthfillMethod::Naive => "naive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepthfillSpec {
    pub scenes: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Target fraction of pixels hidden from the reference.
    pub mask_fraction: f64,
    pub scale_range: [f64; 2],
    /// Additive error range, as a fraction of the median reference depth.
    pub offset_range: [f64; 2],
    /// Relative amplitude of smooth multiplicative noise on the estimate.
    pub noise: f64,
    pub objects: usize,
    /// Radius of the sky dome closing the reference scenes.
    pub sky_radius: f64,
    /// Width in pixels of the band scored by the transition-region error.
    pub band: usize,
    pub blend: BlendParams,
}

impl Default for DepthfillSpec {
    fn default() -> Self {
        DepthfillSpec {
            scenes: 10,
            seed: 0,
            width: 256,
            height: 128,
            mask_fraction: 0.3,
            scale_range: [0.8, 1.25],
            offset_range: [-0.1, 0.1],
            noise: 0.0,
            objects: 6,
            sky_radius: 150.0,
            band: 3,
            blend: BlendParams::default(),
        }
    }
}

impl DepthfillSpec {
    pub fn validate(&self) -> Result<()> {
        if self.scenes == 0 {
            return Err(Error::invalid("need at least one scene"));
        }
        if self.width != 2 * self.height || self.height < 8 {
            return Err(Error::invalid(
                "reference must be equirectangular with height at least 8",
            ));
        }
        if !(self.mask_fraction > 0.0 && self.mask_fraction < 0.9) {
            return Err(Error::invalid("mask fraction must lie in (0, 0.9)"));
        }
        let [a, b] = self.scale_range;
        if !(a > 0.0 && a <= b) {
            return Err(Error::invalid("scale range must be positive and ordered"));
        }
        if self.offset_range[0] > self.offset_range[1] {
            return Err(Error::invalid("offset range must be ordered"));
        }
        if self.band == 0 {
            return Err(Error::invalid("band must be at least one pixel"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthfillRow {
    pub method: DepthfillMethod,
    pub transition_score: f64,
    pub transition_region_mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthfillScene {
    pub index: usize,
    pub scale: f64,
    pub offset: f64,
    pub mask_fraction: f64,
    pub rows: Vec<DepthfillRow>,
}

impl DepthfillScene {
    pub fn row(&self, method: DepthfillMethod) -> &DepthfillRow {
        self.rows
            .iter()
            .find(|r| r.method == method)
            .expect("every method is scored")
    }

    /// Harmonic beats interpolation, which beats naive, on both metrics.
    pub fn ordered(&self) -> bool {
        let (h, i, n) = (
            self.row(DepthfillMethod::Harmonic),
            self.row(DepthfillMethod::Interpolation),
            self.row(DepthfillMethod::Naive),
        );
        h.transition_score < i.transition_score
            && i.transition_score < n.transition_score
            && h.transition_region_mae < i.transition_region_mae
            && i.transition_region_mae < n.transition_region_mae
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthfillReport {
    pub spec: DepthfillSpec,
    pub scenes: Vec<DepthfillScene>,
    /// Means over scenes, one row per method.
    pub summary: Vec<DepthfillRow>,
    pub ordered_scenes: usize,
}

impl DepthfillReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} | {:>16} | {:>21}",
            "method", "transition score", "transition region mae"
        );
        let _ = writeln!(
            out,
            "{}-+-{}-+-{}",
            "-".repeat(14),
            "-".repeat(16),
            "-".repeat(21)
        );
        for r in &self.summary {
            let _ = writeln!(
                out,
                "{:<14} | {:>16.6} | {:>21.6}",
                r.method.name(),
                r.transition_score,
                r.transition_region_mae
            );
        }
        let _ = writeln!(
            out,
            "ordered scenes: {}/{}",
            self.ordered_scenes,
            self.scenes.len()
        );
        out
    }
}

/// Irregular blob around a random center, sized to roughly `fraction` of
/// the panorama; azimuth wraps.
pub fn random_hole(width: usize, height: usize, fraction: f64, rng: &mut impl Rng) -> BitMask {
    let (wf, hf) = (width as f64, height as f64);
    let cx = rng.random_range(0.0..wf);
    let cy = rng.random_range(0.4 * hf..0.6 * hf);
    let b = rng.random_range(0.25..0.35) * hf;
    let a = (fraction * wf * hf / (std::f64::consts::PI * b)).min(0.45 * wf);
    let phase = rng.random_range(0.0..TAU);
    let lobes = rng.random_range(2..5) as f64;
    Raster::from_fn(width, height, |x, y| {
        let mut dx = (x as f64 - cx).abs();
        dx = dx.min(wf - dx);
        let dy = y as f64 - cy;
        let ang = dy.atan2(dx);
        let r = (dx / a).powi(2) + (dy / b).powi(2);
        r.sqrt() < 1.0 + 0.12 * (lobes * ang + phase).sin()
    })
}

/// Masks each reference depth map, reconstructs the hidden part from a
/// corrupted estimate with every method, and scores the seams.
pub fn run_depthfill(spec: &DepthfillSpec) -> Result<DepthfillReport> {
    spec.validate()?;
    let mut scenes = Vec::with_capacity(spec.scenes);
    for index in 0..spec.scenes {
        let seed = scene_seed(spec, index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdf11_0000);
        let mut scene = SceneSpec::canyon(seed, spec.objects, 6.0);
        scene.sky_radius = spec.sky_radius;
        scene.validate()?;
        let pose = Pose::from_yaw_pitch(rng.random_range(0.0..TAU), 0.0, Default::default());
        let (_, gt, _) = scene.render_panorama(&pose, spec.width, spec.height, true);
        scenes.push(score_reference(index, &gt, &pose, spec, seed, &mut rng)?);
    }
    Ok(summarize(spec, scenes))
}

/// Like [`run_depthfill`], but every trial masks the same given reference
/// panorama, seen from the identity pose. Width and height are taken from
/// the reference.
pub fn run_depthfill_on(reference: &DepthMap, spec: &DepthfillSpec) -> Result<DepthfillReport> {
    let (width, height) = reference.dims();
    let spec = DepthfillSpec {
        width,
        height,
        ..spec.clone()
    };
    spec.validate()?;
    if reference
        .data()
        .iter()
        .any(|v| !(*v > 0.0 && v.is_finite()))
    {
        return Err(Error::invalid(
            "reference depth must be positive everywhere",
        ));
    }
    let pose = Pose::identity();
    let mut scenes = Vec::with_capacity(spec.scenes);
    for index in 0..spec.scenes {
        let seed = scene_seed(&spec, index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdf11_0000);
        scenes.push(score_reference(
            index, reference, &pose, &spec, seed, &mut rng,
        )?);
    }
    Ok(summarize(&spec, scenes))
}

fn scene_seed(spec: &DepthfillSpec, index: usize) -> u64 {
    spec.seed.wrapping_mul(1000).wrapping_add(index as u64)
}

fn score_reference(
    index: usize,
    gt: &DepthMap,
    pose: &Pose,
    spec: &DepthfillSpec,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<DepthfillScene> {
    let (width, height) = gt.dims();
    let median = gt
        .median_defined()
        .ok_or_else(|| Error::invalid("reference depth is empty"))?;
    let hole = random_hole(width, height, spec.mask_fraction, rng);
    let known = hole.not();
    let scale = rng.random_range(spec.scale_range[0]..=spec.scale_range[1]);
    let offset = median * rng.random_range(spec.offset_range[0]..=spec.offset_range[1]);
    let corruption = DepthCorruption {
        scale,
        offset,
        noise: spec.noise,
        seed,
    };
    let est = corruption.apply(gt, pose);
    if est.data().iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid(format!(
            "scene {index}: corrupted estimate is not positive"
        )));
    }
    let d_r = Raster::from_fn(width, height, |x, y| {
        if *known.get(x, y) {
            *gt.get(x, y)
        } else {
            f64::NAN
        }
    });
    let outputs: Vec<(DepthfillMethod, DepthMap)> = vec![
        (
            DepthfillMethod::Harmonic,
            harmonic_blend_depth(&d_r, &est, &known, pose, &spec.blend)?.depth,
        ),
        (
            DepthfillMethod::Interpolation,
            offset_interpolation_blend(&d_r, &est, &known)?,
        ),
        (DepthfillMethod::Naive, naive_blend(&d_r, &est, &known)?),
    ];
    let rows = outputs
        .iter()
        .map(|(method, d)| {
            Ok(DepthfillRow {
                method: *method,
                transition_score: transition_score(d, &known)?,
                transition_region_mae: transition_region_mae(d, gt, &known, spec.band)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    log::debug!("depthfill scene {index}: scale {scale:.3} offset {offset:.3}");
    Ok(DepthfillScene {
        index,
        scale,
        offset,
        mask_fraction: hole.count_ones() as f64 / hole.len() as f64,
        rows,
    })
}

fn summarize(spec: &DepthfillSpec, scenes: Vec<DepthfillScene>) -> DepthfillReport {
    let n = scenes.len() as f64;
    let summary = DepthfillMethod::ALL
        .iter()
        .map(|&m| DepthfillRow {
            method: m,
            transition_score: scenes
                .iter()
                .map(|s| s.row(m).transition_score)
                .sum::<f64>()
                / n,
            transition_region_mae: scenes
                .iter()
                .map(|s| s.row(m).transition_region_mae)
                .sum::<f64>()
                / n,
        })
        .collect();
    let ordered_scenes = scenes.iter().filter(|s| s.ordered()).count();
    DepthfillReport {
        spec: spec.clone(),
        scenes,
        summary,
        ordered_scenes,
    }
}
