//! Analytic scene used as a ground-truth oracle: a ground plane, an optional
//! pair of canyon walls, a sky dome and spherical boulders.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    composite, DepthEstimator, InpaintPurpose, InpaintRequest, Inpainter, Panorama, PanoramaGen,
    Segmenter,
};
use crate::error::{Error, Result};
use crate::geom::{
    direction_angles, pixel_coord_to_direction, BitMask, DepthMap, EqrImage, Pose, Raster, Rgb,
    Vec3,
};
use crate::render::PerspectiveIntrinsics;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub center: [f64; 3],
    pub radius: f64,
    pub albedo: Rgb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub ground: Rgb,
    pub ground_alt: Rgb,
    pub wall: Rgb,
    pub wall_alt: Rgb,
    pub sky_horizon: Rgb,
    pub sky_zenith: Rgb,
    /// Spatial frequency of the procedural ground and wall patterns (1/world unit).
    pub texture_frequency: f64,
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            ground: [0.36, 0.42, 0.22],
            ground_alt: [0.55, 0.48, 0.30],
            wall: [0.52, 0.38, 0.28],
            wall_alt: [0.70, 0.58, 0.44],
            sky_horizon: [0.80, 0.86, 0.93],
            sky_zenith: [0.25, 0.45, 0.80],
            texture_frequency: 1.3,
        }
    }
}

/// Analytic world. The camera height convention places the ground plane at
/// `y = -ground_height`; the sky dome is centered at the world origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub ground_height: f64,
    pub sky_radius: f64,
    /// Canyon walls at `z = +-w`, running along the world X axis.
    pub canyon_half_width: Option<f64>,
    pub objects: Vec<SceneObject>,
    pub palette: Palette,
    /// Number of distractor masks the segmenter adds over smooth ground.
    pub distractors: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Surface {
    Ground,
    Wall,
    Sky,
    Object(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct SurfaceHit {
    pub distance: f64,
    pub surface: Surface,
    pub color: Rgb,
}

impl SceneSpec {
    /// Open plain: ground and sky only.
    pub fn plain(seed: u64) -> Self {
        SceneSpec {
            seed,
            ground_height: 1.5,
            sky_radius: 150.0,
            canyon_half_width: None,
            objects: Vec::new(),
            palette: Palette::default(),
            distractors: 0,
        }
    }

    /// Canyon along +X with `n_objects` boulders scattered near the path over
    /// `x` in `[-2, extent]`.
    pub fn canyon(seed: u64, n_objects: usize, extent: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ca4e);
        let half_width = 4.0;
        let ground_height = 1.5;
        let mut objects: Vec<SceneObject> = Vec::with_capacity(n_objects);
        let mut attempts = 0;
        while objects.len() < n_objects && attempts < 10_000 {
            attempts += 1;
            let radius = rng.random_range(0.45..0.85);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let z = side * rng.random_range(radius + 1.0..half_width - radius - 0.4);
            let x = rng.random_range(-2.0..extent.max(-1.0));
            let y = -ground_height + radius;
            let c = [x, y, z];
            let clear = objects.iter().all(|o| {
                let d = ((o.center[0] - x).powi(2) + (o.center[2] - z).powi(2)).sqrt();
                d > o.radius + radius + 0.5
            });
            if !clear {
                continue;
            }
            let albedo = [
                rng.random_range(0.35..0.95),
                rng.random_range(0.15..0.6),
                rng.random_range(0.1..0.5),
            ];
            objects.push(SceneObject {
                center: c,
                radius,
                albedo,
            });
        }
        SceneSpec {
            seed,
            ground_height,
            sky_radius: 150.0,
            canyon_half_width: Some(half_width),
            objects,
            palette: Palette::default(),
            distractors: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ground_height > 0.0) {
            return Err(Error::invalid("ground_height must be positive"));
        }
        if let Some(w) = self.canyon_half_width {
            if !(w > 0.0) {
                return Err(Error::invalid("canyon_half_width must be positive"));
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if !(o.radius > 0.0) {
                return Err(Error::invalid(format!("object {i} has nonpositive radius")));
            }
            let c = Vec3::from(o.center);
            if !(self.sky_radius > c.norm() + o.radius) {
                return Err(Error::invalid(format!(
                    "object {i} pokes through the sky dome"
                )));
            }
        }
        Ok(())
    }

    /// Nearest surface along a ray; `dir` must be unit length.
    pub fn trace(&self, origin: &Vec3, dir: &Vec3, with_objects: bool) -> SurfaceHit {
        let mut best = f64::INFINITY;
        let mut surface = Surface::Sky;
        // sky dome, camera assumed inside
        let b = dir.dot(origin);
        let c = origin.norm_squared() - self.sky_radius * self.sky_radius;
        let disc = (b * b - c).max(0.0);
        let t_sky = -b + disc.sqrt();
        if t_sky > 0.0 {
            best = t_sky;
        }
        if dir.y < 0.0 {
            let t = (-self.ground_height - origin.y) / dir.y;
            if t > 0.0 && t < best {
                best = t;
                surface = Surface::Ground;
            }
        }
        if let Some(w) = self.canyon_half_width {
            let t = if dir.z > 0.0 {
                (w - origin.z) / dir.z
            } else if dir.z < 0.0 {
                (-w - origin.z) / dir.z
            } else {
                f64::INFINITY
            };
            if t > 0.0 && t < best {
                best = t;
                surface = Surface::Wall;
            }
        }
        if with_objects {
            for (k, o) in self.objects.iter().enumerate() {
                let oc = origin - Vec3::from(o.center);
                let b = dir.dot(&oc);
                let c = oc.norm_squared() - o.radius * o.radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    continue;
                }
                let s = disc.sqrt();
                let t = if -b - s > 1e-9 { -b - s } else { -b + s };
                if t > 1e-9 && t < best {
                    best = t;
                    surface = Surface::Object(k);
                }
            }
        }
        let point = origin + dir * best;
        SurfaceHit {
            distance: best,
            surface,
            color: self.shade(&point, surface),
        }
    }

    fn shade(&self, p: &Vec3, surface: Surface) -> Rgb {
        let pal = &self.palette;
        let f = pal.texture_frequency;
        let c = match surface {
            Surface::Ground => {
                let t = 0.5
                    + 0.25 * (f * p.x).sin() * (0.7 * f * p.z).cos()
                    + 0.25 * (0.31 * f * (p.x + 2.0 * p.z)).sin();
                lerp(pal.ground, pal.ground_alt, t)
            }
            Surface::Wall => {
                let t = 0.5
                    + 0.3 * (2.1 * f * p.y + 0.4 * (0.5 * f * p.x).sin()).sin()
                    + 0.2 * (0.23 * f * p.x).cos();
                lerp(pal.wall, pal.wall_alt, t)
            }
            Surface::Sky => {
                let (theta, phi) = direction_angles(p);
                let t = (phi / (0.5 * PI)).clamp(0.0, 1.0);
                let base = lerp(pal.sky_horizon, pal.sky_zenith, t.sqrt());
                let cloud = (0.5 + 0.5 * (5.0 * theta).sin() * (7.0 * phi).cos()).powi(3) * 0.25;
                lerp(base, [1.0, 1.0, 1.0], cloud)
            }
            Surface::Object(k) => {
                let o = &self.objects[k];
                let n = (p - Vec3::from(o.center)) / o.radius;
                let light = Vec3::new(0.3, 0.8, 0.5).normalize();
                let s = 0.55 + 0.45 * n.dot(&light).max(0.0);
                let speck = 0.06 * (9.0 * n.x).sin() * (11.0 * n.z).cos();
                [
                    o.albedo[0] * s as f32 + speck as f32,
                    o.albedo[1] * s as f32 + speck as f32,
                    o.albedo[2] * s as f32 + speck as f32,
                ]
            }
        };
        c.map(|v| v.clamp(0.0, 1.0))
    }

    /// Ray-traces a full panorama from `pose`.
    pub fn render_panorama(
        &self,
        pose: &Pose,
        width: usize,
        height: usize,
        with_objects: bool,
    ) -> (EqrImage, DepthMap, Raster<Surface>) {
        let hits: Vec<SurfaceHit> = (0..width * height)
            .into_par_iter()
            .map(|i| {
                let (x, y) = (i % width, i / width);
                let d = pose
                    .transform_vector(&pixel_coord_to_direction(x as f64, y as f64, width, height));
                self.trace(&pose.translation, &d, with_objects)
            })
            .collect();
        let img = Raster::from_vec(width, height, hits.iter().map(|h| h.color).collect()).unwrap();
        let depth =
            Raster::from_vec(width, height, hits.iter().map(|h| h.distance).collect()).unwrap();
        let ids =
            Raster::from_vec(width, height, hits.iter().map(|h| h.surface).collect()).unwrap();
        (img, depth, ids)
    }

    /// Ray-traces a pinhole view; depth is planar (camera-space z).
    pub fn render_perspective(
        &self,
        pose: &Pose,
        intrinsics: &PerspectiveIntrinsics,
        with_objects: bool,
    ) -> Result<(EqrImage, DepthMap)> {
        intrinsics.validate()?;
        let (w, h) = (intrinsics.width, intrinsics.height);
        let f = intrinsics.focal();
        let (cx, cy) = intrinsics.principal_point();
        let hits: Vec<(Rgb, f64)> = (0..w * h)
            .into_par_iter()
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                let local = Vec3::new((x - cx) / f, (cy - y) / f, 1.0);
                let n = local.norm();
                let hit = self.trace(
                    &pose.translation,
                    &pose.transform_vector(&(local / n)),
                    with_objects,
                );
                (hit.color, hit.distance / n)
            })
            .collect();
        let img = Raster::from_vec(w, h, hits.iter().map(|v| v.0).collect())?;
        let depth = Raster::from_vec(w, h, hits.iter().map(|v| v.1).collect())?;
        Ok((img, depth))
    }
}

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    let t = t.clamp(0.0, 1.0) as f32;
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

/// Affine-plus-smooth-noise error model applied to exact depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthCorruption {
    pub scale: f64,
    pub offset: f64,
    /// Relative amplitude of a low-frequency multiplicative perturbation.
    pub noise: f64,
    pub seed: u64,
}

impl Default for DepthCorruption {
    fn default() -> Self {
        DepthCorruption {
            scale: 1.0,
            offset: 0.0,
            noise: 0.0,
            seed: 0,
        }
    }
}

impl DepthCorruption {
    pub fn is_identity(&self) -> bool {
        self.scale == 1.0 && self.offset == 0.0 && self.noise == 0.0
    }

    fn noise_terms(&self) -> Vec<(f64, f64, f64, f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0xd3e9_7a11);
        (0..4)
            .map(|_| {
                (
                    rng.random_range(1..4) as f64,
                    rng.random_range(0.0..TAU),
                    rng.random_range(0.5..2.5),
                    rng.random_range(0.0..TAU),
                    rng.random_range(0.5..1.0),
                )
            })
            .collect()
    }

    /// Applies the model to a depth map seen from a camera with rotation `pose`.
    pub fn apply(&self, depth: &DepthMap, pose: &Pose) -> DepthMap {
        if self.is_identity() {
            return depth.clone();
        }
        let terms = self.noise_terms();
        let norm: f64 = terms.iter().map(|t| t.4).sum();
        let (w, h) = depth.dims();
        Raster::from_fn(w, h, |x, y| {
            let d = *depth.get(x, y);
            let mut v = self.scale * d + self.offset;
            if self.noise != 0.0 {
                let dir =
                    pose.transform_vector(&pixel_coord_to_direction(x as f64, y as f64, w, h));
                let (theta, phi) = direction_angles(&dir);
                let n: f64 = terms
                    .iter()
                    .map(|&(f, p, g, q, a)| a * (f * theta + p).sin() * (g * phi + q).cos())
                    .sum::<f64>()
                    / norm;
                v *= 1.0 + self.noise * n;
            }
            v
        })
    }
}

/// Ground-truth oracle backed by a [`SceneSpec`].
#[derive(Clone, Debug)]
pub struct SyntheticOracle {
    pub scene: SceneSpec,
    pub corruption: DepthCorruption,
}

impl SyntheticOracle {
    pub fn new(scene: SceneSpec) -> Result<Self> {
        scene.validate()?;
        Ok(SyntheticOracle {
            scene,
            corruption: DepthCorruption::default(),
        })
    }

    pub fn with_corruption(mut self, corruption: DepthCorruption) -> Self {
        self.corruption = corruption;
        self
    }

    fn distractor_masks(&self, ids: &Raster<Surface>) -> Vec<BitMask> {
        let (w, h) = ids.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(self.scene.seed ^ 0xd157_4ac7);
        let radius = (0.05 * h as f64).max(1.5);
        (0..self.scene.distractors)
            .map(|_| {
                let cx = rng.random_range(0.0..w as f64);
                let cy = rng.random_range(0.80..0.92) * h as f64;
                Raster::from_fn(w, h, |x, y| {
                    let mut dx = (x as f64 - cx).abs();
                    dx = dx.min(w as f64 - dx);
                    let dy = y as f64 - cy;
                    dx * dx + dy * dy <= radius * radius
                        && matches!(
                            ids.get(x, y),
                            Surface::Ground | Surface::Sky | Surface::Wall
                        )
                })
            })
            .filter(|m| m.count_ones() > 0)
            .collect()
    }
}

impl PanoramaGen for SyntheticOracle {
    fn generate(&self, prompt: &str, pose: &Pose, width: usize, height: usize) -> Result<Panorama> {
        if prompt.trim().is_empty() {
            return Err(Error::invalid("panorama prompt must be nonempty"));
        }
        let (image, depth, _) = self.scene.render_panorama(pose, width, height, true);
        Ok(Panorama {
            image,
            depth: Some(depth),
        })
    }
}

impl Inpainter for SyntheticOracle {
    fn inpaint(&self, req: &InpaintRequest<'_>) -> Result<EqrImage> {
        req.image.ensure_same_dims(req.mask)?;
        if req.mask.count_ones() == 0 {
            return Ok(req.image.clone());
        }
        let (w, h) = req.image.dims();
        let with_objects = req.purpose == InpaintPurpose::Fill;
        let (truth, _, _) = self.scene.render_panorama(req.pose, w, h, with_objects);
        composite(req.image, &truth, req.mask)
    }
}

impl DepthEstimator for SyntheticOracle {
    fn estimate(&self, image: &EqrImage, pose: &Pose) -> Result<DepthMap> {
        let (w, h) = image.dims();
        let (_, depth, _) = self.scene.render_panorama(pose, w, h, true);
        let out = self.corruption.apply(&depth, pose);
        super::validate_depth_response(&out, w, h)?;
        Ok(out)
    }
}

impl Segmenter for SyntheticOracle {
    fn segment(&self, image: &EqrImage, pose: &Pose) -> Result<Vec<BitMask>> {
        let (w, h) = image.dims();
        let (_, _, ids) = self.scene.render_panorama(pose, w, h, true);
        let mut masks: Vec<BitMask> = (0..self.scene.objects.len())
            .map(|k| ids.map(|s| *s == Surface::Object(k)))
            .filter(|m| m.count_ones() > 0)
            .collect();
        masks.extend(self.distractor_masks(&ids));
        Ok(masks)
    }
}
