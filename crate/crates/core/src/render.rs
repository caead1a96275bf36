//! Point-splatting renderer for equirectangular and pinhole cameras.
//!
//! Every point covers a small disk whose angular radius shrinks with
//! distance; a per-pixel z-buffer keeps the nearest point, ties going to the
//! point that comes first in the cloud.

use std::f64::consts::{PI, TAU};
use std::sync::atomic::{AtomicU32, AtomicU64, AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    angles_to_pixel, direction_angles, BitMask, DepthMap, EqrImage, PointCloud, Pose, Raster,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplatParams {
    /// World-space splat radius; the angular radius is `world_radius / distance`.
    pub world_radius: f64,
    /// Lower bound on the angular radius (radians).
    pub min_angle: f64,
    pub max_radius_px: f64,
}

impl Default for SplatParams {
    fn default() -> Self {
        SplatParams::exact()
    }
}

impl SplatParams {
    /// One pixel per point: each point covers only the pixel containing it.
    pub fn exact() -> Self {
        SplatParams {
            world_radius: 0.0,
            min_angle: 0.0,
            max_radius_px: 5.0,
        }
    }

    /// Sizing for a cloud lifted from `source_width`-wide panoramas with the
    /// given median depth: two source pixels at median depth, and never
    /// smaller than one and a half source pixels in angle.
    pub fn for_cloud(median_depth: f64, source_width: usize) -> Self {
        let pixel_angle = TAU / source_width as f64;
        SplatParams {
            world_radius: 2.0 * median_depth * pixel_angle,
            min_angle: 1.5 * pixel_angle,
            max_radius_px: 5.0,
        }
    }

    fn angular_radius(&self, distance: f64) -> f64 {
        (self.world_radius / distance).max(self.min_angle)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveIntrinsics {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view (radians).
    pub fov_x: f64,
}

impl PerspectiveIntrinsics {
    pub fn new(width: usize, height: usize, fov_x: f64) -> Result<Self> {
        let k = PerspectiveIntrinsics {
            width,
            height,
            fov_x,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("perspective image must be nonempty"));
        }
        if !(self.fov_x > 0.0 && self.fov_x < PI) {
            return Err(Error::invalid(format!(
                "fov_x must lie in (0, pi), got {}",
                self.fov_x
            )));
        }
        Ok(())
    }

    pub fn focal(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.fov_x).tan()
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (
            0.5 * self.width as f64 - 0.5,
            0.5 * self.height as f64 - 0.5,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub image: EqrImage,
    /// Radial distance for panoramas, planar depth for perspective renders;
    /// NaN where nothing was hit.
    pub depth: DepthMap,
    pub visibility: BitMask,
    /// Number of splats touching each pixel.
    pub hits: Raster<u32>,
    /// Index into the cloud of the winning point per pixel.
    pub winner: Raster<Option<u32>>,
    /// Points dropped because they sit on the camera center or behind it.
    pub skipped: usize,
}

impl RenderOutput {
    pub fn coverage(&self) -> f64 {
        if self.visibility.is_empty() {
            return 0.0;
        }
        self.visibility.count_ones() as f64 / self.visibility.len() as f64
    }
}

const EMPTY: u64 = u64::MAX;

struct ZBuffer {
    width: usize,
    height: usize,
    slots: Vec<AtomicU64>,
    hits: Vec<AtomicU32>,
}

impl ZBuffer {
    fn new(width: usize, height: usize) -> Self {
        ZBuffer {
            width,
            height,
            slots: (0..width * height).map(|_| AtomicU64::new(EMPTY)).collect(),
            hits: (0..width * height).map(|_| AtomicU32::new(0)).collect(),
        }
    }

    #[inline]
    fn splat(&self, x: usize, y: usize, key: u64) {
        let i = y * self.width + x;
        self.slots[i].fetch_min(key, Ordering::Relaxed);
        self.hits[i].fetch_add(1, Ordering::Relaxed);
    }

    fn resolve(
        self,
        cloud: &PointCloud,
        depth_of: impl Fn(usize) -> f64,
        skipped: usize,
    ) -> RenderOutput {
        let (w, h) = (self.width, self.height);
        let winner: Vec<Option<u32>> = self
            .slots
            .into_iter()
            .map(|s| {
                let v = s.into_inner();
                (v != EMPTY).then_some((v & 0xffff_ffff) as u32)
            })
            .collect();
        let image = Raster::from_vec(
            w,
            h,
            winner
                .iter()
                .map(|o| o.map_or([0.0; 3], |k| cloud.colors[k as usize]))
                .collect(),
        )
        .unwrap();
        let depth = Raster::from_vec(
            w,
            h,
            winner
                .iter()
                .map(|o| o.map_or(f64::NAN, |k| depth_of(k as usize)))
                .collect(),
        )
        .unwrap();
        let visibility =
            Raster::from_vec(w, h, winner.iter().map(|o| o.is_some()).collect()).unwrap();
        let hits = Raster::from_vec(
            w,
            h,
            self.hits.into_iter().map(|a| a.into_inner()).collect(),
        )
        .unwrap();
        RenderOutput {
            image,
            depth,
            visibility,
            hits,
            winner: Raster::from_vec(w, h, winner).unwrap(),
            skipped,
        }
    }

    /// Covers the pixel containing `(u, v)` plus every pixel whose center lies
    /// inside the ellipse with semi-axes `rx - 0.5`, `ry - 0.5`.
    fn footprint(&self, u: f64, v: f64, rx: f64, ry: f64, wrap: bool, key: u64) {
        let (w, h) = (self.width as isize, self.height as isize);
        let cx = u.round() as isize;
        let mut cy = v.round() as isize;
        if wrap {
            // panorama rows end exactly at the poles
            cy = cy.clamp(0, h - 1);
        }
        let put = |x: isize, y: isize| {
            if y < 0 || y >= h {
                return;
            }
            let xx = if wrap {
                x.rem_euclid(w)
            } else if x < 0 || x >= w {
                return;
            } else {
                x
            };
            self.splat(xx as usize, y as usize, key);
        };
        let ax = rx - 0.5;
        let ay = ry - 0.5;
        if ax <= 0.5 && ay <= 0.5 {
            put(cx, cy);
            return;
        }
        let y0 = (v - ay).ceil() as isize;
        let y1 = (v + ay).floor() as isize;
        let mut covered_center = false;
        for y in y0..=y1 {
            let t = (y as f64 - v) / ay.max(1e-12);
            let half = ax * (1.0 - t * t).max(0.0).sqrt();
            let x0 = (u - half).ceil() as isize;
            let x1 = (u + half).floor() as isize;
            // a full-width row only needs to be written once per column
            let (x0, x1) = if wrap && x1 - x0 + 1 >= w {
                (0, w - 1)
            } else {
                (x0, x1)
            };
            for x in x0..=x1 {
                if y == cy && (x == cx || (wrap && x.rem_euclid(w) == cx.rem_euclid(w))) {
                    covered_center = true;
                }
                put(x, y);
            }
        }
        if !covered_center {
            put(cx, cy);
        }
    }
}

#[inline]
fn pack(depth: f64, index: usize) -> u64 {
    ((depth as f32).to_bits() as u64) << 32 | index as u64
}

fn check_cloud(cloud: &PointCloud) -> Result<()> {
    if cloud.len() > u32::MAX as usize {
        return Err(Error::invalid("cloud too large for the renderer"));
    }
    if cloud.positions.len() != cloud.colors.len() {
        return Err(Error::invalid(
            "cloud positions and colors differ in length",
        ));
    }
    Ok(())
}

/// Equirectangular render of `cloud` from a camera at `pose`.
pub fn render_eqr(
    cloud: &PointCloud,
    pose: &Pose,
    width: usize,
    height: usize,
    splat: &SplatParams,
) -> Result<RenderOutput> {
    if width == 0 || height == 0 || width != 2 * height {
        return Err(Error::invalid(format!(
            "panorama must be 2:1, got {width}x{height}"
        )));
    }
    check_cloud(cloud)?;
    let zb = ZBuffer::new(width, height);
    let skipped = AtomicUsize::new(0);
    let inv = pose.inverse();
    let px_per_rad_y = height as f64 / PI;
    let px_per_rad_x = width as f64 / TAU;
    cloud
        .positions
        .par_iter()
        .enumerate()
        .with_min_len(4096)
        .for_each(|(i, p)| {
            let c = inv.transform_point(p);
            let d = c.norm();
            if !(d >= 1e-9) || !d.is_finite() {
                skipped.fetch_add(1, Ordering::Relaxed);
                return;
            }
            let (theta, phi) = direction_angles(&(c / d));
            let (u, v) = angles_to_pixel(theta, phi, width, height);
            let rho = splat.angular_radius(d);
            let ry = (rho * px_per_rad_y).clamp(1.0, splat.max_radius_px);
            let cos_phi = phi.cos().max(1e-9);
            let rx_cap = (splat.max_radius_px / cos_phi)
                .min(0.5 * width as f64)
                .max(1.0);
            let rx = (rho * px_per_rad_x / cos_phi).clamp(1.0, rx_cap);
            zb.footprint(u, v, rx, ry, true, pack(d, i));
        });
    let skipped = skipped.into_inner();
    Ok(zb.resolve(
        cloud,
        |k| (inv.transform_point(&cloud.positions[k])).norm(),
        skipped,
    ))
}

/// Pinhole render; the camera looks along its local +Z with +Y up.
pub fn render_perspective(
    cloud: &PointCloud,
    pose: &Pose,
    intrinsics: &PerspectiveIntrinsics,
    splat: &SplatParams,
) -> Result<RenderOutput> {
    intrinsics.validate()?;
    check_cloud(cloud)?;
    let (w, h) = (intrinsics.width, intrinsics.height);
    let f = intrinsics.focal();
    let (cx, cy) = intrinsics.principal_point();
    let zb = ZBuffer::new(w, h);
    let skipped = AtomicUsize::new(0);
    let inv = pose.inverse();
    let margin = splat.max_radius_px + 1.0;
    cloud
        .positions
        .par_iter()
        .enumerate()
        .with_min_len(4096)
        .for_each(|(i, p)| {
            let c = inv.transform_point(p);
            if !(c.z > 1e-9) || !c.z.is_finite() {
                skipped.fetch_add(1, Ordering::Relaxed);
                return;
            }
            let u = cx + f * c.x / c.z;
            let v = cy - f * c.y / c.z;
            if u < -margin
                || v < -margin
                || u > w as f64 - 1.0 + margin
                || v > h as f64 - 1.0 + margin
            {
                return;
            }
            // Off the optical axis a small cone spans up to f / cos^2 pixels per radian.
            let n = c.norm();
            let stretch = (n / c.z) * (n / c.z);
            let r = (splat.angular_radius(n) * f * stretch).clamp(1.0, splat.max_radius_px);
            zb.footprint(u, v, r, r, false, pack(c.z, i));
        });
    let skipped = skipped.into_inner();
    Ok(zb.resolve(
        cloud,
        |k| inv.transform_point(&cloud.positions[k]).z,
        skipped,
    ))
}
