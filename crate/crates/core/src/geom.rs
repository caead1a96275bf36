//! Equirectangular camera model, rigid poses, rasters and point clouds.
//!
//! Pixel convention: row 0 is the zenith, column 0 is azimuth -pi, and the
//! camera frame is right-handed with +Z forward, +Y up and +X right. Depth is
//! the radial distance from the camera center along the pixel ray.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Rgb = [f32; 3];

/// Rigid transform placing a camera in the world frame (camera -> world).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "PoseRepr", try_from = "PoseRepr")]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    /// Row-major 4x4 homogeneous matrix.
    matrix: [f64; 16],
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        PoseRepr {
            matrix: p.to_row_major(),
        }
    }
}

impl TryFrom<PoseRepr> for Pose {
    type Error = Error;
    fn try_from(r: PoseRepr) -> Result<Self> {
        Pose::from_row_major(&r.matrix)
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a pose, rejecting rotations that are not proper orthonormal.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if !(err < 1e-9) || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal with det +1 (|RtR - I| = {err:e})"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite translation"));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Camera looking along the direction given by `yaw` (about +Y, positive
    /// toward +X) and `pitch` (positive up), placed at `translation`.
    pub fn from_yaw_pitch(yaw: f64, pitch: f64, translation: Vec3) -> Self {
        let r = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), -pitch);
        Pose {
            rotation: *r.matrix(),
            translation,
        }
    }

    /// Camera frame -> world frame.
    #[inline]
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// World frame -> camera frame.
    #[inline]
    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.translation)
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
            0.0,
            0.0,
            0.0,
            1.0,
        ]
    }

    pub fn from_row_major(m: &[f64; 16]) -> Result<Pose> {
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vec3::new(m[3], m[7], m[11]);
        if (m[12], m[13], m[14], m[15]) != (0.0, 0.0, 0.0, 1.0) {
            return Err(Error::invalid("pose matrix bottom row must be [0 0 0 1]"));
        }
        Pose::new(rotation, translation)
    }
}

/// Same rotation, translation shifted by `v`.
pub fn translate_pose(pose: &Pose, v: &Vec3) -> Pose {
    Pose {
        rotation: pose.rotation,
        translation: pose.translation + v,
    }
}

/// Dense row-major raster shared by images, depth maps and masks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type EqrImage = Raster<Rgb>;
pub type DepthMap = Raster<f64>;
pub type BitMask = Raster<bool>;

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Raster {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "raster data has {} entries, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Raster {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        let w = self.width;
        self.data[y * w + x] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn is_equirect(&self) -> bool {
        self.width == 2 * self.height && self.height > 0
    }

    pub fn ensure_same_dims<U>(&self, other: &Raster<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: other.dims(),
            });
        }
        Ok(())
    }

    /// Column index with azimuthal wrap.
    #[inline]
    pub fn wrap_x(&self, x: isize) -> usize {
        x.rem_euclid(self.width as isize) as usize
    }

    /// 4-neighbors with horizontal wrap and no vertical wrap.
    #[inline]
    pub fn neighbors4(&self, x: usize, y: usize) -> impl Iterator<Item = (usize, usize)> {
        let left = self.wrap_x(x as isize - 1);
        let right = self.wrap_x(x as isize + 1);
        let up = (y > 0).then(|| (x, y - 1));
        let down = (y + 1 < self.height).then(|| (x, y + 1));
        [Some((left, y)), Some((right, y)), up, down]
            .into_iter()
            .flatten()
    }
}

/// A depth value counts as defined when it is finite and strictly positive.
#[inline]
pub fn depth_defined(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl Raster<f64> {
    /// Depth map with every pixel undefined.
    pub fn undefined(width: usize, height: usize) -> Self {
        Raster::filled(width, height, f64::NAN)
    }

    pub fn validity(&self) -> BitMask {
        self.map(|&v| depth_defined(v))
    }

    /// Median over defined values.
    pub fn median_defined(&self) -> Option<f64> {
        let mut v: Vec<f64> = self
            .data
            .iter()
            .copied()
            .filter(|&d| depth_defined(d))
            .collect();
        median_in_place(&mut v)
    }

    /// Bilinear sample at continuous pixel-center coordinates, wrapping in x.
    /// Returns `None` outside the rows or when any tap is undefined.
    pub fn sample_bilinear(&self, xf: f64, yf: f64) -> Option<f64> {
        if !(xf.is_finite() && yf.is_finite()) {
            return None;
        }
        let h = self.height as f64;
        if yf < 0.0 || yf > h - 1.0 {
            return None;
        }
        let x0 = xf.floor();
        let y0 = yf.floor();
        let tx = xf - x0;
        let ty = yf - y0;
        let xa = self.wrap_x(x0 as isize);
        let xb = self.wrap_x(x0 as isize + 1);
        let ya = y0 as usize;
        let yb = (ya + 1).min(self.height - 1);
        let taps = [
            (*self.get(xa, ya), (1.0 - tx) * (1.0 - ty)),
            (*self.get(xb, ya), tx * (1.0 - ty)),
            (*self.get(xa, yb), (1.0 - tx) * ty),
            (*self.get(xb, yb), tx * ty),
        ];
        let mut acc = 0.0;
        for (v, w) in taps {
            if w > 0.0 {
                if !depth_defined(v) {
                    return None;
                }
                acc += v * w;
            }
        }
        Some(acc)
    }
}

impl Raster<bool> {
    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn not(&self) -> BitMask {
        self.map(|&b| !b)
    }

    pub fn and(&self, other: &BitMask) -> BitMask {
        Raster {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && b)
                .collect(),
        }
    }

    pub fn or(&self, other: &BitMask) -> BitMask {
        Raster {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a || b)
                .collect(),
        }
    }

    /// 4-connected erosion with azimuthal wrap; rows beyond the poles count as inside.
    pub fn erode4(&self) -> BitMask {
        Raster::from_fn(self.width, self.height, |x, y| {
            *self.get(x, y) && self.neighbors4(x, y).all(|(nx, ny)| *self.get(nx, ny))
        })
    }

    /// 4-connected dilation with azimuthal wrap.
    pub fn dilate4(&self) -> BitMask {
        Raster::from_fn(self.width, self.height, |x, y| {
            *self.get(x, y) || self.neighbors4(x, y).any(|(nx, ny)| *self.get(nx, ny))
        })
    }

    /// 8-connected dilation with azimuthal wrap.
    pub fn dilate8(&self) -> BitMask {
        Raster::from_fn(self.width, self.height, |x, y| {
            for dy in -1isize..=1 {
                let yy = y as isize + dy;
                if yy < 0 || yy >= self.height as isize {
                    continue;
                }
                for dx in -1isize..=1 {
                    if *self.get(self.wrap_x(x as isize + dx), yy as usize) {
                        return true;
                    }
                }
            }
            false
        })
    }

    /// Mask pixels with at least one 4-neighbor outside the mask.
    pub fn inner_boundary4(&self) -> BitMask {
        self.and(&self.erode4().not())
    }
}

/// Median of a slice (reorders it). Even lengths average the middle pair.
pub fn median_in_place(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Unit ray through the center of pixel (x, y) in the camera frame.
pub fn pixel_to_direction(x: usize, y: usize, width: usize, height: usize) -> Result<Vec3> {
    if x >= width || y >= height {
        return Err(Error::PixelOutOfRange {
            x,
            y,
            width,
            height,
        });
    }
    Ok(pixel_coord_to_direction(x as f64, y as f64, width, height))
}

/// Unit ray for continuous pixel-center coordinates (no range check; x is periodic).
#[inline]
pub fn pixel_coord_to_direction(x: f64, y: f64, width: usize, height: usize) -> Vec3 {
    let theta = ((x + 0.5) / width as f64) * TAU - PI;
    let phi = FRAC_PI_2 - ((y + 0.5) / height as f64) * PI;
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    Vec3::new(cp * st, sp, cp * ct)
}

/// Azimuth in [-pi, pi) and elevation in [-pi/2, pi/2] of a nonzero vector.
#[inline]
pub fn direction_angles(d: &Vec3) -> (f64, f64) {
    let mut theta = d.x.atan2(d.z);
    if theta >= PI {
        theta -= TAU;
    }
    let horiz = (d.x * d.x + d.z * d.z).sqrt();
    let phi = d.y.atan2(horiz);
    (theta, phi)
}

/// Continuous pixel coordinates of a direction; inverse of [`pixel_coord_to_direction`].
#[inline]
pub fn angles_to_pixel(theta: f64, phi: f64, width: usize, height: usize) -> (f64, f64) {
    let x = (theta + PI) / TAU * width as f64 - 0.5;
    let y = (FRAC_PI_2 - phi) / PI * height as f64 - 0.5;
    (x, y)
}

/// Continuous pixel coordinates of a direction. The input is normalized
/// internally; zero or non-finite vectors are rejected.
pub fn direction_to_pixel(d: &Vec3, width: usize, height: usize) -> Result<(f64, f64)> {
    let n = d.norm();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::invalid(
            "direction_to_pixel: zero or non-finite direction",
        ));
    }
    let (theta, phi) = direction_angles(&(d / n));
    Ok(angles_to_pixel(theta, phi, width, height))
}

/// Colored point set in world coordinates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub colors: Vec<Rgb>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        PointCloud {
            positions: Vec::with_capacity(n),
            colors: Vec::with_capacity(n),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    #[inline]
    pub fn push(&mut self, p: Vec3, c: Rgb) {
        self.positions.push(p);
        self.colors.push(c);
    }

    pub fn extend_from(&mut self, other: &PointCloud) {
        self.positions.extend_from_slice(&other.positions);
        self.colors.extend_from_slice(&other.colors);
    }

    /// Applies a rigid transform to every position.
    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            positions: self
                .positions
                .iter()
                .map(|p| pose.transform_point(p))
                .collect(),
            colors: self.colors.clone(),
        }
    }

    /// Checks finite coordinates and colors in [0, 1].
    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != self.colors.len() {
            return Err(Error::invalid("point cloud position/color length mismatch"));
        }
        if let Some(i) = self
            .positions
            .iter()
            .position(|p| !p.iter().all(|v| v.is_finite()))
        {
            return Err(Error::invalid(format!(
                "point {i} has non-finite coordinates"
            )));
        }
        if let Some(i) = self
            .colors
            .iter()
            .position(|c| !c.iter().all(|v| (0.0..=1.0).contains(v)))
        {
            return Err(Error::invalid(format!("point {i} has color outside [0,1]")));
        }
        Ok(())
    }
}

/// Concatenation, `a` first.
pub fn merge_clouds(a: &PointCloud, b: &PointCloud) -> PointCloud {
    let mut out = PointCloud::with_capacity(a.len() + b.len());
    out.extend_from(a);
    out.extend_from(b);
    out
}

/// Lifts selected pixels of a depth map into world positions, returning
/// `(pixel index, position)` pairs in raster order.
///
/// Without a mask every defined pixel is lifted; with a mask every set pixel
/// must carry a defined depth.
pub fn lift_depth(
    depth: &DepthMap,
    pose: &Pose,
    mask: Option<&BitMask>,
) -> Result<Vec<(usize, Vec3)>> {
    if let Some(m) = mask {
        depth.ensure_same_dims(m)?;
    }
    let (w, h) = depth.dims();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let d = depth.data()[i];
            match mask {
                Some(m) => {
                    if !m.data()[i] {
                        continue;
                    }
                    if !depth_defined(d) {
                        return Err(Error::invalid(format!(
                            "depth at ({x}, {y}) is not positive under the lift mask"
                        )));
                    }
                }
                None => {
                    if !depth_defined(d) {
                        continue;
                    }
                }
            }
            let dir = pixel_coord_to_direction(x as f64, y as f64, w, h);
            out.push((i, pose.transform_point(&(dir * d))));
        }
    }
    Ok(out)
}

/// Spherical back-projection of an RGB-D panorama, optionally restricted to a mask.
pub fn backproject_spherical(
    image: &EqrImage,
    depth: &DepthMap,
    pose: &Pose,
    mask: Option<&BitMask>,
) -> Result<PointCloud> {
    image.ensure_same_dims(depth)?;
    let lifted = lift_depth(depth, pose, mask)?;
    let mut cloud = PointCloud::with_capacity(lifted.len());
    for (i, p) in lifted {
        cloud.push(p, image.data()[i]);
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn close(a: &Vec3, b: &Vec3, tol: f64) -> bool {
        (a - b).amax() < tol
    }

    #[test]
    fn center_pixel_looks_forward() {
        let (w, h) = (64, 32);
        let d = pixel_coord_to_direction(w as f64 / 2.0 - 0.5, h as f64 / 2.0 - 0.5, w, h);
        assert!(close(&d, &Vec3::new(0.0, 0.0, 1.0), 1e-12));
    }

    #[test]
    fn top_row_approaches_zenith() {
        let (w, h) = (4096, 2048);
        let d = pixel_to_direction(w / 2, 0, w, h).unwrap();
        assert!(close(&d, &Vec3::new(0.0, 1.0, 0.0), 1e-3));
    }

    #[test]
    fn hand_evaluated_direction_8x4() {
        // theta = -7pi/8, phi = pi/8; cos^2(pi/8) = (1 + cos(pi/4))/2, sin cos = sin(pi/4)/2
        let d = pixel_to_direction(0, 1, 8, 4).unwrap();
        let expected = Vec3::new(
            -0.353_553_390_593_273_8,
            0.382_683_432_365_089_8,
            -0.853_553_390_593_273_8,
        );
        assert!(close(&d, &expected, 1e-12), "{d:?}");
        assert!((d.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_pixel_is_rejected() {
        assert!(matches!(
            pixel_to_direction(8, 0, 8, 4),
            Err(Error::PixelOutOfRange { .. })
        ));
        assert!(pixel_to_direction(0, 4, 8, 4).is_err());
    }

    #[test]
    fn forward_and_nadir_pixels() {
        let (x, y) = direction_to_pixel(&Vec3::new(0.0, 0.0, 1.0), 64, 32).unwrap();
        assert!((x - 31.5).abs() < 1e-12 && (y - 15.5).abs() < 1e-12);
        let (_, y) = direction_to_pixel(&Vec3::new(0.0, -1.0, 0.0), 64, 32).unwrap();
        assert!((y - 31.5).abs() < 1e-12);
        assert!(direction_to_pixel(&Vec3::zeros(), 64, 32).is_err());
    }

    #[test]
    fn exhaustive_round_trip_16x8() {
        for y in 0..8 {
            for x in 0..16 {
                let d = pixel_to_direction(x, y, 16, 8).unwrap();
                let (px, py) = direction_to_pixel(&d, 16, 8).unwrap();
                assert!((px - x as f64).abs() < 1e-6, "x {x} -> {px}");
                assert!((py - y as f64).abs() < 1e-6, "y {y} -> {py}");
            }
        }
    }

    #[test]
    fn azimuth_is_periodic() {
        for y in 0..8 {
            let a = pixel_coord_to_direction(3.0, y as f64, 16, 8);
            let b = pixel_coord_to_direction(3.0 + 16.0, y as f64, 16, 8);
            assert!(close(&a, &b, 1e-12));
        }
    }

    #[test]
    fn translate_builds_equidistant_trajectory() {
        let lambda = 2.5;
        let d = Vec3::x();
        let mut poses = vec![Pose::identity()];
        for _ in 0..4 {
            let next = translate_pose(poses.last().unwrap(), &(lambda * d));
            poses.push(next);
        }
        assert_eq!(poses.len(), 5);
        for w in poses.windows(2) {
            assert!(((w[1].translation - w[0].translation).norm() - lambda).abs() < 1e-12);
            assert_eq!(w[1].rotation, w[0].rotation);
        }
        assert_eq!(translate_pose(&poses[2], &Vec3::zeros()), poses[2]);
        assert_eq!(poses[1].translation, Vec3::new(lambda, 0.0, 0.0));
    }

    #[test]
    fn pose_group_laws() {
        let a = Pose::from_yaw_pitch(0.7, -0.3, Vec3::new(1.0, 2.0, -3.0));
        let b = Pose::from_yaw_pitch(-1.9, 0.4, Vec3::new(-0.5, 0.1, 4.0));
        let c = Pose::from_yaw_pitch(2.2, 1.1, Vec3::new(0.3, -2.0, 0.7));
        let lhs = a.compose(&b).compose(&c);
        let rhs = a.compose(&b.compose(&c));
        assert!((lhs.rotation - rhs.rotation).amax() < 1e-9);
        assert!((lhs.translation - rhs.translation).amax() < 1e-9);
        let id = a.compose(&a.inverse());
        assert!((id.rotation - Matrix3::identity()).amax() < 1e-9);
        assert!(id.translation.amax() < 1e-9);
        let r = a.rotation;
        assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-9);
        let p = Vec3::new(0.2, -0.7, 5.0);
        assert!(close(
            &a.inverse_transform_point(&a.transform_point(&p)),
            &p,
            1e-12
        ));
    }

    #[test]
    fn pose_rejects_non_rotation() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = -1.0;
        assert!(Pose::new(m, Vec3::zeros()).is_err());
        assert!(Pose::new(Matrix3::identity() * 2.0, Vec3::zeros()).is_err());
    }

    #[test]
    fn pose_json_is_row_major_matrix() {
        let p = Pose::from_translation(Vec3::new(1.0, 2.0, 3.0));
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(
            s,
            r#"{"matrix":[1.0,0.0,0.0,1.0,0.0,1.0,0.0,2.0,0.0,0.0,1.0,3.0,0.0,0.0,0.0,1.0]}"#
        );
        let back: Pose = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn constant_depth_lifts_to_sphere() {
        let (w, h) = (64, 32);
        let img = EqrImage::filled(w, h, [0.5, 0.5, 0.5]);
        let d = DepthMap::filled(w, h, 3.0);
        let cloud = backproject_spherical(&img, &d, &Pose::identity(), None).unwrap();
        assert_eq!(cloud.len(), w * h);
        let max_err = cloud
            .positions
            .iter()
            .map(|p| (p.norm() - 3.0).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-6);
    }

    #[test]
    fn empty_mask_gives_empty_cloud() {
        let img = EqrImage::filled(8, 4, [0.0; 3]);
        let d = DepthMap::filled(8, 4, 1.0);
        let m = BitMask::filled(8, 4, false);
        assert!(backproject_spherical(&img, &d, &Pose::identity(), Some(&m))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn hand_evaluated_lift_4x2() {
        let depth = DepthMap::from_vec(4, 2, vec![1., 2., 3., 4., 5., 6., 7., 8.]).unwrap();
        let img = EqrImage::filled(4, 2, [1.0, 0.0, 0.0]);
        let cloud = backproject_spherical(&img, &depth, &Pose::identity(), None).unwrap();
        // phi = +-pi/4, theta = -3pi/4, -pi/4, pi/4, 3pi/4
        let (a, b) = (0.5, FRAC_1_SQRT_2);
        let cols = [(-a, -a), (-a, a), (a, a), (a, -a)];
        let mut k = 0;
        for (row, s) in [(0, b), (1, -b)] {
            for (col, &(dx, dz)) in cols.iter().enumerate() {
                let d = (row * 4 + col + 1) as f64;
                let expected = Vec3::new(dx, s, dz) * d;
                assert!(
                    close(&cloud.positions[k], &expected, 1e-12),
                    "pixel ({col},{row})"
                );
                k += 1;
            }
        }
    }

    #[test]
    fn masked_lift_rejects_undefined_depth() {
        let mut d = DepthMap::filled(4, 2, 1.0);
        d.set(1, 1, f64::NAN);
        let img = EqrImage::filled(4, 2, [0.0; 3]);
        let m = BitMask::filled(4, 2, true);
        assert!(backproject_spherical(&img, &d, &Pose::identity(), Some(&m)).is_err());
        // without a mask the undefined pixel is skipped
        assert_eq!(
            backproject_spherical(&img, &d, &Pose::identity(), None)
                .unwrap()
                .len(),
            7
        );
        let small = BitMask::filled(2, 2, true);
        assert!(matches!(
            backproject_spherical(&img, &d, &Pose::identity(), Some(&small)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn merge_concatenates_in_order() {
        let mut a = PointCloud::new();
        for i in 0..5 {
            a.push(Vec3::new(i as f64 * 0.1, 1.0 / 3.0, -2.0), [0.1, 0.2, 0.3]);
        }
        let mut b = PointCloud::new();
        for i in 0..3 {
            b.push(Vec3::new(7.0, i as f64, 1e-300), [1.0, 0.0, 1.0]);
        }
        let m = merge_clouds(&a, &b);
        assert_eq!(m.len(), 8);
        assert_eq!(&m.positions[..5], &a.positions[..]);
        assert_eq!(&m.positions[5..], &b.positions[..]);
        assert!(merge_clouds(&PointCloud::new(), &PointCloud::new()).is_empty());
    }

    #[test]
    fn mask_morphology() {
        // left half set
        let m = BitMask::from_fn(8, 4, |x, _| x < 4);
        let b = m.inner_boundary4();
        for y in 0..4 {
            for x in 0..8 {
                assert_eq!(*b.get(x, y), x == 3 || x == 0, "({x},{y})");
            }
        }
        assert_eq!(
            BitMask::filled(8, 4, true).inner_boundary4().count_ones(),
            0
        );
    }

    #[test]
    fn bilinear_sampling_wraps() {
        let d = DepthMap::from_fn(4, 2, |x, _| (x + 1) as f64);
        assert_eq!(d.sample_bilinear(3.5, 0.0), Some(2.5));
        assert_eq!(d.sample_bilinear(1.25, 0.5), Some(2.25));
        assert_eq!(d.sample_bilinear(0.0, 1.5), None);
    }
}
