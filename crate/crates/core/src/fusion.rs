//! Sphere opening, capsule rendering and fill-block construction.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::blend::{
    boundary_mask, harmonic_blend_depth, naive_blend, offset_interpolation_blend, BlendDiagnostics,
    BlendMethod, BlendParams,
};
use crate::error::{Error, Result};
use crate::evalkit::transition_score;
use crate::geom::{
    backproject_spherical, depth_defined, direction_to_pixel, median_in_place, merge_clouds,
    translate_pose, BitMask, DepthMap, EqrImage, PointCloud, Pose, Vec3,
};
use crate::ldp::{build_ldp, LdpParams, LdpReport};
use crate::oracle::{composite, InpaintPurpose, InpaintRequest, OracleSet};
use crate::render::{render_eqr, SplatParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Opening {
    /// Opened toward `+d`.
    Right,
    /// Opened toward `-d`.
    Left,
    Both,
}

impl Opening {
    fn opens_right(self) -> bool {
        matches!(self, Opening::Right | Opening::Both)
    }

    fn opens_left(self) -> bool {
        matches!(self, Opening::Left | Opening::Both)
    }
}

/// How the enclosing cylinder radius is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadiusMode {
    /// Percentile (0..=100) of the distances to the opening axis over points
    /// in the hemisphere facing the opening.
    Auto {
        percentile: f64,
    },
    Fixed {
        radius: f64,
    },
}

impl Default for RadiusMode {
    fn default() -> Self {
        RadiusMode::Auto { percentile: 5.0 }
    }
}

/// What happens to points in the band between the removed wedge and the
/// equator of the opening axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeformMode {
    /// Only points inside the cylinder move, outward.
    #[default]
    Push,
    /// Every band point is blended toward the cylinder.
    Project,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpenedSphere {
    pub cloud: PointCloud,
    pub center: Pose,
    pub opening: Opening,
    /// World-frame unit direction `d`.
    pub axis_dir: Vec3,
    pub wedge_half_angle: f64,
    /// Cylinder radius used on the `+d` side, if opened there.
    pub radius_right: Option<f64>,
    /// Cylinder radius used on the `-d` side, if opened there.
    pub radius_left: Option<f64>,
    pub removed: usize,
}

/// 1 at `gamma = alpha`, 0 at `gamma = pi/2`, smooth in between.
pub fn band_ramp(gamma: f64, alpha: f64) -> f64 {
    let t = ((gamma - alpha) / (FRAC_PI_2 - alpha)).clamp(0.0, 1.0);
    1.0 - t * t * (3.0 - 2.0 * t)
}

fn angle_between(a: &Vec3, unit_b: &Vec3) -> f64 {
    let n = a.norm();
    if n == 0.0 {
        return FRAC_PI_2;
    }
    (a.dot(unit_b) / n).clamp(-1.0, 1.0).acos()
}

fn percentile(mut v: Vec<f64>, p: f64) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (rank - lo as f64))
}

fn resolve_radius(cloud: &PointCloud, c: &Vec3, axis: &Vec3, mode: RadiusMode) -> Result<f64> {
    match mode {
        RadiusMode::Fixed { radius } => {
            if !(radius > 0.0) {
                return Err(Error::invalid(format!(
                    "cylinder radius must be positive, got {radius}"
                )));
            }
            Ok(radius)
        }
        RadiusMode::Auto { percentile: p } => {
            if !(0.0..=100.0).contains(&p) {
                return Err(Error::invalid(format!(
                    "radius percentile must lie in [0, 100], got {p}"
                )));
            }
            let perp: Vec<f64> = cloud
                .positions
                .iter()
                .filter_map(|q| {
                    let v = q - c;
                    let along = v.dot(axis);
                    (along > 0.0).then(|| (v - axis * along).norm())
                })
                .filter(|d| *d > 0.0)
                .collect();
            percentile(perp, p)
                .ok_or_else(|| Error::invalid("no points face the opening; cannot choose a radius"))
        }
    }
}

/// Removes the wedge of points within `alpha` of each opened axis direction
/// and moves the remaining band points toward an enclosing cylinder.
pub fn open_sphere(
    cloud: &PointCloud,
    center: &Pose,
    axis: &Vec3,
    opening: Opening,
    alpha: f64,
    radius: RadiusMode,
    deform: DeformMode,
) -> Result<OpenedSphere> {
    if !(alpha > 0.0 && alpha < FRAC_PI_2) {
        return Err(Error::invalid(format!(
            "wedge half-angle must lie in (0, pi/2), got {alpha}"
        )));
    }
    let n = axis.norm();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::invalid("opening axis must be a nonzero vector"));
    }
    let d = axis / n;
    let c = center.translation;
    let radius_right = if opening.opens_right() {
        Some(resolve_radius(cloud, &c, &d, radius)?)
    } else {
        None
    };
    let radius_left = if opening.opens_left() {
        Some(resolve_radius(cloud, &c, &(-d), radius)?)
    } else {
        None
    };
    let mut out = PointCloud::with_capacity(cloud.len());
    let mut removed = 0;
    for (p, col) in cloud.positions.iter().zip(&cloud.colors) {
        let v = p - c;
        let r = v.norm();
        let gamma_right = angle_between(&v, &d);
        let gamma_left = std::f64::consts::PI - gamma_right;
        let mut keep = true;
        let mut target = *p;
        for (gamma, rad) in [(gamma_right, radius_right), (gamma_left, radius_left)] {
            let Some(rad) = rad else { continue };
            if gamma < alpha {
                keep = false;
                break;
            }
            if gamma < FRAC_PI_2 && r > 0.0 {
                let s = band_ramp(gamma, alpha);
                let gap = rad / gamma.sin() - r;
                let gap = match deform {
                    DeformMode::Push => gap.max(0.0),
                    DeformMode::Project => gap,
                };
                target = c + v * ((r + s * gap) / r);
            }
        }
        if keep {
            out.push(target, *col);
        } else {
            removed += 1;
        }
    }
    Ok(OpenedSphere {
        cloud: out,
        center: *center,
        opening,
        axis_dir: d,
        wedge_half_angle: alpha,
        radius_right,
        radius_left,
        removed,
    })
}

/// Pose halfway along the step `lambda * d` from `pose`.
pub fn intermediate_pose(pose: &Pose, lambda: f64, d: &Vec3) -> Result<Pose> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("spacing must be positive"));
    }
    Ok(translate_pose(pose, &(d * (0.5 * lambda))))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FillBlock {
    pub cloud: PointCloud,
    pub source_pose: Pose,
    /// Pixels at the source pose that the capsule left empty.
    pub fill_mask: BitMask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FillParams {
    pub width: usize,
    pub height: usize,
    pub method: BlendMethod,
    pub blend: BlendParams,
    /// Run a layered-depth pass on the intermediate view as well.
    pub layered: bool,
    pub ldp: LdpParams,
    /// Log-ratio tolerance of the seam guard; `None` disables it.
    pub seam_guard: Option<f64>,
    pub keep_artifacts: bool,
}

impl Default for FillParams {
    fn default() -> Self {
        FillParams {
            width: 512,
            height: 256,
            method: BlendMethod::Harmonic,
            blend: BlendParams::default(),
            layered: true,
            ldp: LdpParams::default(),
            seam_guard: Some(0.1),
            keep_artifacts: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FillDiagnostics {
    /// Fraction of the intermediate panorama the capsule leaves empty.
    pub fill_fraction: f64,
    pub blend: BlendDiagnostics,
    pub transition_score: Option<f64>,
    pub naive_transition_score: Option<f64>,
    pub ldp: Option<LdpReport>,
    pub background_points: usize,
    /// Known pixels moved into the hole by the seam guard.
    pub guarded_pixels: usize,
    /// Lifted points left to a neighbouring block that sees them.
    pub deferred_points: usize,
    pub warnings: Vec<String>,
}

/// Rasters produced on the way to a fill block.
#[derive(Clone, Debug)]
pub struct FillArtifacts {
    pub render_image: EqrImage,
    pub render_depth: DepthMap,
    pub visibility: BitMask,
    pub inpainted: EqrImage,
    pub estimated_depth: DepthMap,
    pub blended_depth: DepthMap,
}

#[derive(Clone, Debug)]
pub struct FillOutput {
    pub block: FillBlock,
    /// Depth of the full panorama at the source pose: the capsule where it
    /// was rendered, the blended fill elsewhere.
    pub view_depth: DepthMap,
    pub diagnostics: FillDiagnostics,
    pub artifacts: Option<FillArtifacts>,
}

/// Enough passes to peel a splat-wide rim.
const GUARD_PASSES: usize = 8;

/// Releases known pixels along the seam whose trusted depth disagrees with
/// the new estimate by more than `tau` in log ratio, after removing the
/// median log ratio of the initial seam. Where the estimate is farther, the
/// render is splat overdraw across a silhouette, and at most `passes` rims
/// are peeled. Where the estimate is nearer, the new view has an occluder the
/// opened spheres lost, so peeling continues until the disagreement ends.
pub fn guard_seam(
    known: &BitMask,
    d_r: &DepthMap,
    d_est: &DepthMap,
    tau: f64,
    passes: usize,
) -> (BitMask, usize) {
    let log_ratio = |i: usize| {
        let (a, b) = (d_r.data()[i], d_est.data()[i]);
        (depth_defined(a) && depth_defined(b)).then(|| (a / b).ln())
    };
    let boundary = boundary_mask(known);
    let mut ratios: Vec<f64> = (0..known.len())
        .filter(|&i| boundary.data()[i])
        .filter_map(log_ratio)
        .collect();
    let Some(center) = median_in_place(&mut ratios) else {
        return (known.clone(), 0);
    };
    let mut out = known.clone();
    let mut peeled = 0;
    let mut pass = 0;
    loop {
        let overdraw_allowed = pass < passes;
        let boundary = boundary_mask(&out);
        let flagged: Vec<usize> = (0..out.len())
            .filter(|&i| boundary.data()[i])
            .filter(|&i| {
                log_ratio(i).is_some_and(|l| {
                    let l = l - center;
                    l > tau || (overdraw_allowed && l < -tau)
                })
            })
            .collect();
        if flagged.is_empty() {
            break;
        }
        peeled += flagged.len();
        for i in flagged {
            out.data_mut()[i] = false;
        }
        pass += 1;
    }
    (out, peeled)
}

/// Relative depth slack when deciding whether a neighbouring view sees a point.
const DEFER_MARGIN: f64 = 0.05;

/// Whether the owner's view reaches `p`: it is not behind the farthest
/// surface the owner sees around its direction.
fn owner_sees(p: &Vec3, owner: &FillOutput) -> bool {
    let pose = &owner.block.source_pose;
    let q = pose.inverse_transform_point(p);
    let (w, h) = owner.view_depth.dims();
    let Ok((xf, yf)) = direction_to_pixel(&q, w, h) else {
        return true;
    };
    let (x0, y0) = (xf.round() as isize, yf.round() as isize);
    let mut far = f64::NEG_INFINITY;
    for dy in -1..=1 {
        let y = y0 + dy;
        if y < 0 || y >= h as isize {
            continue;
        }
        for dx in -1..=1 {
            let d = *owner
                .view_depth
                .get(owner.view_depth.wrap_x(x0 + dx), y as usize);
            if !depth_defined(d) {
                return true;
            }
            far = far.max(d);
        }
    }
    q.norm() <= far * (1.0 + DEFER_MARGIN)
}

/// Settles overlap between neighbouring fill blocks. Seen from its capsule
/// center, the far wedge of a sphere opened both ways also reads as a hole,
/// but the neighbouring block owns that region. Points there are kept only
/// where the neighbour's view is occluded; anything it sees, or anything in
/// front of what it sees, is dropped. `spheres` are the opened spheres the
/// blocks were built from, in order.
pub fn defer_to_neighbours(blocks: &mut [FillOutput], spheres: &[OpenedSphere]) -> Result<()> {
    if spheres.len() != blocks.len() + 1 {
        return Err(Error::invalid(format!(
            "{} fill blocks need {} spheres, got {}",
            blocks.len(),
            blocks.len() + 1,
            spheres.len()
        )));
    }
    let clouds: Vec<PointCloud> = (0..blocks.len())
        .map(|i| {
            let (right, left) = (&spheres[i], &spheres[i + 1]);
            let d = right.axis_dir;
            let (cr, cl) = (right.center.translation, left.center.translation);
            let back = (i > 0 && right.opening == Opening::Both).then(|| &blocks[i - 1]);
            let front =
                (i + 1 < blocks.len() && left.opening == Opening::Both).then(|| &blocks[i + 1]);
            let cloud = &blocks[i].block.cloud;
            let mut out = PointCloud::with_capacity(cloud.len());
            for (p, c) in cloud.positions.iter().zip(&cloud.colors) {
                let owner = if (p - cr).dot(&d) < 0.0 {
                    back
                } else if (p - cl).dot(&d) > 0.0 {
                    front
                } else {
                    None
                };
                if owner.is_some_and(|o| owner_sees(p, o)) {
                    continue;
                }
                out.push(*p, *c);
            }
            out
        })
        .collect();
    for (b, cloud) in blocks.iter_mut().zip(clouds) {
        b.diagnostics.deferred_points = b.block.cloud.len() - cloud.len();
        b.block.cloud = cloud;
    }
    Ok(())
}

/// Renders the capsule formed by two facing spheres at `mid`, inpaints what
/// is missing, estimates and blends its depth and lifts it into a fill block.
pub fn build_fill_block(
    right: &OpenedSphere,
    left: &OpenedSphere,
    mid: &Pose,
    prompt: &str,
    oracles: &OracleSet,
    splat: &SplatParams,
    params: &FillParams,
) -> Result<FillOutput> {
    if !right.opening.opens_right() || !left.opening.opens_left() {
        return Err(Error::invalid(
            "capsule spheres must open toward each other",
        ));
    }
    let (w, h) = (params.width, params.height);
    let capsule = merge_clouds(&right.cloud, &left.cloud);
    let mut r =
        render_eqr(&capsule, mid, w, h, splat).map_err(|e| e.at_stage("render-capsule", None))?;
    // Splats let near points win neighbouring pixels, which biases seam depth
    // toward the camera at every depth edge; where a point lands in the pixel
    // itself, trust its depth instead.
    let exact = render_eqr(&capsule, mid, w, h, &SplatParams::exact())
        .map_err(|e| e.at_stage("render-capsule", None))?;
    for i in 0..r.depth.len() {
        if exact.visibility.data()[i] {
            r.depth.data_mut()[i] = exact.depth.data()[i];
        }
    }
    let known = r.visibility.clone();
    let hole = known.not();
    let fill_fraction = hole.count_ones() as f64 / hole.len() as f64;
    let mut diag = FillDiagnostics {
        fill_fraction,
        ..Default::default()
    };
    if !(0.02..=0.9).contains(&fill_fraction) {
        let msg = format!(
            "fill fraction {fill_fraction:.4} outside [0.02, 0.9]; capsule geometry suspect"
        );
        log::warn!("{msg}");
        diag.warnings.push(msg);
    }
    if hole.count_ones() == 0 {
        return Ok(FillOutput {
            block: FillBlock {
                cloud: PointCloud::new(),
                source_pose: *mid,
                fill_mask: hole,
            },
            view_depth: r.depth,
            diagnostics: diag,
            artifacts: None,
        });
    }
    let req = InpaintRequest {
        image: &r.image,
        mask: &hole,
        prompt,
        pose: mid,
        purpose: InpaintPurpose::Fill,
    };
    let painted = oracles
        .inpainter
        .inpaint(&req)
        .map_err(|e| e.at_stage("inpaint-fill", None))?;
    let mut inpainted = composite(&r.image, &painted, &hole)?;
    let estimated = oracles
        .depth
        .estimate(&inpainted, mid)
        .map_err(|e| e.at_stage("depth-estimate", None))?;
    let mut known = known;
    let mut hole = hole;
    if let Some(tau) = params.seam_guard {
        let (guarded, peeled) = guard_seam(&known, &r.depth, &estimated, tau, GUARD_PASSES);
        if peeled > 0 {
            log::debug!("seam guard released {peeled} known pixels");
            known = guarded;
            hole = known.not();
            let req = InpaintRequest {
                image: &r.image,
                mask: &hole,
                prompt,
                pose: mid,
                purpose: InpaintPurpose::Fill,
            };
            let painted = oracles
                .inpainter
                .inpaint(&req)
                .map_err(|e| e.at_stage("inpaint-fill", None))?;
            inpainted = composite(&r.image, &painted, &hole)?;
            diag.guarded_pixels = peeled;
        }
    }
    let blended = match params.method {
        BlendMethod::Harmonic => {
            let b = harmonic_blend_depth(&r.depth, &estimated, &known, mid, &params.blend)
                .map_err(|e| e.at_stage("harmonic-blend", None))?;
            diag.blend = b.diagnostics;
            b.depth
        }
        BlendMethod::Interpolation => offset_interpolation_blend(&r.depth, &estimated, &known)?,
        BlendMethod::Naive => naive_blend(&r.depth, &estimated, &known)?,
    };
    if known.count_ones() > 0 {
        diag.transition_score = transition_score(&blended, &known).ok();
        let naive = naive_blend(&r.depth, &estimated, &known)?;
        diag.naive_transition_score = transition_score(&naive, &known).ok();
    }
    let mut cloud = backproject_spherical(&inpainted, &blended, mid, Some(&hole))?;
    if params.layered {
        let (ldp, report, _) = build_ldp(
            &inpainted,
            &blended,
            mid,
            prompt,
            oracles.segmenter.as_ref(),
            oracles.inpainter.as_ref(),
            &params.ldp,
        )
        .map_err(|e| e.at_stage("ldp-intermediate", None))?;
        let bg_mask = ldp.fg_mask.and(&hole);
        let bg = backproject_spherical(&ldp.bg_image, &ldp.bg_depth, mid, Some(&bg_mask))?;
        diag.background_points = bg.len();
        cloud.extend_from(&bg);
        diag.ldp = Some(report);
    }
    let artifacts = params.keep_artifacts.then(|| FillArtifacts {
        render_image: r.image.clone(),
        render_depth: r.depth.clone(),
        visibility: known.clone(),
        inpainted: inpainted.clone(),
        estimated_depth: estimated.clone(),
        blended_depth: blended.clone(),
    });
    Ok(FillOutput {
        block: FillBlock {
            cloud,
            source_pose: *mid,
            fill_mask: hole,
        },
        view_depth: blended,
        diagnostics: diag,
        artifacts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{pixel_coord_to_direction, Raster};
    use crate::render::render_eqr;

    fn unit_sphere(w: usize, h: usize) -> PointCloud {
        let img = Raster::filled(w, h, [0.5; 3]);
        let d = Raster::filled(w, h, 1.0);
        backproject_spherical(&img, &d, &Pose::identity(), None).unwrap()
    }

    #[test]
    fn ramp_endpoints() {
        let a = 1.0;
        assert_eq!(band_ramp(a, a), 1.0);
        assert_eq!(band_ramp(FRAC_PI_2, a), 0.0);
        assert!((band_ramp(0.5 * (a + FRAC_PI_2), a) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unit_sphere_opening_stays_in_band() {
        let s = unit_sphere(128, 64);
        let alpha = 60f64.to_radians();
        let o = open_sphere(
            &s,
            &Pose::identity(),
            &Vec3::x(),
            Opening::Right,
            alpha,
            RadiusMode::Fixed { radius: 1.0 },
            DeformMode::Push,
        )
        .unwrap();
        assert!(o.removed > 0);
        assert_eq!(o.removed + o.cloud.len(), s.len());
        for p in &o.cloud.positions {
            let r = p.norm();
            assert!(
                (1.0 - 1e-12..=1.0 / alpha.sin() + 1e-12).contains(&r),
                "{r}"
            );
            assert!(angle_between(p, &Vec3::x()) >= alpha);
        }
    }

    #[test]
    fn both_equals_left_then_right() {
        let s = unit_sphere(96, 48);
        let a = 50f64.to_radians();
        let rad = RadiusMode::Fixed { radius: 0.9 };
        let pose = Pose::identity();
        let both = open_sphere(
            &s,
            &pose,
            &Vec3::x(),
            Opening::Both,
            a,
            rad,
            DeformMode::Push,
        )
        .unwrap();
        let l = open_sphere(
            &s,
            &pose,
            &Vec3::x(),
            Opening::Left,
            a,
            rad,
            DeformMode::Push,
        )
        .unwrap();
        let lr = open_sphere(
            &l.cloud,
            &pose,
            &Vec3::x(),
            Opening::Right,
            a,
            rad,
            DeformMode::Push,
        )
        .unwrap();
        assert_eq!(both.cloud, lr.cloud);
    }

    #[test]
    fn tiny_wedge_with_small_radius_is_nearly_a_no_op() {
        let s = unit_sphere(64, 32);
        let o = open_sphere(
            &s,
            &Pose::identity(),
            &Vec3::z(),
            Opening::Right,
            1e-6,
            RadiusMode::Fixed { radius: 1e-3 },
            DeformMode::Push,
        )
        .unwrap();
        assert_eq!(o.cloud, s);
    }

    #[test]
    fn bad_parameters_are_rejected() {
        let s = unit_sphere(16, 8);
        let p = Pose::identity();
        assert!(open_sphere(
            &s,
            &p,
            &Vec3::x(),
            Opening::Right,
            FRAC_PI_2,
            RadiusMode::default(),
            DeformMode::Push
        )
        .is_err());
        assert!(open_sphere(
            &s,
            &p,
            &Vec3::x(),
            Opening::Right,
            1.0,
            RadiusMode::Fixed { radius: 0.0 },
            DeformMode::Push
        )
        .is_err());
        assert!(open_sphere(
            &s,
            &p,
            &Vec3::zeros(),
            Opening::Right,
            1.0,
            RadiusMode::default(),
            DeformMode::Push
        )
        .is_err());
    }

    #[test]
    fn opened_wedge_renders_empty() {
        let (w, h) = (128, 64);
        let img = Raster::filled(w, h, [0.5; 3]);
        let d = Raster::from_fn(w, h, |x, y| {
            2.0 + 0.5 * ((x as f64) * 0.1).sin() + 0.01 * y as f64
        });
        let pose = Pose::from_translation(Vec3::new(1.0, 0.5, -2.0));
        let s = backproject_spherical(&img, &d, &pose, None).unwrap();
        let alpha = 60f64.to_radians();
        let o = open_sphere(
            &s,
            &pose,
            &Vec3::x(),
            Opening::Right,
            alpha,
            RadiusMode::default(),
            DeformMode::Push,
        )
        .unwrap();
        let r = render_eqr(&o.cloud, &pose, w, h, &SplatParams::exact()).unwrap();
        for y in 0..h {
            for x in 0..w {
                let dir = pixel_coord_to_direction(x as f64, y as f64, w, h);
                if angle_between(&dir, &Vec3::x()) < alpha - 2.0 * std::f64::consts::PI / h as f64 {
                    assert!(!*r.visibility.get(x, y), "({x}, {y})");
                }
            }
        }
    }

    #[test]
    fn project_mode_pulls_far_points_in() {
        let mut c = PointCloud::new();
        let g = 70f64.to_radians();
        c.push(Vec3::new(g.cos(), g.sin(), 0.0) * 10.0, [1.0; 3]);
        let o = open_sphere(
            &c,
            &Pose::identity(),
            &Vec3::x(),
            Opening::Right,
            60f64.to_radians(),
            RadiusMode::Fixed { radius: 1.0 },
            DeformMode::Project,
        )
        .unwrap();
        assert!(o.cloud.positions[0].norm() < 10.0);
        let p = open_sphere(
            &c,
            &Pose::identity(),
            &Vec3::x(),
            Opening::Right,
            60f64.to_radians(),
            RadiusMode::Fixed { radius: 1.0 },
            DeformMode::Push,
        )
        .unwrap();
        assert_eq!(p.cloud.positions[0], c.positions[0]);
    }

    #[test]
    fn auto_radius_is_a_percentile() {
        assert_eq!(percentile(vec![3.0, 1.0, 2.0], 50.0), Some(2.0));
        assert_eq!(percentile(vec![0.0, 10.0], 95.0), Some(9.5));
        assert_eq!(percentile(vec![], 5.0), None);
    }

    #[test]
    fn midpoint_pose() {
        let m = intermediate_pose(&Pose::identity(), 2.0, &Vec3::x()).unwrap();
        assert_eq!(m.translation, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(m.rotation, Pose::identity().rotation);
        let t = Pose::from_yaw_pitch(0.4, 0.0, Vec3::new(1.0, 2.0, 3.0));
        let m = intermediate_pose(&t, 3.0, &Vec3::x()).unwrap();
        let next = translate_pose(&t, &(Vec3::x() * 3.0));
        assert!(((m.translation - t.translation).norm() - 1.5).abs() < 1e-12);
        assert!(((next.translation - m.translation).norm() - 1.5).abs() < 1e-12);
        assert!(intermediate_pose(&t, 0.0, &Vec3::x()).is_err());
    }
}
