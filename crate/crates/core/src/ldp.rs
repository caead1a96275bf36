//! Layered depth panoramas: a foreground RGB-D layer plus an inpainted
//! background layer whose depth is the panoramic hull.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{central_gradient, gaussian_blur, sobel};
use crate::geom::{depth_defined, median_in_place, BitMask, DepthMap, EqrImage, Pose, Raster};
use crate::oracle::{composite, InpaintPurpose, InpaintRequest, Inpainter, Segmenter};

#[derive(Clone, Debug, PartialEq)]
pub struct LayeredDepthPanorama {
    pub fg_image: EqrImage,
    pub fg_depth: DepthMap,
    pub fg_mask: BitMask,
    pub bg_image: EqrImage,
    pub bg_depth: DepthMap,
}

impl LayeredDepthPanorama {
    /// Single-layer panorama: no foreground, background equals the input.
    pub fn flat(image: EqrImage, depth: DepthMap) -> Result<Self> {
        image.ensure_same_dims(&depth)?;
        let bg_depth = panoramic_hull(&depth)?;
        Ok(LayeredDepthPanorama {
            fg_mask: BitMask::filled(image.width(), image.height(), false),
            bg_image: image.clone(),
            fg_image: image,
            fg_depth: depth,
            bg_depth,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.fg_image.dims();
        for other in [
            self.fg_depth.dims(),
            self.fg_mask.dims(),
            self.bg_image.dims(),
            self.bg_depth.dims(),
        ] {
            if other != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: other,
                });
            }
        }
        let (w, h) = d;
        for y in 0..h {
            let h0 = *self.bg_depth.get(0, y);
            let fg_max = (0..w)
                .map(|x| *self.fg_depth.get(x, y))
                .filter(|v| depth_defined(*v))
                .fold(f64::NEG_INFINITY, f64::max);
            for x in 0..w {
                if *self.bg_depth.get(x, y) != h0 {
                    return Err(Error::invalid(format!(
                        "background depth not row-constant in row {y}"
                    )));
                }
            }
            if h0 < fg_max {
                return Err(Error::invalid(format!(
                    "background depth below foreground in row {y}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskScore {
    pub mask_index: usize,
    /// Mean signed depth step across the mask boundary, outside minus inside.
    /// `-inf` when no valid sample exists (`null` in JSON).
    #[serde(with = "score_serde")]
    pub score: f64,
    pub boundary_sample_count: usize,
}

mod score_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

/// Value domain in which depth edges are detected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeDomain {
    Linear,
    Log,
}

/// Canny edges of a depth map normalized to `[0, 1]`, with hysteresis
/// thresholds given as fractions of the peak gradient magnitude.
pub fn depth_edges(depth: &DepthMap, low: f64, high: f64) -> Result<BitMask> {
    depth_edges_in(depth, low, high, EdgeDomain::Linear)
}

pub fn depth_edges_in(
    depth: &DepthMap,
    low: f64,
    high: f64,
    domain: EdgeDomain,
) -> Result<BitMask> {
    if !(0.0 < low && low < high && high <= 1.0) {
        return Err(Error::invalid(format!(
            "edge thresholds must satisfy 0 < low < high <= 1, got {low}, {high}"
        )));
    }
    if let Some(i) = depth.data().iter().position(|v| !depth_defined(*v)) {
        return Err(Error::invalid(format!(
            "depth undefined at index {i}; edges need a full map"
        )));
    }
    let (w, h) = depth.dims();
    let vals = match domain {
        EdgeDomain::Linear => depth.clone(),
        EdgeDomain::Log => depth.map(|v| v.ln()),
    };
    let (lo, hi) = vals
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| {
            (a.0.min(v), a.1.max(v))
        });
    if !(hi > lo) {
        return Ok(BitMask::filled(w, h, false));
    }
    let norm = vals.map(|v| (v - lo) / (hi - lo));
    let smooth = gaussian_blur(&norm, 1.0);
    let (gx, gy) = sobel(&smooth);
    let mag = Raster::from_fn(w, h, |x, y| gx.get(x, y).hypot(*gy.get(x, y)));
    let peak = mag.data().iter().copied().fold(0.0, f64::max);
    if peak <= 1e-12 {
        return Ok(BitMask::filled(w, h, false));
    }
    let at = |x: isize, y: isize| -> f64 {
        if y < 0 || y >= h as isize {
            0.0
        } else {
            *mag.get(mag.wrap_x(x), y as usize)
        }
    };
    // non-maximum suppression along the quantized gradient direction
    let thin = Raster::from_fn(w, h, |x, y| {
        let m = *mag.get(x, y);
        if m <= 0.0 {
            return 0.0;
        }
        let ang = gy
            .get(x, y)
            .atan2(*gx.get(x, y))
            .to_degrees()
            .rem_euclid(180.0);
        let (dx, dy) = if !(22.5..157.5).contains(&ang) {
            (1, 0)
        } else if ang < 67.5 {
            (1, 1)
        } else if ang < 112.5 {
            (0, 1)
        } else {
            (-1, 1)
        };
        let (xi, yi) = (x as isize, y as isize);
        let before = at(xi - dx, yi - dy);
        let after = at(xi + dx, yi + dy);
        if m >= before && m > after {
            m
        } else {
            0.0
        }
    });
    let (t_low, t_high) = (low * peak, high * peak);
    let mut edges = BitMask::filled(w, h, false);
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if *thin.get(x, y) >= t_high && !*edges.get(x, y) {
                edges.set(x, y, true);
                stack.push((x, y));
                while let Some((cx, cy)) = stack.pop() {
                    for dy in -1isize..=1 {
                        let ny = cy as isize + dy;
                        if ny < 0 || ny >= h as isize {
                            continue;
                        }
                        for dx in -1isize..=1 {
                            let nx = edges.wrap_x(cx as isize + dx);
                            let ny = ny as usize;
                            if !*edges.get(nx, ny) && *thin.get(nx, ny) >= t_low {
                                edges.set(nx, ny, true);
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(edges)
}

/// Boundary pixel of a mask with its outward unit normal `[nx, ny]` in pixel
/// coordinates (x right, y down). The normal is zero where the smoothed
/// indicator has no gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryNormal {
    pub x: usize,
    pub y: usize,
    pub normal: [f64; 2],
}

pub fn boundary_normals(mask: &BitMask, sigma: f64) -> Vec<BoundaryNormal> {
    let boundary = mask.inner_boundary4();
    if boundary.count_ones() == 0 {
        return Vec::new();
    }
    let smooth = gaussian_blur(&mask.map(|&b| if b { 1.0 } else { 0.0 }), sigma);
    let (w, h) = mask.dims();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !*boundary.get(x, y) {
                continue;
            }
            let (gx, gy) = central_gradient(&smooth, x, y);
            let n = gx.hypot(gy);
            let normal = if n > 1e-12 {
                [-gx / n, -gy / n]
            } else {
                [0.0, 0.0]
            };
            out.push(BoundaryNormal { x, y, normal });
        }
    }
    out
}

/// Foreground evidence for one mask: mean of `d(x + eps n) - d(x - eps n)`
/// over boundary pixels that lie on (or next to) a depth edge.
pub fn foreground_score(
    mask: &BitMask,
    depth: &DepthMap,
    edges: &BitMask,
    eps: f64,
    sigma: f64,
    mask_index: usize,
) -> Result<MaskScore> {
    mask.ensure_same_dims(depth)?;
    mask.ensure_same_dims(edges)?;
    if !(eps > 0.0) {
        return Err(Error::invalid("score offset must be positive"));
    }
    let near_edge = edges.dilate8();
    let mut sum = 0.0;
    let mut count = 0usize;
    for b in boundary_normals(mask, sigma) {
        if !*near_edge.get(b.x, b.y) || b.normal == [0.0, 0.0] {
            continue;
        }
        let (px, py) = (b.x as f64, b.y as f64);
        let out = depth.sample_bilinear(px + eps * b.normal[0], py + eps * b.normal[1]);
        let inn = depth.sample_bilinear(px - eps * b.normal[0], py - eps * b.normal[1]);
        if let (Some(o), Some(i)) = (out, inn) {
            sum += o - i;
            count += 1;
        }
    }
    Ok(MaskScore {
        mask_index,
        score: if count > 0 {
            sum / count as f64
        } else {
            f64::NEG_INFINITY
        },
        boundary_sample_count: count,
    })
}

/// Union of masks whose score exceeds `t` with at least `min_samples` samples.
pub fn select_foreground(
    masks: &[BitMask],
    scores: &[MaskScore],
    t: f64,
    min_samples: usize,
    width: usize,
    height: usize,
) -> Result<BitMask> {
    if masks.len() != scores.len() {
        return Err(Error::invalid(format!(
            "{} masks but {} scores",
            masks.len(),
            scores.len()
        )));
    }
    let mut out = BitMask::filled(width, height, false);
    for (m, s) in masks.iter().zip(scores) {
        out.ensure_same_dims(m)?;
        if s.score > t && s.boundary_sample_count >= min_samples {
            out = out.or(m);
        }
    }
    Ok(out)
}

/// Row-constant depth equal to each row's farthest defined value.
pub fn panoramic_hull(depth: &DepthMap) -> Result<DepthMap> {
    let (w, h) = depth.dims();
    let mut rows = Vec::with_capacity(h);
    for y in 0..h {
        let m = (0..w)
            .map(|x| *depth.get(x, y))
            .filter(|v| depth_defined(*v))
            .fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("row {y} has no defined depth")));
        }
        rows.push(m);
    }
    Ok(Raster::from_fn(w, h, |_, y| rows[y]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdpParams {
    pub canny_low: f64,
    pub canny_high: f64,
    pub edge_domain: EdgeDomain,
    pub normal_sigma: f64,
    pub epsilon: f64,
    /// Selection threshold as a fraction of the median depth.
    pub threshold_factor: f64,
    pub min_samples: usize,
}

impl Default for LdpParams {
    fn default() -> Self {
        LdpParams {
            canny_low: 0.10,
            canny_high: 0.20,
            edge_domain: EdgeDomain::Log,
            normal_sigma: 1.5,
            epsilon: 3.0,
            threshold_factor: 0.05,
            min_samples: 8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LdpReport {
    pub scores: Vec<MaskScore>,
    pub threshold: f64,
    pub selected: Vec<usize>,
    pub foreground_pixels: usize,
    pub inpainted: bool,
}

/// Intermediate rasters kept for debugging.
#[derive(Clone, Debug)]
pub struct LdpDebug {
    pub edges: BitMask,
    pub masks: Vec<BitMask>,
}

pub fn build_ldp(
    image: &EqrImage,
    depth: &DepthMap,
    pose: &Pose,
    prompt: &str,
    segmenter: &dyn Segmenter,
    inpainter: &dyn Inpainter,
    params: &LdpParams,
) -> Result<(LayeredDepthPanorama, LdpReport, LdpDebug)> {
    image.ensure_same_dims(depth)?;
    let (w, h) = image.dims();
    let edges = depth_edges_in(
        depth,
        params.canny_low,
        params.canny_high,
        params.edge_domain,
    )?;
    let masks = segmenter
        .segment(image, pose)
        .map_err(|e| e.at_stage("segment", None))?;
    for m in &masks {
        image.ensure_same_dims(m)?;
    }
    let scores: Vec<MaskScore> = masks
        .par_iter()
        .enumerate()
        .map(|(k, m)| foreground_score(m, depth, &edges, params.epsilon, params.normal_sigma, k))
        .collect::<Result<_>>()?;
    let mut d: Vec<f64> = depth.data().to_vec();
    let median = median_in_place(&mut d).unwrap_or(0.0);
    let t = params.threshold_factor * median;
    let fg_mask = select_foreground(&masks, &scores, t, params.min_samples, w, h)?;
    let selected = scores
        .iter()
        .filter(|s| s.score > t && s.boundary_sample_count >= params.min_samples)
        .map(|s| s.mask_index)
        .collect();
    let fg_pixels = fg_mask.count_ones();
    let bg_image = if fg_pixels == 0 {
        image.clone()
    } else {
        let req = InpaintRequest {
            image,
            mask: &fg_mask,
            prompt,
            pose,
            purpose: InpaintPurpose::Background,
        };
        let out = inpainter
            .inpaint(&req)
            .map_err(|e| e.at_stage("inpaint-background", None))?;
        composite(image, &out, &fg_mask)?
    };
    let bg_depth = panoramic_hull(depth)?;
    let ldp = LayeredDepthPanorama {
        fg_image: image.clone(),
        fg_depth: depth.clone(),
        fg_mask,
        bg_image,
        bg_depth,
    };
    let report = LdpReport {
        scores,
        threshold: t,
        selected,
        foreground_pixels: fg_pixels,
        inpainted: fg_pixels > 0,
    };
    Ok((ldp, report, LdpDebug { edges, masks }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disk(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> BitMask {
        Raster::from_fn(w, h, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            dx * dx + dy * dy <= r * r
        })
    }

    fn disk_depth(m: &BitMask, inside: f64, outside: f64) -> DepthMap {
        m.map(|&b| if b { inside } else { outside })
    }

    #[test]
    fn constant_depth_has_no_edges() {
        let d = Raster::filled(32, 16, 3.0);
        assert_eq!(depth_edges(&d, 0.1, 0.2).unwrap().count_ones(), 0);
        assert!(depth_edges(&d, 0.2, 0.1).is_err());
    }

    #[test]
    fn step_edges_stay_near_the_step_columns() {
        let (w, h) = (64, 32);
        let d = Raster::from_fn(w, h, |x, _| if x < 32 { 1.0 } else { 5.0 });
        let e = depth_edges(&d, 0.1, 0.2).unwrap();
        assert!(e.count_ones() > 0);
        for y in 0..h {
            for x in 0..w {
                if *e.get(x, y) {
                    // the step at column 32 and its wrap twin at column 0
                    assert!((31..=32).contains(&x) || x == 0 || x == 63, "edge at {x}");
                }
            }
        }
    }

    #[test]
    fn disk_edge_ring_matches_perimeter() {
        let (w, h, r) = (128, 64, 12.0);
        let m = disk(w, h, 64.0, 32.0, r);
        let e = depth_edges(&disk_depth(&m, 1.0, 5.0), 0.1, 0.2).unwrap();
        let n = e.count_ones() as f64;
        let p = std::f64::consts::TAU * r;
        assert!((n - p).abs() <= 0.2 * p, "{n} vs {p}");
    }

    #[test]
    fn square_right_edge_points_right() {
        let m = Raster::from_fn(64, 32, |x, y| {
            (20..30).contains(&x) && (10..20).contains(&y)
        });
        let normals = boundary_normals(&m, 1.5);
        let right: Vec<_> = normals
            .iter()
            .filter(|b| b.x == 29 && (12..18).contains(&b.y))
            .collect();
        assert!(!right.is_empty());
        for b in right {
            let ang = b.normal[1].atan2(b.normal[0]).abs().to_degrees();
            assert!(ang < 15.0, "{ang}");
        }
        assert!(boundary_normals(&BitMask::filled(8, 4, true), 1.5).is_empty());
        assert!(boundary_normals(&BitMask::filled(8, 4, false), 1.5).is_empty());
    }

    #[test]
    fn single_pixel_mask_is_its_own_boundary() {
        let m = Raster::from_fn(16, 8, |x, y| x == 5 && y == 4);
        let b = boundary_normals(&m, 1.5);
        assert_eq!(b.len(), 1);
        assert_eq!((b[0].x, b[0].y), (5, 4));
    }

    #[test]
    fn disk_normals_point_outward() {
        let (cx, cy) = (64.0, 32.0);
        let m = disk(128, 64, cx, cy, 10.0);
        let normals = boundary_normals(&m, 1.5);
        let mean_err: f64 = normals
            .iter()
            .map(|b| {
                let radial = (b.y as f64 - cy).atan2(b.x as f64 - cx);
                let a = b.normal[1].atan2(b.normal[0]);
                let mut d = (a - radial).abs();
                if d > std::f64::consts::PI {
                    d = std::f64::consts::TAU - d;
                }
                d.to_degrees()
            })
            .sum::<f64>()
            / normals.len() as f64;
        assert!(mean_err < 10.0, "{mean_err}");
    }

    #[test]
    fn normals_wrap_across_the_seam() {
        let m = Raster::from_fn(32, 16, |x, y| {
            !(3..=28).contains(&x) && (5..11).contains(&y)
        });
        let normals = boundary_normals(&m, 1.5);
        let right = normals.iter().find(|b| b.x == 2 && b.y == 8).unwrap();
        assert!(right.normal[0] > 0.9);
        let left = normals.iter().find(|b| b.x == 29 && b.y == 8).unwrap();
        assert!(left.normal[0] < -0.9);
    }

    fn disk_score(inside: f64, outside: f64) -> MaskScore {
        let m = disk(128, 64, 64.0, 32.0, 10.0);
        let d = disk_depth(&m, inside, outside);
        let e = depth_edges(&d, 0.1, 0.2).unwrap();
        foreground_score(&m, &d, &e, 3.0, 1.5, 0).unwrap()
    }

    #[test]
    fn disk_scores_are_antisymmetric() {
        let fg = disk_score(1.0, 5.0);
        assert!((fg.score - 4.0).abs() < 0.5, "{fg:?}");
        assert!(fg.boundary_sample_count >= 8);
        let inv = disk_score(5.0, 1.0);
        assert!(inv.score < 0.0);
        assert!((fg.score + inv.score).abs() <= 0.1 * fg.score.abs());
    }

    #[test]
    fn uniform_depth_scores_sentinel() {
        let m = disk(64, 32, 30.0, 16.0, 5.0);
        let d = Raster::filled(64, 32, 2.0);
        let e = depth_edges(&d, 0.1, 0.2).unwrap();
        let s = foreground_score(&m, &d, &e, 3.0, 1.5, 0).unwrap();
        assert_eq!(s.boundary_sample_count, 0);
        assert_eq!(s.score, f64::NEG_INFINITY);
    }

    #[test]
    fn selection_thresholds_and_unions() {
        let (w, h) = (16, 8);
        let a = Raster::from_fn(w, h, |x, _| x < 4);
        let b = Raster::from_fn(w, h, |x, _| x >= 12);
        let c = Raster::from_fn(w, h, |x, _| x == 6);
        let score = |k, s| MaskScore {
            mask_index: k,
            score: s,
            boundary_sample_count: 20,
        };
        let masks = [a.clone(), b.clone(), c];
        let t = 0.05 * 5.0;
        let sel = select_foreground(
            &masks,
            &[score(0, 4.0), score(1, -4.0), score(2, 0.01)],
            t,
            8,
            w,
            h,
        )
        .unwrap();
        assert_eq!(sel, a);
        let none = select_foreground(
            &masks,
            &[score(0, 0.0), score(1, 0.0), score(2, 0.0)],
            t,
            8,
            w,
            h,
        )
        .unwrap();
        assert_eq!(none.count_ones(), 0);
        let both =
            select_foreground(&masks[..2], &[score(0, 1.0), score(1, 1.0)], t, 8, w, h).unwrap();
        assert_eq!(both.count_ones(), a.count_ones() + b.count_ones());
        let few = MaskScore {
            boundary_sample_count: 3,
            ..score(0, 4.0)
        };
        assert_eq!(
            select_foreground(&masks[..1], &[few], t, 8, w, h)
                .unwrap()
                .count_ones(),
            0
        );
    }

    #[test]
    fn hull_of_row() {
        let d = Raster::from_vec(4, 1, vec![1.0, 7.0, 3.0, 2.0]).unwrap();
        assert_eq!(panoramic_hull(&d).unwrap().data(), &[7.0; 4]);
        let c = Raster::filled(6, 3, 2.5);
        assert_eq!(panoramic_hull(&c).unwrap(), c);
        let mut u = Raster::filled(4, 2, 1.0);
        for x in 0..4 {
            u.set(x, 1, f64::NAN);
        }
        assert!(panoramic_hull(&u).is_err());
    }

    proptest! {
        #[test]
        fn hull_dominates(vals in proptest::collection::vec(0.1f64..100.0, 8 * 4)) {
            let d = Raster::from_vec(8, 4, vals).unwrap();
            let hull = panoramic_hull(&d).unwrap();
            for (a, b) in hull.data().iter().zip(d.data()) {
                prop_assert!(a >= b);
            }
        }

        #[test]
        fn raising_threshold_never_adds_pixels(
            scores in proptest::collection::vec(-5.0f64..5.0, 4),
            t1 in -5.0f64..5.0,
            dt in 0.0f64..5.0,
        ) {
            let masks: Vec<BitMask> = (0..4).map(|k| Raster::from_fn(16, 8, |x, _| x / 4 == k)).collect();
            let s: Vec<MaskScore> = scores.iter().enumerate()
                .map(|(k, &v)| MaskScore { mask_index: k, score: v, boundary_sample_count: 10 }).collect();
            let lo = select_foreground(&masks, &s, t1, 8, 16, 8).unwrap();
            let hi = select_foreground(&masks, &s, t1 + dt, 8, 16, 8).unwrap();
            prop_assert_eq!(hi.and(&lo.not()).count_ones(), 0);
        }
    }
}
