//! Coverage, depth accuracy and seam metrics, the trajectory protocol used
//! to evaluate worlds, and the depth-completion harness.

mod depthfill;
mod report;
mod trajectory;

pub use depthfill::{
    random_hole, run_depthfill, run_depthfill_on, DepthfillMethod, DepthfillReport, DepthfillRow,
    DepthfillScene, DepthfillSpec,
};
pub use report::{evaluate_world, EvalOptions, EvalReport, ModeReport, PoseEval};
pub use trajectory::{sample_trajectories, TrajectoryMode, TrajectorySpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{depth_defined, BitMask, DepthMap};

/// Fraction of set pixels.
pub fn coverage(visibility: &BitMask) -> f64 {
    if visibility.is_empty() {
        return 0.0;
    }
    visibility.count_ones() as f64 / visibility.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMetricsReport {
    pub abs_rel: f64,
    pub rmse: f64,
    pub si_rmse: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub valid_pixels: usize,
    /// Valid pixels dropped because the prediction was not positive.
    pub excluded: usize,
}

pub fn depth_metrics(
    pred: &DepthMap,
    gt: &DepthMap,
    valid: &BitMask,
) -> Result<DepthMetricsReport> {
    pred.ensure_same_dims(gt)?;
    pred.ensure_same_dims(valid)?;
    let mut n = 0usize;
    let mut excluded = 0usize;
    let (mut abs_rel, mut sq) = (0.0, 0.0);
    let mut log_err = Vec::new();
    let mut within = [0usize; 3];
    for i in 0..valid.len() {
        if !valid.data()[i] {
            continue;
        }
        let (p, g) = (pred.data()[i], gt.data()[i]);
        if !depth_defined(g) {
            return Err(Error::invalid(format!(
                "ground truth not positive at valid pixel {i}"
            )));
        }
        if !depth_defined(p) {
            excluded += 1;
            continue;
        }
        n += 1;
        abs_rel += (p - g).abs() / g;
        sq += (p - g) * (p - g);
        log_err.push(p.ln() - g.ln());
        let ratio = (p / g).max(g / p);
        for (k, t) in [1.25f64, 1.25 * 1.25, 1.25 * 1.25 * 1.25]
            .iter()
            .enumerate()
        {
            if ratio < *t {
                within[k] += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::invalid("no valid pixels to score"));
    }
    let nf = n as f64;
    // two passes; the one-pass variance cancels badly for near-constant errors
    let mean_e = log_err.iter().sum::<f64>() / nf;
    let var_e = log_err
        .iter()
        .map(|e| (e - mean_e) * (e - mean_e))
        .sum::<f64>()
        / nf;
    Ok(DepthMetricsReport {
        abs_rel: abs_rel / nf,
        rmse: (sq / nf).sqrt(),
        si_rmse: var_e.sqrt(),
        delta1: within[0] as f64 / nf,
        delta2: within[1] as f64 / nf,
        delta3: within[2] as f64 / nf,
        valid_pixels: n,
        excluded,
    })
}

/// Mean absolute depth jump over 4-adjacent pixel pairs straddling the edge
/// of `mask` (one pixel inside, one outside).
pub fn transition_score(depth: &DepthMap, mask: &BitMask) -> Result<f64> {
    depth.ensure_same_dims(mask)?;
    let (w, h) = depth.dims();
    let mut sum = 0.0;
    let mut count = 0usize;
    for y in 0..h {
        for x in 0..w {
            if !*mask.get(x, y) {
                continue;
            }
            let a = *depth.get(x, y);
            if !depth_defined(a) {
                continue;
            }
            for (nx, ny) in mask.neighbors4(x, y) {
                if *mask.get(nx, ny) {
                    continue;
                }
                let b = *depth.get(nx, ny);
                if depth_defined(b) {
                    sum += (a - b).abs();
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::invalid(
            "mask has no boundary pairs with defined depth",
        ));
    }
    Ok(sum / count as f64)
}

/// Outside-`mask` pixels within `band` 4-dilations of the mask.
pub fn transition_band(mask: &BitMask, band: usize) -> BitMask {
    let mut grown = mask.clone();
    for _ in 0..band {
        grown = grown.dilate4();
    }
    grown.and(&mask.not())
}

/// Mean absolute error over the band of unknown pixels bordering `mask`.
pub fn transition_region_mae(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: &BitMask,
    band: usize,
) -> Result<f64> {
    pred.ensure_same_dims(gt)?;
    pred.ensure_same_dims(mask)?;
    if band == 0 {
        return Err(Error::invalid("band must be at least one pixel"));
    }
    let region = transition_band(mask, band);
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..region.len() {
        if region.data()[i] && depth_defined(pred.data()[i]) && depth_defined(gt.data()[i]) {
            sum += (pred.data()[i] - gt.data()[i]).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("transition band is empty"));
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Raster;
    use proptest::prelude::*;

    #[test]
    fn coverage_bounds() {
        assert_eq!(coverage(&BitMask::filled(8, 4, false)), 0.0);
        assert_eq!(coverage(&BitMask::filled(8, 4, true)), 1.0);
    }

    #[test]
    fn identical_depth_is_perfect() {
        let g = Raster::from_fn(16, 8, |x, y| 1.0 + x as f64 + y as f64);
        let m = depth_metrics(&g, &g, &BitMask::filled(16, 8, true)).unwrap();
        assert_eq!((m.abs_rel, m.rmse, m.si_rmse), (0.0, 0.0, 0.0));
        assert_eq!((m.delta1, m.delta2, m.delta3), (1.0, 1.0, 1.0));
    }

    #[test]
    fn doubled_depth() {
        let g = Raster::from_fn(16, 8, |x, y| 0.5 + x as f64 * 0.3 + y as f64);
        let p = g.map(|v| 2.0 * v);
        let m = depth_metrics(&p, &g, &BitMask::filled(16, 8, true)).unwrap();
        assert!((m.abs_rel - 1.0).abs() < 1e-9);
        assert!(m.si_rmse.abs() < 1e-9);
        assert_eq!((m.delta1, m.delta2, m.delta3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn nonpositive_predictions_are_excluded() {
        let g = Raster::filled(4, 2, 1.0);
        let mut p = g.clone();
        p.set(0, 0, -1.0);
        let m = depth_metrics(&p, &g, &BitMask::filled(4, 2, true)).unwrap();
        assert_eq!((m.valid_pixels, m.excluded), (7, 1));
        let all_bad = Raster::filled(4, 2, 0.0);
        assert!(depth_metrics(&all_bad, &g, &BitMask::filled(4, 2, true)).is_err());
    }

    #[test]
    fn ramp_and_step_transitions() {
        let ramp = Raster::from_fn(64, 8, |x, _| 1.0 + 0.01 * x as f64);
        let m = Raster::from_fn(64, 8, |x, _| (10..30).contains(&x));
        assert!((transition_score(&ramp, &m).unwrap() - 0.01).abs() < 1e-12);
        let step = Raster::from_fn(64, 8, |x, _| if (10..30).contains(&x) { 3.0 } else { 2.0 });
        assert!((transition_score(&step, &m).unwrap() - 1.0).abs() < 1e-12);
        assert!(transition_score(&ramp, &BitMask::filled(64, 8, true)).is_err());
    }

    #[test]
    fn band_mae() {
        let gt = Raster::filled(32, 16, 2.0);
        let m = Raster::from_fn(32, 16, |x, _| x < 16);
        assert_eq!(transition_region_mae(&gt, &gt, &m, 2).unwrap(), 0.0);
        let band = transition_band(&m, 2);
        let p = Raster::from_fn(32, 16, |x, y| if *band.get(x, y) { 2.5 } else { 7.0 });
        assert!((transition_region_mae(&p, &gt, &m, 2).unwrap() - 0.5).abs() < 1e-12);
        assert!(transition_region_mae(&p, &gt, &m, 0).is_err());
    }

    proptest! {
        #[test]
        fn deltas_are_monotone(vals in proptest::collection::vec((0.01f64..10.0, 0.01f64..10.0), 1..64)) {
            let n = vals.len();
            let p = Raster::from_vec(n, 1, vals.iter().map(|v| v.0).collect()).unwrap();
            let g = Raster::from_vec(n, 1, vals.iter().map(|v| v.1).collect()).unwrap();
            let m = depth_metrics(&p, &g, &BitMask::filled(n, 1, true)).unwrap();
            prop_assert!(m.delta1 <= m.delta2 && m.delta2 <= m.delta3);
        }

        #[test]
        fn si_rmse_ignores_scale(
            vals in proptest::collection::vec((0.01f64..10.0, 0.01f64..10.0), 2..64),
            s in 0.01f64..100.0,
        ) {
            let n = vals.len();
            let p = Raster::from_vec(n, 1, vals.iter().map(|v| v.0).collect()).unwrap();
            let g = Raster::from_vec(n, 1, vals.iter().map(|v| v.1).collect()).unwrap();
            let all = BitMask::filled(n, 1, true);
            let a = depth_metrics(&p, &g, &all).unwrap().si_rmse;
            let b = depth_metrics(&p.map(|v| v * s), &g, &all).unwrap().si_rmse;
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn transition_ignores_offset(c in -0.5f64..100.0, seed in 0u64..100) {
            let d = Raster::from_fn(32, 8, |x, y| 1.0 + ((x * 7 + y * 13 + seed as usize) % 11) as f64);
            let m = Raster::from_fn(32, 8, |x, y| x > 5 && x < 20 && y > 1);
            let a = transition_score(&d, &m).unwrap();
            let b = transition_score(&d.map(|v| v + c), &m).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + c.abs()));
        }

        #[test]
        fn coverage_is_monotone_under_union(a in proptest::collection::vec(any::<bool>(), 32), b in proptest::collection::vec(any::<bool>(), 32)) {
            let ma = Raster::from_vec(8, 4, a).unwrap();
            let mb = Raster::from_vec(8, 4, b).unwrap();
            let u = coverage(&ma.or(&mb));
            prop_assert!(u >= coverage(&ma) && u >= coverage(&mb) && u <= 1.0);
        }
    }
}
