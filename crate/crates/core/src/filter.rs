//! Separable smoothing and finite differences on panoramic rasters.
//! Columns wrap around in azimuth; rows clamp at the poles.

use crate::geom::Raster;

pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

pub fn gaussian_blur(src: &Raster<f64>, sigma: f64) -> Raster<f64> {
    let k = gaussian_kernel(sigma);
    if k.len() == 1 {
        return src.clone();
    }
    let r = (k.len() / 2) as isize;
    let (w, h) = src.dims();
    let tmp: Raster<f64> = Raster::from_fn(w, h, |x, y| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * *src.get(src.wrap_x(x as isize + i as isize - r), y))
            .sum()
    });
    Raster::from_fn(w, h, |x, y| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| {
                let yy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
                kv * *tmp.get(x, yy)
            })
            .sum()
    })
}

/// Sobel derivatives `(gx, gy)`; `gx` grows toward +column, `gy` toward +row.
pub fn sobel(src: &Raster<f64>) -> (Raster<f64>, Raster<f64>) {
    let (w, h) = src.dims();
    let at = |x: isize, y: isize| -> f64 {
        let yy = y.clamp(0, h as isize - 1) as usize;
        *src.get(src.wrap_x(x), yy)
    };
    let gx = Raster::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1))
    });
    let gy = Raster::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1))
    });
    (gx, gy)
}

/// Central difference gradient at one pixel.
pub fn central_gradient(src: &Raster<f64>, x: usize, y: usize) -> (f64, f64) {
    let h = src.height();
    let gx =
        0.5 * (src.get(src.wrap_x(x as isize + 1), y) - src.get(src.wrap_x(x as isize - 1), y));
    let gy = if h == 1 {
        0.0
    } else if y == 0 {
        src.get(x, 1) - src.get(x, 0)
    } else if y + 1 == h {
        src.get(x, y) - src.get(x, y - 1)
    } else {
        0.5 * (src.get(x, y + 1) - src.get(x, y - 1))
    };
    (gx, gy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized() {
        let k = gaussian_kernel(1.5);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(k.len(), 11);
    }

    #[test]
    fn blur_preserves_constant() {
        let r = Raster::filled(16, 8, 2.5);
        let b = gaussian_blur(&r, 1.0);
        assert!(b.data().iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn sobel_of_ramp_wraps() {
        let r = Raster::from_fn(8, 4, |x, _| x as f64);
        let (gx, gy) = sobel(&r);
        assert_eq!(*gx.get(3, 2), 8.0);
        // across the seam the ramp jumps from 7 back to 0
        assert!(*gx.get(0, 2) < 0.0);
        assert!(gy.data().iter().all(|v| v.abs() < 1e-12));
    }
}
