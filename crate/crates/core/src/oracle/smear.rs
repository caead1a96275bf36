use super::{InpaintRequest, Inpainter};
use crate::error::Result;
use crate::geom::{EqrImage, Raster, Rgb};

/// Fills masked pixels from their surroundings with a push-pull pyramid.
/// Pixels outside `mask` are returned unchanged. A fully masked image comes
/// back as mid-grey.
pub fn push_pull_fill(image: &EqrImage, mask: &Raster<bool>) -> Result<EqrImage> {
    image.ensure_same_dims(mask)?;
    if mask.count_ones() == 0 {
        return Ok(image.clone());
    }
    if mask.count_ones() == mask.len() {
        return Ok(Raster::filled(image.width(), image.height(), [0.5; 3]));
    }
    // (weighted color, weight) per level
    let mut levels: Vec<Raster<([f32; 3], f32)>> =
        vec![Raster::from_fn(image.width(), image.height(), |x, y| {
            if *mask.get(x, y) {
                ([0.0; 3], 0.0)
            } else {
                (*image.get(x, y), 1.0)
            }
        })];
    while {
        let l = levels.last().unwrap();
        l.width() > 1 || l.height() > 1
    } {
        let prev = levels.last().unwrap();
        let (w, h) = (prev.width().div_ceil(2), prev.height().div_ceil(2));
        let next = Raster::from_fn(w, h, |x, y| {
            let mut acc = [0.0f32; 3];
            let mut wsum = 0.0f32;
            for dy in 0..2 {
                for dx in 0..2 {
                    let (sx, sy) = (2 * x + dx, 2 * y + dy);
                    if sx < prev.width() && sy < prev.height() {
                        let (c, wt) = prev.get(sx, sy);
                        for k in 0..3 {
                            acc[k] += c[k] * wt;
                        }
                        wsum += wt;
                    }
                }
            }
            if wsum > 0.0 {
                (acc.map(|v| v / wsum), wsum.min(1.0))
            } else {
                ([0.0; 3], 0.0)
            }
        });
        levels.push(next);
    }
    // pull: blend each level with the upsampled coarser one by its weight
    for i in (0..levels.len() - 1).rev() {
        let coarse = levels[i + 1].clone();
        let fine = &mut levels[i];
        let (w, h) = fine.dims();
        for y in 0..h {
            for x in 0..w {
                let (c, wt) = *fine.get(x, y);
                if wt >= 1.0 {
                    continue;
                }
                let (cc, _) = *coarse.get(x / 2, y / 2);
                let mut out: Rgb = [0.0; 3];
                for k in 0..3 {
                    out[k] = c[k] * wt + cc[k] * (1.0 - wt);
                }
                fine.set(x, y, (out, 1.0));
            }
        }
    }
    let filled = &levels[0];
    Ok(Raster::from_fn(image.width(), image.height(), |x, y| {
        if *mask.get(x, y) {
            filled.get(x, y).0
        } else {
            *image.get(x, y)
        }
    }))
}

/// Local, model-free inpainter.
#[derive(Clone, Copy, Debug, Default)]
pub struct SmearInpainter;

impl Inpainter for SmearInpainter {
    fn inpaint(&self, req: &InpaintRequest<'_>) -> Result<EqrImage> {
        push_pull_fill(req.image, req.mask)
    }
}
