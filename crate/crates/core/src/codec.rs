//! PNG and PFM encoding for panoramas, masks and depth maps.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::geom::{BitMask, DepthMap, EqrImage, Raster};

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn image_to_rgb8(img: &EqrImage) -> RgbImage {
    RgbImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        image::Rgb(img.get(x as usize, y as usize).map(to_u8))
    })
}

pub fn rgb8_to_image(img: &RgbImage) -> EqrImage {
    Raster::from_fn(img.width() as usize, img.height() as usize, |x, y| {
        img.get_pixel(x as u32, y as u32)
            .0
            .map(|v| v as f32 / 255.0)
    })
}

pub fn encode_png(img: &EqrImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    image_to_rgb8(img).write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn decode_png(bytes: &[u8]) -> Result<EqrImage> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    Ok(rgb8_to_image(&img.to_rgb8()))
}

/// Single-channel PNG, 255 where set.
pub fn encode_mask_png(mask: &BitMask) -> Result<Vec<u8>> {
    let g = GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        image::Luma([if *mask.get(x as usize, y as usize) {
            255
        } else {
            0
        }])
    });
    let mut buf = Cursor::new(Vec::new());
    g.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

/// Any pixel at or above 128 counts as set.
pub fn decode_mask_png(bytes: &[u8]) -> Result<BitMask> {
    let g = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_luma8();
    Ok(Raster::from_fn(
        g.width() as usize,
        g.height() as usize,
        |x, y| g.get_pixel(x as u32, y as u32).0[0] >= 128,
    ))
}

pub fn save_png(img: &EqrImage, path: &Path) -> Result<()> {
    image_to_rgb8(img).save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

pub fn save_mask_png(mask: &BitMask, path: &Path) -> Result<()> {
    std::fs::write(path, encode_mask_png(mask)?)?;
    Ok(())
}

pub fn load_png(path: &Path) -> Result<EqrImage> {
    decode_png(&std::fs::read(path)?)
}

/// Greyscale visualization of a depth map, near = bright; undefined pixels are black.
pub fn depth_preview(depth: &DepthMap) -> EqrImage {
    let valid: Vec<f64> = depth
        .data()
        .iter()
        .copied()
        .filter(|v| v.is_finite() && *v > 0.0)
        .collect();
    let (lo, hi) = valid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| {
            (a.0.min(v.ln()), a.1.max(v.ln()))
        });
    depth.map(|&v| {
        if !(v.is_finite() && v > 0.0) {
            return [0.0; 3];
        }
        let t = if hi > lo {
            (v.ln() - lo) / (hi - lo)
        } else {
            0.0
        };
        let g = (1.0 - t) as f32 * 0.9 + 0.1;
        [g; 3]
    })
}

/// Greyscale PFM (`Pf`), little-endian, rows stored bottom to top.
pub fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let (w, h) = depth.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(*depth.get(x, y) as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<DepthMap> {
    let mut pos = 0usize;
    let mut token = |what: &str| -> Result<(String, usize)> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse {
                offset: start as u64,
                message: format!("missing PFM {what}"),
            });
        }
        let s = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        Ok((s, start))
    };
    let (magic, at) = token("magic")?;
    if magic != "Pf" {
        return Err(Error::Parse {
            offset: at as u64,
            message: format!("expected greyscale PFM magic `Pf`, found `{magic}`"),
        });
    }
    let mut num = |what: &str| -> Result<(f64, usize)> {
        let (s, at) = token(what)?;
        s.parse::<f64>().map(|v| (v, at)).map_err(|_| Error::Parse {
            offset: at as u64,
            message: format!("invalid PFM {what} `{s}`"),
        })
    };
    let (w, wat) = num("width")?;
    let (h, hat) = num("height")?;
    let (scale, sat) = num("scale")?;
    for (v, at, name) in [(w, wat, "width"), (h, hat, "height")] {
        if v < 1.0 || v.fract() != 0.0 {
            return Err(Error::Parse {
                offset: at as u64,
                message: format!("invalid PFM {name} {v}"),
            });
        }
    }
    if scale == 0.0 {
        return Err(Error::Parse {
            offset: sat as u64,
            message: "PFM scale must be nonzero".into(),
        });
    }
    let (w, h) = (w as usize, h as usize);
    // exactly one whitespace byte separates the header from the payload
    let data_start = pos + 1;
    let need = w * h * 4;
    if bytes.len() < data_start + need {
        return Err(Error::Parse {
            offset: bytes.len() as u64,
            message: format!(
                "PFM payload truncated: need {need} bytes, have {}",
                bytes.len().saturating_sub(data_start)
            ),
        });
    }
    let little = scale < 0.0;
    let mut out = Raster::filled(w, h, 0.0f64);
    for row in 0..h {
        let y = h - 1 - row;
        for x in 0..w {
            let o = data_start + (row * w + x) * 4;
            let b = [bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]];
            let v = if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
            out.set(x, y, v as f64);
        }
    }
    Ok(out)
}

pub fn save_pfm(depth: &DepthMap, path: &Path) -> Result<()> {
    std::fs::write(path, encode_pfm(depth))?;
    Ok(())
}

pub fn load_pfm(path: &Path) -> Result<DepthMap> {
    decode_pfm(&std::fs::read(path)?)
}
