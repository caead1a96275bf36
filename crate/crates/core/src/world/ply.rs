//! Binary little-endian PLY with `float x, y, z` and `uchar red, green, blue`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{PointCloud, Vec3};

/// Nearest 8-bit level of a color channel.
pub fn quantize_channel(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_ply(cloud: &PointCloud) -> Result<Vec<u8>> {
    cloud.validate()?;
    let header = format!(
        "ply\nformat binary_little_endian 1.0\ncomment panofuse world\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    );
    let mut out = Vec::with_capacity(header.len() + 15 * cloud.len());
    out.extend_from_slice(header.as_bytes());
    for (p, c) in cloud.positions.iter().zip(&cloud.colors) {
        for v in [p.x, p.y, p.z] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.extend(c.iter().map(|&v| quantize_channel(v)));
    }
    Ok(out)
}

#[derive(Clone, Copy, PartialEq)]
enum Scalar {
    F32,
    F64,
    U8,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        match name {
            "float" | "float32" => Some(Scalar::F32),
            "double" | "float64" => Some(Scalar::F64),
            "uchar" | "uint8" => Some(Scalar::U8),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            Scalar::F32 => 4,
            Scalar::F64 => 8,
            Scalar::U8 => 1,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
            Scalar::U8 => b[0] as f64,
        }
    }
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn decode_ply(bytes: &[u8]) -> Result<PointCloud> {
    let mut pos = 0usize;
    let next_line = |pos: &mut usize| -> Result<(usize, String)> {
        let start = *pos;
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| start + i)
            .ok_or_else(|| parse_err(start, "unterminated header line"))?;
        *pos = end + 1;
        let line = std::str::from_utf8(&bytes[start..end])
            .map_err(|_| parse_err(start, "header is not UTF-8"))?;
        Ok((start, line.trim_end_matches('\r').to_string()))
    };
    let (off, magic) = next_line(&mut pos)?;
    if magic != "ply" {
        return Err(parse_err(off, "missing `ply` magic"));
    }
    let mut count: Option<usize> = None;
    let mut in_vertex = false;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut format_ok = false;
    loop {
        let (off, line) = next_line(&mut pos)?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["format", "binary_little_endian", "1.0"] => format_ok = true,
            ["format", other, ..] => {
                return Err(parse_err(off, format!("unsupported format `{other}`")))
            }
            ["element", "vertex", n] => {
                let n = n
                    .parse()
                    .map_err(|_| parse_err(off, format!("bad vertex count `{n}`")))?;
                count = Some(n);
                in_vertex = true;
            }
            ["element", name, n] => {
                if n.parse::<usize>().ok() != Some(0) {
                    return Err(parse_err(
                        off,
                        format!("unsupported non-empty element `{name}`"),
                    ));
                }
                in_vertex = false;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(parse_err(off, "list properties are not supported"))
            }
            ["property", "list", ..] => {}
            ["property", ty, name] => {
                if in_vertex {
                    let s = Scalar::parse(ty).ok_or_else(|| {
                        parse_err(off, format!("unsupported property type `{ty}`"))
                    })?;
                    props.push((name.to_string(), s));
                }
            }
            _ => return Err(parse_err(off, format!("unrecognized header line `{line}`"))),
        }
    }
    if !format_ok {
        return Err(parse_err(0, "missing binary_little_endian format line"));
    }
    let n = count.ok_or_else(|| parse_err(pos, "missing vertex element"))?;
    let index = |name: &str| -> Result<(usize, Scalar)> {
        let mut offset = 0;
        for (p, s) in &props {
            if p == name {
                return Ok((offset, *s));
            }
            offset += s.size();
        }
        Err(parse_err(pos, format!("missing vertex property `{name}`")))
    };
    let fields: Vec<(usize, Scalar)> = ["x", "y", "z", "red", "green", "blue"]
        .iter()
        .map(|n| index(n))
        .collect::<Result<_>>()?;
    for (k, (_, s)) in fields.iter().enumerate() {
        if (k < 3 && *s == Scalar::U8) || (k >= 3 && *s != Scalar::U8) {
            return Err(parse_err(
                pos,
                "positions must be floating point and colors uchar",
            ));
        }
    }
    let stride: usize = props.iter().map(|(_, s)| s.size()).sum();
    let body = &bytes[pos..];
    let needed = n
        .checked_mul(stride)
        .ok_or_else(|| parse_err(pos, "vertex count overflows"))?;
    if body.len() < needed {
        let complete = body.len() / stride.max(1);
        return Err(parse_err(
            pos + complete * stride,
            format!("truncated vertex data: {n} vertices declared, {complete} complete"),
        ));
    }
    if body.len() > needed {
        return Err(parse_err(pos + needed, "trailing bytes after vertex data"));
    }
    let mut cloud = PointCloud::with_capacity(n);
    for i in 0..n {
        let rec = &body[i * stride..(i + 1) * stride];
        let v: Vec<f64> = fields.iter().map(|(o, s)| s.read(&rec[*o..])).collect();
        let p = Vec3::new(v[0], v[1], v[2]);
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(parse_err(
                pos + i * stride,
                format!("vertex {i} has a non-finite coordinate"),
            ));
        }
        cloud.push(
            p,
            [
                (v[3] / 255.0) as f32,
                (v[4] / 255.0) as f32,
                (v[5] / 255.0) as f32,
            ],
        );
    }
    Ok(cloud)
}

pub fn save_ply(cloud: &PointCloud, path: &Path) -> Result<()> {
    let bytes = encode_ply(cloud)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_ply(path: &Path) -> Result<PointCloud> {
    decode_ply(&std::fs::read(path)?)
}
