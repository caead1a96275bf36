//! Pluggable stand-ins for the generative models: panorama generation,
//! inpainting, monocular depth and segmentation.
//!
//! Every request carries the camera pose. Model servers may ignore it; the
//! synthetic implementations use it to ray-trace the analytic scene.

mod http;
mod smear;
mod synthetic;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geom::{BitMask, DepthMap, EqrImage, Pose};

pub use http::{HttpConfig, HttpOracle};
pub use smear::{push_pull_fill, SmearInpainter};
pub use synthetic::{
    DepthCorruption, Palette, SceneObject, SceneSpec, Surface, SurfaceHit, SyntheticOracle,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Panorama,
    Inpaint,
    Depth,
    Segment,
}

impl OracleKind {
    pub fn endpoint(self) -> &'static str {
        match self {
            OracleKind::Panorama => "panorama",
            OracleKind::Inpaint => "inpaint",
            OracleKind::Depth => "depth",
            OracleKind::Segment => "segment",
        }
    }
}

/// Output of a panorama generator; model servers usually return no depth.
#[derive(Clone, Debug)]
pub struct Panorama {
    pub image: EqrImage,
    pub depth: Option<DepthMap>,
}

/// What an inpainting request is for. Background requests remove foreground
/// content under the mask (layered panoramas); fill requests complete holes
/// with whatever the scene holds there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InpaintPurpose {
    Background,
    Fill,
}

#[derive(Clone, Copy, Debug)]
pub struct InpaintRequest<'a> {
    pub image: &'a EqrImage,
    /// Pixels to synthesize.
    pub mask: &'a BitMask,
    pub prompt: &'a str,
    pub pose: &'a Pose,
    pub purpose: InpaintPurpose,
}

pub trait PanoramaGen: Send + Sync {
    fn generate(&self, prompt: &str, pose: &Pose, width: usize, height: usize) -> Result<Panorama>;
}

pub trait Inpainter: Send + Sync {
    fn inpaint(&self, request: &InpaintRequest<'_>) -> Result<EqrImage>;
}

pub trait DepthEstimator: Send + Sync {
    fn estimate(&self, image: &EqrImage, pose: &Pose) -> Result<DepthMap>;
}

pub trait Segmenter: Send + Sync {
    fn segment(&self, image: &EqrImage, pose: &Pose) -> Result<Vec<BitMask>>;
}

/// The four oracles a pipeline run needs.
#[derive(Clone)]
pub struct OracleSet {
    pub panorama: Arc<dyn PanoramaGen>,
    pub inpainter: Arc<dyn Inpainter>,
    pub depth: Arc<dyn DepthEstimator>,
    pub segmenter: Arc<dyn Segmenter>,
}

impl OracleSet {
    pub fn synthetic(oracle: SyntheticOracle) -> Self {
        let o = Arc::new(oracle);
        OracleSet {
            panorama: o.clone(),
            inpainter: o.clone(),
            depth: o.clone(),
            segmenter: o,
        }
    }

    pub fn http(oracle: HttpOracle) -> Self {
        let o = Arc::new(oracle);
        OracleSet {
            panorama: o.clone(),
            inpainter: o.clone(),
            depth: o.clone(),
            segmenter: o,
        }
    }
}

/// Copies `inpainted` into `original` under `mask`, leaving every other pixel untouched.
pub fn composite(original: &EqrImage, inpainted: &EqrImage, mask: &BitMask) -> Result<EqrImage> {
    original.ensure_same_dims(inpainted)?;
    original.ensure_same_dims(mask)?;
    let mut out = original.clone();
    for ((o, &n), &m) in out
        .data_mut()
        .iter_mut()
        .zip(inpainted.data())
        .zip(mask.data())
    {
        if m {
            *o = n;
        }
    }
    Ok(out)
}

/// Rejects depth responses containing nonpositive or non-finite values.
pub fn validate_depth_response(depth: &DepthMap, width: usize, height: usize) -> Result<()> {
    if depth.dims() != (width, height) {
        return Err(crate::Error::Oracle {
            stage: "depth".into(),
            message: format!(
                "depth response is {:?}, expected {:?}",
                depth.dims(),
                (width, height)
            ),
        });
    }
    if let Some(i) = depth
        .data()
        .iter()
        .position(|&v| !crate::geom::depth_defined(v))
    {
        return Err(crate::Error::Oracle {
            stage: "depth".into(),
            message: format!(
                "depth response has invalid value {} at index {i}",
                depth.data()[i]
            ),
        });
    }
    Ok(())
}
