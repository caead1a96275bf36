use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geom::{BitMask, DepthMap, EqrImage, Pose};
use crate::oracle::{
    DepthEstimator, InpaintPurpose, InpaintRequest, Inpainter, OracleKind, OracleSet, Panorama,
    PanoramaGen, Segmenter,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCall {
    pub kind: OracleKind,
    pub width: usize,
    pub height: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub purpose: Option<InpaintPurpose>,
    /// Masked pixel count for inpainting, returned mask count for segmentation.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub count: Option<usize>,
    pub ok: bool,
}

/// Oracle calls made by one pipeline task, in call order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskLog {
    pub task: String,
    pub calls: Vec<OracleCall>,
}

struct Inner {
    oracles: OracleSet,
    calls: Mutex<Vec<OracleCall>>,
}

/// Wraps an oracle set and logs every call made through it.
pub(crate) struct Recorder(Arc<Inner>);

impl Recorder {
    pub fn new(oracles: OracleSet) -> Self {
        Recorder(Arc::new(Inner {
            oracles,
            calls: Mutex::new(Vec::new()),
        }))
    }

    pub fn oracle_set(&self) -> OracleSet {
        OracleSet {
            panorama: self.0.clone(),
            inpainter: self.0.clone(),
            depth: self.0.clone(),
            segmenter: self.0.clone(),
        }
    }

    pub fn finish(self, task: String) -> TaskLog {
        let calls = std::mem::take(&mut *self.0.calls.lock().expect("call log poisoned"));
        TaskLog { task, calls }
    }
}

impl Inner {
    fn push(&self, call: OracleCall) {
        self.calls.lock().expect("call log poisoned").push(call);
    }
}

fn call(kind: OracleKind, (width, height): (usize, usize), ok: bool) -> OracleCall {
    OracleCall {
        kind,
        width,
        height,
        purpose: None,
        count: None,
        ok,
    }
}

impl PanoramaGen for Inner {
    fn generate(&self, prompt: &str, pose: &Pose, width: usize, height: usize) -> Result<Panorama> {
        let r = self.oracles.panorama.generate(prompt, pose, width, height);
        self.push(call(OracleKind::Panorama, (width, height), r.is_ok()));
        r
    }
}

impl Inpainter for Inner {
    fn inpaint(&self, request: &InpaintRequest<'_>) -> Result<EqrImage> {
        let r = self.oracles.inpainter.inpaint(request);
        self.push(OracleCall {
            purpose: Some(request.purpose),
            count: Some(request.mask.count_ones()),
            ..call(OracleKind::Inpaint, request.image.dims(), r.is_ok())
        });
        r
    }
}

impl DepthEstimator for Inner {
    fn estimate(&self, image: &EqrImage, pose: &Pose) -> Result<DepthMap> {
        let r = self.oracles.depth.estimate(image, pose);
        self.push(call(OracleKind::Depth, image.dims(), r.is_ok()));
        r
    }
}

impl Segmenter for Inner {
    fn segment(&self, image: &EqrImage, pose: &Pose) -> Result<Vec<BitMask>> {
        let r = self.oracles.segmenter.segment(image, pose);
        self.push(OracleCall {
            count: r.as_ref().ok().map(Vec::len),
            ..call(OracleKind::Segment, image.dims(), r.is_ok())
        });
        r
    }
}
