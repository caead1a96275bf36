//! JSON-over-HTTP adapter for remote model servers.
//!
//! Each call is `POST {base_url}/v1/{panorama|inpaint|depth|segment}` with a
//! JSON body; images travel as base64 PNG and depth as base64 PFM.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{
    DepthEstimator, InpaintPurpose, InpaintRequest, Inpainter, OracleKind, Panorama, PanoramaGen,
    Segmenter,
};
use crate::codec;
use crate::error::{Error, Result};
use crate::geom::{BitMask, DepthMap, EqrImage, Pose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub base_url: String,
    pub timeout_ms: u64,
    pub connect_timeout_ms: u64,
    pub attempts: u32,
    /// Delay before the first retry; doubles after each failed attempt.
    pub initial_backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "http://127.0.0.1:8080".into(),
            timeout_ms: 120_000,
            connect_timeout_ms: 5_000,
            attempts: 3,
            initial_backoff_ms: 250,
        }
    }
}

#[derive(Serialize)]
struct RequestBody<'a> {
    request_id: String,
    kind: OracleKind,
    prompt: &'a str,
    width: usize,
    height: usize,
    pose: [f64; 16],
    #[serde(skip_serializing_if = "Option::is_none")]
    image: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    purpose: Option<InpaintPurpose>,
}

#[derive(Deserialize)]
struct ResponseBody {
    status: String,
    #[serde(default)]
    model: String,
    #[serde(default)]
    message: Option<String>,
    #[serde(default)]
    image: Option<String>,
    #[serde(default)]
    depth: Option<String>,
    #[serde(default)]
    masks: Option<Vec<String>>,
}

pub struct HttpOracle {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    counter: AtomicU64,
}

impl std::fmt::Debug for HttpOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpOracle")
            .field("config", &self.config)
            .finish()
    }
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl HttpOracle {
    pub fn new(config: HttpConfig) -> Result<Self> {
        if config.attempts == 0 {
            return Err(Error::Config("http attempts must be at least 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .connect_timeout(Duration::from_millis(config.connect_timeout_ms))
            .pool_max_idle_per_host(0)
            .build()
            .map_err(|e| Error::Config(format!("cannot build http client: {e}")))?;
        Ok(HttpOracle {
            config,
            client,
            counter: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn next_id(&self, kind: OracleKind) -> String {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        format!("{}-{}-{n}", kind.endpoint(), std::process::id())
    }

    fn url(&self, kind: OracleKind) -> String {
        format!(
            "{}/v1/{}",
            self.config.base_url.trim_end_matches('/'),
            kind.endpoint()
        )
    }

    fn once(&self, url: &str, body: &[u8]) -> std::result::Result<ResponseBody, Attempt> {
        let resp = self
            .client
            .post(url)
            .header("content-type", "application/json")
            .body(body.to_vec())
            .send()
            .map_err(|e| Attempt::Retry(format!("transport error: {e}")))?;
        let status = resp.status();
        let bytes = resp
            .bytes()
            .map_err(|e| Attempt::Retry(format!("reading response: {e}")))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Attempt::Retry(format!("server returned {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(format!(
                "server returned {status}: {}",
                String::from_utf8_lossy(&bytes)
                    .chars()
                    .take(200)
                    .collect::<String>()
            )));
        }
        let parsed: ResponseBody = serde_json::from_slice(&bytes)
            .map_err(|e| Attempt::Fatal(format!("malformed response json: {e}")))?;
        if parsed.status != "ok" {
            return Err(Attempt::Fatal(format!(
                "server status `{}`{}",
                parsed.status,
                parsed
                    .message
                    .as_deref()
                    .map(|m| format!(": {m}"))
                    .unwrap_or_default()
            )));
        }
        Ok(parsed)
    }

    fn call(&self, kind: OracleKind, mut body: RequestBody<'_>) -> Result<(String, ResponseBody)> {
        let id = self.next_id(kind);
        body.request_id = id.clone();
        let bytes = serde_json::to_vec(&body)?;
        let url = self.url(kind);
        let mut backoff = Duration::from_millis(self.config.initial_backoff_ms);
        let mut last = String::new();
        for attempt in 1..=self.config.attempts {
            match self.once(&url, &bytes) {
                Ok(r) => {
                    log::debug!("{id}: {} answered by model `{}`", kind.endpoint(), r.model);
                    return Ok((id, r));
                }
                Err(Attempt::Fatal(m)) => return Err(oracle_err(kind, &id, m)),
                Err(Attempt::Retry(m)) => {
                    log::warn!(
                        "{id}: attempt {attempt}/{} failed: {m}",
                        self.config.attempts
                    );
                    last = m;
                    if attempt < self.config.attempts {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(oracle_err(
            kind,
            &id,
            format!("giving up after {} attempts: {last}", self.config.attempts),
        ))
    }
}

fn oracle_err(kind: OracleKind, id: &str, message: String) -> Error {
    Error::Oracle {
        stage: kind.endpoint().into(),
        message: format!("request {id}: {message}"),
    }
}

fn decode_b64(kind: OracleKind, id: &str, field: &str, s: Option<String>) -> Result<Vec<u8>> {
    let s = s.ok_or_else(|| oracle_err(kind, id, format!("response lacks `{field}`")))?;
    B64.decode(s.as_bytes())
        .map_err(|e| oracle_err(kind, id, format!("bad base64 in `{field}`: {e}")))
}

fn check_dims<T>(
    kind: OracleKind,
    id: &str,
    r: &crate::geom::Raster<T>,
    w: usize,
    h: usize,
) -> Result<()> {
    if r.dims() != (w, h) {
        return Err(oracle_err(
            kind,
            id,
            format!("response is {}x{}, expected {w}x{h}", r.width(), r.height()),
        ));
    }
    Ok(())
}

fn wrap<T>(kind: OracleKind, id: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| oracle_err(kind, id, e.to_string()))
}

impl PanoramaGen for HttpOracle {
    fn generate(&self, prompt: &str, pose: &Pose, width: usize, height: usize) -> Result<Panorama> {
        let kind = OracleKind::Panorama;
        let (id, r) = self.call(
            kind,
            RequestBody {
                request_id: String::new(),
                kind,
                prompt,
                width,
                height,
                pose: pose.to_row_major(),
                image: None,
                mask: None,
                purpose: None,
            },
        )?;
        let image = wrap(
            kind,
            &id,
            codec::decode_png(&decode_b64(kind, &id, "image", r.image)?),
        )?;
        check_dims(kind, &id, &image, width, height)?;
        Ok(Panorama { image, depth: None })
    }
}

impl Inpainter for HttpOracle {
    fn inpaint(&self, req: &InpaintRequest<'_>) -> Result<EqrImage> {
        req.image.ensure_same_dims(req.mask)?;
        let kind = OracleKind::Inpaint;
        let (w, h) = req.image.dims();
        let (id, r) = self.call(
            kind,
            RequestBody {
                request_id: String::new(),
                kind,
                prompt: req.prompt,
                width: w,
                height: h,
                pose: req.pose.to_row_major(),
                image: Some(B64.encode(codec::encode_png(req.image)?)),
                mask: Some(B64.encode(codec::encode_mask_png(req.mask)?)),
                purpose: Some(req.purpose),
            },
        )?;
        let image = wrap(
            kind,
            &id,
            codec::decode_png(&decode_b64(kind, &id, "image", r.image)?),
        )?;
        check_dims(kind, &id, &image, w, h)?;
        Ok(image)
    }
}

impl DepthEstimator for HttpOracle {
    fn estimate(&self, image: &EqrImage, pose: &Pose) -> Result<DepthMap> {
        let kind = OracleKind::Depth;
        let (w, h) = image.dims();
        let (id, r) = self.call(
            kind,
            RequestBody {
                request_id: String::new(),
                kind,
                prompt: "",
                width: w,
                height: h,
                pose: pose.to_row_major(),
                image: Some(B64.encode(codec::encode_png(image)?)),
                mask: None,
                purpose: None,
            },
        )?;
        let depth = wrap(
            kind,
            &id,
            codec::decode_pfm(&decode_b64(kind, &id, "depth", r.depth)?),
        )?;
        wrap(kind, &id, super::validate_depth_response(&depth, w, h))?;
        Ok(depth)
    }
}

impl Segmenter for HttpOracle {
    fn segment(&self, image: &EqrImage, pose: &Pose) -> Result<Vec<BitMask>> {
        let kind = OracleKind::Segment;
        let (w, h) = image.dims();
        let (id, r) = self.call(
            kind,
            RequestBody {
                request_id: String::new(),
                kind,
                prompt: "",
                width: w,
                height: h,
                pose: pose.to_row_major(),
                image: Some(B64.encode(codec::encode_png(image)?)),
                mask: None,
                purpose: None,
            },
        )?;
        let masks = r
            .masks
            .ok_or_else(|| oracle_err(kind, &id, "response lacks `masks`".into()))?;
        masks
            .into_iter()
            .map(|m| {
                let mask = wrap(
                    kind,
                    &id,
                    codec::decode_mask_png(&decode_b64(kind, &id, "masks", Some(m))?),
                )?;
                check_dims(kind, &id, &mask, w, h)?;
                Ok(mask)
            })
            .collect()
    }
}
