use serde::{Deserialize, Serialize};

use crate::blend::{BlendMethod, BlendParams};
use crate::error::{Error, Result};
use crate::fusion::{DeformMode, RadiusMode};
use crate::geom::Vec3;
use crate::ldp::LdpParams;
use crate::oracle::{
    DepthCorruption, HttpConfig, HttpOracle, OracleSet, SceneSpec, SyntheticOracle,
};
use crate::render::SplatParams;

/// Distance between consecutive panorama centers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum Spacing {
    /// Multiple of the median depth of the first panorama.
    Median {
        factor: f64,
    },
    Absolute {
        distance: f64,
    },
}

impl Default for Spacing {
    fn default() -> Self {
        Spacing::Median { factor: 1.5 }
    }
}

/// How per-panorama depth scales are brought into agreement.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMode {
    /// Keep the estimator's scale.
    None,
    /// Match every panorama's median depth to the first one's.
    Median,
    /// Match each panorama to the previous aligned one where they overlap:
    /// the scale is the median ratio of the previous sphere rendered at the
    /// new pose over the new estimate.
    #[default]
    Overlap,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleBackend {
    #[default]
    Synthetic,
    Http,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenePreset {
    #[default]
    Canyon,
    Plain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub preset: ScenePreset,
    pub objects: usize,
    /// Objects are scattered over `x` in `[-2, extent]`.
    pub extent: f64,
    /// Full scene description; overrides the preset when present.
    pub spec: Option<SceneSpec>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            preset: ScenePreset::Canyon,
            objects: 6,
            extent: 10.0,
            spec: None,
        }
    }
}

impl SceneConfig {
    pub fn build(&self, seed: u64) -> SceneSpec {
        if let Some(s) = &self.spec {
            return s.clone();
        }
        match self.preset {
            ScenePreset::Canyon => SceneSpec::canyon(seed, self.objects, self.extent),
            ScenePreset::Plain => SceneSpec::plain(seed),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub backend: OracleBackend,
    pub http: HttpConfig,
    pub scene: SceneConfig,
    pub corruption: DepthCorruption,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub prompt: String,
    /// Number of panoramas along the path.
    pub n: usize,
    pub width: usize,
    pub height: usize,
    pub spacing: Spacing,
    /// Travel direction in the frame of the first pose.
    pub direction: [f64; 3],
    /// Wedge half-angle of the sphere openings, in degrees.
    pub alpha_deg: f64,
    pub radius: RadiusMode,
    pub deform: DeformMode,
    pub scale_mode: ScaleMode,
    /// Separate occluders from background on every panorama.
    pub ldp: bool,
    /// Also run the layered pass on the intermediate views.
    pub layered_fill: bool,
    pub ldp_params: LdpParams,
    pub blend_method: BlendMethod,
    pub blend: BlendParams,
    /// Log-ratio tolerance for releasing overdrawn seam pixels in fill views.
    pub seam_guard: Option<f64>,
    /// Defaults to sizing from the first panorama's median depth.
    pub splat: Option<SplatParams>,
    pub oracle: OracleConfig,
    pub seed: u64,
    pub keep_artifacts: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            prompt: "a narrow sandstone canyon with scattered boulders".to_string(),
            n: 3,
            width: 512,
            height: 256,
            spacing: Spacing::default(),
            direction: [1.0, 0.0, 0.0],
            alpha_deg: 60.0,
            radius: RadiusMode::default(),
            deform: DeformMode::default(),
            scale_mode: ScaleMode::Overlap,
            ldp: true,
            layered_fill: true,
            ldp_params: LdpParams::default(),
            blend_method: BlendMethod::Harmonic,
            blend: BlendParams::default(),
            seam_guard: Some(0.1),
            splat: None,
            oracle: OracleConfig::default(),
            seed: 0,
            keep_artifacts: false,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(config_err(format!(
                "at least two panoramas are required, got n = {}",
                self.n
            )));
        }
        if self.height < 8 || self.width != 2 * self.height {
            return Err(config_err(format!(
                "panoramas must be equirectangular (width = 2 * height, height >= 8), got {}x{}",
                self.width, self.height
            )));
        }
        if self.prompt.trim().is_empty() {
            return Err(config_err("prompt must be nonempty"));
        }
        match self.spacing {
            Spacing::Median { factor } if !(factor > 0.0 && factor.is_finite()) => {
                return Err(config_err("spacing factor must be positive"))
            }
            Spacing::Absolute { distance } if !(distance > 0.0 && distance.is_finite()) => {
                return Err(config_err("spacing distance must be positive"))
            }
            _ => {}
        }
        let d = Vec3::from(self.direction);
        if !(d.norm() > 0.0 && d.norm().is_finite()) {
            return Err(config_err("direction must be a nonzero vector"));
        }
        if !(self.alpha_deg > 0.0 && self.alpha_deg < 90.0) {
            return Err(config_err("alpha_deg must lie in (0, 90)"));
        }
        match self.radius {
            RadiusMode::Auto { percentile } if !(0.0..=100.0).contains(&percentile) => {
                return Err(config_err("radius percentile must lie in [0, 100]"))
            }
            RadiusMode::Fixed { radius } if !(radius > 0.0) => {
                return Err(config_err("radius must be positive"))
            }
            _ => {}
        }
        if !(self.blend.tol > 0.0) || self.blend.k == 0 || self.blend.node_cap == 0 {
            return Err(config_err(
                "blend tolerance, k and node cap must be positive",
            ));
        }
        if self.seam_guard.is_some_and(|t| !(t > 0.0)) {
            return Err(config_err("seam guard tolerance must be positive"));
        }
        if let Some(s) = &self.splat {
            if !(s.world_radius >= 0.0 && s.min_angle >= 0.0 && s.max_radius_px >= 1.0) {
                return Err(config_err("invalid splat parameters"));
            }
        }
        if self.oracle.backend == OracleBackend::Http && self.oracle.http.base_url.trim().is_empty()
        {
            return Err(config_err("http oracle needs a base url"));
        }
        Ok(())
    }

    pub fn direction(&self) -> Vec3 {
        Vec3::from(self.direction).normalize()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha_deg.to_radians()
    }

    /// Instantiates the configured oracle backend.
    pub fn oracles(&self) -> Result<OracleSet> {
        match self.oracle.backend {
            OracleBackend::Synthetic => {
                let scene = self.oracle.scene.build(self.seed);
                let o =
                    SyntheticOracle::new(scene)?.with_corruption(self.oracle.corruption.clone());
                Ok(OracleSet::synthetic(o))
            }
            OracleBackend::Http => Ok(OracleSet::http(HttpOracle::new(self.oracle.http.clone())?)),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: WorldConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }
}
