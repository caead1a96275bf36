use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{build_world, WorldConfig};
use crate::blend::BlendMethod;
use crate::error::Result;
use crate::evalkit::{evaluate_world, EvalOptions, EvalReport};
use crate::oracle::{OracleSet, SceneSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationVariant {
    Full,
    Naive,
    Interpolation,
    NoLdp,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::Full,
        AblationVariant::Naive,
        AblationVariant::Interpolation,
        AblationVariant::NoLdp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::Naive => "naive",
            AblationVariant::Interpolation => "interpolation",
            AblationVariant::NoLdp => "no-ldp",
        }
    }

    /// The base configuration with this variant's component swapped out.
    pub fn apply(self, base: &WorldConfig) -> WorldConfig {
        let mut c = base.clone();
        match self {
            AblationVariant::Full => {}
            AblationVariant::Naive => c.blend_method = BlendMethod::Naive,
            AblationVariant::Interpolation => c.blend_method = BlendMethod::Interpolation,
            AblationVariant::NoLdp => c.ldp = false,
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub points: usize,
    /// Mean seam score over the fill blocks that have one.
    pub mean_transition_score: Option<f64>,
    pub eval: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, v: AblationVariant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn table(&self) -> String {
        let evals: Vec<EvalReport> = self.rows.iter().map(|r| r.eval.clone()).collect();
        let mut out = EvalReport::table(&evals);
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<14} | {:>9} | {:>16}",
            "variant", "points", "transition score"
        );
        for r in &self.rows {
            let ts = r
                .mean_transition_score
                .map_or("n/a".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(
                out,
                "{:<14} | {:>9} | {:>16}",
                r.variant.name(),
                r.points,
                ts
            );
        }
        out
    }
}

/// Builds and evaluates one world per variant.
pub fn run_ablation(
    base: &WorldConfig,
    oracles: &OracleSet,
    variants: &[AblationVariant],
    eval: &EvalOptions,
    ground_truth: Option<&SceneSpec>,
) -> Result<AblationReport> {
    let mut rows = Vec::with_capacity(variants.len());
    for &v in variants {
        let config = v.apply(base);
        let world = build_world(&config, oracles)?;
        let scores: Vec<f64> = world
            .provenance
            .fills
            .iter()
            .filter_map(|f| f.diagnostics.transition_score)
            .collect();
        let mean_transition_score =
            (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
        let report = evaluate_world(
            v.name(),
            &world.cloud,
            &world.poses,
            &world.splat(),
            eval,
            ground_truth,
        )?;
        log::info!("ablation {}: {} points", v.name(), world.cloud.len());
        rows.push(AblationRow {
            variant: v,
            points: world.cloud.len(),
            mean_transition_score,
            eval: report,
        });
    }
    Ok(AblationReport { rows })
}
