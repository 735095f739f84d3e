//! Model checkpoints as JSON. The training log is kept separately as CSV.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_bytes, write_atomic};
use crate::radiance::{MlpParams, ShColors};
use crate::relight::Distilled;
use crate::scene::{Gaussian, GaussianCloud, LATENT_DIM};
use crate::train::{Radiance, TrainedModel};
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Conditional,
    ShBaseline,
    /// SH colors distilled at a fixed light rotation.
    StaticTheta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianRecord {
    pub position: [f64; 3],
    pub log_scale: [f64; 3],
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub latent: [f64; LATENT_DIM],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpRecord {
    pub hidden: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShRecord {
    pub degree: usize,
    pub coeffs: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub kind: CheckpointKind,
    pub background: [f64; 3],
    pub scene_diameter: f64,
    pub trained_thetas: Vec<f64>,
    pub gaussians: Vec<GaussianRecord>,
    pub mlp: Option<MlpRecord>,
    pub sh: Option<ShRecord>,
    /// Light rotation frozen into a distilled export.
    pub static_theta: Option<f64>,
    pub residuals: Option<Vec<f64>>,
}

fn records(cloud: &GaussianCloud) -> Vec<GaussianRecord> {
    cloud
        .gaussians
        .iter()
        .map(|g| GaussianRecord {
            position: g.position,
            log_scale: g.log_scale,
            rotation: g.rotation,
            opacity_logit: g.opacity_logit,
            latent: g.latent,
        })
        .collect()
}

impl Checkpoint {
    pub fn from_model(model: &TrainedModel) -> Self {
        let (kind, mlp, sh) = match &model.radiance {
            Radiance::Conditional(p) => (
                CheckpointKind::Conditional,
                Some(MlpRecord {
                    hidden: p.hidden,
                    data: p.data.clone(),
                }),
                None,
            ),
            Radiance::Sh(s) => (
                CheckpointKind::ShBaseline,
                None,
                Some(ShRecord {
                    degree: s.degree,
                    coeffs: s.coeffs.clone(),
                }),
            ),
        };
        Checkpoint {
            schema_version: CHECKPOINT_VERSION,
            kind,
            background: model.background,
            scene_diameter: model.cloud.scene_diameter,
            trained_thetas: model.trained_thetas.clone(),
            gaussians: records(&model.cloud),
            mlp,
            sh,
            static_theta: None,
            residuals: None,
        }
    }

    /// Export of distilled colors; geometry comes from `model`.
    pub fn from_distilled(model: &TrainedModel, d: &Distilled) -> Self {
        Checkpoint {
            schema_version: CHECKPOINT_VERSION,
            kind: CheckpointKind::StaticTheta,
            background: model.background,
            scene_diameter: model.cloud.scene_diameter,
            trained_thetas: vec![d.theta],
            gaussians: records(&model.cloud),
            mlp: None,
            sh: Some(ShRecord {
                degree: d.sh.degree,
                coeffs: d.sh.coeffs.clone(),
            }),
            static_theta: Some(d.theta),
            residuals: Some(d.residuals.clone()),
        }
    }

    pub fn cloud(&self) -> Result<GaussianCloud> {
        let gaussians = self
            .gaussians
            .iter()
            .map(|r| Gaussian {
                position: r.position,
                log_scale: r.log_scale,
                rotation: r.rotation,
                opacity_logit: r.opacity_logit,
                latent: r.latent,
            })
            .collect();
        GaussianCloud::new(gaussians, self.scene_diameter).map_err(|e| Error::Schema(e.to_string()))
    }

    /// Rebuild a model; a distilled export loads as an SH model. The log is
    /// empty.
    pub fn to_model(&self) -> Result<TrainedModel> {
        let cloud = self.cloud()?;
        let radiance = match (self.kind, &self.mlp, &self.sh) {
            (CheckpointKind::Conditional, Some(m), _) => {
                if m.data.len() != crate::radiance::mlp::param_count(m.hidden) {
                    return Err(Error::Schema("decoder weight count does not match its width".into()));
                }
                Radiance::Conditional(MlpParams {
                    hidden: m.hidden,
                    data: m.data.clone(),
                })
            }
            (CheckpointKind::ShBaseline | CheckpointKind::StaticTheta, _, Some(s)) => {
                let sh = ShColors::new(s.degree, s.coeffs.clone()).map_err(|e| Error::Schema(e.to_string()))?;
                if sh.len() != cloud.len() {
                    return Err(Error::Schema("SH color count does not match the cloud".into()));
                }
                Radiance::Sh(sh)
            }
            _ => return Err(Error::Schema(format!("{:?} checkpoint lacks its color model", self.kind))),
        };
        let model = TrainedModel {
            cloud,
            radiance,
            background: self.background,
            trained_thetas: self.trained_thetas.clone(),
            log: Vec::new(),
        };
        if !model.is_finite() {
            return Err(Error::Schema("checkpoint holds non-finite values".into()));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Schema(format!("checkpoint: {e}")))?;
        if c.schema_version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!(
                "checkpoint schema_version {} (expected {CHECKPOINT_VERSION})",
                c.schema_version
            )));
        }
        Ok(c)
    }
}

pub fn save_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    write_atomic(path, c.to_json()?.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::Schema("checkpoint is not UTF-8".into()))?;
    Checkpoint::from_json(text)
}
