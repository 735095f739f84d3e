//! Dataset manifest: JSON with poses as quaternion plus translation and
//! angles in radians. Floats are written in shortest round-trip form, so
//! reading and rewriting reproduces the same bytes.

use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::image::{read_mask_png, read_pfm, read_png, write_mask_png, write_pfm, write_png};
use super::{read_bytes, write_atomic};
use crate::reference::{Dataset, DatasetEntry};
use crate::scene::{AlphaMask, CameraPose, CaptureSchedule, EnvLight, ScheduleEntry};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub principal_point: [f64; 2],
    /// World-to-camera rotation `[w, x, y, z]`.
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl PoseRecord {
    pub fn from_pose(p: &CameraPose) -> Self {
        let q = p.world_to_camera.rotation.quaternion();
        let t = p.world_to_camera.translation.vector;
        PoseRecord {
            width: p.width,
            height: p.height,
            focal: p.focal,
            principal_point: p.principal_point,
            rotation: [q.w, q.i, q.j, q.k],
            translation: [t.x, t.y, t.z],
        }
    }

    /// Exact inverse of [`PoseRecord::from_pose`]; the stored quaternion is
    /// used as is, so values survive a round trip bit for bit.
    pub fn to_pose(&self) -> Result<CameraPose> {
        let [w, x, y, z] = self.rotation;
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !((n - 1.0).abs() < 1e-6) {
            return Err(Error::Schema(format!("pose quaternion has norm {n}")));
        }
        let rot = UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z));
        let iso = Isometry3::from_parts(Translation3::from(self.translation), rot);
        CameraPose::new(self.width, self.height, self.focal, self.principal_point, iso)
            .map_err(|e| Error::Schema(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvRecord {
    pub degree: usize,
    pub coeffs: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub camera_index: usize,
    pub world_pose: PoseRecord,
    pub object_pose: PoseRecord,
    pub turntable_angle: f64,
    pub theta: f64,
    pub multiplicity: usize,
    pub image: Option<String>,
    pub image_pfm: Option<String>,
    pub mask: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub width: u32,
    pub height: u32,
    pub pivot: [f64; 3],
    pub env: Option<EnvRecord>,
    pub scene_hash: Option<String>,
    pub background: [f64; 3],
    pub entries: Vec<ManifestEntry>,
}

fn entry_record(e: &ScheduleEntry) -> ManifestEntry {
    ManifestEntry {
        camera_index: e.camera_index,
        world_pose: PoseRecord::from_pose(&e.world_pose),
        object_pose: PoseRecord::from_pose(&e.object_frame_pose),
        turntable_angle: e.turntable_angle,
        theta: e.light_rotation,
        multiplicity: e.multiplicity,
        image: None,
        image_pfm: None,
        mask: None,
    }
}

impl Manifest {
    /// Schedule-only manifest (no images yet).
    pub fn from_schedule(schedule: &CaptureSchedule) -> Self {
        let (w, h) = schedule
            .entries
            .first()
            .map_or((0, 0), |e| (e.world_pose.width, e.world_pose.height));
        Manifest {
            schema_version: SCHEMA_VERSION,
            width: w,
            height: h,
            pivot: schedule.pivot,
            env: None,
            scene_hash: None,
            background: [0.0; 3],
            entries: schedule.entries.iter().map(entry_record).collect(),
        }
    }

    /// Total frame count, counting static dwell multiplicity.
    pub fn frame_count(&self) -> usize {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }

    pub fn to_schedule(&self) -> Result<CaptureSchedule> {
        let entries = self
            .entries
            .iter()
            .map(|r| {
                Ok(ScheduleEntry {
                    camera_index: r.camera_index,
                    world_pose: r.world_pose.to_pose()?,
                    turntable_angle: r.turntable_angle,
                    light_rotation: r.theta,
                    object_frame_pose: r.object_pose.to_pose()?,
                    multiplicity: r.multiplicity,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CaptureSchedule {
            entries,
            pivot: self.pivot,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "manifest schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        for e in &self.entries {
            if !(e.theta.is_finite() && e.turntable_angle.is_finite()) || e.multiplicity == 0 {
                return Err(Error::Schema("manifest entry has a bad angle or multiplicity".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Schema(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::Schema("manifest is not UTF-8".into()))?;
        Manifest::from_json(text)
    }
}

/// Write images (PNG and PFM), masks and `manifest.json` under `dir`.
/// Returns the manifest path.
pub fn save_dataset(dir: &Path, ds: &Dataset, pivot: [f64; 3]) -> Result<PathBuf> {
    let mut entries = Vec::with_capacity(ds.len());
    for (i, e) in ds.entries.iter().enumerate() {
        let png = format!("images/frame_{i:04}.png");
        let pfm = format!("images/frame_{i:04}.pfm");
        let mask = format!("masks/mask_{i:04}.png");
        write_png(&dir.join(&png), &e.image)?;
        write_pfm(&dir.join(&pfm), &e.image)?;
        write_mask_png(&dir.join(&mask), &e.mask)?;
        let mut r = entry_record(&e.frame);
        r.image = Some(png);
        r.image_pfm = Some(pfm);
        r.mask = Some(mask);
        entries.push(r);
    }
    let m = Manifest {
        schema_version: SCHEMA_VERSION,
        width: ds.width,
        height: ds.height,
        pivot,
        env: Some(EnvRecord {
            degree: ds.env.degree(),
            coeffs: ds.env.coeffs().to_vec(),
        }),
        scene_hash: Some(ds.scene_hash.clone()),
        background: ds.background,
        entries,
    };
    let path = dir.join("manifest.json");
    m.write(&path)?;
    Ok(path)
}

/// Load a rendered dataset. Float PFM images are preferred when listed.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let m = Manifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let env = match &m.env {
        Some(e) => EnvLight::new(e.degree, e.coeffs.clone()).map_err(|e| Error::Schema(e.to_string()))?,
        None => return Err(Error::Schema("manifest has no environment; render it with gen first".into())),
    };
    let schedule = m.to_schedule()?;
    let entries = schedule
        .entries
        .into_iter()
        .zip(&m.entries)
        .map(|(frame, r)| {
            let image = match (&r.image_pfm, &r.image) {
                (Some(p), _) if base.join(p).exists() => read_pfm(&base.join(p))?,
                (_, Some(p)) => read_png(&base.join(p))?,
                _ => return Err(Error::Schema("manifest entry has no image".into())),
            };
            if (image.width, image.height) != (m.width, m.height) {
                return Err(Error::Schema("image size differs from manifest resolution".into()));
            }
            let mask = match &r.mask {
                Some(p) => read_mask_png(&base.join(p))?,
                None => AlphaMask::full(m.width, m.height),
            };
            Ok(DatasetEntry { frame, image, mask })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        width: m.width,
        height: m.height,
        entries,
        env,
        scene_hash: m.scene_hash.clone().unwrap_or_default(),
        background: m.background,
    })
}
