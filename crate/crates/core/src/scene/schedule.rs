use nalgebra::Vector3;

use super::camera::{rotate_pose_about_axis, CameraPose};
use crate::Result;

/// One captured frame.
///
/// Sign convention: the turntable rotates the object by `+turntable_angle`
/// (counter-clockwise seen from above). In the object's frame the tripod
/// camera and the environment both appear rotated by `-turntable_angle`;
/// `object_frame_pose` carries the camera part and `light_rotation` stores
/// `θ = φ`, so the object-frame light is `env.rotated(-θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleEntry {
    pub camera_index: usize,
    pub world_pose: CameraPose,
    pub turntable_angle: f64,
    pub light_rotation: f64,
    pub object_frame_pose: CameraPose,
    /// Identical frames this entry stands for (static capture dwell).
    pub multiplicity: usize,
}

impl ScheduleEntry {
    pub fn new(
        camera_index: usize,
        world_pose: CameraPose,
        turntable_angle: f64,
        pivot: &Vector3<f64>,
    ) -> Result<Self> {
        let object_frame_pose = rotate_pose_about_axis(&world_pose, -turntable_angle, pivot)?;
        Ok(ScheduleEntry {
            camera_index,
            world_pose,
            turntable_angle,
            light_rotation: turntable_angle,
            object_frame_pose,
            multiplicity: 1,
        })
    }

    /// Rotation to apply to the world environment to get the light seen in
    /// the object frame.
    pub fn object_frame_env_angle(&self) -> f64 {
        -self.light_rotation
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaptureSchedule {
    pub entries: Vec<ScheduleEntry>,
    /// Turntable center; the spin axis is world z through this point.
    pub pivot: [f64; 3],
}

impl CaptureSchedule {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total frame count including static multiplicity.
    pub fn frame_count(&self) -> usize {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }

    pub fn camera_count(&self) -> usize {
        let mut idx: Vec<usize> = self.entries.iter().map(|e| e.camera_index).collect();
        idx.sort_unstable();
        idx.dedup();
        idx.len()
    }
}
