use std::f64::consts::TAU;

use nalgebra::Vector3;

use crate::scene::CameraPose;
use crate::{Error, Result};

/// Tripod placements on a ring around the turntable.
///
/// Camera `i` sits at azimuth `azimuth_offset + 2π i / M`, cycling through
/// `elevations_deg`, at `radius` from the pivot and looking at it.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraRig {
    pub radius: f64,
    pub elevations_deg: Vec<f64>,
    pub azimuth_offset: f64,
    pub pivot: [f64; 3],
    pub width: u32,
    pub height: u32,
    pub focal: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        CameraRig {
            radius: 4.0,
            elevations_deg: vec![10.0, 25.0, 40.0],
            azimuth_offset: 0.0,
            pivot: [0.0; 3],
            width: 64,
            height: 64,
            focal: 80.0,
        }
    }
}

impl CameraRig {
    pub fn with_resolution(mut self, width: u32, height: u32) -> Self {
        self.focal *= width as f64 / self.width as f64;
        self.width = width;
        self.height = height;
        self
    }

    pub fn pivot_vector(&self) -> Vector3<f64> {
        Vector3::from(self.pivot)
    }

    /// Camera at a given azimuth/elevation (radians) on this rig's sphere.
    pub fn pose_at(&self, azimuth: f64, elevation: f64) -> Result<CameraPose> {
        let pivot = self.pivot_vector();
        let eye = pivot
            + self.radius
                * Vector3::new(
                    elevation.cos() * azimuth.cos(),
                    elevation.cos() * azimuth.sin(),
                    elevation.sin(),
                );
        CameraPose::look_at(eye, pivot, Vector3::z(), self.width, self.height, self.focal)
    }

    pub fn poses(&self, count: usize) -> Result<Vec<CameraPose>> {
        if self.elevations_deg.is_empty() {
            return Err(Error::invalid("rig needs at least one elevation"));
        }
        if !(self.radius > 0.0) {
            return Err(Error::invalid("rig radius must be positive"));
        }
        (0..count)
            .map(|i| {
                let az = self.azimuth_offset + TAU * i as f64 / count as f64;
                let el = self.elevations_deg[i % self.elevations_deg.len()].to_radians();
                self.pose_at(az, el)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poses_are_distinct_and_aim_at_pivot() {
        let rig = CameraRig {
            pivot: [0.1, 0.0, 0.3],
            ..CameraRig::default()
        };
        let poses = rig.poses(8).unwrap();
        for (i, a) in poses.iter().enumerate() {
            let p = a.to_camera(&rig.pivot_vector());
            assert!(p.x.abs() < 1e-9 && p.y.abs() < 1e-9 && p.z > 0.0, "{p:?}");
            assert!(((a.center() - rig.pivot_vector()).norm() - rig.radius).abs() < 1e-9);
            for b in &poses[i + 1..] {
                assert!((a.center() - b.center()).norm() > 1e-3);
            }
        }
        let el: Vec<f64> = poses
            .iter()
            .map(|p| ((p.center().z - 0.3) / rig.radius).asin().to_degrees())
            .collect();
        assert!((el[0] - 10.0).abs() < 1e-9 && (el[1] - 25.0).abs() < 1e-9 && (el[3] - 10.0).abs() < 1e-9);
    }
}
