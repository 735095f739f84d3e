use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};

use crate::{Error, Result};

/// Pinhole camera. Camera space is x right, y down, z forward.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraPose {
    pub width: u32,
    pub height: u32,
    /// Focal length in pixels.
    pub focal: f64,
    pub principal_point: [f64; 2],
    pub world_to_camera: Isometry3<f64>,
}

impl CameraPose {
    pub fn new(
        width: u32,
        height: u32,
        focal: f64,
        principal_point: [f64; 2],
        world_to_camera: Isometry3<f64>,
    ) -> Result<Self> {
        let pose = CameraPose {
            width,
            height,
            focal,
            principal_point,
            world_to_camera,
        };
        pose.validate()?;
        Ok(pose)
    }

    /// Camera at `eye` looking at `target` with world `up` pointing up in the
    /// image. Principal point at the image center.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        width: u32,
        height: u32,
        focal: f64,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("look_at: eye coincides with target"))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("look_at: view direction parallel to up"))?;
        let down = forward.cross(&right);
        let cam_to_world = Matrix3::from_columns(&[right, down, forward]);
        let rotation =
            UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(cam_to_world.transpose()));
        let translation = -(rotation * eye);
        CameraPose::new(
            width,
            height,
            focal,
            [width as f64 / 2.0, height as f64 / 2.0],
            Isometry3::from_parts(Translation3::from(translation), rotation),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 1 || self.height < 1 {
            return Err(Error::invalid("camera resolution must be at least 1x1"));
        }
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return Err(Error::invalid("camera focal length must be positive"));
        }
        let q = self.world_to_camera.rotation.quaternion();
        if (q.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("camera quaternion is not unit length"));
        }
        let t = self.world_to_camera.translation.vector;
        if !t.iter().chain(self.principal_point.iter()).all(|v| v.is_finite()) {
            return Err(Error::invalid("camera parameters must be finite"));
        }
        Ok(())
    }

    /// World-to-camera rotation matrix.
    pub fn rotation(&self) -> Matrix3<f64> {
        self.world_to_camera.rotation.to_rotation_matrix().into_inner()
    }

    /// Camera center in world space.
    pub fn center(&self) -> Vector3<f64> {
        self.world_to_camera.inverse_transform_point(&Point3::origin()).coords
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.world_to_camera.transform_point(&Point3::from(*p)).coords
    }

    /// World-space unit direction of the primary ray through pixel coordinate
    /// `(u, v)` (pixel centers sit at half-integers).
    pub fn ray_direction(&self, u: f64, v: f64) -> Vector3<f64> {
        let d = Vector3::new(
            (u - self.principal_point[0]) / self.focal,
            (v - self.principal_point[1]) / self.focal,
            1.0,
        );
        self.world_to_camera
            .rotation
            .inverse_transform_vector(&d)
            .normalize()
    }

    /// Same intrinsics at a different resolution, focal scaled to keep the
    /// field of view.
    pub fn with_resolution(&self, width: u32, height: u32) -> CameraPose {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        CameraPose {
            width,
            height,
            focal: self.focal * sx,
            principal_point: [self.principal_point[0] * sx, self.principal_point[1] * sy],
            world_to_camera: self.world_to_camera,
        }
    }
}

/// Rigid rotation of the camera by `angle` about the world z axis through
/// `pivot`. Equivalently, the returned camera sees the scene as the input
/// camera would after the scene was rotated by `-angle` about that axis.
pub fn rotate_pose_about_axis(
    pose: &CameraPose,
    angle: f64,
    pivot: &Vector3<f64>,
) -> Result<CameraPose> {
    if !angle.is_finite() {
        return Err(Error::invalid("rotation angle must be finite"));
    }
    let spin = Isometry3::from_parts(
        Translation3::from(*pivot),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle),
    ) * Translation3::from(-*pivot);
    let mut w2c = pose.world_to_camera * spin.inverse();
    w2c.rotation = UnitQuaternion::new_normalize(w2c.rotation.into_inner());
    Ok(CameraPose {
        world_to_camera: w2c,
        ..pose.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn ring_camera(r: f64, h: f64) -> CameraPose {
        CameraPose::look_at(
            Vector3::new(r, 0.0, h),
            Vector3::zeros(),
            Vector3::z(),
            32,
            32,
            40.0,
        )
        .unwrap()
    }

    fn max_pose_diff(a: &CameraPose, b: &CameraPose) -> f64 {
        let ma = a.world_to_camera.to_homogeneous();
        let mb = b.world_to_camera.to_homogeneous();
        (ma - mb).abs().max()
    }

    #[test]
    fn look_at_projects_target_to_center() {
        let cam = ring_camera(3.0, 1.0);
        let p = cam.to_camera(&Vector3::zeros());
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && p.z > 0.0);
        // world up is image up (negative camera y)
        let up = cam.to_camera(&Vector3::new(0.0, 0.0, 0.1));
        assert!(up.y < p.y);
        assert!((cam.center() - Vector3::new(3.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_and_full_turn_are_identity() {
        let cam = ring_camera(2.0, 0.5);
        let pivot = Vector3::new(0.1, -0.2, 0.3);
        let same = rotate_pose_about_axis(&cam, 0.0, &pivot).unwrap();
        assert!(max_pose_diff(&cam, &same) < 1e-15);
        let full = rotate_pose_about_axis(&cam, 2.0 * PI, &pivot).unwrap();
        assert!(max_pose_diff(&cam, &full) < 1e-9);
    }

    #[test]
    fn quarter_turn_matches_matrix_composition() {
        let (r, h) = (3.0, 1.2);
        let cam = ring_camera(r, h);
        let turned = rotate_pose_about_axis(&cam, FRAC_PI_2, &Vector3::zeros()).unwrap();
        assert!((turned.center() - Vector3::new(0.0, r, h)).norm() < 1e-12);
        let look = turned.to_camera(&Vector3::zeros());
        assert!(look.x.abs() < 1e-12 && look.y.abs() < 1e-12);

        // Oracle: world_to_camera' = world_to_camera * Rz(-a) as plain 4x4 matrices.
        let (s, c) = (-FRAC_PI_2).sin_cos();
        #[rustfmt::skip]
        let rz = Matrix4::new(
            c, -s, 0.0, 0.0,
            s,  c, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        let expected = cam.world_to_camera.to_homogeneous() * rz;
        let got = turned.world_to_camera.to_homogeneous();
        assert!((expected - got).abs().max() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_angle() {
        let cam = ring_camera(2.0, 0.0);
        assert!(rotate_pose_about_axis(&cam, f64::NAN, &Vector3::zeros()).is_err());
        assert!(rotate_pose_about_axis(&cam, f64::INFINITY, &Vector3::zeros()).is_err());
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        let cam = ring_camera(2.0, 0.0);
        assert!(CameraPose::new(0, 4, 1.0, [0.0, 0.0], cam.world_to_camera).is_err());
        assert!(CameraPose::new(4, 4, 0.0, [0.0, 0.0], cam.world_to_camera).is_err());
    }

    proptest::proptest! {
        #[test]
        fn rotate_then_unrotate_is_identity(
            a in -10.0f64..10.0,
            az in 0.0f64..6.2,
            px in -1.0f64..1.0, py in -1.0f64..1.0, pz in -1.0f64..1.0,
        ) {
            let eye = Vector3::new(3.0 * az.cos(), 3.0 * az.sin(), 1.0);
            let cam = CameraPose::look_at(eye, Vector3::zeros(), Vector3::z(), 16, 16, 20.0).unwrap();
            let pivot = Vector3::new(px, py, pz);
            let there = rotate_pose_about_axis(&cam, a, &pivot).unwrap();
            let back = rotate_pose_about_axis(&there, -a, &pivot).unwrap();
            proptest::prop_assert!(max_pose_diff(&cam, &back) < 1e-9);
        }
    }
}
