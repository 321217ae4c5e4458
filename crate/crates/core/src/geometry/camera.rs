use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Pinhole camera. Image rows grow downward; pixel `(row, col)` has its
/// center at continuous coordinates `(col + 0.5, row + 0.5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    position: Vec3,
    look_at: Vec3,
    up: Vec3,
    vertical_fov: f64,
    resolution: (usize, usize),
    right: Vec3,
    true_up: Vec3,
    forward: Vec3,
}

/// A point mapped into continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub x: f64,
    pub y: f64,
    /// Distance along the viewing axis; not in front of the camera when `<= 0`.
    pub depth: f64,
}

impl Camera {
    pub fn new(
        position: Vec3,
        look_at: Vec3,
        up: Vec3,
        vertical_fov: f64,
        resolution: (usize, usize),
    ) -> Result<Self> {
        if !(vertical_fov > 0.0 && vertical_fov < std::f64::consts::PI) {
            return Err(Error::invalid(format!(
                "vertical fov {vertical_fov} not in (0, pi)"
            )));
        }
        if resolution.0 == 0 || resolution.1 == 0 {
            return Err(Error::invalid("camera resolution must be positive"));
        }
        let dir = look_at - position;
        if dir.norm() == 0.0 || !dir.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid(
                "camera position coincides with look-at point",
            ));
        }
        let forward = dir.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 * up.norm().max(1e-300) || up.norm() == 0.0 {
            return Err(Error::invalid(
                "camera up vector is parallel to the view direction",
            ));
        }
        let right = right.normalize();
        let true_up = right.cross(&forward);
        Ok(Self {
            position,
            look_at,
            up,
            vertical_fov,
            resolution,
            right,
            true_up,
            forward,
        })
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }
    pub fn look_at(&self) -> Vec3 {
        self.look_at
    }
    pub fn up(&self) -> Vec3 {
        self.up
    }
    pub fn forward(&self) -> Vec3 {
        self.forward
    }
    pub fn vertical_fov(&self) -> f64 {
        self.vertical_fov
    }
    pub fn resolution(&self) -> (usize, usize) {
        self.resolution
    }

    pub fn with_resolution(&self, resolution: (usize, usize)) -> Result<Camera> {
        Camera::new(
            self.position,
            self.look_at,
            self.up,
            self.vertical_fov,
            resolution,
        )
    }

    /// `(right, up, forward)` coordinates of a world point relative to the camera.
    #[inline]
    pub fn to_camera_space(&self, p: &Vec3) -> Vec3 {
        let d = p - self.position;
        Vec3::new(
            d.dot(&self.right),
            d.dot(&self.true_up),
            d.dot(&self.forward),
        )
    }

    /// Projects into an image of `width x height` pixels.
    #[inline]
    pub fn project(&self, p: &Vec3, width: usize, height: usize) -> Projection {
        let c = self.to_camera_space(p);
        let t = (0.5 * self.vertical_fov).tan();
        let aspect = width as f64 / height as f64;
        let xn = c.x / (c.z * t * aspect);
        let yn = c.y / (c.z * t);
        Projection {
            x: (xn + 1.0) * 0.5 * width as f64,
            y: (1.0 - yn) * 0.5 * height as f64,
            depth: c.z,
        }
    }

    /// World-space point at view depth `depth` behind continuous pixel `(x, y)`.
    pub fn unproject_pixel(&self, x: f64, y: f64, depth: f64, width: usize, height: usize) -> Vec3 {
        let t = (0.5 * self.vertical_fov).tan();
        let aspect = width as f64 / height as f64;
        let xn = 2.0 * x / width as f64 - 1.0;
        let yn = 1.0 - 2.0 * y / height as f64;
        self.position
            + self.forward * depth
            + self.right * (xn * depth * t * aspect)
            + self.true_up * (yn * depth * t)
    }
}

/// Ordered list of cameras. The order is the reduction order everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    cameras: Vec<Camera>,
}

impl CameraRig {
    pub fn new(cameras: Vec<Camera>) -> Result<Self> {
        if cameras.is_empty() {
            return Err(Error::invalid("camera rig needs at least one camera"));
        }
        Ok(Self { cameras })
    }
    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }
    pub fn len(&self) -> usize {
        self.cameras.len()
    }
    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }
    pub fn get(&self, v: usize) -> &Camera {
        &self.cameras[v]
    }
    pub fn with_resolution(&self, resolution: (usize, usize)) -> Result<CameraRig> {
        CameraRig::new(
            self.cameras
                .iter()
                .map(|c| c.with_resolution(resolution))
                .collect::<Result<_>>()?,
        )
    }
}

/// The extra, elevated view added to the azimuth ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopView {
    pub azimuth_deg: f64,
    /// Must stay below 90 degrees; the rig uses +Y as the up vector.
    pub elevation_deg: f64,
}

impl Default for TopView {
    fn default() -> Self {
        Self {
            azimuth_deg: 30.0,
            elevation_deg: 45.0,
        }
    }
}

/// Orbit rig around the Y axis, all cameras looking at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigSpec {
    pub radius: f64,
    pub azimuth_count: usize,
    /// Whether to append the elevated view.
    pub with_top_view: bool,
    pub top_view: TopView,
    pub vertical_fov_deg: f64,
    pub resolution: (usize, usize),
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            radius: 2.0,
            azimuth_count: 6,
            with_top_view: true,
            top_view: TopView::default(),
            vertical_fov_deg: 45.0,
            resolution: (96, 96),
        }
    }
}

fn orbit_position(radius: f64, azimuth_deg: f64, elevation_deg: f64) -> Vec3 {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    Vec3::new(
        radius * el.cos() * az.sin(),
        radius * el.sin(),
        radius * el.cos() * az.cos(),
    )
}

impl RigSpec {
    pub fn build(&self) -> Result<CameraRig> {
        if !(self.radius > 0.0) {
            return Err(Error::invalid(format!(
                "rig radius {} must be > 0",
                self.radius
            )));
        }
        if self.azimuth_count == 0 {
            return Err(Error::invalid("azimuth_count must be >= 1"));
        }
        let fov = self.vertical_fov_deg.to_radians();
        let mut cams = Vec::with_capacity(self.azimuth_count + 1);
        for i in 0..self.azimuth_count {
            let az = 360.0 * i as f64 / self.azimuth_count as f64;
            cams.push(Camera::new(
                orbit_position(self.radius, az, 0.0),
                Vec3::zeros(),
                Vec3::y(),
                fov,
                self.resolution,
            )?);
        }
        if self.with_top_view {
            let top = self.top_view;
            cams.push(Camera::new(
                orbit_position(self.radius, top.azimuth_deg, top.elevation_deg),
                Vec3::zeros(),
                Vec3::y(),
                fov,
                self.resolution,
            )?);
        }
        CameraRig::new(cams)
    }
}

/// `azimuth_count` cameras on the equator at uniform azimuths starting at 0,
/// plus the default top view when requested.
pub fn default_rig(radius: f64, azimuth_count: usize, top_view: bool) -> Result<CameraRig> {
    RigSpec {
        radius,
        azimuth_count,
        with_top_view: top_view,
        ..RigSpec::default()
    }
    .build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_plus_top() {
        let rig = default_rig(2.0, 6, true).unwrap();
        assert_eq!(rig.len(), 7);
        for (i, cam) in rig.cameras()[..6].iter().enumerate() {
            let p = cam.position();
            let az = p.x.atan2(p.z).to_degrees().rem_euclid(360.0);
            assert!(
                (az - 60.0 * i as f64).abs() < 1e-9,
                "camera {i} azimuth {az}"
            );
            assert!(p.y.abs() < 1e-12);
        }
        let top = rig.get(6).position();
        assert!(top.y > 0.0);
        assert!((top.x.atan2(top.z).to_degrees() - 30.0).abs() < 1e-9);
    }

    #[test]
    fn single_camera_at_azimuth_zero() {
        let rig = default_rig(2.0, 1, false).unwrap();
        assert_eq!(rig.len(), 1);
        let p = rig.get(0).position();
        assert!((p - Vec3::new(0.0, 0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn four_views_are_ninety_degrees_apart() {
        let rig = default_rig(2.0, 4, false).unwrap();
        for i in 0..4 {
            let a = rig.get(i).position().normalize();
            let b = rig.get((i + 1) % 4).position().normalize();
            assert!((a.dot(&b).clamp(-1.0, 1.0).acos().to_degrees() - 90.0).abs() < 1e-9);
        }
    }

    #[test]
    fn all_cameras_at_radius() {
        let rig = default_rig(3.5, 5, true).unwrap();
        for c in rig.cameras() {
            assert!((c.position().norm() - 3.5).abs() <= 1e-6 * 3.5);
        }
    }

    #[test]
    fn non_positive_radius_rejected() {
        assert!(matches!(
            default_rig(0.0, 6, true),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            default_rig(-1.0, 6, true),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn degenerate_cameras_rejected() {
        let p = Vec3::new(0.0, 0.0, 2.0);
        assert!(Camera::new(p, Vec3::zeros(), Vec3::z(), 1.0, (8, 8)).is_err());
        assert!(Camera::new(p, p, Vec3::y(), 1.0, (8, 8)).is_err());
        assert!(Camera::new(p, Vec3::zeros(), Vec3::y(), 0.0, (8, 8)).is_err());
        assert!(Camera::new(p, Vec3::zeros(), Vec3::y(), 1.0, (0, 8)).is_err());
    }

    #[test]
    fn projection_roundtrip() {
        let cam = Camera::new(
            Vec3::new(1.0, 0.5, 3.0),
            Vec3::zeros(),
            Vec3::y(),
            0.8,
            (64, 48),
        )
        .unwrap();
        let p = Vec3::new(0.2, -0.1, 0.3);
        let pr = cam.project(&p, 64, 48);
        let back = cam.unproject_pixel(pr.x, pr.y, pr.depth, 64, 48);
        assert!((back - p).norm() < 1e-12);
        let c = cam.project(&Vec3::zeros(), 64, 48);
        assert!((c.x - 32.0).abs() < 1e-12 && (c.y - 24.0).abs() < 1e-12);
    }
}
