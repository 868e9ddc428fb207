use nalgebra::{Point3, Vector3};

use super::Viewpoint;

/// Pinhole camera looking at the origin from a [`Viewpoint`].
///
/// The vertical and horizontal field of view are both `2 * atan(1 / 2.2)`, so
/// a unit-radius disc through the origin exactly spans the frame at the
/// default distance. World +z is the up direction unless the camera looks
/// straight along it, in which case +y is used.
#[derive(Debug, Clone, Copy)]
pub struct Camera {
    pub position: Point3<f64>,
    pub right: Vector3<f64>,
    pub up: Vector3<f64>,
    pub forward: Vector3<f64>,
    pub focal_px: f64,
    pub width: usize,
    pub height: usize,
}

/// `tan` of the half field of view.
pub const HALF_FOV_TAN: f64 = 1.0 / 2.2;

const NEAR: f64 = 1e-6;

impl Camera {
    pub fn look_at_origin(vp: &Viewpoint, width: usize, height: usize) -> Self {
        let position = vp.position();
        let forward = (-position.coords).normalize();
        let mut world_up = Vector3::z();
        if forward.cross(&world_up).norm() < 1e-9 {
            world_up = Vector3::y();
        }
        let right = forward.cross(&world_up).normalize();
        let up = right.cross(&forward);
        let focal_px = (width.min(height) as f64 / 2.0) / HALF_FOV_TAN;
        Self { position, right, up, forward, focal_px, width, height }
    }

    /// Continuous image coordinates `(u, v)` (u to the right, v down, pixel
    /// `(x, y)` covers `[x, x+1) x [y, y+1)`) and view depth. `None` for points
    /// at or behind the camera plane.
    pub fn project(&self, p: &Point3<f64>) -> Option<(f64, f64, f64)> {
        let depth = (p - self.position).dot(&self.forward);
        if depth <= NEAR {
            return None;
        }
        // The camera lies on the forward axis through the origin, so lateral
        // offsets need no subtraction of its position.
        let u = self.width as f64 / 2.0 + self.focal_px * p.coords.dot(&self.right) / depth;
        let v = self.height as f64 / 2.0 - self.focal_px * p.coords.dot(&self.up) / depth;
        Some((u, v, depth))
    }

    /// Integer pixel containing the projection of `p`, if inside the raster.
    pub fn pixel_of(&self, p: &Point3<f64>) -> Option<(u32, u32, f64)> {
        let (u, v, depth) = self.project(p)?;
        let (x, y) = (u.floor(), v.floor());
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return None;
        }
        Some((x as u32, y as u32, depth))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_projects_to_center() {
        let vp = Viewpoint::new(1, 35.0, -35.0, 2.2, true);
        let cam = Camera::look_at_origin(&vp, 800, 800);
        let (x, y, d) = cam.pixel_of(&Point3::origin()).unwrap();
        assert_eq!((x, y), (400, 400));
        assert!((d - 2.2).abs() < 1e-12);
    }

    #[test]
    fn unit_offset_reaches_frame_edge() {
        // A point one unit to the camera's right at the origin's depth lands
        // on the right border of the frame.
        let vp = Viewpoint::new(1, 0.0, 0.0, 2.2, true);
        let cam = Camera::look_at_origin(&vp, 800, 800);
        let p = Point3::from(cam.right * 0.999);
        let (u, _, _) = cam.project(&p).unwrap();
        assert!((u - (400.0 + 0.999 * 400.0)).abs() < 1e-9);
        // +z is up on screen.
        let (_, v, _) = cam.project(&Point3::new(0.0, 0.0, 0.5)).unwrap();
        assert!(v < 400.0);
    }

    #[test]
    fn straight_down_view_has_valid_basis() {
        let vp = Viewpoint::new(1, 90.0, 0.0, 2.2, true);
        let cam = Camera::look_at_origin(&vp, 64, 64);
        assert!((cam.right.norm() - 1.0).abs() < 1e-12);
        assert!(cam.right.dot(&cam.forward).abs() < 1e-12);
        assert!(cam.pixel_of(&Point3::origin()).is_some());
    }

    #[test]
    fn behind_camera_is_culled() {
        let vp = Viewpoint::new(1, 0.0, 0.0, 2.2, true);
        let cam = Camera::look_at_origin(&vp, 64, 64);
        assert!(cam.project(&Point3::new(3.0, 0.0, 0.0)).is_none());
    }
}
