//! Analytic depth rendering of planes, spheres and boxes under either
//! sensor model. Rays go through pixel centers; pinhole images store
//! orthographic depth and spherical images store range.

use nalgebra::{Isometry3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{is_valid_depth, DepthImage, SensorModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    /// Points `x` with `normal · x = offset`; `normal` has unit length.
    Plane {
        normal: Vector3<f64>,
        offset: f64,
    },
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    /// Axis-aligned box between two corners.
    Cuboid {
        min: Vector3<f64>,
        max: Vector3<f64>,
    },
}

impl Surface {
    /// Plane `normal · x = offset`; the normal is rescaled to unit length.
    pub fn plane(normal: Vector3<f64>, offset: f64) -> Result<Self> {
        let len = normal.norm();
        if !(len > 0.0) || !len.is_finite() || !offset.is_finite() {
            return Err(Error::Config(format!(
                "degenerate plane: normal {normal:?}, offset {offset}"
            )));
        }
        Ok(Surface::Plane {
            normal: normal / len,
            offset: offset / len,
        })
    }

    pub fn sphere(center: Vector3<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Config(format!(
                "sphere radius must be positive, got {radius}"
            )));
        }
        Ok(Surface::Sphere { center, radius })
    }

    pub fn cuboid(a: Vector3<f64>, b: Vector3<f64>) -> Result<Self> {
        let min = a.inf(&b);
        let max = a.sup(&b);
        if (max - min).iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Config(
                "box must have positive extent on every axis".into(),
            ));
        }
        Ok(Surface::Cuboid { min, max })
    }

    /// Rejects viewpoints from which the surface cannot be rendered: on a
    /// plane, or inside a sphere or box.
    fn check_viewpoint(&self, origin: &Vector3<f64>) -> Result<()> {
        match self {
            Surface::Plane { normal, offset } => {
                if (normal.dot(origin) - offset).abs() <= 1e-12 * offset.abs().max(1.0) {
                    return Err(Error::Config(
                        "plane passes through the sensor center".into(),
                    ));
                }
            }
            Surface::Sphere { center, radius } => {
                if (center - origin).norm() <= *radius {
                    return Err(Error::Config("sensor center lies inside the sphere".into()));
                }
            }
            Surface::Cuboid { min, max } => {
                let inside = (0..3).all(|a| origin[a] >= min[a] && origin[a] <= max[a]);
                if inside {
                    return Err(Error::Config("sensor center lies inside the box".into()));
                }
            }
        }
        Ok(())
    }

    /// Smallest positive `t` with `origin + t * dir` on the surface.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let t = match self {
            Surface::Plane { normal, offset } => {
                let denom = normal.dot(dir);
                (offset - normal.dot(origin)) / denom
            }
            Surface::Sphere { center, radius } => {
                let oc = center - origin;
                let a = dir.norm_squared();
                let b = dir.dot(&oc);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 || b <= 0.0 {
                    return None;
                }
                // near root of a t² - 2 b t + c = 0 without cancellation
                c / (b + disc.sqrt())
            }
            Surface::Cuboid { min, max } => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                for a in 0..3 {
                    if dir[a] == 0.0 {
                        if origin[a] < min[a] || origin[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let t0 = (min[a] - origin[a]) / dir[a];
                    let t1 = (max[a] - origin[a]) / dir[a];
                    t_near = t_near.max(t0.min(t1));
                    t_far = t_far.min(t0.max(t1));
                }
                if t_near > t_far {
                    return None;
                }
                t_near
            }
        };
        (t.is_finite() && t > 0.0).then_some(t)
    }
}

/// A set of surfaces rendered by nearest hit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub surfaces: Vec<Surface>,
}

impl Scene {
    pub fn new(surfaces: Vec<Surface>) -> Self {
        Self { surfaces }
    }

    /// Renders the scene from the sensor origin.
    pub fn render(&self, model: &SensorModel) -> Result<DepthImage> {
        self.render_from(model, &Isometry3::identity())
    }

    /// Renders the scene seen by a sensor placed at `sensor_to_world`.
    pub fn render_from(
        &self,
        model: &SensorModel,
        sensor_to_world: &Isometry3<f64>,
    ) -> Result<DepthImage> {
        model.validate()?;
        let origin = sensor_to_world.translation.vector;
        for s in &self.surfaces {
            s.check_viewpoint(&origin)?;
        }
        let (w, h) = (model.width(), model.height());
        let rotation = sensor_to_world.rotation;
        let mut values = vec![0.0; w * h];
        values.par_chunks_mut(w).enumerate().for_each(|(i, row)| {
            for (j, out) in row.iter_mut().enumerate() {
                let dir = rotation * model.ray(j as f64, i as f64);
                *out = self
                    .surfaces
                    .iter()
                    .filter_map(|s| s.intersect(&origin, &dir))
                    .fold(f64::INFINITY, f64::min);
            }
        });
        for v in &mut values {
            if !v.is_finite() {
                *v = 0.0;
            }
        }
        DepthImage::new(w, h, values, model.depth_kind())
    }
}

/// Closed room with a sphere and a box, in a camera-style world frame
/// (X right, Y down, Z forward). The floor is 1.2 m below the origin.
pub fn room_scene() -> Scene {
    let plane = |n: [f64; 3], d: f64| Surface::plane(Vector3::from(n), d).expect("valid plane");
    Scene::new(vec![
        plane([0.0, 1.0, 0.0], 1.2),
        plane([0.0, 1.0, 0.0], -1.8),
        plane([0.0, 0.0, 1.0], 7.0),
        plane([0.0, 0.0, 1.0], -3.0),
        plane([1.0, 0.0, 0.0], -3.0),
        plane([1.0, 0.0, 0.0], 3.0),
        Surface::sphere(Vector3::new(0.6, 0.3, 3.5), 0.6).expect("valid sphere"),
        Surface::cuboid(Vector3::new(-1.6, 0.2, 3.2), Vector3::new(-0.6, 1.2, 4.2))
            .expect("valid box"),
    ])
}

/// Camera pose for frame `k` of `n` on a short arc through [`room_scene`].
pub fn walkthrough_pose(k: usize, n: usize) -> Isometry3<f64> {
    let s = if n > 1 {
        k as f64 / (n - 1) as f64
    } else {
        0.0
    };
    let translation = Vector3::new(
        -0.4 + 0.8 * s,
        -0.1 * (std::f64::consts::PI * s).sin(),
        0.5 * s,
    );
    let rotation = nalgebra::UnitQuaternion::from_euler_angles(0.05 * s, 0.3 * (s - 0.5), 0.0);
    Isometry3::from_parts(translation.into(), rotation)
}

/// Maps the spherical sensor frame (Z up, X forward) into the camera-style
/// world frame of [`room_scene`].
pub fn spherical_mount() -> Isometry3<f64> {
    let m = nalgebra::Matrix3::new(
        0.0, -1.0, 0.0, //
        0.0, 0.0, -1.0, //
        1.0, 0.0, 0.0,
    );
    let r = nalgebra::Rotation3::from_matrix_unchecked(m);
    Isometry3::from_parts(nalgebra::Translation3::identity(), r.into())
}

pub fn render_plane(model: &SensorModel, normal: Vector3<f64>, offset: f64) -> Result<DepthImage> {
    Scene::new(vec![Surface::plane(normal, offset)?]).render(model)
}

pub fn render_sphere(model: &SensorModel, center: Vector3<f64>, radius: f64) -> Result<DepthImage> {
    Scene::new(vec![Surface::sphere(center, radius)?]).render(model)
}

/// Adds zero-mean Gaussian noise to every valid pixel, drawing samples in
/// row-major order from a seeded generator. Pixels pushed to a non-positive
/// value become invalid.
pub fn add_gaussian_noise(img: &DepthImage, sigma: f64, seed: u64) -> Result<DepthImage> {
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::Config(format!("invalid noise level {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = img
        .values()
        .iter()
        .zip(img.valid_mask())
        .map(|(&v, &ok)| {
            if !ok {
                return 0.0;
            }
            let noisy = v + normal.sample(&mut rng);
            if is_valid_depth(noisy) {
                noisy
            } else {
                0.0
            }
        })
        .collect();
    DepthImage::new(img.width(), img.height(), values, img.kind())
}
