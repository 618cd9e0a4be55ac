//! Sensor models and organized back-projection.
//!
//! Pixel coordinates are continuous with pixel centers on the integer lattice:
//! the pixel in row `i`, column `j` has center `(u, v) = (j, i)`. Rows grow
//! downward, columns to the right.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Point2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distortion-free pinhole camera with skew.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
    pub width: usize,
    pub height: usize,
}

impl PinholeIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        Self::with_skew(fx, fy, cx, cy, 0.0, width, height)
    }

    pub fn with_skew(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        skew: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            skew,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.skew]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("pinhole parameters must be finite".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Config(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width < 3 || self.height < 3 {
            return Err(Error::Config(format!(
                "image must be at least 3x3 (got {}x{})",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// The upper-triangular camera matrix `K`.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.skew, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    pub fn project(&self, p: &Vector3<f64>) -> Result<Point2<f64>> {
        if !(p.z > 0.0) {
            return Err(Error::Domain(format!(
                "point ({}, {}, {}) is not in front of the camera",
                p.x, p.y, p.z
            )));
        }
        let u = (self.fx * p.x + self.skew * p.y + self.cx * p.z) / p.z;
        let v = (self.fy * p.y + self.cy * p.z) / p.z;
        Ok(Point2::new(u, v))
    }

    /// Ray through `(u, v)` normalized to `z = 1`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        let y = (v - self.cy) / self.fy;
        let x = (u - self.cx - self.skew * y) / self.fx;
        Vector3::new(x, y, 1.0)
    }

    /// Back-projects pixel `(u, v)` with orthographic depth `d = Z`.
    pub fn backproject(&self, u: f64, v: f64, d: f64) -> Result<Vector3<f64>> {
        check_positive(d)?;
        Ok(self.ray(u, v) * d)
    }
}

/// Equirectangular model: azimuth spans the image width, polar angle the height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalIntrinsics {
    pub azimuth_min: f64,
    pub azimuth_max: f64,
    pub polar_min: f64,
    pub polar_max: f64,
    pub width: usize,
    pub height: usize,
}

impl SphericalIntrinsics {
    pub fn new(
        azimuth: (f64, f64),
        polar: (f64, f64),
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let intr = Self {
            azimuth_min: azimuth.0,
            azimuth_max: azimuth.1,
            polar_min: polar.0,
            polar_max: polar.1,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Full 360° azimuth and full polar range.
    pub fn full(width: usize, height: usize) -> Result<Self> {
        Self::new((0.0, TAU), (0.0, PI), width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let (a0, a1, p0, p1) = (
            self.azimuth_min,
            self.azimuth_max,
            self.polar_min,
            self.polar_max,
        );
        if !(0.0..TAU).contains(&a0) || !(a1 > a0 && a1 <= TAU) {
            return Err(Error::Config(format!(
                "azimuth range [{a0}, {a1}] must satisfy 0 <= min < max <= 2π"
            )));
        }
        if !(0.0..=PI).contains(&p0) || !(p1 > p0 && p1 <= PI) {
            return Err(Error::Config(format!(
                "polar range [{p0}, {p1}] must satisfy 0 <= min < max <= π"
            )));
        }
        if self.width < 3 || self.height < 3 {
            return Err(Error::Config(format!(
                "image must be at least 3x3 (got {}x{})",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn is_full_circle(&self) -> bool {
        self.azimuth_min == 0.0 && self.azimuth_max == TAU
    }

    /// Horizontal angular resolution (radians per pixel).
    pub fn delta_azimuth(&self) -> f64 {
        (self.azimuth_max - self.azimuth_min) / self.width as f64
    }

    /// Vertical angular resolution (radians per pixel).
    pub fn delta_polar(&self) -> f64 {
        (self.polar_max - self.polar_min) / self.height as f64
    }

    /// Returns `(r, azimuth, polar)` of a point. Azimuth is wrapped into
    /// `[0, 2π)` and defined as 0 on the polar axis.
    pub fn angles(p: &Vector3<f64>) -> Result<(f64, f64, f64)> {
        let r = p.norm();
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!(
                "point ({}, {}, {}) has no direction",
                p.x, p.y, p.z
            )));
        }
        let rho = p.x.hypot(p.y);
        let azimuth = if rho == 0.0 {
            0.0
        } else {
            let a = p.y.atan2(p.x);
            if a < 0.0 {
                // a + TAU can round up to TAU for tiny negative angles
                let w = a + TAU;
                if w >= TAU {
                    0.0
                } else {
                    w
                }
            } else {
                a
            }
        };
        // atan2 form of arccos(Z / r); well conditioned near the poles
        let polar = rho.atan2(p.z);
        Ok((r, azimuth, polar))
    }

    pub fn project(&self, p: &Vector3<f64>) -> Result<Point2<f64>> {
        let (_, azimuth, polar) = Self::angles(p)?;
        let mut u = (azimuth - self.azimuth_min) / self.delta_azimuth();
        // on a closed 360° image the last half pixel belongs to column 0
        if self.is_full_circle() && u >= self.width as f64 - 0.5 {
            u -= self.width as f64;
        }
        Ok(Point2::new(
            u,
            (polar - self.polar_min) / self.delta_polar(),
        ))
    }

    /// Unit ray through `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        let azimuth = self.azimuth_min + u * self.delta_azimuth();
        let polar = self.polar_min + v * self.delta_polar();
        let (sp, cp) = polar.sin_cos();
        let (sa, ca) = azimuth.sin_cos();
        Vector3::new(sp * ca, sp * sa, cp)
    }

    /// Back-projects pixel `(u, v)` with Euclidean range `r`.
    pub fn backproject(&self, u: f64, v: f64, r: f64) -> Result<Vector3<f64>> {
        check_positive(r)?;
        let inside = |x: f64, n: usize| x >= -0.5 && x <= n as f64 - 0.5;
        if !inside(u, self.width) || !inside(v, self.height) {
            return Err(Error::Domain(format!(
                "pixel ({u}, {v}) lies outside the {}x{} image",
                self.width, self.height
            )));
        }
        let polar = self.polar_min + v * self.delta_polar();
        if !(0.0..=PI).contains(&polar) {
            return Err(Error::Domain(format!("pixel row {v} lies beyond a pole")));
        }
        Ok(self.ray(u, v) * r)
    }
}

fn check_positive(d: f64) -> Result<()> {
    if d > 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidDepth(d))
    }
}

/// What the stored per-pixel value measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthKind {
    /// Orthographic depth along the optical axis (`Z`).
    Depth,
    /// Euclidean distance from the sensor center.
    Range,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensorModel {
    Pinhole(PinholeIntrinsics),
    Spherical(SphericalIntrinsics),
}

impl SensorModel {
    pub fn width(&self) -> usize {
        match self {
            SensorModel::Pinhole(p) => p.width,
            SensorModel::Spherical(s) => s.width,
        }
    }

    pub fn height(&self) -> usize {
        match self {
            SensorModel::Pinhole(p) => p.height,
            SensorModel::Spherical(s) => s.height,
        }
    }

    /// Depth kind this model's images carry.
    pub fn depth_kind(&self) -> DepthKind {
        match self {
            SensorModel::Pinhole(_) => DepthKind::Depth,
            SensorModel::Spherical(_) => DepthKind::Range,
        }
    }

    /// Ray through `(u, v)` scaled so that `point = value * ray` for the
    /// model's depth kind (z = 1 for pinhole, unit length for spherical).
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        match self {
            SensorModel::Pinhole(p) => p.ray(u, v),
            SensorModel::Spherical(s) => s.ray(u, v),
        }
    }

    pub fn project(&self, p: &Vector3<f64>) -> Result<Point2<f64>> {
        match self {
            SensorModel::Pinhole(m) => m.project(p),
            SensorModel::Spherical(m) => m.project(p),
        }
    }

    pub fn backproject(&self, u: f64, v: f64, value: f64) -> Result<Vector3<f64>> {
        match self {
            SensorModel::Pinhole(m) => m.backproject(u, v, value),
            SensorModel::Spherical(m) => m.backproject(u, v, value),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SensorModel::Pinhole(m) => m.validate(),
            SensorModel::Spherical(m) => m.validate(),
        }
    }
}

impl From<PinholeIntrinsics> for SensorModel {
    fn from(p: PinholeIntrinsics) -> Self {
        SensorModel::Pinhole(p)
    }
}

impl From<SphericalIntrinsics> for SensorModel {
    fn from(s: SphericalIntrinsics) -> Self {
        SensorModel::Spherical(s)
    }
}

/// `true` for values that carry a measurement.
#[inline]
pub fn is_valid_depth(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

/// Row-major grid of metric depth or range values.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
    kind: DepthKind,
    /// Codes per meter when the values were decoded from integer depth codes.
    depth_scale: Option<f64>,
}

impl DepthImage {
    /// Builds an image from row-major values; zero or non-finite values are
    /// marked invalid.
    pub fn new(width: usize, height: usize, values: Vec<f64>, kind: DepthKind) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Config(format!(
                "expected {} values for a {width}x{height} image, got {}",
                width * height,
                values.len()
            )));
        }
        let valid = values.iter().map(|&v| is_valid_depth(v)).collect();
        Ok(Self {
            width,
            height,
            values,
            valid,
            kind,
            depth_scale: None,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        kind: DepthKind,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for i in 0..height {
            for j in 0..width {
                values.push(f(i, j));
            }
        }
        Self::new(width, height, values, kind).expect("length matches by construction")
    }

    /// Builds an image from integer codes, `meters = code / depth_scale`.
    /// Code 0 is invalid.
    pub fn from_codes(
        width: usize,
        height: usize,
        codes: &[u16],
        depth_scale: f64,
        kind: DepthKind,
    ) -> Result<Self> {
        if !(depth_scale > 0.0 && depth_scale.is_finite()) {
            return Err(Error::Config(format!(
                "depth scale must be positive, got {depth_scale}"
            )));
        }
        let values = codes
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { c as f64 / depth_scale })
            .collect();
        let mut img = Self::new(width, height, values, kind)?;
        img.depth_scale = Some(depth_scale);
        Ok(img)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn kind(&self) -> DepthKind {
        self.kind
    }

    pub fn depth_scale(&self) -> Option<f64> {
        self.depth_scale
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Value at row `i`, column `j` if valid.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let k = i * self.width + j;
        self.valid[k].then(|| self.values[k])
    }

    /// Integer codes `round(value * depth_scale)`, 0 for invalid pixels.
    pub fn to_codes(&self, depth_scale: f64) -> Result<Vec<u16>> {
        self.values
            .iter()
            .zip(&self.valid)
            .map(|(&v, &ok)| {
                if !ok {
                    return Ok(0);
                }
                let c = (v * depth_scale).round();
                if (1.0..=u16::MAX as f64).contains(&c) {
                    Ok(c as u16)
                } else {
                    Err(Error::Format(format!(
                        "depth {v} m does not fit a 16-bit code at scale {depth_scale}"
                    )))
                }
            })
            .collect()
    }

    /// Reinterprets the stored values as another kind, e.g. a range image
    /// that was decoded from a depth-style PNG.
    pub fn into_kind(mut self, kind: DepthKind) -> Self {
        self.kind = kind;
        self
    }

    pub(crate) fn with_depth_scale(mut self, depth_scale: Option<f64>) -> Self {
        self.depth_scale = depth_scale;
        self
    }

    /// Image rotated by 90° counter-clockwise.
    pub fn rot90(&self) -> Self {
        let values = rot90(&self.values, self.width, self.height);
        let valid = rot90(&self.valid, self.width, self.height);
        Self {
            width: self.height,
            height: self.width,
            values,
            valid,
            kind: self.kind,
            depth_scale: self.depth_scale,
        }
    }
}

/// Organized 3D points in the sensor frame; grid adjacency is pixel adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGrid {
    width: usize,
    height: usize,
    points: Vec<Vector3<f64>>,
    valid: Vec<bool>,
}

impl PointGrid {
    /// Builds a grid from row-major points; non-finite points are invalid.
    pub fn new(width: usize, height: usize, points: Vec<Vector3<f64>>) -> Result<Self> {
        if points.len() != width * height {
            return Err(Error::Config(format!(
                "expected {} points for a {width}x{height} grid, got {}",
                width * height,
                points.len()
            )));
        }
        let valid = points
            .iter()
            .map(|p| p.iter().all(|c| c.is_finite()))
            .collect();
        Ok(Self {
            width,
            height,
            points,
            valid,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Option<Vector3<f64>>,
    ) -> Self {
        let mut points = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for i in 0..height {
            for j in 0..width {
                match f(i, j) {
                    Some(p) if p.iter().all(|c| c.is_finite()) => {
                        points.push(p);
                        valid.push(true);
                    }
                    _ => {
                        points.push(Vector3::zeros());
                        valid.push(false);
                    }
                }
            }
        }
        Self {
            width,
            height,
            points,
            valid,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<&Vector3<f64>> {
        let k = i * self.width + j;
        if self.valid[k] {
            Some(&self.points[k])
        } else {
            None
        }
    }

    /// Signed-offset lookup; `None` outside the grid or on invalid cells.
    #[inline]
    pub fn get_offset(&self, i: usize, j: usize, di: isize, dj: isize) -> Option<&Vector3<f64>> {
        let ii = i.checked_add_signed(di)?;
        let jj = j.checked_add_signed(dj)?;
        if ii >= self.height || jj >= self.width {
            return None;
        }
        self.get(ii, jj)
    }

    /// Grid rotated by 90° counter-clockwise (index permutation only; the
    /// points themselves are unchanged).
    pub fn rot90(&self) -> Self {
        Self {
            width: self.height,
            height: self.width,
            points: rot90(&self.points, self.width, self.height),
            valid: rot90(&self.valid, self.width, self.height),
        }
    }
}

/// Counter-clockwise rotation of a row-major `width`×`height` buffer:
/// `out[i][j] = in[j][width - 1 - i]`.
pub fn rot90<T: Clone>(data: &[T], width: usize, height: usize) -> Vec<T> {
    let (ow, oh) = (height, width);
    let mut out = Vec::with_capacity(data.len());
    for i in 0..oh {
        for j in 0..ow {
            out.push(data[j * width + (width - 1 - i)].clone());
        }
    }
    out
}

/// Back-projects every valid pixel into an organized point grid.
pub fn depth_to_point_grid(img: &DepthImage, model: &SensorModel) -> Result<PointGrid> {
    model.validate()?;
    if img.width() != model.width() || img.height() != model.height() {
        return Err(Error::Config(format!(
            "depth image is {}x{} but the sensor model expects {}x{}",
            img.width(),
            img.height(),
            model.width(),
            model.height()
        )));
    }
    if img.kind() != model.depth_kind() {
        return Err(Error::Config(format!(
            "{:?} image cannot be back-projected with a model expecting {:?}",
            img.kind(),
            model.depth_kind()
        )));
    }
    let w = img.width();
    let mut points = vec![Vector3::zeros(); w * img.height()];
    points.par_chunks_mut(w).enumerate().for_each(|(i, row)| {
        for (j, p) in row.iter_mut().enumerate() {
            if let Some(d) = img.get(i, j) {
                *p = model.ray(j as f64, i as f64) * d;
            }
        }
    });
    Ok(PointGrid {
        width: w,
        height: img.height(),
        points,
        valid: img.valid_mask().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> PinholeIntrinsics {
        PinholeIntrinsics::new(100.0, 100.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn principal_ray_projects_to_origin() {
        let k = PinholeIntrinsics::new(1.0, 1.0, 0.0, 0.0, 3, 3).unwrap();
        let uv = k.project(&Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((uv.x, uv.y), (0.0, 0.0));
    }

    #[test]
    fn pinhole_hand_computed_pair() {
        let uv = cam().project(&Vector3::new(1.0, 2.0, 2.0)).unwrap();
        assert_eq!((uv.x, uv.y), (370.0, 340.0));
        let p = cam().backproject(370.0, 340.0, 2.0).unwrap();
        assert!((p - Vector3::new(1.0, 2.0, 2.0)).norm() < 1e-12);
        let p = cam().backproject(320.0, 240.0, 1.0).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn skewed_projection_matches_matrix_multiply() {
        let k = PinholeIntrinsics::with_skew(520.0, 515.0, 319.5, 241.0, 3.25, 640, 480).unwrap();
        for p in [
            Vector3::new(0.3, -0.2, 1.7),
            Vector3::new(-1.1, 0.9, 4.0),
            Vector3::new(2.0, 2.0, 0.5),
        ] {
            let h = k.matrix() * p;
            let uv = k.project(&p).unwrap();
            assert!((uv.x - h.x / h.z).abs() < 1e-9);
            assert!((uv.y - h.y / h.z).abs() < 1e-9);
        }
    }

    #[test]
    fn pinhole_domain_errors() {
        assert!(matches!(
            cam().project(&Vector3::new(0.0, 0.0, 0.0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            cam().project(&Vector3::new(0.0, 0.0, -1.0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            cam().backproject(1.0, 1.0, 0.0),
            Err(Error::InvalidDepth(_))
        ));
        assert!(PinholeIntrinsics::new(0.0, 1.0, 0.0, 0.0, 3, 3).is_err());
        assert!(PinholeIntrinsics::new(1.0, 1.0, 0.0, 0.0, 2, 3).is_err());
    }

    #[test]
    fn pinhole_backprojection_is_odd_about_principal_point() {
        let k = cam();
        for (du, dv) in [(13.0, 7.5), (100.0, -42.0), (0.25, 0.0)] {
            let a = k.backproject(k.cx + du, k.cy + dv, 3.0).unwrap();
            let b = k.backproject(k.cx - du, k.cy - dv, 3.0).unwrap();
            assert_eq!(a.x, -b.x);
            assert_eq!(a.y, -b.y);
        }
    }

    #[test]
    fn spherical_axis_points() {
        let (_, az, pol) = SphericalIntrinsics::angles(&Vector3::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(az, 0.0);
        assert!((pol - PI / 2.0).abs() < 1e-15);
        let (_, az, pol) = SphericalIntrinsics::angles(&Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((az, pol), (0.0, 0.0));
        let (_, az, _) = SphericalIntrinsics::angles(&Vector3::new(-1.0, -1e-300, 0.0)).unwrap();
        assert!((0.0..TAU).contains(&az));
        assert!(SphericalIntrinsics::angles(&Vector3::zeros()).is_err());
    }

    #[test]
    fn spherical_backprojection_examples() {
        let s = SphericalIntrinsics::full(360, 180).unwrap();
        // θ = π/2 is row 90, φ = 0 is column 0
        let p = s.backproject(0.0, 90.0, 1.0).unwrap();
        assert!((p - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        let p = s.backproject(123.0, 0.0, 2.0).unwrap();
        assert!((p - Vector3::new(0.0, 0.0, 2.0)).norm() < 1e-15);
        assert!(matches!(
            s.backproject(0.0, 0.0, -1.0),
            Err(Error::InvalidDepth(_))
        ));
        assert!(s.backproject(400.0, 0.0, 1.0).is_err());
        // half a pixel above the north pole is not a direction
        assert!(s.backproject(10.0, -0.25, 1.0).is_err());
    }

    #[test]
    fn full_circle_projection_stays_in_the_image() {
        let s = SphericalIntrinsics::full(360, 180).unwrap();
        let p = s.backproject(-0.25, 90.0, 1.0).unwrap();
        let q = s.project(&p).unwrap();
        assert!((q.x + 0.25).abs() < 1e-9, "{}", q.x);
        let q = s.project(&Vector3::new(1.0, -1e-3, 0.0)).unwrap();
        assert!(q.x < 0.0 && q.x > -0.5);
        let partial = SphericalIntrinsics::new((0.0, PI), (0.0, PI), 180, 180).unwrap();
        assert!(!partial.is_full_circle());
    }

    #[test]
    fn spherical_config_validation() {
        assert!(SphericalIntrinsics::new((1.0, 0.5), (0.0, PI), 10, 10).is_err());
        assert!(SphericalIntrinsics::new((0.0, 1.0), (0.0, 4.0), 10, 10).is_err());
        assert!(SphericalIntrinsics::new((-0.1, 1.0), (0.0, 1.0), 10, 10).is_err());
        let s = SphericalIntrinsics::new((0.5, 1.5), (1.0, 2.0), 100, 50).unwrap();
        assert!((s.delta_azimuth() - 0.01).abs() < 1e-15);
        assert!((s.delta_polar() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn constant_depth_gives_fronto_parallel_plane() {
        let k = PinholeIntrinsics::new(50.0, 50.0, 15.5, 11.5, 32, 24).unwrap();
        let img = DepthImage::from_fn(32, 24, DepthKind::Depth, |_, _| 1.0);
        let grid = depth_to_point_grid(&img, &k.into()).unwrap();
        assert_eq!(grid.valid_count(), 32 * 24);
        assert!(grid.points().iter().all(|p| p.z == 1.0));
        let p = grid.get(11, 15).unwrap();
        assert!((p.x + 0.5 / 50.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_pixels_propagate() {
        let k = PinholeIntrinsics::new(50.0, 50.0, 15.5, 11.5, 32, 24).unwrap();
        let img = DepthImage::from_fn(32, 24, DepthKind::Depth, |i, j| {
            if (i, j) == (3, 4) {
                0.0
            } else if (i, j) == (5, 6) {
                f64::NAN
            } else {
                2.0
            }
        });
        assert_eq!(img.valid_count(), 32 * 24 - 2);
        let grid = depth_to_point_grid(&img, &k.into()).unwrap();
        assert!(grid.get(3, 4).is_none());
        assert!(grid.get(5, 6).is_none());
        assert_eq!(grid.valid_count(), img.valid_count());
    }

    #[test]
    fn mismatched_configurations_are_rejected() {
        let k = PinholeIntrinsics::new(50.0, 50.0, 15.5, 11.5, 32, 24).unwrap();
        let img = DepthImage::from_fn(31, 24, DepthKind::Depth, |_, _| 1.0);
        assert!(matches!(
            depth_to_point_grid(&img, &k.into()),
            Err(Error::Config(_))
        ));
        let img = DepthImage::from_fn(32, 24, DepthKind::Range, |_, _| 1.0);
        assert!(matches!(
            depth_to_point_grid(&img, &k.into()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rot90_is_counter_clockwise() {
        // 2 rows x 3 cols
        let a = [1, 2, 3, 4, 5, 6];
        assert_eq!(rot90(&a, 3, 2), vec![3, 6, 2, 5, 1, 4]);
        let four = rot90(&rot90(&rot90(&rot90(&a, 3, 2), 2, 3), 3, 2), 2, 3);
        assert_eq!(four, a.to_vec());
    }
}
