//! Flexion images.
//!
//! For every grid point two surface normals are formed from its neighbors at
//! distance `k = (n - 1) / 2`: one from the horizontal and vertical
//! neighbor differences, one from the diagonal and antidiagonal ones. The
//! center point itself does not take part. Difference vectors are scaled
//! to unit length before the cross products, so the length of each normal
//! is the sine of the angle between its two difference vectors and the
//! flexion value `F = n1 · n2` lies in `[-1, 1]`.
//!
//! A 90° roll of the grid maps the horizontal/vertical pair onto the
//! vertical/horizontal pair (and likewise for the diagonals) with one sign
//! flip each, which leaves both cross products and hence `F` unchanged.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PointGrid;
use crate::image::{max_level, quantize_unit, GrayImage, ScalarImage};

pub const MIN_GRID: usize = 3;
pub const MAX_GRID: usize = 13;

/// Values within this distance of 1 are treated as exactly flat when mapped
/// to gray levels, so rounding in the cross products cannot drop a flat
/// surface one level below white.
pub const FLAT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlexionVariant {
    /// Dot product of the two unnormalized normals, on an `n`×`n` grid.
    Standard { n: usize },
    /// Angle between the normals mapped to `1 - angle / π`.
    Angle { n: usize },
    /// Dot product of the normalized normals.
    Normalized { n: usize },
}

impl FlexionVariant {
    pub fn grid_size(self) -> usize {
        match self {
            FlexionVariant::Standard { n }
            | FlexionVariant::Angle { n }
            | FlexionVariant::Normalized { n } => n,
        }
    }

    /// Neighbor offset `k = (n - 1) / 2`.
    pub fn offset(self) -> usize {
        (self.grid_size() - 1) / 2
    }

    pub fn validate(self) -> Result<()> {
        let n = self.grid_size();
        if n.is_multiple_of(2) || !(MIN_GRID..=MAX_GRID).contains(&n) {
            return Err(Error::Config(format!(
                "flexion grid size must be odd and within {MIN_GRID}..={MAX_GRID}, got {n}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for FlexionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            FlexionVariant::Standard { n } => write!(f, "{n}"),
            FlexionVariant::Angle { n: 3 } => f.write_str("angle"),
            FlexionVariant::Angle { n } => write!(f, "angle:{n}"),
            FlexionVariant::Normalized { n: 3 } => f.write_str("normalized"),
            FlexionVariant::Normalized { n } => write!(f, "normalized:{n}"),
        }
    }
}

impl FromStr for FlexionVariant {
    type Err = Error;

    /// Parses `n`, `angle[:n]` or `normalized[:n]`; the grid defaults to 3.
    fn from_str(s: &str) -> Result<Self> {
        let (name, n) = match s.split_once(':') {
            Some((name, n)) => (name, Some(n)),
            None => (s, None),
        };
        let parse_n = |n: &str| {
            n.parse::<usize>()
                .map_err(|_| Error::Config(format!("invalid flexion grid size '{n}'")))
        };
        let variant = match (name, n) {
            ("angle", n) => FlexionVariant::Angle {
                n: n.map(parse_n).transpose()?.unwrap_or(3),
            },
            ("normalized", n) => FlexionVariant::Normalized {
                n: n.map(parse_n).transpose()?.unwrap_or(3),
            },
            (n, None) => FlexionVariant::Standard { n: parse_n(n)? },
            _ => return Err(Error::Config(format!("unknown flexion variant '{s}'"))),
        };
        variant.validate()?;
        Ok(variant)
    }
}

/// The two local normals at a grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalPair {
    /// From horizontal and vertical neighbors.
    pub axial: Vector3<f64>,
    /// From diagonal and antidiagonal neighbors.
    pub diagonal: Vector3<f64>,
}

impl NormalPair {
    pub fn flexion(&self) -> f64 {
        self.axial.dot(&self.diagonal).clamp(-1.0, 1.0)
    }

    /// Cosine of the angle between the normals; `None` if either vanishes.
    pub fn cosine(&self) -> Option<f64> {
        let denom = self.axial.norm() * self.diagonal.norm();
        (denom > 0.0).then(|| (self.axial.dot(&self.diagonal) / denom).clamp(-1.0, 1.0))
    }

    /// `1 - arccos(cosine) / π`.
    pub fn angle_value(&self) -> Option<f64> {
        self.cosine().map(|c| 1.0 - c.acos() / PI)
    }
}

#[inline]
fn unit_difference(a: &Vector3<f64>, b: &Vector3<f64>) -> Option<Vector3<f64>> {
    let d = a - b;
    let len = d.norm();
    (len > 0.0).then(|| d / len)
}

/// Normals at row `i`, column `j` from neighbors at offset `k`; `None` if a
/// neighbor is missing or two opposite neighbors coincide.
pub fn normal_pair(grid: &PointGrid, i: usize, j: usize, k: usize) -> Option<NormalPair> {
    if k == 0 || i < k || j < k || i + k >= grid.height() || j + k >= grid.width() {
        return None;
    }
    let at = |r: usize, c: usize| grid.get(r, c);
    let h = unit_difference(at(i, j + k)?, at(i, j - k)?)?;
    let v = unit_difference(at(i + k, j)?, at(i - k, j)?)?;
    let d = unit_difference(at(i + k, j + k)?, at(i - k, j - k)?)?;
    let a = unit_difference(at(i + k, j - k)?, at(i - k, j + k)?)?;
    Some(NormalPair {
        axial: h.cross(&v),
        diagonal: d.cross(&a),
    })
}

/// Flexion value `F = n1 · n2` at row `i`, column `j`.
pub fn flexion_value(grid: &PointGrid, i: usize, j: usize, k: usize) -> Option<f64> {
    normal_pair(grid, i, j, k).map(|p| p.flexion())
}

/// Per-pixel value of a variant before gray mapping: `F` for standard,
/// `1 - angle / π` for angle, and the normalized dot product for normalized.
pub fn flexion_values(grid: &PointGrid, variant: FlexionVariant) -> Result<ScalarImage> {
    variant.validate()?;
    let n = variant.grid_size();
    if n > grid.width() || n > grid.height() {
        return Err(Error::Config(format!(
            "{n}x{n} flexion grid does not fit a {}x{} image",
            grid.width(),
            grid.height()
        )));
    }
    let k = variant.offset();
    let w = grid.width();
    let mut values = vec![None; w * grid.height()];
    values.par_chunks_mut(w).enumerate().for_each(|(i, row)| {
        for (j, out) in row.iter_mut().enumerate() {
            let Some(pair) = normal_pair(grid, i, j, k) else {
                continue;
            };
            *out = match variant {
                FlexionVariant::Standard { .. } => Some(pair.flexion()),
                FlexionVariant::Angle { .. } => pair.angle_value(),
                FlexionVariant::Normalized { .. } => pair.cosine(),
            };
        }
    });
    ScalarImage::new(w, grid.height(), values)
}

/// How standard flexion values map to gray levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlexionMapping {
    /// `floor(max * clamp(F, 0, 1))`; concave/convex sign is dropped.
    #[default]
    Clamped,
    /// `floor(max * (F + 1) / 2)` over the whole `[-1, 1]` range.
    FullRange,
}

pub fn flexion_image(grid: &PointGrid, variant: FlexionVariant, bits: u32) -> Result<GrayImage> {
    flexion_image_with(grid, variant, bits, FlexionMapping::Clamped)
}

pub fn flexion_image_with(
    grid: &PointGrid,
    variant: FlexionVariant,
    bits: u32,
    mapping: FlexionMapping,
) -> Result<GrayImage> {
    let max = max_level(bits)?;
    let values = flexion_values(grid, variant)?;
    let full_range = mapping == FlexionMapping::FullRange;
    Ok(values.map_gray(|f| {
        let t = match variant {
            FlexionVariant::Angle { .. } => f,
            _ if full_range => (f + 1.0) / 2.0,
            _ => f,
        };
        let t = if t > 1.0 - FLAT_TOLERANCE { 1.0 } else { t };
        Some(quantize_unit(t, max))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fronto_parallel(w: usize, h: usize, f: f64, z: f64) -> PointGrid {
        let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
        PointGrid::from_fn(w, h, |i, j| {
            Some(Vector3::new(
                (j as f64 - cx) / f * z,
                (i as f64 - cy) / f * z,
                z,
            ))
        })
    }

    #[test]
    fn fronto_parallel_plane_is_flat() {
        let g = fronto_parallel(9, 9, 20.0, 2.0);
        for k in 1..=3 {
            let f = flexion_value(&g, 4, 4, k).unwrap();
            assert!((f - 1.0).abs() < 1e-12, "k={k} F={f}");
        }
    }

    #[test]
    fn coincident_neighbors_have_no_value() {
        let g = PointGrid::from_fn(3, 3, |_, _| Some(Vector3::new(0.0, 0.0, 1.0)));
        assert_eq!(flexion_value(&g, 1, 1, 1), None);
    }

    #[test]
    fn boundary_band_is_invalid() {
        let g = fronto_parallel(11, 9, 20.0, 2.0);
        let img = flexion_image(&g, FlexionVariant::Standard { n: 5 }, 8).unwrap();
        for i in 0..9 {
            for j in 0..11 {
                let interior = (2..7).contains(&i) && (2..9).contains(&j);
                assert_eq!(img.is_valid(i, j), interior, "({i},{j})");
                assert_eq!(img.get(i, j), if interior { 255 } else { 0 });
            }
        }
    }

    #[test]
    fn perpendicular_normals_map_to_half() {
        let pair = NormalPair {
            axial: Vector3::new(0.0, 0.0, 1.0),
            diagonal: Vector3::new(1.0, 0.0, 0.0),
        };
        assert_eq!(pair.angle_value(), Some(0.5));
        assert_eq!(quantize_unit(0.5, 255.0), 127);
        let zero = NormalPair {
            axial: Vector3::zeros(),
            diagonal: Vector3::new(1.0, 0.0, 0.0),
        };
        assert_eq!(zero.angle_value(), None);
        assert_eq!(zero.flexion(), 0.0);
    }

    #[test]
    fn missing_neighbor_propagates() {
        let mut pts = fronto_parallel(5, 5, 20.0, 2.0).points().to_vec();
        pts[5 * 3 + 3] = Vector3::new(f64::NAN, 0.0, 0.0);
        pts[5 * 4] = Vector3::new(f64::NAN, 0.0, 0.0);
        let g = PointGrid::new(5, 5, pts).unwrap();
        assert_eq!(flexion_value(&g, 2, 2, 1), None);
        assert_eq!(flexion_value(&g, 2, 2, 2), None);
        assert!(flexion_value(&g, 3, 2, 1).is_none());
        // the center itself is not used
        assert!(flexion_value(&g, 3, 3, 1).is_some());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!(
            "3".parse::<FlexionVariant>().unwrap(),
            FlexionVariant::Standard { n: 3 }
        );
        assert_eq!(
            "angle".parse::<FlexionVariant>().unwrap(),
            FlexionVariant::Angle { n: 3 }
        );
        assert_eq!(
            "normalized:7".parse::<FlexionVariant>().unwrap(),
            FlexionVariant::Normalized { n: 7 }
        );
        for bad in ["4", "1", "15", "curvy", "angle:x"] {
            assert!(bad.parse::<FlexionVariant>().is_err(), "{bad}");
        }
        for v in [
            FlexionVariant::Standard { n: 9 },
            FlexionVariant::Angle { n: 5 },
            FlexionVariant::Normalized { n: 3 },
        ] {
            assert_eq!(v.to_string().parse::<FlexionVariant>().unwrap(), v);
        }
    }

    #[test]
    fn grid_must_fit_image() {
        let g = fronto_parallel(5, 5, 20.0, 2.0);
        assert!(flexion_values(&g, FlexionVariant::Standard { n: 7 }).is_err());
        assert!(flexion_values(&g, FlexionVariant::Standard { n: 5 }).is_ok());
    }

    #[test]
    fn full_range_mapping() {
        let g = fronto_parallel(5, 5, 20.0, 2.0);
        let img = flexion_image_with(
            &g,
            FlexionVariant::Standard { n: 3 },
            8,
            FlexionMapping::FullRange,
        )
        .unwrap();
        assert_eq!(img.get(2, 2), 255);
    }
}
