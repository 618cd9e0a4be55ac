//! Bearing-Angle (BA) images.
//!
//! The bearing angle at a grid point `P` is the angle between the viewing
//! ray `P` (from the sensor center) and the segment `P - P_prev` to its
//! predecessor along one grid direction.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PointGrid;
use crate::image::{max_level, GrayImage, ScalarImage};

/// Grid direction along which the predecessor neighbor is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaDirection {
    /// Predecessor is the left neighbor `(i, j - 1)`.
    Horizontal,
    /// Predecessor is the neighbor above `(i - 1, j)`.
    Vertical,
    /// Top-left to bottom-right: predecessor `(i - 1, j - 1)`.
    Diagonal,
    /// Top-right to bottom-left: predecessor `(i - 1, j + 1)`.
    Antidiagonal,
}

impl BaDirection {
    pub const ALL: [BaDirection; 4] = [
        BaDirection::Horizontal,
        BaDirection::Vertical,
        BaDirection::Diagonal,
        BaDirection::Antidiagonal,
    ];

    /// `(row, column)` offset of the predecessor.
    pub fn offset(self) -> (isize, isize) {
        match self {
            BaDirection::Horizontal => (0, -1),
            BaDirection::Vertical => (-1, 0),
            BaDirection::Diagonal => (-1, -1),
            BaDirection::Antidiagonal => (-1, 1),
        }
    }
}

impl fmt::Display for BaDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaDirection::Horizontal => "horizontal",
            BaDirection::Vertical => "vertical",
            BaDirection::Diagonal => "diagonal",
            BaDirection::Antidiagonal => "antidiagonal",
        })
    }
}

impl FromStr for BaDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "horizontal" | "h" => Ok(BaDirection::Horizontal),
            "vertical" | "v" => Ok(BaDirection::Vertical),
            "diagonal" | "d" => Ok(BaDirection::Diagonal),
            "antidiagonal" | "a" => Ok(BaDirection::Antidiagonal),
            _ => Err(Error::Config(format!("unknown BA direction '{s}'"))),
        }
    }
}

/// Angle between `p` and `p - prev`, or `None` for coincident points.
#[inline]
pub fn angle_between_ray_and_segment(p: &Vector3<f64>, prev: &Vector3<f64>) -> Option<f64> {
    let d = p - prev;
    let denom = p.norm() * d.norm();
    if !(denom > 0.0) {
        return None;
    }
    Some((p.dot(&d) / denom).clamp(-1.0, 1.0).acos())
}

/// Bearing angle at row `i`, column `j`; `None` when the point or its
/// predecessor is missing or the two coincide.
pub fn bearing_angle(grid: &PointGrid, i: usize, j: usize, dir: BaDirection) -> Option<f64> {
    let p = grid.get(i, j)?;
    let (di, dj) = dir.offset();
    let prev = grid.get_offset(i, j, di, dj)?;
    angle_between_ray_and_segment(p, prev)
}

/// Bearing angles of every pixel.
pub fn bearing_angles(grid: &PointGrid, dir: BaDirection) -> ScalarImage {
    let w = grid.width();
    let mut values = vec![None; w * grid.height()];
    if w > 0 {
        values.par_chunks_mut(w).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = bearing_angle(grid, i, j, dir);
            }
        });
    }
    ScalarImage::new(w, grid.height(), values).expect("sizes match by construction")
}

/// Gray level `floor((2^bits - 1) * beta / π)`.
#[inline]
pub fn bearing_gray(beta: f64, max_level: f64) -> u8 {
    (max_level * (beta / PI).clamp(0.0, 1.0)).floor() as u8
}

/// BA image with `bits` of color depth; pixels without a predecessor are 0
/// and flagged invalid.
pub fn ba_image(grid: &PointGrid, dir: BaDirection, bits: u32) -> Result<GrayImage> {
    let max = max_level(bits)?;
    Ok(bearing_angles(grid, dir).map_gray(|beta| Some(bearing_gray(beta, max))))
}
