//! Per-frame conversion: filter, back-project, convert, map to gray.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::bearing::{ba_image, BaDirection};
use crate::error::{Error, Result};
use crate::filtering::median_filter;
use crate::flexion::{flexion_image_with, FlexionMapping, FlexionVariant};
use crate::geometry::{depth_to_point_grid, DepthImage, SensorModel};
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Bearing(BaDirection),
    Flexion(FlexionVariant),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Bearing(d) => write!(f, "ba:{d}"),
            Method::Flexion(v) => write!(f, "flexion:{v}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// `ba:<direction>` or `flexion:<n|angle[:n]|normalized[:n]>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("ba", dir)) => Ok(Method::Bearing(dir.parse()?)),
            Some(("flexion", variant)) => Ok(Method::Flexion(variant.parse()?)),
            _ => Err(Error::Config(format!(
                "unknown method '{s}' (expected ba:<direction> or flexion:<variant>)"
            ))),
        }
    }
}

/// Median window as `width x height`; `1x1` disables filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub width: usize,
    pub height: usize,
}

impl Default for Window {
    fn default() -> Self {
        Self {
            width: 3,
            height: 3,
        }
    }
}

impl FromStr for Window {
    type Err = Error;

    /// `n` for a square window or `WxH`.
    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("invalid filter window '{s}'")))
        };
        let (width, height) = match s.split_once(['x', 'X']) {
            Some((w, h)) => (num(w)?, num(h)?),
            None => {
                let n = num(s)?;
                (n, n)
            }
        };
        if width % 2 == 0 || height % 2 == 0 {
            return Err(Error::Config(format!(
                "filter window must have odd sides, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvertOptions {
    pub method: Method,
    pub window: Window,
    pub bits: u32,
    pub mapping: FlexionMapping,
}

impl ConvertOptions {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            window: Window::default(),
            bits: 8,
            mapping: FlexionMapping::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub filter: Duration,
    pub backproject: Duration,
    pub convert: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.filter + self.backproject + self.convert
    }
}

/// Runs the whole conversion for one depth frame.
pub fn convert(
    depth: &DepthImage,
    model: &SensorModel,
    opts: &ConvertOptions,
) -> Result<(GrayImage, StageTimings)> {
    let mut timings = StageTimings::default();

    let start = Instant::now();
    let filtered = median_filter(depth, opts.window.width, opts.window.height)?;
    timings.filter = start.elapsed();

    let start = Instant::now();
    let grid = depth_to_point_grid(&filtered, model)?;
    timings.backproject = start.elapsed();

    let start = Instant::now();
    let img = match opts.method {
        Method::Bearing(dir) => ba_image(&grid, dir, opts.bits)?,
        Method::Flexion(variant) => flexion_image_with(&grid, variant, opts.bits, opts.mapping)?,
    };
    timings.convert = start.elapsed();
    Ok((img, timings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_parsing() {
        assert_eq!(
            "ba:horizontal".parse::<Method>().unwrap(),
            Method::Bearing(BaDirection::Horizontal)
        );
        assert_eq!(
            "flexion:7".parse::<Method>().unwrap(),
            Method::Flexion(FlexionVariant::Standard { n: 7 })
        );
        assert_eq!(
            "flexion:angle".parse::<Method>().unwrap(),
            Method::Flexion(FlexionVariant::Angle { n: 3 })
        );
        for bad in ["ba", "ba:left", "flexion:2", "curvature:3"] {
            assert!(bad.parse::<Method>().is_err(), "{bad}");
        }
        let m = Method::Flexion(FlexionVariant::Normalized { n: 5 });
        assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
    }

    #[test]
    fn window_parsing() {
        assert_eq!(
            "5".parse::<Window>().unwrap(),
            Window {
                width: 5,
                height: 5
            }
        );
        assert_eq!(
            "3x5".parse::<Window>().unwrap(),
            Window {
                width: 3,
                height: 5
            }
        );
        assert!("4".parse::<Window>().is_err());
        assert!("3x".parse::<Window>().is_err());
    }
}
