//! Dataset ingestion and image persistence.
//!
//! * 16-bit single-channel PNG depth maps (`meters = code / depth_scale`,
//!   code 0 = no reading).
//! * Plain-text depth maps (whitespace-separated, row-major).
//! * 8-bit grayscale output as PNG or binary PGM (`P5`).
//! * TUM association lists and `timestamp tx ty tz qx qy qz qw` trajectories.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::geometry::{DepthImage, DepthKind, SensorModel};
use crate::image::GrayImage;
use crate::trajectory::{Pose, Trajectory};

/// Codes per meter of TUM RGB-D depth maps.
pub const TUM_DEPTH_SCALE: f64 = 5000.0;

/// Whether parsers reject malformed lines or skip them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_depth_png(path: impl AsRef<Path>, depth_scale: f64) -> Result<DepthImage> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(image_err(path))?;
    let luma = match img {
        image::DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(Error::Format(format!(
                "{}: expected a 16-bit single-channel image, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    DepthImage::from_codes(w, h, luma.as_raw(), depth_scale, DepthKind::Depth)
}

/// Writes depth as 16-bit PNG codes `round(value * depth_scale)`.
pub fn write_depth_png(img: &DepthImage, path: impl AsRef<Path>, depth_scale: f64) -> Result<()> {
    let path = path.as_ref();
    check_size(img.width(), img.height())?;
    let codes = img.to_codes(depth_scale)?;
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, codes)
            .ok_or_else(|| Error::Format("depth buffer does not match image size".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(image_err(path))
}

fn check_size(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Format(format!(
            "cannot store an empty {width}x{height} image"
        )));
    }
    if width > u32::MAX as usize || height > u32::MAX as usize {
        return Err(Error::Format(format!(
            "{width}x{height} image is too large"
        )));
    }
    Ok(())
}

pub fn write_gray_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    check_size(img.width(), img.height())?;
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.pixels().to_vec(),
    )
    .ok_or_else(|| Error::Format("pixel buffer does not match image size".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(image_err(path))
}

pub fn read_gray_png(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(image_err(path))?;
    let luma = match img {
        image::DynamicImage::ImageLuma8(buf) => buf,
        other => {
            return Err(Error::Format(format!(
                "{}: expected an 8-bit grayscale image, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    GrayImage::new(
        luma.width() as usize,
        luma.height() as usize,
        luma.into_raw(),
    )
}

/// Binary PGM (`P5`, maxval 255).
pub fn write_gray_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    check_size(img.width(), img.height())?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write!(out, "P5\n{} {}\n255\n", img.width(), img.height())
        .and_then(|_| out.write_all(img.pixels()))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_gray_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |what: &str| Error::Format(format!("{}: {what}", path.display()));

    // header: magic, width, height, maxval separated by whitespace/comments
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM (P5) file"));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| bad("invalid PGM header field"))
    };
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(bad("only 8-bit PGM (maxval 255) is supported"));
    }
    let data = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| bad("truncated PGM data"))?;
    GrayImage::new(w, h, data.to_vec())
}

/// Writes PNG or PGM depending on the file extension (PNG by default).
pub fn write_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("pgm") => write_gray_pgm(img, path),
        _ => write_gray_png(img, path),
    }
}

pub fn read_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("pgm") => read_gray_pgm(path),
        _ => read_gray_png(path),
    }
}

/// How plain-text depth values relate to the pixel ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TextDepth {
    /// Values are orthographic depth `Z`.
    #[default]
    Orthographic,
    /// Values are Euclidean distances along the pixel ray; converted to `Z`
    /// for pinhole models.
    RayLength,
}

/// Reads a whitespace-separated row-major depth map in meters, as shipped by
/// synthetic datasets such as Multi-FoV.
pub fn read_depth_text(
    path: impl AsRef<Path>,
    model: &SensorModel,
    interpretation: TextDepth,
) -> Result<DepthImage> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (w, h) = (model.width(), model.height());
    let mut values = Vec::with_capacity(w * h);
    for (line_no, line) in text.lines().enumerate() {
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line_no + 1,
                message: format!("invalid depth value '{tok}'"),
            })?;
            values.push(v);
        }
    }
    if values.len() != w * h {
        return Err(Error::Format(format!(
            "{}: expected {} depth values for {w}x{h}, found {}",
            path.display(),
            w * h,
            values.len()
        )));
    }
    match (model, interpretation) {
        (SensorModel::Pinhole(k), TextDepth::RayLength) => {
            for (idx, v) in values.iter_mut().enumerate() {
                let ray = k.ray((idx % w) as f64, (idx / w) as f64);
                *v /= ray.norm();
            }
        }
        (SensorModel::Spherical(_), TextDepth::Orthographic) => {
            return Err(Error::Config(
                "spherical models expect ray-length (range) values".into(),
            ))
        }
        _ => {}
    }
    DepthImage::new(w, h, values, model.depth_kind())
}

/// One frame of an association list.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationRecord {
    pub timestamp: f64,
    pub depth: PathBuf,
    pub color: Option<PathBuf>,
}

fn lines_of(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push((k + 1, trimmed.to_string()));
    }
    Ok(out)
}

fn parse_f64(tok: &str, what: &str) -> std::result::Result<f64, String> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("invalid {what} '{tok}'"))
}

/// Reads an association list. Accepted line layouts:
///
/// * `timestamp depth`
/// * `timestamp depth color`
/// * `t_color color t_depth depth` (output of the TUM `associate.py` tool)
pub fn read_association(
    path: impl AsRef<Path>,
    strictness: Strictness,
) -> Result<Vec<AssociationRecord>> {
    let path = path.as_ref();
    let mut records = Vec::new();
    for (line, text) in lines_of(path)? {
        let toks: Vec<&str> = text.split_whitespace().collect();
        let parsed = match toks.as_slice() {
            [t, depth] => parse_f64(t, "timestamp").map(|timestamp| AssociationRecord {
                timestamp,
                depth: depth.into(),
                color: None,
            }),
            [t, depth, color] => parse_f64(t, "timestamp").map(|timestamp| AssociationRecord {
                timestamp,
                depth: depth.into(),
                color: Some(color.into()),
            }),
            [tc, color, td, depth] => parse_f64(tc, "timestamp")
                .and_then(|_| parse_f64(td, "timestamp"))
                .map(|timestamp| AssociationRecord {
                    timestamp,
                    depth: depth.into(),
                    color: Some(color.into()),
                }),
            _ => Err(format!("expected 2 to 4 fields, found {}", toks.len())),
        };
        match parsed {
            Ok(r) => records.push(r),
            Err(message) if strictness == Strictness::Strict => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message,
                })
            }
            Err(_) => {}
        }
    }
    Ok(records)
}

/// Reads a TUM trajectory: `timestamp tx ty tz qx qy qz qw` per line.
pub fn read_tum_trajectory(path: impl AsRef<Path>, strictness: Strictness) -> Result<Trajectory> {
    let path = path.as_ref();
    let mut poses = Vec::new();
    for (line, text) in lines_of(path)? {
        let parsed = (|| {
            let vals = text
                .split_whitespace()
                .map(|t| parse_f64(t, "number"))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if vals.len() != 8 {
                return Err(format!("expected 8 fields, found {}", vals.len()));
            }
            Pose::from_components(
                vals[0],
                [vals[1], vals[2], vals[3]],
                [vals[4], vals[5], vals[6], vals[7]],
            )
            .map_err(|e| e.to_string())
        })();
        match parsed {
            Ok(p) => poses.push(p),
            Err(message) if strictness == Strictness::Strict => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message,
                })
            }
            Err(_) => {}
        }
    }
    if poses.is_empty() {
        return Err(Error::Format(format!("{}: no poses", path.display())));
    }
    Trajectory::new(poses).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_tum_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "# timestamp tx ty tz qx qy qz qw")?;
        for p in traj.poses() {
            let q = p.rotation.quaternion();
            writeln!(
                out,
                "{:.6} {} {} {} {} {} {} {}",
                p.timestamp, p.translation.x, p.translation.y, p.translation.z, q.i, q.j, q.k, q.w
            )?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
