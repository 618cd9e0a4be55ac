//! Edge-preserving median filtering of depth images.
//!
//! The filter slides a 16-bit histogram along each row (Huang's method) and
//! tracks the running median with a pointer that moves across the
//! histogram, skipping empty 256-code blocks. Each step costs `O(window_h)`
//! histogram updates plus the pointer movement, independent of how the
//! median is found.
//!
//! Invalid pixels never enter the histogram. When the number of valid
//! values in a window is even the lower of the two middle values is used.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::DepthImage;

const CODES: usize = 1 << 16;
const BLOCK_SHIFT: u32 = 8;
const BLOCKS: usize = CODES >> BLOCK_SHIFT;

/// Maps metric values onto 16-bit codes and back to representative input
/// values.
#[derive(Debug, Clone)]
pub struct Quantization {
    codes: Vec<u16>,
    /// Smallest input value seen for each code.
    representative: Vec<f64>,
}

impl Quantization {
    /// Raw codes when the image was decoded from integer depth, otherwise a
    /// linear 16-bit quantization of the valid value range.
    pub fn of(img: &DepthImage) -> Self {
        let valid = img.valid_mask();
        let values = img.values();
        let to_code: Box<dyn Fn(f64) -> u16> = match img.depth_scale() {
            Some(scale) => Box::new(move |v| (v * scale).round().clamp(0.0, 65535.0) as u16),
            None => {
                let (lo, hi) = values
                    .iter()
                    .zip(valid)
                    .filter(|(_, &ok)| ok)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| {
                        (lo.min(v), hi.max(v))
                    });
                let scale = if hi > lo { 65535.0 / (hi - lo) } else { 1.0 };
                Box::new(move |v| ((v - lo) * scale).round().clamp(0.0, 65535.0) as u16)
            }
        };
        let mut representative = vec![f64::INFINITY; CODES];
        let codes = values
            .iter()
            .zip(valid)
            .map(|(&v, &ok)| {
                if !ok {
                    return 0;
                }
                let c = to_code(v);
                let r = &mut representative[c as usize];
                *r = r.min(v);
                c
            })
            .collect();
        Self {
            codes,
            representative,
        }
    }

    pub fn codes(&self) -> &[u16] {
        &self.codes
    }

    pub fn value(&self, code: u16) -> f64 {
        self.representative[code as usize]
    }
}

struct RunningMedian {
    fine: Vec<u32>,
    coarse: [u32; BLOCKS],
    count: u32,
    /// Current median candidate and the number of entries strictly below it.
    cursor: usize,
    below: u32,
}

impl RunningMedian {
    fn new() -> Self {
        Self {
            fine: vec![0; CODES],
            coarse: [0; BLOCKS],
            count: 0,
            cursor: 0,
            below: 0,
        }
    }

    #[inline]
    fn add(&mut self, code: u16) {
        let c = code as usize;
        self.fine[c] += 1;
        self.coarse[c >> BLOCK_SHIFT] += 1;
        self.count += 1;
        if c < self.cursor {
            self.below += 1;
        }
    }

    #[inline]
    fn remove(&mut self, code: u16) {
        let c = code as usize;
        debug_assert!(self.fine[c] > 0);
        self.fine[c] -= 1;
        self.coarse[c >> BLOCK_SHIFT] -= 1;
        self.count -= 1;
        if c < self.cursor {
            self.below -= 1;
        }
    }

    /// Lower median of the current population.
    fn median(&mut self) -> Option<u16> {
        if self.count == 0 {
            return None;
        }
        let rank = (self.count - 1) / 2;
        while self.below > rank {
            let m = self.cursor;
            if m & 0xff == 0 && self.coarse[(m >> BLOCK_SHIFT) - 1] == 0 {
                self.cursor -= 1 << BLOCK_SHIFT;
            } else {
                self.cursor -= 1;
                self.below -= self.fine[self.cursor];
            }
        }
        while self.below + self.fine[self.cursor] <= rank {
            self.below += self.fine[self.cursor];
            self.cursor += 1;
            while self.cursor & 0xff == 0 && self.coarse[self.cursor >> BLOCK_SHIFT] == 0 {
                self.cursor += 1 << BLOCK_SHIFT;
            }
        }
        Some(self.cursor as u16)
    }
}

fn check_window(window_w: usize, window_h: usize) -> Result<()> {
    for (name, n) in [("width", window_w), ("height", window_h)] {
        if n == 0 || n % 2 == 0 {
            return Err(Error::Config(format!(
                "median window {name} must be odd and >= 1, got {n}"
            )));
        }
    }
    Ok(())
}

/// Median of the valid values inside a `window_w`×`window_h` window clipped
/// to the image. Returns one code per pixel (`None` for invalid pixels).
pub fn median_codes(
    codes: &[u16],
    valid: &[bool],
    width: usize,
    height: usize,
    window_w: usize,
    window_h: usize,
) -> Result<Vec<Option<u16>>> {
    check_window(window_w, window_h)?;
    if codes.len() != width * height || valid.len() != codes.len() {
        return Err(Error::Config(
            "code buffer does not match image size".into(),
        ));
    }
    let (hw, hh) = (window_w / 2, window_h / 2);
    let mut out = vec![None; codes.len()];
    if width == 0 {
        return Ok(out);
    }
    out.par_chunks_mut(width).enumerate().for_each_init(
        RunningMedian::new,
        |hist, (i, row_out)| {
            let rows = i.saturating_sub(hh)..(i + hh + 1).min(height);
            let column = |hist: &mut RunningMedian, j: usize, add: bool| {
                for r in rows.clone() {
                    let k = r * width + j;
                    if valid[k] {
                        if add {
                            hist.add(codes[k]);
                        } else {
                            hist.remove(codes[k]);
                        }
                    }
                }
            };
            for j in 0..(hw + 1).min(width) {
                column(hist, j, true);
            }
            for (j, slot) in row_out.iter_mut().enumerate() {
                if valid[i * width + j] {
                    *slot = hist.median();
                }
                if j >= hw {
                    column(hist, j - hw, false);
                }
                if j + hw + 1 < width {
                    column(hist, j + hw + 1, true);
                }
            }
            // leave the histogram empty for the next row on this worker
            for j in width.saturating_sub(hw)..width {
                column(hist, j, false);
            }
            debug_assert_eq!(hist.count, 0);
            hist.cursor = 0;
            hist.below = 0;
        },
    );
    Ok(out)
}

/// Edge-preserving median filter; the validity mask is preserved.
pub fn median_filter(img: &DepthImage, window_w: usize, window_h: usize) -> Result<DepthImage> {
    check_window(window_w, window_h)?;
    if window_w == 1 && window_h == 1 {
        return Ok(img.clone());
    }
    let q = Quantization::of(img);
    let medians = median_codes(
        q.codes(),
        img.valid_mask(),
        img.width(),
        img.height(),
        window_w,
        window_h,
    )?;
    let values = medians
        .iter()
        .map(|m| m.map_or(0.0, |c| q.value(c)))
        .collect();
    Ok(
        DepthImage::new(img.width(), img.height(), values, img.kind())?
            .with_depth_scale(img.depth_scale()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DepthKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn oracle(
        codes: &[u16],
        valid: &[bool],
        w: usize,
        h: usize,
        ww: usize,
        wh: usize,
    ) -> Vec<Option<u16>> {
        let (hw, hh) = (ww as isize / 2, wh as isize / 2);
        let mut out = vec![None; codes.len()];
        for i in 0..h as isize {
            for j in 0..w as isize {
                if !valid[(i * w as isize + j) as usize] {
                    continue;
                }
                let mut win = Vec::new();
                for r in (i - hh)..=(i + hh) {
                    for c in (j - hw)..=(j + hw) {
                        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                            continue;
                        }
                        let k = (r * w as isize + c) as usize;
                        if valid[k] {
                            win.push(codes[k]);
                        }
                    }
                }
                win.sort_unstable();
                out[(i * w as isize + j) as usize] = Some(win[(win.len() - 1) / 2]);
            }
        }
        out
    }

    #[test]
    fn matches_sort_oracle_on_random_codes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (w, h, ww, wh) in [(17, 11, 3, 3), (9, 13, 5, 3), (4, 4, 7, 7), (1, 6, 3, 5)] {
            let codes: Vec<u16> = (0..w * h).map(|_| rng.random()).collect();
            let valid: Vec<bool> = (0..w * h).map(|_| rng.random_bool(0.85)).collect();
            let got = median_codes(&codes, &valid, w, h, ww, wh).unwrap();
            assert_eq!(
                got,
                oracle(&codes, &valid, w, h, ww, wh),
                "{w}x{h} {ww}x{wh}"
            );
        }
    }

    #[test]
    fn clustered_codes_cross_block_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (w, h) = (40, 30);
        let codes: Vec<u16> = (0..w * h)
            .map(|k| 250 + (k % 7) as u16 * 3 + rng.random_range(0..20))
            .collect();
        let valid = vec![true; w * h];
        let got = median_codes(&codes, &valid, w, h, 5, 5).unwrap();
        assert_eq!(got, oracle(&codes, &valid, w, h, 5, 5));
    }

    #[test]
    fn identity_window() {
        let img = DepthImage::from_fn(8, 5, DepthKind::Depth, |i, j| {
            1.0 + 0.01 * (i * 8 + j) as f64
        });
        assert_eq!(median_filter(&img, 1, 1).unwrap(), img);
    }

    #[test]
    fn constant_image_is_unchanged() {
        let img = DepthImage::from_fn(9, 7, DepthKind::Depth, |_, _| 1.234);
        let out = median_filter(&img, 3, 3).unwrap();
        assert!(out.values().iter().all(|&v| v == 1.234));
    }

    #[test]
    fn even_window_is_rejected() {
        let img = DepthImage::from_fn(4, 4, DepthKind::Depth, |_, _| 1.0);
        assert!(matches!(median_filter(&img, 2, 3), Err(Error::Config(_))));
        assert!(matches!(median_filter(&img, 3, 0), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_pixels_stay_invalid_and_are_ignored() {
        let img = DepthImage::from_fn(5, 5, DepthKind::Depth, |i, j| match (i, j) {
            (2, 2) => 0.0,
            (1, 1) | (1, 2) | (1, 3) => 9.0,
            _ => 1.0,
        });
        let out = median_filter(&img, 3, 3).unwrap();
        assert_eq!(out.valid_mask(), img.valid_mask());
        assert_eq!(out.get(2, 2), None);
        // window around (1, 2) holds 3 nines, 5 ones (center of (2,2) excluded)
        assert_eq!(out.get(1, 2), Some(1.0));
    }

    #[test]
    fn even_population_takes_lower_middle() {
        // corner window holds four values: 1, 2, 3, 4
        let img = DepthImage::from_fn(2, 2, DepthKind::Depth, |i, j| (1 + i * 2 + j) as f64);
        let out = median_filter(&img, 3, 3).unwrap();
        assert!(out.values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn outputs_are_input_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = DepthImage::from_fn(20, 20, DepthKind::Depth, |_, _| rng.random_range(0.5..4.0));
        let out = median_filter(&img, 3, 3).unwrap();
        for v in out.values() {
            assert!(img.values().contains(v));
        }
    }
}
