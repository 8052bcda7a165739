//! Saliency maps, Otsu thresholding and saliency-weighted target selection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::proposal::Region;
use crate::uncertainty::UnknownVerdict;

/// Per-pixel saliency in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("saliency map has zero area".into()));
        }
        if values.len() != width as usize * height as usize {
            return Err(Error::InvalidInput(format!(
                "saliency map has {} values for {width}x{height}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("saliency value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// 8-bit grayscale map, scaled by 1/255.
    pub fn from_gray8(width: u32, height: u32, gray: &[u8]) -> Result<Self> {
        Self::new(width, height, gray.iter().map(|&g| g as f64 / 255.0).collect())
    }

    /// Load an externally computed map (grayscale image) for `image`.
    pub fn load_external(path: impl AsRef<Path>, image: &Image) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let gray = image::load_from_memory(&bytes)?.to_luma8();
        let (w, h) = gray.dimensions();
        if (w, h) != (image.width(), image.height()) {
            return Err(Error::InvalidInput(format!(
                "saliency map is {w}x{h} but image is {}x{}",
                image.width(),
                image.height()
            )));
        }
        Self::from_gray8(w, h, gray.as_raw())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn to_gray8(&self) -> Vec<u8> {
        self.values
            .iter()
            .map(|v| (v * 255.0).round() as u8)
            .collect()
    }

    /// Write as an 8-bit grayscale PNG, the format [`Self::load_external`] reads.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let buf = image::GrayImage::from_raw(self.width, self.height, self.to_gray8())
            .expect("buffer size checked at construction");
        buf.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    /// Mean saliency over a region.
    pub fn mean_over(&self, r: &Region) -> f64 {
        let mut s = 0.0;
        for y in r.y_tl..r.y_br {
            for x in r.x_tl..r.x_br {
                s += self.get(x, y);
            }
        }
        s / r.area() as f64
    }
}

fn border_width(image: &Image) -> u32 {
    (image.width().min(image.height()) / 16).max(1)
}

/// Built-in border-prior saliency: distance of each pixel's 3×3 mean color
/// from the mean color of the image border ring, min-max normalized.
pub fn compute_saliency(image: &Image) -> SaliencyMap {
    let (w, h) = (image.width(), image.height());
    let ring = border_width(image);

    let mut border = [0.0f64; 3];
    let mut n_border = 0usize;
    for y in 0..h {
        for x in 0..w {
            if x < ring || y < ring || x + ring >= w || y + ring >= h {
                let p = image.pixel(x, y);
                for c in 0..3 {
                    border[c] += p[c] as f64;
                }
                n_border += 1;
            }
        }
    }
    for b in &mut border {
        *b /= n_border as f64;
    }

    let mut raw = Vec::with_capacity(image.area());
    for y in 0..h {
        for x in 0..w {
            let mut mean = [0.0f64; 3];
            let mut n = 0usize;
            for yy in y.saturating_sub(1)..(y + 2).min(h) {
                for xx in x.saturating_sub(1)..(x + 2).min(w) {
                    let p = image.pixel(xx, yy);
                    for c in 0..3 {
                        mean[c] += p[c] as f64;
                    }
                    n += 1;
                }
            }
            let d: f64 = (0..3)
                .map(|c| (mean[c] / n as f64 - border[c]).powi(2))
                .sum();
            raw.push(d.sqrt());
        }
    }

    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = if hi - lo > 0.0 {
        raw.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; raw.len()]
    };
    SaliencyMap {
        width: w,
        height: h,
        values,
    }
}

pub const OTSU_BINS: usize = 256;

/// 256 uniform bins over `[0, 1]`; bin `b` holds values in `[b/256, (b+1)/256)`,
/// with 1.0 in the last bin.
pub fn saliency_histogram(map: &SaliencyMap) -> [u64; OTSU_BINS] {
    let mut hist = [0u64; OTSU_BINS];
    for &v in &map.values {
        hist[((v * OTSU_BINS as f64) as usize).min(OTSU_BINS - 1)] += 1;
    }
    hist
}

/// Otsu split of a histogram: returns the first bin of the upper class, or
/// `None` when fewer than two bins are occupied.
///
/// Between-class variance is proportional to `(n1·s0 − n0·s1)² / (n0·n1)`
/// over class counts `n` and bin-index sums `s`. Candidates are compared by
/// exact integer cross-multiplication, so the first maximum wins even on
/// exact ties.
pub fn otsu_from_histogram(hist: &[u64; OTSU_BINS]) -> Option<usize> {
    let total: u64 = hist.iter().sum();
    let weighted: u64 = hist.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
    let mut n0 = 0u64;
    let mut s0 = 0u64;
    // (threshold, |n1·s0 − n0·s1|, n0·n1)
    let mut best: Option<(usize, u128, u128)> = None;
    for t in 1..OTSU_BINS {
        n0 += hist[t - 1];
        s0 += (t as u64 - 1) * hist[t - 1];
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s1 = weighted - s0;
        let d = (n1 as i128 * s0 as i128 - n0 as i128 * s1 as i128).unsigned_abs();
        let den = n0 as u128 * n1 as u128;
        let better = match best {
            None => true,
            Some((_, bd, bden)) => variance_greater((d, den), (bd, bden)),
        };
        if better {
            best = Some((t, d, den));
        }
    }
    best.map(|(t, _, _)| t)
}

/// `a.0² / a.1 > b.0² / b.1`, exactly when the products fit in `u128`.
fn variance_greater(a: (u128, u128), b: (u128, u128)) -> bool {
    let lhs = a.0.checked_mul(a.0).and_then(|x| x.checked_mul(b.1));
    let rhs = b.0.checked_mul(b.0).and_then(|x| x.checked_mul(a.1));
    match (lhs, rhs) {
        (Some(l), Some(r)) => l > r,
        _ => {
            let va = (a.0 as f64).powi(2) / a.1 as f64;
            let vb = (b.0 as f64).powi(2) / b.1 as f64;
            va > vb
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtsuThreshold {
    pub theta: f64,
    /// No split exists (all values share one bin); `theta` is then the
    /// minimum map value.
    pub degenerate: bool,
}

pub fn otsu_threshold(map: &SaliencyMap) -> OtsuThreshold {
    match otsu_from_histogram(&saliency_histogram(map)) {
        Some(t) => OtsuThreshold {
            theta: t as f64 / OTSU_BINS as f64,
            degenerate: false,
        },
        None => OtsuThreshold {
            theta: map.values.iter().copied().fold(f64::INFINITY, f64::min),
            degenerate: true,
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyScore {
    pub region: Region,
    pub theta: f64,
    pub s_salient: u64,
    pub s_region: u64,
    pub i_region: f64,
}

/// `I_region = Σ_{I(p) ≥ θ} I(p) · S_salient / S_region` over the region's pixels.
pub fn region_saliency(region: &Region, map: &SaliencyMap, theta: f64) -> SaliencyScore {
    let mut sum = 0.0;
    let mut salient = 0u64;
    for y in region.y_tl..region.y_br {
        for x in region.x_tl..region.x_br {
            let v = map.get(x, y);
            if v >= theta {
                sum += v;
                salient += 1;
            }
        }
    }
    let s_region = region.area();
    SaliencyScore {
        region: *region,
        theta,
        s_salient: salient,
        s_region,
        i_region: sum * (salient as f64 / s_region as f64),
    }
}

/// Black out every pixel whose saliency is below `theta`.
pub fn mask_image(image: &Image, map: &SaliencyMap, theta: f64) -> Result<Image> {
    if (image.width(), image.height()) != (map.width, map.height) {
        return Err(Error::InvalidInput("mask and image sizes differ".into()));
    }
    let mut out = image.clone();
    for y in 0..map.height {
        for x in 0..map.width {
            if map.get(x, y) < theta {
                out.set_pixel(x, y, [0, 0, 0]);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetCandidate {
    pub region: Region,
    pub score: SaliencyScore,
    pub verdict: UnknownVerdict,
}

/// The unknown candidate with the largest `i_region` (ties: larger area, then
/// smaller `x_tl`). With a degenerate threshold the largest unknown region is
/// taken instead. `None` when nothing is unknown.
pub fn select_target(candidates: &[TargetCandidate], degenerate: bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if !c.verdict.is_unknown() {
            continue;
        }
        let Some(b) = best else {
            best = Some(i);
            continue;
        };
        let b = &candidates[b];
        let primary = if degenerate {
            0.0f64.total_cmp(&0.0)
        } else {
            c.score.i_region.total_cmp(&b.score.i_region)
        };
        let ord = primary
            .then(c.score.s_region.cmp(&b.score.s_region))
            .then(b.region.x_tl.cmp(&c.region.x_tl));
        if ord.is_gt() {
            best = Some(i);
        }
    }
    best
}
