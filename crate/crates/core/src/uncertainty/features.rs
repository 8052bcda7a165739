//! Toy region descriptor: a joint HSV color histogram.

use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::proposal::Region;

pub const HUE_BINS: usize = 8;
pub const SAT_BINS: usize = 4;
pub const VAL_BINS: usize = 3;
pub const FEATURE_DIM: usize = HUE_BINS * SAT_BINS * VAL_BINS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn cosine(&self, other: &FeatureVector) -> f64 {
        cosine_similarity(&self.0, &other.0)
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Histogram bin of an RGB pixel: 8 hue × 4 saturation × 3 value bins.
pub fn hsv_bin(rgb: [u8; 3]) -> usize {
    let [r, g, b] = rgb.map(|c| c as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let sat = if max == 0.0 { 0.0 } else { delta / max };
    let h = ((hue / (360.0 / HUE_BINS as f64)) as usize) % HUE_BINS;
    let s = ((sat * SAT_BINS as f64) as usize).min(SAT_BINS - 1);
    let v = ((max * VAL_BINS as f64) as usize).min(VAL_BINS - 1);
    (h * SAT_BINS + s) * VAL_BINS + v
}

/// L1-normalized HSV histogram of `region`, or of the whole image when
/// `region` is `None`. The region must lie inside the image.
pub fn extract_features(image: &Image, region: Option<&Region>) -> FeatureVector {
    let r = region
        .copied()
        .unwrap_or_else(|| Region::full(image.width(), image.height()));
    let mut hist = vec![0.0; FEATURE_DIM];
    for y in r.y_tl..r.y_br {
        for x in r.x_tl..r.x_br {
            hist[hsv_bin(image.pixel(x, y))] += 1.0;
        }
    }
    let total = r.area() as f64;
    for v in &mut hist {
        *v /= total;
    }
    FeatureVector(hist)
}
