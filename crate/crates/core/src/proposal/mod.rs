//! Unsupervised object proposals: graph segmentation, hierarchical grouping
//! and non-maximum suppression.

mod segment;
mod selective;

pub use segment::{segment_graph, SegmentInfo, SegmentMap, HIST_BINS_PER_CHANNEL};
pub use selective::{build_hierarchy, selective_search, Hierarchy, MergeNode};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box with half-open pixel extent `[x_tl, x_br) × [y_tl, y_br)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_tl: u32,
    pub y_tl: u32,
    pub x_br: u32,
    pub y_br: u32,
    #[serde(default)]
    pub score: f64,
}

impl Region {
    pub fn new(x_tl: u32, y_tl: u32, x_br: u32, y_br: u32) -> Self {
        Self {
            x_tl,
            y_tl,
            x_br,
            y_br,
            score: 0.0,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }

    /// The full frame of a `width × height` image.
    pub fn full(width: u32, height: u32) -> Self {
        Self::new(0, 0, width, height)
    }

    pub fn width(&self) -> u32 {
        self.x_br - self.x_tl
    }

    pub fn height(&self) -> u32 {
        self.y_br - self.y_tl
    }

    /// `S_R`, the pixel area.
    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn same_box(&self, other: &Region) -> bool {
        self.coords() == other.coords()
    }

    pub fn coords(&self) -> [u32; 4] {
        [self.x_tl, self.y_tl, self.x_br, self.y_br]
    }

    pub fn contains(&self, other: &Region) -> bool {
        self.x_tl <= other.x_tl
            && self.y_tl <= other.y_tl
            && self.x_br >= other.x_br
            && self.y_br >= other.y_br
    }

    /// Check the coordinate invariants against an image of the given size.
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        let ok = self.x_tl < self.x_br
            && self.y_tl < self.y_br
            && self.x_br <= width
            && self.y_br <= height
            && self.score.is_finite()
            && self.score >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "region {:?} invalid for {width}x{height} image",
                self.coords()
            )))
        }
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &Region, b: &Region) -> f64 {
    let x0 = a.x_tl.max(b.x_tl);
    let y0 = a.y_tl.max(b.y_tl);
    let x1 = a.x_br.min(b.x_br);
    let y1 = a.y_br.min(b.y_br);
    let inter = if x0 < x1 && y0 < y1 {
        (x1 - x0) as u64 * (y1 - y0) as u64
    } else {
        0
    };
    let union = a.area() + b.area() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Greedy non-maximum suppression. Output is sorted by descending score; ties
/// keep input order.
pub fn nms(regions: &[Region], iou_threshold: f64) -> Vec<Region> {
    let mut order: Vec<usize> = (0..regions.len()).collect();
    order.sort_by(|&i, &j| regions[j].score.total_cmp(&regions[i].score));
    let mut kept: Vec<Region> = Vec::new();
    for i in order {
        let r = &regions[i];
        if kept.iter().all(|k| iou(k, r) < iou_threshold) {
            kept.push(*r);
        }
    }
    kept
}

/// Tunables for proposal generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalConfig {
    /// Graph-segmentation scale `k` in `τ(C) = k / |C|`.
    pub scale_k: f64,
    pub min_size: usize,
    pub max_proposals: usize,
    pub nms_iou: f64,
    pub color_weight: f64,
    pub size_weight: f64,
    pub fill_weight: f64,
    /// Run proposals on the saliency-masked image instead of the original.
    pub propose_on_masked: bool,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            scale_k: 100.0,
            min_size: 20,
            max_proposals: 100,
            nms_iou: 0.5,
            color_weight: 0.5,
            size_weight: 0.25,
            fill_weight: 0.25,
            propose_on_masked: true,
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_k > 0.0 && self.scale_k.is_finite()) {
            return Err(Error::Config("scale_k must be positive".into()));
        }
        if self.min_size == 0 {
            return Err(Error::Config("min_size must be positive".into()));
        }
        if self.max_proposals == 0 {
            return Err(Error::Config("max_proposals must be positive".into()));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(Error::Config("nms_iou must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Wire format for proposals of one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposalSet {
    pub image_id: String,
    pub regions: Vec<ScoredRegionJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredRegionJson {
    pub x_tl: u32,
    pub y_tl: u32,
    pub x_br: u32,
    pub y_br: u32,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_region: Option<f64>,
}

impl From<&Region> for ScoredRegionJson {
    fn from(r: &Region) -> Self {
        Self {
            x_tl: r.x_tl,
            y_tl: r.y_tl,
            x_br: r.x_br,
            y_br: r.y_br,
            score: r.score,
            i_region: None,
        }
    }
}

impl ScoredRegionJson {
    pub fn region(&self) -> Region {
        Region::new(self.x_tl, self.y_tl, self.x_br, self.y_br).with_score(self.score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn iou_examples() {
        let a = Region::new(0, 0, 2, 2);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &Region::new(5, 5, 7, 7)), 0.0);
        let b = Region::new(1, 1, 3, 3);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-15);
        // touching edges share no area
        assert_eq!(iou(&a, &Region::new(2, 0, 4, 2)), 0.0);
    }

    #[test]
    fn nms_examples() {
        let hi = Region::new(0, 0, 10, 10).with_score(0.9);
        let lo = Region::new(0, 0, 10, 10).with_score(0.4);
        assert_eq!(nms(&[lo, hi], 0.5), vec![hi]);

        let far = Region::new(20, 20, 30, 30).with_score(0.4);
        assert_eq!(nms(&[far, hi], 0.5), vec![hi, far]);

        let a = Region::new(0, 0, 2, 2).with_score(0.8);
        let b = Region::new(1, 1, 3, 3).with_score(0.3);
        assert_eq!(nms(&[a, b], 0.1), vec![a]);
        assert_eq!(nms(&[a, b], 0.5), vec![a, b]);
        assert!(nms(&[], 0.5).is_empty());
    }

    fn arb_region() -> impl Strategy<Value = Region> {
        (0u32..50, 0u32..50, 1u32..30, 1u32..30, 0.0f64..1.0)
            .prop_map(|(x, y, w, h, s)| Region::new(x, y, x + w, y + h).with_score(s))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_reflexive(a in arb_region(), b in arb_region()) {
            prop_assert_eq!(iou(&a, &b), iou(&b, &a));
            prop_assert_eq!(iou(&a, &a), 1.0);
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn nms_output_is_sparse_subset(
            regions in proptest::collection::vec(arb_region(), 0..40),
            thr in 0.05f64..1.0,
        ) {
            let kept = nms(&regions, thr);
            for k in &kept {
                prop_assert!(regions.iter().any(|r| r == k));
            }
            for (i, a) in kept.iter().enumerate() {
                for b in &kept[i + 1..] {
                    prop_assert!(iou(a, b) < thr);
                }
            }
            for w in kept.windows(2) {
                prop_assert!(w[0].score >= w[1].score);
            }
        }
    }
}
