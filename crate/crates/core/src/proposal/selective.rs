//! Hierarchical grouping of segments into object proposals.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::Result;
use crate::image::Image;

use super::{segment_graph, ProposalConfig, Region, SegmentMap};

/// One node of the grouping hierarchy: an initial segment or a merge of two
/// earlier nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct MergeNode {
    pub bbox: Region,
    pub size: usize,
    pub parents: Option<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct Hierarchy {
    pub segments: SegmentMap,
    /// Initial segments first (same ids as `segments`), then merges in the
    /// order they happened.
    pub nodes: Vec<MergeNode>,
}

struct Working {
    size: usize,
    hist: Vec<f64>,
    bbox: Region,
}

fn union_box(a: &Region, b: &Region) -> Region {
    Region::new(
        a.x_tl.min(b.x_tl),
        a.y_tl.min(b.y_tl),
        a.x_br.max(b.x_br),
        a.y_br.max(b.y_br),
    )
}

fn similarity(a: &Working, b: &Working, image_area: f64, cfg: &ProposalConfig) -> f64 {
    let color: f64 = a.hist.iter().zip(&b.hist).map(|(x, y)| x.min(*y)).sum();
    let joint = (a.size + b.size) as f64;
    let size = 1.0 - joint / image_area;
    let fill = 1.0 - (union_box(&a.bbox, &b.bbox).area() as f64 - joint) / image_area;
    cfg.color_weight * color + cfg.size_weight * size + cfg.fill_weight * fill
}

/// Segment the image and greedily merge the most similar adjacent pair until
/// a single region remains.
///
/// Ties in similarity go to the smaller combined area, then to the
/// lexicographically lower id pair.
pub fn build_hierarchy(image: &Image, cfg: &ProposalConfig) -> Result<Hierarchy> {
    cfg.validate()?;
    let segments = segment_graph(image, cfg.scale_k, cfg.min_size)?;
    let image_area = image.area() as f64;
    let (w, h) = (image.width() as usize, image.height() as usize);

    let mut work: Vec<Working> = segments
        .segments
        .iter()
        .map(|s| {
            let total: u32 = s.color_hist.iter().sum();
            Working {
                size: s.size,
                hist: s
                    .color_hist
                    .iter()
                    .map(|&c| c as f64 / total as f64)
                    .collect(),
                bbox: s.bbox,
            }
        })
        .collect();
    let mut nodes: Vec<MergeNode> = work
        .iter()
        .map(|r| MergeNode {
            bbox: r.bbox,
            size: r.size,
            parents: None,
        })
        .collect();

    let mut neighbours: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); work.len()];
    for y in 0..h {
        for x in 0..w {
            let a = segments.labels[y * w + x] as usize;
            if x + 1 < w {
                let b = segments.labels[y * w + x + 1] as usize;
                if a != b {
                    neighbours[a].insert(b);
                    neighbours[b].insert(a);
                }
            }
            if y + 1 < h {
                let b = segments.labels[(y + 1) * w + x] as usize;
                if a != b {
                    neighbours[a].insert(b);
                    neighbours[b].insert(a);
                }
            }
        }
    }

    let mut sims: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (a, nb) in neighbours.iter().enumerate() {
        for &b in nb.range(a + 1..) {
            sims.insert((a, b), similarity(&work[a], &work[b], image_area, cfg));
        }
    }

    while !sims.is_empty() {
        let mut best: Option<((usize, usize), f64, usize)> = None;
        for (&pair, &s) in &sims {
            let joint = work[pair.0].size + work[pair.1].size;
            let better = match best {
                None => true,
                Some((_, bs, bj)) => s > bs || (s == bs && joint < bj),
            };
            if better {
                best = Some((pair, s, joint));
            }
        }
        let ((a, b), _, _) = best.expect("non-empty");
        let t = work.len();
        let hist = work[a]
            .hist
            .iter()
            .zip(&work[b].hist)
            .map(|(x, y)| x * work[a].size as f64 + y * work[b].size as f64)
            .map(|v| v / (work[a].size + work[b].size) as f64)
            .collect();
        let merged = Working {
            size: work[a].size + work[b].size,
            hist,
            bbox: union_box(&work[a].bbox, &work[b].bbox),
        };
        nodes.push(MergeNode {
            bbox: merged.bbox,
            size: merged.size,
            parents: Some((a, b)),
        });
        work.push(merged);

        sims.retain(|&(p, q), _| p != a && p != b && q != a && q != b);
        let mut nb: BTreeSet<usize> = neighbours[a].union(&neighbours[b]).copied().collect();
        nb.remove(&a);
        nb.remove(&b);
        for &n in &nb {
            neighbours[n].remove(&a);
            neighbours[n].remove(&b);
            neighbours[n].insert(t);
            sims.insert((n, t), similarity(&work[n], &work[t], image_area, cfg));
        }
        neighbours.push(nb);
    }

    Ok(Hierarchy { segments, nodes })
}

/// Object proposals: every node of the grouping hierarchy, de-duplicated by
/// box and capped at `max_proposals`. Earlier nodes rank higher and carry a
/// larger score `1 / (1 + rank)`.
pub fn selective_search(image: &Image, cfg: &ProposalConfig) -> Result<Vec<Region>> {
    let hierarchy = build_hierarchy(image, cfg)?;
    let mut out: Vec<Region> = Vec::new();
    let mut seen = BTreeSet::new();
    for node in &hierarchy.nodes {
        if seen.insert(node.bbox.coords()) {
            out.push(node.bbox);
        }
    }
    out.truncate(cfg.max_proposals);
    for (rank, r) in out.iter_mut().enumerate() {
        r.score = 1.0 / (1.0 + rank as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proposal::iou;

    fn two_rects() -> (Image, Region, Region) {
        let mut img = Image::filled(64, 48, [200, 200, 200]).unwrap();
        let a = Region::new(5, 6, 20, 22);
        let b = Region::new(38, 20, 58, 40);
        img.fill_rect(a.x_tl, a.y_tl, a.x_br, a.y_br, [200, 30, 30]);
        img.fill_rect(b.x_tl, b.y_tl, b.x_br, b.y_br, [20, 40, 210]);
        (img, a, b)
    }

    #[test]
    fn finds_both_rectangles() {
        let (img, a, b) = two_rects();
        let props = selective_search(&img, &ProposalConfig::default()).unwrap();
        for truth in [a, b] {
            let best = props.iter().map(|p| iou(p, &truth)).fold(0.0, f64::max);
            assert!(best >= 0.9, "best IoU {best} for {truth:?}");
        }
    }

    #[test]
    fn uniform_image_gives_full_frame() {
        let img = Image::filled(30, 20, [9, 9, 9]).unwrap();
        let props = selective_search(&img, &ProposalConfig::default()).unwrap();
        assert_eq!(props.len(), 1);
        assert!(props[0].same_box(&Region::full(30, 20)));
    }

    fn busy() -> Image {
        let mut img = Image::filled(48, 48, [0, 0, 0]).unwrap();
        for by in 0..6 {
            for bx in 0..6 {
                let c = ((bx * 37 + by * 91) % 256) as u8;
                img.fill_rect(bx * 8, by * 8, bx * 8 + 8, by * 8 + 8, [c, 255 - c, c / 2]);
            }
        }
        img
    }

    #[test]
    fn cap_is_respected() {
        let cfg = ProposalConfig {
            max_proposals: 5,
            min_size: 4,
            ..Default::default()
        };
        let props = selective_search(&busy(), &cfg).unwrap();
        assert_eq!(props.len(), 5);
    }

    #[test]
    fn hierarchy_is_monotone_and_covers_segments() {
        let cfg = ProposalConfig {
            min_size: 4,
            max_proposals: 10_000,
            ..Default::default()
        };
        let img = busy();
        let h = build_hierarchy(&img, &cfg).unwrap();
        let n = h.segments.count();
        assert!(n > 1);
        assert_eq!(h.nodes.len(), 2 * n - 1);
        for node in &h.nodes[n..] {
            let (p, q) = node.parents.unwrap();
            assert!(node.bbox.contains(&h.nodes[p].bbox));
            assert!(node.bbox.contains(&h.nodes[q].bbox));
            assert_eq!(node.size, h.nodes[p].size + h.nodes[q].size);
        }
        assert_eq!(h.nodes.last().unwrap().size, img.area());

        let props = selective_search(&img, &cfg).unwrap();
        for seg in &h.segments.segments {
            assert!(props.iter().any(|p| p.same_box(&seg.bbox)));
        }
        for w in props.windows(2) {
            assert!(w[0].score > w[1].score);
        }
    }
}
