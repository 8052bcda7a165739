//! Graph-based segmentation over the 4-connected pixel grid.
//!
//! Edges are weighted by Euclidean RGB distance and processed in ascending
//! order; two components merge when the edge weight does not exceed
//! `min(Int(C1) + k/|C1|, Int(C2) + k/|C2|)`. A final pass absorbs components
//! smaller than `min_size` into a neighbour.

use crate::error::{Error, Result};
use crate::image::Image;

use super::Region;

pub const HIST_BINS_PER_CHANNEL: usize = 25;

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentInfo {
    pub size: usize,
    /// Raw counts, `HIST_BINS_PER_CHANNEL` bins for each of R, G, B.
    pub color_hist: Vec<u32>,
    pub bbox: Region,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentMap {
    pub width: u32,
    pub height: u32,
    /// Segment id per pixel, row-major. Ids are dense in `[0, count)` and
    /// numbered by first occurrence.
    pub labels: Vec<u32>,
    pub segments: Vec<SegmentInfo>,
}

impl SegmentMap {
    pub fn count(&self) -> usize {
        self.segments.len()
    }

    pub fn label(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width as usize + x as usize]
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
    int_diff: Vec<f64>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
            int_diff: vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Union by size; the larger root wins, lower index on ties.
    fn union(&mut self, a: usize, b: usize, weight: f64) -> usize {
        let (big, small) = if self.size[a] > self.size[b] || (self.size[a] == self.size[b] && a < b)
        {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.int_diff[big] = self.int_diff[big].max(self.int_diff[small]).max(weight);
        big
    }
}

fn color_distance(a: [u8; 3], b: [u8; 3]) -> f64 {
    let d: i32 = a
        .iter()
        .zip(&b)
        .map(|(&x, &y)| (x as i32 - y as i32).pow(2))
        .sum();
    (d as f64).sqrt()
}

fn hist_bin(v: u8) -> usize {
    v as usize * HIST_BINS_PER_CHANNEL / 256
}

pub fn segment_graph(image: &Image, scale_k: f64, min_size: usize) -> Result<SegmentMap> {
    if image.area() == 0 {
        return Err(Error::InvalidInput("image has zero area".into()));
    }
    if !(scale_k > 0.0 && scale_k.is_finite()) {
        return Err(Error::Config(format!("scale_k must be positive, got {scale_k}")));
    }
    if min_size == 0 {
        return Err(Error::Config("min_size must be positive".into()));
    }
    let (w, h) = (image.width() as usize, image.height() as usize);
    let n = w * h;

    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(2 * n);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let p = image.pixel_at(i);
            if x + 1 < w {
                edges.push((color_distance(p, image.pixel_at(i + 1)), i, i + 1));
            }
            if y + 1 < h {
                edges.push((color_distance(p, image.pixel_at(i + w)), i, i + w));
            }
        }
    }
    // stable: equal weights keep scan order
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut ds = DisjointSet::new(n);
    for &(weight, a, b) in &edges {
        let (ra, rb) = (ds.find(a), ds.find(b));
        if ra == rb {
            continue;
        }
        let ta = ds.int_diff[ra] + scale_k / ds.size[ra] as f64;
        let tb = ds.int_diff[rb] + scale_k / ds.size[rb] as f64;
        if weight <= ta.min(tb) {
            ds.union(ra, rb, weight);
        }
    }
    for &(weight, a, b) in &edges {
        let (ra, rb) = (ds.find(a), ds.find(b));
        if ra != rb && (ds.size[ra] < min_size || ds.size[rb] < min_size) {
            ds.union(ra, rb, weight);
        }
    }

    let mut dense = vec![u32::MAX; n];
    let mut labels = Vec::with_capacity(n);
    let mut segments: Vec<SegmentInfo> = Vec::new();
    for idx in 0..n {
        let root = ds.find(idx);
        if dense[root] == u32::MAX {
            dense[root] = segments.len() as u32;
            segments.push(SegmentInfo {
                size: 0,
                color_hist: vec![0; 3 * HIST_BINS_PER_CHANNEL],
                bbox: Region::new(u32::MAX, u32::MAX, 0, 0),
            });
        }
        let id = dense[root];
        labels.push(id);
        let (x, y) = ((idx % w) as u32, (idx / w) as u32);
        let seg = &mut segments[id as usize];
        seg.size += 1;
        let p = image.pixel_at(idx);
        for (c, &v) in p.iter().enumerate() {
            seg.color_hist[c * HIST_BINS_PER_CHANNEL + hist_bin(v)] += 1;
        }
        let b = &mut seg.bbox;
        b.x_tl = b.x_tl.min(x);
        b.y_tl = b.y_tl.min(y);
        b.x_br = b.x_br.max(x + 1);
        b.y_br = b.y_br.max(y + 1);
    }

    Ok(SegmentMap {
        width: image.width(),
        height: image.height(),
        labels,
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    /// Connected components of pixels whose colors differ by at most `tol`.
    fn components_oracle(image: &Image, tol: f64) -> Vec<usize> {
        let (w, h) = (image.width() as usize, image.height() as usize);
        let mut label = vec![usize::MAX; w * h];
        let mut next = 0;
        for start in 0..w * h {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            let mut q = VecDeque::from([start]);
            while let Some(i) = q.pop_front() {
                let (x, y) = (i % w, i / w);
                let mut nbrs = Vec::new();
                if x > 0 {
                    nbrs.push(i - 1);
                }
                if x + 1 < w {
                    nbrs.push(i + 1);
                }
                if y > 0 {
                    nbrs.push(i - w);
                }
                if y + 1 < h {
                    nbrs.push(i + w);
                }
                for j in nbrs {
                    if label[j] == usize::MAX
                        && color_distance(image.pixel_at(i), image.pixel_at(j)) <= tol
                    {
                        label[j] = next;
                        q.push_back(j);
                    }
                }
            }
            next += 1;
        }
        label
    }

    fn halves() -> Image {
        let mut img = Image::filled(32, 32, [0, 0, 0]).unwrap();
        img.fill_rect(16, 0, 32, 32, [255, 255, 255]);
        img
    }

    #[test]
    fn uniform_image_is_one_segment() {
        let img = Image::filled(32, 32, [128, 128, 128]).unwrap();
        for k in [0.5, 10.0, 1000.0] {
            let seg = segment_graph(&img, k, 1).unwrap();
            assert_eq!(seg.count(), 1);
            assert_eq!(seg.segments[0].size, 32 * 32);
            assert_eq!(seg.segments[0].bbox, Region::new(0, 0, 32, 32));
        }
    }

    #[test]
    fn halves_match_component_oracle() {
        let img = halves();
        let seg = segment_graph(&img, 100.0, 10).unwrap();
        let oracle = components_oracle(&img, 100.0);
        assert_eq!(seg.count(), 2);
        let oracle_count = oracle.iter().max().unwrap() + 1;
        assert_eq!(oracle_count, 2);
        for (a, b) in seg.labels.iter().zip(&oracle) {
            assert_eq!(*a as usize, *b);
        }
        assert_eq!(seg.segments[0].bbox, Region::new(0, 0, 16, 32));
        assert_eq!(seg.segments[1].bbox, Region::new(16, 0, 32, 32));
    }

    #[test]
    fn min_size_of_whole_image_forces_single_segment() {
        let img = halves();
        let seg = segment_graph(&img, 100.0, 32 * 32).unwrap();
        assert_eq!(seg.count(), 1);
    }

    #[test]
    fn sizes_sum_to_area_and_respect_min_size() {
        let mut img = Image::filled(24, 20, [0, 0, 0]).unwrap();
        let mut v = 7u32;
        for y in 0..20 {
            for x in 0..24 {
                v = v.wrapping_mul(1103515245).wrapping_add(12345);
                img.set_pixel(x, y, [(v >> 16) as u8, (v >> 8) as u8, v as u8]);
            }
        }
        let seg = segment_graph(&img, 50.0, 15).unwrap();
        let total: usize = seg.segments.iter().map(|s| s.size).sum();
        assert_eq!(total, 24 * 20);
        assert!(seg.segments.iter().all(|s| s.size >= 15));
        assert!(seg.labels.iter().all(|&l| (l as usize) < seg.count()));
        let hist_total: u32 = seg.segments.iter().flat_map(|s| &s.color_hist).sum();
        assert_eq!(hist_total as usize, 3 * 24 * 20);
    }

    #[test]
    fn deterministic() {
        let img = halves();
        assert_eq!(
            segment_graph(&img, 30.0, 5).unwrap(),
            segment_graph(&img, 30.0, 5).unwrap()
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        let img = halves();
        assert!(matches!(segment_graph(&img, 0.0, 5), Err(Error::Config(_))));
        assert!(matches!(segment_graph(&img, 1.0, 0), Err(Error::Config(_))));
    }
}
