//! Non-local cost aggregation over a minimum spanning tree of the guide.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::costvolume::{CostVolume, VolumeKind};
use crate::error::{Error, Result};
use crate::imagecore::Image;

/// Default tree-distance scale, on the [0, 255] intensity axis.
pub const DEFAULT_SIGMA_TREE: f32 = 25.5;

/// Minimum spanning tree of the 4-connected pixel grid, rooted at pixel 0.
#[derive(Debug, Clone)]
pub struct SpanningTree {
    width: usize,
    height: usize,
    /// Nodes in breadth-first order from the root.
    order: Vec<u32>,
    /// Parent of each node (the root is its own parent).
    parent: Vec<u32>,
    /// Weight of the edge to the parent (0 for the root).
    parent_weight: Vec<u8>,
}

fn edge_weight(guide: &Image, p: (usize, usize), q: (usize, usize)) -> u8 {
    let a = guide.pixel(p.0, p.1);
    let b = guide.pixel(q.0, q.1);
    let d = a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0f32, f32::max);
    d.round().min(255.0) as u8
}

struct DisjointSet {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if self.rank[ra as usize] < self.rank[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[lo as usize] = hi;
        if self.rank[lo as usize] == self.rank[hi as usize] {
            self.rank[hi as usize] += 1;
        }
        true
    }
}

impl SpanningTree {
    /// Kruskal over integer edge weights `|guide(p) - guide(q)|` (max over
    /// channels, rounded), bucketed by a counting sort. Edges of equal
    /// weight keep raster order: row, column, then right before down.
    pub fn build(guide: &Image) -> Self {
        let (w, h) = (guide.width(), guide.height());
        let n = w * h;
        let mut edges: Vec<(u32, u32, u8)> = Vec::with_capacity(2 * n);
        for y in 0..h {
            for x in 0..w {
                let p = (y * w + x) as u32;
                if x + 1 < w {
                    edges.push((p, p + 1, edge_weight(guide, (x, y), (x + 1, y))));
                }
                if y + 1 < h {
                    edges.push((p, p + w as u32, edge_weight(guide, (x, y), (x, y + 1))));
                }
            }
        }
        let mut counts = [0usize; 257];
        for e in &edges {
            counts[e.2 as usize + 1] += 1;
        }
        for i in 1..257 {
            counts[i] += counts[i - 1];
        }
        let mut sorted = vec![(0u32, 0u32, 0u8); edges.len()];
        for e in edges {
            let slot = &mut counts[e.2 as usize];
            sorted[*slot] = e;
            *slot += 1;
        }

        let mut sets = DisjointSet::new(n);
        let mut adjacency: Vec<Vec<(u32, u8)>> = vec![Vec::new(); n];
        let mut taken = 0;
        for (a, b, wt) in sorted {
            if sets.union(a, b) {
                adjacency[a as usize].push((b, wt));
                adjacency[b as usize].push((a, wt));
                taken += 1;
                if taken + 1 == n {
                    break;
                }
            }
        }

        let mut order = Vec::with_capacity(n);
        let mut parent = vec![0u32; n];
        let mut parent_weight = vec![0u8; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0u32]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &(u, wt) in &adjacency[v as usize] {
                if !seen[u as usize] {
                    seen[u as usize] = true;
                    parent[u as usize] = v;
                    parent_weight[u as usize] = wt;
                    queue.push_back(u);
                }
            }
        }
        SpanningTree {
            width: w,
            height: h,
            order,
            parent,
            parent_weight,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn parent(&self, v: usize) -> usize {
        self.parent[v] as usize
    }

    pub fn parent_weight(&self, v: usize) -> u8 {
        self.parent_weight[v]
    }

    /// Sum of edge weights of the tree.
    pub fn total_weight(&self) -> u64 {
        self.parent_weight.iter().map(|&w| w as u64).sum()
    }

    /// `out(p) = sum_q S(p, q) * values(q)` with `S = exp(-dist / sigma)`,
    /// computed by the leaf-to-root and root-to-leaf passes.
    fn filter(&self, values: &mut [f64], factor: &[f64], up: &mut [f64]) {
        up.copy_from_slice(values);
        for &v in self.order.iter().skip(1).rev() {
            let v = v as usize;
            let p = self.parent[v] as usize;
            up[p] += factor[v] * up[v];
        }
        let root = self.order[0] as usize;
        values[root] = up[root];
        for &v in self.order.iter().skip(1) {
            let v = v as usize;
            let p = self.parent[v] as usize;
            let s = factor[v];
            values[v] = s * values[p] + (1.0 - s * s) * up[v];
        }
    }
}

/// Tree aggregation of every layer, normalized by the aggregated occupancy so
/// constant layers are fixed points and unoccupied entries carry no weight.
pub fn aggregate(v: &CostVolume, guide: &Image, sigma_tree: f32) -> Result<CostVolume> {
    if guide.width() != v.width() || guide.height() != v.height() {
        return Err(Error::dims(format!(
            "guide is {}x{}, volume is {}x{}",
            guide.width(),
            guide.height(),
            v.width(),
            v.height()
        )));
    }
    let tree = SpanningTree::build(guide);
    aggregate_with_tree(v, &tree, sigma_tree)
}

pub fn aggregate_with_tree(v: &CostVolume, tree: &SpanningTree, sigma_tree: f32) -> Result<CostVolume> {
    if v.kind() != VolumeKind::Dense {
        return Err(Error::param("aggregation needs a dense (densified) volume"));
    }
    if !(sigma_tree > 0.0 && sigma_tree.is_finite()) {
        return Err(Error::param(format!("sigma_tree must be positive, got {sigma_tree}")));
    }
    if tree.width != v.width() || tree.height != v.height() {
        return Err(Error::dims("tree and volume differ in size"));
    }
    let n = v.layer_len();
    let factor: Vec<f64> = tree
        .parent_weight
        .iter()
        .map(|&w| (-(w as f64) / sigma_tree as f64).exp())
        .collect();
    let mut costs = vec![0f32; v.costs().len()];
    let mut occupancy = vec![false; v.costs().len()];
    costs
        .par_chunks_mut(n)
        .zip(occupancy.par_chunks_mut(n))
        .enumerate()
        .for_each(|(d, (out, occ))| {
            let layer = v.layer(d);
            let present = v.occupancy_layer(d);
            let mut num: Vec<f64> = layer
                .iter()
                .zip(present)
                .map(|(&c, &o)| if o { c as f64 } else { 0.0 })
                .collect();
            let mut den: Vec<f64> = present.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect();
            let mut scratch = vec![0f64; n];
            tree.filter(&mut num, &factor, &mut scratch);
            tree.filter(&mut den, &factor, &mut scratch);
            for i in 0..n {
                if den[i] > 0.0 {
                    out[i] = (num[i] / den[i]).max(0.0) as f32;
                    occ[i] = true;
                }
            }
        });
    CostVolume::from_parts(v.width(), v.height(), v.dmax(), VolumeKind::Dense, costs, occupancy)
}
