//! Dense reconstruction of point samples: piecewise-linear over a Delaunay
//! triangulation, nearest-value extrapolation outside the hull.

use std::collections::VecDeque;

use delaunator::{triangulate, Point};

use crate::encoder::SampleSet;
use crate::error::{Error, Result};
use crate::imagecore::Image;

pub fn interpolate_samples(s: &SampleSet) -> Result<Image> {
    if !s.scheme().is_point() {
        return Err(Error::WrongScheme {
            expected: "grid or fps",
            actual: s.scheme().name(),
        });
    }
    if s.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (w, h, c) = (s.width(), s.height(), s.channels());
    let samples: Vec<_> = s.samples().collect();
    let points: Vec<Point> = samples
        .iter()
        .map(|p| Point {
            x: p.x as f64,
            y: p.y as f64,
        })
        .collect();
    let mut data = vec![0f32; w * h * c];
    let mut known = vec![false; w * h];

    let tri = triangulate(&points);
    for t in tri.triangles.chunks_exact(3) {
        let [a, b, cc] = [t[0], t[1], t[2]];
        let (pa, pb, pc) = (&points[a], &points[b], &points[cc]);
        let area = (pb.x - pa.x) * (pc.y - pa.y) - (pc.x - pa.x) * (pb.y - pa.y);
        if area.abs() < 1e-12 {
            continue;
        }
        let x0 = pa.x.min(pb.x).min(pc.x).max(0.0) as usize;
        let x1 = (pa.x.max(pb.x).max(pc.x) as usize).min(w - 1);
        let y0 = pa.y.min(pb.y).min(pc.y).max(0.0) as usize;
        let y1 = (pa.y.max(pb.y).max(pc.y) as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if known[y * w + x] {
                    continue;
                }
                let (px, py) = (x as f64, y as f64);
                let la = ((pb.x - px) * (pc.y - py) - (pc.x - px) * (pb.y - py)) / area;
                let lb = ((pc.x - px) * (pa.y - py) - (pa.x - px) * (pc.y - py)) / area;
                let lc = 1.0 - la - lb;
                const EPS: f64 = -1e-9;
                if la < EPS || lb < EPS || lc < EPS {
                    continue;
                }
                for ch in 0..c {
                    let v = la * samples[a].value[ch] as f64
                        + lb * samples[b].value[ch] as f64
                        + lc * samples[cc].value[ch] as f64;
                    data[(y * w + x) * c + ch] = v as f32;
                }
                known[y * w + x] = true;
            }
        }
    }
    // Exact at the samples, whatever the rounding above.
    for p in &samples {
        let i = p.y * w + p.x;
        for ch in 0..c {
            data[i * c + ch] = p.value[ch] as f32;
        }
        known[i] = true;
    }

    // Outside the hull: copy the nearest known pixel (breadth-first).
    let mut queue: VecDeque<usize> = (0..w * h).filter(|&i| known[i]).collect();
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize| {
            if !known[j] {
                known[j] = true;
                let (src, dst) = (i * c, j * c);
                for ch in 0..c {
                    data[dst + ch] = data[src + ch];
                }
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
    }
    Image::from_clamped(w, h, c, data)
}
