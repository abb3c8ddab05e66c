use kdtree::distance::squared_euclidean;
use kdtree::KdTree;

use super::lattice::Lattice;
use super::region::Region;
use super::window::BoxN;
use crate::error::{Error, Result};

/// Sample of a set used for distance queries: vertices plus the segments of
/// ordered chains, so that curves are measured exactly between samples.
pub struct Cloud {
    dim: usize,
    points: Vec<f64>,
    segs: Vec<[u32; 2]>,
    adj: Vec<Vec<u32>>,
    tree: KdTree<f64, u32, Vec<f64>>,
    spacing: f64,
    bbox: BoxN,
}

/// Candidate primitives near a block of query points.
pub(crate) struct Candidates {
    pub isolated: Vec<u32>,
    pub segs: Vec<u32>,
}

#[inline]
fn d2_point(y: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        let d = y[i] - p[i];
        s += d * d;
    }
    s
}

#[inline]
fn d2_segment(y: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..y.len() {
        let e = b[i] - a[i];
        num += (y[i] - a[i]) * e;
        den += e * e;
    }
    let t = if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        0.0
    };
    if t == 0.0 {
        return d2_point(y, a);
    }
    if t == 1.0 {
        return d2_point(y, b);
    }
    let mut s = 0.0;
    for i in 0..y.len() {
        let d = y[i] - (a[i] + t * (b[i] - a[i]));
        s += d * d;
    }
    s
}

impl Cloud {
    fn build(dim: usize, chains: Vec<(Vec<Vec<f64>>, bool)>, spacing: f64) -> Result<Self> {
        let mut points = Vec::new();
        let mut segs = Vec::new();
        let mut tree = KdTree::new(dim);
        let mut all = Vec::new();
        for (chain, closed) in chains {
            let base = (points.len() / dim) as u32;
            let m = chain.len() as u32;
            for p in chain {
                if p.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: p.len(),
                    });
                }
                points.extend_from_slice(&p);
                all.push(p);
            }
            for i in 0..m.saturating_sub(1) {
                segs.push([base + i, base + i + 1]);
            }
            if closed && m > 2 {
                segs.push([base + m - 1, base]);
            }
        }
        if all.is_empty() {
            return Err(Error::EmptyRegion("empty cloud".into()));
        }
        let bbox = BoxN::bounding(&all).expect("non-empty");
        let mut adj = vec![Vec::new(); all.len()];
        for (k, s) in segs.iter().enumerate() {
            adj[s[0] as usize].push(k as u32);
            adj[s[1] as usize].push(k as u32);
        }
        for (i, p) in all.into_iter().enumerate() {
            tree.add(p, i as u32)
                .map_err(|e| Error::InvalidArgument(format!("cloud point rejected: {e:?}")))?;
        }
        Ok(Cloud {
            dim,
            points,
            segs,
            adj,
            tree,
            spacing,
            bbox,
        })
    }

    /// Cloud of `c`: generator samples for declared null sets, otherwise the
    /// boundary layer of a rejection-sampling lattice over `c.bbox`, refined
    /// up to `probe_resolution` points per axis.
    pub fn for_region(c: &Region, spacing: f64, probe_resolution: usize) -> Result<Self> {
        if let Some(ns) = c.null_geometry() {
            let chains = ns
                .chains(spacing)?
                .into_iter()
                .map(|ch| (ch.points, ch.closed))
                .collect();
            return Cloud::build(c.dim, chains, spacing);
        }
        let n = c.dim;
        let mut res = 16usize;
        loop {
            let lat = Lattice::uniform(&c.bbox, res);
            let counts = lat.counts().to_vec();
            let total: usize = counts.iter().product();
            let mut inside = vec![false; total];
            let mut idx = vec![0usize; n];
            let mut y = vec![0.0; n];
            for (flat, slot) in inside.iter_mut().enumerate() {
                lat.unflatten(flat, &mut idx);
                lat.point(&idx, &mut y);
                *slot = c.contains(&y);
            }
            if inside.iter().any(|&b| b) {
                let mut chains = Vec::new();
                for flat in 0..total {
                    if !inside[flat] {
                        continue;
                    }
                    lat.unflatten(flat, &mut idx);
                    let mut edge = false;
                    for ax in 0..n {
                        for step in [-1i64, 1] {
                            let j = idx[ax] as i64 + step;
                            if j < 0 || j >= counts[ax] as i64 {
                                edge = true;
                            } else {
                                let mut nb = idx.clone();
                                nb[ax] = j as usize;
                                edge |= !inside[lat.flatten(&nb)];
                            }
                        }
                    }
                    if edge {
                        lat.point(&idx, &mut y);
                        chains.push((vec![y.clone()], false));
                    }
                }
                let h = lat.spacing().iter().cloned().fold(0.0, f64::max);
                return Cloud::build(n, chains, h);
            }
            let next = res * 2;
            if next > probe_resolution || next.pow(n as u32) > 1 << 24 {
                return Err(Error::EmptyRegion(c.label.clone()));
            }
            res = next;
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn bbox(&self) -> &BoxN {
        &self.bbox
    }

    fn pt(&self, i: u32) -> &[f64] {
        let i = i as usize;
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Distance from `y` to the nearest vertex.
    pub fn vertex_distance(&self, y: &[f64]) -> f64 {
        self.tree
            .nearest(y, 1, &squared_euclidean)
            .ok()
            .and_then(|v| v.first().map(|(d, _)| d.sqrt()))
            .unwrap_or(f64::INFINITY)
    }

    pub(crate) fn candidates(&self, center: &[f64], radius: f64) -> Candidates {
        let near = self
            .tree
            .within(center, radius * radius, &squared_euclidean)
            .unwrap_or_default();
        let mut isolated = Vec::new();
        let mut segs = Vec::new();
        for (_, &i) in near {
            let a = &self.adj[i as usize];
            if a.is_empty() {
                isolated.push(i);
            } else {
                segs.extend_from_slice(a);
            }
        }
        isolated.sort_unstable();
        segs.sort_unstable();
        segs.dedup();
        Candidates { isolated, segs }
    }

    #[inline]
    pub(crate) fn within_candidates(&self, cand: &Candidates, y: &[f64], delta2: f64) -> bool {
        for &i in &cand.isolated {
            if d2_point(y, self.pt(i)) < delta2 {
                return true;
            }
        }
        for &k in &cand.segs {
            let [a, b] = self.segs[k as usize];
            if d2_segment(y, self.pt(a), self.pt(b)) < delta2 {
                return true;
            }
        }
        false
    }

    fn min_candidates(&self, cand: &Candidates, y: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for &i in &cand.isolated {
            best = best.min(d2_point(y, self.pt(i)));
        }
        for &k in &cand.segs {
            let [a, b] = self.segs[k as usize];
            best = best.min(d2_segment(y, self.pt(a), self.pt(b)));
        }
        best
    }

    /// Distance from `y` to the sampled set (vertices and chain segments).
    pub fn distance(&self, y: &[f64]) -> f64 {
        let d0 = self.vertex_distance(y);
        let cand = self.candidates(y, d0 + self.spacing * (1.0 + 1e-9) + 1e-300);
        self.min_candidates(&cand, y).sqrt().min(d0)
    }

    pub fn within(&self, y: &[f64], delta: f64) -> bool {
        let d0 = self.vertex_distance(y);
        if d0 >= delta + self.spacing {
            return false;
        }
        let cand = self.candidates(y, d0 + self.spacing * (1.0 + 1e-9));
        self.within_candidates(&cand, y, delta * delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::nullset::NullSet;

    #[test]
    fn segment_distance_is_exact_between_samples() {
        let seg = Region::null_set(NullSet::Segment {
            a: vec![0.0, 0.0],
            b: vec![1.0, 0.0],
        })
        .unwrap();
        let c = Cloud::for_region(&seg, 0.1, 64).unwrap();
        assert_eq!(c.len(), 11);
        assert!((c.distance(&[0.55, 0.02]) - 0.02).abs() < 1e-15);
        assert!((c.distance(&[1.3, 0.4]) - 0.5).abs() < 1e-12);
        assert!(c.within(&[0.55, 0.02], 0.021));
        assert!(!c.within(&[0.55, 0.02], 0.019));
    }

    #[test]
    fn rejection_sampling_finds_full_sets() {
        let disk = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
        let c = Cloud::for_region(&disk, 1e-3, 256).unwrap();
        assert!((c.distance(&[2.0, 0.0]) - 1.0).abs() < 0.1);
        let sliver = Region::custom(2, BoxN::cube(&[0.0, 0.0], 1.0), "empty", |_| false).unwrap();
        assert!(matches!(
            Cloud::for_region(&sliver, 1e-3, 128),
            Err(Error::EmptyRegion(_))
        ));
    }
}
