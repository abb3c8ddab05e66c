use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::cloud::{Candidates, Cloud};
use super::region::Region;
use super::schedule::{QuadMode, QuadratureConfig, MC_MAX_SAMPLES};
use super::window::BoxN;

const LEAF_POINTS: usize = 2048;
const MC_CHUNK: usize = 1 << 16;

/// Midpoint lattice over a box: cell centres `lo + (i + ½)·h` per axis.
#[derive(Debug, Clone)]
pub struct Lattice {
    lo: Vec<f64>,
    h: Vec<f64>,
    counts: Vec<usize>,
}

impl Lattice {
    pub fn new(window: &BoxN, counts: Vec<usize>) -> Self {
        let h = (0..window.dim())
            .map(|i| window.side(i) / counts[i] as f64)
            .collect();
        Lattice {
            lo: window.lo.clone(),
            h,
            counts,
        }
    }

    pub fn uniform(window: &BoxN, res: usize) -> Self {
        Self::new(window, vec![res.max(1); window.dim()])
    }

    /// Keeps `res` points per `2δ` along every axis, and at least `res` per axis.
    pub fn for_radius(window: &BoxN, delta: f64, res: usize) -> Self {
        let counts = (0..window.dim())
            .map(|i| {
                let c = (res as f64 * window.side(i) / (2.0 * delta) - 1e-9).ceil();
                (c.max(res as f64)) as usize
            })
            .collect();
        Self::new(window, counts)
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + (i as f64 + 0.5) * self.h[axis]
    }

    pub fn point(&self, idx: &[usize], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.coord(k, idx[k]);
        }
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for k in 0..self.dim() {
            f = f * self.counts[k] + idx[k];
        }
        f
    }

    pub fn unflatten(&self, mut flat: usize, idx: &mut [usize]) {
        for k in (0..self.dim()).rev() {
            idx[k] = flat % self.counts[k];
            flat /= self.counts[k];
        }
    }

    fn block_bounds(&self, b: &Block) -> (Vec<f64>, Vec<f64>) {
        let lo = (0..self.dim()).map(|k| self.coord(k, b.a[k])).collect();
        let hi = (0..self.dim()).map(|k| self.coord(k, b.b[k] - 1)).collect();
        (lo, hi)
    }

    /// Blocks of at most `LEAF_POINTS` points that survive `prune`, in a fixed order.
    fn leaves<K: Fn(&[f64], &[f64]) -> bool>(&self, keep: &K) -> Vec<Block> {
        let mut out = Vec::new();
        let root = Block {
            a: vec![0; self.dim()],
            b: self.counts.clone(),
        };
        let mut stack = vec![root];
        while let Some(blk) = stack.pop() {
            let (lo, hi) = self.block_bounds(&blk);
            if !keep(&lo, &hi) {
                continue;
            }
            if blk.size() <= LEAF_POINTS {
                out.push(blk);
                continue;
            }
            let ax = (0..self.dim())
                .max_by_key(|&k| (blk.b[k] - blk.a[k], usize::MAX - k))
                .unwrap();
            let mid = (blk.a[ax] + blk.b[ax]) / 2;
            let mut left = blk.clone();
            left.b[ax] = mid;
            let mut right = blk;
            right.a[ax] = mid;
            stack.push(right);
            stack.push(left);
        }
        out
    }

    /// Coordinates of all points accepted by the leaf filters, in lattice order.
    fn collect<K, L, A>(&self, parallel: bool, keep_block: &K, leaf: &L) -> Vec<f64>
    where
        K: Fn(&[f64], &[f64]) -> bool + Sync,
        L: Fn(&[f64], &[f64]) -> A + Sync,
        A: Fn(&[f64]) -> bool,
    {
        let leaves = self.leaves(keep_block);
        let run = |blk: &Block| -> Vec<f64> {
            let (lo, hi) = self.block_bounds(blk);
            let accept = leaf(&lo, &hi);
            let mut out = Vec::new();
            let mut y = vec![0.0; self.dim()];
            blk.for_each(|idx| {
                self.point(idx, &mut y);
                if accept(&y) {
                    out.extend_from_slice(&y);
                }
            });
            out
        };
        let parts: Vec<Vec<f64>> = if parallel {
            leaves.par_iter().map(run).collect()
        } else {
            leaves.iter().map(run).collect()
        };
        parts.concat()
    }
}

#[derive(Debug, Clone)]
struct Block {
    a: Vec<usize>,
    b: Vec<usize>,
}

impl Block {
    fn size(&self) -> usize {
        self.a.iter().zip(&self.b).map(|(a, b)| b - a).product()
    }

    fn for_each(&self, mut f: impl FnMut(&[usize])) {
        if self.size() == 0 {
            return;
        }
        let n = self.a.len();
        let mut idx = self.a.clone();
        loop {
            f(&idx);
            let mut k = n;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < self.b[k] {
                    break;
                }
                idx[k] = self.a[k];
            }
        }
    }
}

/// Shrinking neighbourhood whose lattice points are collected.
#[derive(Clone, Copy)]
pub enum Target<'a> {
    /// `B_δ(center)`
    Ball { center: &'a [f64], delta: f64 },
    /// `{y : dist(y, C) < δ}`, with `base` set when `C` has interior.
    Near {
        cloud: &'a Cloud,
        base: Option<&'a Region>,
        delta: f64,
    },
}

impl<'a> Target<'a> {
    pub fn delta(&self) -> f64 {
        match self {
            Target::Ball { delta, .. } | Target::Near { delta, .. } => *delta,
        }
    }

    pub fn window(&self) -> BoxN {
        match self {
            Target::Ball { center, delta } => BoxN::cube(center, *delta),
            Target::Near { cloud, base, delta } => {
                let b = match base {
                    Some(r) => cloud.bbox().hull(&r.bbox),
                    None => cloud.bbox().clone(),
                };
                b.inflate(*delta)
            }
        }
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        match self {
            Target::Ball { center, delta } => {
                let mut s = 0.0;
                for i in 0..y.len() {
                    let d = y[i] - center[i];
                    s += d * d;
                }
                s < delta * delta
            }
            Target::Near { cloud, base, delta } => {
                base.is_some_and(|r| r.contains(y)) || cloud.within(y, *delta)
            }
        }
    }

    fn block_may_hit(&self, lo: &[f64], hi: &[f64]) -> bool {
        let b = BoxN {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        };
        match self {
            Target::Ball { center, delta } => b.dist2_to(center) < delta * delta,
            Target::Near { cloud, base, delta } => {
                if base.is_some_and(|r| r.clip(&b.inflate(1e-12)).is_some()) {
                    return true;
                }
                let c = b.center();
                let r = 0.5 * (0..b.dim()).map(|i| b.side(i).powi(2)).sum::<f64>().sqrt();
                cloud.vertex_distance(&c) < r + delta + cloud.spacing()
            }
        }
    }

    fn leaf_filter(&self, lo: &[f64], hi: &[f64]) -> LeafFilter<'a> {
        match *self {
            Target::Ball { center, delta } => LeafFilter::Ball {
                center,
                delta2: delta * delta,
            },
            Target::Near { cloud, base, delta } => {
                let b = BoxN {
                    lo: lo.to_vec(),
                    hi: hi.to_vec(),
                };
                let c = b.center();
                let r = 0.5 * (0..b.dim()).map(|i| b.side(i).powi(2)).sum::<f64>().sqrt();
                LeafFilter::Near {
                    cloud,
                    base,
                    cand: cloud.candidates(&c, r + delta + cloud.spacing()),
                    delta2: delta * delta,
                }
            }
        }
    }
}

enum LeafFilter<'a> {
    Ball {
        center: &'a [f64],
        delta2: f64,
    },
    Near {
        cloud: &'a Cloud,
        base: Option<&'a Region>,
        cand: Candidates,
        delta2: f64,
    },
}

impl LeafFilter<'_> {
    #[inline]
    fn accept(&self, y: &[f64]) -> bool {
        match self {
            LeafFilter::Ball { center, delta2 } => {
                let mut s = 0.0;
                for i in 0..y.len() {
                    let d = y[i] - center[i];
                    s += d * d;
                }
                s < *delta2
            }
            LeafFilter::Near {
                cloud,
                base,
                cand,
                delta2,
            } => base.is_some_and(|r| r.contains(y)) || cloud.within_candidates(cand, y, *delta2),
        }
    }
}

/// Sample points with a common quadrature weight.
#[derive(Debug, Clone)]
pub struct PointSet {
    pub dim: usize,
    pub coords: Vec<f64>,
    /// Volume represented by each point.
    pub weight: f64,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn measure(&self) -> f64 {
        self.len() as f64 * self.weight
    }

    /// Field values in point order; evaluation may run in parallel, the order never changes.
    pub fn values(&self, f: &(dyn Fn(&[f64]) -> f64 + Sync), parallel: bool) -> Vec<f64> {
        if parallel && self.len() > 4096 {
            self.coords.par_chunks_exact(self.dim).map(f).collect()
        } else {
            self.coords.chunks_exact(self.dim).map(f).collect()
        }
    }

    pub fn count(&self, pred: &(dyn Fn(&[f64]) -> bool + Sync), parallel: bool) -> usize {
        if parallel && self.len() > 4096 {
            self.coords
                .par_chunks_exact(self.dim)
                .filter(|y| pred(y))
                .count()
        } else {
            self.coords
                .chunks_exact(self.dim)
                .filter(|y| pred(y))
                .count()
        }
    }

    pub fn filter(&self, pred: &(dyn Fn(&[f64]) -> bool + Sync)) -> PointSet {
        let mut coords = Vec::new();
        for y in self.iter() {
            if pred(y) {
                coords.extend_from_slice(y);
            }
        }
        PointSet {
            dim: self.dim,
            coords,
            weight: self.weight,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic stream identifier for a purpose tag and level.
pub fn stream_id(tag: &str, level: usize) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in tag.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(h ^ (level as u64).wrapping_mul(0x9e37_79b9))
}

fn mc_points(window: &BoxN, n: usize, seed: u64, stream: u64, parallel: bool) -> Vec<Vec<f64>> {
    let chunks = n.div_ceil(MC_CHUNK);
    let gen = |c: usize| -> Vec<f64> {
        let mut rng =
            ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(stream ^ splitmix(c as u64))));
        let m = MC_CHUNK.min(n - c * MC_CHUNK);
        let d = window.dim();
        let mut out = Vec::with_capacity(m * d);
        for _ in 0..m {
            for k in 0..d {
                out.push(window.lo[k] + rng.gen::<f64>() * window.side(k));
            }
        }
        out
    };
    if parallel {
        (0..chunks).into_par_iter().map(gen).collect()
    } else {
        (0..chunks).map(gen).collect()
    }
}

fn mc_count(dim: usize, res: usize) -> usize {
    let mut n = 1usize;
    for _ in 0..dim {
        n = n.saturating_mul(res);
    }
    n.clamp(1, MC_MAX_SAMPLES)
}

/// Points of `target ∩ omega` for one radius.
pub fn sample_target(
    target: &Target,
    omega: &Region,
    stream: u64,
    cfg: &QuadratureConfig,
) -> PointSet {
    let dim = omega.dim;
    let empty = PointSet {
        dim,
        coords: Vec::new(),
        weight: 0.0,
    };
    let Some(window) = omega.clip(&target.window()) else {
        return empty;
    };
    match cfg.mode {
        QuadMode::Grid => {
            let lat = Lattice::for_radius(&window, target.delta(), cfg.resolution);
            let keep = |lo: &[f64], hi: &[f64]| target.block_may_hit(lo, hi);
            let leaf = |lo: &[f64], hi: &[f64]| {
                let f = target.leaf_filter(lo, hi);
                move |y: &[f64]| f.accept(y) && omega.contains(y)
            };
            let coords = lat.collect(cfg.parallel, &keep, &leaf);
            PointSet {
                dim,
                coords,
                weight: lat.cell_volume(),
            }
        }
        QuadMode::MonteCarlo => {
            let n = mc_count(dim, cfg.resolution);
            let chunks = mc_points(&window, n, cfg.seed, stream, cfg.parallel);
            let mut coords = Vec::new();
            for ch in chunks {
                for y in ch.chunks_exact(dim) {
                    if target.contains(y) && omega.contains(y) {
                        coords.extend_from_slice(y);
                    }
                }
            }
            PointSet {
                dim,
                coords,
                weight: window.volume() / n as f64,
            }
        }
    }
}

/// Number of accepted samples, total samples, and per-sample volume for `region ∩ window`.
pub fn count_in_window(
    region: &Region,
    window: &BoxN,
    cfg: &QuadratureConfig,
) -> (usize, usize, f64) {
    match cfg.mode {
        QuadMode::Grid => {
            let lat = Lattice::uniform(window, cfg.resolution);
            let total: usize = lat.counts().iter().product();
            let keep = |_: &[f64], _: &[f64]| true;
            let leaf = |_: &[f64], _: &[f64]| |y: &[f64]| region.contains(y);
            let pts = lat.collect(cfg.parallel, &keep, &leaf);
            (pts.len() / window.dim(), total, lat.cell_volume())
        }
        QuadMode::MonteCarlo => {
            let n = mc_count(window.dim(), cfg.resolution);
            let chunks = mc_points(window, n, cfg.seed, stream_id("lebesgue", 0), cfg.parallel);
            let hits = chunks
                .iter()
                .map(|ch| {
                    ch.chunks_exact(window.dim())
                        .filter(|y| region.contains(y))
                        .count()
                })
                .sum();
            (hits, n, window.volume() / n as f64)
        }
    }
}
