//! Low-discrepancy points and direction sets.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::measure::stream_id;

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut r) = (inv, 0.0);
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// Halton sequence in `[0,1)^dim` with a seeded Cranley-Patterson rotation.
pub struct Halton {
    dim: usize,
    shift: Vec<f64>,
    next: u64,
}

impl Halton {
    pub fn new(dim: usize, seed: u64, tag: &str) -> Self {
        assert!(
            dim <= PRIMES.len(),
            "Halton dimension above {}",
            PRIMES.len()
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream_id(tag, dim));
        let shift = (0..dim).map(|_| rng.gen::<f64>()).collect();
        Halton {
            dim,
            shift,
            next: 1,
        }
    }

    pub fn unshifted(dim: usize) -> Self {
        Halton {
            dim,
            shift: vec![0.0; dim],
            next: 1,
        }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let i = self.next;
        self.next += 1;
        (0..self.dim)
            .map(|k| (radical_inverse(i, PRIMES[k]) + self.shift[k]).fract())
            .collect()
    }
}

/// `count` points in the open unit ball of `R^dim`, each with `extra` trailing
/// coordinates in `[0,1)` (used for step lengths).
pub fn ball_points(dim: usize, extra: usize, count: usize, seed: u64, tag: &str) -> Vec<Vec<f64>> {
    let mut h = Halton::new(dim + extra, seed, tag);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut u = h.next_point();
        for v in u.iter_mut().take(dim) {
            *v = 2.0 * *v - 1.0;
        }
        let r2: f64 = u[..dim].iter().map(|v| v * v).sum();
        if r2 < 1.0 {
            out.push(u);
        }
    }
    out
}

/// Evenly spread unit vectors: equal angles in 2D, a Fibonacci lattice in 3D,
/// Halton points pushed to the sphere otherwise.
pub fn sphere_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|j| {
                let th = TAU * j as f64 / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|j| {
                    let z = 1.0 - (2.0 * j as f64 + 1.0) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let th = golden * j as f64;
                    vec![r * th.cos(), r * th.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut h = Halton::unshifted(dim);
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let u: Vec<f64> = h.next_point().iter().map(|v| 2.0 * v - 1.0).collect();
                let r: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r < 1.0 && r > 1e-3 {
                    out.push(u.iter().map(|v| v / r).collect());
                }
            }
            out
        }
    }
}

/// The `2·dim` signed axis directions followed by `extra` seeded sphere points.
pub fn probe_directions(dim: usize, extra: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * dim + extra);
    for k in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[k] = s;
            out.push(e);
        }
    }
    if dim == 1 {
        return out;
    }
    let mut h = Halton::new(dim, seed, "probe");
    while out.len() < 2 * dim + extra {
        let u: Vec<f64> = h.next_point().iter().map(|v| 2.0 * v - 1.0).collect();
        let r: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r < 1.0 && r > 1e-3 {
            out.push(u.iter().map(|v| v / r).collect());
        }
    }
    out
}
