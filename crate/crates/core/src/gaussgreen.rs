//! Gauss-Green checks with the interior normal field `ν = −∇ dist_∂Ω`.
//!
//! The volume side `∫ f div φ + φ·∇f` is a midpoint lattice sum with
//! finite-difference derivatives. The boundary side never evaluates traces:
//! each boundary quadrature node is moved a distance `ε` into the domain and
//! `f φ·ν` is evaluated there, with `ν` taken from the sampled boundary
//! distance. The offset bias is first order in `ε`; by default the layers at
//! `ε` and `2ε` are combined as `2 I(ε) − I(2ε)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::EstimatorConfig;
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::measure::{count_in_window, Cloud, DeltaSchedule, Lattice, Region};
use crate::representative::mean_limit;

/// Distance to a declared boundary and its negated gradient.
pub struct BoundaryDistance {
    cloud: Cloud,
    step: f64,
}

impl BoundaryDistance {
    pub fn new(omega: &Region, spacing: f64, step: f64) -> Result<Self> {
        let boundary = omega
            .boundary
            .clone()
            .ok_or_else(|| Error::NonLipschitzDomain(omega.label.clone()))?;
        let cloud = Cloud::for_region(&Region::null_set(boundary)?, spacing, 2)?;
        Ok(BoundaryDistance { cloud, step })
    }

    pub fn distance(&self, y: &[f64]) -> f64 {
        self.cloud.distance(y)
    }

    /// `−∇ dist_∂Ω(y)` by central differences, normalized.
    pub fn normal(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = y.len();
        let mut g = vec![0.0; n];
        let mut z = y.to_vec();
        for i in 0..n {
            z[i] = y[i] + self.step;
            let up = self.distance(&z);
            z[i] = y[i] - self.step;
            let down = self.distance(&z);
            z[i] = y[i];
            g[i] = -(up - down) / (2.0 * self.step);
        }
        let norm = g.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm >= 0.5) {
            return Err(Error::AmbiguousNormal {
                point: y.to_vec(),
                norm,
            });
        }
        Ok(g.into_iter().map(|c| c / norm).collect())
    }
}

fn grid_h(omega: &Region, resolution: usize) -> f64 {
    omega.bbox.max_side() / resolution as f64
}

fn distance_for(omega: &Region, cfg: &EstimatorConfig, h: f64) -> Result<BoundaryDistance> {
    let gg = &cfg.gauss_green;
    BoundaryDistance::new(
        omega,
        gg.boundary_spacing_factor * h,
        gg.normal_step_factor * h,
    )
}

/// Normal field `ν^Ω(y) = −∇ dist_∂Ω(y)` at an interior point.
pub fn normal_field(omega: &Region, y: &[f64], cfg: &EstimatorConfig) -> Result<Vec<f64>> {
    omega.check_dim(y.len())?;
    if !omega.contains(y) {
        return Err(Error::InvalidArgument(format!(
            "{y:?} is not in {}",
            omega.label
        )));
    }
    let h = grid_h(omega, cfg.gauss_green.resolution);
    distance_for(omega, cfg, h)?.normal(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GGReport {
    /// `∫_Ω f div φ + φ·∇f`
    pub lhs: f64,
    /// Boundary term from the inner layer.
    pub rhs: f64,
    pub residual: f64,
    pub grid_h: f64,
    pub boundary_offset: f64,
    pub boundary_spacing: f64,
    pub normal_step: f64,
    pub extrapolated: bool,
    pub lattice_points: usize,
    pub boundary_nodes: usize,
    pub components: Vec<ComponentReport>,
}

/// Derivative of `g` along axis `i` at `y`, using central differences when
/// the stencil stays in `part` and one-sided second-order differences otherwise.
fn partial(g: &ScalarField, part: &Region, y: &[f64], i: usize, s: f64) -> f64 {
    let at = |t: f64| {
        let mut z = y.to_vec();
        z[i] += t;
        z
    };
    let inside = |t: f64| part.contains(&at(t));
    if inside(s) && inside(-s) {
        return (g.value(&at(s)) - g.value(&at(-s))) / (2.0 * s);
    }
    for dir in [1.0, -1.0] {
        if inside(dir * s) && inside(2.0 * dir * s) {
            return dir
                * (-3.0 * g.value(y) + 4.0 * g.value(&at(dir * s)) - g.value(&at(2.0 * dir * s)))
                / (2.0 * s);
        }
    }
    for dir in [1.0, -1.0] {
        if inside(dir * s) {
            return dir * (g.value(&at(dir * s)) - g.value(y)) / s;
        }
    }
    (g.value(&at(s)) - g.value(&at(-s))) / (2.0 * s)
}

fn volume_term(
    f: &ScalarField,
    phi: &VectorField,
    part: &Region,
    h: f64,
    parallel: bool,
) -> (f64, usize) {
    let n = part.dim;
    let bbox = &part.bbox;
    let counts: Vec<usize> = (0..n)
        .map(|i| ((bbox.side(i) / h).round() as usize).max(1))
        .collect();
    let lat = Lattice::new(bbox, counts.clone());
    let s = 0.25 * lat.spacing().iter().cloned().fold(f64::INFINITY, f64::min);
    let rows: usize = counts[1..].iter().product();
    let row = |r: usize| -> (f64, usize) {
        let mut idx = vec![0usize; n];
        let mut rest = r;
        for (k, c) in counts.iter().enumerate().skip(1) {
            idx[k] = rest % c;
            rest /= c;
        }
        let mut y = vec![0.0; n];
        let (mut sum, mut m) = (0.0, 0);
        for i0 in 0..counts[0] {
            idx[0] = i0;
            lat.point(&idx, &mut y);
            if !part.contains(&y) {
                continue;
            }
            let fv = f.value(&y);
            let mut acc = 0.0;
            for i in 0..n {
                let pi = &phi.components[i];
                acc += fv * partial(pi, part, &y, i, s) + pi.value(&y) * partial(f, part, &y, i, s);
            }
            sum += acc;
            m += 1;
        }
        (sum, m)
    };
    let parts: Vec<(f64, usize)> = if parallel {
        (0..rows).into_par_iter().map(row).collect()
    } else {
        (0..rows).map(row).collect()
    };
    let (sum, m) = parts
        .into_iter()
        .fold((0.0, 0), |(a, b), (c, d)| (a + c, b + d));
    (sum * lat.cell_volume(), m)
}

fn layer_term(
    f: &ScalarField,
    phi: &VectorField,
    part: &Region,
    dist: &BoundaryDistance,
    spacing: f64,
    eps: f64,
) -> Result<(f64, usize)> {
    let boundary = part
        .boundary
        .as_ref()
        .ok_or_else(|| Error::NonLipschitzDomain(part.label.clone()))?;
    let nodes = boundary.arc_quadrature(spacing)?;
    let mut total = 0.0;
    let mut pv = vec![0.0; part.dim];
    for node in &nodes {
        let t = &node.tangent;
        let perp = [-t[1], t[0]];
        let shift = |sign: f64| -> Vec<f64> {
            node.point
                .iter()
                .zip(perp)
                .map(|(p, q)| p + sign * eps * q)
                .collect()
        };
        let q = match (part.contains(&shift(1.0)), part.contains(&shift(-1.0))) {
            (true, false) => shift(1.0),
            (false, true) => shift(-1.0),
            _ => continue,
        };
        let nu = dist.normal(&q)?;
        phi.value(&q, &mut pv);
        let flux: f64 = pv.iter().zip(&nu).map(|(a, b)| a * b).sum();
        total += node.weight * f.value(&q) * flux;
    }
    Ok((total, nodes.len()))
}

/// Both sides of `∫_Ω f div φ + ∫_Ω φ·Df = ∫ f φ·ν^Ω` on a flagged planar domain.
pub fn gg_residual(
    f: &ScalarField,
    phi: &VectorField,
    omega: &Region,
    cfg: &EstimatorConfig,
) -> Result<GGReport> {
    let gg = &cfg.gauss_green;
    if !omega.lipschitz || omega.boundary.is_none() {
        return Err(Error::NonLipschitzDomain(omega.label.clone()));
    }
    if omega.dim != 2 {
        return Err(Error::InvalidArgument(
            "boundary layers are implemented for planar domains".into(),
        ));
    }
    f.check_dim(2)?;
    if phi.dim != 2 || phi.out_dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: phi.out_dim(),
        });
    }
    if gg.resolution < 4 || !(gg.offset_factor > 0.0) {
        return Err(Error::InvalidArgument(
            "Gauss-Green resolution or offset out of range".into(),
        ));
    }
    let h = grid_h(omega, gg.resolution);
    let eps = gg.offset_factor * h;
    let spacing = gg.boundary_spacing_factor * h;
    let dist = distance_for(omega, cfg, h)?;
    let mut components = Vec::new();
    let (mut lhs, mut rhs, mut lattice_points, mut boundary_nodes) = (0.0, 0.0, 0, 0);
    for part in omega.components() {
        let (l, m) = volume_term(f, phi, &part, h, cfg.quad.parallel);
        let (r1, nb) = layer_term(f, phi, &part, &dist, spacing, eps)?;
        let r = if gg.extrapolate {
            let (r2, _) = layer_term(f, phi, &part, &dist, spacing, 2.0 * eps)?;
            2.0 * r1 - r2
        } else {
            r1
        };
        components.push(ComponentReport {
            label: part.label.clone(),
            lhs: l,
            rhs: r,
            residual: (l - r).abs(),
        });
        lhs += l;
        rhs += r;
        lattice_points += m;
        boundary_nodes += nb;
    }
    Ok(GGReport {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        grid_h: h,
        boundary_offset: eps,
        boundary_spacing: spacing,
        normal_step: gg.normal_step_factor * h,
        extrapolated: gg.extrapolate,
        lattice_points,
        boundary_nodes,
        components,
    })
}

/// `gg_residual` at each lattice resolution.
pub fn gg_sweep(
    f: &ScalarField,
    phi: &VectorField,
    omega: &Region,
    cfg: &EstimatorConfig,
    resolutions: &[usize],
) -> Result<Vec<GGReport>> {
    resolutions
        .iter()
        .map(|&r| {
            let mut c = cfg.clone();
            c.gauss_green.resolution = r;
            gg_residual(f, phi, omega, &c)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingReport {
    /// `⨍_{E2} f − ⨍_{E1} f` at the smallest radius.
    pub value: f64,
    pub mean_e1: f64,
    pub mean_e2: f64,
    pub converged: bool,
}

/// `lim ⨍_{B_δ(x) ∩ E2 ∩ Ω} f − lim ⨍_{B_δ(x) ∩ E1 ∩ Ω} f` for disjoint `E1`, `E2`.
pub fn vanishing_functional_demo(
    f: &ScalarField,
    x: &[f64],
    e1: &Region,
    e2: &Region,
    omega: &Region,
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<VanishingReport> {
    e1.check_dim(omega.dim)?;
    e2.check_dim(omega.dim)?;
    if let Some(common) = e1.bbox.intersect(&e2.bbox) {
        if !common.is_degenerate() {
            let both = Region::intersection(vec![e1.clone(), e2.clone()])?;
            let (hits, _, _) = count_in_window(&both, &common, &cfg.quad);
            if hits > 0 {
                return Err(Error::InvalidArgument(format!(
                    "{} and {} are not disjoint",
                    e1.label, e2.label
                )));
            }
        }
    }
    let m1 = mean_limit(
        f,
        &Region::intersection(vec![e1.clone(), omega.clone()])?,
        x,
        sched,
        cfg,
    )?;
    let m2 = mean_limit(
        f,
        &Region::intersection(vec![e2.clone(), omega.clone()])?,
        x,
        sched,
        cfg,
    )?;
    Ok(VanishingReport {
        value: m2.estimate.point_value - m1.estimate.point_value,
        mean_e1: m1.estimate.point_value,
        mean_e2: m2.estimate.point_value,
        converged: m1.estimate.converged && m2.estimate.converged,
    })
}
