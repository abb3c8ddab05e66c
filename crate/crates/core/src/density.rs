//! Density ratios at points and null sets, density-set checks and cone concentration.

use serde::{Deserialize, Serialize};

use crate::config::EstimatorConfig;
use crate::error::{Error, Result};
use crate::measure::{
    lebesgue, sample_target, stream_id, Cloud, DeltaSchedule, PointSet, QuadratureConfig, Region,
    Target,
};
use crate::sampling::sphere_directions;

/// A sequence `r(δ_k)` with its tail statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimate {
    pub deltas: Vec<f64>,
    pub values: Vec<f64>,
    /// Minimum over the tail window.
    pub liminf_est: f64,
    /// Maximum over the tail window.
    pub limsup_est: f64,
    pub converged: bool,
    pub point_value: f64,
}

impl LimitEstimate {
    pub fn from_values(deltas: Vec<f64>, values: Vec<f64>, tail_window: usize, tol: f64) -> Self {
        let k = values.len();
        let w = tail_window.clamp(1, k);
        let tail = &values[k - w..];
        let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let last = values[k - 1];
        let step = if k >= 2 {
            (last - values[k - 2]).abs()
        } else {
            0.0
        };
        LimitEstimate {
            deltas,
            liminf_est: lo,
            limsup_est: hi,
            converged: step < tol && hi - lo < tol,
            point_value: last,
            values,
        }
    }

    pub fn spread(&self) -> f64 {
        self.limsup_est - self.liminf_est
    }
}

/// Where the shrinking neighbourhoods are centred.
pub(crate) enum Anchor {
    Point(Vec<f64>),
    Set { cloud: Cloud, base: Option<Region> },
}

impl Anchor {
    /// Cloud for `c` fine enough for every radius of `sched`.
    pub(crate) fn for_set(
        c: &Region,
        sched: &DeltaSchedule,
        quad: &QuadratureConfig,
    ) -> Result<Anchor> {
        let spacing = quad.cloud_spacing.min(sched.last_delta() / 8.0);
        let cloud = Cloud::for_region(c, spacing, quad.probe_resolution)?;
        let base = if c.is_null() { None } else { Some(c.clone()) };
        Ok(Anchor::Set { cloud, base })
    }

    pub(crate) fn target(&self, delta: f64) -> Target<'_> {
        match self {
            Anchor::Point(x) => Target::Ball { center: x, delta },
            Anchor::Set { cloud, base } => Target::Near {
                cloud,
                base: base.as_ref(),
                delta,
            },
        }
    }

    fn empty_error(&self, delta: f64, omega: &Region) -> Error {
        match self {
            Anchor::Point(x) => Error::NotDensityPoint(format!(
                "λ({} ∩ B_δ({x:?})) = 0 at δ = {delta:e}",
                omega.label
            )),
            Anchor::Set { .. } => {
                Error::NotDensitySet(format!("λ({} ∩ C_δ) = 0 at δ = {delta:e}", omega.label))
            }
        }
    }

    /// Lattice points of `Ω ∩ N_δ` for level `k`; errors when there are none.
    pub(crate) fn sample(
        &self,
        omega: &Region,
        sched: &DeltaSchedule,
        k: usize,
        tag: &str,
        quad: &QuadratureConfig,
    ) -> Result<PointSet> {
        let delta = sched.delta(k);
        let s = sample_target(&self.target(delta), omega, stream_id(tag, k), quad);
        if s.is_empty() {
            return Err(self.empty_error(delta, omega));
        }
        Ok(s)
    }

    pub(crate) fn all_levels(
        &self,
        omega: &Region,
        sched: &DeltaSchedule,
        tag: &str,
        quad: &QuadratureConfig,
    ) -> Result<Vec<PointSet>> {
        (0..sched.steps)
            .map(|k| self.sample(omega, sched, k, tag, quad))
            .collect()
    }
}

pub(crate) fn validate_inputs(
    omega: &Region,
    x: Option<&[f64]>,
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<()> {
    sched.validate()?;
    cfg.quad.validate()?;
    if let Some(x) = x {
        if x.len() != omega.dim {
            return Err(Error::DimensionMismatch {
                expected: omega.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite point {x:?}")));
        }
    }
    Ok(())
}

fn ratio_estimate(
    levels: &[PointSet],
    a: &Region,
    sched: &DeltaSchedule,
    parallel: bool,
) -> LimitEstimate {
    let values = levels
        .iter()
        .map(|s| {
            let num = s.count(&|y| a.contains(y), parallel);
            (num as f64 / s.len() as f64).clamp(0.0, 1.0)
        })
        .collect();
    LimitEstimate::from_values(sched.deltas(), values, sched.tail_window, sched.tol)
}

/// `λ(A ∩ Ω ∩ B_δ(x)) / λ(Ω ∩ B_δ(x))` along the schedule.
pub fn density_at_point(
    a: &Region,
    omega: &Region,
    x: &[f64],
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<LimitEstimate> {
    validate_inputs(omega, Some(x), sched, cfg)?;
    a.check_dim(omega.dim)?;
    let anchor = Anchor::Point(x.to_vec());
    let levels = anchor.all_levels(omega, sched, "density", &cfg.quad)?;
    Ok(ratio_estimate(&levels, a, sched, cfg.quad.parallel))
}

/// `λ(A ∩ Ω ∩ C_δ) / λ(Ω ∩ C_δ)` along the schedule.
pub fn density_at_set(
    a: &Region,
    omega: &Region,
    c: &Region,
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<LimitEstimate> {
    validate_inputs(omega, None, sched, cfg)?;
    a.check_dim(omega.dim)?;
    c.check_dim(omega.dim)?;
    let anchor = set_anchor(c, omega, sched, cfg)?;
    let levels = anchor.all_levels(omega, sched, "density", &cfg.quad)?;
    Ok(ratio_estimate(&levels, a, sched, cfg.quad.parallel))
}

/// Anchor for a set `C` after checking `λ(C ∩ Ω) = 0`.
pub(crate) fn set_anchor(
    c: &Region,
    omega: &Region,
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<Anchor> {
    if !null_in(c, omega, &cfg.quad)? {
        return Err(Error::NotDensitySet(format!(
            "λ({} ∩ {}) > 0",
            c.label, omega.label
        )));
    }
    Anchor::for_set(c, sched, &cfg.quad).map_err(|e| match e {
        Error::EmptyRegion(m) => Error::NotDensitySet(format!("no sample of {m}")),
        other => other,
    })
}

fn null_in(c: &Region, omega: &Region, quad: &QuadratureConfig) -> Result<bool> {
    if c.is_null() {
        return Ok(true);
    }
    let both = Region::intersection(vec![c.clone(), omega.clone()])?;
    Ok(lebesgue(&both, &c.bbox, quad)?.value == 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySetReport {
    pub is_density_set: bool,
    /// `λ(C ∩ Ω) = 0` at the working resolution.
    pub null_intersection: bool,
    /// `λ(Ω ∩ C_δ) > 0` for every radius of the schedule.
    pub positive_neighborhoods: bool,
    /// `λ(Ω ∩ C_δ)` per radius, as far as it was evaluated.
    pub neighborhood_measures: Vec<f64>,
    pub failed: Option<String>,
}

pub fn is_density_set(
    c: &Region,
    omega: &Region,
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<DensitySetReport> {
    validate_inputs(omega, None, sched, cfg)?;
    c.check_dim(omega.dim)?;
    let null_intersection = null_in(c, omega, &cfg.quad)?;
    let mut report = DensitySetReport {
        is_density_set: false,
        null_intersection,
        positive_neighborhoods: false,
        neighborhood_measures: Vec::new(),
        failed: None,
    };
    if !null_intersection {
        report.failed = Some("λ(C ∩ Ω) > 0".into());
        return Ok(report);
    }
    let anchor = match Anchor::for_set(c, sched, &cfg.quad) {
        Ok(a) => a,
        Err(Error::EmptyRegion(m)) => {
            report.failed = Some(format!("no sample of {m}"));
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    for k in 0..sched.steps {
        let delta = sched.delta(k);
        let s = sample_target(
            &anchor.target(delta),
            omega,
            stream_id("density", k),
            &cfg.quad,
        );
        report.neighborhood_measures.push(s.measure());
        if s.is_empty() {
            report.failed = Some(format!("λ(Ω ∩ C_δ) = 0 at δ = {delta:e}"));
            return Ok(report);
        }
    }
    report.positive_neighborhoods = true;
    report.is_density_set = true;
    Ok(report)
}

fn check_unit(v: &[f64]) -> Result<()> {
    let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "direction must be a unit vector, |v| = {n}"
        )));
    }
    Ok(())
}

#[inline]
fn in_cone(y: &[f64], x: &[f64], v: &[f64], cos_a: f64) -> bool {
    let (mut t, mut r2) = (0.0, 0.0);
    for i in 0..y.len() {
        let d = y[i] - x[i];
        t += d * v[i];
        r2 += d * d;
    }
    r2 > 0.0 && t > cos_a * r2.sqrt()
}

fn cone_estimate(
    levels: &[PointSet],
    x: &[f64],
    v: &[f64],
    alpha: f64,
    sched: &DeltaSchedule,
) -> LimitEstimate {
    let cos_a = alpha.cos();
    let values = levels
        .iter()
        .map(|s| {
            let num = s.iter().filter(|y| in_cone(y, x, v, cos_a)).count();
            num as f64 / s.len() as f64
        })
        .collect();
    LimitEstimate::from_values(sched.deltas(), values, sched.tail_window, sched.tol)
}

/// Density of the open cone `K(x, v, α)` relative to `Ω` at `x`.
pub fn cone_density(
    omega: &Region,
    x: &[f64],
    v: &[f64],
    alpha: f64,
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<LimitEstimate> {
    validate_inputs(omega, Some(x), sched, cfg)?;
    if v.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: v.len(),
        });
    }
    check_unit(v)?;
    if !(alpha > 0.0 && alpha < std::f64::consts::PI) {
        return Err(Error::InvalidArgument(format!(
            "cone angle {alpha} outside (0, π)"
        )));
    }
    let levels = Anchor::Point(x.to_vec()).all_levels(omega, sched, "density", &cfg.quad)?;
    Ok(cone_estimate(&levels, x, v, alpha, sched))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub direction: Vec<f64>,
    /// Cone density at the reported direction (last radius).
    pub score: f64,
    /// Best score among the candidate directions.
    pub best_candidate_score: f64,
    /// False when the maximizing candidates are spread around the sphere.
    pub unique: bool,
    /// Mean resultant length of the maximizing candidates.
    pub resultant: f64,
    pub tied: usize,
    pub half_angle: f64,
    pub estimate: LimitEstimate,
}

/// Direction along which `Ω` concentrates at `x`.
///
/// Scores every candidate by the cone density at the last radius. Candidates
/// within `sched.tol` of the best score form the tied set; their normalized
/// mean is reported when their mean resultant length is at least `cos α₀`,
/// otherwise the lexicographically smallest tied candidate is reported with
/// `unique = false`.
pub fn concentration_direction(
    omega: &Region,
    x: &[f64],
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
    n_dirs: usize,
) -> Result<Concentration> {
    validate_inputs(omega, Some(x), sched, cfg)?;
    if n_dirs == 0 {
        return Err(Error::InvalidArgument(
            "need at least one candidate direction".into(),
        ));
    }
    let n = omega.dim;
    let alpha = cfg.cone.half_angle;
    let levels = Anchor::Point(x.to_vec()).all_levels(omega, sched, "density", &cfg.quad)?;
    let dirs = sphere_directions(n, n_dirs);
    let scores: Vec<f64> = dirs
        .iter()
        .map(|v| cone_estimate(&levels, x, v, alpha, sched).point_value)
        .collect();
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..dirs.len())
        .filter(|&i| scores[i] >= best - sched.tol)
        .collect();
    let mut mean = vec![0.0; n];
    for &i in &tied {
        for k in 0..n {
            mean[k] += dirs[i][k] / tied.len() as f64;
        }
    }
    let resultant = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
    let unique = resultant >= alpha.cos();
    let direction = if unique {
        mean.iter().map(|m| m / resultant).collect()
    } else {
        let mut cands: Vec<&Vec<f64>> = tied.iter().map(|&i| &dirs[i]).collect();
        cands.sort_by(|a, b| a.partial_cmp(b).expect("finite directions"));
        cands[0].clone()
    };
    let estimate = cone_estimate(&levels, x, &direction, alpha, sched);
    Ok(Concentration {
        score: estimate.point_value,
        direction,
        best_candidate_score: best,
        unique,
        resultant,
        tied: tied.len(),
        half_angle: alpha,
        estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprcli::expr::Atan2Range;
    use crate::measure::{BoxN, NullSet};
    use std::f64::consts::{FRAC_PI_4, PI};

    fn plane() -> Region {
        Region::whole(BoxN::cube(&[0.0, 0.0], 1.0))
    }

    fn expr(src: &str) -> Region {
        Region::parse(src, 2, BoxN::cube(&[0.0, 0.0], 1.0), Atan2Range::Pmpi).unwrap()
    }

    fn sched() -> DeltaSchedule {
        DeltaSchedule::for_bbox(&BoxN::cube(&[0.0, 0.0], 1.0))
    }

    #[test]
    fn point_densities() {
        let cfg = EstimatorConfig::default();
        let full = density_at_point(&plane(), &plane(), &[0.0, 0.0], &sched(), &cfg).unwrap();
        assert_eq!(full.point_value, 1.0);
        assert!(full.converged);
        let half =
            density_at_point(&expr("x2 > 0"), &plane(), &[0.0, 0.0], &sched(), &cfg).unwrap();
        assert!((half.point_value - 0.5).abs() < 5e-3);
        let quarter = density_at_point(
            &expr("x1 > 0 and x2 > 0"),
            &plane(),
            &[0.0, 0.0],
            &sched(),
            &cfg,
        )
        .unwrap();
        assert!((quarter.point_value - 0.25).abs() < 5e-3);
    }

    #[test]
    fn outside_point_is_rejected() {
        let disk = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
        let s = sched().with_delta0(0.5);
        let r = density_at_point(&disk, &disk, &[3.0, 0.0], &s, &EstimatorConfig::default());
        assert!(matches!(r, Err(Error::NotDensityPoint(_))));
    }

    #[test]
    fn set_density_of_singleton_matches_point_density() {
        let cfg = EstimatorConfig::default();
        let a = expr("x2 > x1^2 - 0.3*x1");
        let x = [0.0, 0.0];
        let p = density_at_point(&a, &plane(), &x, &sched(), &cfg).unwrap();
        let s = density_at_set(&a, &plane(), &Region::point(&x), &sched(), &cfg).unwrap();
        for (u, v) in p.values.iter().zip(&s.values) {
            assert!((u - v).abs() <= 1e-9);
        }
    }

    #[test]
    fn circle_and_segment_densities() {
        let cfg = EstimatorConfig::default();
        let big = Region::whole(BoxN::cube(&[0.0, 0.0], 2.0));
        let circle = Region::null_set(NullSet::Circle {
            center: vec![0.0, 0.0],
            radius: 1.0,
        })
        .unwrap();
        let s = DeltaSchedule::new(0.2, 0.5, 6, 3).unwrap();
        let disk = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
        let d = density_at_set(&disk, &big, &circle, &s, &cfg).unwrap();
        assert!((d.point_value - 0.5).abs() < 1e-2, "{d:?}");
        let seg = Region::null_set(NullSet::Segment {
            a: vec![0.0, 0.0],
            b: vec![1.0, 0.0],
        })
        .unwrap();
        let up = expr("x2 > 0");
        let d = density_at_set(&up, &big, &seg, &s, &cfg).unwrap();
        assert!((d.point_value - 0.5).abs() < 1e-2);
    }

    #[test]
    fn density_set_checks() {
        let cfg = EstimatorConfig::default();
        let disk = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
        let s = DeltaSchedule::for_bbox(&disk.bbox);
        assert!(
            is_density_set(&Region::point(&[0.0, 0.0]), &disk, &s, &cfg)
                .unwrap()
                .is_density_set
        );
        let far = is_density_set(&Region::point(&[2.0, 0.0]), &disk, &s, &cfg).unwrap();
        assert!(!far.is_density_set && far.null_intersection && !far.positive_neighborhoods);
        let closed =
            Region::parse("x1^2 + x2^2 <= 1", 2, disk.bbox.clone(), Atan2Range::Pmpi).unwrap();
        let r = is_density_set(&closed, &disk, &s, &cfg).unwrap();
        assert!(!r.is_density_set && !r.null_intersection);
        assert!(matches!(
            density_at_set(&disk, &disk, &closed, &s, &cfg),
            Err(Error::NotDensitySet(_))
        ));
    }

    #[test]
    fn cone_densities() {
        let cfg = EstimatorConfig::default();
        let c = cone_density(
            &plane(),
            &[0.0, 0.0],
            &[0.6, 0.8],
            FRAC_PI_4,
            &sched(),
            &cfg,
        )
        .unwrap();
        assert!((c.point_value - 0.25).abs() < 5e-3);
        let cusp = Region::cusp(vec![0.0, 0.0], vec![1.0, 0.0], 1.0, 2.0, 1.0).unwrap();
        let s = DeltaSchedule::for_bbox(&BoxN::cube(&[0.0, 0.0], 1.0));
        let fwd = cone_density(&cusp, &[0.0, 0.0], &[1.0, 0.0], FRAC_PI_4, &s, &cfg).unwrap();
        assert_eq!(fwd.point_value, 1.0);
        let back = cone_density(&cusp, &[0.0, 0.0], &[-1.0, 0.0], FRAC_PI_4, &s, &cfg).unwrap();
        assert_eq!(back.point_value, 0.0);
        assert!(cone_density(&plane(), &[0.0, 0.0], &[1.0, 1.0], FRAC_PI_4, &s, &cfg).is_err());
    }

    #[test]
    fn concentration_examples() {
        let cfg = EstimatorConfig::default();
        let s = sched();
        let cusp = Region::cusp(vec![0.0, 0.0], vec![1.0, 0.0], 1.0, 2.0, 1.0).unwrap();
        let c = concentration_direction(&cusp, &[0.0, 0.0], &s, &cfg, 360).unwrap();
        assert!(c.unique && c.score >= 0.99);
        assert!(c.direction[1].atan2(c.direction[0]).abs() < 5f64.to_radians());
        let iso = concentration_direction(&plane(), &[0.0, 0.0], &s, &cfg, 360).unwrap();
        assert!(!iso.unique);
        assert!((iso.score - 0.25).abs() < 5e-3);
        let wedge = expr("x2 > abs(x1)");
        let w = concentration_direction(&wedge, &[0.0, 0.0], &s, &cfg, 360).unwrap();
        assert!((w.direction[1].atan2(w.direction[0]) - PI / 2.0).abs() < 5f64.to_radians());
    }
}
