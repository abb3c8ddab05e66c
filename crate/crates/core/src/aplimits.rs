//! Essential bounds near a set, the interval of density-measure integrals, and
//! upper and lower approximate limits.
//!
//! Every estimator here works on the sorted field values of the lattice points
//! of `Ω ∩ C_δ` for each radius of the schedule. Samples where the field is
//! `NaN` are discarded and counted.
//!
//! The super-level test "`λ({f > α} ∩ B_δ) / λ(B_δ) < density_tol` on every
//! tail radius" is monotone in `α`, so the bisection over `α` converges to an
//! order statistic of the sampled values; that order statistic is computed
//! directly. An estimate is declared infinite when it exceeds `cap`, or when
//! the upper tail of the sampled values does not decelerate: either as the
//! density threshold is lowered at a fixed radius, or as the radius shrinks.

use serde::{Deserialize, Serialize};

use crate::config::EstimatorConfig;
use crate::density::{set_anchor, validate_inputs, Anchor};
use crate::error::{Error, Result};
use crate::extended::ExtendedReal;
use crate::field::{ScalarField, VectorField};
use crate::measure::{DeltaSchedule, PointSet, QuadratureConfig, Region};

/// Number of halvings of the density threshold used by the divergence probe.
const PROBE_HALVINGS: usize = 6;
const MIN_GROWTH_RATIO: f64 = 1.090_507_732_665_257_7;

/// Lattice points of `Ω ∩ N_δ` per radius with the field values there; points
/// where the field is `NaN` are dropped.
pub(crate) struct FieldSamples {
    pub points: Vec<PointSet>,
    pub values: Vec<Vec<f64>>,
    pub discarded: usize,
    pub tail_start: usize,
}

impl FieldSamples {
    pub(crate) fn collect(
        f: &ScalarField,
        omega: &Region,
        anchor: &Anchor,
        sched: &DeltaSchedule,
        quad: &QuadratureConfig,
    ) -> Result<Self> {
        let mut out = FieldSamples {
            points: Vec::with_capacity(sched.steps),
            values: Vec::with_capacity(sched.steps),
            discarded: 0,
            tail_start: sched.tail_start(),
        };
        for k in 0..sched.steps {
            let pts = anchor.sample(omega, sched, k, "field", quad)?;
            let raw = pts.values(&|y| f.value(y), quad.parallel);
            let mut coords = Vec::with_capacity(pts.coords.len());
            let mut vals = Vec::with_capacity(raw.len());
            for (y, v) in pts.iter().zip(&raw) {
                if !v.is_nan() {
                    coords.extend_from_slice(y);
                    vals.push(*v);
                }
            }
            out.discarded += raw.len() - vals.len();
            if vals.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "{} is undefined on every sample at δ = {:e}",
                    f.label(),
                    sched.delta(k)
                )));
            }
            out.points.push(PointSet {
                dim: pts.dim,
                coords,
                weight: pts.weight,
            });
            out.values.push(vals);
        }
        Ok(out)
    }

    pub(crate) fn levels(&self) -> usize {
        self.values.len()
    }

    /// Sorted values of the points accepted by `keep`; `None` when some level has none.
    pub(crate) fn sorted_where(&self, keep: impl Fn(&[f64]) -> bool) -> Option<LevelValues> {
        let mut sorted = Vec::with_capacity(self.levels());
        for (pts, vals) in self.points.iter().zip(&self.values) {
            let mut v: Vec<f64> = pts
                .iter()
                .zip(vals)
                .filter(|(y, _)| keep(y))
                .map(|(_, v)| *v)
                .collect();
            if v.is_empty() {
                return None;
            }
            v.sort_by(f64::total_cmp);
            sorted.push(v);
        }
        Some(LevelValues {
            sorted,
            discarded: self.discarded,
            tail_start: self.tail_start,
        })
    }

    pub(crate) fn sorted(&self) -> LevelValues {
        self.sorted_where(|_| true).expect("levels are non-empty")
    }
}

/// Sorted finite-or-infinite field values per radius.
pub(crate) struct LevelValues {
    pub sorted: Vec<Vec<f64>>,
    pub discarded: usize,
    pub tail_start: usize,
}

impl LevelValues {
    pub(crate) fn collect(
        f: &ScalarField,
        omega: &Region,
        anchor: &Anchor,
        sched: &DeltaSchedule,
        quad: &QuadratureConfig,
    ) -> Result<Self> {
        Ok(FieldSamples::collect(f, omega, anchor, sched, quad)?.sorted())
    }

    fn tail(&self) -> std::ops::Range<usize> {
        self.tail_start..self.sorted.len()
    }

    /// Smallest `α` with `#{v > α} < τ·n`.
    pub(crate) fn upper_q(&self, k: usize, tau: f64) -> f64 {
        let v = &self.sorted[k];
        let n = v.len();
        let c = ((tau * n as f64).ceil() as usize).max(1) - 1;
        if c >= n {
            return f64::NEG_INFINITY;
        }
        v[n - 1 - c]
    }

    /// Largest `α` with `#{v < α} < τ·n`.
    pub(crate) fn lower_q(&self, k: usize, tau: f64) -> f64 {
        let v = &self.sorted[k];
        let n = v.len();
        let c = ((tau * n as f64).ceil() as usize).max(1) - 1;
        if c >= n {
            return f64::INFINITY;
        }
        v[c]
    }

    pub(crate) fn negated(&self) -> LevelValues {
        LevelValues {
            sorted: self
                .sorted
                .iter()
                .map(|v| v.iter().rev().map(|x| -x).collect())
                .collect(),
            discarded: self.discarded,
            tail_start: self.tail_start,
        }
    }

    fn sup(&self, k: usize) -> f64 {
        *self.sorted[k].last().expect("non-empty level")
    }

    /// Sample sups made non-increasing in δ, reported at the start of the tail.
    /// Neighbourhoods are nested, so level `k` inherits every sample sup of
    /// the finer levels; coarse lattices that miss a peak are lifted.
    pub(crate) fn sup_envelope(&self) -> Vec<f64> {
        let mut run = f64::NEG_INFINITY;
        let mut seq: Vec<f64> = (0..self.sorted.len())
            .rev()
            .map(|k| {
                run = run.max(self.sup(k));
                run
            })
            .collect();
        seq.reverse();
        seq
    }

    pub(crate) fn ess_sup(&self, tol: &crate::config::Tolerances) -> ExtendedReal {
        let seq = self.sup_envelope();
        if self.tail().all(|k| self.sup(k) >= tol.cap) || self.upper_tail_diverges(tol.density_tol)
        {
            return ExtendedReal::PosInf;
        }
        ExtendedReal::from_capped(seq[self.tail_start], tol.cap)
    }

    /// Order-statistic form of the super-level bisection.
    pub(crate) fn ap_limsup(&self, tol: &crate::config::Tolerances) -> ExtendedReal {
        let q = self
            .tail()
            .map(|k| self.upper_q(k, tol.density_tol))
            .fold(f64::NEG_INFINITY, f64::max);
        if q >= tol.cap || self.upper_tail_diverges(tol.density_tol) {
            return ExtendedReal::PosInf;
        }
        ExtendedReal::from_capped(q, tol.cap)
    }

    fn upper_tail_diverges(&self, tau: f64) -> bool {
        let by_threshold = self.tail().all(|k| {
            let seq: Vec<f64> = (0..=PROBE_HALVINGS)
                .rev()
                .map(|j| self.upper_q(k, tau * (1u64 << j) as f64))
                .collect();
            accelerating(&seq)
        });
        let from = self.tail_start.saturating_sub(1);
        let by_radius: Vec<f64> = (from..self.sorted.len())
            .map(|k| self.upper_q(k, tau))
            .collect();
        by_threshold || accelerating(&by_radius)
    }

    /// Robust spread of the values at the coarsest radius.
    pub(crate) fn coarse_spread(&self, tau: f64) -> f64 {
        let s = self.upper_q(0, tau) - self.lower_q(0, tau);
        if s.is_finite() {
            s.max(0.0)
        } else {
            0.0
        }
    }
}

/// True when `seq` increases strictly and its increments grow by a median factor of at least 2^(1/8).
pub(crate) fn accelerating(seq: &[f64]) -> bool {
    if seq.len() < 4 || seq.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let d: Vec<f64> = seq.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = seq.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    if d.iter().any(|&x| x <= 1e-12 * scale) {
        return false;
    }
    // Growth like τ^(−p) gives increment ratios 2^p; a bounded tail gives
    // ratios ≤ 1. The median ignores the last few increments, which collapse
    // once the quantile reaches the extreme lattice values.
    let mut ratios: Vec<f64> = d.windows(2).map(|w| w[1] / w[0]).collect();
    ratios.sort_by(f64::total_cmp);
    ratios[(ratios.len() - 1) / 2] >= MIN_GROWTH_RATIO
}

fn values_near_set(
    f: &ScalarField,
    omega: &Region,
    c: &Region,
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<LevelValues> {
    validate_inputs(omega, None, sched, cfg)?;
    f.check_dim(omega.dim)?;
    c.check_dim(omega.dim)?;
    let anchor = set_anchor(c, omega, sched, cfg)?;
    LevelValues::collect(f, omega, &anchor, sched, &cfg.quad)
}

pub(crate) fn values_near_point(
    f: &ScalarField,
    omega: &Region,
    x: &[f64],
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<LevelValues> {
    validate_inputs(omega, Some(x), sched, cfg)?;
    f.check_dim(omega.dim)?;
    LevelValues::collect(f, omega, &Anchor::Point(x.to_vec()), sched, &cfg.quad)
}

/// `lim_δ ess sup_{C_δ ∩ Ω} f`.
pub fn ess_sup_near(
    f: &ScalarField,
    omega: &Region,
    c: &Region,
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<ExtendedReal> {
    Ok(values_near_set(f, omega, c, sched, cfg)?.ess_sup(&cfg.tol))
}

/// `lim_δ ess inf_{C_δ ∩ Ω} f`.
pub fn ess_inf_near(
    f: &ScalarField,
    omega: &Region,
    c: &Region,
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<ExtendedReal> {
    Ok(values_near_set(f, omega, c, sched, cfg)?
        .negated()
        .ess_sup(&cfg.tol)
        .neg())
}

/// A super- or sub-level set of `f` with positive density at `C`.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    #[serde(skip)]
    pub region: Region,
    pub threshold: f64,
    pub epsilon: f64,
    /// Fraction of the samples of `Ω ∩ C_δ` lying in the witness, per radius.
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityInterval {
    pub lo: ExtendedReal,
    pub hi: ExtendedReal,
    pub lo_attained_on: Option<Witness>,
    pub hi_attained_on: Option<Witness>,
    pub discarded: usize,
}

impl DensityInterval {
    pub fn contains(&self, v: f64, tol: f64) -> bool {
        self.lo.to_f64() - tol <= v && v <= self.hi.to_f64() + tol
    }
}

fn witness(
    f: &ScalarField,
    lv: &LevelValues,
    bound: f64,
    upper: bool,
    eps: f64,
    bbox: &crate::measure::BoxN,
) -> Result<Witness> {
    let threshold = if upper { bound - eps } else { bound + eps };
    let region = Region::level_set(f.clone(), threshold, upper, bbox.clone())?;
    let density = lv
        .sorted
        .iter()
        .map(|v| {
            let hits = if upper {
                v.len() - v.partition_point(|&x| x < threshold)
            } else {
                v.partition_point(|&x| x <= threshold)
            };
            hits as f64 / v.len() as f64
        })
        .collect();
    Ok(Witness {
        region,
        threshold,
        epsilon: eps,
        density,
    })
}

/// `⟨Dens_C, f⟩ = [ess_inf_near, ess_sup_near]` with the level sets
/// `M_ε = {f ≥ s − ε}` and `{f ≤ i + ε}` attached when the endpoints are finite.
pub fn dens_interval(
    f: &ScalarField,
    omega: &Region,
    c: &Region,
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<DensityInterval> {
    let lv = values_near_set(f, omega, c, sched, cfg)?;
    let hi = lv.ess_sup(&cfg.tol);
    let lo = lv.negated().ess_sup(&cfg.tol).neg();
    let eps =
        (cfg.tol.alpha_rel_tol * lv.coarse_spread(cfg.tol.density_tol)).max(cfg.tol.estimator_tol);
    let hi_attained_on = hi
        .finite()
        .map(|s| witness(f, &lv, s, true, eps, &omega.bbox))
        .transpose()?;
    let lo_attained_on = lo
        .finite()
        .map(|i| witness(f, &lv, i, false, eps, &omega.bbox))
        .transpose()?;
    Ok(DensityInterval {
        lo,
        hi,
        lo_attained_on,
        hi_attained_on,
        discarded: lv.discarded,
    })
}

/// `ω(v) = ess_sup_near(F·v)`.
pub fn support_function(
    field: &VectorField,
    omega: &Region,
    c: &Region,
    v: &[f64],
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<ExtendedReal> {
    if v.len() != field.out_dim() {
        return Err(Error::DimensionMismatch {
            expected: field.out_dim(),
            got: v.len(),
        });
    }
    if !v.iter().any(|x| *x != 0.0) || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "support direction must be non-zero".into(),
        ));
    }
    ess_sup_near(&field.dot(v), omega, c, sched, cfg)
}

/// Upper approximate limit `f^s(x)`.
pub fn ap_limsup(
    f: &ScalarField,
    omega: &Region,
    x: &[f64],
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<ExtendedReal> {
    Ok(values_near_point(f, omega, x, sched, cfg)?.ap_limsup(&cfg.tol))
}

/// Lower approximate limit `f^i(x) = −(−f)^s(x)`.
pub fn ap_liminf(
    f: &ScalarField,
    omega: &Region,
    x: &[f64],
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<ExtendedReal> {
    Ok(values_near_point(f, omega, x, sched, cfg)?
        .negated()
        .ap_limsup(&cfg.tol)
        .neg())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxLimitResult {
    pub f_lower: ExtendedReal,
    pub f_upper: ExtendedReal,
    pub ap_limit: Option<f64>,
    pub cap: f64,
    /// Largest gap `f_upper − f_lower` still read as agreement.
    pub tol: f64,
    pub discarded: usize,
}

/// Both approximate limits; the limit is present when they agree within
/// `jump_rel_tol` times the spread of `f` at the coarsest radius.
pub fn ap_limit(
    f: &ScalarField,
    omega: &Region,
    x: &[f64],
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<ApproxLimitResult> {
    let lv = values_near_point(f, omega, x, sched, cfg)?;
    Ok(limit_from_values(&lv, cfg))
}

pub(crate) fn limit_from_values(lv: &LevelValues, cfg: &EstimatorConfig) -> ApproxLimitResult {
    let f_upper = lv.ap_limsup(&cfg.tol);
    let f_lower = lv.negated().ap_limsup(&cfg.tol).neg();
    let tol = cfg.tol.jump_rel_tol * lv.coarse_spread(cfg.tol.density_tol);
    let ap_limit = match (f_lower, f_upper) {
        (ExtendedReal::Finite(lo), ExtendedReal::Finite(hi))
            if hi - lo <= tol + 1e-12 * (1.0 + hi.abs()) =>
        {
            Some(0.5 * (lo + hi))
        }
        _ => None,
    };
    ApproxLimitResult {
        f_lower,
        f_upper,
        ap_limit,
        cap: cfg.tol.cap,
        tol,
        discarded: lv.discarded,
    }
}
