//! Clarke generalized directional derivatives and generalized gradients.
//!
//! Two independent routes estimate `f°(x; v)`: the limsup of difference
//! quotients, and the shrinking-ball sup of `Df·v` over points where `f` is
//! differentiable. Generalized gradients are hulls of gradient samples; their
//! support function is checked against the gradient route on a fixed probe
//! set, with samples drawn from a separate low-discrepancy stream.

pub mod hull;

use serde::{Deserialize, Serialize};

use crate::config::EstimatorConfig;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::measure::DeltaSchedule;
use crate::sampling::{ball_points, probe_directions};

/// Default radii for Clarke estimates: 0.05 · 2^(−k), k < 12, tail of 4.
pub fn default_schedule() -> DeltaSchedule {
    DeltaSchedule::new(0.05, 0.5, 12, 4).expect("valid schedule")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_inputs(
    f: &ScalarField,
    x: &[f64],
    v: Option<&[f64]>,
    sched: &DeltaSchedule,
) -> Result<()> {
    sched.validate()?;
    f.check_dim(x.len())?;
    if let Some(v) = v {
        if v.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: v.len(),
            });
        }
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite direction {v:?}"
            )));
        }
    }
    if x.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite point {x:?}")));
    }
    Ok(())
}

fn tail_max(per_level: &[f64], sched: &DeltaSchedule) -> f64 {
    per_level[sched.tail_start()..]
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirDerivative {
    pub value: f64,
    /// Sup over the samples of each radius.
    pub per_level: Vec<f64>,
    /// Largest `|quotient| / |v|` (or `|Df|`) seen over all samples.
    pub lipschitz: f64,
    pub discarded: usize,
}

/// `limsup_{y→x, t↓0} (f(y + t v) − f(y)) / t`.
pub fn dir_derivative_quotient(
    f: &ScalarField,
    x: &[f64],
    v: &[f64],
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<DirDerivative> {
    check_inputs(f, x, Some(v), sched)?;
    let n = x.len();
    let vn = dot(v, v).sqrt();
    let (mut per_level, mut lipschitz, mut discarded) =
        (Vec::with_capacity(sched.steps), 0.0f64, 0);
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    for k in 0..sched.steps {
        let delta = sched.delta(k);
        let mut sup = f64::NEG_INFINITY;
        for u in ball_points(
            n,
            1,
            cfg.clarke.n_samples,
            cfg.quad.seed,
            &format!("quotient/{k}"),
        ) {
            let t = delta * (1.0 - u[n]);
            for i in 0..n {
                y[i] = x[i] + delta * u[i];
                z[i] = y[i] + t * v[i];
            }
            let q = (f.value(&z) - f.value(&y)) / t;
            if q.is_nan() {
                discarded += 1;
                continue;
            }
            if q.abs() > cfg.tol.cap {
                return Err(Error::NonLipschitz {
                    cap: cfg.tol.cap,
                    detail: format!("quotient {q:e} at y = {y:?}, t = {t:e}"),
                });
            }
            sup = sup.max(q);
            if vn > 0.0 {
                lipschitz = lipschitz.max(q.abs() / vn);
            }
        }
        if sup == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!(
                "{} undefined near {x:?}",
                f.label()
            )));
        }
        per_level.push(sup);
    }
    Ok(DirDerivative {
        value: tail_max(&per_level, sched),
        per_level,
        lipschitz,
        discarded,
    })
}

/// Gradient samples of one radius; samples outside `D_f` are dropped.
struct GradLevel {
    grads: Vec<Vec<f64>>,
    discarded: usize,
}

fn sample_gradients(
    f: &ScalarField,
    x: &[f64],
    delta: f64,
    tag: &str,
    cfg: &EstimatorConfig,
) -> Result<GradLevel> {
    let n = x.len();
    let pts = ball_points(n, 0, cfg.clarke.n_samples, cfg.quad.seed, tag);
    let mut grads = Vec::with_capacity(pts.len());
    let mut discarded = 0;
    let h = cfg.clarke.h_ratio * delta;
    let mut fd: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut y = vec![0.0; n];
    for u in &pts {
        for i in 0..n {
            y[i] = x[i] + delta * u[i];
        }
        if f.has_gradient() {
            let mut g = vec![0.0; n];
            f.gradient(&y, &mut g);
            if g.iter().all(|c| c.is_finite()) {
                grads.push(g);
            } else {
                discarded += 1;
            }
            continue;
        }
        let f0 = f.value(&y);
        let mut fwd = vec![0.0; n];
        let mut bwd = vec![0.0; n];
        let mut yp = y.clone();
        for i in 0..n {
            yp[i] = y[i] + h;
            fwd[i] = (f.value(&yp) - f0) / h;
            yp[i] = y[i] - h;
            bwd[i] = (f0 - f.value(&yp)) / h;
            yp[i] = y[i];
        }
        fd.push((y.clone(), fwd, bwd));
    }
    if !fd.is_empty() {
        let lip = fd
            .iter()
            .flat_map(|(_, a, b)| a.iter().chain(b.iter()))
            .filter(|c| c.is_finite())
            .fold(0.0f64, |m, c| m.max(c.abs()));
        let thresh = cfg.tol.fd_tol * lip.max(f64::MIN_POSITIVE);
        for (_, fwd, bwd) in fd {
            let ok = fwd
                .iter()
                .zip(&bwd)
                .all(|(a, b)| a.is_finite() && b.is_finite() && (a - b).abs() <= thresh);
            if ok {
                grads.push(fwd.iter().zip(&bwd).map(|(a, b)| 0.5 * (a + b)).collect());
            } else {
                discarded += 1;
            }
        }
    }
    if let Some(g) = grads.iter().find(|g| dot(g, g).sqrt() > cfg.tol.cap) {
        return Err(Error::NonLipschitz {
            cap: cfg.tol.cap,
            detail: format!("gradient {g:?} near {x:?}"),
        });
    }
    if grads.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no differentiability point of {} found in B_{delta:e}({x:?})",
            f.label()
        )));
    }
    Ok(GradLevel { grads, discarded })
}

fn gradient_levels(
    f: &ScalarField,
    x: &[f64],
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
    tag: &str,
) -> Result<Vec<GradLevel>> {
    (0..sched.steps)
        .map(|k| sample_gradients(f, x, sched.delta(k), &format!("{tag}/{k}"), cfg))
        .collect()
}

fn gradsup_from_levels(levels: &[GradLevel], v: &[f64], sched: &DeltaSchedule) -> DirDerivative {
    let per_level: Vec<f64> = levels
        .iter()
        .map(|l| {
            l.grads
                .iter()
                .map(|g| dot(g, v))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let lipschitz = levels
        .iter()
        .flat_map(|l| l.grads.iter())
        .fold(0.0f64, |m, g| m.max(dot(g, g).sqrt()));
    DirDerivative {
        value: tail_max(&per_level, sched),
        per_level,
        lipschitz,
        discarded: levels.iter().map(|l| l.discarded).sum(),
    }
}

/// `lim_δ sup_{B_δ(x) ∩ D_f} Df·v`.
pub fn dir_derivative_gradsup(
    f: &ScalarField,
    x: &[f64],
    v: &[f64],
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<DirDerivative> {
    check_inputs(f, x, Some(v), sched)?;
    let levels = gradient_levels(f, x, sched, cfg, "gradsup")?;
    Ok(gradsup_from_levels(&levels, v, sched))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRow {
    pub direction: Vec<f64>,
    pub support: f64,
    pub gradsup: f64,
}

/// Convex hull of gradient samples taken on the tail radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientHull {
    pub x: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub delta_used: f64,
    pub hull_vertices: Vec<Vec<f64>>,
    pub support_table: Vec<SupportRow>,
    pub discarded: usize,
}

impl GradientHull {
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// `max_g g·v` over the gradient samples.
    pub fn support(&self, v: &[f64]) -> f64 {
        self.points
            .iter()
            .map(|g| dot(g, v))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn vertex_support(&self, v: &[f64]) -> f64 {
        self.hull_vertices
            .iter()
            .map(|g| dot(g, v))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn probes(&self) -> impl Iterator<Item = &[f64]> {
        self.support_table.iter().map(|r| r.direction.as_slice())
    }

    pub fn diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for a in &self.hull_vertices {
            for b in &self.hull_vertices {
                d = d.max(
                    a.iter()
                        .zip(b)
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum::<f64>()
                        .sqrt(),
                );
            }
        }
        d
    }
}

/// `∂f(x) ≈ conv{Df(y) : y ∈ B_δ(x) ∩ D_f, δ in the tail}`, checked against
/// the gradient-sup route on the probe directions.
pub fn gen_gradient(
    f: &ScalarField,
    x: &[f64],
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
    n_samples: usize,
) -> Result<GradientHull> {
    check_inputs(f, x, None, sched)?;
    let mut hcfg = cfg.clone();
    hcfg.clarke.n_samples = n_samples;
    let mut points = Vec::new();
    let mut discarded = 0;
    for k in sched.tail_start()..sched.steps {
        let l = sample_gradients(f, x, sched.delta(k), &format!("hull/{k}"), &hcfg)?;
        points.extend(l.grads);
        discarded += l.discarded;
    }
    let probes = probe_directions(x.len(), cfg.clarke.n_probes, cfg.quad.seed);
    let hull_vertices = hull::extreme_points(&points, &probes);
    let check = gradient_levels(f, x, sched, cfg, "gradsup")?;
    let mut support_table = Vec::with_capacity(probes.len());
    let mut hull = GradientHull {
        x: x.to_vec(),
        points,
        delta_used: sched.last_delta(),
        hull_vertices,
        support_table: Vec::new(),
        discarded,
    };
    for v in probes {
        let support = hull.support(&v);
        let gradsup = gradsup_from_levels(&check, &v, sched).value;
        if (support - gradsup).abs() > cfg.tol.estimator_tol {
            return Err(Error::SupportMismatch {
                direction: v,
                hull: support,
                gradsup,
            });
        }
        support_table.push(SupportRow {
            direction: v,
            support,
            gradsup,
        });
    }
    hull.support_table = support_table;
    Ok(hull)
}

/// `ξ ∈ ∂f(x)` tested as `ξ·v ≤ support(v) + estimator_tol` on the probe set.
pub fn contains(hull: &GradientHull, xi: &[f64], cfg: &EstimatorConfig) -> bool {
    xi.len() == hull.dim()
        && hull
            .probes()
            .all(|v| dot(xi, v) <= hull.support(v) + cfg.tol.estimator_tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum CalculusRule {
    /// `∂(s f) = s ∂f`
    Scale { s: f64 },
    /// `∂(α f + β g) ⊆ α ∂f + β ∂g`
    Sum { alpha: f64, beta: f64 },
    /// `∂(f g) ⊆ f(x) ∂g + g(x) ∂f`
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalculusReport {
    pub rule: CalculusRule,
    pub equality: bool,
    pub directions: Vec<Vec<f64>>,
    /// Support of the hull of the composite function.
    pub lhs: Vec<f64>,
    /// Support of the combination of the hulls of the parts.
    pub rhs: Vec<f64>,
    /// `max (lhs − rhs)`
    pub max_excess: f64,
    /// `max (rhs − lhs)`, relevant for equalities.
    pub max_deficit: f64,
    pub slack: f64,
    pub holds: bool,
}

/// Support of `s·K` from the support of `K`.
fn scaled_support(h: &GradientHull, s: f64, v: &[f64]) -> f64 {
    if s >= 0.0 {
        s * h.support(v)
    } else {
        let w: Vec<f64> = v.iter().map(|c| -c).collect();
        -s * h.support(&w)
    }
}

/// Checks a calculus rule through support functions on the probe set, with
/// slack `1e-6 + 2·estimator_tol`.
pub fn check_calculus(
    f: &ScalarField,
    g: Option<&ScalarField>,
    x: &[f64],
    rule: CalculusRule,
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<CalculusReport> {
    let need_g = || g.ok_or_else(|| Error::InvalidArgument("rule needs a second function".into()));
    let n_samples = cfg.clarke.n_samples;
    let hf = gen_gradient(f, x, sched, cfg, n_samples)?;
    let (composite, parts): (ScalarField, Vec<(GradientHull, f64)>) = match rule {
        CalculusRule::Scale { s } => (f.scaled(s), vec![(hf, s)]),
        CalculusRule::Sum { alpha, beta } => {
            let g = need_g()?;
            let hg = gen_gradient(g, x, sched, cfg, n_samples)?;
            (f.combine(alpha, g, beta), vec![(hf, alpha), (hg, beta)])
        }
        CalculusRule::Product => {
            let g = need_g()?;
            let hg = gen_gradient(g, x, sched, cfg, n_samples)?;
            let (fx, gx) = (f.value(x), g.value(x));
            (f.product(g), vec![(hf, gx), (hg, fx)])
        }
    };
    let hc = gen_gradient(&composite, x, sched, cfg, n_samples)?;
    let directions: Vec<Vec<f64>> = hc.probes().map(|v| v.to_vec()).collect();
    let lhs: Vec<f64> = directions.iter().map(|v| hc.support(v)).collect();
    let rhs: Vec<f64> = directions
        .iter()
        .map(|v| parts.iter().map(|(h, s)| scaled_support(h, *s, v)).sum())
        .collect();
    let max_excess = lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_deficit = lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| b - a)
        .fold(f64::NEG_INFINITY, f64::max);
    let equality = matches!(rule, CalculusRule::Scale { .. });
    let slack = 1e-6 + 2.0 * cfg.tol.estimator_tol;
    let holds = max_excess <= slack && (!equality || max_deficit <= slack);
    Ok(CalculusReport {
        rule,
        equality,
        directions,
        lhs,
        rhs,
        max_excess,
        max_deficit,
        slack,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprcli::expr::Atan2Range;

    fn field(src: &str, dim: usize) -> ScalarField {
        ScalarField::parse(src, dim, Atan2Range::Pmpi).unwrap()
    }

    #[test]
    fn directional_derivatives_of_abs() {
        let cfg = EstimatorConfig::default();
        let s = default_schedule();
        for (src, fd) in [("abs(x1)", true), ("abs(x1)", false), ("-abs(x1)", false)] {
            let f = if fd {
                field(src, 1).without_gradient()
            } else {
                field(src, 1)
            };
            let q = dir_derivative_quotient(&f, &[0.0], &[1.0], &s, &cfg).unwrap();
            assert!((q.value - 1.0).abs() < 1e-3, "{src}: {}", q.value);
            let g = dir_derivative_gradsup(&f, &[0.0], &[1.0], &s, &cfg).unwrap();
            assert!((g.value - 1.0).abs() < 1e-3, "{src}: {}", g.value);
        }
        let m = field("max(x1, x2)", 2);
        let g = dir_derivative_gradsup(&m, &[0.0, 0.0], &[1.0, 1.0], &s, &cfg).unwrap();
        assert!((g.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_derivatives() {
        let cfg = EstimatorConfig::default();
        let s = default_schedule();
        let f = field("sin(x1) * exp(x2)", 2);
        let x = [0.4, -0.3];
        let df = [
            0.4f64.cos() * (-0.3f64).exp(),
            0.4f64.sin() * (-0.3f64).exp(),
        ];
        let v = [0.6, -0.8];
        let exact = df[0] * v[0] + df[1] * v[1];
        assert!(
            (dir_derivative_quotient(&f, &x, &v, &s, &cfg).unwrap().value - exact).abs() < 1e-3
        );
        assert!(
            (dir_derivative_gradsup(&f.clone().without_gradient(), &x, &v, &s, &cfg)
                .unwrap()
                .value
                - exact)
                .abs()
                < 1e-3
        );
        let h = gen_gradient(&f, &x, &s, &cfg, 256).unwrap();
        assert!(h.diameter() <= 1e-3);
        assert!(contains(&h, &df, &cfg));
    }

    #[test]
    fn hulls_of_kinks() {
        let cfg = EstimatorConfig::default();
        let s = default_schedule();
        let h = gen_gradient(&field("abs(x1)", 1), &[0.0], &s, &cfg, 256).unwrap();
        assert_eq!(h.hull_vertices, vec![vec![-1.0], vec![1.0]]);
        assert!(contains(&h, &[0.0], &cfg));
        assert!(!contains(&h, &[1.5], &cfg));
        let m = gen_gradient(
            &field("max(x1, x2)", 2).without_gradient(),
            &[0.0, 0.0],
            &s,
            &cfg,
            256,
        )
        .unwrap();
        for v in &m.hull_vertices {
            let d = (v[0] - 1.0)
                .abs()
                .max(v[1].abs())
                .min(v[0].abs().max((v[1] - 1.0).abs()));
            assert!(d < 1e-3, "{v:?}");
        }
        assert!(
            m.hull_vertices.iter().any(|v| v[0] > 0.5)
                && m.hull_vertices.iter().any(|v| v[1] > 0.5)
        );
        for row in &m.support_table {
            assert_eq!(m.vertex_support(&row.direction), row.support);
        }
    }

    #[test]
    fn calculus_examples() {
        let cfg = EstimatorConfig::default();
        let s = default_schedule();
        let abs = field("abs(x1)", 1);
        let id = field("x1", 1);
        let r = check_calculus(
            &abs,
            None,
            &[0.0],
            CalculusRule::Scale { s: -2.0 },
            &s,
            &cfg,
        )
        .unwrap();
        assert!(r.holds && r.max_deficit.abs() < 1e-9);
        let r = check_calculus(
            &abs,
            Some(&id),
            &[0.0],
            CalculusRule::Sum {
                alpha: 1.0,
                beta: 1.0,
            },
            &s,
            &cfg,
        )
        .unwrap();
        assert!(r.holds);
        let r = check_calculus(&id, Some(&abs), &[0.0], CalculusRule::Product, &s, &cfg).unwrap();
        assert!(r.holds && r.lhs.iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn non_lipschitz_is_reported() {
        let cfg = EstimatorConfig::default();
        let f = field("sqrt(abs(x1))", 1);
        let mut tight = cfg.clone();
        tight.tol.cap = 50.0;
        let r = dir_derivative_quotient(&f, &[0.0], &[1.0], &default_schedule(), &tight);
        assert!(matches!(r, Err(Error::NonLipschitz { .. })));
    }
}
