//! Ball means, Lebesgue points, precise representatives, jump detection and
//! boundary traces.

use serde::{Deserialize, Serialize};

use crate::aplimits::{
    accelerating, limit_from_values, ApproxLimitResult, FieldSamples, LevelValues,
};
use crate::config::EstimatorConfig;
use crate::density::{validate_inputs, Anchor, LimitEstimate};
use crate::error::{Error, Result};
use crate::extended::ExtendedReal;
use crate::field::ScalarField;
use crate::measure::{sample_target, stream_id, BoxN, DeltaSchedule, Region, Target};
use crate::sampling::sphere_directions;

fn samples_at(
    f: &ScalarField,
    omega: &Region,
    x: &[f64],
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<FieldSamples> {
    validate_inputs(omega, Some(x), sched, cfg)?;
    f.check_dim(omega.dim)?;
    FieldSamples::collect(f, omega, &Anchor::Point(x.to_vec()), sched, &cfg.quad)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanLimit {
    /// Ball means `⨍_{B_δ(x) ∩ Ω} f`.
    pub estimate: LimitEstimate,
    /// Ball means of `|f|`.
    pub abs_means: Vec<f64>,
    /// `limsup ⨍ |f| < ∞` as far as the schedule can tell.
    pub bounded: bool,
    pub discarded: usize,
}

fn mean_from_samples(s: &FieldSamples, sched: &DeltaSchedule, cfg: &EstimatorConfig) -> MeanLimit {
    let means: Vec<f64> = s.values.iter().map(|v| mean(v)).collect();
    let abs_means: Vec<f64> = s
        .values
        .iter()
        .map(|v| v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64)
        .collect();
    let tail = &abs_means[sched.tail_start().saturating_sub(1)..];
    let bounded = tail.iter().all(|m| m.is_finite() && *m < cfg.tol.cap) && !accelerating(tail);
    MeanLimit {
        estimate: LimitEstimate::from_values(sched.deltas(), means, sched.tail_window, sched.tol),
        abs_means,
        bounded,
        discarded: s.discarded,
    }
}

/// `lim_δ ⨍_{B_δ(x) ∩ Ω} f dλ`.
pub fn mean_limit(
    f: &ScalarField,
    omega: &Region,
    x: &[f64],
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<MeanLimit> {
    let s = samples_at(f, omega, x, sched, cfg)?;
    Ok(mean_from_samples(&s, sched, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LebesguePoint {
    pub is_lebesgue_point: bool,
    pub value_at_x: f64,
    /// `⨍_{B_δ(x) ∩ Ω} |f − f(x)|` per radius.
    pub residual: LimitEstimate,
    pub tol: f64,
}

pub fn is_lebesgue_point(
    f: &ScalarField,
    omega: &Region,
    x: &[f64],
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<LebesguePoint> {
    let s = samples_at(f, omega, x, sched, cfg)?;
    let fx = f.value(x);
    if !fx.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "{} is not finite at {x:?}",
            f.label()
        )));
    }
    let res: Vec<f64> = s
        .values
        .iter()
        .map(|v| v.iter().map(|y| (y - fx).abs()).sum::<f64>() / v.len() as f64)
        .collect();
    let residual = LimitEstimate::from_values(sched.deltas(), res, sched.tail_window, sched.tol);
    let tol = agreement_tol(&s.sorted(), cfg);
    Ok(LebesguePoint {
        is_lebesgue_point: residual.limsup_est <= tol,
        value_at_x: fx,
        residual,
        tol,
    })
}

/// Gap below which two limit values are read as equal.
fn agreement_tol(lv: &LevelValues, cfg: &EstimatorConfig) -> f64 {
    cfg.tol.jump_rel_tol * lv.coarse_spread(cfg.tol.density_tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "ap-limit")]
    ApLimit,
    #[serde(rename = "mean")]
    Mean,
    #[serde(rename = "default-zero")]
    DefaultZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreciseRepresentative {
    pub value: f64,
    pub provenance: Provenance,
    pub approximate: ApproxLimitResult,
    pub mean: MeanLimit,
    /// Whether the approximate limit and the mean limit agree, when both exist.
    pub agree: Option<bool>,
}

/// The approximate limit when it exists, otherwise a convergent ball mean,
/// otherwise zero.
pub fn precise_representative(
    f: &ScalarField,
    omega: &Region,
    x: &[f64],
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<PreciseRepresentative> {
    let s = samples_at(f, omega, x, sched, cfg)?;
    let approximate = limit_from_values(&s.sorted(), cfg);
    let mean = mean_from_samples(&s, sched, cfg);
    let m = mean.estimate.point_value;
    let mean_ok = mean.estimate.converged && mean.bounded;
    let (value, provenance) = match approximate.ap_limit {
        Some(v) => (v, Provenance::ApLimit),
        None if mean_ok => (m, Provenance::Mean),
        None => (0.0, Provenance::DefaultZero),
    };
    let agree = approximate
        .ap_limit
        .filter(|_| mean_ok)
        .map(|v| (v - m).abs() <= approximate.tol + sched.tol);
    Ok(PreciseRepresentative {
        value,
        provenance,
        approximate,
        mean,
        agree,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideResiduals {
    pub minus: f64,
    pub plus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpReport {
    pub is_jump: bool,
    pub f_minus: f64,
    pub f_plus: f64,
    /// Unit normal pointing to the `f_plus` side.
    pub nu: Vec<f64>,
    pub tilde_f: f64,
    /// One-sided `⨍|f − f^±|` over `Ω ∩ H^± ∩ B_δ(x)` at the smallest radius.
    pub residuals: SideResiduals,
    pub jump_tol: f64,
    /// Difference of half-ball means along `nu`, averaged over the tail radii.
    pub score: f64,
    /// Both one-sided approximate limits exist; false flags a low-confidence normal.
    pub confident: bool,
    pub f_lower: ExtendedReal,
    pub f_upper: ExtendedReal,
}

/// Centred tail points with their values, used to score candidate normals.
struct TailSamples {
    levels: Vec<(Vec<f64>, Vec<f64>)>,
    dim: usize,
}

impl TailSamples {
    fn new(s: &FieldSamples, x: &[f64]) -> Self {
        let levels = (s.tail_start..s.levels())
            .map(|k| {
                let mut c = s.points[k].coords.clone();
                for (i, v) in c.iter_mut().enumerate() {
                    *v -= x[i % x.len()];
                }
                (c, s.values[k].clone())
            })
            .collect();
        TailSamples {
            levels,
            dim: x.len(),
        }
    }

    fn score(&self, nu: &[f64]) -> f64 {
        let mut total = 0.0;
        for (c, v) in &self.levels {
            let (mut sp, mut np, mut sm, mut nm) = (0.0, 0usize, 0.0, 0usize);
            for (y, f) in c.chunks_exact(self.dim).zip(v) {
                let t: f64 = y.iter().zip(nu).map(|(a, b)| a * b).sum();
                if t > 0.0 {
                    sp += f;
                    np += 1;
                } else if t < 0.0 {
                    sm += f;
                    nm += 1;
                }
            }
            if np == 0 || nm == 0 {
                return f64::NEG_INFINITY;
            }
            total += sp / np as f64 - sm / nm as f64;
        }
        total / self.levels.len() as f64
    }
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Orthonormal basis of the complement of `nu`.
fn tangent_basis(nu: &[f64]) -> Vec<Vec<f64>> {
    let n = nu.len();
    let mut basis: Vec<Vec<f64>> = vec![nu.to_vec()];
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        for b in &basis {
            let d: f64 = e.iter().zip(b).map(|(a, c)| a * c).sum();
            for i in 0..n {
                e[i] -= d * b[i];
            }
        }
        let len = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-8 {
            basis.push(e.into_iter().map(|x| x / len).collect());
        }
        if basis.len() == n {
            break;
        }
    }
    basis.remove(0);
    basis
}

/// Golden-section maximization of `g` on `[lo, hi]`.
fn golden_max(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut ga, mut gb) = (g(a), g(b));
    for _ in 0..iters {
        if ga >= gb {
            hi = b;
            b = a;
            gb = ga;
            a = hi - r * (hi - lo);
            ga = g(a);
        } else {
            lo = a;
            a = b;
            ga = gb;
            b = lo + r * (hi - lo);
            gb = g(b);
        }
    }
    0.5 * (lo + hi)
}

/// Midpoint of the interval around `a` on which `g` stays at `g(a)`. The
/// lattice score is piecewise constant in the angle, so its maximum is a
/// plateau whose width is about one lattice spacing over δ.
fn plateau_centre(g: &impl Fn(f64) -> f64, a: f64, lo: f64, hi: f64) -> f64 {
    let top = g(a);
    let on = |t: f64| g(t) >= top - 1e-12 * (1.0 + top.abs());
    let edge = |mut inside: f64, outside: f64| {
        if on(outside) {
            return outside;
        }
        let mut out = outside;
        for _ in 0..40 {
            let m = 0.5 * (inside + out);
            if on(m) {
                inside = m;
            } else {
                out = m;
            }
        }
        inside
    };
    0.5 * (edge(a, lo) + edge(a, hi))
}

fn search_normal(tail: &TailSamples, n: usize, n_dirs: usize) -> (Vec<f64>, f64) {
    let dirs = sphere_directions(n, n_dirs.max(2));
    let scores: Vec<f64> = dirs.iter().map(|d| tail.score(d)).collect();
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut tied: Vec<&Vec<f64>> = dirs
        .iter()
        .zip(&scores)
        .filter(|(_, s)| **s == best)
        .map(|(d, _)| d)
        .collect();
    tied.sort_by(|a, b| a.partial_cmp(b).expect("finite directions"));
    let mut nu = tied[0].clone();
    if n == 1 {
        return (nu, best);
    }
    let spacing = match n {
        2 => std::f64::consts::TAU / dirs.len() as f64,
        _ => (4.0 * std::f64::consts::PI / dirs.len() as f64).sqrt(),
    };
    let rounds = if n == 2 { 1 } else { 3 };
    let mut width = 1.5 * spacing;
    for _ in 0..rounds {
        for t in tangent_basis(&nu) {
            let cand = |a: f64| normalized(nu.iter().zip(&t).map(|(v, w)| v + a * w).collect());
            let g = |a: f64| tail.score(&cand(a));
            let a = plateau_centre(&g, golden_max(&g, -width, width, 48), -width, width);
            let next = cand(a);
            if tail.score(&next) >= tail.score(&nu) {
                nu = next;
            }
        }
        width *= 0.5;
    }
    let s = tail.score(&nu);
    (nu, s)
}

/// Limit on one side of the hyperplane through `x` with normal `nu`: the
/// one-sided approximate limit when it exists, else the one-sided mean at
/// the smallest radius.
fn one_sided(
    s: &FieldSamples,
    x: &[f64],
    nu: &[f64],
    sign: f64,
    cfg: &EstimatorConfig,
    tol: f64,
) -> Result<(f64, bool, f64)> {
    let side = |y: &[f64]| {
        sign * y
            .iter()
            .zip(x)
            .zip(nu)
            .map(|((a, b), c)| (a - b) * c)
            .sum::<f64>()
            > 0.0
    };
    let lv = s
        .sorted_where(side)
        .ok_or_else(|| Error::NotDensityPoint(format!("empty half-ball at {x:?}")))?;
    let upper = lv.ap_limsup(&cfg.tol);
    let lower = lv.negated().ap_limsup(&cfg.tol).neg();
    let last = s.levels() - 1;
    let pts = &s.points[last];
    let vals: Vec<f64> = pts
        .iter()
        .zip(&s.values[last])
        .filter(|(y, _)| side(y))
        .map(|(_, v)| *v)
        .collect();
    let (value, exact) = match (lower, upper) {
        (ExtendedReal::Finite(lo), ExtendedReal::Finite(hi)) if hi - lo <= tol => {
            (0.5 * (lo + hi), true)
        }
        _ => (mean(&vals), false),
    };
    let residual = vals.iter().map(|v| (v - value).abs()).sum::<f64>() / vals.len() as f64;
    Ok((value, exact, residual))
}

/// Jump normal and one-sided limits at `x`.
pub fn detect_jump(
    f: &ScalarField,
    omega: &Region,
    x: &[f64],
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
    n_dirs: usize,
) -> Result<JumpReport> {
    let s = samples_at(f, omega, x, sched, cfg)?;
    let lv = s.sorted();
    let global = limit_from_values(&lv, cfg);
    if !global.f_lower.is_finite() || !global.f_upper.is_finite() {
        return Err(Error::UnboundedNearX(format!(
            "f^i = {}, f^s = {} at {x:?}",
            global.f_lower, global.f_upper
        )));
    }
    let jump_tol = agreement_tol(&lv, cfg);
    let tail = TailSamples::new(&s, x);
    let (nu, score) = search_normal(&tail, x.len(), n_dirs);
    let (f_plus, plus_exact, r_plus) = one_sided(&s, x, &nu, 1.0, cfg, jump_tol)?;
    let (f_minus, minus_exact, r_minus) = one_sided(&s, x, &nu, -1.0, cfg, jump_tol)?;
    Ok(JumpReport {
        is_jump: f_plus - f_minus > jump_tol,
        f_minus,
        f_plus,
        tilde_f: 0.5 * (f_minus + f_plus),
        nu,
        residuals: SideResiduals {
            minus: r_minus,
            plus: r_plus,
        },
        jump_tol,
        score,
        confident: plus_exact && minus_exact,
        f_lower: global.f_lower,
        f_upper: global.f_upper,
    })
}

/// Interior ball means at a boundary point of `Ω`.
pub fn boundary_trace(
    f: &ScalarField,
    omega: &Region,
    x_boundary: &[f64],
    sched: &DeltaSchedule,
    cfg: &EstimatorConfig,
) -> Result<MeanLimit> {
    validate_inputs(omega, Some(x_boundary), sched, cfg)?;
    let delta = sched.last_delta();
    let window = BoxN::cube(x_boundary, delta);
    let ball = sample_target(
        &Target::Ball {
            center: x_boundary,
            delta,
        },
        &Region::whole(window),
        stream_id("trace", 0),
        &cfg.quad,
    );
    let inside = ball.count(&|y| omega.contains(y), cfg.quad.parallel);
    if inside == 0 || inside == ball.len() {
        return Err(Error::InvalidArgument(format!(
            "{x_boundary:?} is not within {delta:e} of the boundary of {}",
            omega.label
        )));
    }
    mean_limit(f, omega, x_boundary, sched, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprcli::expr::Atan2Range;
    use std::f64::consts::PI;

    fn plane() -> Region {
        Region::whole(BoxN::cube(&[0.0, 0.0], 1.0))
    }

    fn field(src: &str) -> ScalarField {
        ScalarField::parse(src, 2, Atan2Range::Pmpi).unwrap()
    }

    fn sched() -> DeltaSchedule {
        DeltaSchedule::for_bbox(&BoxN::cube(&[0.0, 0.0], 1.0))
    }

    fn unit_square() -> Region {
        Region::open_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn means() {
        let cfg = EstimatorConfig::default();
        let c = mean_limit(
            &field("cos(x1) * exp(x2)"),
            &plane(),
            &[0.2, -0.1],
            &sched(),
            &cfg,
        )
        .unwrap();
        assert!((c.estimate.point_value - 0.2f64.cos() * (-0.1f64).exp()).abs() < 1e-4);
        let step = mean_limit(
            &field("if(x1 > 0, 1, 0)"),
            &plane(),
            &[0.0, 0.0],
            &sched(),
            &cfg,
        )
        .unwrap();
        assert!((step.estimate.point_value - 0.5).abs() < 5e-3);
        assert!(step.bounded && step.estimate.converged);
    }

    #[test]
    fn lebesgue_points() {
        let cfg = EstimatorConfig::default();
        let step = field("if(x1 > 0, 1, 0)");
        assert!(
            is_lebesgue_point(&field("x1 * x2"), &plane(), &[0.3, 0.4], &sched(), &cfg)
                .unwrap()
                .is_lebesgue_point
        );
        assert!(
            is_lebesgue_point(&step, &plane(), &[0.3, 0.0], &sched(), &cfg)
                .unwrap()
                .is_lebesgue_point
        );
        let at0 = is_lebesgue_point(&step, &plane(), &[0.0, 0.0], &sched(), &cfg).unwrap();
        assert!(!at0.is_lebesgue_point);
        assert!((at0.residual.point_value - 0.5).abs() < 5e-3);
    }

    #[test]
    fn representatives() {
        let cfg = EstimatorConfig::default();
        let c = precise_representative(&field("x1 + 2*x2"), &plane(), &[0.1, 0.1], &sched(), &cfg)
            .unwrap();
        assert_eq!(c.provenance, Provenance::ApLimit);
        assert!((c.value - 0.3).abs() < 1e-2);
        assert_eq!(c.agree, Some(true));
        let s = precise_representative(
            &field("if(x1 > 0, 1, 0)"),
            &plane(),
            &[0.0, 0.0],
            &sched(),
            &cfg,
        )
        .unwrap();
        assert_eq!(s.provenance, Provenance::Mean);
        assert!((s.value - 0.5).abs() < 5e-3);
    }

    #[test]
    fn jumps() {
        let cfg = EstimatorConfig::default();
        let j = detect_jump(
            &field("if(x1 > 0, 1, 0)"),
            &plane(),
            &[0.0, 0.0],
            &sched(),
            &cfg,
            64,
        )
        .unwrap();
        assert!(j.is_jump && j.confident);
        assert_eq!((j.f_minus, j.f_plus, j.tilde_f), (0.0, 1.0, 0.5));
        assert!(j.nu[1].atan2(j.nu[0]).abs() < 1f64.to_radians());
        let th = 2.1f64;
        let w = [th.cos(), th.sin()];
        let f = field(&format!("if(x1*{} + x2*{} > 0, 3, -1)", w[0], w[1]));
        let j = detect_jump(&f, &plane(), &[0.0, 0.0], &sched(), &cfg, 64).unwrap();
        let ang = (j.nu[0] * w[0] + j.nu[1] * w[1]).clamp(-1.0, 1.0).acos();
        assert!(ang < 1f64.to_radians(), "{ang}");
        assert_eq!((j.f_minus, j.f_plus), (-1.0, 3.0));
        let c = detect_jump(
            &field("sin(x1) + x2"),
            &plane(),
            &[0.2, 0.1],
            &sched(),
            &cfg,
            64,
        )
        .unwrap();
        assert!(!c.is_jump);
        let fx = 0.2f64.sin() + 0.1;
        assert!((c.f_minus - fx).abs() < 1e-2 && (c.f_plus - fx).abs() < 1e-2);
    }

    #[test]
    fn unbounded_field_is_rejected_by_jump_detection() {
        let cfg = EstimatorConfig::default();
        let disk = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
        let f = ScalarField::parse("1/sqrt(atan2(x2, x1))", 2, Atan2Range::ZeroTwoPi).unwrap();
        let r = detect_jump(
            &f,
            &disk,
            &[0.0, 0.0],
            &DeltaSchedule::for_bbox(&disk.bbox),
            &cfg,
            64,
        );
        assert!(matches!(r, Err(Error::UnboundedNearX(_))));
    }

    #[test]
    fn traces() {
        let cfg = EstimatorConfig::default();
        let sq = unit_square();
        let s = DeltaSchedule::for_bbox(&sq.bbox);
        let c = boundary_trace(&ScalarField::constant(2, 2.5), &sq, &[0.0, 0.5], &s, &cfg).unwrap();
        assert!((c.estimate.point_value - 2.5).abs() < 1e-12);
        let t = boundary_trace(&field("x1"), &sq, &[0.0, 0.5], &s, &cfg).unwrap();
        assert!(t.estimate.point_value.abs() <= 2.0 * s.last_delta());
        let p = boundary_trace(&field("x1 * x2"), &sq, &[1.0, 0.5], &s, &cfg).unwrap();
        assert!((p.estimate.point_value - 0.5).abs() < 1e-2);
        assert!(boundary_trace(&field("x1"), &sq, &[0.5, 0.5], &s, &cfg).is_err());
    }

    #[test]
    fn singular_field_mean() {
        let cfg = EstimatorConfig::default().with_resolution(512);
        let disk = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
        let f = ScalarField::parse("1/sqrt(atan2(x2, x1))", 2, Atan2Range::ZeroTwoPi).unwrap();
        let s = DeltaSchedule::for_bbox(&disk.bbox);
        let p = precise_representative(&f, &disk, &[0.0, 0.0], &s, &cfg).unwrap();
        assert_eq!(p.provenance, Provenance::Mean);
        assert!((p.value - (2.0 / PI).sqrt()).abs() < 1e-2, "{}", p.value);
    }
}
