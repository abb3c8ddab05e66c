//! Command dispatch shared by the binary and the tests.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::expr::Atan2Range;
use super::registry::{resolve_field, resolve_region};
use crate::aplimits::{ap_limit, dens_interval, ess_inf_near, ess_sup_near};
use crate::clarke::{self, CalculusRule};
use crate::config::EstimatorConfig;
use crate::density::{concentration_direction, cone_density, density_at_point, density_at_set};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::gaussgreen::{gg_residual, gg_sweep, vanishing_functional_demo};
use crate::measure::{BoxN, DeltaSchedule, Region};
use crate::representative::{detect_jump, is_lebesgue_point, precise_representative};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Density,
    Aplim,
    Representative,
    Jump,
    Clarke,
    GaussGreen,
    DemoVanishing,
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_string()))
            .map_err(|_| Error::InvalidArgument(format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

/// Everything that determines a report besides its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// `None` selects the per-command default.
    pub schedule: Option<DeltaSchedule>,
    pub estimator: EstimatorConfig,
    pub atan2_range: Atan2Range,
    /// Half side of the bounding box given to inline predicates, centred at the query point.
    pub window: f64,
    /// Candidate directions for jump normals and cone concentration; `None` picks 64 in 2D, 192 otherwise.
    pub n_dirs: Option<usize>,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schedule: None,
            estimator: EstimatorConfig::default(),
            atan2_range: Atan2Range::default(),
            window: 1.0,
            n_dirs: None,
            format: OutputFormat::Json,
        }
    }
}

/// Inputs as given on the command line; fields and regions are registry names or expressions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub f: Option<String>,
    pub g: Option<String>,
    /// Vector field components.
    pub phi: Option<Vec<String>>,
    pub set: Option<String>,
    pub domain: Option<String>,
    /// Null set `C` for densities and limits near a set instead of at a point.
    pub near: Option<String>,
    pub at: Option<Vec<f64>>,
    pub dim: Option<usize>,
    /// Cone axis for `density`.
    pub direction: Option<Vec<f64>>,
    /// Cone half-angle for `density`.
    pub angle: Option<f64>,
    /// Search for a concentration direction in `density`.
    pub concentration: bool,
    /// Calculus rule for `clarke`.
    pub rule: Option<CalculusRule>,
    pub e1: Option<String>,
    pub e2: Option<String>,
    /// Lattice resolutions for a Gauss-Green refinement sweep.
    pub sweep: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Value,
    /// 0, or 3 when the report carries `converged: false`.
    pub exit_code: i32,
    pub csv: Option<String>,
}

impl Outcome {
    /// Text written to standard output for the configured format.
    pub fn render(&self, format: OutputFormat) -> String {
        match (format, &self.csv) {
            (OutputFormat::Csv, Some(csv)) => csv.clone(),
            _ => serde_json::to_string_pretty(&self.report).expect("json values serialize"),
        }
    }
}

struct Ctx<'a> {
    inputs: &'a Inputs,
    cfg: &'a RunConfig,
    dim: usize,
    window: BoxN,
}

impl Ctx<'_> {
    fn range(&self) -> Atan2Range {
        self.cfg.atan2_range
    }

    fn need<'b>(&self, v: &'b Option<String>, flag: &str) -> Result<&'b str> {
        v.as_deref()
            .ok_or_else(|| Error::InvalidArgument(format!("--{flag} is required")))
    }

    fn field(&self, v: &Option<String>, flag: &str) -> Result<crate::field::ScalarField> {
        resolve_field(self.need(v, flag)?, self.dim, self.range())
    }

    fn region(&self, v: &Option<String>, flag: &str) -> Result<Region> {
        resolve_region(self.need(v, flag)?, self.dim, &self.window, self.range())
    }

    fn domain(&self) -> Result<Region> {
        match &self.inputs.domain {
            Some(d) => resolve_region(d, self.dim, &self.window, self.range()),
            None => Ok(Region::whole(self.window.clone())),
        }
    }

    fn at(&self) -> Result<&[f64]> {
        self.inputs
            .at
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("--at is required".into()))
    }

    fn schedule(&self, fallback: DeltaSchedule) -> Result<DeltaSchedule> {
        let s = self.cfg.schedule.clone().unwrap_or(fallback);
        s.validate()?;
        Ok(s)
    }

    fn n_dirs(&self) -> usize {
        self.cfg
            .n_dirs
            .unwrap_or(if self.dim == 2 { 64 } else { 192 })
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

/// Runs one command. Precondition failures are returned as errors; the caller
/// maps them to exit codes with [`Error::exit_code`].
pub fn run(cmd: Command, inputs: &Inputs, cfg: &RunConfig) -> Result<Outcome> {
    cfg.estimator.quad.validate()?;
    let dim = match (inputs.dim, &inputs.at) {
        (Some(d), Some(at)) if d != at.len() => {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: at.len(),
            })
        }
        (Some(d), _) => d,
        (None, Some(at)) => at.len(),
        (None, None) => 2,
    };
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if !(cfg.window > 0.0) {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    let centre = inputs.at.clone().unwrap_or_else(|| vec![0.0; dim]);
    let ctx = Ctx {
        inputs,
        cfg,
        dim,
        window: BoxN::cube(&centre, cfg.window),
    };
    let est = &cfg.estimator;
    let generic = DeltaSchedule::for_bbox(&ctx.window);
    let mut csv = None;
    let (result, converged) = match cmd {
        Command::Density => {
            let omega = ctx.domain()?;
            let sched = ctx.schedule(generic)?;
            if inputs.concentration {
                let x = ctx.at()?;
                let c = concentration_direction(&omega, x, &sched, est, ctx.n_dirs())?;
                let conv = c.estimate.converged;
                (to_value(&c)?, conv)
            } else if let Some(v) = &inputs.direction {
                let x = ctx.at()?;
                let alpha = inputs.angle.unwrap_or(est.cone.half_angle);
                let e = cone_density(&omega, x, v, alpha, &sched, est)?;
                csv = Some(levels_csv(&e.deltas, &e.values));
                let conv = e.converged;
                (json!({"value": e.point_value, "estimate": e}), conv)
            } else {
                let a = ctx.region(&inputs.set, "set")?;
                let e = match &inputs.near {
                    Some(_) => {
                        density_at_set(&a, &omega, &ctx.region(&inputs.near, "near")?, &sched, est)?
                    }
                    None => density_at_point(&a, &omega, ctx.at()?, &sched, est)?,
                };
                csv = Some(levels_csv(&e.deltas, &e.values));
                let conv = e.converged;
                (json!({"value": e.point_value, "estimate": e}), conv)
            }
        }
        Command::Aplim => {
            let f = ctx.field(&inputs.f, "f")?;
            let omega = ctx.domain()?;
            let sched = ctx.schedule(generic)?;
            match &inputs.near {
                Some(_) => {
                    let c = ctx.region(&inputs.near, "near")?;
                    let interval = dens_interval(&f, &omega, &c, &sched, est)?;
                    let sup = ess_sup_near(&f, &omega, &c, &sched, est)?;
                    let inf = ess_inf_near(&f, &omega, &c, &sched, est)?;
                    (
                        json!({"interval": to_value(&interval)?, "ess_sup": to_value(&sup)?, "ess_inf": to_value(&inf)?}),
                        true,
                    )
                }
                None => {
                    let x = ctx.at()?;
                    let r = ap_limit(&f, &omega, x, &sched, est)?;
                    let c = Region::point(x);
                    let mut v = to_value(&r)?;
                    v["ess_sup"] = to_value(&ess_sup_near(&f, &omega, &c, &sched, est)?)?;
                    v["ess_inf"] = to_value(&ess_inf_near(&f, &omega, &c, &sched, est)?)?;
                    (v, true)
                }
            }
        }
        Command::Representative => {
            let f = ctx.field(&inputs.f, "f")?;
            let omega = ctx.domain()?;
            let sched = ctx.schedule(generic)?;
            let x = ctx.at()?;
            let p = precise_representative(&f, &omega, x, &sched, est)?;
            let l = is_lebesgue_point(&f, &omega, x, &sched, est)?;
            csv = Some(levels_csv(&p.mean.estimate.deltas, &p.mean.estimate.values));
            let conv = p.mean.estimate.converged;
            let mut v = to_value(&p)?;
            v["lebesgue"] = to_value(&l)?;
            (v, conv)
        }
        Command::Jump => {
            let f = ctx.field(&inputs.f, "f")?;
            let omega = ctx.domain()?;
            let sched = ctx.schedule(generic)?;
            let j = detect_jump(&f, &omega, ctx.at()?, &sched, est, ctx.n_dirs())?;
            (to_value(&j)?, true)
        }
        Command::Clarke => {
            let f = ctx.field(&inputs.f, "f")?;
            let sched = ctx.schedule(clarke::default_schedule())?;
            let x = ctx.at()?;
            match inputs.rule {
                Some(rule) => {
                    let g = match &inputs.g {
                        Some(_) => Some(ctx.field(&inputs.g, "g")?),
                        None => None,
                    };
                    let r = clarke::check_calculus(&f, g.as_ref(), x, rule, &sched, est)?;
                    (to_value(&r)?, true)
                }
                None => {
                    let h = clarke::gen_gradient(&f, x, &sched, est, est.clarke.n_samples)?;
                    let mut v = to_value(&h)?;
                    if let Some(d) = &inputs.direction {
                        v["quotient"] =
                            to_value(&clarke::dir_derivative_quotient(&f, x, d, &sched, est)?)?;
                        v["gradsup"] =
                            to_value(&clarke::dir_derivative_gradsup(&f, x, d, &sched, est)?)?;
                    }
                    let mut rows = String::from("direction,support,gradsup\n");
                    for r in &h.support_table {
                        let d: Vec<String> = r.direction.iter().map(|c| c.to_string()).collect();
                        let _ = writeln!(rows, "\"{}\",{},{}", d.join(" "), r.support, r.gradsup);
                    }
                    csv = Some(rows);
                    (v, true)
                }
            }
        }
        Command::GaussGreen => {
            let f = ctx.field(&inputs.f, "f")?;
            let comps = inputs
                .phi
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("--phi is required".into()))?;
            let phi = VectorField::new(
                comps
                    .iter()
                    .map(|c| resolve_field(c, dim, ctx.range()))
                    .collect::<Result<_>>()?,
            )?;
            let omega = ctx.region(&inputs.domain, "domain")?;
            match &inputs.sweep {
                Some(res) => {
                    let reports = gg_sweep(&f, &phi, &omega, est, res)?;
                    let mut rows = String::from("h,residual\n");
                    for r in &reports {
                        let _ = writeln!(rows, "{},{}", r.grid_h, r.residual);
                    }
                    csv = Some(rows);
                    (json!({"sweep": to_value(&reports)?}), true)
                }
                None => (to_value(&gg_residual(&f, &phi, &omega, est)?)?, true),
            }
        }
        Command::DemoVanishing => {
            let f = ctx.field(&inputs.f, "f")?;
            let e1 = ctx.region(&inputs.e1, "e1")?;
            let e2 = ctx.region(&inputs.e2, "e2")?;
            let omega = ctx.domain()?;
            let sched = ctx.schedule(clarke::default_schedule())?;
            let r = vanishing_functional_demo(&f, ctx.at()?, &e1, &e2, &omega, &sched, est)?;
            let conv = r.converged;
            (to_value(&r)?, conv)
        }
    };
    let mut report = Map::new();
    report.insert("command".into(), to_value(&cmd)?);
    report.insert("inputs".into(), to_value(inputs)?);
    report.insert("config".into(), to_value(cfg)?);
    report.insert("converged".into(), Value::Bool(converged));
    match result {
        Value::Object(m) => {
            for (k, v) in m {
                report.entry(k).or_insert(v);
            }
        }
        other => {
            report.insert("result".into(), other);
        }
    }
    Ok(Outcome {
        report: Value::Object(report),
        exit_code: if converged { 0 } else { 3 },
        csv,
    })
}

fn levels_csv(deltas: &[f64], values: &[f64]) -> String {
    let mut s = String::from("delta,value\n");
    for (d, v) in deltas.iter().zip(values) {
        let _ = writeln!(s, "{d},{v}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(at: &[f64]) -> Inputs {
        Inputs {
            at: Some(at.to_vec()),
            ..Inputs::default()
        }
    }

    #[test]
    fn density_half_plane() {
        let mut i = inputs(&[0.0, 0.0]);
        i.set = Some("x2>0".into());
        i.domain = Some("true".into());
        let o = run(Command::Density, &i, &RunConfig::default()).unwrap();
        assert_eq!(o.exit_code, 0);
        assert!((o.report["value"].as_f64().unwrap() - 0.5).abs() < 5e-3);
        assert_eq!(o.report["converged"], Value::Bool(true));
        assert_eq!(o.report["config"]["estimator"]["quad"]["resolution"], 128);
    }

    #[test]
    fn clarke_abs_hull() {
        let mut i = inputs(&[0.0]);
        i.f = Some("abs(x1)".into());
        i.dim = Some(1);
        let o = run(Command::Clarke, &i, &RunConfig::default()).unwrap();
        let v = o.report["hull_vertices"].as_array().unwrap();
        assert_eq!(v.len(), 2);
        assert!((v[0][0].as_f64().unwrap() + 1.0).abs() < 1e-3);
        assert!((v[1][0].as_f64().unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn singular_field_report() {
        let mut i = inputs(&[0.0, 0.0]);
        i.f = Some("1/sqrt(atan2(x2,x1))".into());
        let cfg = RunConfig {
            atan2_range: Atan2Range::ZeroTwoPi,
            ..RunConfig::default()
        };
        let o = run(Command::Aplim, &i, &cfg).unwrap();
        assert_eq!(o.report["f_upper"], Value::String("+inf".into()));
        assert!(o.report["ap_limit"].is_null());
        assert!((o.report["f_lower"].as_f64().unwrap() - 0.3989).abs() < 2e-2);
        assert_eq!(o.report["config"]["atan2_range"], "0..2pi");
    }

    #[test]
    fn preconditions() {
        let i = inputs(&[0.0, 0.0]);
        let e = run(Command::Aplim, &i, &RunConfig::default()).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let mut i = inputs(&[0.0, 0.0]);
        i.dim = Some(3);
        assert!(run(Command::Density, &i, &RunConfig::default()).is_err());
        assert_eq!(
            "gauss-green".parse::<Command>().unwrap(),
            Command::GaussGreen
        );
        assert!("nope".parse::<Command>().is_err());
    }
}
