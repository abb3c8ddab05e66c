use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::window::BoxN;
use crate::error::{Error, Result};
use crate::exprcli::expr::{parse, Atan2Range, Program};

/// Explicit geometry of a Lebesgue-null set.
///
/// Curves are parametrized by `x1` running over `[t0, t1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NullSet {
    Points {
        points: Vec<Vec<f64>>,
    },
    Segment {
        a: Vec<f64>,
        b: Vec<f64>,
    },
    Polyline {
        points: Vec<Vec<f64>>,
        closed: bool,
    },
    Circle {
        center: Vec<f64>,
        radius: f64,
    },
    Curve {
        components: Vec<String>,
        t0: f64,
        t1: f64,
        closed: bool,
    },
    Multi {
        parts: Vec<NullSet>,
    },
}

/// Ordered sample chain; consecutive points are joined by segments.
#[derive(Debug, Clone)]
pub struct Chain {
    pub points: Vec<Vec<f64>>,
    pub closed: bool,
}

/// Boundary quadrature node: position, arclength weight, unit tangent.
#[derive(Debug, Clone)]
pub struct ArcNode {
    pub point: Vec<f64>,
    pub weight: f64,
    pub tangent: Vec<f64>,
}

fn compile_curve(components: &[String]) -> Result<Vec<Program>> {
    components
        .iter()
        .map(|s| Ok(parse(s, 1)?.compile(1, Atan2Range::Pmpi)))
        .collect()
}

fn eval_curve(progs: &[Program], t: f64) -> Vec<f64> {
    progs.iter().map(|p| p.eval(&[t])).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

impl NullSet {
    pub fn dim(&self) -> usize {
        match self {
            NullSet::Points { points } | NullSet::Polyline { points, .. } => {
                points.first().map_or(0, Vec::len)
            }
            NullSet::Segment { a, .. } => a.len(),
            NullSet::Circle { center, .. } => center.len(),
            NullSet::Curve { components, .. } => components.len(),
            NullSet::Multi { parts } => parts.first().map_or(0, NullSet::dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(Error::InvalidArgument("null set without points".into()));
        }
        let same = |pts: &[Vec<f64>]| pts.iter().all(|p| p.len() == n);
        let ok = match self {
            NullSet::Points { points } => !points.is_empty() && same(points),
            NullSet::Polyline { points, .. } => points.len() >= 2 && same(points),
            NullSet::Segment { a, b } => a.len() == b.len(),
            NullSet::Circle { center, radius } => center.len() == 2 && *radius > 0.0,
            NullSet::Curve {
                components, t0, t1, ..
            } => {
                compile_curve(components)?;
                t1 > t0
            }
            NullSet::Multi { parts } => {
                for p in parts {
                    p.validate()?;
                }
                !parts.is_empty() && parts.iter().all(|p| p.dim() == n)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "malformed null set {self:?}"
            )))
        }
    }

    /// Sample chains with consecutive spacing at most `spacing`.
    pub fn chains(&self, spacing: f64) -> Result<Vec<Chain>> {
        let mut out = Vec::new();
        self.push_chains(spacing, &mut out)?;
        Ok(out)
    }

    fn push_chains(&self, spacing: f64, out: &mut Vec<Chain>) -> Result<()> {
        match self {
            NullSet::Points { points } => {
                for p in points {
                    out.push(Chain {
                        points: vec![p.clone()],
                        closed: false,
                    });
                }
            }
            NullSet::Segment { a, b } => {
                let m = (dist(a, b) / spacing).ceil().max(1.0) as usize;
                let points = (0..=m).map(|i| lerp(a, b, i as f64 / m as f64)).collect();
                out.push(Chain {
                    points,
                    closed: false,
                });
            }
            NullSet::Polyline { points, closed } => {
                let mut pts = Vec::new();
                let nseg = if *closed {
                    points.len()
                } else {
                    points.len() - 1
                };
                for s in 0..nseg {
                    let (a, b) = (&points[s], &points[(s + 1) % points.len()]);
                    let m = (dist(a, b) / spacing).ceil().max(1.0) as usize;
                    for i in 0..m {
                        pts.push(lerp(a, b, i as f64 / m as f64));
                    }
                }
                if !*closed {
                    pts.push(points[points.len() - 1].clone());
                }
                out.push(Chain {
                    points: pts,
                    closed: *closed,
                });
            }
            NullSet::Circle { center, radius } => {
                let m = ((TAU * radius) / spacing).ceil().max(8.0) as usize;
                let points = (0..m)
                    .map(|i| {
                        let th = TAU * i as f64 / m as f64;
                        vec![center[0] + radius * th.cos(), center[1] + radius * th.sin()]
                    })
                    .collect();
                out.push(Chain {
                    points,
                    closed: true,
                });
            }
            NullSet::Curve {
                components,
                t0,
                t1,
                closed,
            } => {
                let progs = compile_curve(components)?;
                let pilot = 1024;
                let mut len = 0.0;
                let mut prev = eval_curve(&progs, *t0);
                for i in 1..=pilot {
                    let p = eval_curve(&progs, t0 + (t1 - t0) * i as f64 / pilot as f64);
                    len += dist(&prev, &p);
                    prev = p;
                }
                let m = ((len / spacing).ceil() as usize).max(pilot);
                let last = if *closed { m } else { m + 1 };
                let points = (0..last)
                    .map(|i| eval_curve(&progs, t0 + (t1 - t0) * i as f64 / m as f64))
                    .collect();
                out.push(Chain {
                    points,
                    closed: *closed,
                });
            }
            NullSet::Multi { parts } => {
                for p in parts {
                    p.push_chains(spacing, out)?;
                }
            }
        }
        Ok(())
    }

    pub fn bbox(&self) -> Result<BoxN> {
        let pts: Vec<Vec<f64>> = match self {
            NullSet::Circle { center, radius } => vec![
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ],
            NullSet::Curve { .. } => {
                let span = match self {
                    NullSet::Curve { t0, t1, .. } => t1 - t0,
                    _ => unreachable!(),
                };
                self.chains(span.abs() / 1024.0 + f64::MIN_POSITIVE)?
                    .into_iter()
                    .flat_map(|c| c.points)
                    .collect()
            }
            NullSet::Multi { parts } => {
                let mut b: Option<BoxN> = None;
                for p in parts {
                    let pb = p.bbox()?;
                    b = Some(match b {
                        Some(x) => x.hull(&pb),
                        None => pb,
                    });
                }
                return b.ok_or_else(|| Error::InvalidArgument("empty null set".into()));
            }
            _ => self
                .chains(f64::INFINITY)?
                .into_iter()
                .flat_map(|c| c.points)
                .collect(),
        };
        BoxN::bounding(&pts).ok_or_else(|| Error::InvalidArgument("empty null set".into()))
    }

    /// Midpoint arclength quadrature along the curve parts (planar or spatial).
    /// Isolated points carry no arclength and are skipped.
    pub fn arc_quadrature(&self, spacing: f64) -> Result<Vec<ArcNode>> {
        let mut out = Vec::new();
        self.push_arc(spacing, &mut out)?;
        Ok(out)
    }

    fn push_arc(&self, spacing: f64, out: &mut Vec<ArcNode>) -> Result<()> {
        match self {
            NullSet::Points { .. } => {}
            NullSet::Circle { center, radius } => {
                let m = ((TAU * radius) / spacing).ceil().max(8.0) as usize;
                let dth = TAU / m as f64;
                for i in 0..m {
                    let th = (i as f64 + 0.5) * dth;
                    out.push(ArcNode {
                        point: vec![center[0] + radius * th.cos(), center[1] + radius * th.sin()],
                        weight: radius * dth,
                        tangent: vec![-th.sin(), th.cos()],
                    });
                }
            }
            NullSet::Segment { a, b } => {
                push_segment_nodes(a, b, spacing, out);
            }
            NullSet::Polyline { points, closed } => {
                let nseg = if *closed {
                    points.len()
                } else {
                    points.len() - 1
                };
                for s in 0..nseg {
                    push_segment_nodes(&points[s], &points[(s + 1) % points.len()], spacing, out);
                }
            }
            NullSet::Curve {
                components, t0, t1, ..
            } => {
                let progs = compile_curve(components)?;
                let chain = &self.chains(spacing)?[0];
                let m = if matches!(self, NullSet::Curve { closed: true, .. }) {
                    chain.points.len()
                } else {
                    chain.points.len() - 1
                };
                let dt = (t1 - t0) / m as f64;
                for i in 0..m {
                    let tm = t0 + (i as f64 + 0.5) * dt;
                    let a = eval_curve(&progs, tm - 0.5 * dt);
                    let b = eval_curve(&progs, tm + 0.5 * dt);
                    let w = dist(&a, &b);
                    if w > 0.0 {
                        out.push(ArcNode {
                            point: eval_curve(&progs, tm),
                            weight: w,
                            tangent: a.iter().zip(&b).map(|(p, q)| (q - p) / w).collect(),
                        });
                    }
                }
            }
            NullSet::Multi { parts } => {
                for p in parts {
                    p.push_arc(spacing, out)?;
                }
            }
        }
        Ok(())
    }
}

fn push_segment_nodes(a: &[f64], b: &[f64], spacing: f64, out: &mut Vec<ArcNode>) {
    let len = dist(a, b);
    if len == 0.0 {
        return;
    }
    let m = (len / spacing).ceil().max(1.0) as usize;
    let tangent: Vec<f64> = a.iter().zip(b).map(|(p, q)| (q - p) / len).collect();
    for i in 0..m {
        out.push(ArcNode {
            point: lerp(a, b, (i as f64 + 0.5) / m as f64),
            weight: len / m as f64,
            tangent: tangent.clone(),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_spacing() {
        let s = NullSet::Segment {
            a: vec![0.0, 0.0],
            b: vec![1.0, 0.0],
        };
        let c = s.chains(0.1).unwrap();
        assert_eq!(c[0].points.len(), 11);
        let circ = NullSet::Circle {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let c = circ.chains(0.01).unwrap();
        assert!(c[0].closed && c[0].points.len() >= 628);
    }

    #[test]
    fn arc_lengths() {
        let circ = NullSet::Circle {
            center: vec![0.0, 0.0],
            radius: 2.0,
        };
        let total: f64 = circ
            .arc_quadrature(0.01)
            .unwrap()
            .iter()
            .map(|n| n.weight)
            .sum();
        assert!((total - 2.0 * TAU).abs() < 1e-9);
        let curve = NullSet::Curve {
            components: vec!["cos(x1)".into(), "sin(x1)".into()],
            t0: 0.0,
            t1: TAU,
            closed: true,
        };
        let total: f64 = curve
            .arc_quadrature(0.001)
            .unwrap()
            .iter()
            .map(|n| n.weight)
            .sum();
        assert!((total - TAU).abs() < 1e-5);
        let sq = NullSet::Polyline {
            points: vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0],
                vec![0.0, 1.0],
            ],
            closed: true,
        };
        let total: f64 = sq
            .arc_quadrature(0.3)
            .unwrap()
            .iter()
            .map(|n| n.weight)
            .sum();
        assert!((total - 4.0).abs() < 1e-12);
        assert_eq!(
            sq.bbox().unwrap(),
            BoxN::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
        );
    }
}
