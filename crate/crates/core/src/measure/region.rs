use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::cloud::Cloud;
use super::nullset::NullSet;
use super::window::BoxN;
use crate::error::{Error, Result};
use crate::exprcli::expr::{parse, Atan2Range, Expr, Program};
use crate::field::ScalarField;

/// Closed-form building blocks. All of them are open sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    /// `{y : normal·y > offset}`
    HalfSpace {
        normal: Vec<f64>,
        offset: f64,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// `{y : angle(y − apex, axis) < half_angle}`
    Cone {
        apex: Vec<f64>,
        axis: Vec<f64>,
        half_angle: f64,
    },
    /// `{y : 0 < t < length, |y − apex − t·axis| < coef·t^power}` with `t = (y − apex)·axis`.
    Cusp {
        apex: Vec<f64>,
        axis: Vec<f64>,
        coef: f64,
        power: f64,
        length: f64,
    },
}

#[derive(Clone)]
pub enum Shape {
    Whole,
    Expr {
        expr: Expr,
        program: Arc<Program>,
        range: Atan2Range,
    },
    Primitive(Primitive),
    /// Declared null set: never contains a point, carries explicit geometry.
    Null(NullSet),
    /// Open δ-neighbourhood of a sampled set.
    Neighborhood {
        base: Box<Region>,
        delta: f64,
        cloud: Arc<Cloud>,
    },
    Intersection(Vec<Region>),
    Union(Vec<Region>),
    Complement(Box<Region>),
    /// `{f ≥ t}` when `above`, else `{f ≤ t}`; NaN counts as outside.
    LevelSet {
        field: ScalarField,
        threshold: f64,
        above: bool,
    },
    Custom(Arc<dyn Fn(&[f64]) -> bool + Send + Sync>),
}

/// Measurable subset of `R^n`: a total membership predicate plus a bounding box.
#[derive(Clone)]
pub struct Region {
    pub dim: usize,
    pub shape: Shape,
    pub bbox: BoxN,
    pub label: String,
    /// Parametrized boundary, required for Gauss-Green checks.
    pub boundary: Option<NullSet>,
    pub lipschitz: bool,
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Region")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("bbox", &self.bbox)
            .finish()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = dot(v, v).sqrt();
    if !(n > 0.0) {
        return Err(Error::InvalidArgument("zero direction".into()));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

fn square_boundary(lo: &[f64], hi: &[f64]) -> NullSet {
    NullSet::Polyline {
        points: vec![
            vec![lo[0], lo[1]],
            vec![hi[0], lo[1]],
            vec![hi[0], hi[1]],
            vec![lo[0], hi[1]],
        ],
        closed: true,
    }
}

impl Region {
    fn from_shape(dim: usize, shape: Shape, bbox: BoxN, label: impl Into<String>) -> Result<Self> {
        if bbox.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bbox.dim(),
            });
        }
        Ok(Region {
            dim,
            shape,
            bbox,
            label: label.into(),
            boundary: None,
            lipschitz: false,
        })
    }

    pub fn whole(bbox: BoxN) -> Self {
        let n = bbox.dim();
        Region::from_shape(n, Shape::Whole, bbox, format!("R^{n}")).expect("consistent")
    }

    pub fn from_expr(expr: &Expr, dim: usize, bbox: BoxN, range: Atan2Range) -> Result<Self> {
        let program = Arc::new(expr.compile(dim, range));
        Region::from_shape(
            dim,
            Shape::Expr {
                expr: expr.clone(),
                program,
                range,
            },
            bbox,
            expr.to_string(),
        )
    }

    pub fn parse(src: &str, dim: usize, bbox: BoxN, range: Atan2Range) -> Result<Self> {
        Self::from_expr(&parse(src, dim)?, dim, bbox, range)
    }

    pub fn primitive(p: Primitive, bbox: Option<BoxN>) -> Result<Self> {
        let (dim, default_box, label) = match &p {
            Primitive::HalfSpace { normal, offset } => (
                normal.len(),
                None,
                format!("half-space {normal:?}·y > {offset}"),
            ),
            Primitive::Ball { center, radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidArgument(
                        "ball radius must be positive".into(),
                    ));
                }
                (
                    center.len(),
                    Some(BoxN::cube(center, *radius)),
                    format!("ball({center:?}, {radius})"),
                )
            }
            Primitive::Box { lo, hi } => {
                let b = BoxN::new(lo.clone(), hi.clone())?;
                if b.is_degenerate() {
                    return Err(Error::EmptyWindow("degenerate box".into()));
                }
                (lo.len(), Some(b), format!("box({lo:?}, {hi:?})"))
            }
            Primitive::Cone {
                apex,
                axis,
                half_angle,
            } => {
                if axis.len() != apex.len() {
                    return Err(Error::DimensionMismatch {
                        expected: apex.len(),
                        got: axis.len(),
                    });
                }
                (
                    apex.len(),
                    None,
                    format!("cone({apex:?}, {axis:?}, {half_angle})"),
                )
            }
            Primitive::Cusp {
                apex,
                axis,
                coef,
                power,
                length,
            } => {
                if axis.len() != apex.len() {
                    return Err(Error::DimensionMismatch {
                        expected: apex.len(),
                        got: axis.len(),
                    });
                }
                let u = unit(axis)?;
                let tip: Vec<f64> = apex.iter().zip(&u).map(|(a, v)| a + length * v).collect();
                let r = coef * length.powf(*power);
                let b = BoxN::bounding(&[apex.clone(), tip])
                    .expect("two points")
                    .inflate(r);
                (
                    apex.len(),
                    Some(b),
                    format!("cusp({apex:?}, {axis:?}, {coef}·t^{power})"),
                )
            }
        };
        let p = match p {
            Primitive::HalfSpace { normal, offset } => {
                let n = dot(&normal, &normal).sqrt();
                if !(n > 0.0) {
                    return Err(Error::InvalidArgument("zero half-space normal".into()));
                }
                Primitive::HalfSpace { normal, offset }
            }
            Primitive::Cone {
                apex,
                axis,
                half_angle,
            } => Primitive::Cone {
                apex,
                axis: unit(&axis)?,
                half_angle,
            },
            Primitive::Cusp {
                apex,
                axis,
                coef,
                power,
                length,
            } => Primitive::Cusp {
                apex,
                axis: unit(&axis)?,
                coef,
                power,
                length,
            },
            other => other,
        };
        let bbox = bbox
            .or(default_box)
            .ok_or_else(|| Error::InvalidArgument(format!("{label} needs an explicit bbox")))?;
        let mut r = Region::from_shape(dim, Shape::Primitive(p.clone()), bbox, label)?;
        match &p {
            Primitive::Box { lo, hi } if dim == 2 => {
                r.boundary = Some(square_boundary(lo, hi));
                r.lipschitz = true;
            }
            Primitive::Ball { center, radius } if dim == 2 => {
                r.boundary = Some(NullSet::Circle {
                    center: center.clone(),
                    radius: *radius,
                });
                r.lipschitz = true;
            }
            _ => {}
        }
        Ok(r)
    }

    pub fn half_space(normal: Vec<f64>, offset: f64, bbox: BoxN) -> Result<Self> {
        Self::primitive(Primitive::HalfSpace { normal, offset }, Some(bbox))
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::primitive(Primitive::Ball { center, radius }, None)
    }

    pub fn open_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Self::primitive(Primitive::Box { lo, hi }, None)
    }

    pub fn cone(apex: Vec<f64>, axis: Vec<f64>, half_angle: f64, bbox: BoxN) -> Result<Self> {
        Self::primitive(
            Primitive::Cone {
                apex,
                axis,
                half_angle,
            },
            Some(bbox),
        )
    }

    pub fn cusp(
        apex: Vec<f64>,
        axis: Vec<f64>,
        coef: f64,
        power: f64,
        length: f64,
    ) -> Result<Self> {
        Self::primitive(
            Primitive::Cusp {
                apex,
                axis,
                coef,
                power,
                length,
            },
            None,
        )
    }

    pub fn null_set(set: NullSet) -> Result<Self> {
        set.validate()?;
        let bbox = set.bbox()?;
        let label = match &set {
            NullSet::Points { points } if points.len() == 1 => format!("{{{:?}}}", points[0]),
            NullSet::Points { points } => format!("{} points", points.len()),
            NullSet::Segment { a, b } => format!("segment {a:?}-{b:?}"),
            NullSet::Polyline { points, .. } => format!("polyline of {} vertices", points.len()),
            NullSet::Circle { center, radius } => format!("circle({center:?}, {radius})"),
            NullSet::Curve { components, .. } => format!("curve({})", components.join(", ")),
            NullSet::Multi { parts } => format!("{} null pieces", parts.len()),
        };
        Region::from_shape(set.dim(), Shape::Null(set), bbox, label)
    }

    pub fn point(x: &[f64]) -> Self {
        Self::null_set(NullSet::Points {
            points: vec![x.to_vec()],
        })
        .expect("valid point")
    }

    pub fn intersection(parts: Vec<Region>) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty intersection".into()))?;
        let dim = first.dim;
        let mut bbox = first.bbox.clone();
        for p in &parts[1..] {
            p.check_dim(dim)?;
            bbox = bbox.intersect(&p.bbox).unwrap_or(bbox);
        }
        let label = parts
            .iter()
            .map(|p| p.label.as_str())
            .collect::<Vec<_>>()
            .join(" ∩ ");
        Region::from_shape(dim, Shape::Intersection(parts), bbox, label)
    }

    pub fn union(parts: Vec<Region>) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty union".into()))?;
        let dim = first.dim;
        let mut bbox = first.bbox.clone();
        for p in &parts[1..] {
            p.check_dim(dim)?;
            bbox = bbox.hull(&p.bbox);
        }
        let label = parts
            .iter()
            .map(|p| p.label.as_str())
            .collect::<Vec<_>>()
            .join(" ∪ ");
        Region::from_shape(dim, Shape::Union(parts), bbox, label)
    }

    pub fn complement(part: Region) -> Self {
        let label = format!("not ({})", part.label);
        let (dim, bbox) = (part.dim, part.bbox.clone());
        Region::from_shape(dim, Shape::Complement(Box::new(part)), bbox, label).expect("consistent")
    }

    pub fn level_set(field: ScalarField, threshold: f64, above: bool, bbox: BoxN) -> Result<Self> {
        let label = format!(
            "{{{} {} {threshold}}}",
            field.label(),
            if above { ">=" } else { "<=" }
        );
        Region::from_shape(
            field.dim(),
            Shape::LevelSet {
                field,
                threshold,
                above,
            },
            bbox,
            label,
        )
    }

    pub fn custom(
        dim: usize,
        bbox: BoxN,
        label: impl Into<String>,
        f: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
    ) -> Result<Self> {
        Region::from_shape(dim, Shape::Custom(Arc::new(f)), bbox, label)
    }

    /// Open neighbourhood `{y : dist(y, C) < δ}` using a cloud of spacing `spacing`.
    pub fn neighborhood_with_spacing(
        c: &Region,
        delta: f64,
        spacing: f64,
        probe_resolution: usize,
    ) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "neighbourhood radius must be positive, got {delta}"
            )));
        }
        let cloud = Arc::new(Cloud::for_region(c, spacing, probe_resolution)?);
        let bbox = cloud.bbox().inflate(delta);
        let label = format!("({})_{delta}", c.label);
        Region::from_shape(
            c.dim,
            Shape::Neighborhood {
                base: Box::new(c.clone()),
                delta,
                cloud,
            },
            bbox,
            label,
        )
    }

    /// `(0,1)×(0,1) ∪ (1,2)×(0,1)`: two open squares sharing the edge `{1}×(0,1)`.
    pub fn two_squares() -> Self {
        let a = Region::open_box(vec![0.0, 0.0], vec![1.0, 1.0]).expect("box");
        let b = Region::open_box(vec![1.0, 0.0], vec![2.0, 1.0]).expect("box");
        let mut u = Region::union(vec![a.clone(), b.clone()]).expect("same dim");
        u.boundary = Some(NullSet::Multi {
            parts: vec![a.boundary.clone().unwrap(), b.boundary.clone().unwrap()],
        });
        u.lipschitz = true;
        u.label = "two touching squares".into();
        u
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Declares a parametrized boundary and marks the region as a Lipschitz domain.
    pub fn with_lipschitz_boundary(mut self, boundary: NullSet) -> Result<Self> {
        boundary.validate()?;
        if boundary.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: boundary.dim(),
            });
        }
        self.boundary = Some(boundary);
        self.lipschitz = true;
        Ok(self)
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        if self.dim != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.dim,
            });
        }
        Ok(())
    }

    pub fn is_null(&self) -> bool {
        matches!(self.shape, Shape::Null(_))
    }

    pub fn null_geometry(&self) -> Option<&NullSet> {
        match &self.shape {
            Shape::Null(s) => Some(s),
            _ => None,
        }
    }

    /// Disjoint pieces when the region is a union, otherwise itself.
    pub fn components(&self) -> Vec<Region> {
        match &self.shape {
            Shape::Union(parts) => parts.clone(),
            _ => vec![self.clone()],
        }
    }

    /// Membership test; total on all of `R^n`.
    #[inline]
    pub fn contains(&self, y: &[f64]) -> bool {
        match &self.shape {
            Shape::Whole => true,
            Shape::Expr { program, .. } => {
                let v = program.eval(y);
                !v.is_nan() && v != 0.0
            }
            Shape::Primitive(p) => primitive_contains(p, y),
            Shape::Null(_) => false,
            Shape::Neighborhood { base, delta, cloud } => {
                (!base.is_null() && base.contains(y)) || cloud.within(y, *delta)
            }
            Shape::Intersection(parts) => parts.iter().all(|p| p.contains(y)),
            Shape::Union(parts) => parts.iter().any(|p| p.contains(y)),
            Shape::Complement(p) => !p.contains(y),
            Shape::LevelSet {
                field,
                threshold,
                above,
            } => {
                let v = field.value(y);
                if v.is_nan() {
                    false
                } else if *above {
                    v >= *threshold
                } else {
                    v <= *threshold
                }
            }
            Shape::Custom(f) => f(y),
        }
    }

    /// A sub-box of `window` containing `self ∩ window`, `None` when provably empty.
    pub fn clip(&self, window: &BoxN) -> Option<BoxN> {
        match &self.shape {
            Shape::Whole
            | Shape::Expr { .. }
            | Shape::Complement(_)
            | Shape::LevelSet { .. }
            | Shape::Custom(_) => Some(window.clone()),
            Shape::Primitive(p) => match p {
                Primitive::HalfSpace { normal, offset } => {
                    let mut w = window.clone();
                    let nz: Vec<usize> = (0..normal.len()).filter(|&i| normal[i] != 0.0).collect();
                    if nz.len() == 1 {
                        let i = nz[0];
                        let c = offset / normal[i];
                        if normal[i] > 0.0 {
                            w.lo[i] = w.lo[i].max(c);
                        } else {
                            w.hi[i] = w.hi[i].min(c);
                        }
                    }
                    if w.is_degenerate() {
                        None
                    } else {
                        Some(w)
                    }
                }
                Primitive::Cone { .. } => Some(window.clone()),
                Primitive::Ball { .. } | Primitive::Box { .. } => window.intersect(&self.bbox),
                Primitive::Cusp {
                    apex,
                    axis,
                    coef,
                    power,
                    length,
                } => {
                    let base = dot(apex, axis);
                    let (mut tlo, mut thi) = (0.0, 0.0);
                    for i in 0..axis.len() {
                        let (a, b) = (axis[i] * window.lo[i], axis[i] * window.hi[i]);
                        tlo += a.min(b);
                        thi += a.max(b);
                    }
                    let tlo = (tlo - base).max(0.0);
                    let thi = (thi - base).min(*length);
                    if thi <= tlo {
                        return None;
                    }
                    let r = coef * thi.powf(*power);
                    let p0: Vec<f64> = apex.iter().zip(axis).map(|(a, u)| a + tlo * u).collect();
                    let p1: Vec<f64> = apex.iter().zip(axis).map(|(a, u)| a + thi * u).collect();
                    let b = BoxN::bounding(&[p0, p1]).expect("two points").inflate(r);
                    window.intersect(&b)
                }
            },
            Shape::Null(_) | Shape::Neighborhood { .. } => window.intersect(&self.bbox),
            Shape::Intersection(parts) => {
                let mut w = window.clone();
                for p in parts {
                    w = p.clip(&w)?;
                }
                Some(w)
            }
            Shape::Union(parts) => {
                let mut acc: Option<BoxN> = None;
                for p in parts {
                    if let Some(b) = p.clip(window) {
                        acc = Some(match acc {
                            Some(a) => a.hull(&b),
                            None => b,
                        });
                    }
                }
                acc
            }
        }
    }

    // ------------------------------------------------------------ JSON

    pub fn to_json(&self) -> Result<Value> {
        let (kind, payload) = match &self.shape {
            Shape::Whole => ("primitive", json!({"type": "whole"})),
            Shape::Expr { expr, range, .. } => (
                "expr",
                json!({"src": expr.to_string(), "atan2_range": range}),
            ),
            Shape::Primitive(p) => ("primitive", serde_json::to_value(p)?),
            Shape::Null(s) => ("pointcloud", serde_json::to_value(s)?),
            Shape::Neighborhood { base, delta, cloud } => (
                "primitive",
                json!({"type": "neighborhood", "base": base.to_json()?, "delta": delta, "spacing": cloud.spacing()}),
            ),
            Shape::Intersection(parts) => (
                "primitive",
                json!({"type": "intersection", "parts": parts.iter().map(Region::to_json).collect::<Result<Vec<_>>>()?}),
            ),
            Shape::Union(parts) => (
                "primitive",
                json!({"type": "union", "parts": parts.iter().map(Region::to_json).collect::<Result<Vec<_>>>()?}),
            ),
            Shape::Complement(p) => (
                "primitive",
                json!({"type": "complement", "part": p.to_json()?}),
            ),
            Shape::LevelSet {
                field,
                threshold,
                above,
            } => {
                let src = field.source().ok_or_else(|| {
                    Error::Serialization(format!(
                        "level set of `{}` has no expression source",
                        field.label()
                    ))
                })?;
                (
                    "primitive",
                    json!({"type": "level_set", "field": src.to_string(), "threshold": threshold,
                           "above": above, "atan2_range": field.atan2_range().unwrap_or_default()}),
                )
            }
            Shape::Custom(_) => {
                return Err(Error::Serialization(format!(
                    "region `{}` is defined by a closure",
                    self.label
                )))
            }
        };
        let mut v = json!({
            "dim": self.dim,
            "kind": kind,
            "payload": payload,
            "bbox": self.bbox,
            "label": self.label,
        });
        if let Some(b) = &self.boundary {
            v["boundary"] = serde_json::to_value(b)?;
        }
        if self.lipschitz {
            v["lipschitz"] = json!(true);
        }
        Ok(v)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let bad = |m: &str| Error::Serialization(format!("region JSON: {m}"));
        let dim = v["dim"].as_u64().ok_or_else(|| bad("missing dim"))? as usize;
        let bbox: BoxN = serde_json::from_value(v["bbox"].clone())?;
        let kind = v["kind"].as_str().ok_or_else(|| bad("missing kind"))?;
        let payload = &v["payload"];
        let mut r = match kind {
            "expr" => {
                let src = payload["src"].as_str().ok_or_else(|| bad("missing src"))?;
                let range: Atan2Range = match payload.get("atan2_range") {
                    Some(x) if !x.is_null() => serde_json::from_value(x.clone())?,
                    _ => Atan2Range::default(),
                };
                Region::parse(src, dim, bbox.clone(), range)?
            }
            "pointcloud" => Region::null_set(serde_json::from_value(payload.clone())?)?,
            "primitive" => match payload["type"]
                .as_str()
                .ok_or_else(|| bad("missing type"))?
            {
                "whole" => Region::whole(bbox.clone()),
                "intersection" | "union" => {
                    let parts = payload["parts"]
                        .as_array()
                        .ok_or_else(|| bad("missing parts"))?
                        .iter()
                        .map(Region::from_json)
                        .collect::<Result<Vec<_>>>()?;
                    if payload["type"] == "union" {
                        Region::union(parts)?
                    } else {
                        Region::intersection(parts)?
                    }
                }
                "complement" => Region::complement(Region::from_json(&payload["part"])?),
                "neighborhood" => {
                    let base = Region::from_json(&payload["base"])?;
                    let delta = payload["delta"]
                        .as_f64()
                        .ok_or_else(|| bad("missing delta"))?;
                    let spacing = payload["spacing"]
                        .as_f64()
                        .ok_or_else(|| bad("missing spacing"))?;
                    Region::neighborhood_with_spacing(&base, delta, spacing, 512)?
                }
                "level_set" => {
                    let range: Atan2Range = serde_json::from_value(payload["atan2_range"].clone())?;
                    let src = payload["field"]
                        .as_str()
                        .ok_or_else(|| bad("missing field"))?;
                    let field = ScalarField::parse(src, dim, range)?;
                    let t = payload["threshold"]
                        .as_f64()
                        .ok_or_else(|| bad("missing threshold"))?;
                    let above = payload["above"].as_bool().unwrap_or(true);
                    Region::level_set(field, t, above, bbox.clone())?
                }
                _ => {
                    Region::primitive(serde_json::from_value(payload.clone())?, Some(bbox.clone()))?
                }
            },
            other => return Err(bad(&format!("unknown kind `{other}`"))),
        };
        r.check_dim(dim)?;
        r.bbox = bbox;
        if let Some(l) = v.get("label").and_then(Value::as_str) {
            r.label = l.to_string();
        }
        if let Some(b) = v.get("boundary") {
            r.boundary = Some(serde_json::from_value(b.clone())?);
        }
        if let Some(l) = v.get("lipschitz").and_then(Value::as_bool) {
            r.lipschitz = l;
        }
        Ok(r)
    }
}

#[inline]
fn primitive_contains(p: &Primitive, y: &[f64]) -> bool {
    match p {
        Primitive::HalfSpace { normal, offset } => dot(normal, y) > *offset,
        Primitive::Ball { center, radius } => {
            let mut s = 0.0;
            for i in 0..y.len() {
                let d = y[i] - center[i];
                s += d * d;
            }
            s < radius * radius
        }
        Primitive::Box { lo, hi } => (0..y.len()).all(|i| y[i] > lo[i] && y[i] < hi[i]),
        Primitive::Cone {
            apex,
            axis,
            half_angle,
        } => {
            let (mut t, mut r2) = (0.0, 0.0);
            for i in 0..y.len() {
                let d = y[i] - apex[i];
                t += d * axis[i];
                r2 += d * d;
            }
            r2 > 0.0 && t > half_angle.cos() * r2.sqrt()
        }
        Primitive::Cusp {
            apex,
            axis,
            coef,
            power,
            length,
        } => {
            let mut t = 0.0;
            for i in 0..y.len() {
                t += (y[i] - apex[i]) * axis[i];
            }
            if !(t > 0.0 && t < *length) {
                return false;
            }
            let mut p2 = 0.0;
            for i in 0..y.len() {
                let d = y[i] - apex[i] - t * axis[i];
                p2 += d * d;
            }
            let r = coef * t.powf(*power);
            p2 < r * r
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq() -> BoxN {
        BoxN::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn primitive_membership() {
        let h = Region::half_space(vec![0.0, 1.0], 0.0, sq()).unwrap();
        assert!(h.contains(&[0.3, 0.1]) && !h.contains(&[0.3, 0.0]));
        let cusp = Region::cusp(vec![0.0, 0.0], vec![1.0, 0.0], 1.0, 2.0, 1.0).unwrap();
        assert!(cusp.contains(&[0.5, 0.2]) && !cusp.contains(&[0.5, 0.3]));
        assert!(!cusp.contains(&[-0.5, 0.0]));
        let cone = Region::cone(
            vec![0.0, 0.0],
            vec![0.0, 2.0],
            std::f64::consts::FRAC_PI_4,
            sq(),
        )
        .unwrap();
        assert!(
            cone.contains(&[0.1, 0.5])
                && !cone.contains(&[0.5, 0.1])
                && !cone.contains(&[0.0, 0.0])
        );
    }

    #[test]
    fn cusp_clip_is_tight_and_conservative() {
        let cusp = Region::cusp(vec![0.0, 0.0], vec![1.0, 0.0], 1.0, 2.0, 1.0).unwrap();
        let d = 1e-2;
        let w = cusp.clip(&BoxN::cube(&[0.0, 0.0], d)).unwrap();
        assert!(w.side(1) <= 2.0 * d * d + 1e-15);
        assert!(w.contains(&[0.9 * d, 0.8 * d * d]));
        assert!(cusp.clip(&BoxN::cube(&[-1.0, 0.0], 0.5)).is_none());
    }

    #[test]
    fn json_round_trip() {
        let regions = vec![
            Region::parse("x1^2 + x2^2 < 1", 2, sq(), Atan2Range::Pmpi).unwrap(),
            Region::cusp(vec![0.0, 0.0], vec![-1.0, 0.0], 1.0, 2.0, 1.0).unwrap(),
            Region::two_squares(),
            Region::complement(Region::half_space(vec![1.0, 0.0], 0.0, sq()).unwrap()),
            Region::null_set(NullSet::Segment {
                a: vec![0.0, 0.0],
                b: vec![1.0, 0.0],
            })
            .unwrap(),
        ];
        let probes = [
            [0.2, 0.3],
            [-0.7, 0.1],
            [1.5, 0.5],
            [0.5, 1e-3],
            [-0.3, -0.0001],
        ];
        for r in regions {
            let j = r.to_json().unwrap();
            let back = Region::from_json(&j).unwrap();
            assert_eq!(back.to_json().unwrap(), j);
            for p in &probes {
                assert_eq!(r.contains(p), back.contains(p));
            }
        }
        let custom = Region::custom(2, sq(), "c", |_| true).unwrap();
        assert!(custom.to_json().is_err());
    }
}
