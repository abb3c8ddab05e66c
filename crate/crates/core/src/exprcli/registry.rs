//! Named fields, regions and Clarke test pairs shipped with the library.

use std::f64::consts::FRAC_PI_4;

use super::expr::Atan2Range;
use crate::clarke::CalculusRule;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::measure::{BoxN, NullSet, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldClass {
    /// Smooth in a neighbourhood of every registry point.
    Smooth,
    /// Lipschitz with kinks.
    Lipschitz,
    /// Continuous, not Lipschitz.
    Continuous,
    /// Bounded with jumps.
    Jump,
    /// Unbounded near the origin.
    Singular,
}

#[derive(Debug, Clone, Copy)]
pub struct FieldEntry {
    pub name: &'static str,
    pub dim: usize,
    pub src: &'static str,
    pub range: Atan2Range,
    pub class: FieldClass,
}

impl FieldEntry {
    pub fn field(&self) -> ScalarField {
        ScalarField::parse(self.src, self.dim, self.range)
            .expect("registry expressions parse")
            .with_label(self.name)
    }
}

const fn entry(name: &'static str, dim: usize, src: &'static str, class: FieldClass) -> FieldEntry {
    FieldEntry {
        name,
        dim,
        src,
        range: Atan2Range::Pmpi,
        class,
    }
}

use FieldClass::*;

pub const FIELDS: &[FieldEntry] = &[
    entry("abs", 1, "abs(x1)", Lipschitz),
    entry("x-abs-x", 1, "x1 * abs(x1)", Lipschitz),
    entry("ramp", 1, "max(x1, 0)", Lipschitz),
    entry("sine", 1, "sin(x1)", Smooth),
    entry("linear1", 1, "x1", Smooth),
    entry("norm", 2, "sqrt(x1^2 + x2^2)", Lipschitz),
    entry("max12", 2, "max(x1, x2)", Lipschitz),
    entry("min12", 2, "min(x1, x2)", Lipschitz),
    entry("abs-diff", 2, "abs(x1 - x2)", Lipschitz),
    entry("tent", 2, "x1 - 2*abs(x2)", Lipschitz),
    entry("quadratic", 2, "x1^2 + x2", Smooth),
    entry("cos-mix", 2, "cos(x1) + x2 + 3*x1", Smooth),
    entry("exp-sin", 2, "exp(x1) * sin(x2) + 1", Smooth),
    entry("cubic", 2, "x1^3 - x1*x2 + 0.5", Smooth),
    entry("bump", 2, "exp(-(x1^2 + x2^2))", Smooth),
    entry("log-shift", 2, "log(2 + x1 + x2^2)", Smooth),
    entry("sqrt-abs", 2, "sqrt(abs(x1)) + x2", Continuous),
    entry("step", 2, "if(x1 > 0, 1, 0)", Jump),
    entry("step-oblique", 2, "if(0.6*x1 + 0.8*x2 > 0, 2, -1)", Jump),
    entry("quarter-indicator", 2, "if(x1 > 0 and x2 > 0, 1, 0)", Jump),
    entry("step-plus-smooth", 2, "if(x2 > 0, 3, 1) + x1", Jump),
    FieldEntry {
        name: "polar-singular",
        dim: 2,
        src: "1/sqrt(atan2(x2, x1))",
        range: Atan2Range::ZeroTwoPi,
        class: Singular,
    },
];

pub fn field_entry(name: &str) -> Option<&'static FieldEntry> {
    FIELDS.iter().find(|e| e.name == name)
}

pub const REGIONS: &[&str] = &[
    "plane",
    "half-plane",
    "quarter-plane",
    "wedge",
    "cusp",
    "cusp-left",
    "unit-square",
    "unit-disk",
    "two-squares",
    "origin",
    "x1-axis",
    "unit-circle",
];

/// Window used for unbounded registry regions.
pub fn unit_window(dim: usize) -> BoxN {
    BoxN::cube(&vec![0.0; dim], 1.0)
}

pub fn region(name: &str) -> Option<Region> {
    let w = unit_window(2);
    let r = match name {
        "plane" => Region::whole(w),
        "half-plane" => Region::half_space(vec![0.0, 1.0], 0.0, w).ok()?,
        "quarter-plane" => Region::intersection(vec![
            Region::half_space(vec![1.0, 0.0], 0.0, w.clone()).ok()?,
            Region::half_space(vec![0.0, 1.0], 0.0, w).ok()?,
        ])
        .ok()?,
        "wedge" => Region::cone(vec![0.0, 0.0], vec![0.0, 1.0], FRAC_PI_4, w).ok()?,
        "cusp" => Region::cusp(vec![0.0, 0.0], vec![1.0, 0.0], 1.0, 2.0, 1.0).ok()?,
        "cusp-left" => Region::cusp(vec![0.0, 0.0], vec![-1.0, 0.0], 1.0, 2.0, 1.0).ok()?,
        "unit-square" => Region::open_box(vec![0.0, 0.0], vec![1.0, 1.0]).ok()?,
        "unit-disk" => Region::ball(vec![0.0, 0.0], 1.0).ok()?,
        "two-squares" => Region::two_squares(),
        "origin" => Region::point(&[0.0, 0.0]),
        "x1-axis" => Region::null_set(NullSet::Segment {
            a: vec![-1.0, 0.0],
            b: vec![1.0, 0.0],
        })
        .ok()?,
        "unit-circle" => Region::null_set(NullSet::Circle {
            center: vec![0.0, 0.0],
            radius: 1.0,
        })
        .ok()?,
        _ => return None,
    };
    Some(r.with_label(name))
}

/// Registry name, `indicator:<region>` for the indicator of a registry region, or an
/// inline expression in `dim` variables.
pub fn resolve_field(src: &str, dim: usize, range: Atan2Range) -> Result<ScalarField> {
    let src = src.trim();
    if let Some(e) = field_entry(src) {
        check(e.dim, dim)?;
        return Ok(e.field());
    }
    if let Some(inner) = src.strip_prefix("indicator:") {
        let r = resolve_region(inner, dim, &unit_window(dim), range)?;
        return Ok(ScalarField::indicator(&r));
    }
    ScalarField::parse(src, dim, range)
}

/// Registry name or inline predicate; inline predicates get `window` as bounding box.
pub fn resolve_region(src: &str, dim: usize, window: &BoxN, range: Atan2Range) -> Result<Region> {
    let src = src.trim();
    if let Some(r) = region(src) {
        check(r.dim, dim)?;
        return Ok(r);
    }
    Region::parse(src, dim, window.clone(), range)
}

fn check(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Calculus-rule test case: `f`, optional `g`, the rule and the base point.
#[derive(Debug, Clone)]
pub struct ClarkePair {
    pub f: &'static str,
    pub g: Option<&'static str>,
    pub rule: CalculusRule,
    pub at: &'static [f64],
}

pub fn clarke_pairs() -> Vec<ClarkePair> {
    use CalculusRule::*;
    let p = |f, g, rule, at| ClarkePair { f, g, rule, at };
    vec![
        p("abs", None, Scale { s: 2.0 }, &[0.0]),
        p("abs", None, Scale { s: -1.5 }, &[0.0]),
        p("max12", None, Scale { s: -1.0 }, &[0.0, 0.0]),
        p(
            "abs",
            Some("x-abs-x"),
            Sum {
                alpha: 1.0,
                beta: 1.0,
            },
            &[0.0],
        ),
        p(
            "abs",
            Some("ramp"),
            Sum {
                alpha: 1.0,
                beta: -1.0,
            },
            &[0.0],
        ),
        p(
            "max12",
            Some("min12"),
            Sum {
                alpha: 1.0,
                beta: 1.0,
            },
            &[0.0, 0.0],
        ),
        p(
            "norm",
            Some("cos-mix"),
            Sum {
                alpha: 1.0,
                beta: -1.0,
            },
            &[0.0, 0.0],
        ),
        p("linear1", Some("abs"), Product, &[0.0]),
        p("ramp", Some("sine"), Product, &[0.0]),
        p("max12", Some("quadratic"), Product, &[0.0, 0.0]),
    ]
}
