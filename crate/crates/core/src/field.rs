use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exprcli::expr::{parse, Atan2Range, Expr, Program};
use crate::measure::Region;

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Evaluable map `R^n → R`, optionally with an analytic gradient.
///
/// `NaN` values mark samples that estimators discard.
#[derive(Clone)]
pub struct ScalarField {
    dim: usize,
    label: String,
    value: ValueFn,
    grad: Option<GradFn>,
    source: Option<(Expr, Atan2Range)>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("analytic_gradient", &self.grad.is_some())
            .finish()
    }
}

impl ScalarField {
    pub fn from_fn(
        dim: usize,
        label: impl Into<String>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ScalarField {
            dim,
            label: label.into(),
            value: Arc::new(f),
            grad: None,
            source: None,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(g));
        self
    }

    /// Drops the analytic gradient so that callers fall back to finite differences.
    pub fn without_gradient(mut self) -> Self {
        self.grad = None;
        self
    }

    pub fn from_expr(expr: &Expr, dim: usize, range: Atan2Range) -> Self {
        let prog: Arc<Program> = Arc::new(expr.compile(dim, range));
        let pv = prog.clone();
        let pg = prog;
        ScalarField {
            dim,
            label: expr.to_string(),
            value: Arc::new(move |y| pv.eval(y)),
            grad: Some(Arc::new(move |y, g| {
                pg.eval_grad(y, g);
            })),
            source: Some((expr.clone(), range)),
        }
    }

    pub fn parse(src: &str, dim: usize, range: Atan2Range) -> Result<Self> {
        Ok(Self::from_expr(&parse(src, dim)?, dim, range))
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::from_fn(dim, format!("{c}"), move |_| c).with_gradient(|_, g| g.fill(0.0))
    }

    /// `1` on the region, `0` elsewhere.
    pub fn indicator(region: &Region) -> Self {
        let r = region.clone();
        Self::from_fn(region.dim, format!("1[{}]", region.label), move |y| {
            if r.contains(y) {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn source(&self) -> Option<&Expr> {
        self.source.as_ref().map(|(e, _)| e)
    }

    pub fn atan2_range(&self) -> Option<Atan2Range> {
        self.source.as_ref().map(|(_, r)| *r)
    }

    #[inline]
    pub fn value(&self, y: &[f64]) -> f64 {
        (self.value)(y)
    }

    pub fn has_gradient(&self) -> bool {
        self.grad.is_some()
    }

    /// Writes the analytic gradient into `out`; returns false when none is available.
    pub fn gradient(&self, y: &[f64], out: &mut [f64]) -> bool {
        match &self.grad {
            Some(g) => {
                g(y, out);
                true
            }
            None => false,
        }
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

    pub fn scaled(&self, c: f64) -> Self {
        let f = self.value.clone();
        let mut out = Self::from_fn(self.dim, format!("{c}*({})", self.label), move |y| c * f(y));
        if let Some(g) = self.grad.clone() {
            out = out.with_gradient(move |y, o| {
                g(y, o);
                o.iter_mut().for_each(|v| *v *= c);
            });
        }
        out
    }

    pub fn negated(&self) -> Self {
        self.scaled(-1.0).with_label(format!("-({})", self.label))
    }

    pub fn shifted(&self, c: f64) -> Self {
        let f = self.value.clone();
        let mut out = Self::from_fn(self.dim, format!("({})+{c}", self.label), move |y| f(y) + c);
        if let Some(g) = self.grad.clone() {
            out = out.with_gradient(move |y, o| g(y, o));
        }
        out
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &ScalarField, b: f64) -> Self {
        let (f, g) = (self.value.clone(), other.value.clone());
        let mut out = Self::from_fn(
            self.dim,
            format!("{a}*({}) + {b}*({})", self.label, other.label),
            move |y| a * f(y) + b * g(y),
        );
        if let (Some(df), Some(dg)) = (self.grad.clone(), other.grad.clone()) {
            let n = self.dim;
            out = out.with_gradient(move |y, o| {
                let mut t = vec![0.0; n];
                df(y, o);
                dg(y, &mut t);
                for k in 0..n {
                    o[k] = a * o[k] + b * t[k];
                }
            });
        }
        out
    }

    pub fn product(&self, other: &ScalarField) -> Self {
        let (f, g) = (self.value.clone(), other.value.clone());
        let (f2, g2) = (f.clone(), g.clone());
        let mut out = Self::from_fn(
            self.dim,
            format!("({})*({})", self.label, other.label),
            move |y| f(y) * g(y),
        );
        if let (Some(df), Some(dg)) = (self.grad.clone(), other.grad.clone()) {
            let n = self.dim;
            out = out.with_gradient(move |y, o| {
                let mut t = vec![0.0; n];
                df(y, o);
                dg(y, &mut t);
                let (fv, gv) = (f2(y), g2(y));
                for k in 0..n {
                    o[k] = gv * o[k] + fv * t[k];
                }
            });
        }
        out
    }
}

/// Evaluable map `R^n → R^m`, stored componentwise.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub dim: usize,
    pub label: String,
    pub components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        let dim = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("vector field needs a component".into()))?
            .dim();
        for c in &components {
            c.check_dim(dim)?;
        }
        let label = format!(
            "({})",
            components
                .iter()
                .map(|c| c.label())
                .collect::<Vec<_>>()
                .join(", ")
        );
        Ok(VectorField {
            dim,
            label,
            components,
        })
    }

    pub fn constant(dim: usize, w: &[f64]) -> Self {
        Self::new(w.iter().map(|&c| ScalarField::constant(dim, c)).collect()).expect("non-empty")
    }

    pub fn out_dim(&self) -> usize {
        self.components.len()
    }

    pub fn value(&self, y: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.value(y);
        }
    }

    /// `y ↦ F(y)·v`.
    pub fn dot(&self, v: &[f64]) -> ScalarField {
        let comps = self.components.clone();
        let v = v.to_vec();
        let label = format!("{}·{:?}", self.label, v);
        ScalarField::from_fn(self.dim, label, move |y| {
            comps.iter().zip(&v).map(|(c, w)| c.value(y) * w).sum()
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.components.iter().map(|f| f.scaled(c)).collect()).expect("non-empty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinators_carry_gradients() {
        let f = ScalarField::parse("x1^2", 1, Atan2Range::Pmpi).unwrap();
        let g = ScalarField::parse("3*x1", 1, Atan2Range::Pmpi).unwrap();
        let p = f.product(&g);
        let mut d = [0.0];
        assert!(p.gradient(&[2.0], &mut d));
        assert_eq!(p.value(&[2.0]), 24.0);
        assert_eq!(d[0], 36.0);
        let s = f.combine(2.0, &g, -1.0);
        s.gradient(&[2.0], &mut d);
        assert_eq!(d[0], 5.0);
        assert!(!ScalarField::from_fn(1, "raw", |y| y[0]).has_gradient());
    }

    #[test]
    fn vector_dot() {
        let phi = VectorField::new(vec![
            ScalarField::parse("x2", 2, Atan2Range::Pmpi).unwrap(),
            ScalarField::parse("x1", 2, Atan2Range::Pmpi).unwrap(),
        ])
        .unwrap();
        let d = phi.dot(&[1.0, 2.0]);
        assert_eq!(d.value(&[3.0, 5.0]), 5.0 + 6.0);
    }
}
