use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lo_1, hi_1] × … × [lo_n, hi_n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxN {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxN {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::EmptyWindow("zero-dimensional box".into()));
        }
        if lo.iter().chain(hi.iter()).any(|v| !v.is_finite()) {
            return Err(Error::EmptyWindow("non-finite box bounds".into()));
        }
        Ok(BoxN { lo, hi })
    }

    pub fn cube(center: &[f64], half: f64) -> Self {
        BoxN {
            lo: center.iter().map(|c| c - half).collect(),
            hi: center.iter().map(|c| c + half).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn min_side(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.side(i))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_side(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i)).fold(0.0, f64::max)
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i).max(0.0)).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    /// True when some side has non-positive length.
    pub fn is_degenerate(&self) -> bool {
        (0..self.dim()).any(|i| !(self.side(i) > 0.0))
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn contains_box(&self, other: &BoxN) -> bool {
        (0..self.dim()).all(|i| other.lo[i] >= self.lo[i] && other.hi[i] <= self.hi[i])
    }

    /// Intersection, `None` when empty or degenerate.
    pub fn intersect(&self, other: &BoxN) -> Option<BoxN> {
        let lo: Vec<f64> = self
            .lo
            .iter()
            .zip(&other.lo)
            .map(|(a, b)| a.max(*b))
            .collect();
        let hi: Vec<f64> = self
            .hi
            .iter()
            .zip(&other.hi)
            .map(|(a, b)| a.min(*b))
            .collect();
        let b = BoxN { lo, hi };
        if b.is_degenerate() {
            None
        } else {
            Some(b)
        }
    }

    pub fn hull(&self, other: &BoxN) -> BoxN {
        BoxN {
            lo: self
                .lo
                .iter()
                .zip(&other.lo)
                .map(|(a, b)| a.min(*b))
                .collect(),
            hi: self
                .hi
                .iter()
                .zip(&other.hi)
                .map(|(a, b)| a.max(*b))
                .collect(),
        }
    }

    pub fn inflate(&self, d: f64) -> BoxN {
        BoxN {
            lo: self.lo.iter().map(|v| v - d).collect(),
            hi: self.hi.iter().map(|v| v + d).collect(),
        }
    }

    /// Squared distance from `y` to the box (zero inside).
    pub fn dist2_to(&self, y: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim() {
            let d = if y[i] < self.lo[i] {
                self.lo[i] - y[i]
            } else if y[i] > self.hi[i] {
                y[i] - self.hi[i]
            } else {
                0.0
            };
            s += d * d;
        }
        s
    }

    /// Bounding box of a finite point list.
    pub fn bounding(points: &[Vec<f64>]) -> Option<BoxN> {
        let first = points.first()?;
        let mut b = BoxN {
            lo: first.clone(),
            hi: first.clone(),
        };
        for p in &points[1..] {
            for i in 0..b.dim() {
                b.lo[i] = b.lo[i].min(p[i]);
                b.hi[i] = b.hi[i].max(p[i]);
            }
        }
        Some(b)
    }
}

/// The box `[x − δ, x + δ]^n` enclosing `B_δ(x)`.
pub fn ball_window(x: &[f64], delta: f64) -> Result<BoxN> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ball radius must be positive, got {delta}"
        )));
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("empty point".into()));
    }
    Ok(BoxN::cube(x, delta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_window_examples() {
        let b = ball_window(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!(b.lo, vec![-1.0, -1.0]);
        assert_eq!(b.hi, vec![1.0, 1.0]);
        let b = ball_window(&[2.0, 0.0], 0.5).unwrap();
        assert_eq!(b.lo, vec![1.5, -0.5]);
        assert_eq!(b.hi, vec![2.5, 0.5]);
        assert!(ball_window(&[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn intersect_and_volume() {
        let a = BoxN::new(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        let b = BoxN::new(vec![1.0, -1.0], vec![3.0, 1.0]).unwrap();
        let c = a.intersect(&b).unwrap();
        assert_eq!(c.volume(), 1.0);
        let far = BoxN::new(vec![5.0, 5.0], vec![6.0, 6.0]).unwrap();
        assert!(a.intersect(&far).is_none());
        assert_eq!(a.dist2_to(&[3.0, 3.0]), 2.0);
    }
}
