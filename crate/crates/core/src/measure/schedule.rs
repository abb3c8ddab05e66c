use serde::{Deserialize, Serialize};

use super::window::BoxN;
use crate::error::{Error, Result};

/// Geometric radii `δ_k = delta0 · ratio^k`, `k = 0..steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSchedule {
    pub delta0: f64,
    pub ratio: f64,
    pub steps: usize,
    pub tail_window: usize,
    /// Convergence tolerance for the resulting [`LimitEstimate`](crate::density::LimitEstimate).
    pub tol: f64,
}

impl DeltaSchedule {
    pub fn new(delta0: f64, ratio: f64, steps: usize, tail_window: usize) -> Result<Self> {
        let s = DeltaSchedule {
            delta0,
            ratio,
            steps,
            tail_window,
            tol: 1e-3,
        };
        s.validate()?;
        Ok(s)
    }

    /// δ0 = half the smallest side of `bbox`, ratio 1/2, 12 steps, tail of 4.
    pub fn for_bbox(bbox: &BoxN) -> Self {
        DeltaSchedule {
            delta0: 0.5 * bbox.min_side(),
            ratio: 0.5,
            steps: 12,
            tail_window: 4,
            tol: 1e-3,
        }
    }

    pub fn with_delta0(mut self, delta0: f64) -> Self {
        self.delta0 = delta0;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta0 > 0.0 && self.delta0.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "delta0 must be positive, got {}",
                self.delta0
            )));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "ratio must lie in (0,1), got {}",
                self.ratio
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument(
                "schedule needs at least one step".into(),
            ));
        }
        if self.tail_window < 2 || self.tail_window > self.steps {
            return Err(Error::InvalidArgument(format!(
                "tail window {} must lie in [2, {}]",
                self.tail_window, self.steps
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn delta(&self, k: usize) -> f64 {
        self.delta0 * self.ratio.powi(k as i32)
    }

    pub fn deltas(&self) -> Vec<f64> {
        (0..self.steps).map(|k| self.delta(k)).collect()
    }

    pub fn last_delta(&self) -> f64 {
        self.delta(self.steps - 1)
    }

    /// Index of the first level in the tail window.
    pub fn tail_start(&self) -> usize {
        self.steps - self.tail_window
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadMode {
    Grid,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub mode: QuadMode,
    /// Grid: points per axis (per δ-diameter for shrinking neighbourhoods).
    /// Monte Carlo: the same number raised to the dimension, capped at `MC_MAX_SAMPLES`.
    pub resolution: usize,
    pub seed: u64,
    pub parallel: bool,
    /// Spacing of generator point clouds for declared null sets.
    pub cloud_spacing: f64,
    /// Largest per-axis lattice used when rejection-sampling a full-dimensional set.
    pub probe_resolution: usize,
}

pub const MC_MAX_SAMPLES: usize = 1 << 22;

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            mode: QuadMode::Grid,
            resolution: 128,
            seed: 0x5eed,
            parallel: true,
            cloud_spacing: 1e-3,
            probe_resolution: 512,
        }
    }
}

impl QuadratureConfig {
    pub fn with_resolution(mut self, res: usize) -> Self {
        self.resolution = res;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::InvalidArgument(format!(
                "resolution must be at least 2, got {}",
                self.resolution
            )));
        }
        if !(self.cloud_spacing > 0.0) {
            return Err(Error::InvalidArgument(
                "cloud spacing must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples_used: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deltas_are_geometric() {
        let s = DeltaSchedule::new(0.5, 0.5, 4, 2).unwrap();
        assert_eq!(s.deltas(), vec![0.5, 0.25, 0.125, 0.0625]);
        assert_eq!(s.tail_start(), 2);
        assert!(DeltaSchedule::new(0.5, 1.0, 4, 2).is_err());
        assert!(DeltaSchedule::new(0.5, 0.5, 4, 1).is_err());
        assert!(DeltaSchedule::new(0.5, 0.5, 4, 5).is_err());
    }

    #[test]
    fn default_from_bbox() {
        let b = BoxN::new(vec![-1.0, 0.0], vec![1.0, 1.0]).unwrap();
        let s = DeltaSchedule::for_bbox(&b);
        assert_eq!(s.delta0, 0.5);
        assert_eq!((s.steps, s.tail_window), (12, 4));
    }
}
