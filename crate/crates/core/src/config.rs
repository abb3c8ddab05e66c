use serde::{Deserialize, Serialize};

use crate::measure::QuadratureConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative density treated as zero.
    pub density_tol: f64,
    /// Bisection tolerance relative to the sampled range of f.
    pub alpha_rel_tol: f64,
    /// Jump threshold relative to the local range of f.
    pub jump_rel_tol: f64,
    /// Finite-difference consistency threshold relative to the local Lipschitz constant.
    pub fd_tol: f64,
    /// Magnitude treated as infinite.
    pub cap: f64,
    /// Agreement tolerance between Clarke estimators.
    pub estimator_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            density_tol: 1e-3,
            alpha_rel_tol: 1e-4,
            jump_rel_tol: 1e-2,
            fd_tol: 1e-2,
            cap: 1e6,
            estimator_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClarkeOptions {
    pub n_samples: usize,
    /// Finite-difference step as a fraction of the current radius.
    pub h_ratio: f64,
    /// Sphere points added to the 2n axis directions.
    pub n_probes: usize,
}

impl Default for ClarkeOptions {
    fn default() -> Self {
        ClarkeOptions {
            n_samples: 256,
            h_ratio: 1e-3,
            n_probes: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussGreenOptions {
    /// Lattice points along the longest side of the domain box.
    pub resolution: usize,
    /// Inner offset ε as a multiple of the lattice spacing.
    pub offset_factor: f64,
    /// Boundary quadrature spacing as a fraction of the lattice spacing.
    pub boundary_spacing_factor: f64,
    /// Step for the distance-gradient stencil as a fraction of the lattice spacing.
    pub normal_step_factor: f64,
    /// Combine the layers at ε and 2ε to cancel the first-order offset bias.
    pub extrapolate: bool,
}

impl Default for GaussGreenOptions {
    fn default() -> Self {
        GaussGreenOptions {
            resolution: 256,
            offset_factor: 3.0,
            boundary_spacing_factor: 0.25,
            normal_step_factor: 0.125,
            extrapolate: true,
        }
    }
}

/// Everything an estimator needs besides its geometric inputs and schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EstimatorConfig {
    pub quad: QuadratureConfig,
    pub tol: Tolerances,
    pub cone: ConeOptions,
    pub clarke: ClarkeOptions,
    pub gauss_green: GaussGreenOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeOptions {
    /// Half-angle α₀ of the search cones.
    pub half_angle: f64,
}

impl Default for ConeOptions {
    fn default() -> Self {
        ConeOptions {
            half_angle: std::f64::consts::FRAC_PI_4,
        }
    }
}

impl EstimatorConfig {
    pub fn with_resolution(mut self, res: usize) -> Self {
        self.quad.resolution = res;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.quad.seed = seed;
        self
    }
}
