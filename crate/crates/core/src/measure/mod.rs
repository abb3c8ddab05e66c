//! Regions, neighbourhoods and lattice estimates of Lebesgue measure.

mod cloud;
mod lattice;
mod nullset;
mod region;
mod schedule;
mod window;

pub use cloud::Cloud;
pub use lattice::{count_in_window, sample_target, stream_id, Lattice, PointSet, Target};
pub use nullset::{ArcNode, Chain, NullSet};
pub use region::{Primitive, Region, Shape};
pub use schedule::{DeltaSchedule, MeasureEstimate, QuadMode, QuadratureConfig, MC_MAX_SAMPLES};
pub use window::{ball_window, BoxN};

use crate::error::{Error, Result};

/// Estimate of `λ^n(region ∩ window)`.
pub fn lebesgue(region: &Region, window: &BoxN, cfg: &QuadratureConfig) -> Result<MeasureEstimate> {
    if region.dim != window.dim() {
        return Err(Error::DimensionMismatch {
            expected: window.dim(),
            got: region.dim,
        });
    }
    if window.is_degenerate() {
        return Err(Error::EmptyWindow(format!("{window:?}")));
    }
    cfg.validate()?;
    let (hits, total, w) = count_in_window(region, window, cfg);
    let value = hits as f64 * w;
    let std_error = match cfg.mode {
        QuadMode::Grid => 0.0,
        QuadMode::MonteCarlo => {
            let p = hits as f64 / total as f64;
            window.volume() * (p * (1.0 - p) / total as f64).sqrt()
        }
    };
    Ok(MeasureEstimate {
        value,
        std_error,
        samples_used: total,
    })
}

/// `C_δ = {y : dist_C(y) < δ}` with the distance taken to a cloud of spacing `cfg.cloud_spacing`.
pub fn neighborhood(c: &Region, delta: f64, cfg: &QuadratureConfig) -> Result<Region> {
    Region::neighborhood_with_spacing(c, delta, cfg.cloud_spacing, cfg.probe_resolution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprcli::expr::Atan2Range;
    use std::f64::consts::PI;

    fn cfg(res: usize) -> QuadratureConfig {
        QuadratureConfig::default().with_resolution(res)
    }

    #[test]
    fn lebesgue_examples() {
        let sq = Region::open_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let unit = BoxN::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(lebesgue(&sq, &unit, &cfg(64)).unwrap().value, 1.0);
        let big = BoxN::cube(&[0.0, 0.0], 1.0);
        let half = Region::parse("x2 > 0", 2, big.clone(), Atan2Range::Pmpi).unwrap();
        assert_eq!(lebesgue(&half, &big, &cfg(64)).unwrap().value, 2.0);
        let disk = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
        let m = lebesgue(&disk, &big, &cfg(512)).unwrap();
        assert!((m.value - PI).abs() < 5e-3);
        assert_eq!(m.std_error, 0.0);
    }

    #[test]
    fn lebesgue_errors() {
        let disk = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
        let b3 = BoxN::cube(&[0.0, 0.0, 0.0], 1.0);
        assert!(matches!(
            lebesgue(&disk, &b3, &cfg(8)),
            Err(Error::DimensionMismatch { .. })
        ));
        let flat = BoxN::new(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            lebesgue(&disk, &flat, &cfg(8)),
            Err(Error::EmptyWindow(_))
        ));
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let disk = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
        let big = BoxN::cube(&[0.0, 0.0], 1.0);
        let c = QuadratureConfig {
            mode: QuadMode::MonteCarlo,
            resolution: 512,
            ..QuadratureConfig::default()
        };
        let a = lebesgue(&disk, &big, &c).unwrap();
        let b = lebesgue(
            &disk,
            &big,
            &QuadratureConfig {
                parallel: false,
                ..c.clone()
            },
        )
        .unwrap();
        assert_eq!(a, b);
        assert!((a.value - PI).abs() < 5.0 * a.std_error + 1e-12);
        assert!(a.std_error > 0.0);
    }

    #[test]
    fn neighborhood_examples() {
        let big = BoxN::cube(&[0.0, 0.0], 1.5);
        let c = cfg(1024);
        let p = neighborhood(&Region::point(&[0.0, 0.0]), 0.3, &c).unwrap();
        for y in [[0.29, 0.0], [0.2, 0.2], [0.0, -0.299]] {
            assert!(p.contains(&y));
        }
        assert!(!p.contains(&[0.22, 0.22]));
        let circle = Region::null_set(NullSet::Circle {
            center: vec![0.0, 0.0],
            radius: 1.0,
        })
        .unwrap();
        let ann = neighborhood(&circle, 0.1, &c).unwrap();
        assert!(ann.contains(&[0.91, 0.0]) && ann.contains(&[0.0, -1.09]));
        assert!(!ann.contains(&[0.89, 0.0]) && !ann.contains(&[0.0, 1.11]));
        let area = lebesgue(&ann, &big, &c).unwrap().value;
        assert!((area - PI * (1.21 - 0.81)).abs() < 5e-3);
        let seg = Region::null_set(NullSet::Segment {
            a: vec![0.0, 0.0],
            b: vec![1.0, 0.0],
        })
        .unwrap();
        let stadium = neighborhood(&seg, 0.2, &c).unwrap();
        let w = BoxN::new(vec![-0.25, -0.25], vec![1.25, 0.25]).unwrap();
        let area = lebesgue(&stadium, &w, &c).unwrap().value;
        assert!((area - (0.4 + PI * 0.04)).abs() < 2e-3, "{area}");
    }
}
