//! Multitarget tracking on debiased converted measurements.
//!
//! Polar blob measurements are mapped to Cartesian coordinates with the
//! additive debiasing of the converted-measurement Kalman filter, then fed to
//! a bank of nearly-constant-velocity Kalman filters. Each emission the
//! tracker predicts every live track, gates track/measurement pairs (coarse
//! range/azimuth window, then a Mahalanobis test), solves the global
//! assignment with an auction, updates, and runs the confirm/delete logic.

pub mod auction;
mod gate;
mod kalman;
mod tracker;

use nalgebra::{Matrix2, Vector2};

use crate::detect::PolarMeasurement;
use crate::error::{Error, Result};

pub use auction::{assign, auction_assign, Assignment};
pub use gate::{gate, GateConfig, GatedPair};
pub use kalman::{
    observation, predict, process_noise, transition, update, KalmanState, Matrix4, Vector4,
};
pub use tracker::{Track, TrackLogRow, TrackStatus, TrackerConfig, TrackerState};

/// Standard deviations of the polar measurement noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementNoise {
    /// Range (m).
    pub sigma_r: f64,
    /// Azimuth (rad).
    pub sigma_theta: f64,
}

impl MeasurementNoise {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_r > 0.0 && self.sigma_theta > 0.0) {
            return Err(Error::invalid(
                "measurement noise deviations must be positive",
            ));
        }
        Ok(())
    }
}

/// Cartesian measurement with its covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvertedMeasurement {
    pub position: Vector2<f64>,
    pub covariance: Matrix2<f64>,
    pub emission: usize,
    pub time: f64,
}

/// Multiplicative debiasing factor `1 - e^(-s^2) + e^(-s^2/2)`.
///
/// Printed with the sign of the last term flipped in some sources; that form
/// tends to -1 as `s -> 0` and cannot be right.
pub fn debias_factor(sigma_theta: f64) -> f64 {
    let s2 = sigma_theta * sigma_theta;
    1.0 - (-s2).exp() + (-0.5 * s2).exp()
}

/// Plain `r (cos theta, sin theta)` without bias compensation.
pub fn naive_conversion(range: f64, azimuth: f64) -> Vector2<f64> {
    Vector2::new(range * azimuth.cos(), range * azimuth.sin())
}

/// Debiased polar-to-Cartesian conversion.
///
/// The covariance is the additive-debiased converted covariance evaluated at
/// the measured position (Lerro & Bar-Shalom). It reduces to the rotated
/// `diag(sigma_r^2, r^2 sigma_theta^2)` for small angular noise.
pub fn convert_measurement(m: &PolarMeasurement, noise: &MeasurementNoise) -> ConvertedMeasurement {
    let (r, th) = (m.range, m.azimuth);
    let s2 = noise.sigma_theta * noise.sigma_theta;
    let sr2 = noise.sigma_r * noise.sigma_r;
    let (s, c) = th.sin_cos();
    let (c2, sn2) = (c * c, s * s);
    let e2 = (-2.0 * s2).exp();
    let (ch1, ch2) = (s2.cosh(), (2.0 * s2).cosh());
    let (sh1, sh2) = (s2.sinh(), (2.0 * s2).sinh());
    let r2 = r * r;

    let xx = r2 * e2 * (c2 * (ch2 - ch1) + sn2 * (sh2 - sh1))
        + sr2 * e2 * (c2 * (2.0 * ch2 - ch1) + sn2 * (2.0 * sh2 - sh1));
    let yy = r2 * e2 * (sn2 * (ch2 - ch1) + c2 * (sh2 - sh1))
        + sr2 * e2 * (sn2 * (2.0 * ch2 - ch1) + c2 * (2.0 * sh2 - sh1));
    let xy = s * c * (-4.0 * s2).exp() * (sr2 + (r2 + sr2) * (1.0 - s2.exp()));

    ConvertedMeasurement {
        position: naive_conversion(r, th) * debias_factor(noise.sigma_theta),
        covariance: Matrix2::new(xx, xy, xy, yy),
        emission: m.emission,
        time: m.time,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn polar(range: f64, azimuth: f64) -> PolarMeasurement {
        PolarMeasurement {
            range,
            azimuth,
            emission: 0,
            time: 0.0,
            area: 1,
        }
    }

    #[test]
    fn small_angle_noise_limit_is_exact_conversion() {
        let noise = MeasurementNoise {
            sigma_r: 0.3,
            sigma_theta: 1e-6,
        };
        let th = 0.7;
        let z = convert_measurement(&polar(100.0, th), &noise);
        assert!((debias_factor(1e-6) - 1.0).abs() < 1e-12);
        assert!((z.position - naive_conversion(100.0, th)).norm() < 1e-8);
        let rot = Matrix2::new(th.cos(), -th.sin(), th.sin(), th.cos());
        let expected = rot * Matrix2::new(0.09, 0.0, 0.0, 1e4 * 1e-12) * rot.transpose();
        assert!(
            (z.covariance - expected).abs().max() < 1e-9,
            "{}",
            z.covariance
        );
    }

    #[test]
    fn debiased_position_on_axis() {
        let s = 3f64.to_radians();
        let noise = MeasurementNoise {
            sigma_r: 0.3,
            sigma_theta: s,
        };
        let z = convert_measurement(&polar(100.0, 0.0), &noise);
        // lambda = 1 - exp(-s^2) + exp(-s^2/2) evaluated at s = 3 deg.
        let lambda = 1.001_367_962_8;
        assert!((debias_factor(s) - lambda).abs() < 1e-8);
        assert!((z.position.x - 100.0 * lambda).abs() < 1e-6);
        assert_eq!(z.position.y, 0.0);
    }

    #[test]
    fn converted_covariance_is_psd() {
        let noise = MeasurementNoise {
            sigma_r: 0.3,
            sigma_theta: 3f64.to_radians(),
        };
        for i in 0..36 {
            let z = convert_measurement(&polar(5.0 + 10.0 * i as f64, i as f64 * 0.17), &noise);
            let c = z.covariance;
            assert_eq!(c[(0, 1)], c[(1, 0)]);
            assert!(c[(0, 0)] >= 0.0 && c[(1, 1)] >= 0.0);
            assert!(c.determinant() >= -1e-12 * c.norm_squared());
        }
    }

    #[test]
    fn debiasing_removes_the_mean_conversion_bias() {
        // Direct Monte Carlo: mean Cartesian position over noisy polar draws.
        let (r, th) = (100.0, 0.4);
        let noise = MeasurementNoise {
            sigma_r: 0.3,
            sigma_theta: 3f64.to_radians(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dr = Normal::new(0.0, noise.sigma_r).unwrap();
        let dt = Normal::new(0.0, noise.sigma_theta).unwrap();
        let truth = naive_conversion(r, th);
        let n = 200_000;
        let (mut naive, mut debiased) = (Vector2::zeros(), Vector2::zeros());
        for _ in 0..n {
            let (er, et) = (dr.sample(&mut rng), dt.sample(&mut rng));
            // Antithetic azimuth pair cancels the cross-range sampling noise.
            for sign in [1.0, -1.0] {
                let m = polar(r + er, th + sign * et);
                naive += naive_conversion(m.range, m.azimuth) - truth;
                debiased += convert_measurement(&m, &noise).position - truth;
            }
        }
        naive /= 2.0 * n as f64;
        debiased /= 2.0 * n as f64;
        let expected_bias = r * (1.0 - (-0.5 * noise.sigma_theta.powi(2)).exp());
        assert!((naive.norm() - expected_bias).abs() < 0.1 * expected_bias);
        assert!(
            debiased.norm() < 0.05 * naive.norm(),
            "{debiased} vs {naive}"
        );
    }
}
