use super::kalman::{innovation, KalmanState};
use super::ConvertedMeasurement;
use crate::angle::{angle_diff, azimuth_of};
use crate::detect::PolarMeasurement;
use crate::error::{Error, Result};

/// Two-stage gate thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateConfig {
    /// Coarse range window (m).
    pub g_r: f64,
    /// Coarse azimuth window (rad).
    pub g_theta: f64,
    /// Bound on the squared Mahalanobis distance of the innovation.
    pub g_s: f64,
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_r > 0.0 && self.g_theta > 0.0 && self.g_s > 0.0) {
            return Err(Error::invalid("gate thresholds must be positive"));
        }
        Ok(())
    }
}

/// A track/measurement pair that survived both gates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GatedPair {
    pub track: usize,
    pub measurement: usize,
    /// Squared Mahalanobis distance of the innovation.
    pub statistic: f64,
}

/// Gates every predicted track against every measurement.
///
/// `polar[i]` and `converted[i]` describe the same measurement. Pairs are
/// returned ordered by track, then measurement.
pub fn gate(
    tracks: &[KalmanState],
    polar: &[PolarMeasurement],
    converted: &[ConvertedMeasurement],
    cfg: &GateConfig,
) -> Vec<GatedPair> {
    debug_assert_eq!(polar.len(), converted.len());
    let mut pairs = Vec::new();
    for (k, tr) in tracks.iter().enumerate() {
        let pos = tr.position();
        let range = pos.norm();
        let azimuth = azimuth_of(pos.x, pos.y);
        for (i, (p, z)) in polar.iter().zip(converted).enumerate() {
            if (range - p.range).abs() >= cfg.g_r
                || angle_diff(azimuth, p.azimuth).abs() >= cfg.g_theta
            {
                continue;
            }
            let (nu, w) = innovation(tr, z);
            let Some(chol) = w.cholesky() else { continue };
            let statistic = nu.dot(&chol.solve(&nu));
            if statistic < cfg.g_s {
                pairs.push(GatedPair {
                    track: k,
                    measurement: i,
                    statistic,
                });
            }
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::{convert_measurement, Matrix4, MeasurementNoise, Vector4};
    use nalgebra::Matrix2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const NOISE: MeasurementNoise = MeasurementNoise {
        sigma_r: 0.3,
        sigma_theta: 0.052_359_877_559_829_89,
    };

    fn cfg() -> GateConfig {
        GateConfig {
            g_r: 10.0,
            g_theta: 10f64.to_radians(),
            g_s: 0.1,
        }
    }

    fn polar(range: f64, azimuth: f64) -> PolarMeasurement {
        PolarMeasurement {
            range,
            azimuth,
            emission: 0,
            time: 0.0,
            area: 1,
        }
    }

    fn track_at(x: f64, y: f64, var: f64) -> KalmanState {
        KalmanState::new(Vector4::new(x, y, 0.0, 0.0), Matrix4::identity() * var).unwrap()
    }

    #[test]
    fn measurement_on_prediction_passes() {
        let tr = track_at(0.0, 100.0, 1.0);
        let m = polar(100.0, std::f64::consts::FRAC_PI_2);
        let mut z = convert_measurement(&m, &NOISE);
        z.position = tr.position();
        let pairs = gate(&[tr], &[m], &[z], &cfg());
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].statistic, 0.0);
    }

    #[test]
    fn coarse_range_gate_rejects() {
        // Huge covariance would pass the statistical test; only the coarse
        // gate can reject this pair.
        let tr = track_at(0.0, 100.0, 1e8);
        let m = polar(120.0, std::f64::consts::FRAC_PI_2);
        let z = convert_measurement(&m, &NOISE);
        assert!(gate(&[tr], &[m], &[z], &cfg()).is_empty());
    }

    #[test]
    fn coarse_gate_wraps_azimuth() {
        let tr = track_at(100.0, -1.0, 1e8);
        let m = polar(100.0, 359f64.to_radians());
        let z = convert_measurement(&m, &NOISE);
        assert_eq!(gate(&[tr], &[m], &[z], &cfg()).len(), 1);
    }

    #[test]
    fn matches_exhaustive_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = GateConfig {
            g_r: 5.0,
            g_theta: 8f64.to_radians(),
            g_s: 4.0,
        };
        for _ in 0..200 {
            let tracks: Vec<KalmanState> = (0..rng.random_range(0..5))
                .map(|_| {
                    track_at(
                        rng.random_range(-50.0..50.0),
                        rng.random_range(20.0..60.0),
                        rng.random_range(0.5..20.0),
                    )
                })
                .collect();
            let polar: Vec<PolarMeasurement> = (0..rng.random_range(0..6))
                .map(|_| polar(rng.random_range(10.0..80.0), rng.random_range(0.0..3.2)))
                .collect();
            let conv: Vec<_> = polar
                .iter()
                .map(|m| convert_measurement(m, &NOISE))
                .collect();
            let got = gate(&tracks, &polar, &conv, &cfg);

            let mut expected = Vec::new();
            for (k, tr) in tracks.iter().enumerate() {
                let (x, y) = (tr.mean[0], tr.mean[1]);
                for (i, m) in polar.iter().enumerate() {
                    let dr = ((x * x + y * y).sqrt() - m.range).abs();
                    let mut dth = (y.atan2(x) - m.azimuth).rem_euclid(std::f64::consts::TAU);
                    if dth > std::f64::consts::PI {
                        dth = std::f64::consts::TAU - dth;
                    }
                    if dr >= cfg.g_r || dth >= cfg.g_theta {
                        continue;
                    }
                    let w: Matrix2<f64> =
                        tr.covariance.fixed_view::<2, 2>(0, 0).into_owned() + conv[i].covariance;
                    let nu = conv[i].position - tr.position();
                    let e = (nu.transpose() * w.try_inverse().unwrap() * nu)[(0, 0)];
                    if e < cfg.g_s {
                        expected.push((k, i, e));
                    }
                }
            }
            assert_eq!(got.len(), expected.len());
            for (g, (k, i, e)) in got.iter().zip(expected) {
                assert_eq!((g.track, g.measurement), (k, i));
                assert!((g.statistic - e).abs() < 1e-9 * (1.0 + e));
            }
        }
    }
}
