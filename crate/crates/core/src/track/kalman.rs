use nalgebra::{Matrix2, SMatrix, Vector2};

use super::ConvertedMeasurement;
use crate::error::{Error, Result};

pub type Vector4 = nalgebra::Vector4<f64>;
pub type Matrix4 = nalgebra::Matrix4<f64>;
type Matrix2x4 = SMatrix<f64, 2, 4>;

/// Gaussian state of a nearly-constant-velocity target: `(x, y, vx, vy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanState {
    pub mean: Vector4,
    pub covariance: Matrix4,
}

impl KalmanState {
    pub fn new(mean: Vector4, covariance: Matrix4) -> Result<Self> {
        check_spd(&covariance, "state covariance")?;
        Ok(Self { mean, covariance })
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.mean[2], self.mean[3])
    }

    /// Normalized estimation error squared against a true state.
    pub fn nees(&self, truth: &Vector4) -> Result<f64> {
        let e = truth - self.mean;
        let chol = self
            .covariance
            .cholesky()
            .ok_or_else(|| Error::NumericalDegeneracy("state covariance not SPD".into()))?;
        Ok(e.dot(&chol.solve(&e)))
    }
}

/// State transition over `dt` seconds.
pub fn transition(dt: f64) -> Matrix4 {
    let mut a = Matrix4::identity();
    a[(0, 2)] = dt;
    a[(1, 3)] = dt;
    a
}

/// Process noise `sigma^2 G G^T` for white acceleration held over `dt`.
pub fn process_noise(dt: f64, sigma_zeta: f64) -> Matrix4 {
    let g = SMatrix::<f64, 4, 2>::new(0.5 * dt * dt, 0.0, 0.0, 0.5 * dt * dt, dt, 0.0, 0.0, dt);
    g * g.transpose() * (sigma_zeta * sigma_zeta)
}

/// Position-selecting observation matrix.
pub fn observation() -> Matrix2x4 {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

fn check_spd(p: &Matrix4, what: &str) -> Result<()> {
    if p.iter().any(|v| !v.is_finite()) || p.cholesky().is_none() {
        return Err(Error::NumericalDegeneracy(format!(
            "{what} is not positive definite"
        )));
    }
    Ok(())
}

fn symmetrize(p: &Matrix4) -> Matrix4 {
    (p + p.transpose()) * 0.5
}

/// Propagates the state `dt >= 0` seconds ahead.
pub fn predict(state: &KalmanState, dt: f64, sigma_zeta: f64) -> Result<KalmanState> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!(
            "prediction interval must be >= 0, got {dt}"
        )));
    }
    check_spd(&state.covariance, "state covariance")?;
    let a = transition(dt);
    let p = a * state.covariance * a.transpose() + process_noise(dt, sigma_zeta);
    Ok(KalmanState {
        mean: a * state.mean,
        covariance: symmetrize(&p),
    })
}

/// Innovation and its covariance for a converted measurement.
pub(crate) fn innovation(
    state: &KalmanState,
    z: &ConvertedMeasurement,
) -> (Vector2<f64>, Matrix2<f64>) {
    let h = observation();
    let nu = z.position - h * state.mean;
    let w = h * state.covariance * h.transpose() + z.covariance;
    (nu, (w + w.transpose()) * 0.5)
}

/// Measurement update in Joseph form.
pub fn update(state: &KalmanState, z: &ConvertedMeasurement) -> Result<KalmanState> {
    let h = observation();
    let (nu, w) = innovation(state, z);
    let w_inv = w
        .cholesky()
        .ok_or_else(|| Error::NumericalDegeneracy("innovation covariance is singular".into()))?
        .inverse();
    let k = state.covariance * h.transpose() * w_inv;
    let i_kh = Matrix4::identity() - k * h;
    let p = i_kh * state.covariance * i_kh.transpose() + k * z.covariance * k.transpose();
    let p = symmetrize(&p);
    check_spd(&p, "updated covariance")?;
    Ok(KalmanState {
        mean: state.mean + k * nu,
        covariance: p,
    })
}
