//! Azimuth helpers.
//!
//! Azimuths are measured counterclockwise from the +X axis. Internally they
//! are radians; configuration files and CSV output use degrees.

use std::f64::consts::{PI, TAU};

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_to_pi(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

/// Smallest signed difference `a - b`, wrapped to `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_to_pi(a - b)
}

/// Azimuth of a Cartesian point.
pub fn azimuth_of(x: f64, y: f64) -> f64 {
    y.atan2(x)
}
