//! Ground truth and synthetic hydrophone data.
//!
//! The receive model is the far-field echo model: element `m` hears every
//! alive target as a copy of the transmitted chirp delayed by the two-way
//! travel time `2 r / c` plus the steering delay `tau_m(theta) = p_m . w(theta) / c`,
//! on top of white Gaussian clutter noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use crate::angle::azimuth_of;
use crate::beamform::{uniform_beams, AngleDistanceMatrix, Beamformer};
use crate::error::{Error, Result};

/// Planar hydrophone array, element positions in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayGeometry {
    elements: Vec<[f64; 2]>,
}

impl ArrayGeometry {
    pub fn new(elements: Vec<[f64; 2]>) -> Result<Self> {
        if elements.len() < 2 {
            return Err(Error::invalid("an array needs at least two elements"));
        }
        Self::unchecked_count(elements)
    }

    /// Same validation as [`ArrayGeometry::new`] but allows a single element.
    /// Used for omnidirectional reference channels.
    pub fn single(position: [f64; 2]) -> Result<Self> {
        Self::unchecked_count(vec![position])
    }

    fn unchecked_count(elements: Vec<[f64; 2]>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::invalid("array has no elements"));
        }
        if elements.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("array element position is not finite"));
        }
        for (i, a) in elements.iter().enumerate() {
            for b in &elements[i + 1..] {
                if a == b {
                    return Err(Error::invalid(format!(
                        "array elements coincide at ({}, {})",
                        a[0], a[1]
                    )));
                }
            }
        }
        Ok(ArrayGeometry { elements })
    }

    /// The four-hydrophone floater array. The published coordinates carry no
    /// unit; they are read as centimeters, which matches the ~25 cm spacing.
    pub fn floater() -> Self {
        let cm = [[-38.5, 0.0], [0.0, 39.5], [40.5, 0.0], [0.0, -40.5]];
        ArrayGeometry {
            elements: cm.iter().map(|p| [p[0] / 100.0, p[1] / 100.0]).collect(),
        }
    }

    pub fn elements(&self) -> &[[f64; 2]] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Returns the geometry with elements reordered by `perm` (`out[i] = self[perm[i]]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        ArrayGeometry {
            elements: perm.iter().map(|&i| self.elements[i]).collect(),
        }
    }
}

/// Linear frequency-modulated probe pulse, sampled as a real passband signal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waveform {
    /// Frequency at the start of the sweep (Hz).
    pub start_hz: f64,
    pub bandwidth_hz: f64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
}

impl Waveform {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::invalid("waveform duration must be positive"));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::invalid("waveform bandwidth must be positive"));
        }
        if !(self.start_hz >= 0.0) {
            return Err(Error::invalid(
                "waveform start frequency must be non-negative",
            ));
        }
        let top = self.start_hz + self.bandwidth_hz;
        if !(self.sample_rate_hz > 2.0 * top) {
            return Err(Error::invalid(format!(
                "sample rate {} Hz does not cover a sweep reaching {} Hz",
                self.sample_rate_hz, top
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center_hz(&self) -> f64 {
        self.start_hz + 0.5 * self.bandwidth_hz
    }

    /// Continuous-time pulse value; zero outside `[0, duration)`.
    pub fn value_at(&self, t: f64) -> f64 {
        if t < 0.0 || t >= self.duration_s {
            return 0.0;
        }
        let sweep_rate = self.bandwidth_hz / self.duration_s;
        (2.0 * PI * (self.start_hz * t + 0.5 * sweep_rate * t * t)).cos()
    }
}

/// Samples the chirp at the waveform's sample rate. Unit peak amplitude.
pub fn chirp_waveform(wf: &Waveform) -> Result<Vec<f64>> {
    wf.validate()?;
    let fs = wf.sample_rate_hz;
    Ok((0..wf.len()).map(|k| wf.value_at(k as f64 / fs)).collect())
}

/// Per-element steering delays `p_m . (cos az, sin az) / c` in seconds.
pub fn steering_delays(geom: &ArrayGeometry, azimuth: f64, c: f64) -> Vec<f64> {
    debug_assert!(c > 0.0);
    let (s, co) = azimuth.sin_cos();
    geom.elements
        .iter()
        .map(|p| (p[0] * co + p[1] * s) / c)
        .collect()
}

/// A constant-velocity point reflector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetTruth {
    /// Position at the birth emission (m).
    pub position: [f64; 2],
    /// Velocity (m/s).
    pub velocity: [f64; 2],
    pub birth: usize,
    /// Last emission at which the target exists (inclusive).
    pub death: usize,
    /// Linear echo amplitude relative to a unit-peak transmitted chirp.
    pub amplitude: f64,
}

impl TargetTruth {
    pub fn is_alive(&self, emission: usize) -> bool {
        emission >= self.birth && emission <= self.death
    }

    pub fn lifetime(&self) -> usize {
        self.death + 1 - self.birth
    }

    /// Position and velocity at absolute time `t` given the emission period.
    pub fn kinematics_at(&self, t: f64, period: f64) -> ([f64; 2], [f64; 2]) {
        let dt = t - self.birth as f64 * period;
        (
            [
                self.position[0] + self.velocity[0] * dt,
                self.position[1] + self.velocity[1] * dt,
            ],
            self.velocity,
        )
    }
}

/// Position and velocity of one target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrueState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

impl TrueState {
    pub fn range(&self) -> f64 {
        self.position[0].hypot(self.position[1])
    }

    pub fn azimuth(&self) -> f64 {
        azimuth_of(self.position[0], self.position[1])
    }
}

/// Everything needed to simulate a run of emissions.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub array: ArrayGeometry,
    pub waveform: Waveform,
    pub targets: Vec<TargetTruth>,
    /// Speed of sound (m/s).
    pub sound_speed: f64,
    /// Time between emissions (s).
    pub emission_period: f64,
    pub num_emissions: usize,
    /// Farthest range covered by one receive window (m).
    pub max_range: f64,
    /// Requested signal-to-clutter ratio in the angle-distance matrix (dB).
    pub scr_db: f64,
    /// Number of beams, uniformly spaced over the full circle.
    pub beams: usize,
    pub seed: u64,
}

impl Scenario {
    /// Single target starting at (0, 100) m with velocity (1, -3) m/s, seen by
    /// the floater array with a 10 kHz / 10 ms chirp sampled at 50 kHz.
    pub fn single_target(scr_db: f64, seed: u64) -> Self {
        Scenario {
            array: ArrayGeometry::floater(),
            waveform: Waveform {
                start_hz: 10_000.0,
                bandwidth_hz: 10_000.0,
                duration_s: 0.01,
                sample_rate_hz: 50_000.0,
            },
            targets: vec![TargetTruth {
                position: [0.0, 100.0],
                velocity: [1.0, -3.0],
                birth: 0,
                death: 59,
                amplitude: 1.0,
            }],
            sound_speed: 1500.0,
            emission_period: 1.0,
            num_emissions: 60,
            max_range: 120.0,
            scr_db,
            beams: 72,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.waveform.validate()?;
        if !(self.sound_speed > 0.0) {
            return Err(Error::invalid("sound speed must be positive"));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::invalid("max range must be positive"));
        }
        if self.beams == 0 {
            return Err(Error::invalid("at least one beam is required"));
        }
        if !self.scr_db.is_finite() {
            return Err(Error::invalid("SCR must be finite"));
        }
        let two_way = 2.0 * self.max_range / self.sound_speed;
        if !(self.emission_period > two_way) {
            return Err(Error::invalid(format!(
                "emission period {} s does not exceed the {} s two-way travel time at max range",
                self.emission_period, two_way
            )));
        }
        if self.buffer_len() < self.waveform.len() {
            return Err(Error::invalid(
                "receive window is shorter than the waveform",
            ));
        }
        for (k, t) in self.targets.iter().enumerate() {
            if t.death < t.birth {
                return Err(Error::invalid(format!("target {k} dies before it is born")));
            }
            let finite = t.position.iter().chain(&t.velocity).all(|v| v.is_finite());
            if !finite || !t.amplitude.is_finite() {
                return Err(Error::invalid(format!(
                    "target {k} has non-finite parameters"
                )));
            }
        }
        Ok(())
    }

    /// Samples per channel per emission, `round(2 R_max / c * f_s)`.
    pub fn buffer_len(&self) -> usize {
        (2.0 * self.max_range / self.sound_speed * self.waveform.sample_rate_hz).round() as usize
    }

    pub fn emission_time(&self, n: usize) -> f64 {
        n as f64 * self.emission_period
    }

    pub fn beam_azimuths(&self) -> Vec<f64> {
        uniform_beams(self.beams)
    }

    /// True state of target `k` at emission `n`.
    pub fn true_state(&self, k: usize, n: usize) -> Result<TrueState> {
        let target = self
            .targets
            .get(k)
            .ok_or_else(|| Error::invalid(format!("no target with index {k}")))?;
        if !target.is_alive(n) {
            return Err(Error::TargetNotAlive {
                target: k,
                emission: n,
            });
        }
        let (position, velocity) =
            target.kinematics_at(self.emission_time(n), self.emission_period);
        Ok(TrueState { position, velocity })
    }

    /// Deterministic noise generator for emission `n`; independent of the
    /// order in which emissions are synthesized.
    pub fn emission_rng(&self, n: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(n as u64);
        rng
    }

    /// Noise standard deviation that realizes the requested SCR.
    ///
    /// SCR is the ratio between the noise-free target peak in the
    /// angle-distance matrix and the median of a noise-only matrix. Both scale
    /// linearly (the noise-only median with the noise standard deviation), so a
    /// pilot noise-only emission at unit noise plus a noise-free emission at
    /// the first emission where a target is alive fix the scale exactly.
    pub fn calibrate_noise(&self, beamformer: &Beamformer) -> Result<f64> {
        self.validate()?;
        let pilot = {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x05ca_1ab1_e0dd_ba11);
            rng.set_stream(u64::MAX);
            let noise = self.noise_only(1.0, &mut rng);
            beamformer.form(&noise)?
        };
        let median = median(pilot.values());
        let Some(first) = self.targets.iter().map(|t| t.birth).min() else {
            // No target: report the unit noise level.
            return Ok(1.0);
        };
        let clean = self.synthesize_emission(first, 0.0, &mut self.emission_rng(first))?;
        let peak = beamformer
            .form(&clean)?
            .values()
            .iter()
            .fold(0f32, |a, &b| a.max(b)) as f64;
        if !(median > 0.0) || !(peak > 0.0) {
            return Err(Error::NumericalDegeneracy(
                "cannot calibrate clutter level: degenerate pilot matrix".into(),
            ));
        }
        Ok(peak / (median * 10f64.powf(self.scr_db / 20.0)))
    }

    fn noise_only<R: Rng>(&self, noise_std: f64, rng: &mut R) -> MultichannelBuffer {
        let len = self.buffer_len();
        let channels = (0..self.array.len())
            .map(|_| {
                (0..len)
                    .map(|_| noise_std * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        MultichannelBuffer {
            channels,
            timestamp: 0.0,
        }
    }

    /// Builds the receive buffer for emission `n`.
    ///
    /// Echoes falling past the end of the receive window are truncated.
    pub fn synthesize_emission<R: Rng>(
        &self,
        n: usize,
        noise_std: f64,
        rng: &mut R,
    ) -> Result<MultichannelBuffer> {
        if n >= self.num_emissions {
            return Err(Error::invalid(format!(
                "emission {n} is outside the scenario's {} emissions",
                self.num_emissions
            )));
        }
        if !(noise_std >= 0.0) {
            return Err(Error::invalid(
                "noise standard deviation must be non-negative",
            ));
        }
        let mut buffer = if noise_std > 0.0 {
            self.noise_only(noise_std, rng)
        } else {
            MultichannelBuffer {
                channels: vec![vec![0.0; self.buffer_len()]; self.array.len()],
                timestamp: 0.0,
            }
        };
        buffer.timestamp = self.emission_time(n);

        let fs = self.waveform.sample_rate_hz;
        let len = self.buffer_len();
        let pulse_samples = self.waveform.len() + 2;
        for (k, target) in self.targets.iter().enumerate() {
            if !target.is_alive(n) {
                continue;
            }
            let state = self.true_state(k, n)?;
            let two_way = 2.0 * state.range() / self.sound_speed;
            let delays = steering_delays(&self.array, state.azimuth(), self.sound_speed);
            for (channel, tau) in buffer.channels.iter_mut().zip(delays) {
                let onset = two_way + tau;
                let first = (onset * fs).floor().max(0.0) as usize;
                let last = (first + pulse_samples).min(len);
                for (s, sample) in channel.iter_mut().enumerate().take(last).skip(first) {
                    *sample += target.amplitude * self.waveform.value_at(s as f64 / fs - onset);
                }
            }
        }
        Ok(buffer)
    }
}

/// One emission's worth of hydrophone samples.
#[derive(Clone, Debug, PartialEq)]
pub struct MultichannelBuffer {
    /// `channels[m][s]`; every channel has the same length.
    pub channels: Vec<Vec<f64>>,
    /// Emission time (s).
    pub timestamp: f64,
}

impl MultichannelBuffer {
    pub fn new(channels: Vec<Vec<f64>>, timestamp: f64) -> Result<Self> {
        let Some(first) = channels.first() else {
            return Err(Error::invalid("buffer has no channels"));
        };
        if channels.iter().any(|c| c.len() != first.len()) {
            return Err(Error::invalid("channels differ in length"));
        }
        Ok(MultichannelBuffer {
            channels,
            timestamp,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        MultichannelBuffer {
            channels: perm.iter().map(|&i| self.channels[i].clone()).collect(),
            timestamp: self.timestamp,
        }
    }
}

/// i.i.d. Rayleigh clutter written straight into an angle-distance matrix.
/// Bypasses the acoustic chain; meant for exercising the detector.
pub fn rayleigh_clutter_matrix<R: Rng>(
    beams: usize,
    len: usize,
    alpha: f64,
    sample_rate: f64,
    sound_speed: f64,
    rng: &mut R,
) -> Result<AngleDistanceMatrix> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!(
            "rayleigh scale must be positive, got {alpha}"
        )));
    }
    // Envelope of a circular complex Gaussian with per-component deviation alpha.
    let values = (0..beams * len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            (alpha * re.hypot(im)) as f32
        })
        .collect();
    AngleDistanceMatrix::new(
        uniform_beams(beams),
        len,
        values,
        sample_rate,
        sound_speed,
        0.0,
    )
}

pub(crate) fn median(values: &[f32]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m as f64
}
