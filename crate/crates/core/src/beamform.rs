//! Pulse compression and delay-and-sum beamforming.
//!
//! Every channel is cross-correlated with a unit-energy replica of the
//! transmitted chirp; the analytic (one-sided spectrum) correlation output is
//! then advanced by the per-element steering delay of each beam and summed.
//! Delays are applied as linear phase in the frequency domain so that they
//! stay exact at sub-sample resolution. Matrix entries are magnitudes of the
//! complex beam outputs.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scenario::{
    chirp_waveform, steering_delays, ArrayGeometry, MultichannelBuffer, Waveform,
};

pub use rustfft::num_complex;

/// `count` beam azimuths spread uniformly over `[0, 2pi)`.
pub fn uniform_beams(count: usize) -> Vec<f64> {
    (0..count).map(|u| TAU * u as f64 / count as f64).collect()
}

/// Beam azimuth x range sample envelope map of one emission.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleDistanceMatrix {
    beams: Vec<f64>,
    len: usize,
    values: Vec<f32>,
    sample_rate: f64,
    sound_speed: f64,
    timestamp: f64,
}

impl AngleDistanceMatrix {
    /// `values` is row-major, one row of `len` samples per beam.
    pub fn new(
        beams: Vec<f64>,
        len: usize,
        values: Vec<f32>,
        sample_rate: f64,
        sound_speed: f64,
        timestamp: f64,
    ) -> Result<Self> {
        if beams.is_empty() {
            return Err(Error::invalid("matrix needs at least one beam"));
        }
        if values.len() != beams.len() * len {
            return Err(Error::invalid(format!(
                "matrix has {} values, expected {} x {}",
                values.len(),
                beams.len(),
                len
            )));
        }
        if beams.windows(2).any(|w| !(w[1] > w[0])) || beams[beams.len() - 1] - beams[0] >= TAU {
            return Err(Error::invalid(
                "beam azimuths must increase strictly within one turn",
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(
                "matrix values must be finite and non-negative",
            ));
        }
        if !(sample_rate > 0.0 && sound_speed > 0.0) {
            return Err(Error::invalid(
                "sample rate and sound speed must be positive",
            ));
        }
        Ok(AngleDistanceMatrix {
            beams,
            len,
            values,
            sample_rate,
            sound_speed,
            timestamp,
        })
    }

    pub fn beams(&self) -> &[f64] {
        &self.beams
    }

    pub fn num_beams(&self) -> usize {
        self.beams.len()
    }

    /// Samples per beam (L_s).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.values[u * self.len + v]
    }

    pub fn row(&self, u: usize) -> &[f32] {
        &self.values[u * self.len..(u + 1) * self.len]
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn with_timestamp(mut self, t: f64) -> Self {
        self.timestamp = t;
        self
    }

    /// Two-way range of a (fractional) sample index.
    pub fn range_of(&self, v: f64) -> f64 {
        v * self.sound_speed / (2.0 * self.sample_rate)
    }

    /// Multiplies every entry by `k >= 0`.
    pub fn scaled(&self, k: f32) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= k);
        out
    }

    /// (beam, sample, value) of the largest entry.
    pub fn peak(&self) -> (usize, usize, f32) {
        let (i, v) = self
            .values
            .iter()
            .enumerate()
            .fold(
                (0, f32::MIN),
                |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
            );
        (i / self.len, i % self.len, v)
    }
}

/// Per-channel complex (analytic) pulse-compressed signals.
#[derive(Clone, Debug)]
pub struct CompressedBuffer {
    pub channels: Vec<Vec<Complex64>>,
    pub timestamp: f64,
}

/// Smallest 2^a 3^b 5^c that is at least `n`.
fn fft_len(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p5 = 1;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            let mut p = p35;
            while p < n {
                p *= 2;
            }
            best = best.min(p);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

/// One-sided weighting that turns a real signal's spectrum into its analytic
/// signal's spectrum.
fn analytic_weight(k: usize, n: usize) -> f64 {
    if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
        1.0
    } else if k < n.div_ceil(2) {
        2.0
    } else {
        0.0
    }
}

/// Signed frequency of bin `k` in cycles per sample.
fn bin_freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}

fn unit_energy_replica(wf: &Waveform) -> Result<Vec<f64>> {
    let mut d = chirp_waveform(wf)?;
    let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    d.iter_mut().for_each(|x| *x /= norm);
    Ok(d)
}

fn forward(fft: &Arc<dyn Fft<f64>>, input: &[f64], n: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (b, &x) in buf.iter_mut().zip(input) {
        b.re = x;
    }
    fft.process(&mut buf);
    buf
}

/// Linear cross-correlation `out[s] = sum_k x[s + k] * replica[k]` for
/// `s in [0, x.len())`, computed by FFT. Real-valued.
pub fn correlate(x: &[f64], replica: &[f64]) -> Vec<f64> {
    let n = fft_len(x.len() + replica.len());
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let xs = forward(&fwd, x, n);
    let ds = forward(&fwd, replica, n);
    let mut prod: Vec<Complex64> = xs.iter().zip(&ds).map(|(a, b)| a * b.conj()).collect();
    inv.process(&mut prod);
    prod[..x.len()].iter().map(|c| c.re / n as f64).collect()
}

/// Pulse compression of every channel with the waveform's unit-energy replica.
///
/// Output sample `s` corresponds to an echo whose onset is at input sample `s`.
pub fn matched_filter(buffer: &MultichannelBuffer, wf: &Waveform) -> Result<CompressedBuffer> {
    let replica = unit_energy_replica(wf)?;
    let len = buffer.len();
    if replica.len() > len {
        return Err(Error::invalid(format!(
            "waveform ({} samples) is longer than the buffer ({len} samples)",
            replica.len()
        )));
    }
    let n = fft_len(len + replica.len());
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let d = forward(&fwd, &replica, n);
    let channels = buffer
        .channels
        .iter()
        .map(|x| {
            let mut spec = forward(&fwd, x, n);
            for (k, (s, dk)) in spec.iter_mut().zip(&d).enumerate() {
                *s *= dk.conj() * (analytic_weight(k, n) / n as f64);
            }
            inv.process(&mut spec);
            spec.truncate(len);
            spec
        })
        .collect();
    Ok(CompressedBuffer {
        channels,
        timestamp: buffer.timestamp,
    })
}

/// Per-beam, per-element advance in samples.
fn beam_shifts(geom: &ArrayGeometry, beams: &[f64], c: f64, fs: f64) -> Vec<Vec<f64>> {
    beams
        .iter()
        .map(|&az| {
            steering_delays(geom, az, c)
                .into_iter()
                .map(|tau| tau * fs)
                .collect()
        })
        .collect()
}

fn max_shift(shifts: &[Vec<f64>]) -> usize {
    shifts
        .iter()
        .flatten()
        .fold(0f64, |a, s| a.max(s.abs()))
        .ceil() as usize
}

/// Sums channel spectra after advancing channel `m` by `shifts[m]` samples.
/// `out` receives the frequency-domain beam; only bins in `bins` are touched.
fn steer_into(
    spectra: &[Vec<Complex64>],
    shifts: &[f64],
    bins: std::ops::Range<usize>,
    out: &mut [Complex64],
) {
    let n = out.len();
    out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    for (spec, &shift) in spectra.iter().zip(shifts) {
        if bins.end <= n / 2 + 1 {
            // One-sided: phase recursion over consecutive bins.
            let step = Complex64::from_polar(1.0, TAU * shift / n as f64);
            let mut phase = Complex64::from_polar(1.0, TAU * shift * bins.start as f64 / n as f64);
            for (i, k) in bins.clone().enumerate() {
                if i % 512 == 511 {
                    phase = Complex64::from_polar(1.0, TAU * shift * k as f64 / n as f64);
                }
                out[k] += spec[k] * phase;
                phase *= step;
            }
        } else {
            for k in bins.clone() {
                out[k] += spec[k] * Complex64::from_polar(1.0, TAU * shift * bin_freq(k, n));
            }
        }
    }
}

/// Delay-and-sum of already compressed channels, complex (pre-envelope).
/// Row `u` is `sum_m s_m(t + tau_m(beam_u))`.
pub fn delay_and_sum_complex(
    compressed: &CompressedBuffer,
    geom: &ArrayGeometry,
    beams: &[f64],
    c: f64,
    sample_rate: f64,
) -> Result<Vec<Vec<Complex64>>> {
    if beams.is_empty() {
        return Err(Error::invalid("no beams requested"));
    }
    if compressed.channels.len() != geom.len() {
        return Err(Error::invalid(format!(
            "{} channels for a {}-element array",
            compressed.channels.len(),
            geom.len()
        )));
    }
    let len = compressed.channels[0].len();
    if compressed.channels.iter().any(|ch| ch.len() != len) {
        return Err(Error::invalid("compressed channels differ in length"));
    }
    let shifts = beam_shifts(geom, beams, c, sample_rate);
    let n = fft_len(len + max_shift(&shifts) + 1);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let spectra: Vec<Vec<Complex64>> = compressed
        .channels
        .iter()
        .map(|ch| {
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            buf[..len].copy_from_slice(ch);
            fwd.process(&mut buf);
            buf.iter_mut().for_each(|z| *z /= n as f64);
            buf
        })
        .collect();
    Ok(shifts
        .par_iter()
        .map(|s| {
            let mut beam = vec![Complex64::new(0.0, 0.0); n];
            steer_into(&spectra, s, 0..n, &mut beam);
            inv.process(&mut beam);
            beam.truncate(len);
            beam
        })
        .collect())
}

/// Delay-and-sum of compressed channels into an angle-distance matrix.
pub fn delay_and_sum(
    compressed: &CompressedBuffer,
    geom: &ArrayGeometry,
    beams: &[f64],
    c: f64,
    sample_rate: f64,
) -> Result<AngleDistanceMatrix> {
    let rows = delay_and_sum_complex(compressed, geom, beams, c, sample_rate)?;
    let len = rows[0].len();
    let values = rows.iter().flatten().map(|z| z.norm() as f32).collect();
    AngleDistanceMatrix::new(
        beams.to_vec(),
        len,
        values,
        sample_rate,
        c,
        compressed.timestamp,
    )
}

/// Fused matched filter + beamformer with cached FFT plans.
///
/// Equivalent to [`matched_filter`] followed by [`delay_and_sum`], except
/// that correlation lags just outside the receive window remain available to
/// the steering shifts instead of being zero.
pub struct Beamformer {
    geom: ArrayGeometry,
    beams: Vec<f64>,
    shifts: Vec<Vec<f64>>,
    sound_speed: f64,
    sample_rate: f64,
    len: usize,
    n: usize,
    replica: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Beamformer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Beamformer")
            .field("beams", &self.beams.len())
            .field("elements", &self.geom.len())
            .field("len", &self.len)
            .field("fft_len", &self.n)
            .finish()
    }
}

impl Beamformer {
    pub fn new(
        geom: &ArrayGeometry,
        wf: &Waveform,
        beams: Vec<f64>,
        sound_speed: f64,
        len: usize,
    ) -> Result<Self> {
        if beams.is_empty() {
            return Err(Error::invalid("no beams requested"));
        }
        if !(sound_speed > 0.0) {
            return Err(Error::invalid("sound speed must be positive"));
        }
        let replica = unit_energy_replica(wf)?;
        if replica.len() > len {
            return Err(Error::invalid(format!(
                "waveform ({} samples) is longer than the buffer ({len} samples)",
                replica.len()
            )));
        }
        let fs = wf.sample_rate_hz;
        let shifts = beam_shifts(geom, &beams, sound_speed, fs);
        let n = fft_len(len + replica.len() + max_shift(&shifts) + 1);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut spectrum = forward(&fwd, &replica, n);
        for (k, d) in spectrum.iter_mut().enumerate() {
            *d = d.conj() * (analytic_weight(k, n) / n as f64);
        }
        Ok(Beamformer {
            geom: geom.clone(),
            beams,
            shifts,
            sound_speed,
            sample_rate: fs,
            len,
            n,
            replica: spectrum,
            fwd,
            inv,
        })
    }

    pub fn beams(&self) -> &[f64] {
        &self.beams
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn compressed_spectra(&self, buffer: &MultichannelBuffer) -> Result<Vec<Vec<Complex64>>> {
        if buffer.num_channels() != self.geom.len() {
            return Err(Error::Validation(format!(
                "buffer has {} channels, array has {} elements",
                buffer.num_channels(),
                self.geom.len()
            )));
        }
        if buffer.len() != self.len {
            return Err(Error::Validation(format!(
                "buffer has {} samples per channel, expected {}",
                buffer.len(),
                self.len
            )));
        }
        Ok(buffer
            .channels
            .iter()
            .map(|x| {
                let mut spec = forward(&self.fwd, x, self.n);
                spec.iter_mut()
                    .zip(&self.replica)
                    .for_each(|(s, d)| *s *= d);
                spec
            })
            .collect())
    }

    fn one_sided_bins(&self) -> std::ops::Range<usize> {
        0..self.n / 2 + 1
    }

    /// Complex beam outputs before the envelope.
    pub fn form_complex(&self, buffer: &MultichannelBuffer) -> Result<Vec<Vec<Complex64>>> {
        let spectra = self.compressed_spectra(buffer)?;
        Ok(self
            .shifts
            .par_iter()
            .map(|s| {
                let mut beam = vec![Complex64::new(0.0, 0.0); self.n];
                steer_into(&spectra, s, self.one_sided_bins(), &mut beam);
                self.inv.process(&mut beam);
                beam.truncate(self.len);
                beam
            })
            .collect())
    }

    /// Angle-distance matrix of one emission.
    pub fn form(&self, buffer: &MultichannelBuffer) -> Result<AngleDistanceMatrix> {
        let spectra = self.compressed_spectra(buffer)?;
        let rows: Vec<Vec<f32>> = self
            .shifts
            .par_iter()
            .map_init(
                || vec![Complex64::new(0.0, 0.0); self.n],
                |beam, s| {
                    steer_into(&spectra, s, self.one_sided_bins(), beam);
                    self.inv.process(beam);
                    beam[..self.len].iter().map(|z| z.norm() as f32).collect()
                },
            )
            .collect();
        AngleDistanceMatrix::new(
            self.beams.clone(),
            self.len,
            rows.concat(),
            self.sample_rate,
            self.sound_speed,
            buffer.timestamp,
        )
    }
}

/// Narrowband array response in dB relative to the steered direction.
pub fn beam_pattern(
    geom: &ArrayGeometry,
    steer: f64,
    grid: &[f64],
    frequency: f64,
    c: f64,
) -> Result<Vec<f64>> {
    if !(frequency > 0.0) {
        return Err(Error::invalid("beam pattern frequency must be positive"));
    }
    let reference = steering_delays(geom, steer, c);
    let m = geom.len() as f64;
    Ok(grid
        .iter()
        .map(|&az| {
            let sum: Complex64 = steering_delays(geom, az, c)
                .iter()
                .zip(&reference)
                .map(|(t, t0)| Complex64::from_polar(1.0, 2.0 * PI * frequency * (t - t0)))
                .sum();
            (20.0 * (sum.norm() / m).log10()).max(-300.0)
        })
        .collect())
}
