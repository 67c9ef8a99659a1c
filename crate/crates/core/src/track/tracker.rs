use std::collections::VecDeque;
use std::fmt;

use nalgebra::Matrix4;

use super::auction::assign;
use super::gate::{gate, GateConfig};
use super::kalman::{predict, update, KalmanState, Vector4};
use super::{convert_measurement, ConvertedMeasurement, MeasurementNoise};
use crate::detect::PolarMeasurement;
use crate::error::{Error, Result};

/// Tracker parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackerConfig {
    pub noise: MeasurementNoise,
    /// Standard deviation of the white acceleration noise (m/s^2).
    pub sigma_zeta: f64,
    pub gate: GateConfig,
    /// Assigned-blob count that confirms a track.
    pub confirm_count: usize,
    /// A track is deleted after this many misses ...
    pub delete_misses: usize,
    /// ... within this many most recent emissions.
    pub delete_window: usize,
    /// Velocity standard deviation of a freshly initiated track (m/s).
    pub initial_speed_std: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            noise: MeasurementNoise {
                sigma_r: 0.3,
                sigma_theta: 3f64.to_radians(),
            },
            sigma_zeta: 1e-4,
            gate: GateConfig {
                g_r: 10.0,
                g_theta: 10f64.to_radians(),
                g_s: 0.1,
            },
            confirm_count: 5,
            delete_misses: 7,
            delete_window: 15,
            initial_speed_std: 5.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.gate.validate()?;
        if !(self.sigma_zeta >= 0.0 && self.sigma_zeta.is_finite()) {
            return Err(Error::invalid("sigma_zeta must be non-negative"));
        }
        if self.confirm_count == 0 || self.delete_misses == 0 {
            return Err(Error::invalid("N_c and d1 must be at least 1"));
        }
        if self.delete_misses > self.delete_window {
            return Err(Error::invalid("d1 must not exceed d2"));
        }
        if !(self.initial_speed_std > 0.0) {
            return Err(Error::invalid("initial speed deviation must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

impl TrackStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackStatus::Tentative => "tentative",
            TrackStatus::Confirmed => "confirmed",
            TrackStatus::Deleted => "deleted",
        }
    }
}

impl fmt::Display for TrackStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrackStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tentative" => Ok(TrackStatus::Tentative),
            "confirmed" => Ok(TrackStatus::Confirmed),
            "deleted" => Ok(TrackStatus::Deleted),
            other => Err(Error::Validation(format!("unknown track status {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub id: u64,
    pub filter: KalmanState,
    pub status: TrackStatus,
    /// Assignment outcome of the most recent emissions, oldest first.
    pub history: VecDeque<bool>,
    /// Total number of blobs assigned, the initiating blob included.
    pub hits: usize,
    pub created: usize,
    /// Time the filter state refers to (s).
    pub time: f64,
}

impl Track {
    pub fn misses(&self) -> usize {
        self.history.iter().filter(|h| !**h).count()
    }
}

/// One line of the per-emission track log.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackLogRow {
    pub emission: usize,
    pub time: f64,
    pub track_id: u64,
    pub status: TrackStatus,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub p_trace: f64,
    /// Index of the measurement that updated or initiated the track.
    pub assigned_blob: Option<usize>,
}

impl TrackLogRow {
    fn of(track: &Track, emission: usize, assigned_blob: Option<usize>) -> Self {
        let m = &track.filter.mean;
        Self {
            emission,
            time: track.time,
            track_id: track.id,
            status: track.status,
            x: m[0],
            y: m[1],
            vx: m[2],
            vy: m[3],
            p_trace: track.filter.covariance.trace(),
            assigned_blob,
        }
    }
}

/// Live tracks plus bookkeeping; advanced one emission at a time.
#[derive(Clone, Debug)]
pub struct TrackerState {
    config: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    last_time: Option<f64>,
}

impl TrackerState {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            tracks: Vec::new(),
            next_id: 0,
            last_time: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Tracks alive after the latest step.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Processes the measurements of one emission taken at time `t`.
    ///
    /// Returns a log row for every track that was alive during the step,
    /// including those deleted by it and those it created.
    pub fn step(
        &mut self,
        measurements: &[PolarMeasurement],
        emission: usize,
        t: f64,
    ) -> Result<Vec<TrackLogRow>> {
        if !t.is_finite() {
            return Err(Error::invalid("emission time must be finite"));
        }
        if let Some(prev) = self.last_time {
            if t <= prev {
                return Err(Error::invalid(format!(
                    "emission times must increase: {t} after {prev}"
                )));
            }
        }
        let cfg = self.config;

        for tr in &mut self.tracks {
            tr.filter = predict(&tr.filter, t - tr.time, cfg.sigma_zeta)?;
            tr.time = t;
        }
        let converted: Vec<ConvertedMeasurement> = measurements
            .iter()
            .map(|m| convert_measurement(m, &cfg.noise))
            .collect();
        let predicted: Vec<KalmanState> = self.tracks.iter().map(|t| t.filter.clone()).collect();
        let pairs = gate(&predicted, measurements, &converted, &cfg.gate);
        let assignment = assign(&pairs, self.tracks.len(), measurements.len());

        let mut track_blob = vec![None; self.tracks.len()];
        let mut blob_used = vec![false; measurements.len()];
        for &(k, i) in &assignment {
            track_blob[k] = Some(i);
            blob_used[i] = true;
        }

        let mut rows = Vec::with_capacity(self.tracks.len() + measurements.len());
        for (tr, blob) in self.tracks.iter_mut().zip(&track_blob) {
            if let Some(i) = *blob {
                tr.filter = update(&tr.filter, &converted[i])?;
                tr.hits += 1;
            }
            tr.history.push_back(blob.is_some());
            while tr.history.len() > cfg.delete_window {
                tr.history.pop_front();
            }
            if tr.status == TrackStatus::Tentative && tr.hits >= cfg.confirm_count {
                tr.status = TrackStatus::Confirmed;
            }
            if tr.misses() >= cfg.delete_misses {
                tr.status = TrackStatus::Deleted;
            }
            rows.push(TrackLogRow::of(tr, emission, *blob));
        }
        self.tracks.retain(|t| t.status != TrackStatus::Deleted);

        for (i, z) in converted.iter().enumerate() {
            if blob_used[i] {
                continue;
            }
            let tr = self.initiate(z, emission, t)?;
            rows.push(TrackLogRow::of(&tr, emission, Some(i)));
            self.tracks.push(tr);
        }
        self.last_time = Some(t);
        Ok(rows)
    }

    fn initiate(&mut self, z: &ConvertedMeasurement, emission: usize, t: f64) -> Result<Track> {
        let cfg = &self.config;
        let mut p = Matrix4::zeros();
        p.fixed_view_mut::<2, 2>(0, 0).copy_from(&z.covariance);
        let v2 = cfg.initial_speed_std * cfg.initial_speed_std;
        p[(2, 2)] = v2;
        p[(3, 3)] = v2;
        let filter = KalmanState::new(Vector4::new(z.position.x, z.position.y, 0.0, 0.0), p)?;
        let status = if cfg.confirm_count <= 1 {
            TrackStatus::Confirmed
        } else {
            TrackStatus::Tentative
        };
        let id = self.next_id;
        self.next_id += 1;
        Ok(Track {
            id,
            filter,
            status,
            history: VecDeque::from([true]),
            hits: 1,
            created: emission,
            time: t,
        })
    }
}
