//! File formats: angle-distance matrices, detection logs, track logs, sweeps.
//!
//! Matrix binary layout (little endian):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `ADM1`                  |
//! | 4      | 4    | beam count `U` (u32)          |
//! | 8      | 4    | range samples `L_s` (u32)     |
//! | 12     | 4    | speed of sound (f32, m/s)     |
//! | 16     | 8    | sample rate (f64, Hz)         |
//! | 24     | 8    | emission timestamp (f64, s)   |
//! | 32     | 4UL  | values, f32, row-major by beam|
//!
//! Beams are uniformly spaced over the full circle starting at 0.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::beamform::{uniform_beams, AngleDistanceMatrix};
use crate::detect::{BinaryMap, PolarMeasurement};
use crate::error::{Error, Result};
use crate::eval::{SweepParameter, SweepResult};
use crate::track::{TrackLogRow, TrackStatus};

pub const MATRIX_MAGIC: &[u8; 4] = b"ADM1";
pub const MATRIX_HEADER_LEN: usize = 32;

/// Serializes a matrix in the binary layout above.
pub fn encode_matrix(m: &AngleDistanceMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(MATRIX_HEADER_LEN + 4 * m.values().len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(m.num_beams() as u32).to_le_bytes());
    out.extend_from_slice(&(m.len() as u32).to_le_bytes());
    out.extend_from_slice(&(m.sound_speed() as f32).to_le_bytes());
    out.extend_from_slice(&m.sample_rate().to_le_bytes());
    out.extend_from_slice(&m.timestamp().to_le_bytes());
    for v in m.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses the binary layout; `path` only labels errors.
pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<AngleDistanceMatrix> {
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < MATRIX_HEADER_LEN {
        return Err(bad(format!(
            "file is {} bytes, shorter than the {MATRIX_HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MATRIX_MAGIC {
        return Err(bad("bad magic, not an angle-distance matrix".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (beams, len) = (u32_at(4), u32_at(8));
    let c = f32::from_le_bytes(bytes[12..16].try_into().unwrap()) as f64;
    let (fs, t) = (f64_at(16), f64_at(24));
    let expected = beams
        .checked_mul(len)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(MATRIX_HEADER_LEN))
        .ok_or_else(|| bad("header dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(bad(format!(
            "header declares {beams}x{len} values ({expected} bytes) but file has {} bytes",
            bytes.len()
        )));
    }
    let values = bytes[MATRIX_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    AngleDistanceMatrix::new(uniform_beams(beams), len, values, fs, c, t)
        .map_err(|e| bad(e.to_string()))
}

pub fn read_matrix(path: &Path) -> Result<AngleDistanceMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes, path)
}

/// Writes through a temporary sibling file renamed into place on success.
pub fn write_atomic(
    path: &Path,
    write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp: PathBuf = path.with_file_name(tmp_name);
    let result = (|| {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        write(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn write_matrix(path: &Path, m: &AngleDistanceMatrix) -> Result<()> {
    let bytes = encode_matrix(m);
    write_atomic(path, |w| w.write_all(&bytes))
}

/// Matrix as CSV with one row per beam: `azimuth_deg,v0,v1,...`.
pub fn write_matrix_csv(w: &mut dyn Write, m: &AngleDistanceMatrix) -> std::io::Result<()> {
    for u in 0..m.num_beams() {
        write!(w, "{}", m.beams()[u].to_degrees())?;
        for v in m.row(u) {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Detected cells: `emission,n,u,v` (one line per set cell).
pub fn write_binary_map_header(w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "emission,n,u,v")
}

pub fn write_binary_map_rows(
    w: &mut dyn Write,
    emission: usize,
    map: &BinaryMap,
) -> std::io::Result<()> {
    for (i, (u, v)) in map.ones().enumerate() {
        writeln!(w, "{emission},{i},{u},{v}")?;
    }
    Ok(())
}

/// Merged measurements: `emission,r_m,theta_deg,area`.
pub fn write_blob_log(w: &mut dyn Write, ms: &[PolarMeasurement]) -> std::io::Result<()> {
    writeln!(w, "emission,r_m,theta_deg,area")?;
    for m in ms {
        writeln!(
            w,
            "{},{},{},{}",
            m.emission,
            m.range,
            m.azimuth.to_degrees(),
            m.area
        )?;
    }
    Ok(())
}

pub const TRACK_LOG_HEADER: &str = "emission,t,track_id,status,x,y,vx,vy,p_trace,assigned_blob";

pub fn write_track_log(w: &mut dyn Write, rows: &[TrackLogRow]) -> std::io::Result<()> {
    writeln!(w, "{TRACK_LOG_HEADER}")?;
    for r in rows {
        let blob = r.assigned_blob.map(|b| b.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.emission, r.time, r.track_id, r.status, r.x, r.y, r.vx, r.vy, r.p_trace, blob
        )?;
    }
    Ok(())
}

/// Parses a track log written by [`write_track_log`].
pub fn parse_track_log(text: &str, path: &Path) -> Result<Vec<TrackLogRow>> {
    let bad = |line: usize, reason: String| Error::Format {
        path: path.to_path_buf(),
        reason: format!("line {line}: {reason}"),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACK_LOG_HEADER => {}
        _ => return Err(bad(1, "missing track log header".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(bad(i + 1, format!("expected 10 fields, found {}", f.len())));
        }
        let num = |k: usize| -> Result<f64> {
            f[k].parse()
                .map_err(|_| bad(i + 1, format!("field {k} is not a number: {:?}", f[k])))
        };
        let int = |k: usize| -> Result<u64> {
            f[k].parse()
                .map_err(|_| bad(i + 1, format!("field {k} is not an integer: {:?}", f[k])))
        };
        let status: TrackStatus = f[3].parse().map_err(|e: Error| bad(i + 1, e.to_string()))?;
        rows.push(TrackLogRow {
            emission: int(0)? as usize,
            time: num(1)?,
            track_id: int(2)?,
            status,
            x: num(4)?,
            y: num(5)?,
            vx: num(6)?,
            vy: num(7)?,
            p_trace: num(8)?,
            assigned_blob: if f[9].is_empty() {
                None
            } else {
                Some(int(9)? as usize)
            },
        });
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str =
    "param,value,seed,continuity,false_tracks,pos_rmse,vel_rmse,conv_emission,runtime_s";

/// One line per run; failed runs carry empty metric fields.
pub fn write_sweep_csv(w: &mut dyn Write, result: &SweepResult) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    let param = result.parameter;
    for r in &result.runs {
        match &r.result {
            Ok(m) => writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                param,
                r.value,
                r.seed,
                m.mean_continuity(),
                m.false_tracks,
                m.position_rmse,
                m.velocity_rmse,
                m.convergence_emission()
                    .map(|c| c.to_string())
                    .unwrap_or_default(),
                m.runtime_per_emission
            )?,
            Err(_) => writeln!(w, "{param},{},{},,,,,,", r.value, r.seed)?,
        }
    }
    Ok(())
}

/// Human-readable per-point summary.
pub fn format_sweep_summary(result: &SweepResult) -> String {
    let mut s = format!(
        "{:>10}  {:>5}  {:>17}  {:>17}  {:>9}  {:>9}  {:>9}\n",
        result.parameter.name(),
        "runs",
        "continuity",
        "false tracks",
        "pos rmse",
        "vel rmse",
        "converged"
    );
    for p in &result.points {
        let value = match result.parameter {
            SweepParameter::ConfirmCount => format!("{}", p.value),
            _ => format!("{:.3e}", p.value),
        };
        s.push_str(&format!(
            "{:>10}  {:>5}  {:>8.3} ± {:<6.3}  {:>8.2} ± {:<6.2}  {:>9.3}  {:>9.3}  {:>9.2}\n",
            value,
            p.runs - p.failed,
            p.mean_continuity,
            p.se_continuity,
            p.mean_false_tracks,
            p.se_false_tracks,
            p.mean_position_rmse,
            p.mean_velocity_rmse,
            p.converged_share
        ));
    }
    s
}
