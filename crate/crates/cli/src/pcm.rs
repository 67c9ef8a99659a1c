//! Header-less interleaved little-endian 16-bit PCM recordings.

use std::fmt;

use sonar_tbd::scenario::MultichannelBuffer;

/// Bytes per sample.
pub const SAMPLE_BYTES: usize = 2;

#[derive(Debug, PartialEq, Eq)]
pub enum PcmError {
    NoChannels,
    /// The file ends inside a frame; `offset` is where that frame starts.
    Truncated {
        offset: usize,
        frame_bytes: usize,
        len: usize,
    },
}

impl fmt::Display for PcmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PcmError::NoChannels => write!(f, "channel count must be positive"),
            PcmError::Truncated {
                offset,
                frame_bytes,
                len,
            } => write!(
                f,
                "truncated frame at byte offset {offset}: file has {len} bytes, not a multiple of the {frame_bytes}-byte frame"
            ),
        }
    }
}

impl std::error::Error for PcmError {}

/// Splits interleaved samples into channels scaled to `[-1, 1)`.
pub fn deinterleave(bytes: &[u8], channels: usize) -> Result<Vec<Vec<f64>>, PcmError> {
    if channels == 0 {
        return Err(PcmError::NoChannels);
    }
    let frame_bytes = channels * SAMPLE_BYTES;
    if !bytes.len().is_multiple_of(frame_bytes) {
        return Err(PcmError::Truncated {
            offset: bytes.len() / frame_bytes * frame_bytes,
            frame_bytes,
            len: bytes.len(),
        });
    }
    let frames = bytes.len() / frame_bytes;
    let mut out = vec![Vec::with_capacity(frames); channels];
    for frame in bytes.chunks_exact(frame_bytes) {
        for (ch, sample) in out.iter_mut().zip(frame.chunks_exact(SAMPLE_BYTES)) {
            ch.push(f64::from(i16::from_le_bytes([sample[0], sample[1]])) / 32768.0);
        }
    }
    Ok(out)
}

/// Cuts channels into consecutive emissions of `emission_len` samples.
///
/// Each emission keeps its first `keep` samples (the processed range
/// window). A trailing partial emission is dropped.
pub fn segment(
    channels: &[Vec<f64>],
    emission_len: usize,
    keep: usize,
    period: f64,
) -> Vec<MultichannelBuffer> {
    let total = channels.first().map_or(0, Vec::len);
    if emission_len == 0 || channels.is_empty() {
        return Vec::new();
    }
    let keep = keep.min(emission_len);
    (0..total / emission_len)
        .map(|n| MultichannelBuffer {
            channels: channels
                .iter()
                .map(|c| c[n * emission_len..n * emission_len + keep].to_vec())
                .collect(),
            timestamp: n as f64 * period,
        })
        .collect()
}

/// Encodes channels as interleaved PCM, clamping to the 16-bit range.
#[cfg(test)]
fn interleave(channels: &[Vec<f64>]) -> Vec<u8> {
    let len = channels.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(len * channels.len() * SAMPLE_BYTES);
    for s in 0..len {
        for c in channels {
            let v = (c[s] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}
