//! 2D CA-CFAR detection, blob extraction and blob merging.
//!
//! Clutter envelopes are modelled as i.i.d. Rayleigh. For a cell under test
//! with reference ring `Omega` the Rayleigh scale is estimated by maximum
//! likelihood, `alpha^2 = sum I^2 / (2 |Omega|)`, and the cell is declared a
//! detection when
//!
//! ```text
//! I(u, v)^2 > (P_fa^(-1/|Omega|) - 1) * sum_{Omega} I^2
//! ```
//!
//! which holds the false-alarm probability at `P_fa` independently of the
//! clutter level. The reference ring is clipped at the matrix borders and
//! `|Omega|` shrinks accordingly. Neither the ring nor blob connectivity wraps
//! around the azimuth axis; the merge step joins blobs split by the 0/360 seam.

use std::collections::HashMap;
use std::collections::VecDeque;

use crate::angle::{angle_diff, wrap_to_pi};
use crate::beamform::AngleDistanceMatrix;
use crate::error::{Error, Result};

/// CFAR window and blob size limits.
///
/// Window sizes are half-widths in cells along `[beam, range]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CfarConfig {
    pub p_fa: f64,
    pub guard: [usize; 2],
    pub train: [usize; 2],
    pub min_area: usize,
    pub max_area: usize,
}

impl Default for CfarConfig {
    fn default() -> Self {
        CfarConfig {
            p_fa: 1e-3,
            guard: [1, 1],
            train: [4, 4],
            min_area: 1,
            max_area: 500,
        }
    }
}

impl CfarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_fa > 0.0 && self.p_fa < 1.0) {
            return Err(Error::invalid(format!(
                "P_fa = {} is outside (0, 1)",
                self.p_fa
            )));
        }
        for axis in 0..2 {
            if self.train[axis] <= self.guard[axis] {
                return Err(Error::invalid(
                    "training half-width must exceed the guard half-width on both axes",
                ));
            }
        }
        if self.min_area > self.max_area {
            return Err(Error::invalid("min blob area exceeds max blob area"));
        }
        Ok(())
    }

    /// Number of reference cells for an interior cell.
    pub fn reference_cells(&self) -> usize {
        let full = (2 * self.train[0] + 1) * (2 * self.train[1] + 1);
        let guard = (2 * self.guard[0] + 1) * (2 * self.guard[1] + 1);
        full - guard
    }
}

/// Maximum-likelihood Rayleigh scale of the reference cells.
pub fn rayleigh_ml_alpha(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("empty reference set"));
    }
    if samples.iter().any(|&s| !(s >= 0.0)) {
        return Err(Error::invalid("reference samples must be non-negative"));
    }
    let power: f64 = samples.iter().map(|s| s * s).sum();
    Ok((power / (2.0 * samples.len() as f64)).sqrt())
}

/// Multiplier on the reference power sum that yields the squared threshold.
pub fn threshold_factor(p_fa: f64, cells: usize) -> Result<f64> {
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::invalid(format!("P_fa = {p_fa} is outside (0, 1)")));
    }
    if cells == 0 {
        return Err(Error::invalid("empty reference set"));
    }
    Ok(p_fa.powf(-1.0 / cells as f64) - 1.0)
}

/// CFAR threshold `T_c` for the given reference cells.
pub fn cfar_threshold(samples: &[f64], p_fa: f64) -> Result<f64> {
    let beta = threshold_factor(p_fa, samples.len())?;
    let power: f64 = samples.iter().map(|s| s * s).sum();
    Ok((beta * power).sqrt())
}

/// Detection map with the same shape as its source matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMap {
    beams: usize,
    len: usize,
    cells: Vec<bool>,
}

impl BinaryMap {
    pub fn new(beams: usize, len: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != beams * len {
            return Err(Error::invalid("binary map size does not match its shape"));
        }
        Ok(BinaryMap { beams, len, cells })
    }

    pub fn zeros(beams: usize, len: usize) -> Self {
        BinaryMap {
            beams,
            len,
            cells: vec![false; beams * len],
        }
    }

    pub fn num_beams(&self) -> usize {
        self.beams
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.cells[u * self.len + v]
    }

    pub fn set(&mut self, u: usize, v: usize, on: bool) {
        self.cells[u * self.len + v] = on;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// `(u, v)` of every set cell in row-major order.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(i, _)| (i / self.len, i % self.len))
    }
}

fn check_window(matrix: &AngleDistanceMatrix, cfg: &CfarConfig) -> Result<()> {
    cfg.validate()?;
    if matrix.len() <= 2 * cfg.train[1] + 1 {
        return Err(Error::invalid(format!(
            "matrix has {} range samples, the training window needs more than {}",
            matrix.len(),
            2 * cfg.train[1] + 1
        )));
    }
    Ok(())
}

/// Clipped inclusive window `[c - h, c + h]` inside `[0, n)`.
#[inline]
fn span(c: usize, h: usize, n: usize) -> (usize, usize) {
    (c.saturating_sub(h), (c + h).min(n - 1))
}

/// Threshold factors for every possible clipped reference count.
fn factor_table(cfg: &CfarConfig) -> Vec<f64> {
    let max = (2 * cfg.train[0] + 1) * (2 * cfg.train[1] + 1);
    std::iter::once(f64::INFINITY)
        .chain((1..=max).map(|n| cfg.p_fa.powf(-1.0 / n as f64) - 1.0))
        .collect()
}

/// CFAR detection map using a summed-area table of `I^2`.
///
/// Cost is independent of the window size.
pub fn cfar_binary_map(matrix: &AngleDistanceMatrix, cfg: &CfarConfig) -> Result<BinaryMap> {
    check_window(matrix, cfg)?;
    let (nu, nv) = (matrix.num_beams(), matrix.len());
    let stride = nv + 1;
    let mut table = vec![0f64; (nu + 1) * stride];
    for u in 0..nu {
        let row = matrix.row(u);
        let mut acc = 0f64;
        for v in 0..nv {
            let x = row[v] as f64;
            acc += x * x;
            table[(u + 1) * stride + v + 1] = table[u * stride + v + 1] + acc;
        }
    }
    // Inclusive rectangle sum.
    let rect = |u0: usize, u1: usize, v0: usize, v1: usize| {
        table[(u1 + 1) * stride + v1 + 1]
            - table[u0 * stride + v1 + 1]
            - table[(u1 + 1) * stride + v0]
            + table[u0 * stride + v0]
    };
    let factors = factor_table(cfg);
    let mut map = BinaryMap::zeros(nu, nv);
    for u in 0..nu {
        let (tu0, tu1) = span(u, cfg.train[0], nu);
        let (gu0, gu1) = span(u, cfg.guard[0], nu);
        for v in 0..nv {
            let (tv0, tv1) = span(v, cfg.train[1], nv);
            let (gv0, gv1) = span(v, cfg.guard[1], nv);
            let count = (tu1 - tu0 + 1) * (tv1 - tv0 + 1) - (gu1 - gu0 + 1) * (gv1 - gv0 + 1);
            if count == 0 {
                continue;
            }
            let reference = (rect(tu0, tu1, tv0, tv1) - rect(gu0, gu1, gv0, gv1)).max(0.0);
            let x = matrix.get(u, v) as f64;
            if x * x > factors[count] * reference {
                map.set(u, v, true);
            }
        }
    }
    Ok(map)
}

/// CFAR detection map summing every reference ring explicitly, O(|Omega|)
/// per cell. Same decision rule as [`cfar_binary_map`].
pub fn cfar_binary_map_direct(matrix: &AngleDistanceMatrix, cfg: &CfarConfig) -> Result<BinaryMap> {
    check_window(matrix, cfg)?;
    let (nu, nv) = (matrix.num_beams(), matrix.len());
    let factors = factor_table(cfg);
    let mut map = BinaryMap::zeros(nu, nv);
    for u in 0..nu {
        let (tu0, tu1) = span(u, cfg.train[0], nu);
        for v in 0..nv {
            let (tv0, tv1) = span(v, cfg.train[1], nv);
            let mut reference = 0f64;
            let mut count = 0usize;
            for uu in tu0..=tu1 {
                let in_guard_u = uu.abs_diff(u) <= cfg.guard[0];
                let row = matrix.row(uu);
                for (vv, &x) in row.iter().enumerate().take(tv1 + 1).skip(tv0) {
                    if in_guard_u && vv.abs_diff(v) <= cfg.guard[1] {
                        continue;
                    }
                    let x = x as f64;
                    reference += x * x;
                    count += 1;
                }
            }
            if count == 0 {
                continue;
            }
            let x = matrix.get(u, v) as f64;
            if x * x > factors[count] * reference {
                map.set(u, v, true);
            }
        }
    }
    Ok(map)
}

/// A maximal 4-connected set of detected cells, `(beam, sample)` pairs in
/// discovery order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub cells: Vec<(usize, usize)>,
}

impl Component {
    pub fn area(&self) -> usize {
        self.cells.len()
    }
}

/// 4-connected components of the map whose area lies in
/// `[min_area, max_area]`, ordered by their first cell in row-major order.
pub fn label_blobs(map: &BinaryMap, cfg: &CfarConfig) -> Vec<Component> {
    let (nu, nv) = (map.num_beams(), map.len());
    let mut seen = vec![false; nu * nv];
    let mut queue = VecDeque::new();
    let mut out = Vec::new();
    for start in 0..nu * nv {
        if !map.cells[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut cells = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (u, v) = (i / nv, i % nv);
            cells.push((u, v));
            let mut visit = |j: usize| {
                if map.cells[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if u > 0 {
                visit(i - nv);
            }
            if u + 1 < nu {
                visit(i + nv);
            }
            if v > 0 {
                visit(i - 1);
            }
            if v + 1 < nv {
                visit(i + 1);
            }
        }
        if cells.len() >= cfg.min_area && cells.len() <= cfg.max_area {
            out.push(Component { cells });
        }
    }
    out
}

/// A measured blob.
#[derive(Clone, Debug, PartialEq)]
pub struct Blob {
    pub cells: Vec<(usize, usize)>,
    /// Amplitude-weighted centroid along the range-sample axis.
    pub centroid: f64,
    /// Two-way range of the centroid (m).
    pub range: f64,
    /// Azimuth of the strongest beam at the centroid column (rad).
    pub azimuth: f64,
}

impl Blob {
    pub fn area(&self) -> usize {
        self.cells.len()
    }
}

/// Range and azimuth of a component.
///
/// The centroid is amplitude-weighted. The azimuth is the beam with the
/// largest amplitude at column `round(centroid)` among the component's own
/// cells in that column; if the component has no cell there (a non-convex
/// shape) its overall strongest cell decides.
pub fn blob_measurement(matrix: &AngleDistanceMatrix, component: &Component) -> Blob {
    let mut weight = 0f64;
    let mut moment = 0f64;
    for &(u, v) in &component.cells {
        let a = matrix.get(u, v) as f64;
        weight += a;
        moment += a * v as f64;
    }
    let centroid = if weight > 0.0 {
        moment / weight
    } else {
        component.cells.iter().map(|c| c.1 as f64).sum::<f64>() / component.cells.len() as f64
    };
    let column = centroid.round() as usize;
    let strongest = |cells: &mut dyn Iterator<Item = &(usize, usize)>| {
        cells
            .map(|&(u, v)| (u, matrix.get(u, v)))
            .fold(None, |best: Option<(usize, f32)>, (u, a)| match best {
                Some((bu, ba)) if ba > a || (ba == a && bu < u) => Some((bu, ba)),
                _ => Some((u, a)),
            })
            .map(|(u, _)| u)
    };
    let beam = strongest(&mut component.cells.iter().filter(|c| c.1 == column))
        .or_else(|| strongest(&mut component.cells.iter()))
        .unwrap_or(0);
    Blob {
        cells: component.cells.clone(),
        centroid,
        range: matrix.range_of(centroid),
        azimuth: wrap_to_pi(matrix.beams()[beam]),
    }
}

/// Polar summary of a (possibly merged) detection.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarMeasurement {
    /// Range (m).
    pub range: f64,
    /// Azimuth in `(-pi, pi]`.
    pub azimuth: f64,
    pub emission: usize,
    /// Emission time (s).
    pub time: f64,
    /// Total detected cells behind this measurement.
    pub area: usize,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // Smaller index becomes the root so group order is stable.
        if ra < rb {
            self.parent[rb] = ra;
        } else if rb < ra {
            self.parent[ra] = rb;
        }
    }
}

/// Connected components of `|dr| < psi_r && |dtheta| < psi_theta` (angle
/// difference wrapped) over `(range, azimuth)` points. Each component lists its
/// members in increasing order; components are ordered by first member.
fn related_groups(points: &[(f64, f64)], psi_r: f64, psi_theta: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut sets = DisjointSet::new(n);

    // Bucket by (range / psi_r, azimuth / psi_theta); related pairs can only
    // sit in neighbouring buckets.
    let az_buckets = ((std::f64::consts::TAU / psi_theta).floor() as i64).max(1);
    let key = |&(r, a): &(f64, f64)| {
        let a = a.rem_euclid(std::f64::consts::TAU);
        (
            (r / psi_r).floor() as i64,
            ((a / psi_theta).floor() as i64).min(az_buckets - 1),
        )
    };
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(i);
    }
    let az_offsets: Vec<i64> = if az_buckets < 3 {
        (0..az_buckets).collect()
    } else {
        vec![az_buckets - 1, 0, 1]
    };
    for (i, p) in points.iter().enumerate() {
        let (kr, ka) = key(p);
        for dr in -1..=1 {
            for &da in &az_offsets {
                let Some(others) = buckets.get(&(kr + dr, (ka + da).rem_euclid(az_buckets))) else {
                    continue;
                };
                for &j in others {
                    if j <= i {
                        continue;
                    }
                    let o = &points[j];
                    if (p.0 - o.0).abs() < psi_r && angle_diff(p.1, o.1).abs() < psi_theta {
                        sets.union(i, j);
                    }
                }
            }
        }
    }

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let root = sets.find(i);
        let g = *slot.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
}

/// Unweighted mean of a group; azimuths are averaged as offsets from the
/// first member so groups straddling the +-180 deg seam stay together.
fn group_mean(ms: &[PolarMeasurement], members: &[usize]) -> PolarMeasurement {
    let first = &ms[members[0]];
    if members.len() == 1 {
        return first.clone();
    }
    let k = members.len() as f64;
    let range = members.iter().map(|&i| ms[i].range).sum::<f64>() / k;
    let offset = members
        .iter()
        .map(|&i| angle_diff(ms[i].azimuth, first.azimuth))
        .sum::<f64>()
        / k;
    PolarMeasurement {
        range,
        azimuth: wrap_to_pi(first.azimuth + offset),
        emission: first.emission,
        time: first.time,
        area: members.iter().map(|&i| ms[i].area).sum(),
    }
}

/// Merges measurements connected by the relation
/// `|dr| < psi_r && |dtheta| < psi_theta` (angle difference wrapped).
///
/// Groups start as the connected components of the relation and each is
/// replaced by the arithmetic mean of its members' ranges and azimuths. When
/// two group means are themselves related, their groups are fused and the
/// mean is recomputed over all original members, until no two outputs are
/// related. The result is therefore a fixed point: merging it again changes
/// nothing. Output follows the order of each group's first member.
pub fn merge_blobs(
    measurements: &[PolarMeasurement],
    psi_r: f64,
    psi_theta: f64,
) -> Result<Vec<PolarMeasurement>> {
    if !(psi_r > 0.0 && psi_theta > 0.0) {
        return Err(Error::invalid("merging thresholds must be positive"));
    }
    let points: Vec<(f64, f64)> = measurements.iter().map(|m| (m.range, m.azimuth)).collect();
    let mut groups = related_groups(&points, psi_r, psi_theta);
    loop {
        let means: Vec<PolarMeasurement> =
            groups.iter().map(|g| group_mean(measurements, g)).collect();
        let points: Vec<(f64, f64)> = means.iter().map(|m| (m.range, m.azimuth)).collect();
        let fused = related_groups(&points, psi_r, psi_theta);
        if fused.len() == groups.len() {
            return Ok(means);
        }
        groups = fused
            .iter()
            .map(|f| {
                let mut members: Vec<usize> =
                    f.iter().flat_map(|&g| groups[g].iter().copied()).collect();
                members.sort_unstable();
                members
            })
            .collect();
        groups.sort_by_key(|g| g[0]);
    }
}

/// Merging thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergeConfig {
    /// Range threshold (m).
    pub psi_r: f64,
    /// Azimuth threshold (rad).
    pub psi_theta: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig {
            psi_r: 10.0,
            psi_theta: 6f64.to_radians(),
        }
    }
}

/// Everything the detector produced for one emission.
#[derive(Clone, Debug)]
pub struct Detections {
    pub map: BinaryMap,
    pub blobs: Vec<Blob>,
    pub measurements: Vec<PolarMeasurement>,
}

/// CFAR, labelling, blob measurement and merging for one emission.
pub fn detect(
    matrix: &AngleDistanceMatrix,
    emission: usize,
    cfar: &CfarConfig,
    merge: &MergeConfig,
) -> Result<Detections> {
    let map = cfar_binary_map(matrix, cfar)?;
    let blobs: Vec<Blob> = label_blobs(&map, cfar)
        .iter()
        .map(|c| blob_measurement(matrix, c))
        .collect();
    let raw: Vec<PolarMeasurement> = blobs
        .iter()
        .map(|b| PolarMeasurement {
            range: b.range,
            azimuth: b.azimuth,
            emission,
            time: matrix.timestamp(),
            area: b.area(),
        })
        .collect();
    let measurements = merge_blobs(&raw, merge.psi_r, merge.psi_theta)?;
    Ok(Detections {
        map,
        blobs,
        measurements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamform::uniform_beams;
    use crate::scenario::rayleigh_clutter_matrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(beams: usize, len: usize, values: Vec<f32>) -> AngleDistanceMatrix {
        AngleDistanceMatrix::new(uniform_beams(beams), len, values, 50_000.0, 1500.0, 0.0).unwrap()
    }

    fn pm(range: f64, az_deg: f64) -> PolarMeasurement {
        PolarMeasurement {
            range,
            azimuth: wrap_to_pi(az_deg.to_radians()),
            emission: 0,
            time: 0.0,
            area: 1,
        }
    }

    #[test]
    fn ml_alpha_examples() {
        assert_eq!(rayleigh_ml_alpha(&[0.0; 5]).unwrap(), 0.0);
        let a = rayleigh_ml_alpha(&[1.0; 4]).unwrap();
        assert!((a - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(rayleigh_ml_alpha(&[]).is_err());
        assert!(rayleigh_ml_alpha(&[-1.0]).is_err());
    }

    #[test]
    fn ml_alpha_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = rayleigh_clutter_matrix(1, 100_000, 2.0, 1.0, 1.0, &mut rng).unwrap();
        let samples: Vec<f64> = m.values().iter().map(|&x| x as f64).collect();
        let a = rayleigh_ml_alpha(&samples).unwrap();
        assert!((a / 2.0 - 1.0).abs() < 0.01, "alpha {a}");
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(cfar_threshold(&[0.0; 16], 0.2).unwrap(), 0.0);
        let a = 1.7;
        let t = cfar_threshold(&[a; 16], 0.2).unwrap();
        // Hand evaluation: 0.2^(-1/16) = 1.1058230..., 16 * 0.1058230 = 1.6931683...
        let expected = a * 1.693_168_3_f64.sqrt();
        assert!((t - expected).abs() < 1e-6, "{t} vs {expected}");
        assert!(cfar_threshold(&[1.0], 0.0).is_err());
        assert!(cfar_threshold(&[1.0], 1.0).is_err());
    }

    #[test]
    fn constant_matrix_yields_no_detections() {
        // |Omega| = 56 with guard 2 / train 4; (0.2^(-1/56) - 1) * 56 = 1.6328 > 1.
        let cfg = CfarConfig {
            p_fa: 0.2,
            guard: [2, 2],
            train: [4, 4],
            ..CfarConfig::default()
        };
        assert_eq!(cfg.reference_cells(), 56);
        let factor = threshold_factor(0.2, 56).unwrap() * 56.0;
        assert!((factor - 1.6328).abs() < 1e-4);
        let m = matrix(20, 40, vec![3.0; 800]);
        assert_eq!(cfar_binary_map(&m, &cfg).unwrap().count(), 0);
        assert_eq!(cfar_binary_map_direct(&m, &cfg).unwrap().count(), 0);
    }

    #[test]
    fn impulse_detects_exactly_one_cell() {
        let cfg = CfarConfig::default();
        let mut values = vec![0f32; 15 * 50];
        values[7 * 50 + 20] = 4.0;
        let m = matrix(15, 50, values);
        for map in [
            cfar_binary_map(&m, &cfg).unwrap(),
            cfar_binary_map_direct(&m, &cfg).unwrap(),
        ] {
            assert_eq!(map.ones().collect::<Vec<_>>(), vec![(7, 20)]);
        }
    }

    #[test]
    fn window_larger_than_matrix_is_rejected() {
        let m = matrix(4, 9, vec![1.0; 36]);
        assert!(cfar_binary_map(&m, &CfarConfig::default()).is_err());
        let bad = CfarConfig {
            guard: [4, 1],
            ..CfarConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn summed_area_matches_direct_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = rayleigh_clutter_matrix(24, 300, 1.3, 50_000.0, 1500.0, &mut rng).unwrap();
        for p_fa in [0.2, 0.01] {
            let cfg = CfarConfig {
                p_fa,
                ..CfarConfig::default()
            };
            let fast = cfar_binary_map(&m, &cfg).unwrap();
            assert_eq!(fast, cfar_binary_map(&m, &cfg).unwrap());
            assert_eq!(fast, cfar_binary_map_direct(&m, &cfg).unwrap());
        }
    }

    #[test]
    fn scaling_the_matrix_leaves_the_map_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = rayleigh_clutter_matrix(30, 400, 1.0, 50_000.0, 1500.0, &mut rng).unwrap();
        let cfg = CfarConfig {
            p_fa: 0.05,
            ..CfarConfig::default()
        };
        let base = cfar_binary_map(&m, &cfg).unwrap();
        for k in [4.0, 0.125, 3.7] {
            assert_eq!(
                base,
                cfar_binary_map(&m.scaled(k), &cfg).unwrap(),
                "k = {k}"
            );
        }
    }

    #[test]
    fn diagonal_cells_are_separate_blobs() {
        let mut map = BinaryMap::zeros(5, 5);
        map.set(1, 1, true);
        map.set(2, 2, true);
        let blobs = label_blobs(&map, &CfarConfig::default());
        assert_eq!(blobs.len(), 2);
        assert!(label_blobs(&BinaryMap::zeros(5, 5), &CfarConfig::default()).is_empty());
    }

    #[test]
    fn area_limits_drop_components() {
        let mut map = BinaryMap::zeros(4, 10);
        for v in 0..4 {
            map.set(0, v, true);
        }
        map.set(3, 8, true);
        let cfg = CfarConfig {
            min_area: 2,
            max_area: 3,
            ..CfarConfig::default()
        };
        assert!(label_blobs(&map, &cfg).is_empty());
        let cfg = CfarConfig {
            min_area: 2,
            max_area: 4,
            ..CfarConfig::default()
        };
        assert_eq!(label_blobs(&map, &cfg).len(), 1);
    }

    #[test]
    fn blob_measurement_examples() {
        let mut values = vec![0f32; 3 * 2000];
        values[1000] = 2.0;
        let m = matrix(3, 2000, values.clone());
        let single = blob_measurement(
            &m,
            &Component {
                cells: vec![(0, 1000)],
            },
        );
        assert!((single.range - 15.0).abs() < 1e-12);

        // One column across three beams, middle strongest.
        values[1000] = 1.0;
        values[2000 + 1000] = 3.0;
        values[2 * 2000 + 1000] = 2.0;
        let m = matrix(3, 2000, values);
        let column = blob_measurement(
            &m,
            &Component {
                cells: vec![(0, 1000), (1, 1000), (2, 1000)],
            },
        );
        assert_eq!(column.azimuth, m.beams()[1]);

        // Equal amplitudes at v and v + 2 -> centroid v + 1.
        let mut values = vec![0f32; 100];
        values[40] = 5.0;
        values[42] = 5.0;
        let m = matrix(1, 100, values);
        let sym = blob_measurement(
            &m,
            &Component {
                cells: vec![(0, 40), (0, 42)],
            },
        );
        assert!((sym.centroid - 41.0).abs() < 1e-12);
    }

    #[test]
    fn merge_examples() {
        let merged =
            merge_blobs(&[pm(100.0, 10.0), pm(105.0, 12.0)], 10.0, 6f64.to_radians()).unwrap();
        assert_eq!(merged.len(), 1);
        assert!((merged[0].range - 102.5).abs() < 1e-12);
        assert!((merged[0].azimuth.to_degrees() - 11.0).abs() < 1e-9);
        assert_eq!(merged[0].area, 2);

        let kept =
            merge_blobs(&[pm(100.0, 10.0), pm(150.0, 10.0)], 10.0, 6f64.to_radians()).unwrap();
        assert_eq!(kept.len(), 2);

        let chain = merge_blobs(
            &[pm(100.0, 0.0), pm(108.0, 0.0), pm(116.0, 0.0)],
            10.0,
            6f64.to_radians(),
        )
        .unwrap();
        assert_eq!(chain.len(), 1);
        assert!((chain[0].range - 108.0).abs() < 1e-12);

        let seam = merge_blobs(&[pm(50.0, 358.0), pm(51.0, 2.0)], 10.0, 6f64.to_radians()).unwrap();
        assert_eq!(seam.len(), 1);
        assert!(seam[0].azimuth.abs() < 1e-9);

        assert!(merge_blobs(&[], 0.0, 1.0).is_err());
    }

    /// Union-find over all pairs, no bucketing.
    fn brute_force_groups(ms: &[PolarMeasurement], psi_r: f64, psi_t: f64) -> Vec<Vec<usize>> {
        let n = ms.len();
        let mut label: Vec<usize> = (0..n).collect();
        loop {
            let mut changed = false;
            for i in 0..n {
                for j in 0..n {
                    if (ms[i].range - ms[j].range).abs() < psi_r
                        && angle_diff(ms[i].azimuth, ms[j].azimuth).abs() < psi_t
                        && label[j] > label[i]
                    {
                        label[j] = label[i];
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            match groups.iter_mut().find(|g| label[g[0]] == label[i]) {
                Some(g) => g.push(i),
                None => groups.push(vec![i]),
            }
        }
        // Fuse groups connected through their means until no means relate.
        loop {
            let means: Vec<(f64, f64)> = groups
                .iter()
                .map(|g| {
                    let k = g.len() as f64;
                    let r = g.iter().map(|&i| ms[i].range).sum::<f64>() / k;
                    let a0 = ms[g[0]].azimuth;
                    let off = g
                        .iter()
                        .map(|&i| angle_diff(ms[i].azimuth, a0))
                        .sum::<f64>()
                        / k;
                    (r, a0 + off)
                })
                .collect();
            let m = groups.len();
            let mut lab: Vec<usize> = (0..m).collect();
            loop {
                let mut changed = false;
                for a in 0..m {
                    for b in 0..m {
                        if (means[a].0 - means[b].0).abs() < psi_r
                            && angle_diff(means[a].1, means[b].1).abs() < psi_t
                            && lab[b] > lab[a]
                        {
                            lab[b] = lab[a];
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if (0..m).all(|a| lab[a] == a) {
                break;
            }
            let mut fused: Vec<Vec<usize>> = Vec::new();
            for a in 0..m {
                if lab[a] == a {
                    let mut members: Vec<usize> = (0..m)
                        .filter(|&b| lab[b] == a)
                        .flat_map(|b| groups[b].clone())
                        .collect();
                    members.sort_unstable();
                    fused.push(members);
                }
            }
            fused.sort_by_key(|g| g[0]);
            groups = fused;
        }
        groups
    }

    proptest! {
        #[test]
        fn merging_matches_all_pairs_closure(
            pts in prop::collection::vec((0.0f64..200.0, -180.0f64..180.0), 0..40)
        ) {
            let ms: Vec<_> = pts.iter().map(|&(r, a)| pm(r, a)).collect();
            let psi_t = 6f64.to_radians();
            let merged = merge_blobs(&ms, 10.0, psi_t).unwrap();
            let groups = brute_force_groups(&ms, 10.0, psi_t);
            prop_assert_eq!(merged.len(), groups.len());
            for (m, g) in merged.iter().zip(&groups) {
                let mean = g.iter().map(|&i| ms[i].range).sum::<f64>() / g.len() as f64;
                prop_assert!((m.range - mean).abs() < 1e-9);
                let lo = g.iter().map(|&i| ms[i].range).fold(f64::MAX, f64::min);
                let hi = g.iter().map(|&i| ms[i].range).fold(f64::MIN, f64::max);
                prop_assert!(m.range >= lo - 1e-9 && m.range <= hi + 1e-9);
                let first = ms[g[0]].azimuth;
                let offsets: Vec<f64> = g.iter().map(|&i| angle_diff(ms[i].azimuth, first)).collect();
                let off = angle_diff(m.azimuth, first);
                let (amin, amax) = offsets.iter().fold((f64::MAX, f64::MIN), |a, &o| (a.0.min(o), a.1.max(o)));
                prop_assert!(off >= amin - 1e-9 && off <= amax + 1e-9);
            }
        }

        #[test]
        fn merging_is_idempotent(
            pts in prop::collection::vec((0.0f64..120.0, -180.0f64..180.0), 0..60)
        ) {
            let ms: Vec<_> = pts.iter().map(|&(r, a)| pm(r, a)).collect();
            let psi_t = 6f64.to_radians();
            let once = merge_blobs(&ms, 10.0, psi_t).unwrap();
            let twice = merge_blobs(&once, 10.0, psi_t).unwrap();
            prop_assert_eq!(once, twice);
        }
    }

    #[test]
    fn random_maps_match_flood_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = CfarConfig {
            min_area: 1,
            max_area: usize::MAX,
            ..CfarConfig::default()
        };
        for _ in 0..50 {
            let p = rng.random_range(0.1..0.7);
            let cells: Vec<bool> = (0..50 * 50).map(|_| rng.random_bool(p)).collect();
            let map = BinaryMap::new(50, 50, cells).unwrap();
            let mut got: Vec<Vec<(usize, usize)>> = label_blobs(&map, &cfg)
                .into_iter()
                .map(|mut c| {
                    c.cells.sort_unstable();
                    c.cells
                })
                .collect();
            got.sort();
            let total: usize = got.iter().map(Vec::len).sum();
            assert_eq!(total, map.count());
            // Neighbouring ones must share a component.
            let mut owner = HashMap::new();
            for (k, comp) in got.iter().enumerate() {
                for &c in comp {
                    owner.insert(c, k);
                }
            }
            for (u, v) in map.ones() {
                if u + 1 < 50 && map.get(u + 1, v) {
                    assert_eq!(owner[&(u, v)], owner[&(u + 1, v)]);
                }
                if v + 1 < 50 && map.get(u, v + 1) {
                    assert_eq!(owner[&(u, v)], owner[&(u, v + 1)]);
                }
            }
        }
    }
}
