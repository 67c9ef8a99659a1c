//! Scoring tracker output against ground truth and Monte Carlo sweeps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use rayon::prelude::*;

use crate::detect::{detect, CfarConfig, MergeConfig};
use crate::error::{Error, Result};
use crate::pipeline::{PipelineConfig, Processor, RunOutput, Simulator};
use crate::scenario::{Scenario, TrueState};
use crate::track::{TrackLogRow, TrackStatus};

/// Scoring parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    /// Distance within which a track update counts as on a target (m).
    pub assoc_distance: f64,
    /// Per-component velocity tolerance for convergence (m/s).
    pub convergence_tolerance: f64,
    /// Consecutive emissions the velocity must stay within tolerance.
    pub convergence_window: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            assoc_distance: 15.0,
            convergence_tolerance: 0.3,
            convergence_window: 10,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.assoc_distance > 0.0 && self.convergence_tolerance > 0.0) {
            return Err(Error::invalid("evaluation distances must be positive"));
        }
        if self.convergence_window == 0 {
            return Err(Error::invalid("convergence window must be at least 1"));
        }
        Ok(())
    }
}

/// True kinematics per target and emission.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    /// `states[k][n]`, `None` outside the target's lifetime.
    pub states: Vec<Vec<Option<TrueState>>>,
}

impl Truth {
    pub fn from_scenario(scn: &Scenario) -> Result<Self> {
        let states = (0..scn.targets.len())
            .map(|k| {
                (0..scn.num_emissions)
                    .map(|n| {
                        if scn.targets[k].is_alive(n) {
                            scn.true_state(k, n).map(Some)
                        } else {
                            Ok(None)
                        }
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(Self { states })
    }

    pub fn num_targets(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, k: usize, n: usize) -> Option<&TrueState> {
        self.states.get(k)?.get(n)?.as_ref()
    }

    /// Emissions during which target `k` is alive.
    pub fn lifetime(&self, k: usize) -> usize {
        self.states[k].iter().filter(|s| s.is_some()).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrackLabel {
    /// Follows the given target and carries its continuity.
    True(usize),
    /// Follows a target already covered by an earlier track.
    Duplicate(usize),
    False,
}

/// Label of every track that was confirmed at some point.
#[derive(Clone, Debug, PartialEq)]
pub struct Labeling {
    pub labels: BTreeMap<u64, TrackLabel>,
    /// Emissions covered by a true-labeled confirmed track, per target.
    pub coverage: Vec<BTreeSet<usize>>,
    /// Track that represents each target at each covered emission.
    pub primary: Vec<BTreeMap<usize, u64>>,
}

impl Labeling {
    pub fn false_tracks(&self) -> usize {
        self.labels
            .values()
            .filter(|l| **l == TrackLabel::False)
            .count()
    }

    pub fn duplicates(&self) -> usize {
        self.labels
            .values()
            .filter(|l| matches!(l, TrackLabel::Duplicate(_)))
            .count()
    }
}

fn rows_by_track(log: &[TrackLogRow]) -> BTreeMap<u64, Vec<&TrackLogRow>> {
    let mut by: BTreeMap<u64, Vec<&TrackLogRow>> = BTreeMap::new();
    for r in log {
        by.entry(r.track_id).or_default().push(r);
    }
    by
}

fn distance_to(row: &TrackLogRow, s: &TrueState) -> f64 {
    (row.x - s.position[0]).hypot(row.y - s.position[1])
}

/// Labels every confirmed track as following a target or as false.
///
/// A track follows target `k` when at least half of its updates lie within
/// `assoc_distance` of that target; the target with the largest such share
/// wins. Tracks following the same target are taken in order of first
/// confirmation; one whose confirmed emissions are mostly already covered by
/// earlier tracks is a duplicate.
pub fn associate_tracks_to_truth(
    log: &[TrackLogRow],
    truth: &Truth,
    assoc_distance: f64,
) -> Labeling {
    let by_track = rows_by_track(log);
    let mut candidates: Vec<(usize, u64, Option<usize>, Vec<&TrackLogRow>)> = Vec::new();
    for (&id, rows) in &by_track {
        let confirmed: Vec<&TrackLogRow> = rows
            .iter()
            .copied()
            .filter(|r| r.status == TrackStatus::Confirmed)
            .collect();
        let Some(first) = confirmed.first() else {
            continue;
        };
        let updates: Vec<&TrackLogRow> = rows
            .iter()
            .copied()
            .filter(|r| r.assigned_blob.is_some())
            .collect();
        let mut best: Option<(usize, usize)> = None;
        for k in 0..truth.num_targets() {
            let near = updates
                .iter()
                .filter(|r| {
                    truth
                        .state(k, r.emission)
                        .is_some_and(|s| distance_to(r, s) < assoc_distance)
                })
                .count();
            if 2 * near >= updates.len() && near > 0 && best.is_none_or(|(_, b)| near > b) {
                best = Some((k, near));
            }
        }
        candidates.push((first.emission, id, best.map(|b| b.0), confirmed));
    }
    candidates.sort_by_key(|c| (c.0, c.1));

    let mut labels = BTreeMap::new();
    let mut coverage = vec![BTreeSet::new(); truth.num_targets()];
    let mut primary = vec![BTreeMap::new(); truth.num_targets()];
    for (_, id, target, confirmed) in candidates {
        let Some(k) = target else {
            labels.insert(id, TrackLabel::False);
            continue;
        };
        let emissions: BTreeSet<usize> = confirmed
            .iter()
            .map(|r| r.emission)
            .filter(|&n| truth.state(k, n).is_some())
            .collect();
        let already = emissions
            .iter()
            .filter(|n| coverage[k].contains(*n))
            .count();
        let duplicate = !emissions.is_empty() && 2 * already > emissions.len();
        labels.insert(
            id,
            if duplicate {
                TrackLabel::Duplicate(k)
            } else {
                TrackLabel::True(k)
            },
        );
        if !duplicate {
            for n in emissions {
                if coverage[k].insert(n) {
                    primary[k].insert(n, id);
                }
            }
        }
    }
    Labeling {
        labels,
        coverage,
        primary,
    }
}

/// Share of each target's lifetime covered by a true-labeled confirmed track.
pub fn track_continuity(labeling: &Labeling, truth: &Truth) -> Vec<f64> {
    (0..truth.num_targets())
        .map(|k| {
            let life = truth.lifetime(k);
            if life == 0 {
                return 0.0;
            }
            labeling.coverage[k].len() as f64 / life as f64
        })
        .collect()
}

/// Scores of one Monte Carlo run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub continuity: Vec<f64>,
    pub false_tracks: usize,
    pub duplicate_tracks: usize,
    /// Over every emission a target is covered; NaN when never covered.
    pub position_rmse: f64,
    pub velocity_rmse: f64,
    /// First emission of a run of in-tolerance velocity estimates, per target.
    pub convergence: Vec<Option<usize>>,
    pub runtime_per_emission: f64,
}

impl RunMetrics {
    pub fn mean_continuity(&self) -> f64 {
        if self.continuity.is_empty() {
            return 0.0;
        }
        self.continuity.iter().sum::<f64>() / self.continuity.len() as f64
    }

    /// Latest convergence over all targets; `None` if any never converges.
    pub fn convergence_emission(&self) -> Option<usize> {
        self.convergence
            .iter()
            .copied()
            .try_fold(0, |acc, c| c.map(|c| acc.max(c)))
    }
}

/// Scores a track log against ground truth.
pub fn evaluate(log: &[TrackLogRow], truth: &Truth, cfg: &EvalConfig) -> RunMetrics {
    let labeling = associate_tracks_to_truth(log, truth, cfg.assoc_distance);
    let continuity = track_continuity(&labeling, truth);
    let rows: BTreeMap<(u64, usize), &TrackLogRow> =
        log.iter().map(|r| ((r.track_id, r.emission), r)).collect();

    let (mut pos_sq, mut vel_sq, mut count) = (0.0, 0.0, 0usize);
    let mut convergence = Vec::with_capacity(truth.num_targets());
    for k in 0..truth.num_targets() {
        let mut streak_start = None;
        let mut streak = 0;
        let mut converged = None;
        for (n, s) in truth.states[k].iter().enumerate() {
            let Some(s) = s else { continue };
            let row = labeling.primary[k]
                .get(&n)
                .and_then(|id| rows.get(&(*id, n)));
            let within = match row {
                Some(r) => {
                    let (dvx, dvy) = (r.vx - s.velocity[0], r.vy - s.velocity[1]);
                    pos_sq += distance_to(r, s).powi(2);
                    vel_sq += dvx * dvx + dvy * dvy;
                    count += 1;
                    dvx.abs() <= cfg.convergence_tolerance && dvy.abs() <= cfg.convergence_tolerance
                }
                None => false,
            };
            if within {
                if streak == 0 {
                    streak_start = Some(n);
                }
                streak += 1;
                if streak >= cfg.convergence_window && converged.is_none() {
                    converged = streak_start;
                }
            } else {
                streak = 0;
            }
        }
        convergence.push(converged);
    }
    let rmse = |sq: f64| {
        if count == 0 {
            f64::NAN
        } else {
            (sq / count as f64).sqrt()
        }
    };
    RunMetrics {
        continuity,
        false_tracks: labeling.false_tracks(),
        duplicate_tracks: labeling.duplicates(),
        position_rmse: rmse(pos_sq),
        velocity_rmse: rmse(vel_sq),
        convergence,
        runtime_per_emission: 0.0,
    }
}

/// Swept parameter of a Monte Carlo study.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParameter {
    FalseAlarmProbability,
    ConfirmCount,
    Scr,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::FalseAlarmProbability => "P_fa",
            SweepParameter::ConfirmCount => "N_c",
            SweepParameter::Scr => "scr_db",
        }
    }

    /// Whether changing it requires new angle-distance matrices.
    fn changes_matrices(self) -> bool {
        self == SweepParameter::Scr
    }

    fn apply(self, cfg: &mut PipelineConfig, value: f64) -> Result<()> {
        match self {
            SweepParameter::FalseAlarmProbability => cfg.cfar.p_fa = value,
            SweepParameter::ConfirmCount => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::Validation(format!(
                        "N_c must be a positive integer, got {value}"
                    )));
                }
                cfg.tracker.confirm_count = value as usize;
            }
            SweepParameter::Scr => cfg.scenario.scr_db = value,
        }
        Ok(())
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "P_fa" | "p_fa" => Ok(SweepParameter::FalseAlarmProbability),
            "N_c" | "n_c" => Ok(SweepParameter::ConfirmCount),
            "scr_db" | "SCR" | "scr" => Ok(SweepParameter::Scr),
            other => Err(Error::Validation(format!(
                "unknown sweep parameter {other:?} (expected P_fa, N_c or scr_db)"
            ))),
        }
    }
}

/// Grid and seeds of a Monte Carlo study.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Validation("sweep grid is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Validation("sweep needs at least one seed".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("sweep values must be finite".into()));
        }
        Ok(())
    }
}

/// Outcome of one (grid point, seed) run.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRun {
    pub value: f64,
    pub seed: u64,
    pub result: std::result::Result<RunMetrics, String>,
}

/// Aggregate over the seeds of one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub runs: usize,
    pub failed: usize,
    pub mean_continuity: f64,
    pub se_continuity: f64,
    pub mean_false_tracks: f64,
    pub se_false_tracks: f64,
    pub mean_position_rmse: f64,
    pub mean_velocity_rmse: f64,
    /// Share of runs whose velocity converged.
    pub converged_share: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub runs: Vec<SweepRun>,
    pub points: Vec<SweepPoint>,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn nan_mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.filter(|x| x.is_finite()).collect();
    mean_se(&v).0
}

fn aggregate(value: f64, runs: &[&SweepRun]) -> SweepPoint {
    let ok: Vec<&RunMetrics> = runs.iter().filter_map(|r| r.result.as_ref().ok()).collect();
    let cont: Vec<f64> = ok.iter().map(|m| m.mean_continuity()).collect();
    let fals: Vec<f64> = ok.iter().map(|m| m.false_tracks as f64).collect();
    let (mean_continuity, se_continuity) = mean_se(&cont);
    let (mean_false_tracks, se_false_tracks) = mean_se(&fals);
    let converged = ok
        .iter()
        .filter(|m| m.convergence_emission().is_some())
        .count();
    SweepPoint {
        value,
        runs: runs.len(),
        failed: runs.len() - ok.len(),
        mean_continuity,
        se_continuity,
        mean_false_tracks,
        se_false_tracks,
        mean_position_rmse: nan_mean(ok.iter().map(|m| m.position_rmse)),
        mean_velocity_rmse: nan_mean(ok.iter().map(|m| m.velocity_rmse)),
        converged_share: if ok.is_empty() {
            f64::NAN
        } else {
            converged as f64 / ok.len() as f64
        },
    }
}

/// Runs several processing configurations on one simulated sequence.
///
/// Matrices are formed once per emission from `scenario` and fed to one
/// processor per variant, so every variant sees exactly the data a standalone
/// run would. Variants with identical detection settings also share the
/// detection pass; the shared wall time is split evenly among them. Only the
/// `cfar`, `merge`, `tracker` and `eval` parts of each variant are used.
pub fn run_variants(
    scenario: &Scenario,
    variants: &[PipelineConfig],
) -> Vec<std::result::Result<RunMetrics, String>> {
    if variants.is_empty() {
        return Vec::new();
    }
    let fail = |msg: String| variants.iter().map(|_| Err(msg.clone())).collect();
    let truth = match Truth::from_scenario(scenario) {
        Ok(t) => t,
        Err(e) => return fail(e.to_string()),
    };
    let sim = match Simulator::new(scenario) {
        Ok(s) => s,
        Err(e) => return fail(e.to_string()),
    };
    let mut procs: Vec<std::result::Result<(Processor, EvalConfig), String>> = variants
        .iter()
        .map(|c| {
            c.validate().map_err(|e| e.to_string())?;
            Processor::new(c.cfar, c.merge, c.tracker)
                .map(|p| (p, c.eval))
                .map_err(|e| e.to_string())
        })
        .collect();
    // Variants with identical detection settings share one detection pass.
    let mut groups: Vec<(CfarConfig, MergeConfig, Vec<usize>)> = Vec::new();
    for (i, slot) in procs.iter().enumerate() {
        if let Ok((p, _)) = slot {
            match groups
                .iter_mut()
                .find(|(c, m, _)| c == p.cfar() && m == p.merge())
            {
                Some((_, _, members)) => members.push(i),
                None => groups.push((*p.cfar(), *p.merge(), vec![i])),
            }
        }
    }
    let mut forming = 0.0;
    for n in 0..sim.num_emissions() {
        let start = Instant::now();
        let matrix = match sim.matrix(n) {
            Ok(m) => m,
            Err(e) => return fail(e.to_string()),
        };
        forming += start.elapsed().as_secs_f64();
        for (cfar, merge, members) in &groups {
            let start = Instant::now();
            let det = detect(&matrix, n, cfar, merge);
            let detect_s = start.elapsed().as_secs_f64() / members.len() as f64;
            for &i in members {
                let slot = &mut procs[i];
                let outcome = match (&det, slot.as_mut()) {
                    (Ok(d), Ok((p, _))) => p
                        .track(n, matrix.timestamp(), d, detect_s)
                        .map_err(|e| e.to_string()),
                    (Err(e), Ok(_)) => Err(e.to_string()),
                    (_, Err(_)) => continue,
                };
                if let Err(e) = outcome {
                    *slot = Err(e);
                }
            }
        }
    }
    let share = forming / variants.len() as f64;
    procs
        .into_iter()
        .map(|slot| {
            slot.map(|(p, eval)| {
                let mut out: RunOutput = p.finish();
                out.forming_s = share;
                let mut m = evaluate(&out.track_log, &truth, &eval);
                m.runtime_per_emission = out.runtime_per_emission();
                m
            })
        })
        .collect()
}

/// Runs every listed grid point of one seed on a shared matrix sequence.
fn run_shared(
    base: &PipelineConfig,
    parameter: SweepParameter,
    values: &[f64],
    seed: u64,
) -> Vec<SweepRun> {
    let mut scenario_cfg = base.clone();
    scenario_cfg.scenario.seed = seed;
    if parameter.changes_matrices() {
        if let Err(e) = parameter.apply(&mut scenario_cfg, values[0]) {
            let msg = e.to_string();
            return values
                .iter()
                .map(|&value| SweepRun {
                    value,
                    seed,
                    result: Err(msg.clone()),
                })
                .collect();
        }
    }
    let prepared: Vec<std::result::Result<PipelineConfig, String>> = values
        .iter()
        .map(|&v| {
            let mut c = scenario_cfg.clone();
            parameter
                .apply(&mut c, v)
                .map(|_| c)
                .map_err(|e| e.to_string())
        })
        .collect();
    let valid: Vec<PipelineConfig> = prepared
        .iter()
        .filter_map(|c| c.as_ref().ok().cloned())
        .collect();
    let mut results = run_variants(&scenario_cfg.scenario, &valid).into_iter();
    values
        .iter()
        .zip(prepared)
        .map(|(&value, prep)| SweepRun {
            value,
            seed,
            result: match prep {
                Ok(_) => results
                    .next()
                    .unwrap_or_else(|| Err("missing result".into())),
                Err(e) => Err(e),
            },
        })
        .collect()
}

/// Monte Carlo sweep over one parameter.
///
/// Runs are independent and execute in parallel; the result is ordered by
/// (grid point, seed) regardless of scheduling. Pipeline failures are
/// recorded per run instead of aborting the sweep.
pub fn run_sweep(spec: &SweepSpec, base: &PipelineConfig) -> Result<SweepResult> {
    spec.validate()?;
    let jobs: Vec<(Vec<f64>, u64)> = if spec.parameter.changes_matrices() {
        spec.values
            .iter()
            .flat_map(|&v| spec.seeds.iter().map(move |&s| (vec![v], s)))
            .collect()
    } else {
        spec.seeds
            .iter()
            .map(|&s| (spec.values.clone(), s))
            .collect()
    };
    let mut runs: Vec<SweepRun> = jobs
        .par_iter()
        .map(|(values, seed)| run_shared(base, spec.parameter, values, *seed))
        .flatten()
        .collect();
    let index = |v: f64| {
        spec.values
            .iter()
            .position(|&x| x == v)
            .unwrap_or(usize::MAX)
    };
    let seed_index = |s: u64| {
        spec.seeds
            .iter()
            .position(|&x| x == s)
            .unwrap_or(usize::MAX)
    };
    runs.sort_by_key(|r| (index(r.value), seed_index(r.seed)));
    let points = spec
        .values
        .iter()
        .map(|&v| {
            let group: Vec<&SweepRun> = runs.iter().filter(|r| r.value == v).collect();
            aggregate(v, &group)
        })
        .collect();
    for r in &runs {
        if let Err(e) = &r.result {
            log::warn!("{}={} seed {}: {e}", spec.parameter, r.value, r.seed);
        }
    }
    Ok(SweepResult {
        parameter: spec.parameter,
        runs,
        points,
    })
}
