use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use sonar_tbd::beamform::{AngleDistanceMatrix, Beamformer};
use sonar_tbd::detect::{cfar_binary_map, cfar_binary_map_direct, detect, label_blobs};
use sonar_tbd::eval::{evaluate, run_sweep, SweepParameter, SweepSpec, Truth};
use sonar_tbd::io;
use sonar_tbd::pipeline::{PipelineConfig, Processor, RunOutput, Simulator};

use crate::error::{CliError, CliResult};
use crate::manifest::{self, LoadedConfig, RunManifest};
use crate::pcm;
use crate::plot;

pub const MATRIX_DIR: &str = "matrices";
pub const MATRIX_EXT: &str = "adm";

/// Options shared by every subcommand.
#[derive(Clone, Debug)]
pub struct Common {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

impl Common {
    fn prepare(&self) -> CliResult<(LoadedConfig, u64)> {
        let mut cfg = manifest::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.pipeline.scenario.seed = seed;
        }
        fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        let seed = cfg.pipeline.scenario.seed;
        Ok((cfg, seed))
    }
}

pub fn matrix_path(dir: &Path, n: usize) -> PathBuf {
    dir.join(format!("emission_{n:05}.{MATRIX_EXT}"))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    io::write_atomic(path, |w| w.write_all(text.as_bytes()))?;
    Ok(())
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for r in rows {
        wtr.serialize(r)
            .map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| CliError::io(path, std::io::Error::other(e.to_string())))?;
    io::write_atomic(path, |w| w.write_all(&bytes))?;
    Ok(())
}

/// True target positions of every emission, one path per target.
fn truth_paths(truth: &Truth, emissions: usize) -> Vec<Vec<(f64, f64)>> {
    (0..truth.num_targets())
        .map(|k| {
            (0..emissions)
                .filter_map(|n| truth.state(k, n))
                .map(|s| (s.position[0], s.position[1]))
                .collect()
        })
        .collect()
}

#[derive(Serialize)]
struct TruthRow {
    emission: usize,
    target: usize,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
}

/// Simulates every emission of the configured scenario to matrix files.
pub fn simulate(common: &Common) -> CliResult<usize> {
    let (cfg, seed) = common.prepare()?;
    let scenario = &cfg.pipeline.scenario;
    let sim = Simulator::new(scenario)?;
    let dir = common.out.join(MATRIX_DIR);
    create_dir(&dir)?;
    for n in 0..sim.num_emissions() {
        let m = sim.matrix(n)?;
        io::write_matrix(&matrix_path(&dir, n), &m)?;
        log::debug!("emission {n} written");
    }
    let truth = Truth::from_scenario(scenario)?;
    let truth = &truth;
    let rows: Vec<TruthRow> = (0..scenario.num_emissions)
        .flat_map(|n| {
            (0..truth.num_targets()).filter_map(move |k| {
                truth.state(k, n).map(|s| TruthRow {
                    emission: n,
                    target: k,
                    x: s.position[0],
                    y: s.position[1],
                    vx: s.velocity[0],
                    vy: s.velocity[1],
                })
            })
        })
        .collect();
    write_rows(&common.out.join("truth.csv"), &rows)?;
    RunManifest::new(
        "simulate",
        &cfg,
        &common.out,
        seed,
        json!({ "emissions": sim.num_emissions(), "noise_std": sim.noise_std() }),
    )
    .write(&common.out)?;
    log::info!(
        "wrote {} matrices to {}",
        sim.num_emissions(),
        dir.display()
    );
    Ok(sim.num_emissions())
}

/// Matrix files of a directory in name order.
pub fn list_matrices(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == MATRIX_EXT))
        .collect();
    files.sort();
    Ok(files)
}

fn check_dimensions(m: &AngleDistanceMatrix, cfg: &PipelineConfig, path: &Path) -> CliResult<()> {
    let scn = &cfg.scenario;
    if m.num_beams() != scn.beams {
        return Err(CliError::Validation(format!(
            "{}: matrix has {} beams but the config asks for U = {}",
            path.display(),
            m.num_beams(),
            scn.beams
        )));
    }
    if m.sample_rate() != scn.waveform.sample_rate_hz {
        return Err(CliError::Validation(format!(
            "{}: matrix sample rate {} Hz differs from the configured {} Hz",
            path.display(),
            m.sample_rate(),
            scn.waveform.sample_rate_hz
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricsRow {
    target: usize,
    continuity: f64,
    false_tracks: usize,
    duplicate_tracks: usize,
    pos_rmse: f64,
    vel_rmse: f64,
    conv_emission: Option<usize>,
    runtime_s: f64,
}

pub struct TrackArgs {
    /// Directory of matrix files; simulate live when absent.
    pub input: Option<PathBuf>,
    /// Score against the configured scenario's ground truth.
    pub score: bool,
    /// Also export every emission's binary detection map.
    pub maps: bool,
}

/// Runs detection and tracking, writing logs, metrics and a plot.
pub fn track(common: &Common, args: &TrackArgs) -> CliResult<RunOutput> {
    let (cfg, seed) = common.prepare()?;
    let pc = &cfg.pipeline;
    let mut proc = Processor::new(pc.cfar, pc.merge, pc.tracker)?;
    let mut map_csv = Vec::new();
    if args.maps {
        io::write_binary_map_header(&mut map_csv).map_err(|e| CliError::io(&common.out, e))?;
    }
    let mut step = |n: usize, m: &AngleDistanceMatrix| -> CliResult<()> {
        let start = Instant::now();
        let det = detect(m, n, proc.cfar(), proc.merge())?;
        let detect_s = start.elapsed().as_secs_f64();
        if args.maps {
            io::write_binary_map_rows(&mut map_csv, n, &det.map)
                .map_err(|e| CliError::io(&common.out, e))?;
        }
        proc.track(n, m.timestamp(), &det, detect_s)?;
        Ok(())
    };
    let mut forming = 0.0;
    match &args.input {
        Some(dir) => {
            for (n, path) in list_matrices(dir)?.iter().enumerate() {
                let m = io::read_matrix(path)?;
                check_dimensions(&m, pc, path)?;
                step(n, &m)?;
            }
        }
        None => {
            let sim = Simulator::new(&pc.scenario)?;
            for n in 0..sim.num_emissions() {
                let start = Instant::now();
                let m = sim.matrix(n)?;
                forming += start.elapsed().as_secs_f64();
                step(n, &m)?;
            }
        }
    }
    let mut out = proc.finish();
    out.forming_s = forming;

    let log_path = common.out.join("track_log.csv");
    io::write_atomic(&log_path, |w| io::write_track_log(w, &out.track_log))?;
    io::write_atomic(&common.out.join("blobs.csv"), |w| {
        io::write_blob_log(w, &out.measurements)
    })?;
    if args.maps {
        io::write_atomic(&common.out.join("detections.csv"), |w| {
            w.write_all(&map_csv)
        })?;
    }
    let score = args.score || args.input.is_none();
    let mut truth_pts = Vec::new();
    if score {
        let truth = Truth::from_scenario(&pc.scenario)?;
        let mut metrics = evaluate(&out.track_log, &truth, &pc.eval);
        metrics.runtime_per_emission = out.runtime_per_emission();
        let rows: Vec<MetricsRow> = metrics
            .continuity
            .iter()
            .enumerate()
            .map(|(k, &c)| MetricsRow {
                target: k,
                continuity: c,
                false_tracks: metrics.false_tracks,
                duplicate_tracks: metrics.duplicate_tracks,
                pos_rmse: metrics.position_rmse,
                vel_rmse: metrics.velocity_rmse,
                conv_emission: metrics.convergence.get(k).copied().flatten(),
                runtime_s: metrics.runtime_per_emission,
            })
            .collect();
        write_rows(&common.out.join("metrics.csv"), &rows)?;
        log::info!(
            "continuity {:.3}, {} false tracks",
            metrics.mean_continuity(),
            metrics.false_tracks
        );
        truth_pts = truth_paths(&truth, out.emissions);
    }
    plot::track_plan(&common.out.join("tracks.svg"), &out.track_log, &truth_pts)?;
    RunManifest::new(
        "track",
        &cfg,
        &common.out,
        seed,
        json!({
            "input": args.input,
            "score": score,
            "maps": args.maps,
            "emissions": out.emissions,
        }),
    )
    .write(&common.out)?;
    Ok(out)
}

/// Beamforms a header-less PCM recording into matrix files.
pub fn ingest(common: &Common, pcm_path: &Path) -> CliResult<usize> {
    let (cfg, seed) = common.prepare()?;
    let scn = &cfg.pipeline.scenario;
    let bytes = fs::read(pcm_path).map_err(|e| CliError::io(pcm_path, e))?;
    let channels = pcm::deinterleave(&bytes, scn.array.len())
        .map_err(|e| CliError::Validation(format!("{}: {e}", pcm_path.display())))?;
    let fs_hz = scn.waveform.sample_rate_hz;
    let emission_len = (scn.emission_period * fs_hz).round() as usize;
    let keep = scn.buffer_len().min(emission_len);
    let emissions = pcm::segment(&channels, emission_len, keep, scn.emission_period);
    let frames = channels.first().map_or(0, Vec::len);
    if frames % emission_len.max(1) != 0 {
        log::warn!(
            "dropping {} trailing samples per channel that do not fill an emission",
            frames % emission_len.max(1)
        );
    }
    let dir = common.out.join(MATRIX_DIR);
    create_dir(&dir)?;
    if !emissions.is_empty() {
        let bf = Beamformer::new(
            &scn.array,
            &scn.waveform,
            scn.beam_azimuths(),
            scn.sound_speed,
            keep,
        )?;
        for (n, buf) in emissions.iter().enumerate() {
            io::write_matrix(&matrix_path(&dir, n), &bf.form(buf)?)?;
        }
    }
    RunManifest::new(
        "ingest",
        &cfg,
        &common.out,
        seed,
        json!({
            "pcm": pcm_path,
            "channels": scn.array.len(),
            "samples_per_emission": emission_len,
            "processed_samples": keep,
            "emissions": emissions.len(),
        }),
    )
    .write(&common.out)?;
    log::info!(
        "ingested {} emissions from {}",
        emissions.len(),
        pcm_path.display()
    );
    Ok(emissions.len())
}

/// Parses `NAME=v1,v2,...`.
pub fn parse_sweep(text: &str) -> CliResult<(SweepParameter, Vec<f64>)> {
    let (name, values) = text.split_once('=').ok_or_else(|| {
        CliError::Validation(format!("sweep {text:?} is not of the form NAME=v1,v2,..."))
    })?;
    let parameter: SweepParameter = name.trim().parse()?;
    let values = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| CliError::Validation(format!("sweep value {v:?} is not a number")))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    Ok((parameter, values))
}

/// Monte Carlo sweep with CSV, summary and one plot.
pub fn sweep(common: &Common, sweep: &str, seeds: u64) -> CliResult<()> {
    let (cfg, seed) = common.prepare()?;
    let (parameter, values) = parse_sweep(sweep)?;
    let spec = SweepSpec {
        parameter,
        values,
        seeds: (seed..seed.saturating_add(seeds)).collect(),
    };
    let result = run_sweep(&spec, &cfg.pipeline)?;
    io::write_atomic(&common.out.join("sweep.csv"), |w| {
        io::write_sweep_csv(w, &result)
    })?;
    let summary = io::format_sweep_summary(&result);
    write_text(&common.out.join("sweep_summary.txt"), &summary)?;
    print!("{summary}");
    match parameter {
        SweepParameter::ConfirmCount => {
            plot::metrics_vs_parameter(&common.out.join("nc_sweep.svg"), &result)?
        }
        _ => plot::continuity_vs_false_tracks(
            &common.out.join("continuity_vs_false_tracks.svg"),
            &result,
        )?,
    }
    RunManifest::new(
        "sweep",
        &cfg,
        &common.out,
        seed,
        json!({ "parameter": parameter.name(), "values": spec.values, "seeds": spec.seeds }),
    )
    .write(&common.out)?;
    Ok(())
}

#[derive(Serialize)]
struct BenchRow {
    stage: &'static str,
    seconds_per_emission: f64,
}

/// Mean per-emission wall time of each stage.
pub fn bench(common: &Common, emissions: usize) -> CliResult<()> {
    let (cfg, seed) = common.prepare()?;
    let pc = &cfg.pipeline;
    let sim = Simulator::new(&pc.scenario)?;
    let count = emissions.min(sim.num_emissions());
    let mut proc = Processor::new(pc.cfar, pc.merge, pc.tracker)?;
    let mut totals = [0f64; 5];
    let stages = [
        "beamform",
        "cfar_summed_area",
        "cfar_direct",
        "label_blobs",
        "detect_and_track",
    ];
    for n in 0..count {
        let t = Instant::now();
        let m = sim.matrix(n)?;
        totals[0] += t.elapsed().as_secs_f64();
        let t = Instant::now();
        let map = cfar_binary_map(&m, &pc.cfar)?;
        totals[1] += t.elapsed().as_secs_f64();
        let t = Instant::now();
        std::hint::black_box(cfar_binary_map_direct(&m, &pc.cfar)?);
        totals[2] += t.elapsed().as_secs_f64();
        let t = Instant::now();
        std::hint::black_box(label_blobs(&map, &pc.cfar));
        totals[3] += t.elapsed().as_secs_f64();
        let t = Instant::now();
        proc.process(n, &m)?;
        totals[4] += t.elapsed().as_secs_f64();
    }
    let rows: Vec<BenchRow> = stages
        .iter()
        .zip(totals)
        .map(|(&stage, total)| BenchRow {
            stage,
            seconds_per_emission: total / count.max(1) as f64,
        })
        .collect();
    for r in &rows {
        println!("{:>18}  {:.6} s", r.stage, r.seconds_per_emission);
    }
    write_rows(&common.out.join("bench.csv"), &rows)?;
    RunManifest::new(
        "bench",
        &cfg,
        &common.out,
        seed,
        json!({ "emissions": count }),
    )
    .write(&common.out)?;
    Ok(())
}
