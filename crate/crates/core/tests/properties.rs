//! Property tests of the pipeline invariants, one block per module.

use std::collections::BTreeSet;

use nalgebra::{Matrix4, Vector4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use sonar_tbd::beamform::{delay_and_sum, delay_and_sum_complex, matched_filter, CompressedBuffer};
use sonar_tbd::detect::{cfar_binary_map, CfarConfig, PolarMeasurement};
use sonar_tbd::eval::{
    evaluate, run_sweep, EvalConfig, RunMetrics, SweepParameter, SweepSpec, Truth,
};
use sonar_tbd::pipeline::PipelineConfig;
use sonar_tbd::scenario::{
    rayleigh_clutter_matrix, steering_delays, ArrayGeometry, MultichannelBuffer, Scenario, Waveform,
};
use sonar_tbd::track::{
    auction_assign, convert_measurement, predict, update, KalmanState, MeasurementNoise,
    TrackLogRow, TrackStatus, TrackerConfig, TrackerState,
};

fn floater() -> ArrayGeometry {
    ArrayGeometry::floater()
}

fn short_waveform() -> Waveform {
    Waveform {
        start_hz: 10_000.0,
        bandwidth_hz: 10_000.0,
        duration_s: 0.001,
        sample_rate_hz: 50_000.0,
    }
}

fn random_buffer(rng: &mut ChaCha8Rng, channels: usize, len: usize) -> MultichannelBuffer {
    let ch = (0..channels)
        .map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    MultichannelBuffer::new(ch, 0.0).unwrap()
}

fn random_compressed(rng: &mut ChaCha8Rng, channels: usize, len: usize) -> CompressedBuffer {
    CompressedBuffer {
        channels: (0..channels)
            .map(|_| {
                (0..len)
                    .map(|_| {
                        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                    })
                    .collect()
            })
            .collect(),
        timestamp: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steering_delays_flip_sign_with_the_opposite_bearing(az in -7.0f64..7.0) {
        let a = steering_delays(&floater(), az, 1500.0);
        let b = steering_delays(&floater(), az + std::f64::consts::PI, 1500.0);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x + y).abs() < 1e-15);
        }
    }

    #[test]
    fn delay_and_sum_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = (random_compressed(&mut rng, 4, 96), random_compressed(&mut rng, 4, 96));
        let mix = CompressedBuffer {
            channels: x.channels.iter().zip(&y.channels)
                .map(|(p, q)| p.iter().zip(q).map(|(u, v)| u * a + v * b).collect())
                .collect(),
            timestamp: 0.0,
        };
        let beams = sonar_tbd::beamform::uniform_beams(12);
        let dx = delay_and_sum_complex(&x, &floater(), &beams, 1500.0, 50_000.0).unwrap();
        let dy = delay_and_sum_complex(&y, &floater(), &beams, 1500.0, 50_000.0).unwrap();
        let dm = delay_and_sum_complex(&mix, &floater(), &beams, 1500.0, 50_000.0).unwrap();
        for ((rx, ry), rm) in dx.iter().zip(&dy).zip(&dm) {
            for ((p, q), m) in rx.iter().zip(ry).zip(rm) {
                prop_assert!((p * a + q * b - m).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn beamforming_finite_input_gives_finite_output(seed in any::<u64>(), scale in 1e-6f64..1e6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut buf = random_buffer(&mut rng, 4, 300);
        buf.channels.iter_mut().flatten().for_each(|v| *v *= scale);
        let mf = matched_filter(&buf, &short_waveform()).unwrap();
        let adm = delay_and_sum(&mf, &floater(), &sonar_tbd::beamform::uniform_beams(36), 1500.0, 50_000.0).unwrap();
        prop_assert!(adm.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn beamforming_commutes_with_channel_permutation(seed in any::<u64>(), perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let buf = random_buffer(&mut rng, 4, 300);
        let beams = sonar_tbd::beamform::uniform_beams(24);
        let wf = short_waveform();
        let base = delay_and_sum(&matched_filter(&buf, &wf).unwrap(), &floater(), &beams, 1500.0, 50_000.0).unwrap();
        let perm_mf = matched_filter(&buf.permuted(&perm), &wf).unwrap();
        let permuted = delay_and_sum(&perm_mf, &floater().permuted(&perm), &beams, 1500.0, 50_000.0).unwrap();
        for (p, q) in base.values().iter().zip(permuted.values()) {
            prop_assert!((p - q).abs() <= 1e-5 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn cfar_map_is_scale_invariant(seed in any::<u64>(), k in 1e-3f32..1e3, p_fa in 1e-3f64..0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rayleigh_clutter_matrix(24, 200, 1.3, 50_000.0, 1500.0, &mut rng).unwrap();
        let cfg = CfarConfig { p_fa, ..CfarConfig::default() };
        prop_assert_eq!(cfar_binary_map(&m, &cfg).unwrap(), cfar_binary_map(&m.scaled(k), &cfg).unwrap());
    }

    #[test]
    fn covariance_stays_positive_definite(
        steps in prop::collection::vec((0.01f64..5.0, 1.0f64..300.0, -3.2f64..3.2), 1..40),
        sigma_zeta in 0.0f64..2.0,
    ) {
        let noise = MeasurementNoise { sigma_r: 0.3, sigma_theta: 3f64.to_radians() };
        let mut st = KalmanState::new(Vector4::new(0.0, 100.0, 0.0, 0.0), Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 25.0, 25.0))).unwrap();
        for (dt, r, th) in steps {
            st = predict(&st, dt, sigma_zeta).unwrap();
            prop_assert!(st.covariance.cholesky().is_some());
            let m = PolarMeasurement { range: r, azimuth: th, emission: 0, time: 0.0, area: 1 };
            st = update(&st, &convert_measurement(&m, &noise)).unwrap();
            prop_assert!(st.covariance.cholesky().is_some());
            prop_assert!((st.covariance - st.covariance.transpose()).abs().max() <= 1e-9 * st.covariance.abs().max());
        }
    }

    #[test]
    fn auction_matches_enumeration(
        costs in (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop::collection::vec(prop::option::weighted(0.7, 0.0f64..20.0), c), r)
        })
    ) {
        let got = auction_assign(&costs);
        prop_assert_eq!(got.iter().map(|a| a.row).collect::<BTreeSet<_>>().len(), got.len());
        prop_assert_eq!(got.iter().map(|a| a.col).collect::<BTreeSet<_>>().len(), got.len());
        let total: f64 = got.iter().map(|a| a.cost).sum();
        let (card, best) = enumerate(&costs);
        prop_assert_eq!(got.len(), card);
        prop_assert!((total - best).abs() <= 1e-6 * best.abs().max(1.0));
    }

    #[test]
    fn identical_measurement_streams_give_identical_tracks(seed in any::<u64>()) {
        let stream = measurement_stream(seed, 30);
        let run = || {
            let mut t = TrackerState::new(TrackerConfig::default()).unwrap();
            stream.iter().enumerate()
                .flat_map(|(n, ms)| t.step(ms, n, n as f64).unwrap())
                .collect::<Vec<TrackLogRow>>()
        };
        prop_assert_eq!(run(), run());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn synthesis_is_deterministic_per_seed(seed in any::<u64>(), n in 0usize..60) {
        let scn = Scenario::single_target(3.0, seed);
        let a = scn.synthesize_emission(n, 0.7, &mut scn.emission_rng(n)).unwrap();
        let b = scn.synthesize_emission(n, 0.7, &mut scn.emission_rng(n)).unwrap();
        prop_assert_eq!(a, b);
    }
}

fn enumerate(costs: &[Vec<Option<f64>>]) -> (usize, f64) {
    fn go(
        costs: &[Vec<Option<f64>>],
        row: usize,
        used: &mut [bool],
        acc: (usize, f64),
        best: &mut (usize, f64),
    ) {
        if row == costs.len() {
            if acc.0 > best.0 || (acc.0 == best.0 && acc.1 < best.1) {
                *best = acc;
            }
            return;
        }
        go(costs, row + 1, used, acc, best);
        for (col, c) in costs[row].iter().enumerate() {
            if let (Some(c), false) = (c, used[col]) {
                used[col] = true;
                go(costs, row + 1, used, (acc.0 + 1, acc.1 + c), best);
                used[col] = false;
            }
        }
    }
    let mut best = (0, 0.0);
    go(
        costs,
        0,
        &mut vec![false; costs[0].len()],
        (0, 0.0),
        &mut best,
    );
    best
}

/// A target near (0, 100) m plus uniform clutter, per emission.
fn measurement_stream(seed: u64, emissions: usize) -> Vec<Vec<PolarMeasurement>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..emissions)
        .map(|n| {
            let t = n as f64;
            let (x, y) = (t, 100.0 - 3.0 * t);
            let mut ms = vec![PolarMeasurement {
                range: x.hypot(y) + rng.random_range(-0.3..0.3),
                azimuth: y.atan2(x) + rng.random_range(-0.02..0.02),
                emission: n,
                time: t,
                area: 3,
            }];
            for _ in 0..rng.random_range(0..6) {
                ms.push(PolarMeasurement {
                    range: rng.random_range(5.0..120.0),
                    azimuth: rng.random_range(-3.1..3.1),
                    emission: n,
                    time: t,
                    area: 1,
                });
            }
            ms
        })
        .collect()
}

fn on_truth_row(truth: &Truth, id: u64, n: usize) -> TrackLogRow {
    let s = truth.state(0, n).unwrap();
    TrackLogRow {
        emission: n,
        time: n as f64,
        track_id: id,
        status: TrackStatus::Confirmed,
        x: s.position[0] + 0.5,
        y: s.position[1] - 0.5,
        vx: s.velocity[0],
        vy: s.velocity[1],
        p_trace: 1.0,
        assigned_blob: Some(0),
    }
}

/// Metrics with the wall-clock field cleared.
fn timeless(mut m: RunMetrics) -> String {
    m.runtime_per_emission = 0.0;
    format!("{m:?}")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deleting_rows_never_raises_continuity(
        covered in prop::collection::btree_set(0usize..60, 0..60),
        deleted in prop::collection::btree_set(0usize..60, 0..60),
    ) {
        let truth = Truth::from_scenario(&Scenario::single_target(3.0, 0)).unwrap();
        let cfg = EvalConfig::default();
        let full: Vec<TrackLogRow> = covered.iter().map(|&n| on_truth_row(&truth, 1, n)).collect();
        let thinned: Vec<TrackLogRow> = full.iter().filter(|r| !deleted.contains(&r.emission)).cloned().collect();
        let before = evaluate(&full, &truth, &cfg).continuity[0];
        let after = evaluate(&thinned, &truth, &cfg).continuity[0];
        prop_assert!(after <= before);
    }

    #[test]
    fn metrics_recompute_bit_identically(seed in any::<u64>()) {
        let truth = Truth::from_scenario(&Scenario::single_target(3.0, 0)).unwrap();
        let mut t = TrackerState::new(TrackerConfig::default()).unwrap();
        let log: Vec<TrackLogRow> = measurement_stream(seed, 60).iter().enumerate()
            .flat_map(|(n, ms)| t.step(ms, n, n as f64).unwrap())
            .collect();
        let cfg = EvalConfig::default();
        prop_assert_eq!(timeless(evaluate(&log, &truth, &cfg)), timeless(evaluate(&log, &truth, &cfg)));
    }
}

#[test]
fn sweeps_are_deterministic_given_the_seed_list() {
    let mut base = PipelineConfig::tuned_single_target(15.0, 0);
    base.scenario.num_emissions = 6;
    base.scenario.targets[0].death = 5;
    base.scenario.beams = 72;
    let spec = SweepSpec {
        parameter: SweepParameter::FalseAlarmProbability,
        values: vec![1e-3, 1e-5],
        seeds: vec![4, 1],
    };
    let strip = |r: sonar_tbd::eval::SweepResult| {
        r.runs
            .into_iter()
            .map(|run| (run.value, run.seed, run.result.map(timeless)))
            .collect::<Vec<_>>()
    };
    let a = strip(run_sweep(&spec, &base).unwrap());
    let b = strip(run_sweep(&spec, &base).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.iter().map(|r| r.1).collect::<Vec<_>>(), vec![4, 1, 4, 1]);
}
