use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vl_intent::scenario::{
    read_measurements_csv, realisation, simulate, synthesize_measurements, write_measurements_csv,
    GeneratorKind, ScenarioConfig,
};

fn straight_line() -> ScenarioConfig {
    ScenarioConfig {
        sigma_d: 0.0,
        start: Some(vec![-300.0, 100.0, 50.0]),
        waypoints: Some(vec![vec![400.0, -200.0, 250.0]]),
        ..ScenarioConfig::default()
    }
}

#[test]
fn noiseless_single_leg_follows_the_chord() {
    let cfg = straight_line();
    let traj = simulate(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let a = [-300.0, 100.0, 50.0];
    let b = [400.0, -200.0, 250.0];
    let dir: Vec<f64> = (0..3).map(|d| b[d] - a[d]).collect();
    let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    for p in &traj.positions {
        let rel: Vec<f64> = (0..3).map(|d| p[d] - a[d]).collect();
        let along = (0..3).map(|d| rel[d] * dir[d]).sum::<f64>() / len;
        let perp = (0..3)
            .map(|d| (rel[d] - along * dir[d] / len).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(perp < 1e-6, "off the chord by {perp}");
    }
    assert!(traj.truth.arrival_time.is_some());
}

#[test]
fn velocity_increments_have_diffusion_variance() {
    let cfg = ScenarioConfig {
        steering_rate: 0.0,
        max_duration: 10_000.0,
        hold_time: 0.0,
        ..ScenarioConfig::default()
    };
    let traj = simulate(&cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    for d in 0..3 {
        let inc: Vec<f64> = traj
            .velocities
            .windows(2)
            .map(|w| w[1][d] - w[0][d])
            .collect();
        let n = inc.len() as f64;
        let var = inc.iter().map(|x| x * x).sum::<f64>() / n;
        let want = cfg.sigma_d * cfg.sigma_d * cfg.period;
        let se = want * (2.0 / n).sqrt();
        assert!((var - want).abs() < 3.0 * se, "axis {d}: {var} vs {want}");
    }
}

#[test]
fn measurement_noise_has_the_configured_spread() {
    let cfg = ScenarioConfig {
        max_duration: 4000.0,
        steering_rate: 0.0,
        ..ScenarioConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let traj = simulate(&cfg, &mut rng).unwrap();
    let meas = synthesize_measurements(&traj, &cfg, &mut rng).unwrap();
    let resid: Vec<f64> = meas
        .iter()
        .zip(&traj.positions)
        .flat_map(|(m, p)| m.y.iter().zip(p).map(|(y, x)| y - x).collect::<Vec<_>>())
        .collect();
    let n = resid.len() as f64;
    let sd = (resid.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    let se = cfg.measurement_sigma / (2.0 * n).sqrt();
    assert!((sd - cfg.measurement_sigma).abs() < 3.0 * se, "{sd}");
}

#[test]
fn zero_measurement_noise_returns_truth() {
    let cfg = ScenarioConfig {
        measurement_sigma: 0.0,
        ..ScenarioConfig::default()
    };
    let (traj, meas) = realisation(&cfg, 5, 0).unwrap();
    for (m, p) in meas.iter().zip(&traj.positions) {
        assert_eq!(&m.y, p);
    }
}

#[test]
fn realisations_are_reproducible() {
    let cfg = ScenarioConfig {
        generator: GeneratorKind::JumpDiffusionTarget,
        jitter: 0.3,
        ..ScenarioConfig::default()
    };
    let a = realisation(&cfg, 17, 4).unwrap();
    let b = realisation(&cfg, 17, 4).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_ne!(a.1, realisation(&cfg, 17, 5).unwrap().1);
}

#[test]
fn jump_target_records_velocity_jumps() {
    let cfg = ScenarioConfig {
        generator: GeneratorKind::JumpDiffusionTarget,
        ..ScenarioConfig::default()
    };
    let (traj, _) = realisation(&cfg, 1, 0).unwrap();
    let jumps = &traj.truth.velocity_jump_times;
    assert!(!jumps.is_empty());
    assert!(jumps.windows(2).all(|w| w[0] < w[1]));
    assert!(jumps.iter().all(|&t| t > 0.0 && t <= traj.truth.end_time));
}

#[test]
fn measurement_csv_round_trip() {
    let (_, meas) = realisation(&ScenarioConfig::default(), 9, 0).unwrap();
    let mut buf = Vec::new();
    write_measurements_csv(&meas, &mut buf).unwrap();
    let back = read_measurements_csv(buf.as_slice()).unwrap();
    assert_eq!(back, meas);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn waypoints_and_start_lie_in_bounds(seed in any::<u64>(), dims in 1usize..=3) {
        let all = [[-1000.0, 1000.0], [-500.0, 800.0], [0.0, 500.0]];
        let cfg = ScenarioConfig { dims, bounds: all[..dims].to_vec(), max_duration: 30.0, ..ScenarioConfig::default() };
        let traj = simulate(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let inside = |p: &Vec<f64>| p.iter().zip(&cfg.bounds).all(|(x, [lo, hi])| lo <= x && x <= hi);
        prop_assert!(inside(&traj.truth.start));
        prop_assert!((3..=5).contains(&traj.truth.waypoints.len()));
        prop_assert!(traj.truth.waypoints.iter().all(inside));
    }

    #[test]
    fn jittered_times_stay_ordered(seed in any::<u64>(), jitter in 0.0..0.49f64, period in 0.1..3.0f64) {
        let cfg = ScenarioConfig { jitter, period, max_duration: 60.0, ..ScenarioConfig::default() };
        let traj = simulate(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
        for (k, t) in traj.times.iter().enumerate().skip(1) {
            prop_assert!((t - k as f64 * period).abs() <= jitter * period + 1e-9);
        }
    }

    #[test]
    fn switch_times_are_increasing(seed in any::<u64>()) {
        let traj = simulate(&ScenarioConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(traj.truth.switch_times.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(traj.active.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(traj.truth.switch_times.len() < traj.truth.waypoints.len());
    }
}
