//! Ground-truth generation, measurement synthesis and the method benchmark.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::ObservationModel;
use crate::error::{Error, Result};
use crate::filter::{vague_prior, FilterConfig, ParticleSet, Proposal, StepDiagnostics};
use crate::jumps::{JumpEvent, JumpPrior, JumpSequence};
use crate::models::{
    Destination, DestinationSet, ModelKind, ModelParams, MotionModel, StateLayout,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Noisy steering toward a sequence of waypoints.
    WaypointCv,
    /// Waypoint steering plus Gaussian velocity jumps at Gamma renewal times.
    JumpDiffusionTarget,
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::WaypointCv => "waypoint-cv",
            GeneratorKind::JumpDiffusionTarget => "jump-diffusion-target",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub generator: GeneratorKind,
    pub dims: usize,
    pub waypoints_min: usize,
    pub waypoints_max: usize,
    /// `[lower, upper]` per axis for the start point and waypoints.
    pub bounds: Vec<[f64; 2]>,
    /// Fixed waypoints, replacing the random draw.
    pub waypoints: Option<Vec<Vec<f64>>>,
    /// Fixed start point, replacing the random draw.
    pub start: Option<Vec<f64>>,
    /// Velocity diffusion (m/s^{3/2}).
    pub sigma_d: f64,
    pub measurement_sigma: f64,
    pub period: f64,
    /// Measurement times are offset by up to `±jitter·period`.
    pub jitter: f64,
    /// Velocity relaxation rate toward the commanded velocity (1/s).
    pub steering_rate: f64,
    /// Commanded speed per metre of distance to the waypoint (1/s).
    pub steering_gain: f64,
    pub speed_cap: Option<f64>,
    pub capture_radius: f64,
    /// Time spent at the final waypoint before the track ends.
    pub hold_time: f64,
    pub max_duration: f64,
    pub substep: f64,
    pub jump_mu: f64,
    pub jump_sigma: f64,
    pub jump_alpha: f64,
    pub jump_beta: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorKind::WaypointCv,
            dims: 3,
            waypoints_min: 3,
            waypoints_max: 5,
            bounds: vec![[-1000.0, 1000.0], [-1000.0, 1000.0], [0.0, 500.0]],
            waypoints: None,
            start: None,
            sigma_d: 14.0,
            measurement_sigma: 15.0,
            period: 1.0,
            jitter: 0.0,
            steering_rate: 1.0,
            steering_gain: 0.2,
            speed_cap: None,
            capture_radius: 20.0,
            hold_time: 10.0,
            max_duration: 300.0,
            substep: 0.02,
            jump_mu: 0.0,
            jump_sigma: 50.0,
            jump_alpha: 2.0,
            jump_beta: 5.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Slowly steered targets whose velocity takes `N(0, 50²)` kicks every
    /// few seconds, so manoeuvres dominate the path between waypoints.
    pub fn jump_target() -> Self {
        Self {
            generator: GeneratorKind::JumpDiffusionTarget,
            sigma_d: 5.0,
            steering_rate: 0.3,
            steering_gain: 0.2,
            capture_radius: 100.0,
            max_duration: 400.0,
            jump_beta: 2.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dims) {
            return Err(Error::param(format!("dims = {} not in 1..=3", self.dims)));
        }
        if self.bounds.len() != self.dims {
            return Err(Error::param(format!(
                "{} bounds for {} axes",
                self.bounds.len(),
                self.dims
            )));
        }
        if self.bounds.iter().any(|[lo, hi]| !(lo < hi)) {
            return Err(Error::param("every bound must have lower < upper"));
        }
        match &self.waypoints {
            Some(w) => {
                if w.is_empty() || w.iter().any(|p| p.len() != self.dims) {
                    return Err(Error::param(
                        "fixed waypoints must be non-empty with one coordinate per axis",
                    ));
                }
            }
            None => {
                if self.waypoints_min == 0 || self.waypoints_min > self.waypoints_max {
                    return Err(Error::param("need 1 ≤ waypoints_min ≤ waypoints_max"));
                }
            }
        }
        if matches!(&self.start, Some(s) if s.len() != self.dims) {
            return Err(Error::param(
                "start point must have one coordinate per axis",
            ));
        }
        let nonneg = [
            ("sigma_d", self.sigma_d),
            ("measurement_sigma", self.measurement_sigma),
            ("steering_rate", self.steering_rate),
            ("steering_gain", self.steering_gain),
            ("capture_radius", self.capture_radius),
            ("hold_time", self.hold_time),
            ("jump_sigma", self.jump_sigma),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(format!("{name} = {v} must be finite and ≥ 0")));
            }
        }
        let positive = [
            ("period", self.period),
            ("max_duration", self.max_duration),
            ("substep", self.substep),
            ("jump_alpha", self.jump_alpha),
            ("jump_beta", self.jump_beta),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(format!("{name} = {v} must be positive")));
            }
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::param("jitter must be in [0, 0.5)"));
        }
        if matches!(self.speed_cap, Some(c) if !(c > 0.0)) {
            return Err(Error::param("speed cap must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthMetadata {
    pub generator: GeneratorKind,
    pub start: Vec<f64>,
    pub waypoints: Vec<Vec<f64>>,
    /// Times at which the active waypoint advanced.
    pub switch_times: Vec<f64>,
    pub velocity_jump_times: Vec<f64>,
    /// When the final waypoint was captured, if it was.
    pub arrival_time: Option<f64>,
    pub end_time: f64,
}

/// True states sampled at the measurement times.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// Index into `truth.waypoints` of the waypoint active at each time.
    pub active: Vec<usize>,
    pub truth: TruthMetadata,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.truth.start.len()
    }

    pub fn active_waypoints(&self) -> Vec<Vec<f64>> {
        self.active
            .iter()
            .map(|&k| self.truth.waypoints[k].clone())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub t: f64,
    pub y: Vec<f64>,
}

fn uniform_point<R: Rng + ?Sized>(bounds: &[[f64; 2]], rng: &mut R) -> Vec<f64> {
    bounds
        .iter()
        .map(|[lo, hi]| lo + (hi - lo) * rng.random::<f64>())
        .collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Generates a ground-truth track.
pub fn simulate<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Trajectory> {
    config.validate()?;
    let dims = config.dims;
    let start = match &config.start {
        Some(s) => s.clone(),
        None => uniform_point(&config.bounds, rng),
    };
    let waypoints = match &config.waypoints {
        Some(w) => w.clone(),
        None => {
            let n = rng.random_range(config.waypoints_min..=config.waypoints_max);
            (0..n).map(|_| uniform_point(&config.bounds, rng)).collect()
        }
    };
    let jump_gap =
        Gamma::new(config.jump_alpha, config.jump_beta).map_err(|e| Error::param(e.to_string()))?;
    let jump_size =
        Normal::new(config.jump_mu, config.jump_sigma).map_err(|e| Error::param(e.to_string()))?;
    let velocity_jumps = config.generator == GeneratorKind::JumpDiffusionTarget;
    let mut next_jump = if velocity_jumps {
        jump_gap.sample(rng)
    } else {
        f64::INFINITY
    };

    let mut x = start.clone();
    let mut v = vec![0.0; dims];
    let mut t = 0.0;
    let mut k_active = 0;
    let mut done_at: Option<f64> = None;
    let mut switch_times = Vec::new();
    let mut velocity_jump_times = Vec::new();
    let mut traj = Trajectory {
        times: vec![0.0],
        positions: vec![x.clone()],
        velocities: vec![v.clone()],
        active: vec![0],
        truth: TruthMetadata {
            generator: config.generator,
            start: start.clone(),
            waypoints: waypoints.clone(),
            switch_times: Vec::new(),
            velocity_jump_times: Vec::new(),
            arrival_time: None,
            end_time: 0.0,
        },
    };

    let mut k = 0u64;
    loop {
        k += 1;
        let nominal = k as f64 * config.period;
        let offset = if config.jitter > 0.0 {
            (2.0 * rng.random::<f64>() - 1.0) * config.jitter * config.period
        } else {
            0.0
        };
        let t_next = nominal + offset;
        let n_sub = ((t_next - t) / config.substep).ceil().max(1.0) as usize;
        let h = (t_next - t) / n_sub as f64;
        let sqrt_h = h.sqrt();
        for _ in 0..n_sub {
            let w = &waypoints[k_active];
            let mut command: Vec<f64> = (0..dims)
                .map(|d| config.steering_gain * (w[d] - x[d]))
                .collect();
            if let Some(cap) = config.speed_cap {
                let speed = command.iter().map(|c| c * c).sum::<f64>().sqrt();
                if speed > cap {
                    command.iter_mut().for_each(|c| *c *= cap / speed);
                }
            }
            for d in 0..dims {
                let noise: f64 = StandardNormal.sample(rng);
                v[d] += config.steering_rate * (command[d] - v[d]) * h
                    + config.sigma_d * sqrt_h * noise;
                x[d] += v[d] * h;
            }
            t += h;
            if t >= next_jump {
                for vd in v.iter_mut() {
                    *vd += jump_size.sample(rng);
                }
                velocity_jump_times.push(t);
                next_jump += jump_gap.sample(rng);
            }
            if done_at.is_none() && distance(&x, &waypoints[k_active]) <= config.capture_radius {
                if k_active + 1 < waypoints.len() {
                    k_active += 1;
                    switch_times.push(t);
                } else {
                    done_at = Some(t);
                }
            }
        }
        t = t_next;
        traj.times.push(t);
        traj.positions.push(x.clone());
        traj.velocities.push(v.clone());
        traj.active.push(k_active);
        let finished = matches!(done_at, Some(d) if t >= d + config.hold_time);
        if finished || t >= config.max_duration {
            break;
        }
    }
    traj.truth.switch_times = switch_times;
    traj.truth.velocity_jump_times = velocity_jump_times;
    traj.truth.arrival_time = done_at;
    traj.truth.end_time = t;
    Ok(traj)
}

/// True positions plus i.i.d. Gaussian noise at the trajectory's times.
pub fn synthesize_measurements<R: Rng + ?Sized>(
    traj: &Trajectory,
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<Vec<Measurement>> {
    let sigma = config.measurement_sigma;
    if !(sigma >= 0.0) {
        return Err(Error::param("measurement sigma must be ≥ 0"));
    }
    Ok(traj
        .times
        .iter()
        .zip(&traj.positions)
        .map(|(&t, p)| Measurement {
            t,
            y: p.iter()
                .map(|x| {
                    let z: f64 = StandardNormal.sample(rng);
                    x + sigma * z
                })
                .collect(),
        })
        .collect())
}

const AXES: [&str; 3] = ["x", "y", "z"];

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let dims = traj.dims();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(AXES[..dims].iter().map(|a| a.to_string()));
    header.extend(AXES[..dims].iter().map(|a| format!("v{a}")));
    w.write_record(&header)?;
    for i in 0..traj.len() {
        let mut row = vec![traj.times[i].to_string()];
        row.extend(traj.positions[i].iter().map(|v| v.to_string()));
        row.extend(traj.velocities[i].iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_measurements_csv<W: Write>(measurements: &[Measurement], out: W) -> Result<()> {
    let dims = measurements.first().map_or(0, |m| m.y.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t"];
    header.extend(&AXES[..dims]);
    w.write_record(&header)?;
    for m in measurements {
        let mut row = vec![m.t.to_string()];
        row.extend(m.y.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `t,x[,y[,z]]` rows. Extra velocity columns (`vx`, ...) are ignored,
/// so trajectory files are accepted too. Times must strictly increase.
pub fn read_measurements_csv<R: Read>(input: R) -> Result<Vec<Measurement>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.first() != Some(&"t") {
        return Err(Error::Data {
            line: 1,
            message: "header must start with `t`".into(),
        });
    }
    let dims = names[1..].iter().take_while(|n| AXES.contains(n)).count();
    if dims == 0 || names[1..=dims] != AXES[..dims] {
        return Err(Error::Data {
            line: 1,
            message: format!(
                "expected position columns {:?} after `t`",
                &AXES[..dims.max(1)]
            ),
        });
    }
    let mut out: Vec<Measurement> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Data {
            line,
            message: e.to_string(),
        })?;
        let field = |j: usize| -> Result<f64> {
            let s = rec.get(j).ok_or_else(|| Error::Data {
                line,
                message: format!("missing column `{}`", names[j]),
            })?;
            let v: f64 = s.parse().map_err(|_| Error::Data {
                line,
                message: format!("`{s}` in column `{}` is not a number", names[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    line,
                    message: format!("non-finite value in column `{}`", names[j]),
                });
            }
            Ok(v)
        };
        let t = field(0)?;
        if let Some(prev) = out.last() {
            if !(t > prev.t) {
                return Err(Error::Data {
                    line,
                    message: format!("time {t} does not follow {}", prev.t),
                });
            }
        }
        let y = (1..=dims).map(field).collect::<Result<Vec<f64>>>()?;
        out.push(Measurement { t, y });
    }
    if out.is_empty() {
        return Err(Error::Data {
            line: 2,
            message: "no measurement rows".into(),
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "VL-D-KF")]
    BaselineKf,
    #[serde(rename = "VL-PC-RBVRPF")]
    PiecewiseConstant,
    #[serde(rename = "VL-JD-RBVRPF")]
    JumpDiffusion,
    #[serde(rename = "VL-FMT-RBVRPF")]
    FastManoeuvring,
    #[serde(rename = "VL-MultHyp-RBVRPF")]
    MultiHypothesis,
    #[serde(rename = "VL-PC(known τ)")]
    KnownSwitchTimes,
    #[serde(rename = "VL-PC(known τ and r)")]
    KnownSwitchTimesAndWaypoints,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::BaselineKf,
        Method::PiecewiseConstant,
        Method::JumpDiffusion,
        Method::FastManoeuvring,
        Method::MultiHypothesis,
        Method::KnownSwitchTimes,
        Method::KnownSwitchTimesAndWaypoints,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::BaselineKf => "VL-D-KF",
            Method::PiecewiseConstant => "VL-PC-RBVRPF",
            Method::JumpDiffusion => "VL-JD-RBVRPF",
            Method::FastManoeuvring => "VL-FMT-RBVRPF",
            Method::MultiHypothesis => "VL-MultHyp-RBVRPF",
            Method::KnownSwitchTimes => "VL-PC(known τ)",
            Method::KnownSwitchTimesAndWaypoints => "VL-PC(known τ and r)",
        }
    }

    /// Runs with a single particle: no jumps to sample.
    pub fn is_single_particle(&self) -> bool {
        matches!(
            self,
            Method::BaselineKf | Method::KnownSwitchTimes | Method::KnownSwitchTimesAndWaypoints
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts the display names and ASCII spellings such as `VL-PC-known-tau-r`.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .to_ascii_lowercase()
            .replace('τ', "tau")
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        let m = match key.as_str() {
            "vldkf" | "vld" => Method::BaselineKf,
            "vlpcrbvrpf" | "vlpc" => Method::PiecewiseConstant,
            "vljdrbvrpf" | "vljd" => Method::JumpDiffusion,
            "vlfmtrbvrpf" | "vlfmt" => Method::FastManoeuvring,
            "vlmulthyprbvrpf" | "vlmulthyp" | "vlmh" => Method::MultiHypothesis,
            "vlpcknowntau" => Method::KnownSwitchTimes,
            "vlpcknowntauandr" | "vlpcknowntaur" => Method::KnownSwitchTimesAndWaypoints,
            _ => return Err(Error::UnknownMethod(s.to_string())),
        };
        Ok(m)
    }
}

/// Jump prior and jump-size law of one filter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpTuning {
    pub alpha: f64,
    pub beta: f64,
    pub mu_j: f64,
    pub sigma_j: f64,
}

impl JumpTuning {
    pub fn prior(&self) -> Result<JumpPrior> {
        JumpPrior::gamma(self.alpha, self.beta)
    }
}

/// Filter parameters for every benchmark method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterTuning {
    pub eta: f64,
    pub rho: f64,
    pub sigma_x: f64,
    /// Destination diffusion of the baseline model.
    pub baseline_sigma_r: f64,
    pub piecewise: JumpTuning,
    pub jump_diffusion: JumpTuning,
    pub jump_diffusion_sigma_r: f64,
    pub fast_manoeuvring: JumpTuning,
    pub fast_manoeuvring_sigma_r: f64,
    pub multi_hypothesis: JumpTuning,
    /// Spread of each nominal destination in the multi-hypothesis model.
    pub destination_extent: f64,
    /// Probability that an indicator jump keeps the current hypothesis.
    pub indicator_stay: f64,
    pub position_var: f64,
    pub velocity_var: f64,
    pub intent_var: f64,
}

impl Default for FilterTuning {
    fn default() -> Self {
        Self::for_generator(GeneratorKind::WaypointCv)
    }
}

impl FilterTuning {
    /// Defaults matched to the built-in generators.
    pub fn for_generator(kind: GeneratorKind) -> Self {
        let piecewise = JumpTuning {
            alpha: 2.0,
            beta: 8.0,
            mu_j: 0.0,
            sigma_j: 700.0,
        };
        let base = Self {
            eta: 0.2,
            rho: 1.0,
            sigma_x: 14.0,
            baseline_sigma_r: 20.0,
            piecewise,
            jump_diffusion: piecewise,
            jump_diffusion_sigma_r: 5.0,
            fast_manoeuvring: JumpTuning {
                alpha: 2.0,
                beta: 5.0,
                mu_j: 0.0,
                sigma_j: 50.0,
            },
            fast_manoeuvring_sigma_r: 20.0,
            multi_hypothesis: piecewise,
            destination_extent: 20.0,
            indicator_stay: 0.2,
            position_var: 225.0,
            velocity_var: 1e4,
            intent_var: 1e6,
        };
        match kind {
            GeneratorKind::WaypointCv => base,
            GeneratorKind::JumpDiffusionTarget => {
                // Matched to `ScenarioConfig::jump_target`: η = κg, ρ = κ, σ_x = σ_d.
                let intent = JumpTuning {
                    sigma_j: 150.0,
                    ..piecewise
                };
                Self {
                    eta: 0.06,
                    rho: 0.3,
                    sigma_x: 5.0,
                    baseline_sigma_r: 5.0,
                    piecewise: intent,
                    jump_diffusion: intent,
                    jump_diffusion_sigma_r: 5.0,
                    fast_manoeuvring: JumpTuning {
                        alpha: 2.0,
                        beta: 2.0,
                        mu_j: 0.0,
                        sigma_j: 50.0,
                    },
                    fast_manoeuvring_sigma_r: 50.0,
                    multi_hypothesis: intent,
                    ..base
                }
            }
        }
    }

    fn params(&self, dims: usize, sigma_r: f64, jumps: Option<&JumpTuning>) -> ModelParams {
        ModelParams {
            eta: self.eta,
            rho: self.rho,
            sigma_x: self.sigma_x,
            sigma_r,
            mu_j: jumps.map_or(0.0, |j| j.mu_j),
            sigma_j: jumps.map_or(0.0, |j| j.sigma_j),
            dims,
        }
    }
}

/// Builds the particle filter for `method`, initialised from the first
/// measurement. Oracle methods read switch times and waypoints from `truth`.
pub fn method_filter(
    method: Method,
    tuning: &FilterTuning,
    measurement_sigma: f64,
    first: &Measurement,
    truth: Option<&TruthMetadata>,
    config: FilterConfig,
) -> Result<ParticleSet> {
    let dims = first.y.len();
    let layout = StateLayout::new(dims);
    let oracle = || truth.ok_or_else(|| Error::contract(format!("{method} needs ground truth")));
    let (kind, params, prior, proposal) = match method {
        Method::BaselineKf => (
            ModelKind::Baseline,
            tuning.params(dims, tuning.baseline_sigma_r, None),
            tuning.piecewise.prior()?,
            Proposal::Prior,
        ),
        Method::PiecewiseConstant => (
            ModelKind::PiecewiseConstant,
            tuning.params(dims, 0.0, Some(&tuning.piecewise)),
            tuning.piecewise.prior()?,
            Proposal::Prior,
        ),
        Method::JumpDiffusion => (
            ModelKind::JumpDiffusion,
            tuning.params(
                dims,
                tuning.jump_diffusion_sigma_r,
                Some(&tuning.jump_diffusion),
            ),
            tuning.jump_diffusion.prior()?,
            Proposal::Prior,
        ),
        Method::FastManoeuvring => (
            ModelKind::FastManoeuvring,
            tuning.params(
                dims,
                tuning.fast_manoeuvring_sigma_r,
                Some(&tuning.fast_manoeuvring),
            ),
            tuning.fast_manoeuvring.prior()?,
            Proposal::Prior,
        ),
        Method::MultiHypothesis => {
            let truth = oracle()?;
            let dest = DestinationSet::with_uniform_switching(
                truth.waypoints.clone(),
                tuning.destination_extent,
                tuning.indicator_stay,
            )?;
            (
                ModelKind::MultiHypothesis { destinations: dest },
                tuning.params(dims, 0.0, Some(&tuning.multi_hypothesis)),
                tuning.multi_hypothesis.prior()?,
                Proposal::Prior,
            )
        }
        Method::KnownSwitchTimes => {
            let truth = oracle()?;
            let seq = JumpSequence::from_events(
                first.t,
                None,
                truth.switch_times.iter().map(|&t| JumpEvent::at(t)),
            )?;
            (
                ModelKind::PiecewiseConstant,
                tuning.params(dims, 0.0, Some(&tuning.piecewise)),
                tuning.piecewise.prior()?,
                Proposal::Fixed(seq),
            )
        }
        Method::KnownSwitchTimesAndWaypoints => {
            let truth = oracle()?;
            let n = truth.waypoints.len();
            let destinations = truth
                .waypoints
                .iter()
                .map(|w| Destination::point(w.clone()))
                .collect();
            let uniform = vec![vec![1.0 / (n + 1) as f64; n + 1]; n + 1];
            let dest =
                DestinationSet::new(destinations, uniform, vec![1.0 / (n + 1) as f64; n + 1])?;
            let events = truth
                .switch_times
                .iter()
                .enumerate()
                .map(|(k, &t)| JumpEvent::with_indicator(t, k + 2));
            let seq = JumpSequence::from_events(first.t, Some(1), events)?;
            (
                ModelKind::MultiHypothesis { destinations: dest },
                tuning.params(dims, 0.0, None),
                tuning.piecewise.prior()?,
                Proposal::Fixed(seq),
            )
        }
    };
    let config = if method.is_single_particle() {
        FilterConfig {
            particles: 1,
            ..config
        }
    } else {
        config
    };
    let model = MotionModel::new(kind, params)?;
    let obs = ObservationModel::positions(layout, measurement_sigma)?;
    let belief = vague_prior(
        layout,
        &first.y,
        tuning.position_var,
        tuning.velocity_var,
        tuning.intent_var,
    )?;
    ParticleSet::init(model, prior, obs, belief, config)?.with_proposal(proposal)
}

/// Runs the filter over every measurement.
pub fn run_filter(
    set: &mut ParticleSet,
    measurements: &[Measurement],
) -> Result<Vec<StepDiagnostics>> {
    measurements
        .iter()
        .map(|m| set.step(m.t, &DVector::from_column_slice(&m.y)))
        .collect()
}

/// Root mean squared Euclidean error between two equally long sequences.
pub fn rmse(estimates: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if estimates.len() != truth.len() || estimates.is_empty() {
        return Err(Error::dim(format!(
            "{} estimates against {} truth points",
            estimates.len(),
            truth.len()
        )));
    }
    let mut sum = 0.0;
    for (e, t) in estimates.iter().zip(truth) {
        if e.len() != t.len() {
            return Err(Error::dim("estimate and truth differ in dimension"));
        }
        sum += e.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok((sum / estimates.len() as f64).sqrt())
}

/// Posterior-mean position and destination at each step.
pub fn estimates(diags: &[StepDiagnostics], dims: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let layout = StateLayout::new(dims);
    let pick = |idx: &[usize]| -> Vec<Vec<f64>> {
        diags
            .iter()
            .map(|d| idx.iter().map(|&i| d.mean[i]).collect())
            .collect()
    };
    (
        pick(&layout.position_indices()),
        pick(&layout.intent_indices()),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub scenario: ScenarioConfig,
    pub methods: Vec<Method>,
    pub realisations: usize,
    pub particles: usize,
    pub ess_threshold: f64,
    pub seed: u64,
    pub tuning: FilterTuning,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            methods: Method::ALL.to_vec(),
            realisations: 50,
            particles: 500,
            ess_threshold: 0.5,
            seed: 0,
            tuning: FilterTuning::default(),
        }
    }
}

impl BenchmarkConfig {
    /// Velocity-jump targets scored on the four model families.
    pub fn jump_target() -> Self {
        Self {
            scenario: ScenarioConfig::jump_target(),
            methods: vec![
                Method::BaselineKf,
                Method::JumpDiffusion,
                Method::PiecewiseConstant,
                Method::FastManoeuvring,
            ],
            tuning: FilterTuning::for_generator(GeneratorKind::JumpDiffusionTarget),
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: Method,
    /// One value per realisation, in realisation order.
    pub position_rmse: Vec<f64>,
    pub destination_rmse: Vec<f64>,
    pub mean_position_rmse: f64,
    pub mean_destination_rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub realisations: usize,
    pub rows: Vec<MethodScore>,
}

impl BenchmarkResult {
    pub fn score(&self, method: Method) -> Option<&MethodScore> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "position_rmse", "destination_rmse"])?;
        for r in &self.rows {
            w.write_record([
                r.method.name().to_string(),
                format!("{:.6}", r.mean_position_rmse),
                format!("{:.6}", r.mean_destination_rmse),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "Mean RMSE over {} realisations (m)\n{:<24}{:>16}{:>18}\n",
            self.realisations, "Method", "Position est.", "Destination est."
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<24}{:>16.3}{:>18.3}\n",
                r.method.name(),
                r.mean_position_rmse,
                r.mean_destination_rmse
            ));
        }
        s
    }
}

/// SplitMix64 finaliser, used to derive independent seeds.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z =
        seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Track and measurements of realisation `index`.
pub fn realisation(
    scenario: &ScenarioConfig,
    seed: u64,
    index: usize,
) -> Result<(Trajectory, Vec<Measurement>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, index as u64, 0));
    let traj = simulate(scenario, &mut rng)?;
    let meas = synthesize_measurements(&traj, scenario, &mut rng)?;
    Ok((traj, meas))
}

/// Scores every method on identical realisations.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkResult> {
    config.scenario.validate()?;
    if config.realisations == 0 || config.methods.is_empty() {
        return Err(Error::param(
            "benchmark needs at least one realisation and one method",
        ));
    }
    let per_real: Vec<Result<Vec<(f64, f64)>>> = (0..config.realisations)
        .into_par_iter()
        .map(|i| {
            let (traj, meas) = realisation(&config.scenario, config.seed, i)?;
            let dims = traj.dims();
            let waypoints = traj.active_waypoints();
            config
                .methods
                .iter()
                .enumerate()
                .map(|(m_idx, &method)| {
                    let fc = FilterConfig {
                        particles: config.particles,
                        ess_threshold: config.ess_threshold,
                        seed: mix_seed(config.seed, i as u64, m_idx as u64 + 1),
                    };
                    let mut set = method_filter(
                        method,
                        &config.tuning,
                        config.scenario.measurement_sigma,
                        &meas[0],
                        Some(&traj.truth),
                        fc,
                    )?;
                    let diags = run_filter(&mut set, &meas)?;
                    let (pos, dest) = estimates(&diags, dims);
                    Ok((rmse(&pos, &traj.positions)?, rmse(&dest, &waypoints)?))
                })
                .collect()
        })
        .collect();
    let mut table = Vec::with_capacity(per_real.len());
    for r in per_real {
        table.push(r?);
    }
    let rows = config
        .methods
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let position_rmse: Vec<f64> = table.iter().map(|r| r[m].0).collect();
            let destination_rmse: Vec<f64> = table.iter().map(|r| r[m].1).collect();
            MethodScore {
                method,
                mean_position_rmse: mean(&position_rmse),
                mean_destination_rmse: mean(&destination_rmse),
                position_rmse,
                destination_rmse,
            }
        })
        .collect();
    Ok(BenchmarkResult {
        realisations: config.realisations,
        rows,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Fraction of paired bootstrap resamples in which `mean(a) ≤ mean(b)`.
pub fn paired_bootstrap_confidence(
    a: &[f64],
    b: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() || resamples == 0 {
        return Err(Error::dim(
            "paired bootstrap needs equal, non-empty samples",
        ));
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diff.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..resamples {
        let s: f64 = (0..n).map(|_| diff[rng.random_range(0..n)]).sum();
        if s <= 0.0 {
            hits += 1;
        }
    }
    Ok(hits as f64 / resamples as f64)
}
