//! Rao-Blackwellised variable-rate particle filter.
//!
//! Each particle carries a jump history and the exact Kalman belief of the
//! continuous state conditioned on that history. Jumps are proposed from
//! their prior, so the incremental weight is the Kalman predictive
//! likelihood alone.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::belief::{predict, update, GaussianBelief, GaussianMixture, ObservationModel};
use crate::error::{Error, Result};
use crate::jumps::{
    categorical, sample_indicator, sample_window, JumpEvent, JumpPrior, JumpSequence,
};
use crate::models::{ModelKind, MotionModel, StateLayout};

/// Where each step's jump events come from.
#[derive(Clone, Debug, PartialEq)]
pub enum Proposal {
    /// Sample from the jump prior (and indicator chain).
    Prior,
    /// Every particle follows this sequence. With one particle this is
    /// the conditional Kalman filter given the jumps.
    Fixed(JumpSequence),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterConfig {
    pub particles: usize,
    /// Resample when ESS < `ess_threshold · particles`.
    pub ess_threshold: f64,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particles: 500,
            ess_threshold: 0.5,
            seed: 0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::param("particle count must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.ess_threshold) {
            return Err(Error::param(format!(
                "ESS threshold {} not in [0, 1]",
                self.ess_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    /// Normalised after every step.
    pub log_weight: f64,
    pub jumps: JumpSequence,
    pub belief: GaussianBelief,
}

/// Per-step summary, taken after weighting and before resampling.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub time: f64,
    pub ess: f64,
    pub resampled: bool,
    pub mean: DVector<f64>,
    /// Diagonal of the moment-matched posterior covariance.
    pub variances: DVector<f64>,
    pub map_jump_times: Vec<f64>,
}

pub struct ParticleSet {
    model: MotionModel,
    prior: JumpPrior,
    obs: ObservationModel,
    config: FilterConfig,
    proposal: Proposal,
    particles: Vec<Particle>,
    time: Option<f64>,
    step: u64,
}

/// Stream id reserved for the resampling draw of each step.
const RESAMPLE_STREAM: u64 = u32::MAX as u64;

fn stream_rng(seed: u64, step: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((step << 32) | index);
    rng
}

impl ParticleSet {
    pub fn init(
        model: MotionModel,
        prior: JumpPrior,
        obs: ObservationModel,
        prior_belief: GaussianBelief,
        config: FilterConfig,
    ) -> Result<Self> {
        config.validate()?;
        prior.validate()?;
        if prior_belief.dim() != model.dim() || obs.state_dim() != model.dim() {
            return Err(Error::dim(format!(
                "model dimension {}, prior belief {}, observation model {}",
                model.dim(),
                prior_belief.dim(),
                obs.state_dim()
            )));
        }
        let n = config.particles;
        let particle = Particle {
            log_weight: -(n as f64).ln(),
            jumps: JumpSequence::new(0.0),
            belief: prior_belief,
        };
        Ok(Self {
            model,
            prior,
            obs,
            config,
            proposal: Proposal::Prior,
            particles: vec![particle; n],
            time: None,
            step: 0,
        })
    }

    /// Must be called before the first step.
    pub fn with_proposal(mut self, proposal: Proposal) -> Result<Self> {
        if self.time.is_some() {
            return Err(Error::contract("proposal changed after filtering started"));
        }
        self.proposal = proposal;
        Ok(self)
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn model(&self) -> &MotionModel {
        &self.model
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn time(&self) -> Option<f64> {
        self.time
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.log_weight.exp()).collect()
    }

    pub fn ess(&self) -> f64 {
        1.0 / self.weights().iter().map(|w| w * w).sum::<f64>()
    }

    /// Assimilates measurement `y` taken at `t` and resamples if the ESS
    /// is low. The first call only conditions the prior belief on `y` and
    /// anchors the jump histories.
    pub fn step(&mut self, t: f64, y: &DVector<f64>) -> Result<StepDiagnostics> {
        let mut diag = self.assimilate(t, y)?;
        diag.resampled = self.resample_if_needed();
        Ok(diag)
    }

    /// [`step`](Self::step) without the resampling stage, so the weighted
    /// posterior can be queried first.
    pub fn assimilate(&mut self, t: f64, y: &DVector<f64>) -> Result<StepDiagnostics> {
        if y.len() != self.obs.obs_dim() {
            return Err(Error::dim(format!(
                "measurement has length {}, observation model expects {}",
                y.len(),
                self.obs.obs_dim()
            )));
        }
        if !t.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite measurement at t = {t}")));
        }
        if let Some(prev) = self.time {
            if !(t > prev) {
                return Err(Error::contract(format!("time {t} does not follow {prev}")));
            }
        }

        let window = self.time.map(|prev| (prev, t));
        let base = match window {
            Some((a, b)) => Some(self.model.base_transition(b - a)?),
            None => None,
        };
        let (seed, step) = (self.config.seed, self.step);
        let ctx = StepContext {
            model: &self.model,
            prior: &self.prior,
            obs: &self.obs,
            proposal: &self.proposal,
            base: base.as_ref(),
        };
        let results: Vec<Result<Particle>> = self
            .particles
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let mut rng = stream_rng(seed, step, i as u64);
                match window {
                    Some(w) => ctx.advance(p, w, y, &mut rng),
                    None => ctx.start(p, t, y, &mut rng),
                }
            })
            .collect();
        let mut particles = Vec::with_capacity(results.len());
        for r in results {
            particles.push(r?);
        }
        normalise(&mut particles, t)?;
        self.particles = particles;
        self.time = Some(t);
        self.step += 1;

        let mixture = self.posterior_mixture()?;
        let ess = self.ess();
        Ok(StepDiagnostics {
            time: t,
            ess,
            resampled: false,
            mean: mixture.mean(),
            variances: mixture.covariance().diagonal(),
            map_jump_times: self.map_jump_history().times(),
        })
    }

    /// Systematic resampling when the ESS falls below the threshold.
    pub fn resample_if_needed(&mut self) -> bool {
        let n = self.particles.len();
        if self.ess() >= self.config.ess_threshold * n as f64 {
            return false;
        }
        let mut rng = stream_rng(self.config.seed, self.step, RESAMPLE_STREAM);
        let picks = systematic_resample(&self.weights(), rng.random());
        let uniform = -(n as f64).ln();
        self.particles = picks
            .into_iter()
            .map(|k| Particle {
                log_weight: uniform,
                ..self.particles[k].clone()
            })
            .collect();
        true
    }

    pub fn posterior_mixture(&self) -> Result<GaussianMixture> {
        let lw: Vec<f64> = self.particles.iter().map(|p| p.log_weight).collect();
        GaussianMixture::from_log_weights(
            &lw,
            self.particles.iter().map(|p| p.belief.clone()).collect(),
        )
    }

    /// History of the highest-weight particle; ties go to the lowest index.
    pub fn map_jump_history(&self) -> JumpSequence {
        let mut best = 0;
        for (i, p) in self.particles.iter().enumerate() {
            if p.log_weight > self.particles[best].log_weight {
                best = i;
            }
        }
        self.particles[best].jumps.clone()
    }
}

struct StepContext<'a> {
    model: &'a MotionModel,
    prior: &'a JumpPrior,
    obs: &'a ObservationModel,
    proposal: &'a Proposal,
    base: Option<&'a crate::sde::LinearTransition>,
}

impl StepContext<'_> {
    fn start(
        &self,
        p: &Particle,
        t0: f64,
        y: &DVector<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Particle> {
        let mut belief = p.belief.clone();
        let jumps = match (self.model.kind(), self.proposal) {
            (ModelKind::MultiHypothesis { destinations }, proposal) => {
                let c0 = match proposal {
                    Proposal::Fixed(seq) => seq.initial_indicator().ok_or_else(|| {
                        Error::contract(
                            "fixed multi-hypothesis sequence lacks an initial indicator",
                        )
                    })?,
                    Proposal::Prior => categorical(&destinations.initial, rng.random()),
                };
                if c0 > 0 {
                    belief = predict(&belief, &self.model.indicator_reset(destinations, c0)?)?;
                }
                JumpSequence::with_initial_indicator(t0, c0)
            }
            _ => JumpSequence::new(t0),
        };
        self.weigh(p.log_weight, jumps, belief, y)
    }

    fn advance(
        &self,
        p: &Particle,
        window: (f64, f64),
        y: &DVector<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Particle> {
        let events = match self.proposal {
            Proposal::Fixed(seq) => seq.events_in(window),
            Proposal::Prior if !self.model.kind().has_jumps() => Vec::new(),
            Proposal::Prior => {
                let times = sample_window(self.prior, p.jumps.last_time(), window, rng)?;
                match self.model.kind().destinations() {
                    Some(dest) => {
                        let mut c = p.jumps.last_indicator().ok_or_else(|| {
                            Error::contract("multi-hypothesis particle without an indicator")
                        })?;
                        let mut ev = Vec::with_capacity(times.len());
                        for time in times {
                            c = sample_indicator(dest, c, rng)?;
                            ev.push(JumpEvent::with_indicator(time, c));
                        }
                        ev
                    }
                    None => times.into_iter().map(JumpEvent::at).collect(),
                }
            }
        };
        let mut jumps = p.jumps.clone();
        for e in &events {
            jumps.push(*e)?;
        }
        let tr = self
            .model
            .transition_with_base(window, &events, self.base)?;
        match predict(&p.belief, &tr) {
            Ok(belief) => self.weigh(p.log_weight, jumps, belief, y),
            Err(Error::Numeric(_)) => Ok(dead(jumps, p.belief.clone())),
            Err(e) => Err(e),
        }
    }

    fn weigh(
        &self,
        log_weight: f64,
        jumps: JumpSequence,
        belief: GaussianBelief,
        y: &DVector<f64>,
    ) -> Result<Particle> {
        match update(&belief, self.obs, y) {
            Ok((post, ll)) => Ok(Particle {
                log_weight: log_weight + ll,
                jumps,
                belief: post,
            }),
            Err(Error::Numeric(_)) => Ok(dead(jumps, belief)),
            Err(e) => Err(e),
        }
    }
}

fn dead(jumps: JumpSequence, belief: GaussianBelief) -> Particle {
    Particle {
        log_weight: f64::NEG_INFINITY,
        jumps,
        belief,
    }
}

fn normalise(particles: &mut [Particle], t: f64) -> Result<()> {
    let max = particles
        .iter()
        .map(|p| p.log_weight)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Degenerate { time: t });
    }
    let lse = max
        + particles
            .iter()
            .map(|p| (p.log_weight - max).exp())
            .sum::<f64>()
            .ln();
    for p in particles.iter_mut() {
        p.log_weight -= lse;
    }
    Ok(())
}

/// `1 / Σ wᵢ²` for normalised weights.
pub fn ess(weights: &[f64]) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!(
            "weights sum to {total}, expected 1"
        )));
    }
    Ok(1.0 / weights.iter().map(|w| w * w).sum::<f64>())
}

/// Parent indices chosen by systematic resampling with offset `u ∈ [0, 1)`.
pub fn systematic_resample(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut picks = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut k = 0;
    for j in 0..n {
        let target = (u + j as f64) / n as f64 * total;
        while k + 1 < n && cum + weights[k] <= target {
            cum += weights[k];
            k += 1;
        }
        // Skip trailing zero-weight particles that cumulative rounding reached.
        while weights[k] == 0.0 && k > 0 {
            k -= 1;
        }
        picks.push(k);
    }
    picks
}

/// Prior centred on the first measured position with zero mean velocity
/// and the destination at the same position.
pub fn vague_prior(
    layout: StateLayout,
    position: &[f64],
    position_var: f64,
    velocity_var: f64,
    intent_var: f64,
) -> Result<GaussianBelief> {
    if position.len() != layout.dims {
        return Err(Error::dim(format!(
            "position has {} axes, layout {}",
            position.len(),
            layout.dims
        )));
    }
    let n = layout.dim();
    let mut mean = DVector::zeros(n);
    let mut cov = DMatrix::zeros(n, n);
    for d in 0..layout.dims {
        mean[layout.position(d)] = position[d];
        mean[layout.intent(d)] = position[d];
        cov[(layout.position(d), layout.position(d))] = position_var;
        cov[(layout.velocity(d), layout.velocity(d))] = velocity_var;
        cov[(layout.intent(d), layout.intent(d))] = intent_var;
    }
    GaussianBelief::new(mean, cov)
}
