//! Virtual-leader intent models.
//!
//! Every model shares the per-axis state `[x, ẋ, r]` (position, velocity,
//! destination) and the drift
//!
//! ```text
//! A = [[0, 1, 0], [−η, −ρ, η], [0, 0, 0]]
//! ```
//!
//! They differ in what drives the destination and velocity: Brownian
//! motion, compound-Poisson-like jumps at renewal times, or both. Axes are
//! stacked block-diagonally and share jump times.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jumps::JumpEvent;
use crate::sde::{block_diagonal, discretise, jump_contributions, symmetrise, LinearTransition};

/// State vector `[x, ẋ, r]` per axis, stacked across axes.
pub type ExtendedState = DVector<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Reversion rate toward the destination (1/s²).
    pub eta: f64,
    /// Velocity damping (1/s).
    pub rho: f64,
    /// Motion diffusion (m/s^{3/2}).
    pub sigma_x: f64,
    /// Destination diffusion (m/√s).
    pub sigma_r: f64,
    /// Jump-size mean.
    pub mu_j: f64,
    /// Jump-size standard deviation.
    pub sigma_j: f64,
    pub dims: usize,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("eta", self.eta),
            ("rho", self.rho),
            ("sigma_x", self.sigma_x),
            ("sigma_r", self.sigma_r),
            ("sigma_j", self.sigma_j),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(format!("{name} = {v} must be finite and ≥ 0")));
            }
        }
        if !self.mu_j.is_finite() {
            return Err(Error::param("mu_j must be finite"));
        }
        if !(1..=3).contains(&self.dims) {
            return Err(Error::param(format!("dims = {} not in 1..=3", self.dims)));
        }
        Ok(())
    }
}

/// Index arithmetic for the stacked `[x, ẋ, r]` layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateLayout {
    pub dims: usize,
}

impl StateLayout {
    pub const PER_AXIS: usize = 3;

    pub fn new(dims: usize) -> Self {
        Self { dims }
    }

    pub fn dim(&self) -> usize {
        Self::PER_AXIS * self.dims
    }

    pub fn position(&self, axis: usize) -> usize {
        Self::PER_AXIS * axis
    }

    pub fn velocity(&self, axis: usize) -> usize {
        Self::PER_AXIS * axis + 1
    }

    pub fn intent(&self, axis: usize) -> usize {
        Self::PER_AXIS * axis + 2
    }

    pub fn position_indices(&self) -> Vec<usize> {
        (0..self.dims).map(|d| self.position(d)).collect()
    }

    pub fn velocity_indices(&self) -> Vec<usize> {
        (0..self.dims).map(|d| self.velocity(d)).collect()
    }

    pub fn intent_indices(&self) -> Vec<usize> {
        (0..self.dims).map(|d| self.intent(d)).collect()
    }

    /// Observation matrix selecting the positions.
    pub fn position_selector(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dims, self.dim());
        for d in 0..self.dims {
            h[(d, self.position(d))] = 1.0;
        }
        h
    }
}

/// A predefined destination: its position and per-axis extent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Destination {
    pub position: Vec<f64>,
    pub extent: Vec<f64>,
}

impl Destination {
    pub fn point(position: Vec<f64>) -> Self {
        let extent = vec![0.0; position.len()];
        Self { position, extent }
    }
}

/// Nominal destinations plus the Markov chain over indicators `0..=N_D`
/// (0 is the null hypothesis).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DestinationSet {
    pub destinations: Vec<Destination>,
    /// `(N_D + 1) × (N_D + 1)` row-stochastic matrix.
    pub transition: Vec<Vec<f64>>,
    /// Prior over the initial indicator `c₀`.
    pub initial: Vec<f64>,
}

const STOCHASTIC_TOL: f64 = 1e-9;

impl DestinationSet {
    pub fn new(
        destinations: Vec<Destination>,
        transition: Vec<Vec<f64>>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let set = Self {
            destinations,
            transition,
            initial,
        };
        set.validate()?;
        Ok(set)
    }

    /// Destinations with `σ_j = extent`, a chain that keeps the current
    /// indicator with probability `stay` and otherwise moves uniformly,
    /// and a uniform `c₀`.
    pub fn with_uniform_switching(
        positions: Vec<Vec<f64>>,
        extent: f64,
        stay: f64,
    ) -> Result<Self> {
        let k = positions.len() + 1;
        let destinations = positions
            .into_iter()
            .map(|p| {
                let e = vec![extent; p.len()];
                Destination {
                    position: p,
                    extent: e,
                }
            })
            .collect();
        let off = if k > 1 {
            (1.0 - stay) / (k - 1) as f64
        } else {
            0.0
        };
        let transition = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        if i == j {
                            if k > 1 {
                                stay
                            } else {
                                1.0
                            }
                        } else {
                            off
                        }
                    })
                    .collect()
            })
            .collect();
        Self::new(destinations, transition, vec![1.0 / k as f64; k])
    }

    /// `N_D`.
    pub fn count(&self) -> usize {
        self.destinations.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.count() + 1;
        let check_row = |row: &[f64], what: &str| -> Result<()> {
            if row.len() != k {
                return Err(Error::param(format!(
                    "{what} has {} entries, expected {k}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(Error::param(format!(
                    "{what} has a negative or non-finite entry"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::param(format!("{what} sums to {s}")));
            }
            Ok(())
        };
        if self.transition.len() != k {
            return Err(Error::param(format!(
                "transition matrix has {} rows, expected {k}",
                self.transition.len()
            )));
        }
        for (i, row) in self.transition.iter().enumerate() {
            check_row(row, &format!("transition row {i}"))?;
        }
        check_row(&self.initial, "initial indicator prior")?;
        let dims = self.destinations.first().map(|d| d.position.len());
        for (j, d) in self.destinations.iter().enumerate() {
            if Some(d.position.len()) != dims || d.extent.len() != d.position.len() {
                return Err(Error::param(format!(
                    "destination {} has inconsistent axes",
                    j + 1
                )));
            }
            if d.extent.iter().any(|s| !(*s >= 0.0)) {
                return Err(Error::param(format!(
                    "destination {} has negative extent",
                    j + 1
                )));
            }
        }
        Ok(())
    }

    pub fn transition_row(&self, from: usize) -> Result<&[f64]> {
        self.transition
            .get(from)
            .map(|r| r.as_slice())
            .ok_or_else(|| {
                Error::contract(format!(
                    "indicator {from} out of range 0..={}",
                    self.count()
                ))
            })
    }

    pub fn transition_prob(&self, from: usize, to: usize) -> Result<f64> {
        let row = self.transition_row(from)?;
        row.get(to).copied().ok_or_else(|| {
            Error::contract(format!("indicator {to} out of range 0..={}", self.count()))
        })
    }

    /// Destination for indicator `j ≥ 1`.
    pub fn get(&self, indicator: usize) -> Option<&Destination> {
        indicator
            .checked_sub(1)
            .and_then(|j| self.destinations.get(j))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    /// Brownian destination, no jumps.
    Baseline,
    /// Destination constant between jumps.
    PiecewiseConstant,
    /// Destination jumps plus Brownian refinement.
    JumpDiffusion,
    /// Jumps in velocity, Brownian destination.
    FastManoeuvring,
    /// Piecewise-constant destination that may snap to a nominal endpoint.
    MultiHypothesis { destinations: DestinationSet },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::PiecewiseConstant => "piecewise-constant",
            ModelKind::JumpDiffusion => "jump-diffusion",
            ModelKind::FastManoeuvring => "fast-manoeuvring",
            ModelKind::MultiHypothesis { .. } => "multi-hypothesis",
        }
    }

    pub fn has_jumps(&self) -> bool {
        !matches!(self, ModelKind::Baseline)
    }

    pub fn destinations(&self) -> Option<&DestinationSet> {
        match self {
            ModelKind::MultiHypothesis { destinations } => Some(destinations),
            _ => None,
        }
    }

    fn brownian_destination(&self) -> bool {
        matches!(
            self,
            ModelKind::Baseline | ModelKind::JumpDiffusion | ModelKind::FastManoeuvring
        )
    }
}

/// Continuous-time system `ds = A s dt + L dB + h_J dW`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemMatrices {
    pub a: DMatrix<f64>,
    /// `n × 2·dims`: columns alternate motion and destination noise.
    pub l: DMatrix<f64>,
    /// `n × dims`: one independent jump size per axis.
    pub h_jump: DMatrix<f64>,
    /// `n × dims`: motion noise only.
    pub h_brownian: DMatrix<f64>,
}

pub fn build_system_matrices(kind: &ModelKind, params: &ModelParams) -> Result<SystemMatrices> {
    params.validate()?;
    if let ModelKind::MultiHypothesis { destinations } = kind {
        destinations.validate()?;
        if let Some(d) = destinations.destinations.first() {
            if d.position.len() != params.dims {
                return Err(Error::dim(format!(
                    "destinations have {} axes, model has {}",
                    d.position.len(),
                    params.dims
                )));
            }
        }
    }
    let (eta, rho) = (params.eta, params.rho);
    let sigma_r = if kind.brownian_destination() {
        params.sigma_r
    } else {
        0.0
    };
    let jump_row = match kind {
        ModelKind::FastManoeuvring => 1,
        _ => 2,
    };

    let a_axis = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -eta, -rho, eta, 0.0, 0.0, 0.0]);
    let l_axis = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, params.sigma_x, 0.0, 0.0, sigma_r]);
    let mut hj_axis = DMatrix::zeros(3, 1);
    if kind.has_jumps() {
        hj_axis[(jump_row, 0)] = 1.0;
    }
    let hb_axis = DMatrix::from_column_slice(3, 1, &[0.0, params.sigma_x, 0.0]);

    let rep = |m: &DMatrix<f64>| block_diagonal(&vec![m.clone(); params.dims]);
    Ok(SystemMatrices {
        a: rep(&a_axis),
        l: rep(&l_axis),
        h_jump: rep(&hj_axis),
        h_brownian: rep(&hb_axis),
    })
}

/// Gaussian density of `s_n` given `s_{n-1}` and the window's jumps.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// A model with its system matrices assembled.
#[derive(Clone, Debug)]
pub struct MotionModel {
    kind: ModelKind,
    params: ModelParams,
    sys: SystemMatrices,
}

impl MotionModel {
    pub fn new(kind: ModelKind, params: ModelParams) -> Result<Self> {
        let sys = build_system_matrices(&kind, &params)?;
        Ok(Self { kind, params, sys })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn system(&self) -> &SystemMatrices {
        &self.sys
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self.params.dims)
    }

    pub fn dim(&self) -> usize {
        self.sys.a.nrows()
    }

    /// Jump-free transition over `dt`.
    pub fn base_transition(&self, dt: f64) -> Result<LinearTransition> {
        let (f, cov) = discretise(&self.sys.a, &self.sys.l, dt)?;
        Ok(LinearTransition {
            offset: DVector::zeros(f.nrows()),
            f,
            cov,
        })
    }

    /// Transition over `window = (t_{n-1}, t_n]` given the jumps inside it.
    /// `base` may carry the precomputed jump-free transition for the window.
    pub fn transition_with_base(
        &self,
        window: (f64, f64),
        events: &[JumpEvent],
        base: Option<&LinearTransition>,
    ) -> Result<LinearTransition> {
        let (t_prev, t_n) = window;
        if !(t_n >= t_prev) {
            return Err(Error::contract(format!(
                "window ({t_prev}, {t_n}] is reversed"
            )));
        }
        check_events(events, window)?;
        let base_or_compute = || -> Result<LinearTransition> {
            match base {
                Some(b) => Ok(b.clone()),
                None => self.base_transition(t_n - t_prev),
            }
        };
        match &self.kind {
            ModelKind::Baseline => {
                if !events.is_empty() {
                    return Err(Error::contract("baseline model cannot take jumps"));
                }
                base_or_compute()
            }
            ModelKind::MultiHypothesis { destinations } => {
                if events.is_empty() {
                    return base_or_compute();
                }
                self.chained_transition(destinations, window, events)
            }
            _ => {
                let mut tr = base_or_compute()?;
                if events.is_empty() {
                    return Ok(tr);
                }
                let times: Vec<f64> = events.iter().map(|e| e.time).collect();
                let (offset, cov) = jump_contributions(
                    &self.sys.a,
                    &self.sys.h_jump,
                    &times,
                    window,
                    self.params.mu_j,
                    self.params.sigma_j,
                )?;
                tr.offset += offset;
                tr.cov = symmetrise(&(tr.cov + cov));
                Ok(tr)
            }
        }
    }

    pub fn transition(&self, window: (f64, f64), events: &[JumpEvent]) -> Result<LinearTransition> {
        self.transition_with_base(window, events, None)
    }

    /// Left-to-right composition of diffusion segments and the
    /// instantaneous resets at each indicator event.
    fn chained_transition(
        &self,
        destinations: &DestinationSet,
        window: (f64, f64),
        events: &[JumpEvent],
    ) -> Result<LinearTransition> {
        let n = self.dim();
        let mut total = LinearTransition::identity(n);
        let mut t = window.0;
        for e in events {
            let c = e.indicator.ok_or_else(|| {
                Error::contract(format!(
                    "multi-hypothesis jump at {} lacks an indicator",
                    e.time
                ))
            })?;
            total = total.then(&self.diffusion_segment(e.time - t)?);
            total = total.then(&self.indicator_reset(destinations, c)?);
            t = e.time;
        }
        Ok(total.then(&self.diffusion_segment(window.1 - t)?))
    }

    fn diffusion_segment(&self, dt: f64) -> Result<LinearTransition> {
        let (f, cov) = discretise(&self.sys.a, &self.sys.h_brownian, dt)?;
        Ok(LinearTransition {
            offset: DVector::zeros(f.nrows()),
            f,
            cov,
        })
    }

    /// `(F±, M±, Q±)` for indicator `c` taking effect.
    pub(crate) fn indicator_reset(
        &self,
        destinations: &DestinationSet,
        c: usize,
    ) -> Result<LinearTransition> {
        let n = self.dim();
        let layout = self.layout();
        if c == 0 {
            let h = &self.sys.h_jump;
            let ones = DVector::from_element(h.ncols(), 1.0);
            return Ok(LinearTransition {
                f: DMatrix::identity(n, n),
                offset: h * ones * self.params.mu_j,
                cov: h * h.transpose() * (self.params.sigma_j * self.params.sigma_j),
            });
        }
        let dest = destinations.get(c).ok_or_else(|| {
            Error::contract(format!(
                "indicator {c} out of range 0..={}",
                destinations.count()
            ))
        })?;
        let mut f = DMatrix::identity(n, n);
        let mut offset = DVector::zeros(n);
        let mut cov = DMatrix::zeros(n, n);
        for d in 0..layout.dims {
            let i = layout.intent(d);
            f[(i, i)] = 0.0;
            offset[i] = dest.position[d];
            cov[(i, i)] = dest.extent[d] * dest.extent[d];
        }
        Ok(LinearTransition { f, offset, cov })
    }
}

fn check_events(events: &[JumpEvent], window: (f64, f64)) -> Result<()> {
    let mut prev = window.0;
    for e in events {
        if !(e.time > window.0 && e.time <= window.1) {
            return Err(Error::contract(format!(
                "jump at {} outside window ({}, {}]",
                e.time, window.0, window.1
            )));
        }
        if e.time < prev || (e.time == prev && prev != window.0) {
            return Err(Error::contract("jump events are not strictly increasing"));
        }
        prev = e.time;
    }
    Ok(())
}

fn apply(tr: &LinearTransition, s_prev: &ExtendedState) -> Result<ConditionalGaussian> {
    if s_prev.len() != tr.dim() {
        return Err(Error::dim(format!(
            "state has length {}, model expects {}",
            s_prev.len(),
            tr.dim()
        )));
    }
    Ok(ConditionalGaussian {
        mean: &tr.f * s_prev + &tr.offset,
        cov: tr.cov.clone(),
    })
}

/// `p(s_n | s_{n-1}, jumps in window)`.
pub fn transition_density(
    kind: &ModelKind,
    params: &ModelParams,
    s_prev: &ExtendedState,
    window: (f64, f64),
    jumps: &[JumpEvent],
) -> Result<ConditionalGaussian> {
    let model = MotionModel::new(kind.clone(), *params)?;
    apply(&model.transition(window, jumps)?, s_prev)
}

/// `p(s_n | s_{n-1}, {(τ_k, c_k)})` for the multi-hypothesis model.
pub fn multihypo_transition(
    params: &ModelParams,
    destinations: &DestinationSet,
    s_prev: &ExtendedState,
    events: &[JumpEvent],
    window: (f64, f64),
) -> Result<ConditionalGaussian> {
    for e in events {
        match e.indicator {
            Some(c) if c <= destinations.count() => {}
            Some(c) => {
                return Err(Error::contract(format!(
                    "indicator {c} out of range 0..={}",
                    destinations.count()
                )))
            }
            None => return Err(Error::contract("multi-hypothesis events need indicators")),
        }
    }
    let kind = ModelKind::MultiHypothesis {
        destinations: destinations.clone(),
    };
    transition_density(&kind, params, s_prev, window, events)
}
