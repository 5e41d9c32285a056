//! Variable-rate priors over jump (change-point) times.
//!
//! Jumps form a renewal process with i.i.d. inter-arrival times. Each
//! particle carries its jump history as a [`JumpSequence`]; proposals for a
//! measurement window `(t_{n-1}, t_n]` are drawn conditional on no jump
//! having occurred since the last recorded one.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::models::DestinationSet;

/// Inter-arrival law of the jump renewal process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum JumpPrior {
    /// `Gam(alpha, beta)` with shape `alpha` and scale `beta` (seconds).
    Gamma { alpha: f64, beta: f64 },
    /// Exponential inter-arrivals (Poisson jump times) with the given mean.
    Exponential { mean: f64 },
}

impl JumpPrior {
    pub fn gamma(alpha: f64, beta: f64) -> Result<Self> {
        let p = JumpPrior::Gamma { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            JumpPrior::Gamma { alpha, beta } => {
                alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()
            }
            JumpPrior::Exponential { mean } => mean > 0.0 && mean.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid jump prior {self:?}")))
        }
    }

    pub fn mean_interarrival(&self) -> f64 {
        match *self {
            JumpPrior::Gamma { alpha, beta } => alpha * beta,
            JumpPrior::Exponential { mean } => mean,
        }
    }

    /// Log density of an inter-arrival time `dt`.
    pub fn log_pdf(&self, dt: f64) -> f64 {
        if dt <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            JumpPrior::Gamma { alpha, beta } => {
                (alpha - 1.0) * dt.ln() - dt / beta - ln_gamma(alpha) - alpha * beta.ln()
            }
            JumpPrior::Exponential { mean } => -dt / mean - mean.ln(),
        }
    }

    /// `P(inter-arrival > dt)`.
    pub fn survival_fn(&self, dt: f64) -> f64 {
        self.log_survival(dt).exp()
    }

    pub fn log_survival(&self, dt: f64) -> f64 {
        if dt <= 0.0 {
            return 0.0;
        }
        match *self {
            JumpPrior::Gamma { alpha, beta } => {
                let x = dt / beta;
                let q = gamma_ur(alpha, x);
                if q > 1e-280 {
                    q.ln()
                } else {
                    // Asymptotic tail of the upper incomplete gamma.
                    let a1 = alpha - 1.0;
                    let series = 1.0 + a1 / x + a1 * (alpha - 2.0) / (x * x);
                    a1 * x.ln() - x - ln_gamma(alpha) + series.max(f64::MIN_POSITIVE).ln()
                }
            }
            JumpPrior::Exponential { mean } => -dt / mean,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            JumpPrior::Gamma { alpha, beta } => Gamma::new(alpha, beta)
                .expect("validated gamma prior")
                .sample(rng),
            JumpPrior::Exponential { mean } => Exp::new(1.0 / mean)
                .expect("validated exponential prior")
                .sample(rng),
        }
    }
}

/// `S(t, τ)`: probability that no jump follows `last_jump` before `t`.
pub fn survival(prior: &JumpPrior, t: f64, last_jump: f64) -> Result<f64> {
    prior.validate()?;
    if t < last_jump {
        return Err(Error::contract(format!(
            "survival queried at {t} before last jump {last_jump}"
        )));
    }
    Ok(prior.survival_fn(t - last_jump))
}

/// One change-point: its time and, for the multi-hypothesis model, the
/// destination indicator that takes effect at that time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indicator: Option<usize>,
}

impl JumpEvent {
    pub fn at(time: f64) -> Self {
        Self {
            time,
            indicator: None,
        }
    }

    pub fn with_indicator(time: f64, indicator: usize) -> Self {
        Self {
            time,
            indicator: Some(indicator),
        }
    }
}

struct Node {
    event: JumpEvent,
    prev: Option<Arc<Node>>,
}

/// Strictly increasing jump history anchored at `origin` (`τ₀`).
///
/// Stored as a persistent list: clones share their common prefix, so
/// copying a particle during resampling is O(1) in history length.
#[derive(Clone)]
pub struct JumpSequence {
    origin: f64,
    initial_indicator: Option<usize>,
    head: Option<Arc<Node>>,
    len: usize,
}

impl JumpSequence {
    pub fn new(origin: f64) -> Self {
        Self {
            origin,
            initial_indicator: None,
            head: None,
            len: 0,
        }
    }

    pub fn with_initial_indicator(origin: f64, c0: usize) -> Self {
        let mut seq = Self::new(origin);
        seq.initial_indicator = Some(c0);
        seq
    }

    pub fn from_events(
        origin: f64,
        initial_indicator: Option<usize>,
        events: impl IntoIterator<Item = JumpEvent>,
    ) -> Result<Self> {
        let mut seq = Self::new(origin);
        seq.initial_indicator = initial_indicator;
        for e in events {
            seq.push(e)?;
        }
        Ok(seq)
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn initial_indicator(&self) -> Option<usize> {
        self.initial_indicator
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, event: JumpEvent) -> Result<()> {
        if !event.time.is_finite() || event.time <= self.last_time() {
            return Err(Error::contract(format!(
                "jump at {} does not follow {}",
                event.time,
                self.last_time()
            )));
        }
        self.head = Some(Arc::new(Node {
            event,
            prev: self.head.take(),
        }));
        self.len += 1;
        Ok(())
    }

    pub fn last(&self) -> Option<JumpEvent> {
        self.head.as_ref().map(|n| n.event)
    }

    /// `τ_{K_n}`, or the origin when no jump has occurred.
    pub fn last_time(&self) -> f64 {
        self.last().map_or(self.origin, |e| e.time)
    }

    /// Indicator in force after the latest jump (`c₀` if none).
    pub fn last_indicator(&self) -> Option<usize> {
        match self.last() {
            Some(e) => e.indicator,
            None => self.initial_indicator,
        }
    }

    fn iter_rev(&self) -> impl Iterator<Item = JumpEvent> + '_ {
        let mut cur = self.head.as_deref();
        std::iter::from_fn(move || {
            let node = cur?;
            cur = node.prev.as_deref();
            Some(node.event)
        })
    }

    /// All events in time order.
    pub fn events(&self) -> Vec<JumpEvent> {
        let mut v: Vec<_> = self.iter_rev().collect();
        v.reverse();
        v
    }

    pub fn times(&self) -> Vec<f64> {
        self.events().into_iter().map(|e| e.time).collect()
    }

    /// Events with `t_prev < τ ≤ t_n`, in time order.
    pub fn events_in(&self, window: (f64, f64)) -> Vec<JumpEvent> {
        let mut v: Vec<_> = self
            .iter_rev()
            .skip_while(|e| e.time > window.1)
            .take_while(|e| e.time > window.0)
            .collect();
        v.reverse();
        v
    }

    /// Latest event at or before `t` (time and indicator), falling back to
    /// the origin and `c₀`.
    pub fn state_at(&self, t: f64) -> (f64, Option<usize>) {
        match self.iter_rev().find(|e| e.time <= t) {
            Some(e) => (e.time, e.indicator),
            None => (self.origin, self.initial_indicator),
        }
    }
}

impl PartialEq for JumpSequence {
    fn eq(&self, other: &Self) -> bool {
        self.origin == other.origin
            && self.initial_indicator == other.initial_indicator
            && self.len == other.len
            && self.iter_rev().eq(other.iter_rev())
    }
}

impl fmt::Debug for JumpSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JumpSequence")
            .field("origin", &self.origin)
            .field("initial_indicator", &self.initial_indicator)
            .field("events", &self.events())
            .finish()
    }
}

impl Drop for JumpSequence {
    fn drop(&mut self) {
        // Unlink uniquely owned nodes iteratively; long histories would
        // otherwise recurse once per node.
        let mut cur = self.head.take();
        while let Some(node) = cur {
            match Arc::try_unwrap(node) {
                Ok(mut n) => cur = n.prev.take(),
                Err(_) => break,
            }
        }
    }
}

/// Draws the jump times falling in `window = (t_{n-1}, t_n]`, given that
/// the last jump was at `last_jump` and none occurred between it and
/// `max(t_{n-1}, last_jump)`.
///
/// The first jump is obtained by inverting the conditional survival
/// function; later ones are forward-simulated inter-arrivals. The draw that
/// overshoots `t_n` is discarded.
pub fn sample_window<R: Rng + ?Sized>(
    prior: &JumpPrior,
    last_jump: f64,
    window: (f64, f64),
    rng: &mut R,
) -> Result<Vec<f64>> {
    prior.validate()?;
    let (t_prev, t_n) = window;
    if !(last_jump < t_n) || !(t_prev < t_n) {
        return Err(Error::contract(format!(
            "last jump {last_jump} with window ({t_prev}, {t_n}]"
        )));
    }
    let start = t_prev.max(last_jump);
    let ls_start = prior.log_survival(start - last_jump);
    let ls_end = prior.log_survival(t_n - last_jump);
    let u: f64 = rng.random();
    let log_u = u.ln();
    if log_u <= ls_end - ls_start {
        return Ok(Vec::new());
    }

    // Solve S(x - last_jump) = u S(start - last_jump) for x in (start, t_n).
    let target = ls_start + log_u;
    let first = match *prior {
        JumpPrior::Exponential { mean } => last_jump - mean * target,
        JumpPrior::Gamma { .. } => {
            let (mut lo, mut hi) = (start, t_n);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if prior.log_survival(mid - last_jump) > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
                    break;
                }
            }
            0.5 * (lo + hi)
        }
    };
    let first = first.clamp(start, t_n);
    // A draw landing exactly on the window start would violate (t_prev, t_n].
    let first = if first <= t_prev {
        t_prev + (t_n - t_prev) * 1e-12
    } else {
        first
    };

    let mut times = vec![first];
    let mut cur = first;
    loop {
        let next = cur + prior.sample(rng);
        if next > t_n {
            break;
        }
        if next > cur {
            times.push(next);
        }
        cur = next;
    }
    Ok(times)
}

/// Log of `p(θ_{t_{n-1}:t_n} | θ_{t_0:t_{n-1}})`: the survival ratio times
/// the inter-arrival densities of jumps in the window, times the indicator
/// transition probabilities when the sequence carries indicators.
pub fn window_log_density(
    prior: &JumpPrior,
    sequence: &JumpSequence,
    window: (f64, f64),
    destinations: Option<&DestinationSet>,
) -> Result<f64> {
    prior.validate()?;
    let (t_prev, t_n) = window;
    if !(t_prev < t_n) || t_prev < sequence.origin() {
        return Err(Error::contract(format!(
            "window ({t_prev}, {t_n}] against origin {}",
            sequence.origin()
        )));
    }
    let (last_before, mut c_prev) = sequence.state_at(t_prev);
    let in_window = sequence.events_in(window);

    let mut logp = -prior.log_survival(t_prev - last_before);
    let mut tau_prev = last_before;
    for e in &in_window {
        logp += prior.log_pdf(e.time - tau_prev);
        match (destinations, e.indicator) {
            (Some(dest), Some(c)) => {
                let from = c_prev.ok_or_else(|| {
                    Error::contract("indicator event without a preceding indicator")
                })?;
                logp += dest.transition_prob(from, c)?.ln();
                c_prev = Some(c);
            }
            (None, None) => {}
            (Some(_), None) => {
                return Err(Error::contract(format!(
                    "jump at {} lacks an indicator",
                    e.time
                )))
            }
            (None, Some(_)) => {
                return Err(Error::contract(
                    "indicator events scored without a destination set",
                ))
            }
        }
        tau_prev = e.time;
    }
    logp += prior.log_survival(t_n - tau_prev);
    Ok(logp)
}

/// Categorical draw from row `c_prev` of the indicator transition matrix.
pub fn sample_indicator<R: Rng + ?Sized>(
    destinations: &DestinationSet,
    c_prev: usize,
    rng: &mut R,
) -> Result<usize> {
    let row = destinations.transition_row(c_prev)?;
    let u: f64 = rng.random();
    Ok(categorical(row, u))
}

/// Index `k` with `Σ_{j<k} p_j ≤ u < Σ_{j≤k} p_j`, skipping zero-mass
/// entries at the boundary.
pub(crate) fn categorical(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = k;
            acc += p;
            if target < acc {
                return k;
            }
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Destination, DestinationSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state_uniform() -> DestinationSet {
        DestinationSet::new(
            vec![Destination::point(vec![100.0])],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn survival_edge_values() {
        let g = JumpPrior::gamma(2.0, 5.0).unwrap();
        assert_eq!(survival(&g, 3.0, 3.0).unwrap(), 1.0);
        let e = JumpPrior::gamma(1.0, 4.0).unwrap();
        for dt in [0.5, 3.0, 12.0] {
            let s = survival(&e, 10.0 + dt, 10.0).unwrap();
            assert!((s - (-dt / 4.0f64).exp()).abs() < 1e-13);
        }
        assert!(matches!(survival(&g, 1.0, 2.0), Err(Error::Contract(_))));
    }

    #[test]
    fn gamma_survival_matches_tail_quadrature() {
        let g = JumpPrior::gamma(2.0, 5.0).unwrap();
        // Composite Simpson on [10, 400] of the Gamma(2, 5) density; the
        // remaining tail mass is below e^{-80}.
        let (a, b, n) = (10.0f64, 400.0f64, 200_000usize);
        let h = (b - a) / n as f64;
        let pdf = |x: f64| x / 25.0 * (-x / 5.0).exp();
        let mut acc = pdf(a) + pdf(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * pdf(a + i as f64 * h);
        }
        let tail = acc * h / 3.0;
        let s = survival(&g, 10.0, 0.0).unwrap();
        assert!((s - tail).abs() < 1e-10, "{s} vs {tail}");
    }

    #[test]
    fn survival_non_increasing() {
        let g = JumpPrior::gamma(3.0, 2.0).unwrap();
        let mut prev = 1.0;
        for i in 0..400 {
            let s = survival(&g, i as f64 * 0.25, 0.0).unwrap();
            assert!(s <= prev + 1e-15);
            prev = s;
        }
        // Far tail stays finite in log space.
        assert!(g.log_survival(5000.0).is_finite());
    }

    #[test]
    fn huge_interarrival_gives_no_jumps() {
        let p = JumpPrior::gamma(1e6, 1e-6 * 1e9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert!(sample_window(&p, 0.0, (0.0, 10.0), &mut rng)
                .unwrap()
                .is_empty());
        }
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let p = JumpPrior::gamma(2.0, 5.0).unwrap();
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            sample_window(&p, 0.0, (0.0, 100.0), &mut rng).unwrap()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn mean_jump_count_matches_renewal_function() {
        // Gamma(2, scale 5) inter-arrivals are Erlang-2 with rate λ = 0.2;
        // starting at a renewal, m(t) = λt/2 − 1/4 + e^{−2λt}/4.
        let lambda: f64 = 0.2;
        let t: f64 = 100.0;
        let expected = lambda * t / 2.0 - 0.25 + (-2.0 * lambda * t).exp() / 4.0;
        let p = JumpPrior::gamma(2.0, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let runs = 10_000;
        let counts: Vec<f64> = (0..runs)
            .map(|_| sample_window(&p, 0.0, (0.0, t), &mut rng).unwrap().len() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / runs as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
        let se = (var / runs as f64).sqrt();
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "{mean} vs {expected} (se {se})"
        );
    }

    #[test]
    fn window_sampling_respects_elapsed_time() {
        // Conditional on 30 s without a jump, Gamma(4, 2) has hazard close
        // to its asymptote 1/2, so a 1 s window almost always jumps; an
        // unconditional restart would give P(jump) ≈ 2e-3 instead.
        let p = JumpPrior::gamma(4.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4000;
        let hits = (0..n)
            .filter(|_| {
                !sample_window(&p, 0.0, (30.0, 31.0), &mut rng)
                    .unwrap()
                    .is_empty()
            })
            .count();
        let s0 = p.survival_fn(30.0);
        let s1 = p.survival_fn(31.0);
        let expected = 1.0 - s1 / s0;
        let frac = hits as f64 / n as f64;
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((frac - expected).abs() < 3.0 * se, "{frac} vs {expected}");
    }

    #[test]
    fn window_density_without_jumps_is_survival_ratio() {
        let p = JumpPrior::gamma(2.0, 5.0).unwrap();
        let mut seq = JumpSequence::new(0.0);
        seq.push(JumpEvent::at(1.5)).unwrap();
        let got = window_log_density(&p, &seq, (4.0, 9.0), None).unwrap();
        let want = p.log_survival(7.5) - p.log_survival(2.5);
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn window_density_chain_rule() {
        let p = JumpPrior::gamma(1.7, 3.0).unwrap();
        let seq =
            JumpSequence::from_events(0.0, None, [1.0, 2.5, 4.0, 7.25].map(JumpEvent::at)).unwrap();
        let ab = window_log_density(&p, &seq, (0.5, 3.0), None).unwrap();
        let bc = window_log_density(&p, &seq, (3.0, 8.0), None).unwrap();
        let ac = window_log_density(&p, &seq, (0.5, 8.0), None).unwrap();
        assert!((ab + bc - ac).abs() < 1e-12);
    }

    #[test]
    fn uniform_indicator_row_adds_log_half() {
        let p = JumpPrior::gamma(2.0, 5.0).unwrap();
        let dest = two_state_uniform();
        let with =
            JumpSequence::from_events(0.0, Some(0), [JumpEvent::with_indicator(2.0, 1)]).unwrap();
        let without = JumpSequence::from_events(0.0, None, [JumpEvent::at(2.0)]).unwrap();
        let a = window_log_density(&p, &with, (1.0, 3.0), Some(&dest)).unwrap();
        let b = window_log_density(&p, &without, (1.0, 3.0), None).unwrap();
        assert!((a - b - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn inconsistent_sequences_rejected() {
        let p = JumpPrior::gamma(2.0, 5.0).unwrap();
        let dest = two_state_uniform();
        let bare = JumpSequence::from_events(0.0, None, [JumpEvent::at(2.0)]).unwrap();
        assert!(window_log_density(&p, &bare, (1.0, 3.0), Some(&dest)).is_err());
        let tagged =
            JumpSequence::from_events(0.0, Some(0), [JumpEvent::with_indicator(2.0, 1)]).unwrap();
        assert!(window_log_density(&p, &tagged, (1.0, 3.0), None).is_err());
        let mut s = JumpSequence::new(0.0);
        assert!(s.push(JumpEvent::at(0.0)).is_err());
        s.push(JumpEvent::at(1.0)).unwrap();
        assert!(s.push(JumpEvent::at(0.5)).is_err());
    }

    /// Importance check against a homogeneous Poisson proposal: the mean of
    /// p(θ)/q(θ) over q-samples estimates the total mass of p.
    #[test]
    fn window_density_integrates_to_one() {
        let p = JumpPrior::gamma(2.0, 1.5).unwrap();
        let q_rate = 0.6_f64;
        let window = (1.0, 4.0);
        let last = 0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let mut ratios = Vec::with_capacity(n);
        for _ in 0..n {
            let mut times = Vec::new();
            let mut t = window.0;
            loop {
                t += Exp::new(q_rate).unwrap().sample(&mut rng);
                if t > window.1 {
                    break;
                }
                times.push(t);
            }
            let log_q = times.len() as f64 * q_rate.ln() - q_rate * (window.1 - window.0);
            let mut seq = JumpSequence::new(0.0);
            seq.push(JumpEvent::at(last)).unwrap();
            for &t in &times {
                seq.push(JumpEvent::at(t)).unwrap();
            }
            let log_p = window_log_density(&p, &seq, window, None).unwrap();
            ratios.push((log_p - log_q).exp());
        }
        let mean = ratios.iter().sum::<f64>() / n as f64;
        let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "{mean} ± {se}");
    }

    /// Samples from the prior, scored against a Poisson reference: the mean
    /// of q/p under p is q's total mass, 1.
    #[test]
    fn sampler_agrees_with_its_density() {
        let p = JumpPrior::gamma(2.0, 1.5).unwrap();
        let q_rate = 0.5_f64;
        let window = (1.0, 4.0);
        let last = 0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 200_000;
        let mut ratios = Vec::with_capacity(n);
        for _ in 0..n {
            let times = sample_window(&p, last, window, &mut rng).unwrap();
            let mut seq = JumpSequence::new(0.0);
            seq.push(JumpEvent::at(last)).unwrap();
            for &t in &times {
                seq.push(JumpEvent::at(t)).unwrap();
            }
            let log_p = window_log_density(&p, &seq, window, None).unwrap();
            let log_q = times.len() as f64 * q_rate.ln() - q_rate * (window.1 - window.0);
            ratios.push((log_q - log_p).exp());
        }
        let mean = ratios.iter().sum::<f64>() / n as f64;
        let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn indicator_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ident = DestinationSet::new(
            vec![Destination::point(vec![0.0]), Destination::point(vec![1.0])],
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            vec![1.0, 0.0, 0.0],
        )
        .unwrap();
        for c in 0..3 {
            for _ in 0..50 {
                assert_eq!(sample_indicator(&ident, c, &mut rng).unwrap(), c);
            }
        }
        let to_null = DestinationSet::new(
            vec![Destination::point(vec![0.0])],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![0.5, 0.5],
        )
        .unwrap();
        for _ in 0..50 {
            assert_eq!(sample_indicator(&to_null, 1, &mut rng).unwrap(), 0);
        }
        assert!(sample_indicator(&to_null, 2, &mut rng).is_err());
    }

    #[test]
    fn indicator_frequencies_match_row() {
        let row = vec![0.1, 0.2, 0.3, 0.4];
        let dest = DestinationSet::new(
            (0..3).map(|j| Destination::point(vec![j as f64])).collect(),
            vec![row.clone(); 4],
            vec![0.25; 4],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_indicator(&dest, 2, &mut rng).unwrap()] += 1;
        }
        for (k, &p) in row.iter().enumerate() {
            let f = counts[k] as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((f - p).abs() < 3.0 * se, "{k}: {f} vs {p}");
        }
    }

    #[test]
    fn sequence_queries() {
        let seq = JumpSequence::from_events(
            0.0,
            Some(2),
            [
                JumpEvent::with_indicator(1.0, 1),
                JumpEvent::with_indicator(3.0, 0),
            ],
        )
        .unwrap();
        assert_eq!(seq.last_indicator(), Some(0));
        assert_eq!(seq.state_at(2.0), (1.0, Some(1)));
        assert_eq!(seq.state_at(0.5), (0.0, Some(2)));
        assert_eq!(seq.events_in((1.0, 3.0)).len(), 1);
        assert_eq!(seq.events_in((0.0, 3.0)).len(), 2);
        let copy = seq.clone();
        assert_eq!(copy, seq);
    }
}
