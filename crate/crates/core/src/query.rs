//! Intent queries on a filtered posterior.

use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::belief::{GaussianBelief, GaussianMixture};
use crate::error::{Error, Result};
use crate::filter::ParticleSet;
use crate::models::StateLayout;

/// Axis-aligned box, one `(lower, upper)` pair per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::param(format!(
                "region has {} lower and {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        for (d, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || !(lo < hi) {
                return Err(Error::param(format!(
                    "region axis {d}: [{lo}, {hi}] is empty"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

impl FromStr for Region {
    type Err = Error;

    /// `"xlo,xhi,ylo,yhi[,zlo,zhi]"`.
    fn from_str(s: &str) -> Result<Self> {
        let v = parse_list(s)?;
        if v.len() % 2 != 0 || v.is_empty() {
            return Err(Error::param(format!(
                "region `{s}` needs lower,upper pairs"
            )));
        }
        Region::new(
            v.iter().step_by(2).copied().collect(),
            v.iter().skip(1).step_by(2).copied().collect(),
        )
    }
}

/// Parses `"x,y[,z]"`.
pub fn parse_point(s: &str) -> Result<Vec<f64>> {
    let v = parse_list(s)?;
    if v.is_empty() {
        return Err(Error::param("empty point"));
    }
    Ok(v)
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::param(format!("`{p}` is not a number")))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// `Pr(H_j)` for `j = 0..=N_D`, where 0 is the null hypothesis.
    pub probabilities: Vec<f64>,
}

impl HypothesisReport {
    pub fn most_likely(&self) -> usize {
        let mut best = 0;
        for (j, p) in self.probabilities.iter().enumerate() {
            if *p > self.probabilities[best] {
                best = j;
            }
        }
        best
    }
}

/// Marginal over the destination coordinates of a full-state mixture.
pub fn destination_marginal(mix: &GaussianMixture) -> Result<GaussianMixture> {
    let n = mix.dim();
    if n % StateLayout::PER_AXIS != 0 {
        return Err(Error::dim(format!(
            "state dimension {n} is not a whole number of axes"
        )));
    }
    mix.marginal(&StateLayout::new(n / StateLayout::PER_AXIS).intent_indices())
}

/// Mixture density at `point`; only relative values across points are meaningful.
pub fn point_intent_density(marginal: &GaussianMixture, point: &[f64]) -> Result<f64> {
    marginal.pdf(&DVector::from_column_slice(point))
}

/// `Σᵢ ωᵢ Pr_i(region)`.
pub fn region_probability(marginal: &GaussianMixture, region: &Region) -> Result<f64> {
    if region.dims() != marginal.dim() {
        return Err(Error::dim(format!(
            "region has {} axes, marginal {}",
            region.dims(),
            marginal.dim()
        )));
    }
    let mut total = 0.0;
    for (w, c) in marginal.weights().iter().zip(marginal.components()) {
        if *w > 0.0 {
            total += w * box_probability(c, region)?;
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Probability a single Gaussian lands in the box.
pub fn box_probability(g: &GaussianBelief, region: &Region) -> Result<f64> {
    let m = g.dim();
    let diagonal = (0..m).all(|i| (0..m).all(|j| i == j || g.cov[(i, j)] == 0.0));
    if diagonal {
        let phi = std_normal();
        let mut p = 1.0;
        for d in 0..m {
            let (lo, hi, mu, var) = (region.lower[d], region.upper[d], g.mean[d], g.cov[(d, d)]);
            p *= if var > 0.0 {
                let s = var.sqrt();
                interval_mass(&phi, (lo - mu) / s, (hi - mu) / s)
            } else if lo <= mu && mu <= hi {
                1.0
            } else {
                0.0
            };
        }
        return Ok(p);
    }
    genz_box(g, region)
}

/// `Φ(b) − Φ(a)`, evaluated in the tail that keeps precision.
fn interval_mass(phi: &Normal, a: f64, b: f64) -> f64 {
    if a > 0.0 {
        phi.sf(a) - phi.sf(b)
    } else {
        phi.cdf(b) - phi.cdf(a)
    }
}

const QMC_POINTS: usize = 16_384;

/// Genz's sequential conditioning for correlated boxes, integrated with a
/// fixed Kronecker point set so repeated queries give identical answers.
fn genz_box(g: &GaussianBelief, region: &Region) -> Result<f64> {
    let m = g.dim();
    let mut cov = g.cov.clone();
    let chol = match Cholesky::new(cov.clone()) {
        Some(c) => c,
        None => {
            let jitter = 1e-12 * cov.trace().max(f64::MIN_POSITIVE);
            cov += DMatrix::identity(m, m) * jitter;
            Cholesky::new(cov)
                .ok_or_else(|| Error::numeric("region query covariance is not PSD"))?
        }
    };
    let l = chol.l();
    let a: Vec<f64> = (0..m).map(|d| region.lower[d] - g.mean[d]).collect();
    let b: Vec<f64> = (0..m).map(|d| region.upper[d] - g.mean[d]).collect();
    let phi = std_normal();
    let alpha: Vec<f64> = [2f64, 3.0, 5.0, 7.0, 11.0]
        .iter()
        .map(|p| p.sqrt().fract())
        .collect();
    if m > alpha.len() + 1 {
        return Err(Error::dim(format!(
            "correlated region queries support at most {} axes",
            alpha.len() + 1
        )));
    }

    let mut y = vec![0.0; m];
    let mut sum = 0.0;
    for k in 1..=QMC_POINTS {
        let mut f = 1.0;
        for i in 0..m {
            let s: f64 = (0..i).map(|j| l[(i, j)] * y[j]).sum();
            let lo = phi.cdf((a[i] - s) / l[(i, i)]);
            let hi = phi.cdf((b[i] - s) / l[(i, i)]);
            f *= hi - lo;
            if f <= 0.0 {
                break;
            }
            if i + 1 < m {
                let w = (k as f64 * alpha[i]).fract();
                let u = (lo + w * (hi - lo)).clamp(1e-300, 1.0 - 1e-16);
                y[i] = phi.inverse_cdf(u);
            }
        }
        sum += f.max(0.0);
    }
    Ok(sum / QMC_POINTS as f64)
}

/// Posterior probability of each destination hypothesis.
pub fn hypothesis_probabilities(set: &ParticleSet) -> Result<HypothesisReport> {
    let dest =
        set.model().kind().destinations().ok_or_else(|| {
            Error::contract("hypothesis probabilities need a multi-hypothesis model")
        })?;
    if set.time().is_none() {
        return Err(Error::contract(
            "hypothesis probabilities queried before the first step",
        ));
    }
    let mut probabilities = vec![0.0; dest.count() + 1];
    for (p, w) in set.particles().iter().zip(set.weights()) {
        let c = p
            .jumps
            .last_indicator()
            .ok_or_else(|| Error::contract("particle without an indicator"))?;
        probabilities[c] += w;
    }
    let total: f64 = probabilities.iter().sum();
    probabilities.iter_mut().for_each(|p| *p /= total);
    Ok(HypothesisReport { probabilities })
}
