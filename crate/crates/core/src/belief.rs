//! Gaussian beliefs, the Kalman predict/update pair and Gaussian mixtures.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::models::StateLayout;
use crate::sde::{symmetrise, LinearTransition};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::dim(format!(
                "mean has length {}, covariance is {}×{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::numeric("belief has non-finite entries"));
        }
        Ok(Self {
            mean,
            cov: symmetrise(&cov),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Sub-belief on `indices`.
    pub fn marginal(&self, indices: &[usize]) -> GaussianBelief {
        let mean = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.mean[i]));
        let cov = DMatrix::from_fn(indices.len(), indices.len(), |a, b| {
            self.cov[(indices[a], indices[b])]
        });
        GaussianBelief { mean, cov }
    }

    /// `log N(x; mean, cov)`. Fails if the covariance is not positive definite.
    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::dim(format!(
                "point has length {}, belief {}",
                x.len(),
                self.dim()
            )));
        }
        let chol = Cholesky::new(self.cov.clone())
            .ok_or_else(|| Error::numeric("covariance is not positive definite"))?;
        Ok(gaussian_log_pdf(&chol, &(x - &self.mean)))
    }
}

fn gaussian_log_pdf(chol: &Cholesky<f64, Dyn>, resid: &DVector<f64>) -> f64 {
    let z = chol
        .l()
        .solve_lower_triangular(resid)
        .expect("cholesky factor is nonsingular");
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    -0.5 * (resid.len() as f64 * LN_2PI + log_det + z.norm_squared())
}

/// `y = H s + v`, `v ~ N(0, R)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationModel {
    h: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl ObservationModel {
    pub fn new(h: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if r.nrows() != h.nrows() || r.ncols() != h.nrows() {
            return Err(Error::dim(format!(
                "H is {}×{}, R is {}×{}",
                h.nrows(),
                h.ncols(),
                r.nrows(),
                r.ncols()
            )));
        }
        let r = symmetrise(&r);
        if Cholesky::new(r.clone()).is_none() {
            return Err(Error::param(
                "measurement covariance must be positive definite",
            ));
        }
        Ok(Self { h, r })
    }

    /// Position-only observation with isotropic noise `sigma`.
    pub fn positions(layout: StateLayout, sigma: f64) -> Result<Self> {
        let r = DMatrix::identity(layout.dims, layout.dims) * (sigma * sigma);
        Self::new(layout.position_selector(), r)
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.h.ncols()
    }
}

pub fn predict(belief: &GaussianBelief, tr: &LinearTransition) -> Result<GaussianBelief> {
    if tr.dim() != belief.dim() {
        return Err(Error::dim(format!(
            "transition is {}-dimensional, belief {}",
            tr.dim(),
            belief.dim()
        )));
    }
    let mean = &tr.f * &belief.mean + &tr.offset;
    let cov = &tr.f * &belief.cov * tr.f.transpose() + &tr.cov;
    Ok(GaussianBelief {
        mean,
        cov: symmetrise(&cov),
    })
}

/// Kalman update. Returns the posterior and `log p(y | past)`.
///
/// The covariance uses the Joseph form so the posterior stays symmetric
/// positive semi-definite even when `R` is small relative to `P`.
pub fn update(
    belief: &GaussianBelief,
    obs: &ObservationModel,
    y: &DVector<f64>,
) -> Result<(GaussianBelief, f64)> {
    if obs.state_dim() != belief.dim() || y.len() != obs.obs_dim() {
        return Err(Error::dim(format!(
            "observation model {}×{}, belief {}, measurement {}",
            obs.obs_dim(),
            obs.state_dim(),
            belief.dim(),
            y.len()
        )));
    }
    let h = &obs.h;
    let ph_t = &belief.cov * h.transpose();
    let s = symmetrise(&(h * &ph_t + &obs.r));
    let chol = Cholesky::new(s)
        .ok_or_else(|| Error::numeric("innovation covariance is not positive definite"))?;
    let innov = y - h * &belief.mean;
    let log_lik = gaussian_log_pdf(&chol, &innov);
    // K = P Hᵀ S⁻¹, solved as S Kᵀ = H P.
    let gain = chol.solve(&ph_t.transpose()).transpose();
    let mean = &belief.mean + &gain * innov;
    let n = belief.dim();
    let i_kh = DMatrix::identity(n, n) - &gain * h;
    let cov = &i_kh * &belief.cov * i_kh.transpose() + &gain * &obs.r * gain.transpose();
    if !log_lik.is_finite() || mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("Kalman update produced non-finite values"));
    }
    Ok((
        GaussianBelief {
            mean,
            cov: symmetrise(&cov),
        },
        log_lik,
    ))
}

/// Weighted sum of Gaussians. Weights are normalised on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<GaussianBelief>,
}

impl GaussianMixture {
    /// Build from log-weights (any scale).
    pub fn from_log_weights(log_weights: &[f64], components: Vec<GaussianBelief>) -> Result<Self> {
        if log_weights.len() != components.len() || components.is_empty() {
            return Err(Error::dim(format!(
                "{} weights for {} components",
                log_weights.len(),
                components.len()
            )));
        }
        let max = log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::numeric(
                "mixture has no component with positive weight",
            ));
        }
        let w: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
        Self::new(w, components)
    }

    pub fn new(weights: Vec<f64>, components: Vec<GaussianBelief>) -> Result<Self> {
        if weights.len() != components.len() || components.is_empty() {
            return Err(Error::dim(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        let n = components[0].dim();
        if components.iter().any(|c| c.dim() != n) {
            return Err(Error::dim("mixture components differ in dimension"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::numeric("mixture weights must be finite and ≥ 0"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::numeric("mixture weights sum to zero"));
        }
        Ok(Self {
            weights: weights.into_iter().map(|w| w / total).collect(),
            components,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianBelief] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for (w, c) in self.weights.iter().zip(&self.components) {
            m.axpy(*w, &c.mean, 1.0);
        }
        m
    }

    /// Moment-matched covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let n = self.dim();
        let mut p = DMatrix::zeros(n, n);
        for (w, c) in self.weights.iter().zip(&self.components) {
            let d = &c.mean - &m;
            p += (&c.cov + &d * d.transpose()) * *w;
        }
        symmetrise(&p)
    }

    pub fn marginal(&self, indices: &[usize]) -> Result<GaussianMixture> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.dim()) {
            return Err(Error::dim(format!(
                "index {i} out of range for dimension {}",
                self.dim()
            )));
        }
        Ok(GaussianMixture {
            weights: self.weights.clone(),
            components: self
                .components
                .iter()
                .map(|c| c.marginal(indices))
                .collect(),
        })
    }

    /// Mixture density at `x`. Components with singular covariance are
    /// treated as point masses and contribute nothing to the density.
    pub fn pdf(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::dim(format!(
                "point has length {}, mixture {}",
                x.len(),
                self.dim()
            )));
        }
        let mut total = 0.0;
        for (w, c) in self.weights.iter().zip(&self.components) {
            if *w == 0.0 {
                continue;
            }
            if let Some(chol) = Cholesky::new(c.cov.clone()) {
                total += w * gaussian_log_pdf(&chol, &(x - &c.mean)).exp();
            }
        }
        Ok(total)
    }
}
