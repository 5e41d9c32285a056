//! Reference computations used as oracles. Kept deliberately naive.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Truncated Taylor series, only for small `‖A h‖`.
pub fn taylor_expm(a: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * a * (h / k as f64);
        sum += &term;
    }
    sum
}

/// `e^{Aτ}` by Taylor on `τ / 2^s` followed by repeated squaring.
pub fn reference_expm(a: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let norm = a.iter().map(|x| x.abs()).sum::<f64>() * tau.abs();
    let s = if norm > 0.1 {
        (norm / 0.1).log2().ceil() as i32
    } else {
        0
    };
    let mut e = taylor_expm(a, tau / 2f64.powi(s));
    for _ in 0..s {
        e = &e * &e;
    }
    e
}

/// `∫₀^τ e^{Au} L Lᵀ e^{Aᵀu} du` by composite Simpson on `nodes` intervals.
pub fn quadrature_q(a: &DMatrix<f64>, l: &DMatrix<f64>, tau: f64, nodes: usize) -> DMatrix<f64> {
    assert!(nodes % 2 == 0);
    let n = a.nrows();
    let h = tau / nodes as f64;
    let step = reference_expm(a, h);
    let qc = l * l.transpose();
    let mut e = DMatrix::<f64>::identity(n, n);
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for k in 0..=nodes {
        let w = if k == 0 || k == nodes {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += &e * &qc * e.transpose() * w;
        e = &step * &e;
    }
    acc * (h / 3.0)
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        scale * rng.sample::<f64, _>(StandardNormal)
    })
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max() / b.abs().max().max(1e-300)
}

/// Textbook Kalman step with an explicit inverse, for cross-checks.
pub struct Kf {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Kf {
    pub fn predict(&mut self, f: &DMatrix<f64>, offset: &DVector<f64>, q: &DMatrix<f64>) {
        self.mean = f * &self.mean + offset;
        self.cov = f * &self.cov * f.transpose() + q;
    }

    /// Returns the predictive log-likelihood of `y`.
    pub fn update(&mut self, h: &DMatrix<f64>, r: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
        let s = h * &self.cov * h.transpose() + r;
        let s_inv = s.clone().try_inverse().expect("innovation covariance");
        let innov = y - h * &self.mean;
        let k = &self.cov * h.transpose() * &s_inv;
        self.mean = &self.mean + &k * &innov;
        let n = self.cov.nrows();
        self.cov = (DMatrix::<f64>::identity(n, n) - &k * h) * &self.cov;
        let m = y.len() as f64;
        -0.5 * (m * (2.0 * std::f64::consts::PI).ln()
            + s.determinant().ln()
            + (innov.transpose() * s_inv * &innov)[(0, 0)])
    }
}

/// One realisation of a 1-D virtual-leader path by Euler–Maruyama with
/// Normal jumps added to `jump_row` at fixed times.
#[allow(clippy::too_many_arguments)]
pub fn euler_path<R: Rng>(
    rng: &mut R,
    s0: [f64; 3],
    eta: f64,
    rho: f64,
    sigma_x: f64,
    sigma_r: f64,
    jumps: &[f64],
    jump_row: usize,
    mu_j: f64,
    sigma_j: f64,
    tau: f64,
    steps: usize,
) -> [f64; 3] {
    let h = tau / steps as f64;
    let sh = h.sqrt();
    let [mut x, mut v, mut r] = s0;
    let mut next = 0;
    for k in 0..steps {
        let t = (k + 1) as f64 * h;
        let bx: f64 = rng.sample(StandardNormal);
        let br: f64 = rng.sample(StandardNormal);
        let dv = (eta * (r - x) - rho * v) * h + sigma_x * sh * bx;
        x += v * h;
        v += dv;
        r += sigma_r * sh * br;
        while next < jumps.len() && jumps[next] <= t + 1e-12 {
            let z: f64 = rng.sample(StandardNormal);
            let j = mu_j + sigma_j * z;
            if jump_row == 1 {
                v += j;
            } else {
                r += j;
            }
            next += 1;
        }
    }
    [x, v, r]
}
