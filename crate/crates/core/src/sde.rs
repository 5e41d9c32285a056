//! Dense kernels for discretising linear time-invariant SDEs
//! `ds = A s dt + L dB + h_J dW`.
//!
//! The matrix exponential uses Padé scaling-and-squaring (Higham 2005), and
//! the Brownian process covariance is obtained from the matrix fraction
//! decomposition of the covariance ODE `P' = A P + P Aᵀ + L Lᵀ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Discrete transition `s_n = F s_{n-1} + offset + w`, `w ~ N(0, cov)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearTransition {
    pub f: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl LinearTransition {
    pub fn identity(n: usize) -> Self {
        Self {
            f: DMatrix::identity(n, n),
            offset: DVector::zeros(n),
            cov: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.f.nrows()
    }

    /// The transition that applies `self` first and then `next`.
    pub fn then(&self, next: &LinearTransition) -> LinearTransition {
        let f = &next.f * &self.f;
        let offset = &next.f * &self.offset + &next.offset;
        let cov = symmetrise(&(&next.f * &self.cov * next.f.transpose() + &next.cov));
        LinearTransition { f, offset, cov }
    }

    pub fn check(&self) -> Result<()> {
        let n = self.f.nrows();
        if !self.f.is_square() || self.offset.len() != n || self.cov.shape() != (n, n) {
            return Err(Error::dim(format!(
                "transition F {:?}, offset {}, cov {:?}",
                self.f.shape(),
                self.offset.len(),
                self.cov.shape()
            )));
        }
        Ok(())
    }
}

// Padé coefficients b_0..b_m for degrees 3, 5, 7, 9, 13.
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norm for which each Padé degree meets unit roundoff.
const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539398330063230e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068;
const THETA13: f64 = 5.371920351148152;

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(format!("{what} has non-finite entries")))
    }
}

/// `e^{A τ}`.
pub fn expm(a: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::dim(format!("expm of non-square {:?}", a.shape())));
    }
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::param(format!("expm duration {tau}")));
    }
    check_finite(a, "expm input")?;
    let n = a.nrows();
    if tau == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    expm_scaled(&(a * tau))
}

fn expm_scaled(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let nrm = norm1(a);
    if nrm == 0.0 {
        return Ok(ident);
    }

    let a2 = a * a;
    let (u, v, squarings) = if nrm <= THETA3 {
        let (u, v) = pade_low(a, &a2, &PADE3, &ident);
        (u, v, 0)
    } else if nrm <= THETA5 {
        let (u, v) = pade_low(a, &a2, &PADE5, &ident);
        (u, v, 0)
    } else if nrm <= THETA7 {
        let (u, v) = pade_low(a, &a2, &PADE7, &ident);
        (u, v, 0)
    } else if nrm <= THETA9 {
        let (u, v) = pade_low(a, &a2, &PADE9, &ident);
        (u, v, 0)
    } else {
        let s = (nrm / THETA13).log2().ceil().max(0.0) as i32;
        let scale = 2f64.powi(-s);
        let a = a * scale;
        let a2 = &a2 * (scale * scale);
        let (u, v) = pade13(&a, &a2, &ident);
        (u, v, s)
    };

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::numeric("singular Padé denominator in expm"))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    check_finite(&r, "expm result")?;
    Ok(r)
}

fn pade_low(
    a: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    b: &[f64],
    ident: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    // b has even length m + 1; odd coefficients feed U, even ones V.
    let mut power = ident.clone();
    let mut u_inner = ident * b[1];
    let mut v = ident * b[0];
    let mut k = 2;
    while k < b.len() {
        power = &power * a2;
        v += &power * b[k];
        u_inner += &power * b[k + 1];
        k += 2;
    }
    (a * u_inner, v)
}

fn pade13(
    a: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    ident: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &PADE13;
    let a4 = a2 * a2;
    let a6 = &a4 * a2;
    let u_hi = &a6 * (&a6 * b[13] + &a4 * b[11] + a2 * b[9]);
    let u = a * (u_hi + &a6 * b[7] + &a4 * b[5] + a2 * b[3] + ident * b[1]);
    let v_hi = &a6 * (&a6 * b[12] + &a4 * b[10] + a2 * b[8]);
    let v = v_hi + &a6 * b[6] + &a4 * b[4] + a2 * b[2] + ident * b[0];
    (u, v)
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrise(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetrises and clamps negative eigenvalues to zero. The matrix is only
/// rebuilt from its eigendecomposition when a negative eigenvalue exists.
pub fn nearest_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrise(m);
    if sym.nrows() == 0 {
        return sym;
    }
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let rebuilt =
        &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    symmetrise(&rebuilt)
}

/// Segments with `‖A‖₁ τ` above this are computed by covariance doubling,
/// keeping the augmented exponential well conditioned.
const MFD_MAX_NORM: f64 = 2.0;

/// `Q_τ = ∫₀^τ e^{A(τ−u)} L Lᵀ e^{Aᵀ(τ−u)} du`, returned symmetric PSD.
pub fn process_covariance(a: &DMatrix<f64>, l: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    Ok(discretise(a, l, tau)?.1)
}

/// `(e^{Aτ}, Q_τ)` in one pass.
pub fn discretise(
    a: &DMatrix<f64>,
    l: &DMatrix<f64>,
    tau: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !a.is_square() {
        return Err(Error::dim(format!(
            "drift matrix {:?} not square",
            a.shape()
        )));
    }
    let n = a.nrows();
    if l.nrows() != n {
        return Err(Error::dim(format!(
            "diffusion matrix has {} rows, drift is {n}x{n}",
            l.nrows()
        )));
    }
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::param(format!("discretisation step {tau}")));
    }
    check_finite(a, "drift matrix")?;
    check_finite(l, "diffusion matrix")?;
    if tau == 0.0 {
        return Ok((DMatrix::identity(n, n), DMatrix::zeros(n, n)));
    }

    let nrm = norm1(a) * tau;
    let doublings = if nrm > MFD_MAX_NORM {
        (nrm / MFD_MAX_NORM).log2().ceil() as i32
    } else {
        0
    };
    let h = tau * 2f64.powi(-doublings);

    let qc = l * l.transpose();
    let (mut f, mut q) = mfd_segment(a, &qc, h)?;
    for _ in 0..doublings {
        q = &f * &q * f.transpose() + &q;
        f = &f * &f;
    }
    check_finite(&q, "process covariance")?;
    Ok((f, nearest_psd(&q)))
}

/// Matrix fraction decomposition over one short segment:
/// `exp([[A, LLᵀ], [0, −Aᵀ]] h) [0; I] = [C; D]`, `Q = C D⁻¹ = C e^{Aᵀh}`.
fn mfd_segment(
    a: &DMatrix<f64>,
    qc: &DMatrix<f64>,
    h: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let mut aug = DMatrix::<f64>::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, n)).copy_from(qc);
    aug.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let e = expm(&aug, h)?;
    let f = e.view((0, 0), (n, n)).into_owned();
    let c = e.view((0, n), (n, n)).into_owned();
    let q = &c * f.transpose();
    Ok((f, symmetrise(&q)))
}

/// Mean offset and covariance increment contributed by jumps at
/// `jump_times` within `(t_prev, t_n]`:
///
/// `Σ_k μ_J e^{A(t_n−τ_k)} h_J 1` and `σ_J² Σ_k e^{A(t_n−τ_k)} h_J h_Jᵀ e^{Aᵀ(t_n−τ_k)}`.
///
/// `h_jump` is `n × m`: each column receives an independent `N(μ_J, σ_J²)`
/// jump at every event.
pub fn jump_contributions(
    a: &DMatrix<f64>,
    h_jump: &DMatrix<f64>,
    jump_times: &[f64],
    window: (f64, f64),
    mu_j: f64,
    sigma_j: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if !a.is_square() || h_jump.nrows() != n {
        return Err(Error::dim(format!(
            "drift {:?} with jump loading {:?}",
            a.shape(),
            h_jump.shape()
        )));
    }
    if !(sigma_j >= 0.0) {
        return Err(Error::param(format!("jump std {sigma_j}")));
    }
    let (t_prev, t_n) = window;
    let mut mean = DVector::zeros(n);
    let mut cov = DMatrix::zeros(n, n);
    let ones = DVector::from_element(h_jump.ncols(), 1.0);
    for &tau in jump_times {
        if !(tau > t_prev && tau <= t_n) {
            return Err(Error::contract(format!(
                "jump at {tau} outside window ({t_prev}, {t_n}]"
            )));
        }
        let g = expm(a, t_n - tau)? * h_jump;
        mean += &g * &ones * mu_j;
        cov += &g * g.transpose() * (sigma_j * sigma_j);
    }
    Ok((mean, symmetrise(&cov)))
}

/// Places `blocks` along the diagonal of a zero matrix.
pub fn block_diagonal(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrise(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn taylor_oracle(a: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
        // Scale so the series converges fast, sum 30 terms, square back.
        let n = a.nrows();
        let s = 8;
        let m = a * (tau / 2f64.powi(s));
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &m / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    fn baseline_a(eta: f64, rho: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -eta, -rho, eta, 0.0, 0.0, 0.0])
    }

    #[test]
    fn expm_zero_duration_is_identity() {
        let a = baseline_a(3.0, 2.0);
        assert_eq!(expm(&a, 0.0).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn expm_matches_taylor_series() {
        let a = baseline_a(1.0, 0.5);
        let got = expm(&a, 0.1).unwrap();
        let want = taylor_oracle(&a, 0.1);
        assert!((got - want).amax() < 1e-10);
    }

    #[test]
    fn expm_large_norm_uses_squaring() {
        let a = baseline_a(4.0, 3.0);
        let got = expm(&a, 20.0).unwrap();
        let want = taylor_oracle(&a, 20.0);
        assert!((&got - &want).amax() < 1e-9 * want.amax().max(1.0));
    }

    #[test]
    fn expm_nilpotent_closed_form() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        for &tau in &[0.3, 1.0, 17.5] {
            let got = expm(&a, tau).unwrap();
            assert_relative_eq!(
                got,
                DMatrix::from_row_slice(2, 2, &[1.0, tau, 0.0, 1.0]),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn expm_rejects_bad_input() {
        let rect = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(expm(&rect, 1.0), Err(Error::Dimension(_))));
        let mut a = DMatrix::<f64>::zeros(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(expm(&a, 1.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn process_covariance_trivial_cases() {
        let a = baseline_a(1.0, 0.5);
        let l = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.3]);
        assert_eq!(
            process_covariance(&a, &l, 0.0).unwrap(),
            DMatrix::zeros(3, 3)
        );

        let zero = DMatrix::<f64>::zeros(3, 3);
        let eye = DMatrix::<f64>::identity(3, 3);
        let q = process_covariance(&zero, &eye, 2.0).unwrap();
        assert_relative_eq!(q, eye * 2.0, epsilon = 1e-14);
    }

    #[test]
    fn process_covariance_matches_trapezoid() {
        let a = baseline_a(1.0, 0.5);
        let l = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.3]);
        let tau = 0.5;
        let nodes = 10_000;
        let h = tau / nodes as f64;
        let qc = &l * l.transpose();
        let mut acc = DMatrix::<f64>::zeros(3, 3);
        for i in 0..=nodes {
            let e = taylor_oracle(&a, tau - i as f64 * h);
            let w = if i == 0 || i == nodes { 0.5 } else { 1.0 };
            acc += (&e * &qc * e.transpose()) * (w * h);
        }
        let got = process_covariance(&a, &l, tau).unwrap();
        assert!((got - acc).amax() < 1e-8);
    }

    #[test]
    fn process_covariance_long_horizon_is_psd() {
        let a = baseline_a(2.0, 1.5);
        let l = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 14.0, 0.0, 0.0, 3.0]);
        let q = process_covariance(&a, &l, 250.0).unwrap();
        assert!(min_eigenvalue(&q) >= -1e-10 * q.amax());
        assert_eq!(q, q.transpose());
    }

    #[test]
    fn dimension_mismatch_in_covariance() {
        let a = baseline_a(1.0, 1.0);
        let l = DMatrix::<f64>::zeros(2, 1);
        assert!(matches!(
            process_covariance(&a, &l, 1.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn jump_terms_empty_and_boundary() {
        let a = baseline_a(1.0, 0.5);
        let h = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        let (m, c) = jump_contributions(&a, &h, &[], (0.0, 1.0), 2.0, 3.0).unwrap();
        assert_eq!(m, DVector::zeros(3));
        assert_eq!(c, DMatrix::zeros(3, 3));

        let (m, c) = jump_contributions(&a, &h, &[1.0], (0.0, 1.0), 2.0, 3.0).unwrap();
        assert_eq!(m, DVector::from_column_slice(&[0.0, 0.0, 2.0]));
        assert_eq!(c, &h * h.transpose() * 9.0);
    }

    #[test]
    fn jump_terms_are_additive() {
        let a = baseline_a(0.7, 0.4);
        let h = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let w = (1.0, 3.0);
        let (m1, c1) = jump_contributions(&a, &h, &[1.4], w, 0.5, 4.0).unwrap();
        let (m2, c2) = jump_contributions(&a, &h, &[2.6], w, 0.5, 4.0).unwrap();
        let (m, c) = jump_contributions(&a, &h, &[1.4, 2.6], w, 0.5, 4.0).unwrap();
        assert_relative_eq!(m, m1 + m2, epsilon = 1e-13);
        assert_relative_eq!(c, c1 + c2, epsilon = 1e-12);
    }

    #[test]
    fn jump_outside_window_rejected() {
        let a = baseline_a(1.0, 0.5);
        let h = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        for t in [0.0, 1.5, -1.0] {
            let r = jump_contributions(&a, &h, &[t], (0.0, 1.0), 0.0, 1.0);
            assert!(matches!(r, Err(Error::Contract(_))), "{t}");
        }
    }

    #[test]
    fn block_diagonal_layout() {
        let a = DMatrix::from_element(2, 1, 1.0);
        let b = DMatrix::from_element(1, 2, 2.0);
        let m = block_diagonal(&[a, b]);
        assert_eq!(m.shape(), (3, 3));
        assert_eq!(m[(2, 1)], 2.0);
        assert_eq!(m[(0, 1)], 0.0);
    }
}
