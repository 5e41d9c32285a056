mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vl_intent::belief::{GaussianBelief, GaussianMixture};
use vl_intent::query::{point_intent_density, region_probability, Region};

const BIG: f64 = 1e9;

fn random_mixture(seed: u64, dims: usize, comps: usize, correlated: bool) -> GaussianMixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parts: Vec<GaussianBelief> = (0..comps)
        .map(|_| {
            let m = DVector::from_fn(dims, |_, _| rng.random_range(-50.0..50.0));
            let cov = if correlated {
                let a = common::random_matrix(&mut rng, dims, dims, 10.0);
                &a * a.transpose() + DMatrix::identity(dims, dims) * 4.0
            } else {
                DMatrix::from_diagonal(&DVector::from_fn(dims, |_, _| rng.random_range(1.0..400.0)))
            };
            GaussianBelief::new(m, cov).unwrap()
        })
        .collect();
    let w: Vec<f64> = (0..comps).map(|_| rng.random_range(0.1..1.0)).collect();
    GaussianMixture::new(w, parts).unwrap()
}

fn reference_pdf(mix: &GaussianMixture, x: &DVector<f64>) -> f64 {
    let n = x.len() as f64;
    mix.weights()
        .iter()
        .zip(mix.components())
        .map(|(w, c)| {
            let d = x - &c.mean;
            let inv = c.cov.clone().try_inverse().unwrap();
            let q = (d.transpose() * inv * &d)[(0, 0)];
            w * (-0.5 * q).exp()
                / ((2.0 * std::f64::consts::PI).powf(n) * c.cov.determinant()).sqrt()
        })
        .sum()
}

#[test]
fn point_density_matches_direct_sum() {
    for seed in 0..20 {
        let mix = random_mixture(seed, 3, 5, true);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        for _ in 0..10 {
            let x = DVector::from_fn(3, |_, _| rng.random_range(-80.0..80.0));
            let got = point_intent_density(&mix, x.as_slice()).unwrap();
            let want = reference_pdf(&mix, &x);
            assert!(
                (got - want).abs() <= 1e-12 * want.max(1e-300) + 1e-300,
                "{got} vs {want}"
            );
        }
    }
}

#[test]
fn region_marginal_passes_ks_test() {
    let mix = random_mixture(4, 2, 3, true);
    let chols: Vec<DMatrix<f64>> = mix
        .components()
        .iter()
        .map(|c| c.cov.clone().cholesky().unwrap().l())
        .collect();
    let cum: Vec<f64> = mix
        .weights()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 1_000_000;
    let mut xs: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let k = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
            let z = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            (&mix.components()[k].mean + &chols[k] * z)[0]
        })
        .collect();
    xs.sort_by(f64::total_cmp);
    // Check the CDF on a grid of quantiles.
    let mut worst: f64 = 0.0;
    for q in 1..200 {
        let i = q * n / 200;
        let x = xs[i];
        let cdf = region_probability(&mix, &Region::new(vec![-BIG, -BIG], vec![x, BIG]).unwrap())
            .unwrap();
        worst = worst.max((cdf - i as f64 / n as f64).abs());
    }
    assert!(
        worst < 1.63 / (n as f64).sqrt() + 2e-4,
        "KS distance {worst}"
    );
}

#[test]
fn full_space_is_one() {
    for seed in 0..10 {
        for correlated in [false, true] {
            let mix = random_mixture(seed, 3, 4, correlated);
            let p = region_probability(&mix, &Region::new(vec![-BIG; 3], vec![BIG; 3]).unwrap())
                .unwrap();
            assert!((p - 1.0).abs() < 1e-9, "{p}");
        }
    }
}

fn boxes() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    // lower, split, upper per axis
    prop::collection::vec((-150.0..150.0f64, 0.05..0.95f64, 1.0..200.0f64), 3).prop_map(|axes| {
        let lo: Vec<f64> = axes.iter().map(|a| a.0).collect();
        let hi: Vec<f64> = axes.iter().map(|a| a.0 + a.2).collect();
        let mid: Vec<f64> = axes.iter().map(|a| a.0 + a.1 * a.2).collect();
        (lo, mid, hi)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn region_probability_is_monotone(seed in any::<u64>(), (lo, _, hi) in boxes(), grow in 0.0..50.0f64, correlated in any::<bool>()) {
        let mix = random_mixture(seed, 3, 3, correlated);
        let inner = Region::new(lo.clone(), hi.clone()).unwrap();
        let outer = Region::new(lo.iter().map(|x| x - grow).collect(), hi.iter().map(|x| x + grow).collect()).unwrap();
        let pi = region_probability(&mix, &inner).unwrap();
        let po = region_probability(&mix, &outer).unwrap();
        prop_assert!((0.0..=1.0).contains(&pi));
        // The correlated path is a fixed-point QMC rule; allow its error.
        let tol = if correlated { 2e-3 } else { 1e-12 };
        prop_assert!(po >= pi - tol, "{po} < {pi}");
    }

    #[test]
    fn region_probability_is_additive(seed in any::<u64>(), (lo, mid, hi) in boxes(), axis in 0usize..3, correlated in any::<bool>()) {
        let mix = random_mixture(seed, 3, 3, correlated);
        let whole = Region::new(lo.clone(), hi.clone()).unwrap();
        let mut left_hi = hi.clone();
        left_hi[axis] = mid[axis];
        let mut right_lo = lo.clone();
        right_lo[axis] = mid[axis];
        let left = Region::new(lo.clone(), left_hi).unwrap();
        let right = Region::new(right_lo, hi.clone()).unwrap();
        let p = region_probability(&mix, &whole).unwrap();
        let split = region_probability(&mix, &left).unwrap() + region_probability(&mix, &right).unwrap();
        let tol = if correlated { 2e-3 } else { 1e-12 };
        prop_assert!((p - split).abs() <= tol, "{p} vs {split}");
    }
}
