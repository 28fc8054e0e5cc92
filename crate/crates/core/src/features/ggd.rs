//! Moment-matching fits of (asymmetric) generalized Gaussians.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ALPHA_LO: f64 = 0.05;
const ALPHA_HI: f64 = 10.0;
const MIN_SAMPLES: usize = 100;
const SCALE_FLOOR: f64 = 1e-6;

/// `Gamma(2/a)^2 / (Gamma(1/a) Gamma(3/a))`, the ratio `E[|x|]^2 / E[x^2]`
/// of a GGD with shape `a`. Strictly increasing in `a`.
pub fn moment_ratio(alpha: f64) -> f64 {
    let lg = libm::lgamma;
    (2.0 * lg(2.0 / alpha) - lg(1.0 / alpha) - lg(3.0 / alpha)).exp()
}

/// Inverts [`moment_ratio`] by bisection on `[0.05, 10]`, run to double
/// precision. Targets outside the attainable range clamp to the nearest bound.
pub fn solve_shape(rho: f64) -> f64 {
    let (mut lo, mut hi) = (ALPHA_LO, ALPHA_HI);
    if rho <= moment_ratio(lo) {
        return lo;
    }
    if rho >= moment_ratio(hi) {
        return hi;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        if moment_ratio(mid) < rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GgdFit {
    pub alpha: f64,
    /// Square root of the second moment.
    pub sigma: f64,
    /// Empirical `E[|x|]^2 / E[x^2]` the shape was matched to.
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggdFit {
    pub alpha: f64,
    pub sigma_left: f64,
    pub sigma_right: f64,
    pub eta: f64,
}

fn check(samples: &[f64]) -> Result<()> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::invalid(
            "distribution fit",
            format!("{} samples (need {MIN_SAMPLES})", samples.len()),
        ));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("distribution fit", "non-finite sample"));
    }
    if samples.iter().all(|&x| x == samples[0]) {
        return Err(Error::Degenerate("samples have zero variance".into()));
    }
    Ok(())
}

fn abs_and_square_means(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let (a, s) = samples
        .iter()
        .fold((0.0, 0.0), |(a, s), &x| (a + x.abs(), s + x * x));
    (a / n, s / n)
}

pub fn fit_ggd(samples: &[f64]) -> Result<GgdFit> {
    check(samples)?;
    let (mean_abs, mean_sq) = abs_and_square_means(samples);
    let rho = mean_abs * mean_abs / mean_sq;
    Ok(GgdFit {
        alpha: solve_shape(rho),
        sigma: mean_sq.sqrt(),
        rho,
    })
}

/// Asymmetric fit. A side with no samples gets scale `1e-6`.
pub fn fit_aggd(samples: &[f64]) -> Result<AggdFit> {
    check(samples)?;
    let side_scale = |pick: fn(f64) -> bool| {
        let (n, s) = samples
            .iter()
            .filter(|&&x| pick(x))
            .fold((0usize, 0.0), |(n, s), &x| (n + 1, s + x * x));
        if n == 0 {
            SCALE_FLOOR
        } else {
            (s / n as f64).sqrt().max(SCALE_FLOOR)
        }
    };
    let sigma_left = side_scale(|x| x < 0.0);
    let sigma_right = side_scale(|x| x > 0.0);
    let (mean_abs, mean_sq) = abs_and_square_means(samples);
    let gamma = sigma_left / sigma_right;
    let r_hat = mean_abs * mean_abs / mean_sq;
    let big_r = r_hat * (gamma.powi(3) + 1.0) * (gamma + 1.0) / (gamma * gamma + 1.0).powi(2);
    let alpha = solve_shape(big_r);
    let lg = libm::lgamma;
    let (g1, g2, g3) = (lg(1.0 / alpha), lg(2.0 / alpha), lg(3.0 / alpha));
    let eta = (sigma_right - sigma_left) * (g2 - g1).exp() * (0.5 * (g1 - g3)).exp();
    Ok(AggdFit {
        alpha,
        sigma_left,
        sigma_right,
        eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Exp1, StandardNormal};

    fn gaussian(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::rng(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn laplacian(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::rng(seed);
        (0..n)
            .map(|_| {
                let a: f64 = Exp1.sample(&mut rng);
                let b: f64 = Exp1.sample(&mut rng);
                a - b
            })
            .collect()
    }

    #[test]
    fn closed_form_ratios() {
        // alpha = 2: 2/pi;  alpha = 1: 1/2
        assert!((moment_ratio(2.0) - 2.0 / std::f64::consts::PI).abs() < 1e-12);
        assert!((moment_ratio(1.0) - 0.5).abs() < 1e-12);
        assert!((solve_shape(0.5) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn recovers_known_shapes() {
        let g = fit_ggd(&gaussian(100_000, 1)).unwrap();
        assert!((g.alpha - 2.0).abs() < 0.15, "{}", g.alpha);
        assert!((g.sigma - 1.0).abs() < 0.02);
        let l = fit_ggd(&laplacian(100_000, 2)).unwrap();
        assert!((l.alpha - 1.0).abs() < 0.15, "{}", l.alpha);
    }

    #[test]
    fn solver_is_consistent() {
        for (seed, s) in [(3, gaussian(5000, 3)), (4, laplacian(5000, 4))] {
            let fit = fit_ggd(&s).unwrap();
            assert!((moment_ratio(fit.alpha) - fit.rho).abs() < 1e-6, "seed {seed}");
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(fit_ggd(&[0.3; 500]), Err(Error::Degenerate(_))));
        assert!(fit_ggd(&[1.0, 2.0]).is_err());
        assert!(fit_aggd(&[0.0; 200]).is_err());
    }

    #[test]
    fn aggd_symmetry() {
        let s = gaussian(50_000, 9);
        let fit = fit_aggd(&s).unwrap();
        assert!((fit.sigma_left / fit.sigma_right - 1.0).abs() < 0.05);
        assert!(fit.eta.abs() < 0.02);

        let skewed: Vec<f64> = s.iter().map(|&x| if x > 0.0 { 2.0 * x } else { x }).collect();
        let a = fit_aggd(&skewed).unwrap();
        let mirrored: Vec<f64> = skewed.iter().map(|x| -x).collect();
        let b = fit_aggd(&mirrored).unwrap();
        assert!(a.eta > 0.0);
        assert!((a.eta + b.eta).abs() < 1e-9);
        assert!((a.alpha - b.alpha).abs() < 1e-9);

        let mut rng = crate::rng::rng(5);
        let positive: Vec<f64> = (0..500).map(|_| rng.random_range(0.1..1.0)).collect();
        let p = fit_aggd(&positive).unwrap();
        assert_eq!(p.sigma_left, 1e-6);
    }
}
