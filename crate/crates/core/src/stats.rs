//! Small sample statistics used by the experiments.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Raw moment `E[x^k]`.
pub fn raw_moment(x: &[f64], k: i32) -> f64 {
    x.iter().map(|v| v.powi(k)).sum::<f64>() / x.len() as f64
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Pearson correlation.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Unbiased sample covariance of the rows of `samples`.
pub fn sample_covariance(samples: &[Vec<f64>]) -> DMatrix<f64> {
    let n = samples.len();
    let d = samples[0].len();
    let mut mu = vec![0.0; d];
    for s in samples {
        for (m, v) in mu.iter_mut().zip(s) {
            *m += v / n as f64;
        }
    }
    let mut c = DMatrix::zeros(d, d);
    for s in samples {
        for i in 0..d {
            for j in 0..=i {
                c[(i, j)] += (s[i] - mu[i]) * (s[j] - mu[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            c[(i, j)] /= n as f64 - 1.0;
            c[(j, i)] = c[(i, j)];
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the residuals.
    pub rms_residual: f64,
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn least_squares(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParams("least squares needs two or more paired points".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParams("least squares needs distinct abscissae".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    Ok(LinearFit { slope, intercept, rms_residual: (rss / x.len() as f64).sqrt() })
}

/// Sample excess kurtosis (bias-corrected `G2`) and its standard error under
/// normality.
pub fn excess_kurtosis(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = mean(x);
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    let g2 = m4 / (m2 * m2) - 3.0;
    let big_g2 = (n - 1.0) / ((n - 2.0) * (n - 3.0)) * ((n + 1.0) * g2 + 6.0);
    let se = (24.0 * n * (n - 1.0).powi(2) / ((n - 3.0) * (n - 2.0) * (n + 3.0) * (n + 5.0))).sqrt();
    (big_g2, se)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AndersonDarling {
    pub a2: f64,
    /// Small-sample corrected statistic `A2 (1 + 0.75/n + 2.25/n^2)`.
    pub a2_star: f64,
    pub p_value: f64,
}

impl AndersonDarling {
    /// Critical value of the corrected statistic at the 1% level when mean
    /// and variance are estimated.
    pub const CRITICAL_1PCT: f64 = 1.035;

    pub fn rejects_at_1pct(&self) -> bool {
        self.a2_star > Self::CRITICAL_1PCT
    }
}

/// Anderson–Darling test of normality with estimated mean and variance.
pub fn anderson_darling(x: &[f64]) -> Result<AndersonDarling> {
    let n = x.len();
    if n < 8 {
        return Err(Error::InvalidParams("Anderson-Darling needs at least 8 samples".into()));
    }
    let (m, sd) = (mean(x), variance(x).sqrt());
    if !(sd > 0.0) {
        return Err(Error::InvalidParams("Anderson-Darling needs nonconstant samples".into()));
    }
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut z: Vec<f64> = x.iter().map(|v| (v - m) / sd).collect();
    z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = n as f64;
    let mut s = 0.0;
    for i in 0..n {
        let fi = std_normal.cdf(z[i]).clamp(1e-300, 1.0 - 1e-16);
        let fr = std_normal.cdf(z[n - 1 - i]).clamp(1e-300, 1.0 - 1e-16);
        s += (2.0 * i as f64 + 1.0) * (fi.ln() + (1.0 - fr).ln());
    }
    let a2 = -nf - s / nf;
    let a = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    // D'Agostino & Stephens piecewise approximation
    let p_value = if a >= 0.6 {
        (1.2937 - 5.709 * a + 0.0186 * a * a).exp()
    } else if a >= 0.34 {
        (0.9177 - 4.279 * a - 1.38 * a * a).exp()
    } else if a >= 0.2 {
        1.0 - (-8.318 + 42.796 * a - 59.938 * a * a).exp()
    } else {
        1.0 - (-13.436 + 101.14 * a - 223.73 * a * a).exp()
    };
    Ok(AndersonDarling { a2, a2_star: a, p_value: p_value.clamp(0.0, 1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal, Uniform};

    #[test]
    fn fit_exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let f = least_squares(&x, &y).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12 && (f.intercept + 1.0).abs() < 1e-12);
        assert!(f.rms_residual < 1e-12);
    }

    #[test]
    fn correlation_sign() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((correlation(&x, &[2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-12);
        assert!((correlation(&x, &[-1.0, -2.0, -3.0, -4.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_of_known_samples() {
        let s = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 10.0]];
        let c = sample_covariance(&s);
        assert!((c[(0, 0)] - 4.0).abs() < 1e-12);
        assert!((c[(0, 1)] - 8.0).abs() < 1e-12);
        assert!((c[(1, 1)] - 16.0).abs() < 1e-12);
    }

    #[test]
    fn ad_accepts_normal_rejects_uniform() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let normal: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ad = anderson_darling(&normal).unwrap();
        assert!(!ad.rejects_at_1pct(), "{ad:?}");
        let uni = Uniform::new(0.0, 1.0).unwrap();
        let flat: Vec<f64> = (0..1000).map(|_| uni.sample(&mut rng)).collect();
        let ad = anderson_darling(&flat).unwrap();
        assert!(ad.rejects_at_1pct() && ad.p_value < 0.01);
    }

    #[test]
    fn kurtosis_of_uniform_is_negative() {
        let x: Vec<f64> = (0..10_000).map(|k| (k as f64 + 0.5) / 10_000.0).collect();
        let (k, se) = excess_kurtosis(&x);
        assert!((k + 1.2).abs() < 0.01);
        assert!(se > 0.0 && se < 0.1);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
