//! Goodness-of-fit tests and small regression helpers for checking sampled
//! output against its target distribution.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Result of a goodness-of-fit test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitTest {
    pub statistic: f64,
    /// Degrees of freedom for chi-square; sample size for KS.
    pub dof: usize,
    pub p_value: f64,
}

impl FitTest {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

/// Pearson chi-square test of observed counts against cell probabilities.
///
/// Cells whose expected count is below 5 are pooled into one cell. A count
/// in a zero-probability cell gives p = 0.
pub fn chi_square(observed: &[u64], probabilities: &[f64]) -> FitTest {
    assert_eq!(observed.len(), probabilities.len(), "cell count mismatch");
    let n: u64 = observed.iter().sum();
    let total_p: f64 = probabilities.iter().sum();
    let nf = n as f64;

    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probabilities) {
        let expected = nf * p / total_p;
        if p <= 0.0 {
            if o > 0 {
                return FitTest {
                    statistic: f64::INFINITY,
                    dof: 0,
                    p_value: 0.0,
                };
            }
            continue;
        }
        if expected < 5.0 {
            pooled.0 += o as f64;
            pooled.1 += expected;
        } else {
            cells.push((o as f64, expected));
        }
    }
    if pooled.1 > 0.0 {
        cells.push(pooled);
    }
    if cells.len() < 2 {
        return FitTest {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
        };
    }
    let statistic: f64 = cells.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    let p_value = ChiSquared::new(dof as f64)
        .expect("dof is positive")
        .sf(statistic);
    FitTest {
        statistic,
        dof,
        p_value,
    }
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn kolmogorov_smirnov<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> FitTest {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    let nf = n as f64;
    let statistic = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let lo = f - i as f64 / nf;
            let hi = (i + 1) as f64 / nf - f;
            lo.max(hi)
        })
        .fold(0.0, f64::max);
    let sqrt_n = nf.sqrt();
    let p_value = kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * statistic);
    FitTest {
        statistic,
        dof: n,
        p_value,
    }
}

/// Survival function of the Kolmogorov distribution,
/// Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2k²λ²).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Sample mean and unbiased variance.
pub fn mean_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Weighted least-squares line through `(xs, ys)`.
pub fn weighted_line_fit(xs: &[f64], ys: &[f64], weights: &[f64]) -> Option<LineFit> {
    let sw: f64 = weights.iter().sum();
    if !(sw > 0.0) || xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().zip(weights).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my = ys.iter().zip(weights).map(|(y, w)| w * y).sum::<f64>() / sw;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for ((x, y), w) in xs.iter().zip(ys).zip(weights) {
        sxy += w * (x - mx) * (y - my);
        sxx += w * (x - mx) * (x - mx);
    }
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;
    use rand::Rng;

    #[test]
    fn chi_square_exact_counts_pass() {
        let t = chi_square(&[250, 250, 500], &[0.25, 0.25, 0.5]);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.dof, 2);
        assert!((t.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_known_value() {
        // (60-50)²/50 + (40-50)²/50 = 4 on 1 dof: p = erfc(√2) ≈ 0.0455.
        let t = chi_square(&[60, 40], &[0.5, 0.5]);
        assert!((t.statistic - 4.0).abs() < 1e-12);
        assert!((t.p_value - 0.045_500_263_896_358_4).abs() < 1e-9);
    }

    #[test]
    fn chi_square_flags_impossible_cells() {
        assert_eq!(chi_square(&[5, 1], &[1.0, 0.0]).p_value, 0.0);
        assert_eq!(chi_square(&[5, 0], &[1.0, 0.0]).p_value, 1.0);
    }

    #[test]
    fn chi_square_rejects_biased_sample() {
        assert!(!chi_square(&[5200, 4800], &[0.5, 0.5]).passes(0.001));
    }

    #[test]
    fn kolmogorov_sf_reference_points() {
        // Tabulated critical values: Q(1.36) ≈ 0.049, Q(1.63) ≈ 0.0098.
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 5e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn ks_uniform_samples() {
        let mut rng = Streams::new(8).stream(0);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        assert!(kolmogorov_smirnov(&xs, |x| x.clamp(0.0, 1.0)).passes(0.001));
        assert!(!kolmogorov_smirnov(&xs, |x| x.clamp(0.0, 1.0).powi(2)).passes(0.001));
    }

    #[test]
    fn line_fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 - 2.0 * x).collect();
        let fit = weighted_line_fit(&xs, &ys, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 0.5).abs() < 1e-12);
        assert!(weighted_line_fit(&[1.0, 1.0], &[0.0, 1.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn mean_variance_small() {
        let (m, v) = mean_variance(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((v - 5.0 / 3.0).abs() < 1e-12);
    }
}
