//! Statistical helpers shared by the diagnostics and the scaling harness.

/// Error function, Abramowitz–Stegun 7.1.26 (|error| < 1.5e-7).
pub fn erf(x: f64) -> f64 {
    let sign = x.signum();
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Excess kurtosis m₄/m₂² − 3.
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

/// Two-sided Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// 95% critical value of the two-sided KS statistic under the null
/// (Stephens' finite-n approximation).
pub fn ks_critical_95(n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    1.358 / (sn + 0.12 + 0.11 / sn)
}

/// Wilson score interval for a binomial proportion at z = 1.96.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.96f64;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * ((p * (1.0 - p) + z2 / (4.0 * nf)) / nf).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Ordinary least squares y = a·x + b with the slope's standard error and
/// the upper 95% confidence bound (Student-t, n−2 degrees of freedom).
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub slope_upper95: f64,
}

pub fn ols_fit(xs: &[f64], ys: &[f64]) -> LineFit {
    assert!(
        xs.len() == ys.len() && xs.len() >= 3,
        "need at least 3 points"
    );
    let n = xs.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let sigma2 = ssr / (n - 2.0);
    let slope_se = (sigma2 / sxx).sqrt();
    let t = t_quantile_975(xs.len() - 2);
    LineFit {
        slope,
        intercept,
        slope_se,
        slope_upper95: slope + t * slope_se,
    }
}

/// Two-sided 95% Student-t quantile (0.975), small degrees of freedom.
pub fn t_quantile_975(dof: usize) -> f64 {
    const TABLE: [f64; 12] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
    ];
    if dof == 0 {
        f64::INFINITY
    } else if dof <= TABLE.len() {
        TABLE[dof - 1]
    } else if dof <= 20 {
        2.09
    } else if dof <= 60 {
        2.0
    } else {
        1.96
    }
}

/// Delete-one jackknife standard error of a statistic given its leave-one-out
/// replicates.
pub fn jackknife_se(replicates: &[f64]) -> f64 {
    let n = replicates.len() as f64;
    let m = mean(replicates);
    let s: f64 = replicates.iter().map(|r| (r - m) * (r - m)).sum();
    ((n - 1.0) / n * s).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn erf_matches_reference_values() {
        assert!(erf(0.0).abs() < 2e-7);
        assert_relative_eq!(erf(1.0), 0.8427007929497149, epsilon = 2e-7);
        assert_relative_eq!(erf(-1.0), -0.8427007929497149, epsilon = 2e-7);
        assert_relative_eq!(erf(2.0), 0.9953222650189527, epsilon = 2e-7);
    }

    #[test]
    fn ks_statistic_on_uniform_grid_is_small() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!(d < 0.001);
    }

    #[test]
    fn ks_critical_value_matches_monte_carlo_null() {
        // oracle: simulate the null distribution of the KS statistic
        let n = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut stats: Vec<f64> = (0..2000)
            .map(|_| {
                let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                ks_statistic(&xs, |x| x.clamp(0.0, 1.0))
            })
            .collect();
        stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q95 = stats[(0.95 * 2000.0) as usize];
        let approx_q = ks_critical_95(n);
        assert!(
            (q95 - approx_q).abs() / q95 < 0.05,
            "mc {q95} vs formula {approx_q}"
        );
    }

    #[test]
    fn gaussian_samples_pass_ks_and_constants_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d = ks_statistic(&xs, normal_cdf);
        assert!(d < ks_critical_95(500), "d = {d}");
        let constant = vec![0.3; 500];
        let dc = ks_statistic(&constant, normal_cdf);
        assert!(dc > 5.0 * ks_critical_95(500));
    }

    #[test]
    fn wilson_interval_covers_the_point_estimate() {
        let (lo, hi) = wilson_interval(30, 100);
        assert!(lo < 0.3 && 0.3 < hi);
        assert!(lo > 0.2 && hi < 0.42);
        let (lo0, _) = wilson_interval(0, 50);
        assert_eq!(lo0, 0.0);
    }

    #[test]
    fn ols_recovers_an_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let fit = ols_fit(&xs, &ys);
        assert_relative_eq!(fit.slope, 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 1.0, epsilon = 1e-12);
        assert!(fit.slope_se < 1e-12);
    }

    #[test]
    fn excess_kurtosis_of_gaussians_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..20000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        assert!(excess_kurtosis(&xs).abs() < 0.15);
    }
}
