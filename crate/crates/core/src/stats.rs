//! Seed-level statistics: paired t-tests, percentile bootstrap intervals,
//! effect sizes and a law-of-total-variance decomposition.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1).
fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Population variance (n).
fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

/// Paired comparison of post against pre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    /// Mean of `post − pre`.
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    /// Signed infinity when every difference is identical and non-zero.
    pub cohens_d: f64,
    pub n_seeds: usize,
}

/// Two-sided paired t-test of `post − pre` with a t-based 95% interval.
pub fn paired_t(pre: &[f64], post: &[f64]) -> Result<StatsSummary> {
    if pre.len() != post.len() {
        return Err(Error::LengthMismatch {
            left: pre.len(),
            right: post.len(),
        });
    }
    let n = pre.len();
    if n < 2 {
        return Err(Error::NotEnoughSamples { needed: 2, got: n });
    }
    let diffs: Vec<f64> = post.iter().zip(pre).map(|(b, a)| b - a).collect();
    let m = mean(&diffs);
    let sd = sample_sd(&diffs);
    if sd == 0.0 || !sd.is_finite() {
        // Degenerate: the t statistic is 0/0 or ±∞; report the limits.
        let (d, p) = if m == 0.0 { (0.0, 1.0) } else { (m.signum() * f64::INFINITY, 0.0) };
        return Ok(StatsSummary {
            mean: m,
            ci_low: m,
            ci_high: m,
            p_value: p,
            cohens_d: d,
            n_seeds: n,
        });
    }
    let se = sd / (n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let t = m / se;
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    let half = dist.inverse_cdf(0.975) * se;
    Ok(StatsSummary {
        mean: m,
        ci_low: m - half,
        ci_high: m + half,
        p_value: p,
        cohens_d: m / sd,
        n_seeds: n,
    })
}

/// Mean with a t-based 95% interval. A single value gives a zero-width
/// interval.
pub fn mean_ci(xs: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.is_empty() {
        return Err(Error::NotEnoughSamples { needed: 1, got: 0 });
    }
    let m = mean(xs);
    if xs.len() < 2 {
        return Ok((m, m, m));
    }
    let dist = StudentsT::new(0.0, 1.0, (xs.len() - 1) as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let half = dist.inverse_cdf(0.975) * sample_sd(xs) / (xs.len() as f64).sqrt();
    Ok((m, m - half, m + half))
}

/// Percentile bootstrap interval of the mean at confidence `level`.
pub fn bootstrap_ci<R: Rng + ?Sized>(sample: &[f64], resamples: usize, level: f64, rng: &mut R) -> Result<(f64, f64)> {
    if sample.len() < 2 {
        return Err(Error::NotEnoughSamples {
            needed: 2,
            got: sample.len(),
        });
    }
    if !(0.0..1.0).contains(&level) || resamples == 0 {
        return Err(Error::InvalidParameter(format!("level {level}, resamples {resamples}")));
    }
    let n = sample.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| sample[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| means[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    Ok((at(tail), at(1.0 - tail)))
}

/// Bootstrap with the default resample count and a fixed seed.
pub fn bootstrap_ci_seeded(sample: &[f64], seed: u64) -> Result<(f64, f64)> {
    bootstrap_ci(sample, BOOTSTRAP_RESAMPLES, 0.95, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    pub v_total: f64,
    /// Variance of group means: what changes with the chance assignment.
    pub v_env: f64,
    /// Mean within-group variance: what changes with policy randomness.
    pub v_policy: f64,
}

/// Splits the variance of all values into between-group and mean
/// within-group parts. Groups are keyed by chance assignment; population
/// variances make `v_total = v_env + v_policy` exact for equal group sizes.
pub fn variance_decomposition(groups: &BTreeMap<String, Vec<f64>>) -> Result<VarianceDecomposition> {
    if groups.is_empty() {
        return Err(Error::NotEnoughSamples { needed: 1, got: 0 });
    }
    if let Some(g) = groups.values().find(|g| g.len() < 2) {
        return Err(Error::NotEnoughSamples { needed: 2, got: g.len() });
    }
    let all: Vec<f64> = groups.values().flatten().copied().collect();
    let means: Vec<f64> = groups.values().map(|g| mean(g)).collect();
    let within: Vec<f64> = groups.values().map(|g| population_variance(g)).collect();
    Ok(VarianceDecomposition {
        v_total: population_variance(&all),
        v_env: population_variance(&means),
        v_policy: mean(&within),
    })
}

/// One row of a results table: phase means with intervals and the paired test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub label: String,
    pub pre_mean: f64,
    pub pre_ci: (f64, f64),
    pub post_mean: f64,
    pub post_ci: (f64, f64),
    pub test: StatsSummary,
}

impl PhaseSummary {
    pub fn new(label: &str, pre: &[f64], post: &[f64], seed: u64) -> Result<Self> {
        Ok(Self {
            label: label.to_string(),
            pre_mean: mean(pre),
            pre_ci: bootstrap_ci_seeded(pre, seed)?,
            post_mean: mean(post),
            post_ci: bootstrap_ci_seeded(post, seed.wrapping_add(1))?,
            test: paired_t(pre, post)?,
        })
    }

    pub const HEADER: &'static str = "condition | pre | post | 95% CI (post) | p | d";
}

fn format_p(p: f64) -> String {
    if p < 1e-4 {
        "<0.0001".into()
    } else {
        format!("{p:.4}")
    }
}

impl fmt::Display for PhaseSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} | {:.3} | {:.3} | [{:.3}, {:.3}] | {} | {:.1}",
            self.label,
            self.pre_mean,
            self.post_mean,
            self.post_ci.0,
            self.post_ci.1,
            format_p(self.test.p_value),
            self.test.cohens_d
        )
    }
}

impl fmt::Display for StatsSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.4} [{:.4}, {:.4}] p={} d={:.2} n={}",
            self.mean,
            self.ci_low,
            self.ci_high,
            format_p(self.p_value),
            self.cohens_d,
            self.n_seeds
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn identical_vectors() {
        let s = paired_t(&[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!((s.cohens_d, s.p_value), (0.0, 1.0));
    }

    #[test]
    fn constant_shift_is_infinite_effect() {
        let s = paired_t(&[0.0; 4], &[-1.0; 4]).unwrap();
        assert_eq!(s.cohens_d, f64::NEG_INFINITY);
        assert_eq!(s.p_value, 0.0);
    }

    #[test]
    fn jittered_drop() {
        let post = [-1.0, -1.0 + 1e-3, -1.0 - 1e-3, -1.0 + 2e-4];
        let s = paired_t(&[0.0; 4], &post).unwrap();
        assert!(s.p_value < 1e-6, "{}", s.p_value);
        assert!(s.cohens_d < -100.0);
        assert!(s.ci_low <= s.mean && s.mean <= s.ci_high);
    }

    #[test]
    fn closed_form_t() {
        // diffs (1, 2, 3): mean 2, sd 1, t = 2√3 on 2 dof; two-sided p = 0.07418.
        let s = paired_t(&[0.0; 3], &[1.0, 2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(s.cohens_d, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.p_value, 0.074180, epsilon = 1e-5);
        // t(0.975, 2) = 4.302653
        assert_abs_diff_eq!(s.ci_high - s.mean, 4.302653 / 3f64.sqrt(), epsilon = 1e-5);
    }

    #[test]
    fn one_sample_interval() {
        let (m, lo, hi) = mean_ci(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert_abs_diff_eq!(hi - m, 4.302653 / 3f64.sqrt(), epsilon = 1e-5);
        assert_abs_diff_eq!(m - lo, hi - m, epsilon = 1e-12);
        assert_eq!(mean_ci(&[0.5]).unwrap(), (0.5, 0.5, 0.5));
    }

    #[test]
    fn errors() {
        assert!(matches!(paired_t(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(paired_t(&[1.0], &[1.0]), Err(Error::NotEnoughSamples { .. })));
        let mut g = BTreeMap::new();
        g.insert("a".to_string(), vec![1.0]);
        assert!(variance_decomposition(&g).is_err());
    }

    #[test]
    fn bootstrap_constant_and_binary() {
        let (lo, hi) = bootstrap_ci_seeded(&[0.3; 7], 1).unwrap();
        assert_eq!((lo, hi), (0.3, 0.3));
        let sample: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
        let (lo, hi) = bootstrap_ci_seeded(&sample, 1).unwrap();
        assert!((0.0..0.5).contains(&lo) && 0.5 < hi && hi <= 1.0);
        assert_eq!(bootstrap_ci_seeded(&sample, 9).unwrap(), bootstrap_ci_seeded(&sample, 9).unwrap());
    }

    #[test]
    fn decomposition_examples() {
        let mut g = BTreeMap::new();
        g.insert("a".to_string(), vec![-0.9; 3]);
        g.insert("b".to_string(), vec![-0.9; 3]);
        let d = variance_decomposition(&g).unwrap();
        assert_eq!((d.v_total, d.v_env, d.v_policy), (0.0, 0.0, 0.0));

        g.insert("b".to_string(), vec![-0.5; 3]);
        let d = variance_decomposition(&g).unwrap();
        assert_eq!(d.v_policy, 0.0);
        assert_abs_diff_eq!(d.v_env, d.v_total, epsilon = 1e-15);
        assert_abs_diff_eq!(d.v_total, 0.04, epsilon = 1e-12);
    }

    #[test]
    fn table_row() {
        let row = PhaseSummary::new("QL", &[0.0, 0.01, -0.01], &[-0.92, -0.93, -0.925], 3).unwrap();
        let text = row.to_string();
        assert!(text.starts_with("QL | 0.000 | -0.925 |"), "{text}");
        let json = serde_json::to_string(&row).unwrap();
        assert_eq!(serde_json::from_str::<PhaseSummary>(&json).unwrap(), row);
    }

    proptest! {
        #[test]
        fn swap_negates_d(pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..12)) {
            let (pre, post): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let a = paired_t(&pre, &post).unwrap();
            let b = paired_t(&post, &pre).unwrap();
            prop_assert!((a.cohens_d + b.cohens_d).abs() < 1e-9 || a.cohens_d.is_infinite());
            prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a.p_value));
            prop_assert!(a.ci_low <= a.mean && a.mean <= a.ci_high);
        }

        #[test]
        fn bootstrap_contains_mean(xs in prop::collection::vec(-1.0f64..1.0, 2..15), seed in 0u64..50) {
            let (lo, hi) = bootstrap_ci(&xs, 2000, 0.95, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let m = mean(&xs);
            prop_assert!(lo <= m + 1e-12 && m - 1e-12 <= hi);
        }

        #[test]
        fn components_bounded(groups in prop::collection::vec((-1.0f64..1.0, prop::collection::vec(-0.1f64..0.1, 3)), 1..6)) {
            // additive: value = group effect + noise, equal group sizes
            let map: BTreeMap<String, Vec<f64>> = groups
                .iter()
                .enumerate()
                .map(|(i, (e, noise))| (i.to_string(), noise.iter().map(|n| e + n).collect()))
                .collect();
            let d = variance_decomposition(&map).unwrap();
            prop_assert!(d.v_env <= d.v_total + 1e-12 && d.v_policy <= d.v_total + 1e-12);
            prop_assert!((d.v_env + d.v_policy - d.v_total).abs() < 1e-12);
        }
    }
}
