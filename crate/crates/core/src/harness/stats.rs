use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use thiserror::Error;

use super::metrics::RunResult;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("need at least two paired samples, got {0}")]
    TooFew(usize),
    #[error("group sizes differ: {0} vs {1}")]
    Unequal(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Two-sided 95 % t interval for the mean of `diffs`.
pub fn ci95(diffs: &[f64]) -> Result<Interval, StatsError> {
    let n = diffs.len();
    if n < 2 {
        return Err(StatsError::TooFew(n));
    }
    let m = mean(diffs);
    let se = (sample_variance(diffs) / n as f64).sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid degrees of freedom").inverse_cdf(0.975);
    Ok(Interval { lo: m - t * se, hi: m + t * se })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anova {
    pub f: f64,
    pub p: f64,
}

/// One-way analysis of variance across groups.
pub fn one_way_anova(groups: &[&[f64]]) -> Result<Anova, StatsError> {
    let k = groups.len();
    let n: usize = groups.iter().map(|g| g.len()).sum();
    if k < 2 || n <= k || groups.iter().any(|g| g.is_empty()) {
        return Err(StatsError::TooFew(n));
    }
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let between: f64 = groups.iter().map(|g| g.len() as f64 * (mean(g) - grand).powi(2)).sum();
    let within: f64 = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        })
        .sum();
    let (df1, df2) = ((k - 1) as f64, (n - k) as f64);
    let scale = between.abs().max(within.abs()).max(f64::MIN_POSITIVE);
    if between / scale < 1e-12 {
        return Ok(Anova { f: 0.0, p: 1.0 });
    }
    if within / scale < 1e-12 {
        return Ok(Anova { f: f64::INFINITY, p: 0.0 });
    }
    let f = (between / df1) / (within / df2);
    let dist = FisherSnedecor::new(df1, df2).expect("valid degrees of freedom");
    Ok(Anova { f, p: 1.0 - dist.cdf(f) })
}

/// Paired comparison of one metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricComparison {
    pub baseline_mean: f64,
    pub variant_mean: f64,
    /// Mean of `variant - baseline`.
    pub delta: f64,
    pub ci95: Interval,
    pub significant: bool,
    pub anova: Anova,
}

pub fn compare(variant: &[f64], baseline: &[f64]) -> Result<MetricComparison, StatsError> {
    if variant.len() != baseline.len() {
        return Err(StatsError::Unequal(variant.len(), baseline.len()));
    }
    let diffs: Vec<f64> = variant.iter().zip(baseline).map(|(v, b)| v - b).collect();
    let ci = ci95(&diffs)?;
    Ok(MetricComparison {
        baseline_mean: mean(baseline),
        variant_mean: mean(variant),
        delta: mean(&diffs),
        ci95: ci,
        significant: !ci.contains(0.0),
        anova: one_way_anova(&[variant, baseline])?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonStats {
    /// Pairs where both runs finished.
    pub n: usize,
    /// `baseline / variant` mean FCT; above one the variant is faster.
    pub mean_fct_factor: f64,
    /// `variant / baseline` mean losses; `None` when the baseline lost
    /// nothing.
    pub mean_loss_factor: Option<f64>,
    /// Milliseconds.
    pub fct: MetricComparison,
    /// Packets.
    pub loss: MetricComparison,
    pub mean_inflation: f64,
    pub median_fairness: Option<f64>,
    pub timeouts: usize,
}

/// Compare repetition `i` of the variant against repetition `i` of the
/// baseline. Pairs in which either run timed out are left out.
pub fn aggregate(variant: &[RunResult], baseline: &[RunResult]) -> Result<ComparisonStats, StatsError> {
    if variant.len() != baseline.len() {
        return Err(StatsError::Unequal(variant.len(), baseline.len()));
    }
    let pairs: Vec<(&RunResult, &RunResult)> =
        variant.iter().zip(baseline).filter(|(v, b)| !v.timeout && !b.timeout).collect();
    let fct_ms = |r: &RunResult| r.fct.expect("finished").as_millis_f64();
    let vf: Vec<f64> = pairs.iter().map(|(v, _)| fct_ms(v)).collect();
    let bf: Vec<f64> = pairs.iter().map(|(_, b)| fct_ms(b)).collect();
    let vl: Vec<f64> = pairs.iter().map(|(v, _)| v.lost_pkts as f64).collect();
    let bl: Vec<f64> = pairs.iter().map(|(_, b)| b.lost_pkts as f64).collect();
    let fct = compare(&vf, &bf)?;
    let loss = compare(&vl, &bl)?;
    let fairness: Vec<f64> = variant.iter().filter_map(|r| r.fairness_ratio).collect();
    Ok(ComparisonStats {
        n: pairs.len(),
        mean_fct_factor: fct.baseline_mean / fct.variant_mean,
        mean_loss_factor: (loss.baseline_mean > 0.0).then(|| loss.variant_mean / loss.baseline_mean),
        fct,
        loss,
        mean_inflation: mean(&variant.iter().map(|r| r.inflation_ratio).collect::<Vec<_>>()),
        median_fairness: median(&fairness),
        timeouts: variant.iter().filter(|r| r.timeout).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SimTime;
    use proptest::prelude::*;

    fn run(fct_ms: u64, lost: u64) -> RunResult {
        RunResult {
            seed: 0,
            fct: Some(SimTime::from_millis(fct_ms)),
            lost_pkts: lost,
            retransmitted_bytes: 0,
            inflation_ratio: 0.0,
            fairness_ratio: Some(1.0),
            short_bytes: 1,
            long_bytes: 1,
            timeout: false,
            short_start: None,
            bottleneck_drops: 0,
        }
    }

    #[test]
    fn identical_groups() {
        let g: Vec<RunResult> = (0..30).map(|i| run(500 + i * 7, i % 4)).collect();
        let s = aggregate(&g, &g).unwrap();
        assert_eq!(s.mean_fct_factor, 1.0);
        assert_eq!(s.mean_loss_factor, Some(1.0));
        assert!(s.fct.ci95.contains(0.0));
        assert!(!s.fct.significant);
        assert_eq!(s.fct.anova.f, 0.0);
    }

    #[test]
    fn constant_difference() {
        let b: Vec<RunResult> = (0..30).map(|i| run(400 + i, i)).collect();
        let v: Vec<RunResult> = (0..30).map(|i| run(400 + i, i + 5)).collect();
        let s = aggregate(&v, &b).unwrap();
        assert_eq!(s.loss.ci95, Interval { lo: 5.0, hi: 5.0 });
        assert!(s.loss.significant);
        assert_eq!(s.loss.delta, 5.0);
    }

    #[test]
    fn factor_convention() {
        let b: Vec<RunResult> = (0..30).map(|_| run(1000, 0)).collect();
        let v: Vec<RunResult> = (0..30).map(|_| run(500, 0)).collect();
        let s = aggregate(&v, &b).unwrap();
        assert_eq!(s.mean_fct_factor, 2.0);
        assert_eq!(s.fct.delta, -500.0);
        assert_eq!(s.mean_loss_factor, None);
    }

    #[test]
    fn too_few() {
        assert_eq!(aggregate(&[run(1, 0)], &[run(1, 0)]), Err(StatsError::TooFew(1)));
        assert_eq!(aggregate(&[run(1, 0)], &[]), Err(StatsError::Unequal(1, 0)));
    }

    #[test]
    fn t_quantile_for_29_df() {
        let t = StudentsT::new(0.0, 1.0, 29.0).unwrap().inverse_cdf(0.975);
        assert!((t - 2.045_229_6).abs() < 1e-5);
    }

    #[test]
    fn anova_matches_hand_computation() {
        // Groups {1,2,3} and {4,5,6}: SSB = 13.5, SSW = 4, F = 13.5 / 1.
        let a = one_way_anova(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        assert!((a.f - 13.5).abs() < 1e-12);
        assert!((a.p - 0.021_311_641).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn factor_and_delta_agree(b in proptest::collection::vec(1u64..5000, 2..40), shift in -900i64..900) {
            let base: Vec<RunResult> = b.iter().map(|&x| run(x + 1000, 0)).collect();
            let var: Vec<RunResult> = b.iter().map(|&x| run((x as i64 + 1000 + shift) as u64, 0)).collect();
            let s = aggregate(&var, &base).unwrap();
            prop_assert_eq!(s.mean_fct_factor > 1.0, s.fct.delta < 0.0);
            prop_assert_eq!(s.fct.significant, !s.fct.ci95.contains(0.0));
        }
    }
}
