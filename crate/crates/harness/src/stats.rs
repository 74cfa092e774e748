//! Order-fixed summation, normal-approximation intervals and trend checks.

use std::fmt;

use serde::Serialize;

/// Name recorded in outputs for the interval method below.
pub const CI_METHOD: &str = "normal-95";
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Pairwise summation in a fixed split order, so the result depends only on
/// the slice contents.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance, two-pass.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanCi {
    pub n: usize,
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MeanCi {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = mean(xs);
        let se = if n > 1 { (variance(xs) / n as f64).sqrt() } else { 0.0 };
        Self::from_parts(n, mean, se)
    }

    pub fn from_parts(n: usize, mean: f64, se: f64) -> Self {
        MeanCi {
            n,
            mean,
            se,
            ci_low: mean - Z95 * se,
            ci_high: mean + Z95 * se,
        }
    }

    /// Proportion with its binomial standard error.
    pub fn proportion(successes: f64, n: usize) -> Self {
        let p = successes / n as f64;
        Self::from_parts(n, p, (p * (1.0 - p) / n as f64).sqrt())
    }

    /// An exact value with no sampling error.
    pub fn exact(value: f64) -> Self {
        Self::from_parts(0, value, 0.0)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.ci_low <= v && v <= self.ci_high
    }

    pub fn separated_above(&self, other: &MeanCi) -> bool {
        self.ci_low > other.ci_high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    /// Fail dominates, then inconclusive.
    pub fn combine(items: impl IntoIterator<Item = Status>) -> Status {
        let mut out = Status::Pass;
        for s in items {
            match s {
                Status::Fail => return Status::Fail,
                Status::Inconclusive => out = Status::Inconclusive,
                Status::Pass => {}
            }
        }
        out
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
        })
    }
}

/// `b` is below `a`: pass when the intervals separate downward, fail when they
/// separate upward, inconclusive otherwise.
pub fn step_decreasing(a: &MeanCi, b: &MeanCi) -> Status {
    if a.separated_above(b) {
        Status::Pass
    } else if b.separated_above(a) {
        Status::Fail
    } else {
        Status::Inconclusive
    }
}

/// `b` is not below `a`: fails only on a separated decrease.
pub fn step_not_decreasing(a: &MeanCi, b: &MeanCi) -> Status {
    if a.separated_above(b) {
        Status::Fail
    } else {
        Status::Pass
    }
}

/// `b` is not above `a`: fails only on a separated increase. Exactly equal
/// points count as a pass.
pub fn step_non_increasing(a: &MeanCi, b: &MeanCi) -> Status {
    if b.separated_above(a) {
        Status::Fail
    } else if a.separated_above(b) || (a.mean == b.mean && a.se == 0.0 && b.se == 0.0) {
        Status::Pass
    } else {
        Status::Inconclusive
    }
}

/// Applies a pairwise step rule along a sequence of points.
pub fn trend(points: &[MeanCi], step: fn(&MeanCi, &MeanCi) -> Status) -> Status {
    Status::combine(points.windows(2).map(|w| step(&w[0], &w[1])))
}

/// `b` at most half of `a`, with separation.
pub fn half_or_less(a: &MeanCi, b: &MeanCi) -> Status {
    if b.ci_high < 0.5 * a.ci_low {
        Status::Pass
    } else if b.ci_low > 0.5 * a.ci_high {
        Status::Fail
    } else {
        Status::Inconclusive
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interval_arithmetic() {
        let m = MeanCi::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        let se = (5.0f64 / 3.0 / 4.0).sqrt();
        assert!((m.se - se).abs() < 1e-15);
        assert!((m.ci_high - m.ci_low - 2.0 * Z95 * se).abs() < 1e-12);
        let p = MeanCi::proportion(25.0, 100);
        assert!((p.se - 0.25f64.sqrt() * 0.75f64.sqrt() / 10.0).abs() < 1e-15);
    }

    #[test]
    fn trend_rules() {
        let hi = MeanCi::from_parts(100, 1.0, 0.01);
        let lo = MeanCi::from_parts(100, 0.5, 0.01);
        let near = MeanCi::from_parts(100, 0.99, 0.01);
        assert_eq!(step_decreasing(&hi, &lo), Status::Pass);
        assert_eq!(step_decreasing(&hi, &near), Status::Inconclusive);
        assert_eq!(step_decreasing(&lo, &hi), Status::Fail);
        assert_eq!(step_not_decreasing(&lo, &hi), Status::Pass);
        assert_eq!(step_not_decreasing(&hi, &lo), Status::Fail);
        assert_eq!(trend(&[hi, near, lo], step_decreasing), Status::Inconclusive);
        assert_eq!(half_or_less(&hi, &MeanCi::from_parts(100, 0.3, 0.01)), Status::Pass);
        assert_eq!(half_or_less(&hi, &lo), Status::Inconclusive);
        assert_eq!(step_non_increasing(&MeanCi::exact(0.0), &MeanCi::exact(0.0)), Status::Pass);
    }

    proptest! {
        #[test]
        fn pairwise_sum_close_to_naive(xs in proptest::collection::vec(-1e3f64..1e3, 0..200)) {
            let naive: f64 = xs.iter().sum();
            prop_assert!((pairwise_sum(&xs) - naive).abs() <= 1e-9 * (1.0 + naive.abs()));
        }
    }
}
