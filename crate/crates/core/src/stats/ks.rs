//! Kolmogorov-Smirnov tests with asymptotic p-values.
//!
//! The one-sample statistic comes from `statrs`. The two-sample test is
//! local because the `statrs` p-value series never terminates at `D = 0`.

use statrs::distribution::Normal;
use statrs::stats_tests::ks_test::{ks_onesample, KSOneSampleAlternativeMethod};
use statrs::stats_tests::NaNPolicy;

use super::{TestReport, Verdict, DEFAULT_LEVEL};
use crate::error::{Error, Result};

/// One-sample KS of `samples` against `N(0, variance)`; passes when
/// `p > 0.01`.
pub fn ks_gaussian(samples: &[f64], variance: f64) -> Result<TestReport> {
    ks_gaussian_at(samples, variance, DEFAULT_LEVEL)
}

pub fn ks_gaussian_at(samples: &[f64], variance: f64, level: f64) -> Result<TestReport> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::OutOfRange {
            name: "variance",
            value: variance,
            constraint: "(0, inf)".into(),
        });
    }
    let normal =
        Normal::new(0.0, variance.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let (d, p) = ks_onesample(
        samples.to_vec(),
        &normal,
        KSOneSampleAlternativeMethod::TwoSidedAsymptotic,
        NaNPolicy::Error,
    )
    .map_err(|e| Error::Degenerate(e.to_string()))?;
    Ok(TestReport::new(
        "ks_gaussian",
        "D",
        d,
        Verdict::from_bool(p > level),
        &format!("p > {level}"),
        samples.len(),
    )
    .with_p_value(p)
    .with_note(format!("against N(0, {variance:.6})")))
}

/// `P(K > x)` for the Kolmogorov distribution. Above `x = 1` the series
/// `2 sum (-1)^{k-1} exp(-2 k^2 x^2)` is summed until a term drops below
/// 1e-10; below it the dual theta series for the CDF is used.
pub fn kolmogorov_pvalue(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut cdf = 0.0;
        for k in 1..=20 {
            let j = (2 * k - 1) as f64;
            let term = (-j * j * pi2 / (8.0 * x * x)).exp();
            cdf += term;
            if term < 1e-10 * cdf.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / x * cdf;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    let mut k = 1.0f64;
    loop {
        let term = (-2.0 * k * k * x * x).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-10 {
            break;
        }
        k += 1.0;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS statistic and asymptotic p-value at `sqrt(nm/(n+m)) D`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::Degenerate("NaN in sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    Ok((d, kolmogorov_pvalue(en * d)))
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn two_sample_is_symmetric_and_bounded(
            a in prop::collection::vec(-1e6f64..1e6, 1..60),
            b in prop::collection::vec(-1e6f64..1e6, 1..60),
        ) {
            let (d, p) = ks_two_sample(&a, &b).unwrap();
            let (d2, p2) = ks_two_sample(&b, &a).unwrap();
            prop_assert!((0.0..=1.0).contains(&d) && (0.0..=1.0).contains(&p));
            prop_assert!((d - d2).abs() < 1e-12 && (p - p2).abs() < 1e-12);
            let (d0, p0) = ks_two_sample(&a, &a).unwrap();
            prop_assert_eq!((d0, p0), (0.0, 1.0));
        }

        #[test]
        fn kolmogorov_tail_is_monotone(x in 0.0f64..4.0, dx in 0.001f64..1.0) {
            let (p, q) = (kolmogorov_pvalue(x), kolmogorov_pvalue(x + dx));
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(q <= p + 1e-12);
        }
    }
}
