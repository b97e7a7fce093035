//! Student-t distribution and the corrected resampled paired t-test.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("samples have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two paired samples, got {0}")]
    TooFewSamples(usize),
    #[error("non-finite value in sample")]
    NonFinite,
}

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    use core::f64::consts::PI;
    if x < 0.5 {
        // reflection
        return libm::log(PI / libm::sin(PI * x)) - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + 7.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * libm::log(2.0 * PI) + (x + 0.5) * libm::log(t) - t + libm::log(a)
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularised incomplete beta function `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * inc_beta(df / 2.0, 0.5, df / (df + t * t));
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// `P(|T| >= |t|)`.
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    inc_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Half-width of the normal-approximation 95% interval of the mean.
pub fn ci95_half_width(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    1.96 * libm::sqrt(sample_variance(xs) / xs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p_value: f64,
    pub df: f64,
    pub mean_diff: f64,
    /// Set when the paired differences have no spread.
    pub zero_variance: bool,
}

/// Paired t-test on `a - b` with the variance scaled by `1/k + test_train_ratio`.
///
/// A ratio of 0 gives the ordinary paired t-test.
pub fn corrected_ttest(a: &[f64], b: &[f64], test_train_ratio: f64) -> Result<TTest, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let k = a.len();
    if k < 2 {
        return Err(StatsError::TooFewSamples(k));
    }
    let d: alloc::vec::Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let m = mean(&d);
    let var = sample_variance(&d);
    let df = (k - 1) as f64;
    // differences that agree to rounding count as having no spread
    let scale = d.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if var <= (scale * 1e-12) * (scale * 1e-12) {
        let (t, p) = if m.abs() <= scale * 1e-12 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(m), 0.0)
        };
        return Ok(TTest {
            t,
            p_value: p,
            df,
            mean_diff: m,
            zero_variance: true,
        });
    }
    let t = m / libm::sqrt((1.0 / k as f64 + test_train_ratio) * var);
    Ok(TTest {
        t,
        p_value: two_sided_p(t, df),
        df,
        mean_diff: m,
        zero_variance: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};

    fn t_density(x: f64, df: f64) -> f64 {
        let c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * libm::log(df * core::f64::consts::PI);
        libm::exp(c - (df + 1.0) / 2.0 * libm::log1p(x * x / df))
    }

    // composite Simpson integral of the density from 0 to |t|
    fn simpson_two_sided(t: f64, df: f64) -> f64 {
        let n = 20_000;
        let h = t.abs() / n as f64;
        let mut s = t_density(0.0, df) + t_density(t.abs(), df);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * t_density(i as f64 * h, df);
        }
        1.0 - 2.0 * s * h / 3.0
    }

    #[test]
    fn ln_gamma_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(5.0) - libm::log(24.0)).abs() < 1e-12);
        assert!((ln_gamma(0.5) - 0.5 * libm::log(core::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn tabulated_quantiles() {
        // two-sided 5% critical values
        assert!((two_sided_p(2.262_157, 9.0) - 0.05).abs() < 1e-5);
        assert!((two_sided_p(1.984_217, 99.0) - 0.05).abs() < 1e-5);
        assert!((two_sided_p(12.706_205, 1.0) - 0.05).abs() < 1e-5);
        assert_eq!(two_sided_p(0.0, 5.0), 1.0);
    }

    #[test]
    fn cdf_matches_numerical_integration() {
        for &df in &[1.0, 3.0, 9.0, 30.0, 99.0] {
            for &t in &[0.1, 0.7, 1.5, 2.5, 4.0] {
                let a = two_sided_p(t, df);
                let b = simpson_two_sided(t, df);
                assert!((a - b).abs() < 1e-9, "df={df} t={t}: {a} vs {b}");
                let c = student_t_cdf(-t, df);
                assert!((c - a / 2.0).abs() < 1e-12);
                assert!((student_t_cdf(t, df) + c - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn corrected_example() {
        // ten differences with mean 0.05 and unbiased variance 0.01
        let s = libm::sqrt(0.01 * 9.0 / 10.0);
        let d: Vec<f64> = (0..10).map(|i| 0.05 + if i % 2 == 0 { s } else { -s }).collect();
        let zeros = [0.0; 10];
        assert!((sample_variance(&d) - 0.01).abs() < 1e-15);
        let r = corrected_ttest(&d, &zeros, 1.0 / 9.0).unwrap();
        let expected = 0.05 / libm::sqrt((0.1 + 1.0 / 9.0) * 0.01);
        assert!((r.t - expected).abs() < 1e-12);
        assert!((r.t - 1.088).abs() < 1e-3);
        assert_eq!(r.df, 9.0);
    }

    #[test]
    fn identical_samples() {
        let a = [0.7, 0.8, 0.75];
        let r = corrected_ttest(&a, &a, 0.1).unwrap();
        assert_eq!((r.t, r.p_value, r.zero_variance), (0.0, 1.0, true));
        let b = [0.6, 0.7, 0.65];
        let r = corrected_ttest(&a, &b, 0.1).unwrap();
        assert!(r.zero_variance);
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn errors() {
        assert_eq!(corrected_ttest(&[1.0], &[1.0], 0.0), Err(StatsError::TooFewSamples(1)));
        assert_eq!(corrected_ttest(&[1.0, 2.0], &[1.0], 0.0), Err(StatsError::LengthMismatch(2, 1)));
    }

    #[test]
    fn ratio_zero_is_classical_paired_t() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(3..40);
            let a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 0.9).collect();
            // textbook form: sum of differences over sqrt((n Σd² − (Σd)²)/(n−1))
            let sd: f64 = a.iter().zip(&b).map(|(x, y)| x - y).sum();
            let sd2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
            let nf = n as f64;
            let t_ref = sd / libm::sqrt((nf * sd2 - sd * sd) / (nf - 1.0));
            let r = corrected_ttest(&a, &b, 0.0).unwrap();
            assert!((r.t - t_ref).abs() < 1e-9 * t_ref.abs().max(1.0));
            assert!((r.p_value - simpson_two_sided(t_ref, nf - 1.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn ci_half_width_scales_with_sqrt_n() {
        let base = [1.0, -1.0];
        let small: Vec<f64> = base.iter().cycle().take(100).copied().collect();
        let big: Vec<f64> = base.iter().cycle().take(400).copied().collect();
        let ratio = ci95_half_width(&small) / ci95_half_width(&big);
        // variance estimates differ slightly through the n-1 denominator
        let expected = 2.0 * libm::sqrt((100.0 / 99.0) / (400.0 / 399.0));
        assert!((ratio - expected).abs() < 1e-12);
    }
}
