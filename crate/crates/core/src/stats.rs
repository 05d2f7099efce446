//! Spectra of empirical means and the statistical checks used to compare
//! network samples with the Gaussian mean-field law.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::model::std_normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    fn weight(&self, k: usize, n: usize) -> f64 {
        match self {
            Window::Hann => 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos(),
            Window::Rectangular => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    /// Non-negative frequencies in cycles per time unit, `k / (n dt)`.
    pub frequencies: Vec<f64>,
    /// `|X_k|²` of the mean-removed, windowed signal at those frequencies.
    pub power: Vec<f64>,
    pub window: Window,
    pub n: usize,
    pub dt: f64,
    /// `Σ x_k²` of the transformed (mean-removed, windowed) signal.
    pub energy: f64,
    /// `|Σ|X_k|²/n − energy| / energy` over the full two-sided spectrum.
    pub parseval_error: f64,
}

impl SpectrumResult {
    /// Frequency resolution `1 / (n dt)`.
    pub fn bin_width(&self) -> f64 {
        1.0 / (self.n as f64 * self.dt)
    }

    /// Root mean square of the mean-removed signal, corrected for the
    /// window's attenuation.
    pub fn rms(&self) -> f64 {
        let weight: f64 = (0..self.n).map(|k| self.window.weight(k, self.n).powi(2)).sum();
        (self.energy / weight).sqrt()
    }

    /// Frequency and power of the largest bin in `(0, max_frequency]`.
    pub fn dominant_below(&self, max_frequency: f64) -> Option<(f64, f64)> {
        self.frequencies
            .iter()
            .zip(&self.power)
            .skip(1)
            .take_while(|(f, _)| **f <= max_frequency)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(f, p)| (*f, *p))
    }

    /// Frequency and power of the largest bin above zero frequency.
    pub fn dominant(&self) -> Option<(f64, f64)> {
        self.frequencies.iter().zip(&self.power).skip(1).max_by(|a, b| a.1.total_cmp(b.1)).map(|(f, p)| (*f, *p))
    }
}

/// Squared DFT moduli of a uniformly sampled signal after removing its mean
/// and applying `window`.
pub fn power_spectrum(signal: &[f64], dt: f64, window: Window) -> Result<SpectrumResult> {
    let n = signal.len();
    if n < 16 {
        return Err(Error::Stats(format!("a spectrum needs at least 16 samples, got {n}")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Stats(format!("sampling step must be positive, got {dt}")));
    }
    if signal.iter().any(|x| !x.is_finite()) {
        return Err(Error::Stats("signal contains non-finite values".into()));
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> =
        signal.iter().enumerate().map(|(k, x)| Complex::new((x - mean) * window.weight(k, n), 0.0)).collect();
    let energy: f64 = buf.iter().map(|c| c.re * c.re).sum();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let total: f64 = buf.iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64;
    let parseval_error = if energy > 0.0 { (total - energy).abs() / energy } else { total };
    let half = n / 2 + 1;
    Ok(SpectrumResult {
        frequencies: (0..half).map(|k| k as f64 / (n as f64 * dt)).collect(),
        power: buf[..half].iter().map(|c| c.norm_sqr()).collect(),
        window,
        n,
        dt,
        energy,
        parseval_error,
    })
}

/// [`power_spectrum`] of a sampled time series; refuses non-uniform sampling.
pub fn power_spectrum_of_series(times: &[f64], values: &[f64], window: Window) -> Result<SpectrumResult> {
    if times.len() != values.len() {
        return Err(Error::Stats("times and values differ in length".into()));
    }
    if times.len() < 16 {
        return Err(Error::Stats(format!("a spectrum needs at least 16 samples, got {}", times.len())));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for (k, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
            return Err(Error::Stats(format!("non-uniform sampling at index {k}: step {} vs {dt}", w[1] - w[0])));
        }
    }
    power_spectrum(values, dt, window)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Reject,
    FailToReject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub alpha: f64,
    /// Threshold on `statistic` equivalent to `p_value < alpha`, when the test has one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critical_value: Option<f64>,
    pub verdict: Verdict,
}

impl TestReport {
    pub fn rejects(&self) -> bool {
        self.verdict == Verdict::Reject
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Stats(format!("significance level must lie in (0, 1), got {alpha}")))
    }
}

/// Kolmogorov distribution tail `P(K > x)`, with the series truncated at 100 terms.
pub fn kolmogorov_tail(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // The alternating series converges slowly here; use the theta-function form.
        let s: f64 = (1..=100)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (-m * m * PI * PI / (8.0 * x * x)).exp()
            })
            .sum();
        return (1.0 - (2.0 * PI).sqrt() / x * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * (k * k) as f64 * x * x).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// `x` with `kolmogorov_tail(x) = alpha`.
fn kolmogorov_quantile(alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_tail(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One-sample KS statistic `sup |F_n − F|` of `samples` against the CDF `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    })
}

/// KS test of `samples` against `Gaussian(mu, v)` with the asymptotic
/// Kolmogorov p-value.
pub fn ks_gaussian_test(samples: &[f64], mu: f64, v: f64, alpha: f64) -> Result<TestReport> {
    if !(v > 0.0) {
        return Err(Error::Stats(format!("Gaussian variance must be positive, got {v}")));
    }
    if samples.len() < 20 {
        return Err(Error::Stats(format!("KS test needs at least 20 samples, got {}", samples.len())));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Stats("samples contain non-finite values".into()));
    }
    check_alpha(alpha)?;
    let sd = v.sqrt();
    let n = samples.len();
    let d = ks_statistic(samples, |x| std_normal_cdf((x - mu) / sd));
    let root_n = (n as f64).sqrt();
    let p_value = kolmogorov_tail(root_n * d);
    let critical = kolmogorov_quantile(alpha) / root_n;
    Ok(TestReport {
        test: "kolmogorov_smirnov".into(),
        statistic: d,
        p_value,
        n,
        alpha,
        critical_value: Some(critical),
        verdict: if d > critical { Verdict::Reject } else { Verdict::FailToReject },
    })
}

/// Sample Pearson correlation of two equally long samples.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Stats(format!("samples differ in length ({} vs {})", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Stats("correlation of a constant sample is undefined".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson test of `r = 0` with the two-sided Student-t p-value on `n − 2` degrees of freedom.
pub fn independence_test(x: &[f64], y: &[f64], alpha: f64) -> Result<TestReport> {
    if x.len() != y.len() {
        return Err(Error::Stats(format!("samples differ in length ({} vs {})", x.len(), y.len())));
    }
    if x.len() < 10 {
        return Err(Error::Stats(format!("independence test needs at least 10 pairs, got {}", x.len())));
    }
    check_alpha(alpha)?;
    let r = pearson(x, y)?;
    let n = x.len();
    let dof = (n - 2) as f64;
    let p_value = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (dof / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Stats(e.to_string()))?;
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok(TestReport {
        test: "pearson".into(),
        statistic: r,
        p_value,
        n,
        alpha,
        critical_value: None,
        verdict: if p_value < alpha { Verdict::Reject } else { Verdict::FailToReject },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(ln N, ln d)`.
pub fn convergence_rate(discrepancies: &[(f64, f64)]) -> Result<RateFit> {
    if let Some(&(n, d)) = discrepancies.iter().find(|(n, d)| !(*n > 0.0) || !(*d > 0.0)) {
        return Err(Error::Stats(format!("sizes and discrepancies must be positive, got ({n}, {d})")));
    }
    let mut sizes: Vec<f64> = discrepancies.iter().map(|p| p.0).collect();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::Stats(format!("a rate fit needs at least 3 distinct sizes, got {}", sizes.len())));
    }
    let pts: Vec<(f64, f64)> = discrepancies.iter().map(|(n, d)| (n.ln(), d.ln())).collect();
    let m = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(RateFit { slope, intercept, r_squared })
}
