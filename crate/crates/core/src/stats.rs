//! Small statistics helpers: sample moments, least-squares lines, exponential
//! rate fits and the chi-square goodness-of-fit test.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Mean and standard error of the mean (sample std / sqrt(n)).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

/// Ordinary least squares `y = intercept + slope·x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::Fit(format!(
            "need at least two paired points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr,
    })
}

/// Least-squares slope only; cheaper than [`linear_fit`] in tight loops.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let nf = x.len() as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Decay rate k in y ≈ A·exp(−k t).
    pub rate: f64,
    pub rate_stderr: f64,
    pub amplitude: f64,
    pub points: usize,
}

impl RateFit {
    /// Two-sided interval at the given normal quantile.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.rate - z * self.rate_stderr, self.rate + z * self.rate_stderr)
    }
}

/// Log-linear fit of an exponential decay to the leading run of samples whose
/// value stays above `floor_fraction` of the first value.
pub fn fit_decay_rate(t: &[f64], y: &[f64], floor_fraction: f64) -> Result<RateFit> {
    let y0 = *y.first().ok_or_else(|| Error::Fit("empty series".into()))?;
    if !(y0 > 0.0) {
        return Err(Error::Fit(format!("initial value {y0} is not positive")));
    }
    let floor = floor_fraction * y0;
    let n = y.iter().take_while(|v| **v > floor).count();
    if n < 3 {
        return Err(Error::Fit(format!(
            "signal falls below {floor:.3e} after {n} samples"
        )));
    }
    let logs: Vec<f64> = y[..n].iter().map(|v| v.ln()).collect();
    let line = linear_fit(&t[..n], &logs)?;
    Ok(RateFit {
        rate: -line.slope,
        rate_stderr: line.slope_stderr,
        amplitude: line.intercept.exp(),
        points: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square of observed counts against expected probabilities.
/// Every bin must expect at least `min_expected` counts.
pub fn chi_square(observed: &[f64], probs: &[f64], min_expected: f64) -> Result<ChiSquare> {
    if observed.len() != probs.len() || observed.len() < 2 {
        return Err(Error::Statistics("mismatched or too few bins".into()));
    }
    let total: f64 = observed.iter().sum();
    let mut stat = 0.0;
    for (i, (o, p)) in observed.iter().zip(probs).enumerate() {
        let e = total * p;
        if e < min_expected {
            return Err(Error::Statistics(format!(
                "bin {i} expects {e:.2} counts, below {min_expected}"
            )));
        }
        stat += (o - e).powi(2) / e;
    }
    let dof = observed.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Statistics(e.to_string()))?;
    Ok(ChiSquare {
        statistic: stat,
        dof,
        p_value: 1.0 - dist.cdf(stat),
    })
}
