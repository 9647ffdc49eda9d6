//! Small statistics helpers: Monte Carlo means, least-squares slopes and
//! bootstrap over replicas.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{stream, StreamRole};

/// Sample mean and its standard error (`n - 1` normalisation).
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

/// Ordinary least-squares line with the classical slope standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub n: usize,
}

pub fn ols(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Some(LinearFit {
        slope,
        intercept,
        slope_stderr,
        n,
    })
}

/// Slope of `ln y` against `ln x`; `None` if any value is nonpositive.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    ols(&lx, &ly)
}

/// Bootstrap distribution summary of a statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub estimate: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
    pub sample_size: usize,
}

/// Resamples replica indices with replacement and re-evaluates `stat`.
/// Resamples where the statistic is undefined are skipped. The 95% interval
/// is the percentile interval of the valid resamples.
pub fn bootstrap<F>(sample_size: usize, resamples: usize, seed: u64, stat: F) -> Option<Bootstrap>
where
    F: Fn(&[usize]) -> Option<f64>,
{
    let all: Vec<usize> = (0..sample_size).collect();
    let estimate = stat(&all)?;
    let mut rng = stream(seed, 0, StreamRole::Bootstrap);
    let mut idx = vec![0usize; sample_size];
    let mut values = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for v in idx.iter_mut() {
            *v = rng.gen_range(0..sample_size);
        }
        if let Some(v) = stat(&idx) {
            if v.is_finite() {
                values.push(v);
            }
        }
    }
    if values.len() < 2 {
        return None;
    }
    let (_, se_of_mean) = mean_stderr(&values);
    let stderr = se_of_mean * (values.len() as f64).sqrt();
    values.sort_by(f64::total_cmp);
    let q = |p: f64| values[((p * (values.len() - 1) as f64).round() as usize).min(values.len() - 1)];
    Some(Bootstrap {
        estimate,
        stderr,
        ci_low: q(0.025),
        ci_high: q(0.975),
        resamples: values.len(),
        sample_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_error() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let fit = ols(&x, &y).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-14);
        assert!((fit.intercept + 1.0).abs() < 1e-14);
        assert!(fit.slope_stderr < 1e-12);
        let pw = loglog_fit(&[0.1, 0.2, 0.4], &[0.01, 0.04, 0.16]).unwrap();
        assert!((pw.slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_of_mean() {
        let data: Vec<f64> = (0..400).map(|k| ((k * 37) % 101) as f64).collect();
        let b = bootstrap(data.len(), 200, 3, |idx| Some(idx.iter().map(|&i| data[i]).sum::<f64>() / idx.len() as f64))
            .unwrap();
        let (m, se) = mean_stderr(&data);
        assert_eq!(b.estimate, m);
        assert!((b.stderr / se - 1.0).abs() < 0.3);
        assert!(b.ci_low < m && m < b.ci_high);
    }
}
