//! Streaming mean/variance accumulators and least-squares slope fits.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Welford accumulator, mergeable with Chan's pairwise update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        let wb = other.count as f64 / n;
        self.mean += delta * wb;
        self.m2 += other.m2 + delta * delta * self.count as f64 * wb;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    /// `sqrt(variance / count)`.
    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Least-squares fit of `log y = a + b log x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero for an exact two-point fit.
    pub slope_stderr: f64,
    /// Half-width of the 95% confidence interval for the slope.
    pub half_width: f64,
    pub points: usize,
}

impl SlopeFit {
    pub fn prefactor(&self) -> f64 {
        self.intercept.exp()
    }
}

pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput("slope fit needs paired samples".into()));
    }
    if xs.len() < 2 {
        return Err(Error::InvalidInput(
            "slope fit needs at least two points".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidInput(
            "log-log fit needs positive finite values".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput(
            "slope fit needs distinct abscissae".into(),
        ));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_stderr, half_width) = if lx.len() > 2 {
        let dof = n - 2.0;
        let rss: f64 = lx
            .iter()
            .zip(&ly)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        let se = (rss / dof / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, dof)
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .inverse_cdf(0.975);
        (se, t * se)
    } else {
        (0.0, 0.0)
    };
    Ok(SlopeFit {
        slope,
        intercept,
        slope_stderr,
        half_width,
        points: lx.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 8.0, 0.5];
        let mut r = RunningMoments::new();
        xs.iter().for_each(|&x| r.push(x));
        let mean = xs.iter().sum::<f64>() / 6.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        assert!((r.mean() - mean).abs() < 1e-14);
        assert!((r.variance() - var).abs() < 1e-13);
        assert!((r.stderr() - (var / 6.0).sqrt()).abs() < 1e-14);
        assert_eq!(RunningMoments::new().stderr(), 0.0);
    }

    proptest! {
        #[test]
        fn merge_equals_sequential(xs in prop::collection::vec(-1e3f64..1e3, 2..60), cut in 0usize..60) {
            let cut = cut.min(xs.len());
            let mut all = RunningMoments::new();
            xs.iter().for_each(|&x| all.push(x));
            let (mut a, mut b) = (RunningMoments::new(), RunningMoments::new());
            xs[..cut].iter().for_each(|&x| a.push(x));
            xs[cut..].iter().for_each(|&x| b.push(x));
            a.merge(&b);
            prop_assert_eq!(a.count(), all.count());
            prop_assert!((a.mean() - all.mean()).abs() <= 1e-9 * (1.0 + all.mean().abs()));
            prop_assert!((a.variance() - all.variance()).abs() <= 1e-8 * (1.0 + all.variance()));
        }
    }

    #[test]
    fn exact_power_law() {
        let xs = [0.1, 0.2, 0.4, 0.8];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        let fit = fit_loglog(&xs, &ys).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.prefactor() - 3.0).abs() < 1e-12);
        assert!(fit.half_width < 1e-6);
    }

    #[test]
    fn noisy_fit_has_interval() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.0];
        let ys = [1.0, 0.55, 0.24, 0.13, 0.06];
        let fit = fit_loglog(&xs, &ys).unwrap();
        assert!((fit.slope + 1.0).abs() < 0.1);
        assert!(fit.half_width > 0.0 && fit.half_width > fit.slope_stderr);
        assert!(fit_loglog(&[1.0], &[1.0]).is_err());
        assert!(fit_loglog(&[1.0, 2.0], &[1.0, 0.0]).is_err());
        assert!(fit_loglog(&[2.0, 2.0], &[1.0, 3.0]).is_err());
    }
}
