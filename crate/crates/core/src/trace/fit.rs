//! Goodness-of-fit checks for sampled or observed durations and memory sizes.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal};

use super::synthetic::{BurrParams, LogNormalParams};
use crate::error::{Error, Result};

const MIN_SAMPLES: usize = 100;
const REPORT_QUANTILES: [f64; 7] = [0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99];

type Curve = Box<dyn Fn(f64) -> f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistributionModel {
    LogNormal(LogNormalParams),
    Burr(BurrParams),
}

impl DistributionModel {
    fn validate(&self) -> Result<()> {
        match self {
            DistributionModel::LogNormal(p) => p.validate(),
            DistributionModel::Burr(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCheck {
    pub p: f64,
    pub sample: f64,
    pub model: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: DistributionModel,
    pub n: usize,
    pub mean: f64,
    /// Mean and (population) standard deviation of `ln x`.
    pub log_mean: f64,
    pub log_sigma: f64,
    /// Kolmogorov-Smirnov distance between the sample and the model CDF.
    pub ks_statistic: f64,
    pub quantiles: Vec<QuantileCheck>,
}

/// Compares a sample against a model: log moments, KS distance, and a few
/// quantiles side by side.
pub fn validate_distribution(samples: &[f64], model: &DistributionModel) -> Result<FitReport> {
    model.validate()?;
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData(format!("need at least {MIN_SAMPLES} samples, have {}", samples.len())));
    }
    if let Some(bad) = samples.iter().find(|&&x| !(x.is_finite() && x > 0.0)) {
        return Err(Error::Validation(format!("log-scale model needs positive samples, found {bad}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;

    let mean = sorted.iter().sum::<f64>() / n;
    let log_mean = sorted.iter().map(|x| x.ln()).sum::<f64>() / n;
    let log_sigma = (sorted.iter().map(|x| (x.ln() - log_mean).powi(2)).sum::<f64>() / n).sqrt();

    let (cdf, quantile): (Curve, Curve) = match *model {
        DistributionModel::LogNormal(p) => {
            let d = LogNormal::new(p.mu_log, p.sigma_log).map_err(|e| Error::Config(format!("log-normal: {e}")))?;
            (Box::new(move |x| d.cdf(x)), Box::new(move |u| d.inverse_cdf(u)))
        }
        DistributionModel::Burr(p) => (Box::new(move |x| p.cdf(x)), Box::new(move |u| p.quantile(u))),
    };

    let mut ks = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        ks = ks.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }

    let quantiles = REPORT_QUANTILES
        .iter()
        .map(|&p| {
            let idx = ((p * n).ceil() as usize).clamp(1, sorted.len()) - 1;
            QuantileCheck { p, sample: sorted[idx], model: quantile(p) }
        })
        .collect();

    Ok(FitReport { model: *model, n: sorted.len(), mean, log_mean, log_sigma, ks_statistic: ks, quantiles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn self_draw_has_small_ks() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LogNormalParams::default();
        let samples: Vec<f64> = (0..100_000).map(|_| p.sample(&mut rng)).collect();
        let r = validate_distribution(&samples, &DistributionModel::LogNormal(p)).unwrap();
        assert!(r.ks_statistic < 0.01, "{}", r.ks_statistic);
        assert!((r.log_mean + 0.38).abs() < 0.05);
    }

    #[test]
    fn constant_sample_is_far_from_lognormal() {
        let samples = vec![3.0; 500];
        let r = validate_distribution(&samples, &DistributionModel::LogNormal(LogNormalParams::default())).unwrap();
        assert!(r.ks_statistic >= 0.5, "{}", r.ks_statistic);
        assert!(r.ks_statistic <= 1.0);
        assert!(r.log_sigma < 1e-12);
    }

    #[test]
    fn bad_inputs() {
        let ok = vec![1.0; 200];
        let bad_model = DistributionModel::Burr(BurrParams { c: 0.0, k: 0.0, lambda: 0.0 });
        assert!(matches!(validate_distribution(&ok, &bad_model), Err(Error::Config(_))));
        let model = DistributionModel::Burr(BurrParams::default());
        assert!(matches!(validate_distribution(&ok[..50], &model), Err(Error::InsufficientData(_))));
        let mut neg = ok.clone();
        neg[7] = -2.0;
        assert!(matches!(validate_distribution(&neg, &model), Err(Error::Validation(_))));
    }
}
