//! Synthetic workloads drawn from fitted production distributions.
//!
//! Per-app average daily invocation rates follow a piecewise log-linear CDF;
//! the default puts 45% of apps at or below one invocation per hour and 81%
//! at or below one per minute, over eight decades. Arrivals follow one of
//! three inter-arrival models: periodic (timer-like, CV 0), Poisson (CV 1) or
//! a two-phase hyperexponential mixture (CV > 1). Non-periodic apps may group
//! invocations into sessions, as chained functions of one app do. Each app
//! also gets an execution time from a log-normal and an allocated-memory size
//! from a Burr XII distribution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AppTrace, SECS_PER_DAY};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu_log: f64,
    pub sigma_log: f64,
}

impl Default for LogNormalParams {
    /// Average function execution time, in seconds.
    fn default() -> Self {
        Self { mu_log: -0.38, sigma_log: 2.36 }
    }
}

impl LogNormalParams {
    pub fn validate(&self) -> Result<()> {
        if !self.mu_log.is_finite() || !(self.sigma_log.is_finite() && self.sigma_log > 0.0) {
            return Err(Error::Config(format!("invalid log-normal parameters {self:?}")));
        }
        Ok(())
    }

    pub fn median(&self) -> f64 {
        self.mu_log.exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        (self.mu_log + self.sigma_log * z).exp()
    }
}

/// Burr XII with CDF `1 - (1 + (x/λ)^c)^-k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurrParams {
    pub c: f64,
    pub k: f64,
    pub lambda: f64,
}

impl Default for BurrParams {
    /// Average allocated application memory, in MB.
    fn default() -> Self {
        Self { c: 11.652, k: 0.221, lambda: 107.083 }
    }
}

impl BurrParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.c) && ok(self.k) && ok(self.lambda)) {
            return Err(Error::Config(format!("invalid Burr parameters {self:?}")));
        }
        Ok(())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        1.0 - (1.0 + (x / self.lambda).powf(self.c)).powf(-self.k)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        self.lambda * ((1.0 - u).powf(-1.0 / self.k) - 1.0).powf(1.0 / self.c)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

/// Inter-arrival model of one application.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum IatModel {
    Periodic {
        period_secs: f64,
    },
    Poisson {
        rate_per_sec: f64,
    },
    /// With probability `burst_share` a gap is short; long gaps have
    /// `burst_ratio` times the short mean. The overall mean is `1/rate`.
    Mixture {
        rate_per_sec: f64,
        burst_share: f64,
        burst_ratio: f64,
    },
}

impl IatModel {
    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        let valid = match *self {
            IatModel::Periodic { period_secs } => ok(period_secs),
            IatModel::Poisson { rate_per_sec } => ok(rate_per_sec),
            IatModel::Mixture { rate_per_sec, burst_share, burst_ratio } => {
                ok(rate_per_sec) && burst_share > 0.0 && burst_share < 1.0 && burst_ratio > 1.0
            }
        };
        if valid {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid inter-arrival model {self:?}")))
        }
    }

    /// Arrival times in `[0, horizon)`.
    pub fn arrivals<R: Rng + ?Sized>(&self, horizon: f64, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::new();
        match *self {
            IatModel::Periodic { period_secs } => {
                let phase = rng.random::<f64>() * period_secs;
                let mut k = 0u64;
                loop {
                    let t = phase + k as f64 * period_secs;
                    if t >= horizon {
                        break;
                    }
                    out.push(t);
                    k += 1;
                }
            }
            IatModel::Poisson { rate_per_sec } => {
                let gap = Exp::new(rate_per_sec).expect("validated rate");
                let mut t = gap.sample(rng);
                while t < horizon {
                    out.push(t);
                    t += gap.sample(rng);
                }
            }
            IatModel::Mixture { rate_per_sec, burst_share, burst_ratio } => {
                let mean = 1.0 / rate_per_sec;
                let short_mean = mean / (burst_share + (1.0 - burst_share) * burst_ratio);
                let short = Exp::new(1.0 / short_mean).expect("validated rate");
                let long = Exp::new(1.0 / (short_mean * burst_ratio)).expect("validated rate");
                let draw = |rng: &mut R| {
                    if rng.random::<f64>() < burst_share {
                        short.sample(rng)
                    } else {
                        long.sample(rng)
                    }
                };
                let mut t = draw(rng);
                while t < horizon {
                    out.push(t);
                    t += draw(rng);
                }
            }
        }
        out
    }
}

/// Relative weights of the three models when apps draw their own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelMix {
    pub periodic: f64,
    pub poisson: f64,
    pub mixture: f64,
    pub burst_share: f64,
    pub burst_ratio: f64,
    pub sessions: SessionModel,
}

impl Default for ModelMix {
    fn default() -> Self {
        Self {
            periodic: 0.2,
            poisson: 0.1,
            mixture: 0.7,
            burst_share: 0.8,
            burst_ratio: 50.0,
            sessions: SessionModel::default(),
        }
    }
}

/// Session structure of non-periodic apps.
///
/// Each app draws a mean session size log-uniformly from
/// `[1, max_mean_size]`; a session holds one invocation plus a geometric
/// number of follow-ups, spaced by exponential gaps of mean `gap_secs`.
/// The app's daily rate counts every invocation, so sessions start
/// `mean size` times less often.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionModel {
    pub max_mean_size: f64,
    pub gap_secs: f64,
}

impl Default for SessionModel {
    fn default() -> Self {
        Self { max_mean_size: 7.0, gap_secs: 10.0 }
    }
}

impl SessionModel {
    fn validate(&self) -> Result<()> {
        if !(self.max_mean_size.is_finite() && self.max_mean_size >= 1.0)
            || !(self.gap_secs.is_finite() && self.gap_secs > 0.0)
        {
            return Err(Error::Config(format!("invalid session model {self:?}")));
        }
        Ok(())
    }

    fn draw_mean_size<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.max_mean_size.powf(rng.random::<f64>())
    }
}

/// Expands session starts into invocations; the result is sorted and
/// truncated at `horizon`.
fn expand_sessions<R: Rng + ?Sized>(
    starts: Vec<f64>,
    mean_size: f64,
    gap_secs: f64,
    horizon: f64,
    rng: &mut R,
) -> Vec<f64> {
    if mean_size <= 1.0 {
        return starts;
    }
    let extra = Geometric::new(1.0 / mean_size).expect("mean size > 1");
    let gap = Exp::new(1.0 / gap_secs).expect("validated gap");
    let mut out = Vec::with_capacity((starts.len() as f64 * mean_size) as usize);
    for s in starts {
        out.push(s);
        let mut t = s;
        for _ in 0..extra.sample(rng) {
            t += gap.sample(rng);
            if t >= horizon {
                break;
            }
            out.push(t);
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Piecewise log-linear CDF of per-app average daily invocations, given as
/// `(cumulative share, daily rate)` knots from share 0 to share 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RateDistribution {
    pub knots: Vec<(f64, f64)>,
}

impl Default for RateDistribution {
    fn default() -> Self {
        Self { knots: vec![(0.0, 0.01), (0.45, 24.0), (0.81, 1440.0), (1.0, 1e6)] }
    }
}

impl RateDistribution {
    pub fn constant(daily_rate: f64) -> Self {
        Self { knots: vec![(0.0, daily_rate), (1.0, daily_rate)] }
    }

    /// The same shape with every rate above `cap` lowered to `cap`.
    pub fn capped(self, cap: f64) -> Self {
        let mut knots: Vec<(f64, f64)> = Vec::new();
        for w in self.knots.windows(2) {
            let ((p0, r0), (p1, r1)) = (w[0], w[1]);
            knots.push((p0, r0.min(cap)));
            if r0 < cap && r1 > cap {
                let f = (cap.ln() - r0.ln()) / (r1.ln() - r0.ln());
                knots.push((p0 + f * (p1 - p0), cap));
            }
        }
        if let Some(&(p, r)) = self.knots.last() {
            knots.push((p, r.min(cap)));
        }
        Self { knots }
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.knots;
        let ok = k.len() >= 2
            && k[0].0 == 0.0
            && k[k.len() - 1].0 == 1.0
            && k.iter().all(|&(p, r)| p.is_finite() && r.is_finite() && r > 0.0)
            && k.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "rate knots must run from share 0 to share 1 with increasing shares, non-decreasing positive rates: {k:?}"
            )))
        }
    }

    /// Daily rate at cumulative share `u`.
    pub fn quantile(&self, u: f64) -> f64 {
        let i = self.knots.partition_point(|&(p, _)| p <= u).clamp(1, self.knots.len() - 1);
        let ((p0, r0), (p1, r1)) = (self.knots[i - 1], self.knots[i]);
        if r0 == r1 {
            return r0;
        }
        let f = ((u - p0) / (p1 - p0)).clamp(0.0, 1.0);
        (r0.ln() + f * (r1.ln() - r0.ln())).exp()
    }

    /// Share of apps with daily rate at or below `rate`.
    pub fn cdf(&self, rate: f64) -> f64 {
        let k = &self.knots;
        if rate < k[0].1 {
            return 0.0;
        }
        let i = k.partition_point(|&(_, r)| r <= rate);
        if i >= k.len() {
            return 1.0;
        }
        let ((p0, r0), (p1, r1)) = (k[i - 1], k[i]);
        p0 + (p1 - p0) * (rate.ln() - r0.ln()) / (r1.ln() - r0.ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalModel {
    /// Every app uses this model as given; the sampled rate is ignored.
    Fixed(IatModel),
    /// Each app draws a model kind by weight and uses its sampled rate.
    Sampled(ModelMix),
}

impl Default for ArrivalModel {
    fn default() -> Self {
        ArrivalModel::Sampled(ModelMix::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_apps: usize,
    pub horizon_secs: f64,
    pub rates: RateDistribution,
    pub arrivals: ArrivalModel,
    pub duration: LogNormalParams,
    pub memory: BurrParams,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_apps: 100,
            horizon_secs: SECS_PER_DAY,
            rates: RateDistribution::default(),
            arrivals: ArrivalModel::default(),
            duration: LogNormalParams::default(),
            memory: BurrParams::default(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.horizon_secs) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        self.rates.validate()?;
        self.duration.validate()?;
        self.memory.validate()?;
        match &self.arrivals {
            ArrivalModel::Fixed(m) => m.validate(),
            ArrivalModel::Sampled(mix) => {
                let w = [mix.periodic, mix.poisson, mix.mixture];
                if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::Config(format!("invalid model weights {mix:?}")));
                }
                mix.sessions.validate()?;
                if mix.mixture > 0.0 {
                    IatModel::Mixture { rate_per_sec: 1.0, burst_share: mix.burst_share, burst_ratio: mix.burst_ratio }
                        .validate()?;
                }
                Ok(())
            }
        }
    }

    /// Invocation times of one app, drawn from its own stream.
    fn app_arrivals(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let per_sec = self.rates.quantile(rng.random::<f64>()) / SECS_PER_DAY;
        let mix = match self.arrivals {
            ArrivalModel::Fixed(m) => return m.arrivals(self.horizon_secs, rng),
            ArrivalModel::Sampled(mix) => mix,
        };
        let total = mix.periodic + mix.poisson + mix.mixture;
        let u = rng.random::<f64>() * total;
        if u < mix.periodic {
            return IatModel::Periodic { period_secs: 1.0 / per_sec }.arrivals(self.horizon_secs, rng);
        }
        let size = mix.sessions.draw_mean_size(rng);
        let starts = per_sec / size;
        let model = if u < mix.periodic + mix.poisson {
            IatModel::Poisson { rate_per_sec: starts }
        } else {
            IatModel::Mixture { rate_per_sec: starts, burst_share: mix.burst_share, burst_ratio: mix.burst_ratio }
        };
        let starts = model.arrivals(self.horizon_secs, rng);
        expand_sessions(starts, size, mix.sessions.gap_secs, self.horizon_secs, rng)
    }
}

/// Generates one trace per app, dropping apps that drew no invocation.
/// A pure function of the spec: app `i` always uses stream `i` of the seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<AppTrace>> {
    spec.validate()?;
    let width = spec.n_apps.max(1).to_string().len();
    let traces = (0..spec.n_apps)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            let invocations = spec.app_arrivals(&mut rng);
            let memory = spec.memory.sample(&mut rng);
            let exec = spec.duration.sample(&mut rng);
            (!invocations.is_empty()).then(|| AppTrace {
                app_id: format!("app-{i:0width$}"),
                invocations,
                horizon: spec.horizon_secs,
                memory_mb: Some(memory),
                exec_secs: Some(exec),
            })
        })
        .collect();
    Ok(traces)
}
