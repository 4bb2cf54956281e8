//! Keep-alive and pre-warming policies.
//!
//! Every policy answers the same question after each invocation: how long to
//! wait before (re)loading the application image, and how long to keep it
//! loaded afterwards. The hybrid policy answers it per application from an
//! idle-time histogram, falling back to a long standard keep-alive while the
//! histogram is not representative and to an ARIMA forecast when most idle
//! times overflow the histogram range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::{self, ArimaModel, ItSeries, DEFAULT_SERIES_CAPACITY};
use crate::histogram::{IdleTime, IdleTimeHistogram, DEFAULT_RANGE_MINUTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSource {
    Histogram,
    StandardKeepAlive,
    Arima,
    Fixed,
    NoUnload,
}

/// Windows governing an application until its next invocation.
///
/// `pre_warm_secs == 0` means the image is not unloaded after execution and
/// the keep-alive window starts at execution end. Otherwise the image is
/// unloaded, reloaded `pre_warm_secs` after execution end, and kept for
/// `keep_alive_secs` from that load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub pre_warm_secs: f64,
    pub keep_alive_secs: f64,
    pub source: DecisionSource,
}

impl PolicyDecision {
    /// End of the warm interval, measured from execution end.
    pub fn warm_until_secs(&self) -> f64 {
        self.pre_warm_secs + self.keep_alive_secs
    }
}

pub fn fixed_keep_alive(window_secs: f64) -> Result<PolicyDecision> {
    if window_secs.is_nan() || window_secs < 0.0 {
        return Err(Error::Config(format!("keep-alive window must be >= 0, got {window_secs}")));
    }
    Ok(PolicyDecision { pre_warm_secs: 0.0, keep_alive_secs: window_secs, source: DecisionSource::Fixed })
}

pub fn no_unload() -> PolicyDecision {
    PolicyDecision { pre_warm_secs: 0.0, keep_alive_secs: f64::INFINITY, source: DecisionSource::NoUnload }
}

/// What the histogram margin stretches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginAnchor {
    /// Coverage ends at `tail · (1 + margin)`.
    #[default]
    Tail,
    /// Keep-alive is `(tail - pre_warm) · (1 + margin)`.
    KeepAliveLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridConfig {
    pub range_minutes: u32,
    pub head_pct: f64,
    pub tail_pct: f64,
    pub margin: f64,
    pub arima_margin: f64,
    pub cv_threshold: f64,
    pub min_observations: u64,
    pub oob_trigger: f64,
    pub use_arima: bool,
    pub history_capacity: usize,
    pub margin_anchor: MarginAnchor,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            range_minutes: DEFAULT_RANGE_MINUTES,
            head_pct: 5.0,
            tail_pct: 99.0,
            margin: 0.10,
            arima_margin: 0.15,
            cv_threshold: 2.0,
            min_observations: 10,
            oob_trigger: 0.5,
            use_arima: true,
            history_capacity: DEFAULT_SERIES_CAPACITY,
            margin_anchor: MarginAnchor::Tail,
        }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.range_minutes == 0 {
            return bad("range_minutes must be >= 1".into());
        }
        if !(0.0 <= self.head_pct && self.head_pct <= self.tail_pct && self.tail_pct <= 100.0) {
            return bad(format!("need 0 <= head_pct <= tail_pct <= 100, got {} and {}", self.head_pct, self.tail_pct));
        }
        for (name, m) in [("margin", self.margin), ("arima_margin", self.arima_margin)] {
            if !(0.0..1.0).contains(&m) {
                return bad(format!("{name} must be in [0, 1), got {m}"));
            }
        }
        if self.cv_threshold.is_nan() || self.cv_threshold < 0.0 {
            return bad(format!("cv_threshold must be >= 0, got {}", self.cv_threshold));
        }
        if !(0.0..=1.0).contains(&self.oob_trigger) {
            return bad(format!("oob_trigger must be in [0, 1], got {}", self.oob_trigger));
        }
        if self.history_capacity < forecaster::MIN_FIT_LEN {
            return bad(format!("history_capacity must be >= {}", forecaster::MIN_FIT_LEN));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: HybridConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn range_secs(&self) -> f64 {
        self.range_minutes as f64 * 60.0
    }

    fn standard_keep_alive(&self) -> PolicyDecision {
        PolicyDecision {
            pre_warm_secs: 0.0,
            keep_alive_secs: self.range_secs(),
            source: DecisionSource::StandardKeepAlive,
        }
    }

    /// Windows from the histogram head and tail (seconds).
    pub fn histogram_windows(&self, head_secs: f64, tail_secs: f64) -> PolicyDecision {
        let pre_warm = head_secs * (1.0 - self.margin);
        let keep_alive = match self.margin_anchor {
            MarginAnchor::Tail => tail_secs * (1.0 + self.margin) - pre_warm,
            MarginAnchor::KeepAliveLength => (tail_secs - pre_warm) * (1.0 + self.margin),
        };
        PolicyDecision { pre_warm_secs: pre_warm, keep_alive_secs: keep_alive, source: DecisionSource::Histogram }
    }

    /// Windows around a predicted idle time (minutes): load `margin` early,
    /// stay until `margin` late.
    pub fn arima_windows(&self, predicted_minutes: f64) -> PolicyDecision {
        let t = predicted_minutes * 60.0;
        PolicyDecision {
            pre_warm_secs: t * (1.0 - self.arima_margin),
            keep_alive_secs: 2.0 * self.arima_margin * t,
            source: DecisionSource::Arima,
        }
    }
}

/// Per-application state of the hybrid policy.
#[derive(Debug, Clone)]
pub struct AppTracker {
    config: HybridConfig,
    histogram: IdleTimeHistogram,
    it_series: ItSeries,
    arima: Option<ArimaModel>,
    last_decision: PolicyDecision,
}

impl AppTracker {
    pub fn new(config: HybridConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            histogram: IdleTimeHistogram::new(config.range_minutes)?,
            it_series: ItSeries::new(config.history_capacity)?,
            arima: None,
            last_decision: config.standard_keep_alive(),
            config,
        })
    }

    pub fn config(&self) -> &HybridConfig {
        &self.config
    }

    pub fn histogram(&self) -> &IdleTimeHistogram {
        &self.histogram
    }

    pub fn it_series(&self) -> &ItSeries {
        &self.it_series
    }

    pub fn arima(&self) -> Option<&ArimaModel> {
        self.arima.as_ref()
    }

    pub fn last_decision(&self) -> PolicyDecision {
        self.last_decision
    }

    /// Records the idle time that preceded this invocation (none for an
    /// application's first invocation) and returns the next decision.
    pub fn on_invocation(&mut self, idle: Option<IdleTime>) -> PolicyDecision {
        if let Some(it) = idle {
            self.histogram.observe(it);
            self.it_series.push(it.minutes()).expect("IdleTime is finite and non-negative");
            if self.arima_eligible() {
                self.arima = forecaster::fit(&self.it_series).ok();
            }
        }
        self.last_decision = self.hybrid_decide();
        self.last_decision
    }

    /// Representativeness gate: enough observations and concentrated bins.
    /// With no in-range mass the overflow counter is scored as one more bin,
    /// so an app whose idle times all overflow still counts as concentrated.
    fn is_representative(&self) -> bool {
        let h = &self.histogram;
        if h.total_count() < self.config.min_observations {
            return false;
        }
        match h.cv().or_else(|| h.cv_with_oob()) {
            Some(cv) => cv >= self.config.cv_threshold,
            None => false,
        }
    }

    fn oob_heavy(&self) -> bool {
        self.histogram.oob_fraction().is_ok_and(|f| f > self.config.oob_trigger)
    }

    fn arima_eligible(&self) -> bool {
        self.config.use_arima && self.it_series.is_fittable() && self.is_representative() && self.oob_heavy()
    }

    /// Decision for the current state. Pure: reads the last fitted model
    /// instead of refitting.
    pub fn hybrid_decide(&self) -> PolicyDecision {
        let cfg = &self.config;
        if !self.is_representative() {
            return cfg.standard_keep_alive();
        }
        if self.oob_heavy() {
            if !cfg.use_arima {
                return cfg.standard_keep_alive();
            }
            return self
                .arima
                .as_ref()
                .and_then(|m| forecaster::forecast_next(m, &self.it_series).ok())
                .map(|t| cfg.arima_windows(t))
                .unwrap_or_else(|| cfg.standard_keep_alive());
        }
        let head = self.histogram.percentile_head(cfg.head_pct);
        let tail = self.histogram.percentile_tail(cfg.tail_pct);
        match (head, tail) {
            (Ok(head), Ok(tail)) => cfg.histogram_windows(head, tail),
            _ => cfg.standard_keep_alive(),
        }
    }
}

/// A policy instance driving one application through a replay.
pub trait KeepAlivePolicy {
    fn on_invocation(&mut self, idle: Option<IdleTime>) -> PolicyDecision;
}

/// The same windows after every invocation.
impl KeepAlivePolicy for PolicyDecision {
    fn on_invocation(&mut self, _idle: Option<IdleTime>) -> PolicyDecision {
        *self
    }
}

impl KeepAlivePolicy for AppTracker {
    fn on_invocation(&mut self, idle: Option<IdleTime>) -> PolicyDecision {
        AppTracker::on_invocation(self, idle)
    }
}

/// Policy description, one per sweep configuration; builds fresh per-app state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    Fixed { keep_alive_minutes: f64 },
    NoUnload,
    Hybrid(HybridConfig),
}

impl PolicySpec {
    pub fn fixed_minutes(minutes: f64) -> Self {
        PolicySpec::Fixed { keep_alive_minutes: minutes }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PolicySpec::Fixed { keep_alive_minutes } => fixed_keep_alive(keep_alive_minutes * 60.0).map(|_| ()),
            PolicySpec::NoUnload => Ok(()),
            PolicySpec::Hybrid(cfg) => cfg.validate(),
        }
    }

    pub fn build(&self) -> Result<AppPolicy> {
        Ok(match self {
            PolicySpec::Fixed { keep_alive_minutes } => AppPolicy::Static(fixed_keep_alive(keep_alive_minutes * 60.0)?),
            PolicySpec::NoUnload => AppPolicy::Static(no_unload()),
            PolicySpec::Hybrid(cfg) => AppPolicy::Hybrid(Box::new(AppTracker::new(cfg.clone())?)),
        })
    }

    pub fn default_label(&self) -> String {
        match self {
            PolicySpec::Fixed { keep_alive_minutes } => format!("fixed-{keep_alive_minutes}m"),
            PolicySpec::NoUnload => "no-unload".into(),
            PolicySpec::Hybrid(cfg) => format!("hybrid-{}m[{},{}]", cfg.range_minutes, cfg.head_pct, cfg.tail_pct),
        }
    }
}

#[derive(Debug, Clone)]
pub enum AppPolicy {
    Static(PolicyDecision),
    Hybrid(Box<AppTracker>),
}

impl KeepAlivePolicy for AppPolicy {
    fn on_invocation(&mut self, idle: Option<IdleTime>) -> PolicyDecision {
        match self {
            AppPolicy::Static(d) => d.on_invocation(idle),
            AppPolicy::Hybrid(t) => t.on_invocation(idle),
        }
    }
}
