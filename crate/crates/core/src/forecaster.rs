//! Next-idle-time prediction for applications whose idle times mostly fall
//! outside the histogram range.
//!
//! A small auto-ARIMA: every order in `{0,1,2}³` except `(0,0,0)` is fit by
//! conditional least squares on the differenced series and the candidate with
//! the lowest AIC wins. Pure-AR candidates are ordinary least squares; anything
//! with MA terms starts from a Hannan-Rissanen estimate and is refined with
//! Levenberg-Marquardt on the conditional sum of squares.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SERIES_CAPACITY: usize = 64;

/// Shortest series [`fit`] accepts.
pub const MIN_FIT_LEN: usize = 4;

const MAX_ORDER: usize = 2;
const LM_MAX_ITERS: usize = 100;

/// Bounded FIFO of observed idle times, in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItSeries {
    values: VecDeque<f64>,
    capacity: usize,
}

impl Default for ItSeries {
    fn default() -> Self {
        Self::new(DEFAULT_SERIES_CAPACITY).expect("default capacity is valid")
    }
}

impl ItSeries {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity < MIN_FIT_LEN {
            return Err(Error::Config(format!(
                "idle-time history must hold at least {MIN_FIT_LEN} values, got {capacity}"
            )));
        }
        Ok(Self { values: VecDeque::with_capacity(capacity), capacity })
    }

    pub fn from_values(capacity: usize, values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut s = Self::new(capacity)?;
        for v in values {
            s.push(v)?;
        }
        Ok(s)
    }

    /// Appends one idle time, evicting the oldest when full.
    pub fn push(&mut self, minutes: f64) -> Result<()> {
        if !minutes.is_finite() || minutes < 0.0 {
            return Err(Error::Contract(format!("idle time must be finite and >= 0, got {minutes}")));
        }
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(minutes);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_fittable(&self) -> bool {
        self.values.len() >= MIN_FIT_LEN
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.values.iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub const fn new(p: usize, d: usize, q: usize) -> Self {
        Self { p, d, q }
    }

    /// The 26 non-degenerate orders searched by [`fit`], in search order.
    pub fn grid() -> impl Iterator<Item = ArimaOrder> {
        (0..=MAX_ORDER).flat_map(|d| {
            (0..=MAX_ORDER).flat_map(move |p| {
                (0..=MAX_ORDER).map(move |q| ArimaOrder::new(p, d, q)).filter(|o| o.p + o.d + o.q > 0)
            })
        })
    }

    /// Intercept plus AR and MA coefficients.
    fn n_params(self) -> usize {
        1 + self.p + self.q
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub intercept: f64,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub sse: f64,
    /// Residual terms the fit was scored on.
    pub n_obs: usize,
    pub aic: f64,
}

/// Selects the minimum-AIC order over the grid.
pub fn fit(series: &ItSeries) -> Result<ArimaModel> {
    fit_values(&series.to_vec())
}

pub fn fit_values(values: &[f64]) -> Result<ArimaModel> {
    if values.len() < MIN_FIT_LEN {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_FIT_LEN} idle times to fit, have {}",
            values.len()
        )));
    }
    let floor = sse_floor(values);
    let mut best: Option<ArimaModel> = None;
    for order in ArimaOrder::grid() {
        let Some(model) = fit_order_with_floor(values, order, floor) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| model.aic < b.aic) {
            best = Some(model);
        }
    }
    best.ok_or_else(|| Error::InsufficientData("no ARIMA candidate could be fit".into()))
}

/// Fits one fixed order. `None` when the series is too short for it or the
/// estimate is not finite.
pub fn fit_order(values: &[f64], order: ArimaOrder) -> Option<ArimaModel> {
    fit_order_with_floor(values, order, sse_floor(values))
}

fn fit_order_with_floor(values: &[f64], order: ArimaOrder, floor: f64) -> Option<ArimaModel> {
    let w = difference(values, order.d);
    let k = order.n_params();
    let n_obs = w.len().checked_sub(order.p)?;
    if n_obs <= k {
        return None;
    }
    let params = if order.q == 0 {
        ols_ar(&w, order.p)?
    } else {
        let init = hannan_rissanen(&w, order).unwrap_or_else(|| {
            let mut b = ols_ar(&w, order.p).unwrap_or_else(|| vec![0.0; 1 + order.p]);
            b.resize(k, 0.0);
            b
        });
        levenberg_marquardt(&w, order, init)
    };
    let sse = css_sse(&w, order, &params);
    if !sse.is_finite() || params.iter().any(|b| !b.is_finite()) {
        return None;
    }
    let n = n_obs as f64;
    let aic = n * (sse / n).max(floor).ln() + 2.0 * k as f64;
    Some(ArimaModel {
        order,
        intercept: params[0],
        ar: params[1..1 + order.p].to_vec(),
        ma: params[1 + order.p..].to_vec(),
        sse,
        n_obs,
        aic,
    })
}

/// One-step-ahead conditional mean in minutes, clamped at zero.
pub fn forecast_next(model: &ArimaModel, series: &ItSeries) -> Result<f64> {
    forecast_next_values(model, &series.to_vec())
}

pub fn forecast_next_values(model: &ArimaModel, values: &[f64]) -> Result<f64> {
    let order = model.order;
    if values.len() <= order.d + order.p {
        return Err(Error::InsufficientData("series shorter than the model order".into()));
    }
    let w = difference(values, order.d);
    let params = model.params();
    let resid = css_residuals(&w, order, &params);
    let m = w.len();
    let mut next = model.intercept;
    for (i, phi) in model.ar.iter().enumerate() {
        next += phi * w[m - 1 - i];
    }
    for (j, theta) in model.ma.iter().enumerate() {
        // residuals start at index p
        if let Some(idx) = (m - 1 - j).checked_sub(order.p) {
            next += theta * resid[idx];
        }
    }
    let raw = integrate_next(values, order.d, next);
    if !raw.is_finite() {
        return Err(Error::InsufficientData("forecast is not finite".into()));
    }
    Ok(raw.max(0.0))
}

/// Appends an idle time and refits on the retained window.
pub fn update(series: &mut ItSeries, new_it: f64) -> Result<ArimaModel> {
    series.push(new_it)?;
    fit(series)
}

impl ArimaModel {
    fn params(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.order.n_params());
        b.push(self.intercept);
        b.extend_from_slice(&self.ar);
        b.extend_from_slice(&self.ma);
        b
    }
}

fn difference(values: &[f64], d: usize) -> Vec<f64> {
    let mut w = values.to_vec();
    for _ in 0..d {
        w = w.windows(2).map(|p| p[1] - p[0]).collect();
    }
    w
}

/// Undoes `d` rounds of differencing for the value after `values`.
fn integrate_next(values: &[f64], d: usize, diff_next: f64) -> f64 {
    let n = values.len();
    match d {
        0 => diff_next,
        1 => values[n - 1] + diff_next,
        2 => diff_next + 2.0 * values[n - 1] - values[n - 2],
        _ => unreachable!("differencing order capped at {MAX_ORDER}"),
    }
}

/// Residuals for t in `p..w.len()`, pre-sample errors taken as zero.
fn css_residuals(w: &[f64], order: ArimaOrder, params: &[f64]) -> Vec<f64> {
    let (p, q) = (order.p, order.q);
    let c = params[0];
    let ar = &params[1..1 + p];
    let ma = &params[1 + p..1 + p + q];
    let mut e = Vec::with_capacity(w.len().saturating_sub(p));
    for t in p..w.len() {
        let mut pred = c;
        for (i, phi) in ar.iter().enumerate() {
            pred += phi * w[t - 1 - i];
        }
        let k = t - p;
        for (j, theta) in ma.iter().enumerate() {
            if k > j {
                pred += theta * e[k - 1 - j];
            }
        }
        e.push(w[t] - pred);
    }
    e
}

fn css_sse(w: &[f64], order: ArimaOrder, params: &[f64]) -> f64 {
    css_residuals(w, order, params).iter().map(|e| e * e).sum()
}

/// Floor on SSE/n so exact fits compare on parameter count rather than on
/// rounding noise.
fn sse_floor(values: &[f64]) -> f64 {
    let mean_sq = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
    1e-14 * mean_sq.max(1.0)
}

/// Minimum-norm least squares via SVD.
fn least_squares(x: DMatrix<f64>, y: DVector<f64>) -> Option<Vec<f64>> {
    let svd = x.svd(true, true);
    let sol = svd.solve(&y, 1e-10).ok()?;
    let out: Vec<f64> = sol.iter().copied().collect();
    out.iter().all(|b| b.is_finite()).then_some(out)
}

/// Intercept and AR coefficients by OLS.
fn ols_ar(w: &[f64], p: usize) -> Option<Vec<f64>> {
    let rows = w.len().checked_sub(p)?;
    if rows == 0 {
        return None;
    }
    let x = DMatrix::from_fn(rows, 1 + p, |r, c| if c == 0 { 1.0 } else { w[p + r - c] });
    let y = DVector::from_fn(rows, |r, _| w[p + r]);
    least_squares(x, y)
}

/// Two-stage estimate: a long AR supplies proxy innovations, then the ARMA
/// regression is solved by OLS on lagged values and lagged proxies.
fn hannan_rissanen(w: &[f64], order: ArimaOrder) -> Option<Vec<f64>> {
    let (p, q) = (order.p, order.q);
    let long = (p.max(q) + 2).min(w.len() / 3);
    if long == 0 {
        return None;
    }
    let ar_long = ols_ar(w, long)?;
    let proxy = css_residuals(w, ArimaOrder::new(long, 0, 0), &ar_long);
    // proxy[i] is the innovation at time long + i
    let start = long + q.max(p);
    let rows = w.len().checked_sub(start)?;
    if rows <= order.n_params() {
        return None;
    }
    let x = DMatrix::from_fn(rows, order.n_params(), |r, c| {
        let t = start + r;
        match c {
            0 => 1.0,
            c if c <= p => w[t - c],
            c => proxy[t - (c - p) - long],
        }
    });
    let y = DVector::from_fn(rows, |r, _| w[start + r]);
    let mut beta = least_squares(x, y)?;
    if !ma_invertible(&beta[1 + p..]) {
        beta[1 + p..].iter_mut().for_each(|t| *t = 0.0);
    }
    Some(beta)
}

/// Roots of `1 + θ₁z + θ₂z²` outside the unit circle.
fn ma_invertible(theta: &[f64]) -> bool {
    const EDGE: f64 = 1.0 - 1e-6;
    match theta {
        [] => true,
        [t1] => t1.abs() < EDGE,
        [t1, t2] => t2.abs() < EDGE && t2 - t1 > -EDGE && t1 + t2 > -EDGE,
        _ => false,
    }
}

fn levenberg_marquardt(w: &[f64], order: ArimaOrder, init: Vec<f64>) -> Vec<f64> {
    let k = order.n_params();
    let ma_range = 1 + order.p..k;
    let mut beta = init;
    let mut resid = css_residuals(w, order, &beta);
    let mut sse: f64 = resid.iter().map(|e| e * e).sum();
    if !sse.is_finite() {
        return beta;
    }
    let mut lambda = 1e-3;
    for _ in 0..LM_MAX_ITERS {
        let n = resid.len();
        let mut jac = DMatrix::<f64>::zeros(n, k);
        for c in 0..k {
            let h = 1e-7 * beta[c].abs().max(1.0);
            let mut bumped = beta.clone();
            bumped[c] += h;
            let r2 = css_residuals(w, order, &bumped);
            for r in 0..n {
                jac[(r, c)] = (r2[r] - resid[r]) / h;
            }
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * DVector::from_column_slice(&resid);
        let mut improved = false;
        while lambda < 1e10 {
            let mut a = jtj.clone();
            for i in 0..k {
                a[(i, i)] += lambda * (jtj[(i, i)] + 1e-12);
            }
            let Some(step) = a.lu().solve(&(-&grad)) else {
                lambda *= 4.0;
                continue;
            };
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
            if ma_invertible(&cand[ma_range.clone()]) {
                let r = css_residuals(w, order, &cand);
                let s: f64 = r.iter().map(|e| e * e).sum();
                if s.is_finite() && s < sse {
                    let rel = (sse - s) / sse.max(f64::MIN_POSITIVE);
                    beta = cand;
                    resid = r;
                    sse = s;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = rel > 1e-10;
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    beta
}
