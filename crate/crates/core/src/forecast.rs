//! Monte Carlo one-step-ahead prediction with a trained DSVM.
//!
//! The predictive density of `r_{T+1}` given `r_{1:T}` is approximated by an
//! equal-weight mixture of zero-mean Gaussians, one per ancestral sample
//! `z_{1:T} ~ q_φ`, `z_{T+1} ~ p_θ(·|z_T)`.

use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsvm::{at_step, encode_backward, posterior_step, prior_step, volatility_step, Dsvm};
use crate::error::{Error, Result};
use crate::garch::RollingRecord;
use crate::scalar::{Scalar, HALF_LN_2PI};
use crate::stats::{log_sum_exp, sample_std};
use crate::tensor::{Array, Eager, Graph, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveMixture<T> {
    sigmas: Vec<T>,
}

impl<T: Scalar> PredictiveMixture<T> {
    pub fn new(sigmas: Vec<T>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::InvalidInput("mixture needs at least one component".into()));
        }
        if let Some(s) = sigmas.iter().find(|s| !(s.as_f64() > 0.0 && s.as_f64().is_finite())) {
            return Err(Error::InvalidInput(format!("mixture component σ = {s:?} is not positive")));
        }
        Ok(Self { sigmas })
    }

    pub fn sigmas(&self) -> &[T] {
        &self.sigmas
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    /// `−log((1/S) Σ_s N(r; 0, σ_s²))`.
    pub fn predictive_nll(&self, r: f64) -> f64 {
        let logs: Vec<f64> = self
            .sigmas
            .iter()
            .map(|s| {
                let s = s.as_f64();
                -HALF_LN_2PI - s.ln() - 0.5 * (r / s) * (r / s)
            })
            .collect();
        (self.sigmas.len() as f64).ln() - log_sum_exp(&logs)
    }

    /// Sample standard deviation of `n_draws` returns, draw `k` taken from
    /// component `k mod S`.
    pub fn sampled_volatility(&self, rng: &mut Rng, n_draws: usize) -> Result<f64> {
        if n_draws < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 draws, got {n_draws}")));
        }
        let draws: Vec<f64> = (0..n_draws)
            .map(|k| self.sigmas[k % self.sigmas.len()].as_f64() * rng.normal())
            .collect();
        Ok(sample_std(&draws))
    }

    /// `sqrt(mean_s σ_s²)`, the limit of the sampled estimate.
    pub fn analytic_volatility(&self) -> f64 {
        let m = self.sigmas.iter().map(|s| s.as_f64() * s.as_f64()).sum::<f64>() / self.sigmas.len() as f64;
        m.sqrt()
    }

    /// Point forecast: one sampled return per component unless `analytic`.
    pub fn point_volatility(&self, rng: &mut Rng, analytic: bool) -> Result<f64> {
        if analytic {
            Ok(self.analytic_volatility())
        } else {
            self.sampled_volatility(rng, self.sigmas.len().max(2))
        }
    }
}

fn tile<T: Scalar>(column: &Array<T>, cols: usize) -> Array<T> {
    let mut out = Array::zeros(column.rows(), cols);
    for r in 0..column.rows() {
        let v = column.get(r, 0);
        for c in 0..cols {
            out.set(r, c, v);
        }
    }
    out
}

/// Draws `samples` mixture components for `r_{T+1}` given `window = r_{1:T}`.
///
/// Noise is consumed as one `d_z × S` block per step `1..=T+1`.
pub fn predict_one<T: Scalar>(
    model: &Dsvm<T>,
    window: &[f64],
    samples: usize,
    rng: &mut Rng,
) -> Result<PredictiveMixture<T>> {
    if window.is_empty() {
        return Err(Error::InvalidInput("predict_one: empty window".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidInput("predict_one: samples must be ≥ 1".into()));
    }
    if window.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidInput("predict_one: non-finite return".into()));
    }
    let c = model.config;
    let mut g = Eager;
    let vars = model.bind(&mut g);

    // The encoder only sees the returns, so one column serves every sample.
    let single: Vec<Array<T>> = window.iter().map(|&r| Array::scalar(T::lit(r))).collect();
    let encoded = encode_backward(&mut g, &vars.inference, &single)?;

    let mut z = Array::zeros(c.latent_dim, samples);
    let mut h = Array::zeros(c.hidden_dim, samples);
    let mut sigma = Array::zeros(1, samples);
    let mut r_prev = Array::zeros(1, samples);
    for (t, (&r, a)) in window.iter().zip(&encoded).enumerate() {
        let a = tile(a, samples);
        let eta = rng.normal_array(c.latent_dim, samples);
        let (_, _, z_t) = posterior_step(&mut g, &vars.inference, &z, &a, &eta).map_err(at_step(t + 1))?;
        let (h_t, s_t) = volatility_step(&mut g, &vars.generative, &h, &sigma, &r_prev, &z_t).map_err(at_step(t + 1))?;
        z = z_t;
        h = h_t;
        sigma = s_t;
        r_prev = Array::filled(1, samples, T::lit(r));
    }
    let next = window.len() + 1;
    let (m, v) = prior_step(&mut g, &vars.generative, &z).map_err(at_step(next))?;
    let eta = rng.normal_array(c.latent_dim, samples);
    let noise = g.mul(&eta, &v)?;
    let z_next = g.add(&m, &noise)?;
    let (_, s_next) = volatility_step(&mut g, &vars.generative, &h, &sigma, &r_prev, &z_next).map_err(at_step(next))?;
    if !s_next.is_finite() {
        return Err(Error::Divergence {
            t: next,
            detail: "non-finite predicted volatility".into(),
        });
    }
    PredictiveMixture::new(s_next.into_data())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastOptions {
    /// Conditioning window length `T`.
    pub window: usize,
    /// Mixture components `S`.
    pub samples: usize,
    /// First forecast index; defaults to `window`.
    pub start: Option<usize>,
    pub seed: u64,
    /// Use `sqrt(mean σ²)` instead of the sampled standard deviation.
    pub analytic: bool,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        Self {
            window: 10,
            samples: 1000,
            start: None,
            seed: 0,
            analytic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    /// 0-based index of the forecast observation.
    pub index: usize,
    pub realized_return: f64,
    pub pred_vol: f64,
    pub pred_nll: f64,
}

impl From<&RollingRecord> for ForecastRecord {
    fn from(r: &RollingRecord) -> Self {
        Self {
            index: r.index,
            realized_return: r.realized,
            pred_vol: r.pred_vol,
            pred_nll: r.nll,
        }
    }
}

/// Forecasts every `r_i` for `i ≥ start` from `r_{i−T..i−1}` with a fixed
/// model. Index `i` uses random stream `i` of `seed`, so a record depends
/// only on its window and not on the rest of the series.
pub fn rolling_forecast<T: Scalar>(
    model: &Dsvm<T>,
    returns: &[f64],
    options: &ForecastOptions,
) -> Result<Vec<ForecastRecord>> {
    let w = options.window;
    if w == 0 || options.samples == 0 {
        return Err(Error::InvalidInput("window and samples must be ≥ 1".into()));
    }
    if returns.len() <= w {
        return Err(Error::InvalidInput(format!(
            "series of length {} is too short for a window of {w}",
            returns.len()
        )));
    }
    let start = options.start.unwrap_or(w);
    if start < w || start >= returns.len() {
        return Err(Error::InvalidInput(format!(
            "forecast start {start} outside [{w}, {})",
            returns.len()
        )));
    }
    (start..returns.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::stream(options.seed, i as u64);
            let mix = predict_one(model, &returns[i - w..i], options.samples, &mut rng)?;
            let pred_vol = mix.point_volatility(&mut rng, options.analytic)?;
            let pred_nll = mix.predictive_nll(returns[i]);
            if !pred_nll.is_finite() {
                return Err(Error::Divergence {
                    t: i,
                    detail: "non-finite predictive NLL".into(),
                });
            }
            Ok(ForecastRecord {
                index: i,
                realized_return: returns[i],
                pred_vol,
                pred_nll,
            })
        })
        .collect()
}

/// `timestamp,realized_return,pred_vol,pred_nll,model_tag`. The timestamp is
/// `dates[index]` when dates are given, otherwise the index.
pub fn write_forecast_csv<W: Write>(
    records: &[ForecastRecord],
    dates: Option<&[NaiveDate]>,
    model_tag: &str,
    w: W,
) -> Result<()> {
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["timestamp", "realized_return", "pred_vol", "pred_nll", "model_tag"])
        .map_err(io)?;
    for rec in records {
        let ts = match dates {
            Some(d) => d
                .get(rec.index)
                .ok_or_else(|| Error::InvalidInput(format!("no date for index {}", rec.index)))?
                .format("%Y-%m-%d")
                .to_string(),
            None => rec.index.to_string(),
        };
        wtr.write_record([
            ts,
            format!("{:?}", rec.realized_return),
            format!("{:?}", rec.pred_vol),
            format!("{:?}", rec.pred_nll),
            model_tag.to_string(),
        ])
        .map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

/// One row of a forecast CSV as written by [`write_forecast_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub timestamp: String,
    pub realized_return: f64,
    pub pred_vol: f64,
    pub pred_nll: f64,
    pub model_tag: String,
}

pub fn read_forecast_csv<R: std::io::Read>(r: R) -> Result<Vec<ForecastRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
        .clone();
    let expected = ["timestamp", "realized_return", "pred_vol", "pred_nll", "model_tag"];
    if header.iter().ne(expected) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {}", expected.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("invalid {} {:?}", expected[j], &rec[j]),
                })
        };
        rows.push(ForecastRow {
            timestamp: rec[0].to_string(),
            realized_return: num(1)?,
            pred_vol: num(2)?,
            pred_nll: num(3)?,
            model_tag: rec[4].to_string(),
        });
    }
    Ok(rows)
}

/// Mean predictive NLL per observation.
pub fn mean_nll(records: &[ForecastRecord]) -> f64 {
    records.iter().map(|r| r.pred_nll).sum::<f64>() / records.len() as f64
}
