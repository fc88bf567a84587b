use serde::{Deserialize, Serialize};

use super::filter::{forecast_one, init_state, nll_unchecked};
use super::{GarchParams, GarchSpec, Variant};
use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadConfig};
use crate::scalar::HALF_LN_2PI;
use crate::tensor::{derive_seed, Rng};

/// Smallest sample accepted by [`fit`].
pub const MIN_FIT_LEN: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: GarchParams<f64>,
    pub log_likelihood: f64,
    pub converged: bool,
    /// Nelder–Mead iterations summed over all starts.
    pub iterations: usize,
    /// Initialization level used by the likelihood (native state).
    pub init: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub seed: u64,
    pub starts: usize,
    /// Replaces the default first start, e.g. the previous fit in a rolling
    /// evaluation.
    pub warm_start: Option<GarchParams<f64>>,
    pub optimizer: NelderMeadConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            starts: 3,
            warm_start: None,
            optimizer: NelderMeadConfig::default(),
        }
    }
}

const MIN_SHARE: f64 = 1e-10;

/// Maps unconstrained coordinates to parameters satisfying the variant's
/// constraints. Coordinates are ordered `[ω, α.., γ.., β..]`.
fn decode(spec: &GarchSpec, u: &[f64]) -> GarchParams<f64> {
    let (p, q) = (spec.p, spec.q);
    let g0 = 1 + p;
    let b0 = if spec.variant.has_gamma() { g0 + p } else { g0 };
    let raw_alpha = &u[1..1 + p];
    let raw_gamma = &u[g0..b0];
    let raw_beta = &u[b0..b0 + q];
    match spec.variant {
        Variant::Garch | Variant::Gjr => {
            let gamma: Vec<f64> = raw_gamma.iter().map(|v| v.exp() - 1.0).collect();
            let e: Vec<f64> = raw_alpha.iter().chain(raw_beta).map(|x| x.exp()).collect();
            let denom = 1.0 + e.iter().sum::<f64>();
            let share: Vec<f64> = e.iter().map(|x| x / denom).collect();
            let alpha = (0..p)
                .map(|i| match spec.variant {
                    Variant::Gjr => share[i] / (1.0 + 0.5 * gamma[i]),
                    _ => share[i],
                })
                .collect();
            GarchParams {
                variant: spec.variant,
                omega: u[0].exp(),
                alpha,
                gamma,
                beta: share[p..].to_vec(),
            }
        }
        Variant::Tgarch => GarchParams {
            variant: spec.variant,
            omega: u[0].exp(),
            alpha: raw_alpha.iter().map(|x| x.exp()).collect(),
            gamma: raw_gamma.iter().map(|x| x.tanh()).collect(),
            beta: raw_beta.iter().map(|x| x.exp()).collect(),
        },
        Variant::Egarch => GarchParams {
            variant: spec.variant,
            omega: u[0],
            alpha: raw_alpha.to_vec(),
            gamma: raw_gamma.to_vec(),
            beta: raw_beta.iter().map(|x| x.tanh() / q as f64).collect(),
        },
    }
}

fn encode(params: &GarchParams<f64>) -> Vec<f64> {
    let q = params.beta.len() as f64;
    let clamp_open = |x: f64| x.clamp(-1.0 + 1e-9, 1.0 - 1e-9);
    let mut u = Vec::new();
    match params.variant {
        Variant::Garch | Variant::Gjr => {
            u.push(params.omega.max(1e-300).ln());
            let mut shares: Vec<f64> = params
                .alpha
                .iter()
                .enumerate()
                .map(|(i, &a)| match params.variant {
                    Variant::Gjr => a * (1.0 + 0.5 * params.gamma[i]),
                    _ => a,
                })
                .chain(params.beta.iter().copied())
                .map(|x| x.max(MIN_SHARE))
                .collect();
            let total: f64 = shares.iter().sum();
            if total >= 1.0 - MIN_SHARE {
                let scale = (1.0 - 1e-6) / total;
                shares.iter_mut().for_each(|x| *x *= scale);
            }
            let slack = 1.0 - shares.iter().sum::<f64>();
            let p = params.alpha.len();
            u.extend(shares[..p].iter().map(|x| (x / slack).ln()));
            u.extend(params.gamma.iter().map(|g| (g + 1.0).max(1e-12).ln()));
            u.extend(shares[p..].iter().map(|x| (x / slack).ln()));
        }
        Variant::Tgarch => {
            u.push(params.omega.max(1e-300).ln());
            u.extend(params.alpha.iter().map(|a| a.max(MIN_SHARE).ln()));
            u.extend(params.gamma.iter().map(|&g| clamp_open(g).atanh()));
            u.extend(params.beta.iter().map(|b| b.max(MIN_SHARE).ln()));
        }
        Variant::Egarch => {
            u.push(params.omega);
            u.extend(params.alpha.iter().copied());
            u.extend(params.gamma.iter().copied());
            u.extend(params.beta.iter().map(|&b| clamp_open(b * q).atanh()));
        }
    }
    u
}

/// A conventional starting point scaled to the sample second moment.
fn default_start(spec: &GarchSpec, m2: f64) -> GarchParams<f64> {
    let spread = |total: f64, n: usize| vec![total / n as f64; n];
    let m2 = m2.max(1e-300);
    match spec.variant {
        Variant::Garch => GarchParams {
            variant: spec.variant,
            omega: 0.05 * m2,
            alpha: spread(0.05, spec.p),
            gamma: vec![],
            beta: spread(0.9, spec.q),
        },
        Variant::Gjr => GarchParams {
            variant: spec.variant,
            omega: 0.05 * m2,
            alpha: spread(0.04, spec.p),
            gamma: vec![0.5; spec.p],
            beta: spread(0.9, spec.q),
        },
        Variant::Tgarch => GarchParams {
            variant: spec.variant,
            omega: 0.06 * m2.sqrt(),
            alpha: spread(0.05, spec.p),
            gamma: vec![0.2; spec.p],
            beta: spread(0.9, spec.q),
        },
        Variant::Egarch => GarchParams {
            variant: spec.variant,
            omega: 0.05 * m2.ln(),
            alpha: spread(-0.05, spec.p),
            gamma: spread(0.1, spec.p),
            beta: spread(0.95, spec.q),
        },
    }
}

/// Gaussian maximum likelihood with default options (3 starts).
pub fn fit(spec: &GarchSpec, returns: &[f64], seed: u64) -> Result<FitResult> {
    fit_with(
        spec,
        returns,
        &FitOptions {
            seed,
            ..FitOptions::default()
        },
    )
}

/// Multi-start Nelder–Mead on the unconstrained coordinates. The first start
/// is the warm start (or a conventional default); the others perturb it
/// with seeded Gaussian noise. The best converged start wins; if none
/// converged the best iterate is returned with `converged = false`.
pub fn fit_with(spec: &GarchSpec, returns: &[f64], options: &FitOptions) -> Result<FitResult> {
    if returns.len() < MIN_FIT_LEN {
        return Err(Error::InvalidInput(format!(
            "GARCH fit needs at least {MIN_FIT_LEN} observations, got {}",
            returns.len()
        )));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidInput("non-finite return in fit window".into()));
    }
    if options.starts == 0 {
        return Err(Error::InvalidInput("at least one start is required".into()));
    }
    let m2 = returns.iter().map(|r| r * r).sum::<f64>() / returns.len() as f64;
    let init = init_state(spec.variant, returns);
    let base = match &options.warm_start {
        Some(w) if w.spec() == *spec => encode(w),
        _ => encode(&default_start(spec, m2)),
    };
    let fallback = encode(&default_start(spec, m2));
    let mut rng = Rng::new(options.seed);
    let objective = |u: &[f64]| {
        let params = decode(spec, u);
        let v = nll_unchecked(&params, returns, init);
        if v.penalized {
            f64::INFINITY
        } else {
            v.value
        }
    };

    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    let mut iterations = 0;
    for k in 0..options.starts {
        let x0: Vec<f64> = match k {
            0 => base.clone(),
            _ => fallback.iter().map(|x| x + 0.5 * rng.normal()).collect(),
        };
        let r = nelder_mead(objective, &x0, &options.optimizer);
        iterations += r.iterations;
        let better = match &best {
            None => true,
            Some((v, _, conv)) => (r.converged && !conv) || (r.converged == *conv && r.value < *v),
        };
        if better && r.value.is_finite() {
            best = Some((r.value, r.x, r.converged));
        }
    }
    let Some((value, x, converged)) = best else {
        let params = decode(spec, &base);
        return Ok(FitResult {
            params,
            log_likelihood: f64::NEG_INFINITY,
            converged: false,
            iterations,
            init,
        });
    };
    Ok(FitResult {
        params: decode(spec, &x),
        log_likelihood: -value,
        converged,
        iterations,
        init,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingOptions {
    pub window: usize,
    /// First forecast index; defaults to `window`.
    pub start: Option<usize>,
    pub seed: u64,
    /// Start each refit from the previous step's estimate.
    pub warm_start: bool,
    pub starts: usize,
}

impl Default for RollingOptions {
    fn default() -> Self {
        Self {
            window: 1000,
            start: None,
            seed: 0,
            warm_start: true,
            starts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingRecord {
    /// 0-based index of the forecast observation.
    pub index: usize,
    pub realized: f64,
    pub pred_vol: f64,
    pub nll: f64,
    /// False when the refit at this step did not converge (the previous
    /// parameters were carried forward) or its forecast was not finite.
    pub converged: bool,
}

/// Forecast from the first candidate whose recursion stays finite, else the
/// zero-mean volatility of `window`. The likelihood never sees the newest
/// return, so fitted parameters can still overflow on it.
fn robust_forecast(candidates: &[GarchParams<f64>], window: &[f64], init: f64) -> (Option<usize>, f64) {
    for (k, p) in candidates.iter().enumerate() {
        if let Ok(s) = forecast_one(p, window, init) {
            if s > 0.0 && s.is_finite() {
                return (Some(k), s);
            }
        }
    }
    let m2 = window.iter().map(|r| r * r).sum::<f64>() / window.len() as f64;
    (None, m2.sqrt())
}

/// Re-estimates on the trailing `window` observations before every forecast
/// index and scores the one-step Gaussian predictive density. Start seeds
/// derive from `(seed, index)`.
pub fn rolling_eval(spec: &GarchSpec, returns: &[f64], options: &RollingOptions) -> Result<Vec<RollingRecord>> {
    let window = options.window;
    if returns.len() <= window {
        return Err(Error::InvalidInput(format!(
            "series of length {} is too short for a rolling window of {window}",
            returns.len()
        )));
    }
    let start = options.start.unwrap_or(window);
    if start < window || start >= returns.len() {
        return Err(Error::InvalidInput(format!(
            "rolling start {start} outside [{window}, {})",
            returns.len()
        )));
    }
    let mut records = Vec::with_capacity(returns.len() - start);
    let mut previous: Option<GarchParams<f64>> = None;
    for i in start..returns.len() {
        let slice = &returns[i - window..i];
        let fit = fit_with(
            spec,
            slice,
            &FitOptions {
                seed: derive_seed(options.seed, i as u64),
                starts: options.starts,
                warm_start: if options.warm_start { previous.clone() } else { None },
                optimizer: NelderMeadConfig::default(),
            },
        )?;
        let mut candidates = match (&previous, fit.converged) {
            (Some(prev), false) => vec![prev.clone(), fit.params.clone()],
            (Some(prev), true) => vec![fit.params.clone(), prev.clone()],
            (None, _) => vec![fit.params.clone()],
        };
        let init = init_state(spec.variant, slice);
        let (chosen, sigma) = robust_forecast(&candidates, slice, init);
        let converged = fit.converged && chosen == Some(0);
        let params = candidates.swap_remove(chosen.unwrap_or(0));
        let r = returns[i];
        let nll = HALF_LN_2PI + sigma.ln() + 0.5 * (r / sigma).powi(2);
        records.push(RollingRecord {
            index: i,
            realized: r,
            pred_vol: sigma,
            nll,
            converged,
        });
        previous = Some(params);
    }
    Ok(records)
}
