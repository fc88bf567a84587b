use super::{GarchParams, Variant, MEAN_ABS_NORMAL};
use crate::error::{Error, Result};
use crate::scalar::{Scalar, HALF_LN_2PI};
use crate::tensor::Rng;

/// Objective value returned for parameter paths whose variance is not finite.
pub const PENALTY: f64 = 1e10;

/// Initialization level in the variant's native state, from the zero-mean
/// second moment of `returns`.
pub fn init_state<T: Scalar>(variant: Variant, returns: &[T]) -> T {
    let n = T::lit(returns.len().max(1) as f64);
    let m2 = returns.iter().fold(T::zero(), |acc, &r| acc + r * r) / n;
    match variant {
        Variant::Garch | Variant::Gjr => m2,
        Variant::Tgarch => m2.sqrt(),
        Variant::Egarch => m2.ln(),
    }
}

/// One recursion step. `past_returns[i]` is `r_{t-1-i}` and
/// `past_states[j]` is the native state at `t-1-j`. The slices must hold at
/// least `p` and `q` entries (EGARCH: `max(p, q)` states, since each lagged
/// innovation is standardized by its own volatility).
pub fn recursion_step<T: Scalar>(params: &GarchParams<T>, past_returns: &[T], past_states: &[T]) -> T {
    let mut s = params.omega;
    for (i, &a) in params.alpha.iter().enumerate() {
        let r = past_returns[i];
        s += match params.variant {
            Variant::Garch => a * (r * r),
            Variant::Gjr => {
                let g = if r < T::zero() { params.gamma[i] } else { T::zero() };
                a * (r * r + g * r * r)
            }
            Variant::Tgarch => a * (r.abs() - params.gamma[i] * r),
            Variant::Egarch => {
                let eps = r / (T::lit(0.5) * past_states[i]).exp();
                a * eps + params.gamma[i] * (eps.abs() - T::lit(MEAN_ABS_NORMAL))
            }
        };
    }
    for (j, &b) in params.beta.iter().enumerate() {
        s += b * past_states[j];
    }
    s
}

/// Native states `s_1..s_{n+1}`; `s_t` conditions on `r_1..r_{t-1}` only.
fn run<T: Scalar>(params: &GarchParams<T>, returns: &[T], init: T) -> Vec<T> {
    let (p, q) = (params.alpha.len(), params.beta.len());
    let mut past_r = vec![T::zero(); p];
    let mut past_s = vec![init; p.max(q)];
    let mut out = Vec::with_capacity(returns.len() + 1);
    for &r in returns.iter().chain(std::iter::once(&T::zero())) {
        let s = recursion_step(params, &past_r, &past_s);
        out.push(s);
        past_r.rotate_right(1);
        past_r[0] = r;
        past_s.rotate_right(1);
        past_s[0] = s;
    }
    out
}

/// Native state path `s_1..s_n` (variance, volatility or log variance).
pub fn filter<T: Scalar>(params: &GarchParams<T>, returns: &[T], init: T) -> Result<Vec<T>> {
    params.validate()?;
    let mut states = run(params, returns, init);
    states.pop();
    Ok(states)
}

/// Conditional variances `σ²_1..σ²_n`.
pub fn variances<T: Scalar>(params: &GarchParams<T>, returns: &[T], init: T) -> Result<Vec<T>> {
    Ok(filter(params, returns, init)?
        .into_iter()
        .map(|s| params.variant.variance(s))
        .collect())
}

/// One-step-ahead volatility `σ_{n+1}` after observing `r_1..r_n`.
pub fn forecast_one<T: Scalar>(params: &GarchParams<T>, returns: &[T], init: T) -> Result<T> {
    params.validate()?;
    let s = *run(params, returns, init).last().expect("n + 1 states");
    let v = params.variant.variance(s);
    if !(v.is_finite() && v > T::zero()) {
        return Err(Error::NonFinite { op: "garch forecast" });
    }
    Ok(v.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nll<T> {
    pub value: T,
    /// The variance path left `(0, ∞)` and `value` is [`PENALTY`].
    pub penalized: bool,
}

/// `−Σ_t log N(r_t; 0, σ²_t)`.
pub fn nll<T: Scalar>(params: &GarchParams<T>, returns: &[T], init: T) -> Result<Nll<T>> {
    params.validate()?;
    Ok(nll_unchecked(params, returns, init))
}

pub(crate) fn nll_unchecked<T: Scalar>(params: &GarchParams<T>, returns: &[T], init: T) -> Nll<T> {
    let states = run(params, returns, init);
    let mut total = T::zero();
    let half = T::lit(0.5);
    for (&r, &s) in returns.iter().zip(&states) {
        let (log_var, var) = match params.variant {
            Variant::Egarch => (s, s.exp()),
            v => {
                let var = v.variance(s);
                (var.ln(), var)
            }
        };
        if !(var > T::zero() && var.is_finite() && log_var.is_finite()) {
            return Nll {
                value: T::lit(PENALTY),
                penalized: true,
            };
        }
        total = total + T::lit(HALF_LN_2PI) + half * log_var + r * r / (var + var);
    }
    if !total.is_finite() {
        return Nll {
            value: T::lit(PENALTY),
            penalized: true,
        };
    }
    Nll {
        value: total,
        penalized: false,
    }
}

/// Simulates `n` returns and their volatilities, starting from the given
/// native state with zero presample returns.
pub fn simulate(params: &GarchParams<f64>, n: usize, init: f64, rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    params.validate()?;
    let (p, q) = (params.alpha.len(), params.beta.len());
    let mut past_r = vec![0.0; p];
    let mut past_s = vec![init; p.max(q)];
    let mut returns = Vec::with_capacity(n);
    let mut sigmas = Vec::with_capacity(n);
    for _ in 0..n {
        let s = recursion_step(params, &past_r, &past_s);
        let sigma = params.variant.variance(s).sqrt();
        let r = sigma * rng.normal();
        returns.push(r);
        sigmas.push(sigma);
        past_r.rotate_right(1);
        past_r[0] = r;
        past_s.rotate_right(1);
        past_s[0] = s;
    }
    Ok((returns, sigmas))
}
