//! GARCH-family baselines: GARCH, GJR-GARCH, TGARCH and EGARCH.
//!
//! Each variant evolves its own native state:
//!
//! | variant | state      | recursion                                                    |
//! |---------|------------|--------------------------------------------------------------|
//! | GARCH   | `σ²_t`     | `ω + Σ α_i r²_{t-i} + Σ β_j σ²_{t-j}`                        |
//! | GJR     | `σ²_t`     | `ω + Σ α_i (1 + γ_i I{r_{t-i}<0}) r²_{t-i} + Σ β_j σ²_{t-j}` |
//! | TGARCH  | `σ_t`      | `ω + Σ α_i (|r_{t-i}| − γ_i r_{t-i}) + Σ β_j σ_{t-j}`        |
//! | EGARCH  | `log σ²_t` | `ω + Σ (α_i ε_{t-i} + γ_i (|ε_{t-i}| − √(2/π))) + Σ β_j log σ²_{t-j}` |
//!
//! with `ε_t = r_t / σ_t`. States before the first observation equal the
//! initialization level and presample returns are zero.

mod filter;
mod fit;

pub use filter::{filter, forecast_one, init_state, nll, recursion_step, simulate, variances, Nll, PENALTY};
pub use fit::{fit, fit_with, rolling_eval, FitOptions, FitResult, RollingOptions, RollingRecord};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `E|ε|` for a standard normal innovation.
pub const MEAN_ABS_NORMAL: f64 = 0.797_884_560_802_865_4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Garch,
    Gjr,
    Tgarch,
    Egarch,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Garch, Variant::Gjr, Variant::Tgarch, Variant::Egarch];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Garch => "garch",
            Variant::Gjr => "gjr",
            Variant::Tgarch => "tgarch",
            Variant::Egarch => "egarch",
        }
    }

    pub fn has_gamma(self) -> bool {
        self != Variant::Garch
    }

    /// Converts a native state to a variance.
    pub fn variance<T: Scalar>(self, state: T) -> T {
        match self {
            Variant::Garch | Variant::Gjr => state,
            Variant::Tgarch => state * state,
            Variant::Egarch => state.exp(),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "garch" => Ok(Variant::Garch),
            "gjr" | "gjr-garch" | "gjrgarch" => Ok(Variant::Gjr),
            "tgarch" => Ok(Variant::Tgarch),
            "egarch" => Ok(Variant::Egarch),
            other => Err(Error::InvalidInput(format!("unknown GARCH variant {other:?}"))),
        }
    }
}

/// Variant with ARCH order `p` (α, γ terms) and GARCH order `q` (β terms).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GarchSpec {
    pub variant: Variant,
    pub p: usize,
    pub q: usize,
}

impl GarchSpec {
    pub fn new(variant: Variant, p: usize, q: usize) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::InvalidInput(format!("GARCH orders must be ≥ 1, got p={p}, q={q}")));
        }
        Ok(Self { variant, p, q })
    }

    pub fn order_one(variant: Variant) -> Self {
        Self { variant, p: 1, q: 1 }
    }

    pub fn num_params(&self) -> usize {
        1 + self.p + self.q + if self.variant.has_gamma() { self.p } else { 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchParams<T> {
    pub variant: Variant,
    pub omega: T,
    pub alpha: Vec<T>,
    /// Empty for plain GARCH.
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Scalar> GarchParams<T> {
    pub fn garch(omega: T, alpha: T, beta: T) -> Self {
        Self {
            variant: Variant::Garch,
            omega,
            alpha: vec![alpha],
            gamma: vec![],
            beta: vec![beta],
        }
    }

    pub fn with_gamma(variant: Variant, omega: T, alpha: T, gamma: T, beta: T) -> Self {
        Self {
            variant,
            omega,
            alpha: vec![alpha],
            gamma: vec![gamma],
            beta: vec![beta],
        }
    }

    pub fn spec(&self) -> GarchSpec {
        GarchSpec {
            variant: self.variant,
            p: self.alpha.len(),
            q: self.beta.len(),
        }
    }

    fn gamma_at(&self, i: usize) -> T {
        self.gamma.get(i).copied().unwrap_or_else(T::zero)
    }

    /// Persistence `Σ α_i + Σ β_j` (GJR: `Σ α_i (1 + γ_i/2) + Σ β_j`).
    pub fn persistence(&self) -> T {
        let half = T::lit(0.5);
        let a = self
            .alpha
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, &a)| match self.variant {
                Variant::Gjr => acc + a * (T::one() + half * self.gamma_at(i)),
                _ => acc + a,
            });
        self.beta.iter().fold(a, |acc, &b| acc + b)
    }

    /// Checks the variant's parameter constraints.
    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::domain("garch params", detail));
        let p = self.alpha.len();
        if p == 0 || self.beta.is_empty() {
            return bad("need at least one alpha and one beta".into());
        }
        let expected_gamma = if self.variant.has_gamma() { p } else { 0 };
        if self.gamma.len() != expected_gamma {
            return bad(format!("{} expects {expected_gamma} gamma terms, got {}", self.variant, self.gamma.len()));
        }
        let all = std::iter::once(self.omega)
            .chain(self.alpha.iter().copied())
            .chain(self.gamma.iter().copied())
            .chain(self.beta.iter().copied());
        if all.into_iter().any(|x| !x.is_finite()) {
            return bad("non-finite coefficient".into());
        }
        let nonneg = |xs: &[T]| xs.iter().all(|&x| x >= T::zero());
        match self.variant {
            Variant::Garch | Variant::Gjr => {
                if self.omega <= T::zero() || !nonneg(&self.alpha) || !nonneg(&self.beta) {
                    return bad("need ω0 > 0, α ≥ 0, β ≥ 0".into());
                }
                if self.variant == Variant::Gjr && self.gamma.iter().any(|&g| g < -T::one()) {
                    return bad("need γ ≥ −1".into());
                }
                if self.persistence() >= T::one() {
                    return bad(format!("not stationary: persistence {}", self.persistence()));
                }
            }
            Variant::Tgarch => {
                if self.omega <= T::zero() || !nonneg(&self.alpha) || !nonneg(&self.beta) {
                    return bad("need ω0 > 0, α ≥ 0, β ≥ 0".into());
                }
                if self.gamma.iter().any(|&g| g.abs() > T::one()) {
                    return bad("need |γ| ≤ 1".into());
                }
            }
            Variant::Egarch => {
                let s = self.beta.iter().fold(T::zero(), |acc, &b| acc + b);
                if s.abs() >= T::one() {
                    return bad(format!("need |Σβ| < 1, got {s}"));
                }
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> GarchParams<U> {
        let c = |xs: &[T]| xs.iter().map(|x| U::lit(x.as_f64())).collect();
        GarchParams {
            variant: self.variant,
            omega: U::lit(self.omega.as_f64()),
            alpha: c(&self.alpha),
            gamma: c(&self.gamma),
            beta: c(&self.beta),
        }
    }
}
