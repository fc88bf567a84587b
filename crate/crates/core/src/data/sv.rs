use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Rng;

/// Discrete stochastic volatility model
///
/// ```text
/// r_t = σ_t ε_t
/// log σ²_t = μ + φ (log σ²_{t-1} − μ) + z_t
/// (ε_{t-1}, z_t) ~ N₂(0, [[1, ρσ_z], [ρσ_z, σ_z²]])
/// ```
///
/// with `log σ²_0 = μ`; `ρ = 0` is the variant without leverage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvSimParams {
    pub mu: f64,
    pub ar_phi: f64,
    pub sigma_z: f64,
    pub rho: f64,
}

impl SvSimParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu.is_finite()
            && self.ar_phi.abs() < 1.0
            && self.sigma_z >= 0.0
            && self.sigma_z.is_finite()
            && self.rho.abs() < 1.0;
        if !ok {
            return Err(Error::InvalidInput(format!("invalid SV parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvPath {
    pub returns: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// `ε_0..ε_n`, including the presample shock that drives `z_1`.
    pub eps: Vec<f64>,
    /// `z_1..z_n`.
    pub z: Vec<f64>,
}

/// Simulates `n` steps. Draw order: `ε_0`, then per step the independent
/// part of `z_t` followed by `ε_t`.
pub fn simulate_sv(params: &SvSimParams, n: usize, rng: &mut Rng) -> Result<SvPath> {
    params.validate()?;
    let SvSimParams {
        mu,
        ar_phi,
        sigma_z,
        rho,
    } = *params;
    let tilt = (1.0 - rho * rho).sqrt();
    let mut path = SvPath {
        returns: Vec::with_capacity(n),
        sigmas: Vec::with_capacity(n),
        eps: Vec::with_capacity(n + 1),
        z: Vec::with_capacity(n),
    };
    let mut h = mu;
    let mut eps_prev = rng.normal();
    path.eps.push(eps_prev);
    for _ in 0..n {
        let xi = rng.normal();
        let z = sigma_z * (rho * eps_prev + tilt * xi);
        h = mu + ar_phi * (h - mu) + z;
        let sigma = (0.5 * h).exp();
        let eps = rng.normal();
        path.returns.push(sigma * eps);
        path.sigmas.push(sigma);
        path.eps.push(eps);
        path.z.push(z);
        eps_prev = eps;
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::pearson;

    #[test]
    fn degenerate_noise_gives_constant_sigma() {
        let p = SvSimParams {
            mu: -1.0,
            ar_phi: 0.0,
            sigma_z: 0.0,
            rho: 0.0,
        };
        let n = 100_000;
        let path = simulate_sv(&p, n, &mut Rng::new(1)).unwrap();
        let sigma = (-0.5f64).exp();
        assert!(path.sigmas.iter().all(|&s| s == sigma));
        let sd = (path.returns.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
        assert!((sd - sigma).abs() < 3.0 * sigma / (2.0 * n as f64).sqrt());
    }

    #[test]
    fn leverage_correlation() {
        let n = 100_000;
        for rho in [-0.5, 0.0] {
            let p = SvSimParams {
                mu: -1.0,
                ar_phi: 0.95,
                sigma_z: 0.2,
                rho,
            };
            let path = simulate_sv(&p, n, &mut Rng::new(2)).unwrap();
            let c = pearson(&path.eps[..n], &path.z);
            assert!((c - rho).abs() < 3.0 / (n as f64).sqrt() * (1.0 - rho * rho).max(0.5), "{rho}: {c}");
        }
    }

    #[test]
    fn rejects_invalid_params() {
        let p = SvSimParams {
            mu: 0.0,
            ar_phi: 1.0,
            sigma_z: 0.1,
            rho: 0.0,
        };
        assert!(simulate_sv(&p, 10, &mut Rng::new(0)).is_err());
    }
}
