//! Deterministic evaluation of small scalar-latent models by nested
//! Gauss–Hermite quadrature over `z_1..z_T`.
//!
//! Every step expands each path into `K` children, so the cost is `K^T`
//! network evaluations; intended for `T ≤ 3` as an oracle.

use super::network::{encode_backward, posterior_step, prior_step, volatility_step};
use super::Dsvm;
use crate::error::{Error, Result};
use crate::scalar::HALF_LN_2PI;
use crate::stats::{gauss_hermite, log_sum_exp};
use crate::tensor::{Array, Eager};

const MAX_PATHS: usize = 1 << 22;

struct Paths {
    z: Array<f64>,
    h: Array<f64>,
    sigma: Array<f64>,
}

fn check(model: &Dsvm<f64>, returns: &[f64], nodes: usize) -> Result<()> {
    if model.config.latent_dim != 1 {
        return Err(Error::InvalidInput("quadrature needs latent_dim = 1".into()));
    }
    if returns.is_empty() || nodes == 0 {
        return Err(Error::InvalidInput("quadrature needs T ≥ 1 and at least one node".into()));
    }
    if (nodes as f64).powi(returns.len() as i32) > MAX_PATHS as f64 {
        return Err(Error::InvalidInput(format!(
            "{nodes}^{} quadrature paths is too many",
            returns.len()
        )));
    }
    Ok(())
}

/// Repeats every column `k` times in place (`c0 c0 .. c1 c1 ..`).
fn expand(a: &Array<f64>, k: usize) -> Array<f64> {
    let mut out = Array::zeros(a.rows(), a.cols() * k);
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            let v = a.get(r, c);
            for j in 0..k {
                out.set(r, c * k + j, v);
            }
        }
    }
    out
}

fn log_normal(r: f64, s: f64) -> f64 {
    -HALF_LN_2PI - s.ln() - 0.5 * (r / s) * (r / s)
}

fn kl(mq: f64, sq: f64, mp: f64, sp: f64) -> f64 {
    (sp / sq).ln() + (sq * sq + (mq - mp) * (mq - mp)) / (2.0 * sp * sp) - 0.5
}

/// Advances every path by one step: child `j` of column `c` takes
/// `z = child(c, j)`, then the volatility recursion with `r_prev`.
fn branch(
    g: &mut Eager,
    model_vars: &super::DsvmVars<Array<f64>>,
    paths: &Paths,
    k: usize,
    child: impl Fn(usize, usize) -> f64,
    r_prev: f64,
) -> Result<Paths> {
    let n = paths.z.cols();
    let mut z = Array::zeros(1, n * k);
    for c in 0..n {
        for j in 0..k {
            z.set(0, c * k + j, child(c, j));
        }
    }
    let h = expand(&paths.h, k);
    let sigma = expand(&paths.sigma, k);
    let r = Array::filled(1, n * k, r_prev);
    let (h, sigma) = volatility_step(g, &model_vars.generative, &h, &sigma, &r, &z)?;
    Ok(Paths { z, h, sigma })
}

/// Gauss–Hermite children `m + s·√2·x_j` of each column.
fn hermite_branch(
    g: &mut Eager,
    model_vars: &super::DsvmVars<Array<f64>>,
    paths: &Paths,
    mean: &Array<f64>,
    std: &Array<f64>,
    r_prev: f64,
    x: &[f64],
) -> Result<Paths> {
    let child = |c, j: usize| mean.get(0, c) + std.get(0, c) * std::f64::consts::SQRT_2 * x[j];
    branch(g, model_vars, paths, x.len(), child, r_prev)
}

fn start(model: &Dsvm<f64>) -> Paths {
    Paths {
        z: Array::zeros(1, 1),
        h: Array::zeros(model.config.hidden_dim, 1),
        sigma: Array::zeros(1, 1),
    }
}

/// `log p_θ(r_{1:T})`, integrating each `z_t` against its prior.
pub fn log_marginal_quadrature(model: &Dsvm<f64>, returns: &[f64], nodes: usize) -> Result<f64> {
    check(model, returns, nodes)?;
    let (x, w) = gauss_hermite(nodes);
    let log_w: Vec<f64> = w.iter().map(|w| (w / std::f64::consts::PI.sqrt()).ln()).collect();
    let mut g = Eager;
    let vars = model.bind(&mut g);
    let mut paths = start(model);
    let mut acc = vec![0.0];
    let mut r_prev = 0.0;
    for &r in returns {
        let (m, s) = prior_step(&mut g, &vars.generative, &paths.z)?;
        paths = hermite_branch(&mut g, &vars, &paths, &m, &s, r_prev, &x)?;
        acc = acc
            .iter()
            .flat_map(|a| log_w.iter().map(move |lw| a + lw))
            .zip(paths.sigma.data())
            .map(|(a, &s)| a + log_normal(r, s))
            .collect();
        r_prev = r;
    }
    let v = log_sum_exp(&acc);
    if !v.is_finite() {
        return Err(Error::NonFinite { op: "log_marginal_quadrature" });
    }
    Ok(v)
}

/// `log p_θ(r_{1:T})` by a midpoint rule over `z_t ∈ [−half_width,
/// half_width]` with `points` cells per step, weighting each cell by the
/// prior density. Independent of the Hermite rule above.
pub fn log_marginal_grid(model: &Dsvm<f64>, returns: &[f64], half_width: f64, points: usize) -> Result<f64> {
    check(model, returns, points)?;
    if !(half_width > 0.0) {
        return Err(Error::InvalidInput("grid half-width must be positive".into()));
    }
    let dz = 2.0 * half_width / points as f64;
    let grid: Vec<f64> = (0..points).map(|j| -half_width + (j as f64 + 0.5) * dz).collect();
    let mut g = Eager;
    let vars = model.bind(&mut g);
    let mut paths = start(model);
    let mut acc = vec![0.0];
    let mut r_prev = 0.0;
    for &r in returns {
        let (m, s) = prior_step(&mut g, &vars.generative, &paths.z)?;
        let next: Vec<f64> = acc
            .iter()
            .enumerate()
            .flat_map(|(c, a)| {
                let (m, s) = (m.get(0, c), s.get(0, c));
                grid.iter().map(move |&z| a + log_normal(z - m, s) + dz.ln())
            })
            .collect();
        paths = branch(&mut g, &vars, &paths, points, |_, j| grid[j], r_prev)?;
        acc = next
            .iter()
            .zip(paths.sigma.data())
            .map(|(a, &s)| a + log_normal(r, s))
            .collect();
        r_prev = r;
    }
    let v = log_sum_exp(&acc);
    if !v.is_finite() {
        return Err(Error::NonFinite { op: "log_marginal_grid" });
    }
    Ok(v)
}

/// The ELBO `E_q[Σ log p(r_t|·)] − Σ E_q[KL_t]` with every expectation over
/// `q_φ` evaluated by quadrature and the KL terms in closed form.
pub fn elbo_quadrature(model: &Dsvm<f64>, returns: &[f64], nodes: usize) -> Result<f64> {
    check(model, returns, nodes)?;
    let (x, w) = gauss_hermite(nodes);
    let w: Vec<f64> = w.iter().map(|w| w / std::f64::consts::PI.sqrt()).collect();
    let mut g = Eager;
    let vars = model.bind(&mut g);
    let rows: Vec<Array<f64>> = returns.iter().map(|&r| Array::scalar(r)).collect();
    let encoded = encode_backward(&mut g, &vars.inference, &rows)?;
    let mut paths = start(model);
    let mut weight = vec![1.0];
    let mut total = 0.0;
    let mut r_prev = 0.0;
    for (&r, a) in returns.iter().zip(&encoded) {
        let n = paths.z.cols();
        let (mp, sp) = prior_step(&mut g, &vars.generative, &paths.z)?;
        let a = expand(a, n);
        // η = 0 gives the posterior mean through the same code path.
        let zero = Array::zeros(1, n);
        let (mq, sq, _) = posterior_step(&mut g, &vars.inference, &paths.z, &a, &zero)?;
        for (c, p) in weight.iter().enumerate() {
            total -= p * kl(mq.get(0, c), sq.get(0, c), mp.get(0, c), sp.get(0, c));
        }
        paths = hermite_branch(&mut g, &vars, &paths, &mq, &sq, r_prev, &x)?;
        weight = weight.iter().flat_map(|p| w.iter().map(move |wk| p * wk)).collect();
        total += weight
            .iter()
            .zip(paths.sigma.data())
            .map(|(p, &s)| p * log_normal(r, s))
            .sum::<f64>();
        r_prev = r;
    }
    if !total.is_finite() {
        return Err(Error::NonFinite { op: "elbo_quadrature" });
    }
    Ok(total)
}

/// `E[σ²_{T+1} | r_{1:T}]` under `z_{1:T} ~ q_φ`, `z_{T+1} ~ p_θ(·|z_T)`:
/// the S→∞ limit of the mean squared component of a predictive mixture.
pub fn predictive_variance_quadrature(model: &Dsvm<f64>, returns: &[f64], nodes: usize) -> Result<f64> {
    check(model, &[returns, &[0.0]].concat(), nodes)?;
    let (x, w) = gauss_hermite(nodes);
    let w: Vec<f64> = w.iter().map(|w| w / std::f64::consts::PI.sqrt()).collect();
    let mut g = Eager;
    let vars = model.bind(&mut g);
    let rows: Vec<Array<f64>> = returns.iter().map(|&r| Array::scalar(r)).collect();
    let encoded = encode_backward(&mut g, &vars.inference, &rows)?;
    let mut paths = start(model);
    let mut weight = vec![1.0];
    let mut r_prev = 0.0;
    for (&r, a) in returns.iter().zip(&encoded) {
        let n = paths.z.cols();
        let a = expand(a, n);
        let zero = Array::zeros(1, n);
        let (mq, sq, _) = posterior_step(&mut g, &vars.inference, &paths.z, &a, &zero)?;
        paths = hermite_branch(&mut g, &vars, &paths, &mq, &sq, r_prev, &x)?;
        weight = weight.iter().flat_map(|p| w.iter().map(move |wk| p * wk)).collect();
        r_prev = r;
    }
    let (mp, sp) = prior_step(&mut g, &vars.generative, &paths.z)?;
    paths = hermite_branch(&mut g, &vars, &paths, &mp, &sp, r_prev, &x)?;
    weight = weight.iter().flat_map(|p| w.iter().map(move |wk| p * wk)).collect();
    Ok(weight.iter().zip(paths.sigma.data()).map(|(p, s)| p * s * s).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsvm::ModelConfig;
    use crate::tensor::Rng;

    fn small(seed: u64) -> Dsvm<f64> {
        let c = ModelConfig {
            latent_dim: 1,
            hidden_dim: 3,
            encoder_dim: 3,
            mlp_width: 4,
        };
        Dsvm::init(c, &mut Rng::new(seed))
    }

    #[test]
    fn zero_model_is_iid_gaussian() {
        let m = Dsvm::<f64>::zeros(ModelConfig::default());
        let r = [0.3, -0.5];
        let s = std::f64::consts::LN_2 + crate::nn::STD_FLOOR;
        let exact: f64 = r.iter().map(|&x| log_normal(x, s)).sum();
        assert!((log_marginal_quadrature(&m, &r, 8).unwrap() - exact).abs() < 1e-12);
        // q = p for the zero model, so the bound is tight.
        assert!((elbo_quadrature(&m, &r, 8).unwrap() - exact).abs() < 1e-12);
        assert!((predictive_variance_quadrature(&m, &r, 8).unwrap() - s * s).abs() < 1e-12);
    }

    #[test]
    fn bound_holds_on_random_toys() {
        for seed in 0..5 {
            let m = small(seed);
            let r = [0.4, -1.1];
            let lm = log_marginal_quadrature(&m, &r, 64).unwrap();
            let e = elbo_quadrature(&m, &r, 64).unwrap();
            assert!(e <= lm + 1e-9, "{seed}: {e} > {lm}");
            let grid = log_marginal_grid(&m, &r, 10.0, 600).unwrap();
            assert!((grid - lm).abs() < 1e-6, "{seed}: {grid} vs {lm}");
        }
    }

    #[test]
    fn rejects_large_trees() {
        let m = small(1);
        assert!(log_marginal_quadrature(&m, &[0.1; 8], 64).is_err());
        let two = Dsvm::<f64>::zeros(ModelConfig {
            latent_dim: 2,
            ..ModelConfig::default()
        });
        assert!(elbo_quadrature(&two, &[0.1], 8).is_err());
    }
}
