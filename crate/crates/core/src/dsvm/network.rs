use super::{GenerativeVars, InferenceVars};
use crate::error::{Error, Result};
use crate::nn::{gru_step, mlp_forward};
use crate::scalar::Scalar;
use crate::tensor::{Array, Graph};

/// Prior transition: `(m^(p), v^(p)) = (f1(z_prev), f2(z_prev))`.
pub fn prior_step<T: Scalar, G: Graph<T>>(
    g: &mut G,
    gen: &GenerativeVars<G::Var>,
    z_prev: &G::Var,
) -> Result<(G::Var, G::Var)> {
    let m = mlp_forward(g, &gen.f1, z_prev)?;
    let v = mlp_forward(g, &gen.f2, z_prev)?;
    Ok((m, v))
}

/// `h_t = f_h(h_{t-1}, [σ_{t-1}; r_{t-1}; z_t])`, `σ_t = f3(h_t)`.
pub fn volatility_step<T: Scalar, G: Graph<T>>(
    g: &mut G,
    gen: &GenerativeVars<G::Var>,
    h_prev: &G::Var,
    sigma_prev: &G::Var,
    r_prev: &G::Var,
    z: &G::Var,
) -> Result<(G::Var, G::Var)> {
    let x = g.concat_rows(&[sigma_prev, r_prev, z])?;
    let h = gru_step(g, &gen.f_h, h_prev, &x)?;
    let sigma = mlp_forward(g, &gen.f3, &h)?;
    Ok((h, sigma))
}

/// Backward encoder `A_t = g_A(A_{t+1}, r_t)` from `A_{T+1} = 0`; returns
/// `A_1..A_T` in time order.
pub fn encode_backward<T: Scalar, G: Graph<T>>(
    g: &mut G,
    inf: &InferenceVars<G::Var>,
    returns: &[G::Var],
) -> Result<Vec<G::Var>> {
    let Some(last) = returns.last() else {
        return Err(Error::InvalidInput("encode_backward: empty sequence".into()));
    };
    let batch = g.value(last).cols();
    let mut a = g.constant(Array::zeros(inf.config.encoder_dim, batch));
    let mut states = Vec::with_capacity(returns.len());
    for r in returns.iter().rev() {
        a = gru_step(g, &inf.g_a, &a, r)?;
        states.push(a.clone());
    }
    states.reverse();
    Ok(states)
}

/// Posterior step with the reparameterized draw `z = m^(q) + η·v^(q)`.
pub fn posterior_step<T: Scalar, G: Graph<T>>(
    g: &mut G,
    inf: &InferenceVars<G::Var>,
    z_prev: &G::Var,
    a: &G::Var,
    eta: &G::Var,
) -> Result<(G::Var, G::Var, G::Var)> {
    let input = g.concat_rows(&[z_prev, a])?;
    let m = mlp_forward(g, &inf.g1, &input)?;
    let v = mlp_forward(g, &inf.g2, &input)?;
    let noise = g.mul(eta, &v)?;
    let z = g.add(&m, &noise)?;
    Ok((m, v, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsvm::{Dsvm, ModelConfig};
    use crate::nn::STD_FLOOR;
    use crate::tensor::{Eager, Rng};

    const LN2: f64 = std::f64::consts::LN_2;

    fn s(x: f64) -> Array<f64> {
        Array::scalar(x)
    }

    fn small() -> ModelConfig {
        ModelConfig {
            latent_dim: 1,
            hidden_dim: 4,
            encoder_dim: 3,
            mlp_width: 5,
        }
    }

    #[test]
    fn zero_weights_prior() {
        let m = Dsvm::<f64>::zeros(ModelConfig::default());
        let mut g = Eager;
        let v = m.bind(&mut g);
        let (mean, std) = prior_step(&mut g, &v.generative, &s(3.7)).unwrap();
        assert_eq!(mean.item(), 0.0);
        assert_eq!(std.item(), LN2 + STD_FLOOR);
    }

    #[test]
    fn zero_weights_volatility() {
        let m = Dsvm::<f64>::zeros(ModelConfig::default());
        let mut g = Eager;
        let v = m.bind(&mut g);
        let h0 = Array::zeros(10, 1);
        let (h, sigma) = volatility_step(&mut g, &v.generative, &h0, &s(0.0), &s(0.0), &s(1.3)).unwrap();
        assert_eq!(h, Array::zeros(10, 1));
        assert_eq!(sigma.item(), LN2 + STD_FLOOR);
    }

    #[test]
    fn prior_matches_mlp_oracle() {
        let m = Dsvm::<f64>::init(small(), &mut Rng::new(4));
        let mut g = Eager;
        let v = m.bind(&mut g);
        let (mean, std) = prior_step(&mut g, &v.generative, &s(0.42)).unwrap();
        assert_eq!(mean.item(), m.generative.f1.forward(&[0.42]).unwrap()[0]);
        assert_eq!(std.item(), m.generative.f2.forward(&[0.42]).unwrap()[0]);
    }

    #[test]
    fn volatility_unroll_matches_stepwise_oracle() {
        let m = Dsvm::<f64>::init(small(), &mut Rng::new(5));
        let zs = [0.3, -0.8, 1.1];
        let rs = [0.5, -0.2, 0.05];
        let mut g = Eager;
        let v = m.bind(&mut g);
        let (mut h, mut sigma, mut r) = (Array::zeros(4, 1), s(0.0), s(0.0));
        let (mut oh, mut os, mut or) = (vec![0.0; 4], 0.0, 0.0);
        for t in 0..3 {
            let (h2, s2) = volatility_step(&mut g, &v.generative, &h, &sigma, &r, &s(zs[t])).unwrap();
            oh = m.generative.f_h.step(&oh, &[os, or, zs[t]]).unwrap();
            os = m.generative.f3.forward(&oh).unwrap()[0];
            or = rs[t];
            assert_eq!(h2.data(), oh.as_slice());
            assert_eq!(s2.item(), os);
            h = h2;
            sigma = s2;
            r = s(rs[t]);
        }
    }

    #[test]
    fn encoder_matches_reversed_loop_and_is_anticausal() {
        let m = Dsvm::<f64>::init(small(), &mut Rng::new(6));
        let rs = [0.1, -0.4, 0.9, 0.3];
        let mut g = Eager;
        let v = m.bind(&mut g);
        let vars: Vec<Array<f64>> = rs.iter().map(|&x| s(x)).collect();
        let a = encode_backward(&mut g, &v.inference, &vars).unwrap();
        let mut state = vec![0.0; 3];
        for t in (0..4).rev() {
            state = m.inference.g_a.step(&state, &[rs[t]]).unwrap();
            assert_eq!(a[t].data(), state.as_slice());
        }
        let mut perturbed = vars.clone();
        perturbed[0] = s(5.0);
        perturbed[1] = s(-3.0);
        let b = encode_backward(&mut g, &v.inference, &perturbed).unwrap();
        assert_eq!(a[2], b[2]);
        assert_eq!(a[3], b[3]);
        assert_ne!(a[1], b[1]);
    }

    #[test]
    fn zero_weight_encoder_stays_at_zero() {
        let m = Dsvm::<f64>::zeros(ModelConfig::default());
        let mut g = Eager;
        let v = m.bind(&mut g);
        let vars: Vec<Array<f64>> = [1.0, -2.0, 3.0].iter().map(|&x| s(x)).collect();
        for a in encode_backward(&mut g, &v.inference, &vars).unwrap() {
            assert_eq!(a, Array::zeros(10, 1));
        }
        assert!(encode_backward::<f64, _>(&mut g, &v.inference, &[]).is_err());
    }

    #[test]
    fn posterior_step_reparameterization() {
        let m = Dsvm::<f64>::init(small(), &mut Rng::new(7));
        let mut g = Eager;
        let v = m.bind(&mut g);
        let a = Array::column(vec![0.2, -0.1, 0.4]);
        let (mean, std, z) = posterior_step(&mut g, &v.inference, &s(0.3), &a, &s(0.0)).unwrap();
        assert_eq!(z, mean);
        let (mean, std2, z) = posterior_step(&mut g, &v.inference, &s(0.3), &a, &s(1.7)).unwrap();
        assert_eq!(std, std2);
        assert_eq!(z.item(), mean.item() + 1.7 * std.item());

        let zero = Dsvm::<f64>::zeros(small());
        let vz = zero.bind(&mut g);
        let (_, _, z) = posterior_step(&mut g, &vz.inference, &s(0.3), &a, &s(-1.2)).unwrap();
        assert_eq!(z.item(), -1.2 * (LN2 + STD_FLOOR));
    }

    #[test]
    fn posterior_draws_have_posterior_moments() {
        let m = Dsvm::<f64>::init(small(), &mut Rng::new(8));
        let n = 100_000;
        let mut rng = Rng::new(9);
        let mut g = Eager;
        let v = m.bind(&mut g);
        let a = Array::new(3, n, [0.2, -0.1, 0.4].iter().flat_map(|&x| vec![x; n]).collect()).unwrap();
        let z_prev = Array::filled(1, n, 0.3);
        let eta = rng.normal_array(1, n);
        let (mean, std, z) = posterior_step(&mut g, &v.inference, &z_prev, &a, &eta).unwrap();
        let (mu, sd) = (mean.get(0, 0), std.get(0, 0));
        let zs = z.data();
        let emp_mean = zs.iter().sum::<f64>() / n as f64;
        let emp_var = zs.iter().map(|x| (x - emp_mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se_mean = sd / (n as f64).sqrt();
        let se_std = sd / (2.0 * n as f64).sqrt();
        assert!((emp_mean - mu).abs() < 3.0 * se_mean);
        assert!((emp_var.sqrt() - sd).abs() < 3.0 * se_std);
    }
}
