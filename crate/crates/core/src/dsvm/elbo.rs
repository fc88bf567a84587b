use super::network::{encode_backward, posterior_step, prior_step, volatility_step};
use super::DsvmVars;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{gaussian_kl, gaussian_log_density, Array, Graph};

/// Graph handles for one timestep of an ELBO evaluation.
#[derive(Debug, Clone)]
pub struct StepVars<V> {
    pub z: V,
    pub prior_mean: V,
    pub prior_std: V,
    pub post_mean: V,
    pub post_std: V,
    pub eta: V,
    pub encoder: V,
    pub sigma: V,
    pub hidden: V,
}

#[derive(Debug, Clone)]
pub struct ElboOutput<V> {
    /// Single-sample ELBO per sequence (`1×B`).
    pub per_sequence: V,
    /// `Σ_t log N(r_t; 0, σ_t²)` per sequence.
    pub log_likelihood: V,
    /// `Σ_t KL(q_t ‖ p_t)` per sequence.
    pub kl: V,
    pub steps: Vec<StepVars<V>>,
}

/// Values of one timestep; every field has one column per sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStep<T> {
    pub z: Array<T>,
    pub prior_mean: Array<T>,
    pub prior_std: Array<T>,
    pub post_mean: Array<T>,
    pub post_std: Array<T>,
    pub eta: Array<T>,
    pub encoder: Array<T>,
    pub sigma: Array<T>,
    pub hidden: Array<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath<T> {
    pub steps: Vec<LatentStep<T>>,
}

impl<T: Scalar> LatentPath<T> {
    pub fn from_output<G: Graph<T>>(g: &G, out: &ElboOutput<G::Var>) -> Self {
        let steps = out
            .steps
            .iter()
            .map(|s| LatentStep {
                z: g.value(&s.z).clone(),
                prior_mean: g.value(&s.prior_mean).clone(),
                prior_std: g.value(&s.prior_std).clone(),
                post_mean: g.value(&s.post_mean).clone(),
                post_std: g.value(&s.post_std).clone(),
                eta: g.value(&s.eta).clone(),
                encoder: g.value(&s.encoder).clone(),
                sigma: g.value(&s.sigma).clone(),
                hidden: g.value(&s.hidden).clone(),
            })
            .collect();
        Self { steps }
    }

    /// Volatility path of sequence (column) `col`.
    pub fn sigmas(&self, col: usize) -> Vec<T> {
        self.steps.iter().map(|s| s.sigma.get(0, col)).collect()
    }
}

pub(crate) fn at_step(t: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { op } => Error::Divergence {
            t,
            detail: format!("non-finite value in {op}"),
        },
        other => other,
    }
}

/// Single-sample Monte Carlo ELBO
///
/// `Σ_t log N(r_t; 0, σ_t²) − Σ_t KL(q(z_t | z_{t-1}, A_t) ‖ p(z_t | z_{t-1}))`
///
/// with `z_t` drawn ancestrally through [`posterior_step`] from the given
/// noise and the KL evaluated in closed form. `returns[t]` is a `1×B` row and
/// `etas[t]` a `d_z×B` matrix. Non-finite intermediates surface as
/// [`Error::Divergence`] carrying the 1-based timestep.
pub fn elbo<T: Scalar, G: Graph<T>>(
    g: &mut G,
    vars: &DsvmVars<G::Var>,
    returns: &[G::Var],
    etas: &[G::Var],
) -> Result<ElboOutput<G::Var>> {
    let config = vars.generative.config;
    if returns.is_empty() {
        return Err(Error::InvalidInput("elbo: empty sequence".into()));
    }
    if etas.len() != returns.len() {
        return Err(Error::InvalidInput(format!(
            "elbo: {} returns but {} noise draws",
            returns.len(),
            etas.len()
        )));
    }
    let batch = g.value(&returns[0]).cols();
    for (r, e) in returns.iter().zip(etas) {
        let (rv, ev) = (g.value(r).shape(), g.value(e).shape());
        if rv != (1, batch) || ev != (config.latent_dim, batch) {
            return Err(Error::ShapeMismatch { op: "elbo", left: rv, right: ev });
        }
    }

    let gen = &vars.generative;
    let inf = &vars.inference;
    let zero_row = g.constant(Array::zeros(1, batch));
    let kl_reduce = (config.latent_dim > 1).then(|| g.constant(Array::filled(1, config.latent_dim, T::one())));

    let encoders = encode_backward(g, inf, returns).map_err(at_step(returns.len()))?;

    let mut z_prev = g.constant(Array::zeros(config.latent_dim, batch));
    let mut h_prev = g.constant(Array::zeros(config.hidden_dim, batch));
    let mut sigma_prev = zero_row.clone();
    let mut r_prev = zero_row.clone();
    let mut log_lik: Option<G::Var> = None;
    let mut kl_total: Option<G::Var> = None;
    let mut steps = Vec::with_capacity(returns.len());

    for (t, ((r, eta), a)) in returns.iter().zip(etas).zip(&encoders).enumerate() {
        let step = |g: &mut G| -> Result<_> {
            let (mp, vp) = prior_step(g, gen, &z_prev)?;
            let (mq, vq, z) = posterior_step(g, inf, &z_prev, a, eta)?;
            let (h, sigma) = volatility_step(g, gen, &h_prev, &sigma_prev, &r_prev, &z)?;
            let ll = gaussian_log_density(g, r, &zero_row, &sigma)?;
            let kl = gaussian_kl(g, &mq, &vq, &mp, &vp)?;
            let kl = match &kl_reduce {
                Some(ones) => g.matmul(ones, &kl)?,
                None => kl,
            };
            let ll_acc = match &log_lik {
                Some(acc) => g.add(acc, &ll)?,
                None => ll,
            };
            let kl_acc = match &kl_total {
                Some(acc) => g.add(acc, &kl)?,
                None => kl,
            };
            Ok((mp, vp, mq, vq, z, h, sigma, ll_acc, kl_acc))
        };
        let (mp, vp, mq, vq, z, h, sigma, ll_acc, kl_acc) = step(g).map_err(at_step(t + 1))?;
        steps.push(StepVars {
            z: z.clone(),
            prior_mean: mp,
            prior_std: vp,
            post_mean: mq,
            post_std: vq,
            eta: eta.clone(),
            encoder: a.clone(),
            sigma: sigma.clone(),
            hidden: h.clone(),
        });
        log_lik = Some(ll_acc);
        kl_total = Some(kl_acc);
        z_prev = z;
        h_prev = h;
        sigma_prev = sigma;
        r_prev = r.clone();
    }

    let log_likelihood = log_lik.expect("non-empty");
    let kl = kl_total.expect("non-empty");
    let per_sequence = g.sub(&log_likelihood, &kl).map_err(at_step(returns.len()))?;
    Ok(ElboOutput {
        per_sequence,
        log_likelihood,
        kl,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsvm::{Dsvm, ModelConfig};
    use crate::nn::{OutputActivation, STD_FLOOR};
    use crate::tensor::density::log_normal_pdf;
    use crate::tensor::{Eager, Rng};

    fn small() -> ModelConfig {
        ModelConfig {
            latent_dim: 1,
            hidden_dim: 4,
            encoder_dim: 3,
            mlp_width: 5,
        }
    }

    #[test]
    fn zero_model_has_zero_kl() {
        let m = Dsvm::<f64>::zeros(ModelConfig::default());
        let r = [0.1, -0.5, 1.2];
        let (value, path) = m.elbo_single(&r, &[0.3, -1.0, 2.0]).unwrap();
        let sigma = std::f64::consts::LN_2 + STD_FLOOR;
        let expected: f64 = r.iter().map(|&x| log_normal_pdf(x, 0.0, sigma)).sum();
        assert!((value - expected).abs() < 1e-12);
        assert!(path.sigmas(0).iter().all(|&s| s == sigma));
    }

    /// g1/g2 copy f1/f2 on the z block and ignore A, so q ≡ p at every step.
    pub(crate) fn posterior_equals_prior(seed: u64) -> Dsvm<f64> {
        let c = small();
        let mut m = Dsvm::<f64>::init(c, &mut Rng::new(seed));
        for (g, f) in [
            (&mut m.inference.g1, &m.generative.f1),
            (&mut m.inference.g2, &m.generative.f2),
        ] {
            let mut w1 = Array::zeros(c.mlp_width, c.latent_dim + c.encoder_dim);
            for i in 0..c.mlp_width {
                for j in 0..c.latent_dim {
                    w1.set(i, j, f.w1.get(i, j));
                }
            }
            *g = f.clone();
            g.w1 = w1;
        }
        assert_eq!(m.inference.g2.output, OutputActivation::Softplus);
        m
    }

    #[test]
    fn shared_posterior_and_prior_give_exact_zero_kl() {
        let m = posterior_equals_prior(3);
        let mut g = Eager;
        let vars = m.bind(&mut g);
        let mut rng = Rng::new(4);
        let r: Vec<Array<f64>> = (0..5).map(|_| rng.normal_array(1, 7)).collect();
        let e: Vec<Array<f64>> = (0..5).map(|_| rng.normal_array(1, 7)).collect();
        let out = elbo(&mut g, &vars, &r, &e).unwrap();
        assert!(out.kl.data().iter().all(|&k| k == 0.0));
        assert_eq!(out.per_sequence, out.log_likelihood);
    }

    #[test]
    fn path_satisfies_reparameterization_and_positivity() {
        let m = Dsvm::<f64>::init(small(), &mut Rng::new(5));
        let (_, path) = m
            .elbo_single(&[0.2, -0.3, 0.8, 0.0], &[0.5, -1.5, 0.1, 2.2])
            .unwrap();
        for s in &path.steps {
            assert_eq!(s.z.item(), s.post_mean.item() + s.eta.item() * s.post_std.item());
            assert!(s.prior_std.item() > 0.0 && s.post_std.item() > 0.0 && s.sigma.item() > 0.0);
        }
    }

    #[test]
    fn generative_causality() {
        // σ_t must not move when r_{t'} with t' ≥ t changes, for fixed z.
        let m = Dsvm::<f64>::init(small(), &mut Rng::new(6));
        let mut g = Eager;
        let vars = m.bind(&mut g);
        let zs = [0.1, 0.7, -0.4, 0.2];
        let unroll = |g: &mut Eager, rs: &[f64]| -> Vec<f64> {
            let mut h = Array::zeros(4, 1);
            let (mut s, mut r) = (Array::scalar(0.0), Array::scalar(0.0));
            let mut out = vec![];
            for t in 0..4 {
                let (h2, s2) = volatility_step(g, &vars.generative, &h, &s, &r, &Array::scalar(zs[t])).unwrap();
                out.push(s2.item());
                h = h2;
                s = s2;
                r = Array::scalar(rs[t]);
            }
            out
        };
        let a = unroll(&mut g, &[0.1, 0.2, 0.3, 0.4]);
        let b = unroll(&mut g, &[0.1, 0.2, -5.0, 9.0]);
        assert_eq!(a[..3], b[..3]);
        assert_ne!(a[3], b[3]);
    }

    #[test]
    fn posterior_causality() {
        // m_t^(q), v_t^(q) depend on (z_{t-1}, r_{t:T}); with frozen z_{t-1}
        // (η fixed and earlier posteriors unaffected) changes to r_{t'<t}
        // reach step t only through z_{t-1}.
        let m = Dsvm::<f64>::init(small(), &mut Rng::new(7));
        let mut g = Eager;
        let vars = m.bind(&mut g);
        let r1: Vec<Array<f64>> = [0.3, -0.1, 0.5].iter().map(|&x| Array::scalar(x)).collect();
        let mut r2 = r1.clone();
        r2[0] = Array::scalar(4.0);
        let a1 = encode_backward(&mut g, &vars.inference, &r1).unwrap();
        let a2 = encode_backward(&mut g, &vars.inference, &r2).unwrap();
        let z_prev = Array::scalar(0.25);
        let eta = Array::scalar(0.0);
        for t in 1..3 {
            let p1 = posterior_step(&mut g, &vars.inference, &z_prev, &a1[t], &eta).unwrap();
            let p2 = posterior_step(&mut g, &vars.inference, &z_prev, &a2[t], &eta).unwrap();
            assert_eq!((p1.0, p1.1), (p2.0, p2.1));
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let m = Dsvm::<f64>::zeros(small());
        assert!(m.elbo_single(&[0.1, 0.2], &[0.0]).is_err());
        assert!(m.elbo_single(&[], &[]).is_err());
    }

    #[test]
    fn divergence_reports_timestep() {
        let mut m = Dsvm::<f64>::zeros(small());
        m.generative.f3.b3 = Array::column(vec![-800.0]);
        // σ = floor; a huge return makes the quadratic term overflow at t = 2.
        let err = m.elbo_single(&[0.0, 1e160], &[0.0, 0.0]).unwrap_err();
        match err {
            Error::Divergence { t, .. } => assert_eq!(t, 2),
            other => panic!("{other:?}"),
        }
    }
}
