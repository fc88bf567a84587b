use super::network::{prior_step, volatility_step};
use super::Dsvm;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{Array, Eager, Rng};

/// One ancestral draw from the generative network.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPath<T> {
    pub returns: Vec<T>,
    pub sigmas: Vec<T>,
    /// `T·d_z` values, time-major.
    pub zs: Vec<T>,
}

/// Ancestral simulation of `T` steps from θ.
///
/// Per step the generator consumes `d_z` normals for `z_t` and then one
/// normal for `r_t`.
pub fn generate<T: Scalar>(model: &Dsvm<T>, rng: &mut Rng, steps: usize) -> Result<GeneratedPath<T>> {
    let c = model.config;
    let mut g = Eager;
    let vars = model.bind(&mut g);
    let mut z = Array::zeros(c.latent_dim, 1);
    let mut h = Array::zeros(c.hidden_dim, 1);
    let mut sigma = Array::scalar(T::zero());
    let mut r = Array::scalar(T::zero());
    let mut out = GeneratedPath {
        returns: Vec::with_capacity(steps),
        sigmas: Vec::with_capacity(steps),
        zs: Vec::with_capacity(steps * c.latent_dim),
    };
    for _ in 0..steps {
        let (m, v) = prior_step(&mut g, &vars.generative, &z)?;
        let data = (0..c.latent_dim)
            .map(|i| m.get(i, 0) + T::lit(rng.normal()) * v.get(i, 0))
            .collect();
        z = Array::column(data);
        let (h2, s2) = volatility_step(&mut g, &vars.generative, &h, &sigma, &r, &z)?;
        h = h2;
        sigma = s2;
        r = Array::scalar(sigma.item() * T::lit(rng.normal()));
        out.zs.extend_from_slice(z.data());
        out.sigmas.push(sigma.item());
        out.returns.push(r.item());
    }
    Ok(out)
}
