//! Deep stochastic volatility model.
//!
//! Generative network (θ):
//!
//! ```text
//! z_t ~ N(f1(z_{t-1}), f2(z_{t-1})²)
//! h_t = f_h(h_{t-1}, [σ_{t-1}, r_{t-1}, z_t])      (GRU)
//! σ_t = f3(h_t)
//! r_t ~ N(0, σ_t²)
//! ```
//!
//! Inference network (φ):
//!
//! ```text
//! A_t = g_A(A_{t+1}, r_t)                          (backward GRU)
//! z_t ~ N(g1(z_{t-1}, A_t), g2(z_{t-1}, A_t)²)
//! ```
//!
//! with `z_0 = 0`, `σ_0 = 0`, `r_0 = 0`, `h_0 = 0` and `A_{T+1} = 0`.
//! Everything is batched: a batch of `B` sequences is a set of `1×B` return
//! rows, and every latent quantity is a `dim×B` matrix.

mod elbo;
mod generate;
mod network;
pub mod quadrature;

pub(crate) use elbo::at_step;
pub use elbo::{elbo, ElboOutput, LatentPath, LatentStep, StepVars};
pub use generate::{generate, GeneratedPath};
pub use network::{encode_backward, posterior_step, prior_step, volatility_step};

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{checkpoint, prefixed, GruParams, GruVars, MlpParams, MlpVars, OutputActivation, Parameters};
use crate::scalar::Scalar;
use crate::tensor::{Array, Eager, Graph, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub encoder_dim: usize,
    pub mlp_width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 1,
            hidden_dim: 10,
            encoder_dim: 10,
            mlp_width: 16,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.hidden_dim == 0 || self.encoder_dim == 0 || self.mlp_width == 0 {
            return Err(Error::InvalidInput(format!("model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// θ = {f1, f2, f3, f_h}.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeParams<T> {
    pub f1: MlpParams<T>,
    pub f2: MlpParams<T>,
    pub f3: MlpParams<T>,
    pub f_h: GruParams<T>,
}

/// φ = {g1, g2, g_A}.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceParams<T> {
    pub g1: MlpParams<T>,
    pub g2: MlpParams<T>,
    pub g_a: GruParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dsvm<T> {
    pub config: ModelConfig,
    pub generative: GenerativeParams<T>,
    pub inference: InferenceParams<T>,
}

#[derive(Debug, Clone)]
pub struct GenerativeVars<V> {
    pub f1: MlpVars<V>,
    pub f2: MlpVars<V>,
    pub f3: MlpVars<V>,
    pub f_h: GruVars<V>,
    pub config: ModelConfig,
}

#[derive(Debug, Clone)]
pub struct InferenceVars<V> {
    pub g1: MlpVars<V>,
    pub g2: MlpVars<V>,
    pub g_a: GruVars<V>,
    pub config: ModelConfig,
}

#[derive(Debug, Clone)]
pub struct DsvmVars<V> {
    pub generative: GenerativeVars<V>,
    pub inference: InferenceVars<V>,
}

impl<V: Clone> DsvmVars<V> {
    /// Same order as [`Parameters::tensors`] on [`Dsvm`].
    pub fn leaves(&self) -> Vec<V> {
        let g = &self.generative;
        let i = &self.inference;
        let mut out = g.f1.leaves();
        out.extend(g.f2.leaves());
        out.extend(g.f3.leaves());
        out.extend(g.f_h.leaves());
        out.extend(i.g1.leaves());
        out.extend(i.g2.leaves());
        out.extend(i.g_a.leaves());
        out
    }
}

impl<T: Scalar> Dsvm<T> {
    pub fn zeros(config: ModelConfig) -> Self {
        let ModelConfig {
            latent_dim: dz,
            hidden_dim: dh,
            encoder_dim: da,
            mlp_width: w,
        } = config;
        Self {
            config,
            generative: GenerativeParams {
                f1: MlpParams::zeros(dz, w, dz, OutputActivation::Linear),
                f2: MlpParams::zeros(dz, w, dz, OutputActivation::Softplus),
                f3: MlpParams::zeros(dh, w, 1, OutputActivation::Softplus),
                f_h: GruParams::zeros(2 + dz, dh),
            },
            inference: InferenceParams {
                g1: MlpParams::zeros(dz + da, w, dz, OutputActivation::Linear),
                g2: MlpParams::zeros(dz + da, w, dz, OutputActivation::Softplus),
                g_a: GruParams::zeros(1, da),
            },
        }
    }

    /// Random initialization; networks are drawn in the order
    /// f1, f2, f3, f_h, g1, g2, g_A.
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Self {
        let ModelConfig {
            latent_dim: dz,
            hidden_dim: dh,
            encoder_dim: da,
            mlp_width: w,
        } = config;
        let f1 = MlpParams::init(dz, w, dz, OutputActivation::Linear, rng);
        let f2 = MlpParams::init(dz, w, dz, OutputActivation::Softplus, rng);
        let f3 = MlpParams::init(dh, w, 1, OutputActivation::Softplus, rng);
        let f_h = GruParams::init(2 + dz, dh, rng);
        let g1 = MlpParams::init(dz + da, w, dz, OutputActivation::Linear, rng);
        let g2 = MlpParams::init(dz + da, w, dz, OutputActivation::Softplus, rng);
        let g_a = GruParams::init(1, da, rng);
        Self {
            config,
            generative: GenerativeParams { f1, f2, f3, f_h },
            inference: InferenceParams { g1, g2, g_a },
        }
    }

    pub fn bind<G: Graph<T>>(&self, g: &mut G) -> DsvmVars<G::Var> {
        self.bind_with(&mut |a| g.input(a.clone()))
    }

    /// Builds the variables from `leaf`, called once per tensor in
    /// [`Parameters::tensors`] order.
    pub fn bind_with<V>(&self, leaf: &mut impl FnMut(&Array<T>) -> V) -> DsvmVars<V> {
        let gp = &self.generative;
        let ip = &self.inference;
        let f1 = gp.f1.bind_with(leaf);
        let f2 = gp.f2.bind_with(leaf);
        let f3 = gp.f3.bind_with(leaf);
        let f_h = gp.f_h.bind_with(leaf);
        let g1 = ip.g1.bind_with(leaf);
        let g2 = ip.g2.bind_with(leaf);
        let g_a = ip.g_a.bind_with(leaf);
        DsvmVars {
            generative: GenerativeVars {
                f1,
                f2,
                f3,
                f_h,
                config: self.config,
            },
            inference: InferenceVars {
                g1,
                g2,
                g_a,
                config: self.config,
            },
        }
    }

    /// Variables taken in order from `leaves` (e.g. the `Var`s a gradient
    /// check created for [`Parameters::tensors`]).
    pub fn vars_from<V: Clone>(&self, leaves: &[V]) -> Result<DsvmVars<V>> {
        let n = self.tensors().len();
        if leaves.len() < n {
            return Err(Error::InvalidInput(format!("expected {n} leaves, got {}", leaves.len())));
        }
        let mut it = leaves.iter().cloned();
        Ok(self.bind_with(&mut |_| it.next().expect("counted")))
    }

    /// Single-sequence ELBO with the given auxiliary noise (`T·d_z` values,
    /// time-major), evaluated without recording gradients.
    pub fn elbo_single(&self, returns: &[T], etas: &[T]) -> Result<(T, LatentPath<T>)> {
        let dz = self.config.latent_dim;
        if etas.len() != returns.len() * dz {
            return Err(Error::InvalidInput(format!(
                "expected {} noise values, got {}",
                returns.len() * dz,
                etas.len()
            )));
        }
        let mut g = Eager;
        let vars = self.bind(&mut g);
        let r: Vec<Array<T>> = returns.iter().map(|&x| Array::scalar(x)).collect();
        let e: Vec<Array<T>> = etas.chunks(dz).map(|c| Array::column(c.to_vec())).collect();
        let out = elbo(&mut g, &vars, &r, &e)?;
        let value = out.per_sequence.item();
        Ok((value, LatentPath::from_output(&g, &out)))
    }

    pub fn write_checkpoint<W: Write>(&self, w: W) -> Result<()> {
        let meta = serde_json::json!({ "model": "dsvm", "config": self.config });
        checkpoint::write(w, meta, &self.tensors())
    }

    pub fn read_checkpoint<R: Read>(r: R) -> Result<Self> {
        let (manifest, arrays) = checkpoint::read::<T, _>(r)?;
        if manifest.meta.get("model").and_then(|m| m.as_str()) != Some("dsvm") {
            return Err(Error::Checkpoint("not a dsvm checkpoint".into()));
        }
        let config: ModelConfig = serde_json::from_value(manifest.meta["config"].clone())
            .map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
        config.validate()?;
        let mut model = Self::zeros(config);
        {
            let expected = model.tensors();
            if expected.len() != manifest.tensors.len() {
                return Err(Error::Checkpoint("tensor count does not match config".into()));
            }
            for ((name, a), entry) in expected.iter().zip(&manifest.tensors) {
                if *name != entry.name || a.shape() != (entry.rows, entry.cols) {
                    return Err(Error::Checkpoint(format!(
                        "tensor {} {:?} does not match manifest entry {} ({}, {})",
                        name,
                        a.shape(),
                        entry.name,
                        entry.rows,
                        entry.cols
                    )));
                }
            }
        }
        for (slot, a) in model.tensors_mut().into_iter().zip(arrays) {
            *slot = a;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_checkpoint(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_checkpoint(BufReader::new(File::open(path)?))
    }
}

impl<T: Scalar> Parameters<T> for Dsvm<T> {
    fn tensors(&self) -> Vec<(String, &Array<T>)> {
        let g = &self.generative;
        let i = &self.inference;
        let mut out = prefixed("f1", g.f1.tensors());
        out.extend(prefixed("f2", g.f2.tensors()));
        out.extend(prefixed("f3", g.f3.tensors()));
        out.extend(prefixed("f_h", g.f_h.tensors()));
        out.extend(prefixed("g1", i.g1.tensors()));
        out.extend(prefixed("g2", i.g2.tensors()));
        out.extend(prefixed("g_a", i.g_a.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array<T>> {
        let g = &mut self.generative;
        let i = &mut self.inference;
        let mut out = g.f1.tensors_mut();
        out.extend(g.f2.tensors_mut());
        out.extend(g.f3.tensors_mut());
        out.extend(g.f_h.tensors_mut());
        out.extend(i.g1.tensors_mut());
        out.extend(i.g2.tensors_mut());
        out.extend(i.g_a.tensors_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    #[test]
    fn leaves_follow_tensor_order() {
        let model = Dsvm::<f64>::init(ModelConfig::default(), &mut Rng::new(1));
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let leaves = vars.leaves();
        let tensors = model.tensors();
        assert_eq!(leaves.len(), tensors.len());
        for (v, (_, a)) in leaves.iter().zip(&tensors) {
            assert_eq!(tape.value(v), *a);
        }
    }

    #[test]
    fn input_widths_follow_config() {
        let c = ModelConfig {
            latent_dim: 2,
            hidden_dim: 5,
            encoder_dim: 3,
            mlp_width: 4,
        };
        let m = Dsvm::<f64>::zeros(c);
        assert_eq!(m.generative.f1.input_width(), 2);
        assert_eq!(m.generative.f_h.input_size(), 4);
        assert_eq!(m.generative.f3.input_width(), 5);
        assert_eq!(m.inference.g1.input_width(), 5);
        assert_eq!(m.inference.g_a.input_size(), 1);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let model = Dsvm::<f64>::init(ModelConfig::default(), &mut Rng::new(2));
        let mut buf = Vec::new();
        model.write_checkpoint(&mut buf).unwrap();
        let back = Dsvm::<f64>::read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn checkpoint_with_wrong_shapes_is_rejected() {
        let model = Dsvm::<f64>::zeros(ModelConfig::default());
        let mut buf = Vec::new();
        let mut tensors = model.tensors();
        let wrong = Array::zeros(3, 3);
        tensors[0].1 = &wrong;
        checkpoint::write(
            &mut buf,
            serde_json::json!({"model": "dsvm", "config": model.config}),
            &tensors,
        )
        .unwrap();
        assert!(Dsvm::<f64>::read_checkpoint(buf.as_slice()).is_err());
    }
}
