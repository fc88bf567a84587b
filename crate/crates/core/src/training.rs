//! Minibatch stochastic variational training of the DSVM.
//!
//! Each iteration samples `B` training sequences uniformly with replacement,
//! draws one auxiliary noise path per sequence, evaluates the single-sample
//! ELBO of the whole batch on one tape, backpropagates `−mean ELBO` and takes
//! one ADAM step. An epoch is `⌈N/B⌉` iterations. After every validation
//! epoch the validation ELBO is computed with fixed noise (the same draws
//! every epoch) and the best epoch's parameters are kept.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsvm::{elbo, Dsvm};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Parameters};
use crate::scalar::Scalar;
use crate::tensor::{derive_seed, Array, Eager, Graph, Rng, Tape};

/// Largest number of columns evaluated together outside training.
const EVAL_CHUNK: usize = 1024;

const VALID_TAG: u64 = 0x0076_616c_6964;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Validate every `valid_every` epochs (and always after the last one).
    pub valid_every: usize,
    /// Noise draws per validation sequence.
    pub valid_samples: usize,
    /// Written whenever the validation ELBO improves.
    pub checkpoint: Option<PathBuf>,
    /// Rescale the joint gradient to at most this Euclidean norm.
    pub clip_norm: Option<f64>,
    /// Names of the tensors to update (e.g. `"f3.b3"`); all when `None`.
    pub trainable: Option<Vec<String>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 300,
            adam: AdamConfig::default(),
            seed: 0,
            valid_every: 1,
            valid_samples: 1,
            checkpoint: None,
            clip_norm: None,
            trainable: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.valid_every == 0 || self.valid_samples == 0 {
            return Err(Error::InvalidInput(
                "batch_size, epochs, valid_every and valid_samples must be ≥ 1".into(),
            ));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::InvalidInput(format!("clip_norm must be positive, got {c}")));
            }
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::InvalidInput(format!("invalid ADAM settings {a:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean single-sample ELBO per sequence over the epoch's minibatches.
    pub train_elbo: f64,
    pub valid_elbo: Option<f64>,
    /// Wall-clock time; not serialized so reports stay reproducible.
    #[serde(skip_serializing, default)]
    pub seconds: f64,
}

/// Equality ignores wall-clock time.
impl PartialEq for EpochStats {
    fn eq(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.train_elbo.to_bits() == other.train_elbo.to_bits()
            && self.valid_elbo.map(f64::to_bits) == other.valid_elbo.map(f64::to_bits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub initial_valid_elbo: f64,
    /// Epoch whose parameters were returned; 0 means the initialization.
    pub selected_epoch: usize,
    pub best_valid_elbo: f64,
    pub iterations_per_epoch: usize,
}

impl TrainReport {
    /// `epoch,train_elbo,valid_elbo` (empty cell when not validated).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["epoch", "train_elbo", "valid_elbo"]).map_err(io)?;
        for e in &self.epochs {
            wtr.write_record([
                e.epoch.to_string(),
                format!("{:?}", e.train_elbo),
                e.valid_elbo.map(|v| format!("{v:?}")).unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// JSON summary without wall-clock times.
    pub fn write_summary<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(|e| Error::Io(std::io::Error::other(e)))
    }
}

pub struct TrainOutput<T> {
    pub model: Dsvm<T>,
    pub report: TrainReport,
}

/// `B` indices drawn uniformly with replacement.
pub fn sample_minibatch(rng: &mut Rng, n: usize, b: usize) -> Vec<usize> {
    (0..b).map(|_| rng.below(n)).collect()
}

fn check_sequences<S: AsRef<[f64]>>(what: &str, seqs: &[S]) -> Result<usize> {
    let Some(first) = seqs.first() else {
        return Err(Error::InvalidInput(format!("{what}: no sequences")));
    };
    let len = first.as_ref().len();
    if len == 0 || seqs.iter().any(|s| s.as_ref().len() != len) {
        return Err(Error::InvalidInput(format!("{what}: sequences must share a positive length")));
    }
    if seqs.iter().any(|s| s.as_ref().iter().any(|x| !x.is_finite())) {
        return Err(Error::InvalidInput(format!("{what}: non-finite return")));
    }
    Ok(len)
}

/// Returns as `1×B` rows, one per timestep, for the selected sequences.
fn return_rows<T: Scalar, S: AsRef<[f64]>>(seqs: &[S], cols: &[usize], len: usize) -> Vec<Array<T>> {
    (0..len)
        .map(|t| Array::row(cols.iter().map(|&i| T::lit(seqs[i].as_ref()[t])).collect()))
        .collect()
}

/// Noise for `cols` columns, filled timestep by timestep, then latent row,
/// then column.
fn noise_rows<T: Scalar>(rng: &mut Rng, len: usize, dz: usize, cols: usize) -> Vec<Array<T>> {
    (0..len).map(|_| rng.normal_array(dz, cols)).collect()
}

fn global_norm<T: Scalar>(grads: &[Array<T>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|x| x.as_f64() * x.as_f64())
        .sum::<f64>()
        .sqrt()
}

/// Mean single-sample ELBO per sequence, averaged over `n_samples` noise
/// draws. Sequence `i` draws its noise from stream `i` of `seed`
/// (sample-major, then timestep, then latent row), so the value does not
/// depend on chunking or thread count.
pub fn evaluate_elbo<T: Scalar, S: AsRef<[f64]> + Sync>(
    model: &Dsvm<T>,
    sequences: &[S],
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let per_seq = elbo_per_sequence(model, sequences, n_samples, seed)?;
    Ok(per_seq.iter().sum::<f64>() / per_seq.len() as f64)
}

/// Per-sequence means behind [`evaluate_elbo`].
pub fn elbo_per_sequence<T: Scalar, S: AsRef<[f64]> + Sync>(
    model: &Dsvm<T>,
    sequences: &[S],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be ≥ 1".into()));
    }
    let len = check_sequences("evaluate_elbo", sequences)?;
    let dz = model.config.latent_dim;
    let per_chunk = (EVAL_CHUNK / n_samples).max(1);
    let chunks: Vec<(usize, usize)> = (0..sequences.len())
        .step_by(per_chunk)
        .map(|s| (s, (s + per_chunk).min(sequences.len())))
        .collect();
    let parts = chunks
        .par_iter()
        .map(|&(lo, hi)| -> Result<Vec<f64>> {
            let cols: Vec<usize> = (lo..hi).flat_map(|i| std::iter::repeat_n(i, n_samples)).collect();
            let width = cols.len();
            // noise[t] is dz × width; column c = (i − lo)·n_samples + k.
            let mut noise: Vec<Array<T>> = (0..len).map(|_| Array::zeros(dz, width)).collect();
            for i in lo..hi {
                let mut rng = Rng::stream(seed, i as u64);
                for k in 0..n_samples {
                    let c = (i - lo) * n_samples + k;
                    for step in noise.iter_mut() {
                        for row in 0..dz {
                            step.set(row, c, T::lit(rng.normal()));
                        }
                    }
                }
            }
            let mut g = Eager;
            let vars = model.bind(&mut g);
            let r = return_rows::<T, S>(sequences, &cols, len);
            let out = elbo(&mut g, &vars, &r, &noise)?;
            let values = g.value(&out.per_sequence).data();
            Ok((0..hi - lo)
                .map(|j| {
                    values[j * n_samples..(j + 1) * n_samples]
                        .iter()
                        .map(|v| v.as_f64())
                        .sum::<f64>()
                        / n_samples as f64
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

fn save_atomic<T: Scalar>(model: &Dsvm<T>, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    model.save(&tmp)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Algorithm 1 with validation-based model selection.
///
/// Divergence (a non-finite ELBO or gradient) aborts training with
/// [`Error::Divergence`]; the checkpoint file, if configured, still holds the
/// best model validated so far.
pub fn train<T: Scalar, S: AsRef<[f64]> + Sync>(
    init: Dsvm<T>,
    train_set: &[S],
    valid_set: &[S],
    config: &TrainConfig,
) -> Result<TrainOutput<T>> {
    config.validate()?;
    init.config.validate()?;
    let len = check_sequences("train", train_set)?;
    if check_sequences("valid", valid_set)? != len {
        return Err(Error::InvalidInput("train and valid sequences differ in length".into()));
    }
    let names: Vec<String> = init.tensors().into_iter().map(|(n, _)| n).collect();
    let mask: Vec<bool> = match &config.trainable {
        None => vec![true; names.len()],
        Some(list) => {
            for name in list {
                if !names.contains(name) {
                    return Err(Error::InvalidInput(format!("unknown parameter tensor {name:?}")));
                }
            }
            names.iter().map(|n| list.contains(n)).collect()
        }
    };

    let mut model = init;
    let mut adam = AdamState::new(config.adam, model.tensors().into_iter().map(|(_, a)| a));
    let mut rng = Rng::new(config.seed);
    let valid_seed = derive_seed(config.seed, VALID_TAG);
    let dz = model.config.latent_dim;
    let n = train_set.len();
    let iterations = n.div_ceil(config.batch_size);

    let initial_valid_elbo = evaluate_elbo(&model, valid_set, config.valid_samples, valid_seed)?;
    let mut best = (initial_valid_elbo, 0usize, model.clone());
    if let Some(path) = &config.checkpoint {
        save_atomic(&model, path)?;
    }
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut elbo_sum = 0.0;
        for it in 0..iterations {
            let batch = sample_minibatch(&mut rng, n, config.batch_size);
            let r = return_rows::<T, S>(train_set, &batch, len);
            let eta = noise_rows::<T>(&mut rng, len, dz, batch.len());

            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let leaves = vars.leaves();
            let r: Vec<_> = r.into_iter().map(|a| tape.constant(a)).collect();
            let eta: Vec<_> = eta.into_iter().map(|a| tape.constant(a)).collect();
            let out = elbo(&mut tape, &vars, &r, &eta)?;
            let total = tape.sum(&out.per_sequence)?;
            let loss = tape.affine(&total, T::lit(-1.0 / batch.len() as f64), T::zero())?;
            let value = -tape.value(&loss).item().as_f64();
            if !value.is_finite() {
                return Err(Error::Divergence {
                    t: 0,
                    detail: format!("non-finite ELBO at epoch {epoch}, iteration {}", it + 1),
                });
            }
            elbo_sum += value;
            let mut grads = tape.backward(loss)?;
            let mut g: Vec<Array<T>> = leaves
                .iter()
                .zip(&mask)
                .map(|(&v, &on)| {
                    let a = grads.take(v);
                    if on {
                        a
                    } else {
                        Array::zeros(a.rows(), a.cols())
                    }
                })
                .collect();
            let norm = global_norm(&g);
            if !norm.is_finite() {
                return Err(Error::Divergence {
                    t: 0,
                    detail: format!("non-finite gradient at epoch {epoch}, iteration {}", it + 1),
                });
            }
            if let Some(c) = config.clip_norm {
                if norm > c {
                    let s = T::lit(c / norm);
                    for a in &mut g {
                        *a = a.map(|x| x * s);
                    }
                }
            }
            adam.update(&mut model.tensors_mut(), &g)?;
        }
        let validate = epoch % config.valid_every == 0 || epoch == config.epochs;
        let valid_elbo = if validate {
            let v = evaluate_elbo(&model, valid_set, config.valid_samples, valid_seed)?;
            if v > best.0 {
                best = (v, epoch, model.clone());
                if let Some(path) = &config.checkpoint {
                    save_atomic(&model, path)?;
                }
            }
            Some(v)
        } else {
            None
        };
        epochs.push(EpochStats {
            epoch,
            train_elbo: elbo_sum / iterations as f64,
            valid_elbo,
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    let (best_valid_elbo, selected_epoch, model) = best;
    Ok(TrainOutput {
        model,
        report: TrainReport {
            epochs,
            initial_valid_elbo,
            selected_epoch,
            best_valid_elbo,
            iterations_per_epoch: iterations,
        },
    })
}
