//! Network building blocks: two-hidden-layer MLPs, a GRU cell, Glorot
//! initialization, ADAM and the checkpoint file format.

mod adam;
pub mod checkpoint;
mod gru;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use gru::{gru_step, GruParams, GruVars};
pub use mlp::{mlp_forward, HiddenActivation, MlpParams, MlpVars, OutputActivation, STD_FLOOR};

use crate::scalar::Scalar;
use crate::tensor::{Array, Rng};

/// Ordered, named view of a parameter container. The order is the flattening
/// order for optimizers, gradients and checkpoints.
pub trait Parameters<T: Scalar> {
    fn tensors(&self) -> Vec<(String, &Array<T>)>;
    fn tensors_mut(&mut self) -> Vec<&mut Array<T>>;

    fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, a)| a.len()).sum()
    }
}

/// Glorot-uniform matrix: entries uniform on `±√(6/(fan_in+fan_out))`,
/// drawn row-major.
pub fn glorot<T: Scalar>(rows: usize, cols: usize, rng: &mut Rng) -> Array<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::lit(rng.uniform_in(-bound, bound)))
        .collect();
    Array::new(rows, cols, data).expect("shape")
}

pub(crate) fn prefixed<'a, T: Scalar>(
    prefix: &str,
    items: Vec<(String, &'a Array<T>)>,
) -> Vec<(String, &'a Array<T>)> {
    items
        .into_iter()
        .map(|(n, a)| (format!("{prefix}.{n}"), a))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_bound_and_determinism() {
        let a: Array<f64> = glorot(4, 4, &mut Rng::new(5));
        let b: Array<f64> = glorot(4, 4, &mut Rng::new(5));
        assert_eq!(a, b);
        let bound = (6.0f64 / 8.0).sqrt();
        assert!(a.data().iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn glorot_histogram_is_flat() {
        // 100_000 draws in 20 equal bins; each bin count is Binomial(n, 1/20).
        let a: Array<f64> = glorot(250, 400, &mut Rng::new(11));
        let bound = (6.0f64 / 650.0).sqrt();
        let bins = 20;
        let mut counts = vec![0usize; bins];
        for &x in a.data() {
            let k = (((x + bound) / (2.0 * bound)) * bins as f64) as usize;
            counts[k.min(bins - 1)] += 1;
        }
        let n = a.len() as f64;
        let expected = n / bins as f64;
        let sd = (n * (1.0 / bins as f64) * (1.0 - 1.0 / bins as f64)).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() < 5.0 * sd, "bin count {c}");
        }
    }
}
