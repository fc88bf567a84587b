use serde::{Deserialize, Serialize};

use super::{glorot, Parameters};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Array, Graph, Rng};

/// Added to every softplus output so standard deviations never reach zero.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenActivation {
    Tanh,
    Sigmoid,
    Softplus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Linear,
    /// `softplus(x) + STD_FLOOR`, strictly positive.
    Softplus,
}

/// Two hidden layers and an affine readout:
/// `h1 = act(W1 x + b1)`, `h2 = act(W2 h1 + b2)`, `out = outact(W3 h2 + b3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub w1: Array<T>,
    pub b1: Array<T>,
    pub w2: Array<T>,
    pub b2: Array<T>,
    pub w3: Array<T>,
    pub b3: Array<T>,
    pub hidden: HiddenActivation,
    pub output: OutputActivation,
}

impl<T: Scalar> MlpParams<T> {
    pub fn zeros(input: usize, width: usize, out: usize, output: OutputActivation) -> Self {
        Self {
            w1: Array::zeros(width, input),
            b1: Array::zeros(width, 1),
            w2: Array::zeros(width, width),
            b2: Array::zeros(width, 1),
            w3: Array::zeros(out, width),
            b3: Array::zeros(out, 1),
            hidden: HiddenActivation::Tanh,
            output,
        }
    }

    /// Glorot-uniform weights, zero biases. Draw order: W1, W2, W3.
    pub fn init(
        input: usize,
        width: usize,
        out: usize,
        output: OutputActivation,
        rng: &mut Rng,
    ) -> Self {
        Self {
            w1: glorot(width, input, rng),
            w2: glorot(width, width, rng),
            w3: glorot(out, width, rng),
            ..Self::zeros(input, width, out, output)
        }
    }

    pub fn input_width(&self) -> usize {
        self.w1.cols()
    }

    pub fn output_width(&self) -> usize {
        self.w3.rows()
    }

    pub fn bind<G: Graph<T>>(&self, g: &mut G) -> MlpVars<G::Var> {
        self.bind_with(&mut |a| g.input(a.clone()))
    }

    /// Variables taken in order from `leaves`.
    pub fn vars_from<V: Clone>(&self, leaves: &[V]) -> Result<MlpVars<V>> {
        let n = self.tensors().len();
        if leaves.len() < n {
            return Err(Error::InvalidInput(format!("expected {n} leaves, got {}", leaves.len())));
        }
        let mut it = leaves.iter().cloned();
        Ok(self.bind_with(&mut |_| it.next().expect("counted")))
    }

    /// Builds the variables from `leaf`, called once per tensor in
    /// [`Parameters::tensors`] order.
    pub fn bind_with<V>(&self, leaf: &mut impl FnMut(&Array<T>) -> V) -> MlpVars<V> {
        MlpVars {
            w1: leaf(&self.w1),
            b1: leaf(&self.b1),
            w2: leaf(&self.w2),
            b2: leaf(&self.b2),
            w3: leaf(&self.w3),
            b3: leaf(&self.b3),
            hidden: self.hidden,
            output: self.output,
            input_width: self.input_width(),
        }
    }

    /// Plain evaluation on a single input vector.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let mut g = crate::tensor::Eager;
        let vars = self.bind(&mut g);
        let out = mlp_forward(&mut g, &vars, &Array::column(x.to_vec()))?;
        Ok(out.into_data())
    }
}

impl<T: Scalar> Parameters<T> for MlpParams<T> {
    fn tensors(&self) -> Vec<(String, &Array<T>)> {
        vec![
            ("w1".into(), &self.w1),
            ("b1".into(), &self.b1),
            ("w2".into(), &self.w2),
            ("b2".into(), &self.b2),
            ("w3".into(), &self.w3),
            ("b3".into(), &self.b3),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array<T>> {
        vec![
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }
}

/// MLP parameters registered on a graph.
#[derive(Debug, Clone)]
pub struct MlpVars<V> {
    pub w1: V,
    pub b1: V,
    pub w2: V,
    pub b2: V,
    pub w3: V,
    pub b3: V,
    pub hidden: HiddenActivation,
    pub output: OutputActivation,
    input_width: usize,
}

impl<V: Clone> MlpVars<V> {
    /// Same order as [`Parameters::tensors`].
    pub fn leaves(&self) -> Vec<V> {
        vec![
            self.w1.clone(),
            self.b1.clone(),
            self.w2.clone(),
            self.b2.clone(),
            self.w3.clone(),
            self.b3.clone(),
        ]
    }
}

fn hidden_act<T: Scalar, G: Graph<T>>(g: &mut G, act: HiddenActivation, x: &G::Var) -> Result<G::Var> {
    match act {
        HiddenActivation::Tanh => g.tanh(x),
        HiddenActivation::Sigmoid => g.sigmoid(x),
        HiddenActivation::Softplus => g.softplus(x),
    }
}

/// Applies the MLP to every column of `x`.
pub fn mlp_forward<T: Scalar, G: Graph<T>>(
    g: &mut G,
    p: &MlpVars<G::Var>,
    x: &G::Var,
) -> Result<G::Var> {
    let xv = g.value(x);
    if xv.rows() != p.input_width {
        return Err(Error::ShapeMismatch {
            op: "mlp_forward",
            left: (p.input_width, 1),
            right: xv.shape(),
        });
    }
    let a1 = g.matmul(&p.w1, x)?;
    let a1 = g.add_col(&a1, &p.b1)?;
    let h1 = hidden_act(g, p.hidden, &a1)?;
    let a2 = g.matmul(&p.w2, &h1)?;
    let a2 = g.add_col(&a2, &p.b2)?;
    let h2 = hidden_act(g, p.hidden, &a2)?;
    let a3 = g.matmul(&p.w3, &h2)?;
    let a3 = g.add_col(&a3, &p.b3)?;
    match p.output {
        OutputActivation::Linear => Ok(a3),
        OutputActivation::Softplus => {
            let sp = g.softplus(&a3)?;
            g.affine(&sp, T::one(), T::lit(STD_FLOOR))
        }
    }
}
