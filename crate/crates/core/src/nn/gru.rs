use super::{glorot, Parameters};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Array, Graph, Rng};

/// Single-layer GRU cell:
///
/// ```text
/// u  = σ(Wu x + Uu h + bu)
/// r  = σ(Wr x + Ur h + br)
/// h̃  = tanh(Wc x + Uc (r ⊙ h) + bc)
/// h' = u ⊙ h + (1 − u) ⊙ h̃
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T> {
    pub w_update: Array<T>,
    pub u_update: Array<T>,
    pub b_update: Array<T>,
    pub w_reset: Array<T>,
    pub u_reset: Array<T>,
    pub b_reset: Array<T>,
    pub w_cand: Array<T>,
    pub u_cand: Array<T>,
    pub b_cand: Array<T>,
}

impl<T: Scalar> GruParams<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_update: Array::zeros(hidden, input),
            u_update: Array::zeros(hidden, hidden),
            b_update: Array::zeros(hidden, 1),
            w_reset: Array::zeros(hidden, input),
            u_reset: Array::zeros(hidden, hidden),
            b_reset: Array::zeros(hidden, 1),
            w_cand: Array::zeros(hidden, input),
            u_cand: Array::zeros(hidden, hidden),
            b_cand: Array::zeros(hidden, 1),
        }
    }

    /// Glorot-uniform weights, zero biases. Draw order: update, reset,
    /// candidate; input matrix before recurrent matrix.
    pub fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(input, hidden);
        p.w_update = glorot(hidden, input, rng);
        p.u_update = glorot(hidden, hidden, rng);
        p.w_reset = glorot(hidden, input, rng);
        p.u_reset = glorot(hidden, hidden, rng);
        p.w_cand = glorot(hidden, input, rng);
        p.u_cand = glorot(hidden, hidden, rng);
        p
    }

    pub fn hidden_size(&self) -> usize {
        self.u_update.rows()
    }

    pub fn input_size(&self) -> usize {
        self.w_update.cols()
    }

    pub fn bind<G: Graph<T>>(&self, g: &mut G) -> GruVars<G::Var> {
        self.bind_with(&mut |a| g.input(a.clone()))
    }

    /// Variables taken in order from `leaves`.
    pub fn vars_from<V: Clone>(&self, leaves: &[V]) -> Result<GruVars<V>> {
        let n = self.tensors().len();
        if leaves.len() < n {
            return Err(Error::InvalidInput(format!("expected {n} leaves, got {}", leaves.len())));
        }
        let mut it = leaves.iter().cloned();
        Ok(self.bind_with(&mut |_| it.next().expect("counted")))
    }

    /// Builds the variables from `leaf`, called once per tensor in
    /// [`Parameters::tensors`] order.
    pub fn bind_with<V>(&self, leaf: &mut impl FnMut(&Array<T>) -> V) -> GruVars<V> {
        GruVars {
            w_update: leaf(&self.w_update),
            u_update: leaf(&self.u_update),
            b_update: leaf(&self.b_update),
            w_reset: leaf(&self.w_reset),
            u_reset: leaf(&self.u_reset),
            b_reset: leaf(&self.b_reset),
            w_cand: leaf(&self.w_cand),
            u_cand: leaf(&self.u_cand),
            b_cand: leaf(&self.b_cand),
            input: self.input_size(),
            hidden: self.hidden_size(),
        }
    }

    /// Plain evaluation on single vectors.
    pub fn step(&self, h_prev: &[T], x: &[T]) -> Result<Vec<T>> {
        let mut g = crate::tensor::Eager;
        let vars = self.bind(&mut g);
        let h = gru_step(
            &mut g,
            &vars,
            &Array::column(h_prev.to_vec()),
            &Array::column(x.to_vec()),
        )?;
        Ok(h.into_data())
    }
}

impl<T: Scalar> Parameters<T> for GruParams<T> {
    fn tensors(&self) -> Vec<(String, &Array<T>)> {
        vec![
            ("w_update".into(), &self.w_update),
            ("u_update".into(), &self.u_update),
            ("b_update".into(), &self.b_update),
            ("w_reset".into(), &self.w_reset),
            ("u_reset".into(), &self.u_reset),
            ("b_reset".into(), &self.b_reset),
            ("w_cand".into(), &self.w_cand),
            ("u_cand".into(), &self.u_cand),
            ("b_cand".into(), &self.b_cand),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array<T>> {
        vec![
            &mut self.w_update,
            &mut self.u_update,
            &mut self.b_update,
            &mut self.w_reset,
            &mut self.u_reset,
            &mut self.b_reset,
            &mut self.w_cand,
            &mut self.u_cand,
            &mut self.b_cand,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct GruVars<V> {
    pub w_update: V,
    pub u_update: V,
    pub b_update: V,
    pub w_reset: V,
    pub u_reset: V,
    pub b_reset: V,
    pub w_cand: V,
    pub u_cand: V,
    pub b_cand: V,
    input: usize,
    hidden: usize,
}

impl<V: Clone> GruVars<V> {
    pub fn leaves(&self) -> Vec<V> {
        vec![
            self.w_update.clone(),
            self.u_update.clone(),
            self.b_update.clone(),
            self.w_reset.clone(),
            self.u_reset.clone(),
            self.b_reset.clone(),
            self.w_cand.clone(),
            self.u_cand.clone(),
            self.b_cand.clone(),
        ]
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }
}

fn gate<T: Scalar, G: Graph<T>>(
    g: &mut G,
    w: &G::Var,
    u: &G::Var,
    b: &G::Var,
    x: &G::Var,
    h: &G::Var,
) -> Result<G::Var> {
    let wx = g.matmul(w, x)?;
    let uh = g.matmul(u, h)?;
    let s = g.add(&wx, &uh)?;
    g.add_col(&s, b)
}

/// One GRU transition applied to every column of `h_prev` / `x`.
pub fn gru_step<T: Scalar, G: Graph<T>>(
    g: &mut G,
    p: &GruVars<G::Var>,
    h_prev: &G::Var,
    x: &G::Var,
) -> Result<G::Var> {
    let (hv, xv) = (g.value(h_prev), g.value(x));
    if hv.rows() != p.hidden || xv.rows() != p.input || hv.cols() != xv.cols() {
        return Err(Error::ShapeMismatch {
            op: "gru_step",
            left: hv.shape(),
            right: xv.shape(),
        });
    }
    let u = gate(g, &p.w_update, &p.u_update, &p.b_update, x, h_prev)?;
    let u = g.sigmoid(&u)?;
    let r = gate(g, &p.w_reset, &p.u_reset, &p.b_reset, x, h_prev)?;
    let r = g.sigmoid(&r)?;
    let rh = g.mul(&r, h_prev)?;
    let c = gate(g, &p.w_cand, &p.u_cand, &p.b_cand, x, &rh)?;
    let c = g.tanh(&c)?;
    let keep = g.mul(&u, h_prev)?;
    let one_minus_u = g.affine(&u, -T::one(), T::one())?;
    let fresh = g.mul(&one_minus_u, &c)?;
    g.add(&keep, &fresh)
}
