use super::graph::{finite, Graph, Unary};
use super::kernels;
use super::Array;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddCol(usize, usize),
    Affine(usize, T),
    Concat(Vec<usize>),
    Unary(Unary, usize),
    Sum(usize),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Array<T>,
    op: Op<T>,
}

/// Reverse-mode differentiation tape.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and `backward` is a single reverse sweep. A tape can be
/// swept once; build a new tape for the next evaluation.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    swept: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Adjoints of every node after a backward sweep.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    adjoints: Vec<Array<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, v: Var) -> &Array<T> {
        &self.adjoints[v.0]
    }

    pub fn take(&mut self, v: Var) -> Array<T> {
        let shape = self.adjoints[v.0].shape();
        std::mem::replace(&mut self.adjoints[v.0], Array::zeros(shape.0, shape.1))
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::with_capacity(1024),
            swept: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, a: Array<T>) -> Var {
        self.push(a, Op::Input)
    }

    fn push(&mut self, value: Array<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &Array<T> {
        &self.nodes[v.0].value
    }

    /// Propagates adjoints from a scalar `output` back to every node.
    pub fn backward(&mut self, output: Var) -> Result<Gradients<T>> {
        if self.swept {
            return Err(Error::Usage("backward already run on this tape".into()));
        }
        let out = self.val(output);
        if !out.is_scalar() {
            return Err(Error::Usage(format!(
                "backward needs a scalar output, got {:?}",
                out.shape()
            )));
        }
        self.swept = true;

        let mut adj: Vec<Option<Array<T>>> = vec![None; self.nodes.len()];
        adj[output.0] = Some(Array::scalar(T::one()));

        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::MatMul(a, b) => {
                    let da = kernels::matmul_nt(&g, &self.nodes[*b].value);
                    let db = kernels::matmul_tn(&self.nodes[*a].value, &g);
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *b, g.clone());
                    accumulate(&mut adj, *a, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, g.map(|x| -x));
                    accumulate(&mut adj, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let av = &self.nodes[*a].value;
                    let bv = &self.nodes[*b].value;
                    accumulate(&mut adj, *a, zip_unchecked(&g, bv, |g, y| g * y));
                    accumulate(&mut adj, *b, zip_unchecked(&g, av, |g, x| g * x));
                }
                Op::Div(a, b) => {
                    let bv = &self.nodes[*b].value;
                    let yv = &node.value;
                    let ga = zip_unchecked(&g, bv, |g, y| g / y);
                    // d(a/b)/db = -(a/b)/b
                    let gb = zip_unchecked(&ga, yv, |ga, q| -ga * q);
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::AddCol(a, bias) => {
                    accumulate(&mut adj, *bias, kernels::sum_cols(&g));
                    accumulate(&mut adj, *a, g.clone());
                }
                Op::Affine(a, scale) => {
                    let s = *scale;
                    accumulate(&mut adj, *a, g.map(|x| x * s));
                }
                Op::Concat(parts) => {
                    let cols = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.nodes[p].value.rows();
                        let slice = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                        accumulate(&mut adj, p, Array::new(rows, cols, slice)?);
                        offset += rows;
                    }
                }
                Op::Unary(op, a) => {
                    let xv = &self.nodes[*a].value;
                    let yv = &node.value;
                    let data = g
                        .data()
                        .iter()
                        .zip(xv.data())
                        .zip(yv.data())
                        .map(|((&g, &x), &y)| g * op.derivative(x, y))
                        .collect();
                    accumulate(&mut adj, *a, Array::new(xv.rows(), xv.cols(), data)?);
                }
                Op::Sum(a) => {
                    let (r, c) = self.nodes[*a].value.shape();
                    accumulate(&mut adj, *a, Array::filled(r, c, g.item()));
                }
            }
            adj[i] = Some(g);
        }

        let adjoints = adj
            .into_iter()
            .zip(&self.nodes)
            .map(|(a, n)| a.unwrap_or_else(|| Array::zeros(n.value.rows(), n.value.cols())))
            .collect();
        Ok(Gradients { adjoints })
    }
}

fn zip_unchecked<T: Scalar>(a: &Array<T>, b: &Array<T>, f: impl Fn(T, T) -> T) -> Array<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Array::new(a.rows(), a.cols(), data).expect("congruent adjoint")
}

fn accumulate<T: Scalar>(adj: &mut [Option<Array<T>>], i: usize, g: Array<T>) {
    match &mut adj[i] {
        Some(a) => a.add_assign(&g),
        slot => *slot = Some(g),
    }
}

impl<T: Scalar> Graph<T> for Tape<T> {
    type Var = Var;

    fn input(&mut self, a: Array<T>) -> Var {
        self.leaf(a)
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Array<T> {
        self.val(*v)
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = finite("matmul", kernels::matmul(self.val(*a), self.val(*b))?)?;
        Ok(self.push(v, Op::MatMul(a.0, b.0)))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = kernels::zip("add", self.val(*a), self.val(*b), |x, y| x + y)?;
        Ok(self.push(finite("add", v)?, Op::Add(a.0, b.0)))
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = kernels::zip("sub", self.val(*a), self.val(*b), |x, y| x - y)?;
        Ok(self.push(finite("sub", v)?, Op::Sub(a.0, b.0)))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = kernels::zip("mul", self.val(*a), self.val(*b), |x, y| x * y)?;
        Ok(self.push(finite("mul", v)?, Op::Mul(a.0, b.0)))
    }

    fn div(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = kernels::zip("div", self.val(*a), self.val(*b), |x, y| x / y)?;
        Ok(self.push(finite("div", v)?, Op::Div(a.0, b.0)))
    }

    fn add_col(&mut self, a: &Var, bias: &Var) -> Result<Var> {
        let v = finite("add_col", kernels::add_col(self.val(*a), self.val(*bias))?)?;
        Ok(self.push(v, Op::AddCol(a.0, bias.0)))
    }

    fn affine(&mut self, a: &Var, scale: T, shift: T) -> Result<Var> {
        let v = finite("affine", self.val(*a).map(|x| scale * x + shift))?;
        Ok(self.push(v, Op::Affine(a.0, scale)))
    }

    fn concat_rows(&mut self, parts: &[&Var]) -> Result<Var> {
        let values: Vec<&Array<T>> = parts.iter().map(|p| self.val(**p)).collect();
        let v = kernels::concat_rows(&values)?;
        Ok(self.push(v, Op::Concat(parts.iter().map(|p| p.0).collect())))
    }

    fn unary(&mut self, op: Unary, a: &Var) -> Result<Var> {
        let v = finite(op.name(), self.val(*a).map(|x| op.apply(x)))?;
        Ok(self.push(v, Op::Unary(op, a.0)))
    }

    fn sum(&mut self, a: &Var) -> Result<Var> {
        let v = finite("sum", Array::scalar(self.val(*a).sum()))?;
        Ok(self.push(v, Op::Sum(a.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Array::scalar(3.0));
        let y = t.leaf(Array::scalar(-2.0));
        let p = t.mul(&x, &y).unwrap();
        let q = t.mul(&p, &x).unwrap(); // x²y
        let g = t.backward(q).unwrap();
        assert_eq!(g.wrt(x).item(), 2.0 * 3.0 * -2.0);
        assert_eq!(g.wrt(y).item(), 9.0);
    }

    #[test]
    fn second_backward_is_rejected() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Array::scalar(1.0));
        let s = t.sum(&x).unwrap();
        t.backward(s).unwrap();
        assert!(matches!(t.backward(s), Err(Error::Usage(_))));
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Array::column(vec![1.0, 2.0]));
        assert!(matches!(t.backward(x), Err(Error::Usage(_))));
    }

    #[test]
    fn unused_leaf_gets_zero_adjoint() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Array::column(vec![1.0, 2.0]));
        let y = t.leaf(Array::scalar(5.0));
        let s = t.sum(&y).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(x), &Array::zeros(2, 1));
    }

    #[test]
    fn shape_error_names_op() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(Array::zeros(2, 3));
        let b = t.leaf(Array::zeros(2, 3));
        match t.matmul(&a, &b) {
            Err(Error::ShapeMismatch { op, left, right }) => {
                assert_eq!(op, "matmul");
                assert_eq!(left, (2, 3));
                assert_eq!(right, (2, 3));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn log_of_zero_is_an_error() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(Array::scalar(0.0));
        assert!(matches!(t.log(&a), Err(Error::NonFinite { op: "log" })));
    }
}
