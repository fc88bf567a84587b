use super::{Array, Graph, Tape, Var};
use crate::error::Result;
use crate::scalar::Scalar;

/// Compares reverse-mode adjoints with central finite differences.
///
/// `f` builds a scalar from the given leaves on a fresh tape and must be
/// deterministic. Returns the maximum over leaves and entries of
/// `|AD − FD| / max(1, |FD|)`; any non-finite value yields `+∞`.
pub fn grad_check<T, F>(f: F, leaves: &[Array<T>], step: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Array<T>]| -> Result<T> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|a| tape.leaf(a.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(&out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|a| tape.leaf(a.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let two = T::lit(2.0);
    let mut worst = T::zero();
    let mut work: Vec<Array<T>> = leaves.to_vec();
    for (li, var) in vars.iter().enumerate() {
        let ad = grads.wrt(*var);
        for k in 0..leaves[li].len() {
            let x0 = leaves[li].data()[k];
            work[li].data_mut()[k] = x0 + step;
            let up = eval(&work)?;
            work[li].data_mut()[k] = x0 - step;
            let down = eval(&work)?;
            work[li].data_mut()[k] = x0;
            let fd = (up - down) / (two * step);
            let a = ad.data()[k];
            if !fd.is_finite() || !a.is_finite() {
                return Ok(T::infinity());
            }
            let err = (a - fd).abs() / fd.abs().max(T::one());
            if err > worst {
                worst = err;
            }
        }
    }
    Ok(worst)
}
