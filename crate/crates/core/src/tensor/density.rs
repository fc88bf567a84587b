//! Gaussian log density and KL divergence, built from differentiable
//! primitives so they work on any [`Graph`]. All arguments are elementwise
//! and share one shape; scalars are 1×1.

use super::Graph;
use crate::error::{Error, Result};
use crate::scalar::{Scalar, HALF_LN_2PI};

fn positive<T: Scalar, G: Graph<T>>(g: &G, v: &G::Var, op: &'static str) -> Result<()> {
    if g.value(v).data().iter().all(|&s| s > T::zero()) {
        Ok(())
    } else {
        Err(Error::domain(op, "standard deviation must be positive"))
    }
}

/// `log N(x; mean, std²) = −½log(2π) − log std − (x−mean)²/(2 std²)`.
pub fn gaussian_log_density<T: Scalar, G: Graph<T>>(
    g: &mut G,
    x: &G::Var,
    mean: &G::Var,
    std: &G::Var,
) -> Result<G::Var> {
    positive(g, std, "gaussian_log_density")?;
    let d = g.sub(x, mean)?;
    let z = g.div(&d, std)?;
    let z2 = g.square(&z)?;
    let quad = g.affine(&z2, T::lit(-0.5), T::lit(-HALF_LN_2PI))?;
    let log_std = g.log(std)?;
    g.sub(&quad, &log_std)
}

/// `KL(N(mq, vq²) ‖ N(mp, vp²)) = log(vp/vq) + (vq² + (mq−mp)²)/(2vp²) − ½`,
/// with `vq`, `vp` standard deviations.
pub fn gaussian_kl<T: Scalar, G: Graph<T>>(
    g: &mut G,
    mq: &G::Var,
    vq: &G::Var,
    mp: &G::Var,
    vp: &G::Var,
) -> Result<G::Var> {
    positive(g, vq, "gaussian_kl")?;
    positive(g, vp, "gaussian_kl")?;
    let log_vp = g.log(vp)?;
    let log_vq = g.log(vq)?;
    let log_ratio = g.sub(&log_vp, &log_vq)?;
    let dm = g.sub(mq, mp)?;
    let dm2 = g.square(&dm)?;
    let vq2 = g.square(vq)?;
    let num = g.add(&vq2, &dm2)?;
    let vp2 = g.square(vp)?;
    let frac = g.div(&num, &vp2)?;
    let half = g.affine(&frac, T::lit(0.5), T::lit(-0.5))?;
    g.add(&log_ratio, &half)
}

/// Plain-value `log N(x; mean, std²)`.
pub fn log_normal_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -HALF_LN_2PI - std.ln() - 0.5 * z * z
}
