//! Generalized Kullback-Leibler divergence and entropy.

use ndarray::{ArrayBase, Data, Dimension};

use crate::coupling::{KernelTriple, LowRankCoupling};
use crate::error::{invalid, shape, Result};

/// `KL(p|q) = Σ p log(p/q) − p + q` with `0 log 0 = 0`.
///
/// Requires equal shapes, `p ≥ 0` and `q > 0`.
pub fn gen_kl<S1, S2, D>(p: &ArrayBase<S1, D>, q: &ArrayBase<S2, D>) -> Result<f64>
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
    D: Dimension,
{
    if p.shape() != q.shape() {
        return Err(shape(format!("KL arguments have shapes {:?} and {:?}", p.shape(), q.shape())));
    }
    let mut acc = 0.0;
    for (&x, &y) in p.iter().zip(q.iter()) {
        if !(y > 0.0) || !y.is_finite() {
            return Err(invalid("KL reference must be finite and strictly positive"));
        }
        if !(x >= 0.0) || !x.is_finite() {
            return Err(invalid("KL argument must be finite and nonnegative"));
        }
        acc += kl_term(x, y);
    }
    Ok(acc)
}

#[inline]
pub(crate) fn kl_term(x: f64, y: f64) -> f64 {
    if x > 0.0 {
        x * (x / y).ln() - x + y
    } else {
        y
    }
}

/// Sum of the three blockwise divergences `KL(Q|ξ₁) + KL(R|ξ₂) + KL(g|ξ₃)`.
pub fn triple_kl(c: &LowRankCoupling, k: &KernelTriple) -> Result<f64> {
    Ok(gen_kl(c.q(), &k.xi1)? + gen_kl(c.r(), &k.xi2)? + gen_kl(c.g(), &k.xi3)?)
}

/// Blockwise divergence between two triples, `KL(Q|Q') + KL(R|R') + KL(g|g')`.
pub fn coupling_kl(a: &LowRankCoupling, b: &LowRankCoupling) -> Result<f64> {
    Ok(gen_kl(a.q(), b.q())? + gen_kl(a.r(), b.r())? + gen_kl(a.g(), b.g())?)
}

/// Symmetrized outer stopping quantity
/// `(KL(new|old) + KL(old|new)) / γ²`.
pub fn delta_criterion(old: &LowRankCoupling, new: &LowRankCoupling, gamma: f64) -> Result<f64> {
    Ok((coupling_kl(new, old)? + coupling_kl(old, new)?) / (gamma * gamma))
}

/// Entropy `H(p) = −Σ p (log p − 1)` with `0 log 0 = 0`.
pub fn entropy<S, D>(p: &ArrayBase<S, D>) -> f64
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    p.iter().map(|&x| if x > 0.0 { -x * (x.ln() - 1.0) } else { 0.0 }).sum()
}

/// Entropy of the factored triple, `H(Q) + H(R) + H(g)`.
pub fn triple_entropy(c: &LowRankCoupling) -> f64 {
    entropy(c.q()) + entropy(c.r()) + entropy(c.g())
}
