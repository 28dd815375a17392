//! Dense entropic unbalanced Sinkhorn.
//!
//! The scaling updates are
//! `u = (a / Kv)^{τ₁/(τ₁+ε)}`, `v = (b / Kᵀu)^{τ₂/(τ₂+ε)}` with `K = exp(−C/ε)`,
//! evaluated on `log u`, `log v` with log-sum-exp so that small `ε` does not
//! underflow the kernel.

use ndarray::{Array1, Array2};

use crate::{DenseCoupling, OracleError, Result};

#[derive(Debug, Clone)]
pub struct SinkhornOutput {
    pub coupling: DenseCoupling,
    pub iterations: usize,
    /// `max(‖Δ log u‖∞, ‖Δ log v‖∞)` after each sweep.
    pub residuals: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn dense_uot_sinkhorn(
    cost: &Array2<f64>,
    a: &Array1<f64>,
    b: &Array1<f64>,
    epsilon: f64,
    tau1: f64,
    tau2: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SinkhornOutput> {
    let (n, m) = cost.dim();
    if a.len() != n || b.len() != m {
        return Err(OracleError::Shape(format!("cost {n}x{m}, a {}, b {}", a.len(), b.len())));
    }
    if !(epsilon > 0.0) {
        return Err(OracleError::Invalid("epsilon must be positive".into()));
    }
    if a.iter().chain(b.iter()).any(|&w| !(w > 0.0)) {
        return Err(OracleError::Invalid("marginals must be positive".into()));
    }
    let log_k = cost.mapv(|c| -c / epsilon);
    if log_k.iter().any(|x| !x.is_finite()) {
        return Err(OracleError::NonFinite("kernel exponent (epsilon too small for cost scale)".into()));
    }
    let log_a = a.mapv(f64::ln);
    let log_b = b.mapv(f64::ln);
    let p1 = tau1 / (tau1 + epsilon);
    let p2 = tau2 / (tau2 + epsilon);

    let mut log_u = Array1::<f64>::zeros(n);
    let mut log_v = Array1::<f64>::zeros(m);
    let mut residuals = Vec::new();

    for it in 0..max_iter {
        let mut change: f64 = 0.0;
        for i in 0..n {
            let lse = log_sum_exp((0..m).map(|j| log_k[[i, j]] + log_v[j]));
            let new = p1 * (log_a[i] - lse);
            change = change.max((new - log_u[i]).abs());
            log_u[i] = new;
        }
        for j in 0..m {
            let lse = log_sum_exp((0..n).map(|i| log_k[[i, j]] + log_u[i]));
            let new = p2 * (log_b[j] - lse);
            change = change.max((new - log_v[j]).abs());
            log_v[j] = new;
        }
        if !change.is_finite() {
            return Err(OracleError::NonFinite(format!("scalings at sweep {it}")));
        }
        residuals.push(change);
        if change < tol {
            let p = Array2::from_shape_fn((n, m), |(i, j)| (log_u[i] + log_k[[i, j]] + log_v[j]).exp());
            return Ok(SinkhornOutput { coupling: DenseCoupling::new(p)?, iterations: it + 1, residuals });
        }
    }
    Err(OracleError::NoConvergence(max_iter))
}

fn log_sum_exp<I: Iterator<Item = f64> + Clone>(xs: I) -> f64 {
    let mx = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + xs.map(|x| (x - mx).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn scalar_closed_form() {
        let out = dense_uot_sinkhorn(&array![[2.0]], &array![1.0], &array![1.0], 1.0, 1.0, 1.0, 1e-14, 10_000).unwrap();
        let expected = (-2.0f64 / 3.0).exp();
        assert!((out.coupling.p[[0, 0]] - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_epsilon() {
        let r = dense_uot_sinkhorn(&array![[1.0]], &array![1.0], &array![1.0], 0.0, 1.0, 1.0, 1e-9, 10);
        assert!(matches!(r, Err(OracleError::Invalid(_))));
    }
}
