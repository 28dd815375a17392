//! Factored couplings `P = Q Diag(1/g) Rᵀ` and the kernel triples that drive
//! each proximal step.

use ndarray::{Array1, Array2, Axis};

use crate::error::{invalid, shape, Error, Result};

/// Nonnegative factors `(Q, R, g)` of a rank-`r` coupling.
///
/// Feasibility means `Qᵀ1ₙ = Rᵀ1ₘ = g`; the Dykstra solvers return triples
/// that satisfy it to rounding error. The constructor only checks shapes,
/// signs and `g > 0`, so that gradients can be probed at infeasible points.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankCoupling {
    q: Array2<f64>,
    r: Array2<f64>,
    g: Array1<f64>,
}

impl LowRankCoupling {
    pub fn new(q: Array2<f64>, r: Array2<f64>, g: Array1<f64>) -> Result<Self> {
        let rank = g.len();
        if rank == 0 {
            return Err(invalid("rank must be at least 1"));
        }
        if q.ncols() != rank || r.ncols() != rank {
            return Err(shape(format!(
                "Q has {} columns, R has {}, g has length {rank}",
                q.ncols(),
                r.ncols()
            )));
        }
        if q.iter().chain(r.iter()).any(|x| !x.is_finite() || *x < 0.0) {
            return Err(invalid("Q and R must be finite and nonnegative"));
        }
        if g.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(invalid("g must be finite and positive"));
        }
        Ok(Self { q, r, g })
    }

    pub(crate) fn from_parts_unchecked(q: Array2<f64>, r: Array2<f64>, g: Array1<f64>) -> Self {
        Self { q, r, g }
    }

    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn r(&self) -> &Array2<f64> {
        &self.r
    }

    pub fn g(&self) -> &Array1<f64> {
        &self.g
    }

    pub fn into_parts(self) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
        (self.q, self.r, self.g)
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn m(&self) -> usize {
        self.r.nrows()
    }

    pub fn rank(&self) -> usize {
        self.g.len()
    }

    /// Total transported mass `‖g‖₁`, equal to `1ᵀP1` for a feasible triple.
    pub fn mass(&self) -> f64 {
        self.g.sum()
    }

    /// Source marginal of the coupling, `Q 1_r` (equals `P 1ₘ` when feasible).
    pub fn row_marginal(&self) -> Array1<f64> {
        self.q.sum_axis(Axis(1))
    }

    /// Target marginal `R 1_r`.
    pub fn col_marginal(&self) -> Array1<f64> {
        self.r.sum_axis(Axis(1))
    }

    /// `max(‖Qᵀ1 − g‖∞, ‖Rᵀ1 − g‖∞)`.
    pub fn feasibility_error(&self) -> f64 {
        let qs = self.q.sum_axis(Axis(0));
        let rs = self.r.sum_axis(Axis(0));
        qs.iter()
            .zip(rs.iter())
            .zip(self.g.iter())
            .map(|((a, b), g)| (a - g).abs().max((b - g).abs()))
            .fold(0.0, f64::max)
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.feasibility_error() <= tol
    }

    /// Dense `P = Q Diag(1/g) Rᵀ`, refused when `n·m` exceeds `cap`.
    pub fn materialize(&self, cap: usize) -> Result<Array2<f64>> {
        let (rows, cols) = (self.n(), self.m());
        if rows.saturating_mul(cols) > cap {
            return Err(Error::SizeCap { rows, cols, cap });
        }
        Ok(self.q_over_g().dot(&self.r.t()))
    }

    /// `Q Diag(1/g)`.
    pub fn q_over_g(&self) -> Array2<f64> {
        &self.q / &self.g
    }

    /// `R Diag(1/g)`.
    pub fn r_over_g(&self) -> Array2<f64> {
        &self.r / &self.g
    }
}

/// Strictly positive kernels `(ξ⁽¹⁾, ξ⁽²⁾, ξ⁽³⁾)` of one KL-prox subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTriple {
    pub xi1: Array2<f64>,
    pub xi2: Array2<f64>,
    pub xi3: Array1<f64>,
}

impl KernelTriple {
    pub fn new(xi1: Array2<f64>, xi2: Array2<f64>, xi3: Array1<f64>) -> Result<Self> {
        let rank = xi3.len();
        if xi1.ncols() != rank || xi2.ncols() != rank {
            return Err(shape("kernel ranks disagree"));
        }
        if xi1.iter().chain(xi2.iter()).chain(xi3.iter()).any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(invalid("kernel entries must be finite and strictly positive"));
        }
        Ok(Self { xi1, xi2, xi3 })
    }

    pub fn rank(&self) -> usize {
        self.xi3.len()
    }
}

impl From<&LowRankCoupling> for KernelTriple {
    fn from(c: &LowRankCoupling) -> Self {
        Self { xi1: c.q.clone(), xi2: c.r.clone(), xi3: c.g.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random triple made feasible by rescaling columns of `Q` and `R` to `g`.
    fn random_feasible(n: usize, m: usize, r: usize, seed: u64) -> LowRankCoupling {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q = Array2::from_shape_fn((n, r), |_| rng.random_range(0.1..1.0));
        let mut rr = Array2::from_shape_fn((m, r), |_| rng.random_range(0.1..1.0));
        let g = Array1::from_shape_fn(r, |_| rng.random_range(0.1..1.0));
        for l in 0..r {
            let s = q.column(l).sum();
            q.column_mut(l).mapv_inplace(|x| x * g[l] / s);
            let s = rr.column(l).sum();
            rr.column_mut(l).mapv_inplace(|x| x * g[l] / s);
        }
        LowRankCoupling::new(q, rr, g).unwrap()
    }

    #[test]
    fn product_coupling() {
        let c = LowRankCoupling::new(array![[0.5], [0.5]], array![[0.25], [0.75]], array![1.0]).unwrap();
        let p = c.materialize(usize::MAX).unwrap();
        assert_eq!(p, array![[0.125, 0.375], [0.125, 0.375]]);
        assert_eq!(c.mass(), 1.0);
    }

    #[test]
    fn mass_is_sum_of_g() {
        let c = LowRankCoupling::new(array![[0.2, 0.1], [0.0, 0.2]], array![[0.2, 0.3]], array![0.2, 0.3]).unwrap();
        assert!((c.mass() - 0.5).abs() < 1e-15);
        assert!(c.is_feasible(1e-15));
    }

    #[test]
    fn feasible_row_sums_and_mass() {
        let c = random_feasible(6, 5, 3, 7);
        let p = c.materialize(usize::MAX).unwrap();
        let rows = p.sum_axis(Axis(1));
        for (x, y) in rows.iter().zip(c.row_marginal().iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        let cols = p.sum_axis(Axis(0));
        for (x, y) in cols.iter().zip(c.col_marginal().iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((p.sum() - c.mass()).abs() < 1e-12);
    }

    #[test]
    fn materialize_matches_triple_loop() {
        let c = random_feasible(6, 5, 3, 11);
        let p = c.materialize(usize::MAX).unwrap();
        for i in 0..6 {
            for j in 0..5 {
                let mut s = 0.0;
                for l in 0..3 {
                    s += c.q()[[i, l]] * c.r()[[j, l]] / c.g()[l];
                }
                assert!((p[[i, j]] - s).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn materialize_cap() {
        let c = random_feasible(6, 5, 2, 1);
        assert!(matches!(c.materialize(29), Err(Error::SizeCap { rows: 6, cols: 5, cap: 29 })));
    }

    #[test]
    fn constructor_checks() {
        assert!(LowRankCoupling::new(array![[1.0]], array![[1.0]], array![0.0]).is_err());
        assert!(LowRankCoupling::new(array![[-1.0]], array![[1.0]], array![1.0]).is_err());
        assert!(LowRankCoupling::new(array![[1.0, 1.0]], array![[1.0]], array![1.0]).is_err());
        assert!(KernelTriple::new(array![[1.0]], array![[0.0]], array![1.0]).is_err());
    }
}
