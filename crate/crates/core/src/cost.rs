//! Cost matrices stored either as low-rank factors or densely.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{shape, Error, Result};

/// A rectangular cost `C ∈ ℝ^{n×m}`.
///
/// The factored form holds `C = left · rightᵀ` with `left: n×d`,
/// `right: m×d`; products with `C` then cost `O((n + m) d k)` for a `k`-column
/// operand instead of `O(n m k)`.
#[derive(Debug, Clone, PartialEq)]
pub enum FactoredCost {
    Factored { left: Array2<f64>, right: Array2<f64> },
    Dense(Array2<f64>),
}

impl FactoredCost {
    pub fn factored(left: Array2<f64>, right: Array2<f64>) -> Result<Self> {
        if left.ncols() != right.ncols() {
            return Err(shape(format!(
                "factor inner dimensions differ: {} vs {}",
                left.ncols(),
                right.ncols()
            )));
        }
        check_finite(left.iter().chain(right.iter()))?;
        Ok(Self::Factored { left, right })
    }

    pub fn dense(matrix: Array2<f64>) -> Result<Self> {
        check_finite(matrix.iter())?;
        Ok(Self::Dense(matrix))
    }

    pub fn nrows(&self) -> usize {
        match self {
            Self::Factored { left, .. } => left.nrows(),
            Self::Dense(c) => c.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Self::Factored { right, .. } => right.nrows(),
            Self::Dense(c) => c.ncols(),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.nrows(), self.ncols())
    }

    pub fn is_square(&self) -> bool {
        self.nrows() == self.ncols()
    }

    /// Inner dimension `d` of the factorization, `None` for dense storage.
    pub fn inner_dim(&self) -> Option<usize> {
        match self {
            Self::Factored { left, .. } => Some(left.ncols()),
            Self::Dense(_) => None,
        }
    }

    /// `C · X` for `X: m×k`.
    pub fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        debug_assert_eq!(x.nrows(), self.ncols());
        match self {
            Self::Factored { left, right } => left.dot(&right.t().dot(x)),
            Self::Dense(c) => c.dot(x),
        }
    }

    /// `Cᵀ · X` for `X: n×k`.
    pub fn apply_t(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        debug_assert_eq!(x.nrows(), self.nrows());
        match self {
            Self::Factored { left, right } => right.dot(&left.t().dot(x)),
            Self::Dense(c) => c.t().dot(x),
        }
    }

    pub fn apply_vec(&self, v: &ArrayView1<f64>) -> Array1<f64> {
        match self {
            Self::Factored { left, right } => left.dot(&right.t().dot(v)),
            Self::Dense(c) => c.dot(v),
        }
    }

    pub fn apply_t_vec(&self, v: &ArrayView1<f64>) -> Array1<f64> {
        match self {
            Self::Factored { left, right } => right.dot(&left.t().dot(v)),
            Self::Dense(c) => c.t().dot(v),
        }
    }

    /// Single entry `C_ij`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::Factored { left, right } => left.row(i).dot(&right.row(j)),
            Self::Dense(c) => c[[i, j]],
        }
    }

    pub fn transpose(&self) -> Self {
        match self {
            Self::Factored { left, right } => Self::Factored { left: right.clone(), right: left.clone() },
            Self::Dense(c) => Self::Dense(c.t().to_owned()),
        }
    }

    /// Dense `n×m` matrix, refused when `n·m` exceeds `cap`.
    pub fn materialize(&self, cap: usize) -> Result<Array2<f64>> {
        let (rows, cols) = self.dim();
        if rows.saturating_mul(cols) > cap {
            return Err(Error::SizeCap { rows, cols, cap });
        }
        Ok(match self {
            Self::Factored { left, right } => left.dot(&right.t()),
            Self::Dense(c) => c.clone(),
        })
    }

    /// Row sums `C · 1`.
    pub fn row_sums(&self) -> Array1<f64> {
        match self {
            Self::Factored { left, right } => left.dot(&right.sum_axis(Axis(0))),
            Self::Dense(c) => c.sum_axis(Axis(1)),
        }
    }
}

fn check_finite<'a>(mut it: impl Iterator<Item = &'a f64>) -> Result<()> {
    if it.any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("cost matrix".into()));
    }
    Ok(())
}
