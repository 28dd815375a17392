//! Positive measures with optional support data.

use ndarray::{Array1, Array2};

use crate::error::{invalid, shape, Result};

/// A discrete positive measure `Σ wᵢ δ_{xᵢ}`.
///
/// Weights need not sum to one. Support coordinates, per-point features and
/// integer labels are optional and must have one row per weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    weights: Array1<f64>,
    points: Option<Array2<f64>>,
    features: Option<Array2<f64>>,
    labels: Option<Vec<usize>>,
}

impl Measure {
    pub fn new(weights: Array1<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("measure has no atoms"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        if !weights.iter().any(|w| *w > 0.0) {
            return Err(invalid("at least one weight must be positive"));
        }
        Ok(Self { weights, points: None, features: None, labels: None })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(Array1::from_elem(n, 1.0 / n.max(1) as f64))
    }

    pub fn with_points(mut self, points: Array2<f64>) -> Result<Self> {
        self.check_rows(points.nrows(), "points")?;
        self.points = Some(points);
        Ok(self)
    }

    pub fn with_features(mut self, features: Array2<f64>) -> Result<Self> {
        self.check_rows(features.nrows(), "features")?;
        self.features = Some(features);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        self.check_rows(labels.len(), "labels")?;
        self.labels = Some(labels);
        Ok(self)
    }

    fn check_rows(&self, rows: usize, what: &str) -> Result<()> {
        if rows != self.weights.len() {
            return Err(shape(format!("{what} have {rows} rows, measure has {} atoms", self.weights.len())));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn points(&self) -> Option<&Array2<f64>> {
        self.points.as_ref()
    }

    pub fn features(&self) -> Option<&Array2<f64>> {
        self.features.as_ref()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.sum()
    }

    /// True when every weight is strictly positive, as the solvers require.
    pub fn is_strictly_positive(&self) -> bool {
        self.weights.iter().all(|w| *w > 0.0)
    }
}
