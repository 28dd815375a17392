use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{CliError, Result};

/// Projects centered rows onto the top `k` principal axes. Each axis is
/// signed so its largest-magnitude loading is positive, which keeps the
/// output deterministic.
pub fn pca_project(x: &ArrayView2<f64>, k: usize) -> Result<Array2<f64>> {
    let (n, d) = x.dim();
    if k == 0 || k > d {
        return Err(CliError::Config(format!("pca_dim must be in 1..={d}, got {k}")));
    }
    if n < 2 {
        return Err(CliError::Input("PCA needs at least two rows".into()));
    }
    let mean = x.mean_axis(Axis(0)).expect("nonempty");
    let centered = x - &mean.insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let mut axes = Array2::<f64>::zeros((d, k));
    for (c, &idx) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let pivot = v.iter().copied().fold(0.0f64, |acc, t| if t.abs() > acc.abs() { t } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for r in 0..d {
            axes[[r, c]] = sign * v[r];
        }
    }
    Ok(centered.dot(&axes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn recovers_dominant_axis() {
        let x = array![[1.0, 0.1], [2.0, -0.1], [3.0, 0.1], [4.0, -0.1]];
        let z = pca_project(&x.view(), 1).unwrap();
        let expect = [-1.5, -0.5, 0.5, 1.5];
        for (a, b) in z.column(0).iter().zip(expect) {
            assert!((a - b).abs() < 1e-2, "{a} vs {b}");
        }
    }

    #[test]
    fn full_rank_preserves_distances() {
        let x = array![[0.3, 1.0, -2.0], [1.5, 0.2, 0.7], [-0.4, 2.2, 1.1], [0.9, -1.3, 0.0]];
        let z = pca_project(&x.view(), 3).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dx = (&x.row(i) - &x.row(j)).mapv(|t| t * t).sum();
                let dz = (&z.row(i) - &z.row(j)).mapv(|t| t * t).sum();
                assert!((dx - dz).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_bad_dimension() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        assert!(pca_project(&x.view(), 3).is_err());
        assert!(pca_project(&x.view(), 0).is_err());
    }
}
