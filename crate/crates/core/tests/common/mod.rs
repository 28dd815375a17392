#![allow(dead_code)]

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ulrot::{FactoredCost, KernelTriple, LowRankCoupling};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

pub fn uniform_vec(len: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_fn(len, |_| rng.random_range(lo..hi))
}

/// Random triple with columns of `Q`, `R` rescaled to `g`.
pub fn feasible_triple(n: usize, m: usize, r: usize, rng: &mut ChaCha8Rng) -> LowRankCoupling {
    let g = uniform_vec(r, 0.2, 1.0, rng);
    let mut q = uniform(n, r, 0.1, 1.0, rng);
    let mut rr = uniform(m, r, 0.1, 1.0, rng);
    for l in 0..r {
        let s = q.column(l).sum();
        q.column_mut(l).mapv_inplace(|x| x * g[l] / s);
        let s = rr.column(l).sum();
        rr.column_mut(l).mapv_inplace(|x| x * g[l] / s);
    }
    LowRankCoupling::new(q, rr, g).unwrap()
}

pub fn kernels(n: usize, m: usize, r: usize, rng: &mut ChaCha8Rng) -> KernelTriple {
    KernelTriple::new(uniform(n, r, 0.05, 1.0, rng), uniform(m, r, 0.05, 1.0, rng), uniform_vec(r, 0.2, 2.0, rng))
        .unwrap()
}

pub fn points(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    uniform(n, d, -1.0, 1.0, rng)
}

/// Dense square cost from random points, optionally made nonsymmetric.
pub fn square_cost(n: usize, rng: &mut ChaCha8Rng, symmetric: bool) -> FactoredCost {
    let x = points(n, 2, rng);
    let mut c = ulrot::geometry::sqeuclidean_factors(&x.view(), &x.view()).unwrap().materialize(usize::MAX).unwrap();
    if !symmetric {
        c += &uniform(n, n, 0.0, 0.5, rng);
    }
    FactoredCost::dense(c).unwrap()
}

pub fn max_abs_diff<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>, b: &ndarray::Array<f64, D>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn sup<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `‖fd − analytic‖∞ / max(‖analytic‖∞, 1e-12)`.
pub fn rel_err<D: ndarray::Dimension>(fd: &ndarray::Array<f64, D>, analytic: &ndarray::Array<f64, D>) -> f64 {
    max_abs_diff(fd, analytic) / sup(analytic).max(1e-12)
}

pub fn l1_marginal_error(c: &LowRankCoupling, a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let ra = c.q().sum_axis(Axis(1));
    let rb = c.r().sum_axis(Axis(1));
    (&ra - a).mapv(f64::abs).sum() + (&rb - b).mapv(f64::abs).sum()
}
