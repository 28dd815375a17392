mod common;

use common::*;
use ndarray::{Array1, Array2};
use ulrot::kernels::{
    fused_gradients, fused_term, gw_term, kernel_ulot, linear_gradients, linear_term, quadratic_gradients, Gradients,
};
use ulrot::{FactoredCost, GradientMode, GwGeometry, LowRankCoupling};
use ulrot_oracles::{brute_gw_energy, finite_diff_grad, gw_energy_expansion, DenseCoupling};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

/// Finite-difference gradients of `f` at `c`, block by block.
fn fd(c: &LowRankCoupling, f: impl Fn(&LowRankCoupling) -> f64) -> Gradients {
    let (q, r, g) = (c.q().clone(), c.r().clone(), c.g().clone());
    let gq = finite_diff_grad(|x: &Array2<f64>| f(&LowRankCoupling::new(x.clone(), r.clone(), g.clone()).unwrap()), &q, H)
        .unwrap();
    let gr = finite_diff_grad(|x: &Array2<f64>| f(&LowRankCoupling::new(q.clone(), x.clone(), g.clone()).unwrap()), &r, H)
        .unwrap();
    let gg = finite_diff_grad(|x: &Array1<f64>| f(&LowRankCoupling::new(q.clone(), r.clone(), x.clone()).unwrap()), &g, H)
        .unwrap();
    Gradients { q: gq, r: gr, g: gg }
}

/// Largest blockwise relative deviation. Each block is scaled by its own
/// sup norm, floored at 1e-6 of the largest block so that an identically
/// zero block (e.g. `∇g` of `|g|L_C` at rank 1) is not compared against
/// rounding noise.
fn worst(fd: &Gradients, an: &Gradients) -> f64 {
    let floor = 1e-6 * sup(&an.q).max(sup(&an.r)).max(sup(&an.g)).max(1e-12);
    let block = |x: f64, s: f64| x / s.max(floor);
    block(max_abs_diff(&fd.q, &an.q), sup(&an.q))
        .max(block(max_abs_diff(&fd.r, &an.r), sup(&an.r)))
        .max(block(max_abs_diff(&fd.g, &an.g), sup(&an.g)))
}

#[test]
fn linear_gradients_match_finite_differences() {
    for seed in 0..5 {
        let mut rng = rng(seed);
        let c = feasible_triple(6, 5, 2, &mut rng);
        let x = points(6, 3, &mut rng);
        let y = points(5, 3, &mut rng);
        let cost = ulrot::geometry::sqeuclidean_factors(&x.view(), &y.view()).unwrap();
        let an = linear_gradients(&c, &cost).unwrap();
        let num = fd(&c, |t| linear_term(t, &cost).unwrap());
        assert!(worst(&num, &an) < TOL, "seed {seed}: {}", worst(&num, &an));
    }
}

#[test]
fn kernel_is_factor_times_exp_gradient() {
    let mut rng = rng(1);
    let c = feasible_triple(6, 5, 2, &mut rng);
    let cost = FactoredCost::dense(uniform(6, 5, 0.0, 2.0, &mut rng)).unwrap();
    let gamma = 0.37;
    let xi = kernel_ulot(&c, &cost, gamma).unwrap();
    // Independent evaluation from the dense cost.
    let dense = cost.materialize(usize::MAX).unwrap();
    let d = c.g().mapv(|x| 1.0 / x);
    let gq = dense.dot(c.r()) * &d;
    for ((x, q), gr) in xi.xi1.iter().zip(c.q().iter()).zip(gq.iter()) {
        assert!((x - q * (-gamma * gr).exp()).abs() < 1e-14);
    }
}

fn gw_instance(seed: u64, symmetric: bool) -> (LowRankCoupling, GwGeometry) {
    let mut rng = rng(seed);
    let n = 4 + (seed as usize % 7);
    let m = 3 + (seed as usize % 8);
    let r = 1 + (seed as usize % 3);
    let c = feasible_triple(n, m, r, &mut rng);
    let geom = GwGeometry::new(square_cost(n, &mut rng, symmetric), square_cost(m, &mut rng, symmetric)).unwrap();
    (c, geom)
}

#[test]
fn gw_gradients_match_finite_differences() {
    for seed in 0..8 {
        for symmetric in [true, false] {
            let (c, geom) = gw_instance(seed, symmetric);
            let an = quadratic_gradients(&c, &geom, GradientMode::Analytic).unwrap();
            let num = fd(&c, |t| gw_term(t, &geom).unwrap());
            assert!(worst(&num, &an) < TOL, "seed {seed} symmetric {symmetric}: {}", worst(&num, &an));
        }
    }
}

#[test]
fn paper_literal_gw_gradients_differ() {
    let (c, geom) = gw_instance(3, true);
    let lit = quadratic_gradients(&c, &geom, GradientMode::PaperLiteral).unwrap();
    let num = fd(&c, |t| gw_term(t, &geom).unwrap());
    assert!(worst(&num, &lit) > 1e-2);
}

#[test]
fn fused_gradients_match_finite_differences() {
    for seed in 0..6 {
        let (c, geom) = gw_instance(seed, seed % 2 == 0);
        let mut rng = rng(seed + 50);
        let cost = FactoredCost::dense(uniform(c.n(), c.m(), 0.0, 2.0, &mut rng)).unwrap();
        for alpha in [0.0, 0.5, 1.0] {
            let an = fused_gradients(&c, &cost, &geom, alpha, GradientMode::Analytic).unwrap();
            let num = fd(&c, |t| fused_term(t, &cost, &geom, alpha).unwrap());
            assert!(worst(&num, &an) < TOL, "seed {seed} alpha {alpha}: {}", worst(&num, &an));
        }
    }
}

#[test]
fn factored_gw_energy_matches_brute_force() {
    for seed in 0..10 {
        for symmetric in [true, false] {
            let (c, geom) = gw_instance(seed, symmetric);
            let a = geom.a().materialize(usize::MAX).unwrap();
            let b = geom.b().materialize(usize::MAX).unwrap();
            let plan = DenseCoupling::from_factors(c.q().view(), c.r().view(), c.g().view()).unwrap();
            let brute = brute_gw_energy(&a, &b, &plan).unwrap();
            let expansion = gw_energy_expansion(&a, &b, &plan).unwrap();
            let factored = gw_term(&c, &geom).unwrap();
            assert!((brute - expansion).abs() <= 1e-10 * brute.abs().max(1e-300));
            assert!((brute - factored).abs() <= 1e-10 * brute.abs().max(1e-300), "{brute} vs {factored}");
        }
    }
}

#[test]
fn factored_and_dense_gw_geometries_agree() {
    let mut rng = rng(9);
    let x = points(30, 2, &mut rng);
    let y = points(20, 2, &mut rng);
    let fa = ulrot::geometry::sqeuclidean_factors(&x.view(), &x.view()).unwrap();
    let fb = ulrot::geometry::sqeuclidean_factors(&y.view(), &y.view()).unwrap();
    let da = FactoredCost::dense(fa.materialize(usize::MAX).unwrap()).unwrap();
    let db = FactoredCost::dense(fb.materialize(usize::MAX).unwrap()).unwrap();
    let c = feasible_triple(30, 20, 3, &mut rng);
    let gf = GwGeometry::new(fa, fb).unwrap();
    let gd = GwGeometry::new(da, db).unwrap();
    let vf = gw_term(&c, &gf).unwrap();
    let vd = gw_term(&c, &gd).unwrap();
    assert!((vf - vd).abs() < 1e-10 * vd.abs());
    let a = quadratic_gradients(&c, &gf, GradientMode::Analytic).unwrap();
    let b = quadratic_gradients(&c, &gd, GradientMode::Analytic).unwrap();
    assert!(rel_err(&a.q, &b.q) < 1e-10 && rel_err(&a.g, &b.g) < 1e-10);
}

