mod common;

use common::*;
use ndarray::{array, Array1, Array2, Axis};
use proptest::prelude::*;
use ulrot::metrics::{barycentric_project, f1_scores, pearson_rho, transfer_labels, Projection};

// Reference values from scipy.stats.pearsonr and sklearn.metrics.f1_score.
const PEARSON_REF: [f64; 3] = [0.9657695791053846, 0.9443285411714569, 0.613954110821673];
const F1_REF: [f64; 3] = [0.6166666666666667, 0.6153846153846154, 0.6205128205128205];
const F1_ABSENT_REF: [f64; 3] = [0.43333333333333335, 0.6, 0.68];

#[test]
fn pearson_matches_reference() {
    let pred = array![
        [0.12, 3.4, -1.0],
        [0.55, 2.9, -0.7],
        [0.31, 4.1, 0.2],
        [0.98, 1.7, -0.3],
        [0.47, 3.3, 0.9],
        [0.05, 2.2, -1.4],
        [0.76, 3.8, 0.1]
    ];
    let truth = array![
        [0.2, 3.1, 0.4],
        [0.4, 3.0, -0.2],
        [0.35, 4.4, 0.3],
        [1.1, 1.2, -0.9],
        [0.5, 2.8, 1.1],
        [0.0, 2.5, -0.6],
        [0.7, 4.0, 0.0]
    ];
    let r = pearson_rho(&pred.view(), &truth.view()).unwrap();
    for (got, want) in r.per_feature.iter().zip(PEARSON_REF) {
        assert!((got.unwrap() - want).abs() < 1e-12);
    }
    assert!((r.mean.unwrap() - PEARSON_REF.iter().sum::<f64>() / 3.0).abs() < 1e-12);
}

#[test]
fn f1_matches_reference() {
    let check = |s: ulrot::metrics::F1Scores, want: [f64; 3]| {
        assert!((s.macro_avg - want[0]).abs() < 1e-12);
        assert!((s.micro - want[1]).abs() < 1e-12);
        assert!((s.weighted - want[2]).abs() < 1e-12);
    };
    check(f1_scores(&[0, 2, 1, 1, 0, 3, 2, 2, 1, 0, 3, 3, 1], &[0, 1, 1, 1, 2, 3, 2, 0, 1, 0, 3, 1, 2]).unwrap(), F1_REF);
    check(f1_scores(&[0, 0, 1, 1, 1], &[0, 4, 1, 0, 1]).unwrap(), F1_ABSENT_REF);
}

fn dense_projection(p: &Array2<f64>, f: &Array2<f64>, b: &Array1<f64>, projection: Projection) -> Array2<f64> {
    match projection {
        Projection::TargetMarginal => p.dot(&(f / &b.view().insert_axis(Axis(1)))),
        Projection::RowSum => p.dot(f) / &p.sum_axis(Axis(1)).insert_axis(Axis(1)),
    }
}

#[test]
fn factored_projection_matches_dense() {
    for seed in 0..10 {
        let mut rng = rng(seed);
        let c = feasible_triple(9, 7, 3, &mut rng);
        let f = uniform(7, 4, -2.0, 2.0, &mut rng);
        let b = uniform_vec(7, 0.05, 0.3, &mut rng);
        let p = c.materialize(usize::MAX).unwrap();
        for projection in [Projection::TargetMarginal, Projection::RowSum] {
            let fact = barycentric_project(&c, &f.view(), &b.view(), projection).unwrap();
            let dense = dense_projection(&p, &f, &b, projection);
            assert!(rel_err(&fact, &dense) < 1e-10);
        }
    }
}

#[test]
fn label_transfer_on_block_coupling() {
    // Two blocks: source rows 0..2 couple to target 0..2, rows 2..4 to 2..4.
    let q = array![[0.25, 0.0], [0.25, 0.0], [0.0, 0.25], [0.0, 0.25]];
    let g = array![0.5, 0.5];
    let c = ulrot::LowRankCoupling::new(q.clone(), q, g).unwrap();
    let b = Array1::from_elem(4, 0.25);
    let pred = transfer_labels(&c, &[3, 3, 1, 1], &b.view(), Projection::TargetMarginal).unwrap();
    assert_eq!(pred, vec![3, 3, 1, 1]);
}

proptest! {
    #[test]
    fn pearson_in_unit_interval(v in prop::collection::vec(-10.0f64..10.0, 12)) {
        let x = Array2::from_shape_vec((6, 2), v).unwrap();
        let y = x.mapv(|t| t * t);
        let r = pearson_rho(&x.view(), &y.view()).unwrap();
        for p in r.per_feature.into_iter().flatten() {
            prop_assert!((-1.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn f1_bounded_and_perfect_on_identity(labels in prop::collection::vec(0usize..5, 1..30)) {
        let s = f1_scores(&labels, &labels).unwrap();
        prop_assert_eq!(s.micro, 1.0);
        prop_assert_eq!(s.macro_avg, 1.0);
        let shifted: Vec<usize> = labels.iter().map(|l| (l + 1) % 5).collect();
        let s = f1_scores(&labels, &shifted).unwrap();
        prop_assert!(s.micro >= 0.0 && s.micro <= 1.0 && s.macro_avg <= 1.0 && s.weighted <= 1.0);
    }
}
