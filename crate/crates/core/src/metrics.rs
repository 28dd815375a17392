//! Evaluation metrics for matched datasets: barycentric feature transfer,
//! Pearson correlation, label-transfer F1 scores and transported mass.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::coupling::LowRankCoupling;
use crate::error::{invalid, shape, Result};

/// Normalization of the barycentric map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Projection {
    /// `P Diag(1/b) F`.
    #[default]
    TargetMarginal,
    /// `Diag(1/P1) P F`, the conventional barycentric map.
    RowSum,
}

/// Maps target features onto the source points through the coupling,
/// computed through the factors without forming `P`.
pub fn barycentric_project(
    c: &LowRankCoupling,
    features: &ArrayView2<f64>,
    b: &ArrayView1<f64>,
    projection: Projection,
) -> Result<Array2<f64>> {
    if features.nrows() != c.m() || b.len() != c.m() {
        return Err(shape(format!(
            "coupling has {} target points, features have {} rows, b has length {}",
            c.m(),
            features.nrows(),
            b.len()
        )));
    }
    match projection {
        Projection::TargetMarginal => {
            if b.iter().any(|x| !(*x > 0.0)) {
                return Err(invalid("target marginal must be positive"));
            }
            let scaled = features / &b.view().insert_axis(Axis(1));
            Ok(c.q_over_g().dot(&c.r().t().dot(&scaled)))
        }
        Projection::RowSum => {
            let qd = c.q_over_g();
            let out = qd.dot(&c.r().t().dot(features));
            let rows = qd.dot(&c.r().sum_axis(Axis(0)));
            Ok(out / &rows.insert_axis(Axis(1)))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PearsonResult {
    /// `None` where either column has zero variance.
    pub per_feature: Vec<Option<f64>>,
    /// Mean over the defined columns, `None` if there are none.
    pub mean: Option<f64>,
}

/// Column-wise Pearson correlation between predictions and truth.
pub fn pearson_rho(pred: &ArrayView2<f64>, truth: &ArrayView2<f64>) -> Result<PearsonResult> {
    if pred.dim() != truth.dim() {
        return Err(shape(format!("prediction is {:?}, truth is {:?}", pred.dim(), truth.dim())));
    }
    if pred.nrows() < 2 {
        return Err(invalid("Pearson correlation needs at least two rows"));
    }
    let per_feature: Vec<Option<f64>> =
        pred.columns().into_iter().zip(truth.columns()).map(|(x, y)| column_pearson(&x, &y)).collect();
    let defined: Vec<f64> = per_feature.iter().flatten().copied().collect();
    let mean = if defined.is_empty() { None } else { Some(defined.iter().sum::<f64>() / defined.len() as f64) };
    Ok(PearsonResult { per_feature, mean })
}

fn column_pearson(x: &ArrayView1<f64>, y: &ArrayView1<f64>) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.sum() / n, y.sum() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y.iter()) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Scores {
    pub macro_avg: f64,
    pub micro: f64,
    pub weighted: f64,
}

/// Macro, micro and support-weighted F1 over the union of labels present in
/// either sequence. Labels absent from both contribute nothing; a label with
/// no true or predicted positives scores 0.
pub fn f1_scores(truth: &[usize], pred: &[usize]) -> Result<F1Scores> {
    if truth.len() != pred.len() {
        return Err(shape(format!("{} true labels, {} predictions", truth.len(), pred.len())));
    }
    if truth.is_empty() {
        return Err(invalid("empty label set"));
    }
    // label -> (tp, fp, fn, support)
    let mut counts: BTreeMap<usize, [usize; 4]> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(pred) {
        counts.entry(t).or_default()[3] += 1;
        if t == p {
            counts.entry(t).or_default()[0] += 1;
        } else {
            counts.entry(p).or_default()[1] += 1;
            counts.entry(t).or_default()[2] += 1;
        }
    }
    let f1 = |tp: usize, fp: usize, fneg: usize| {
        let den = 2 * tp + fp + fneg;
        if den == 0 {
            0.0
        } else {
            2.0 * tp as f64 / den as f64
        }
    };
    let (mut sum, mut weighted, mut support) = (0.0, 0.0, 0usize);
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for [tp, fp, fneg, sup] in counts.values().copied() {
        let s = f1(tp, fp, fneg);
        sum += s;
        weighted += s * sup as f64;
        support += sup;
        tp_all += tp;
        fp_all += fp;
        fn_all += fneg;
    }
    Ok(F1Scores {
        macro_avg: sum / counts.len() as f64,
        micro: f1(tp_all, fp_all, fn_all),
        weighted: weighted / support as f64,
    })
}

/// Predicts a source label per row as the argmax of the barycentric
/// projection of one-hot target labels; ties go to the smallest label.
pub fn transfer_labels(
    c: &LowRankCoupling,
    target_labels: &[usize],
    b: &ArrayView1<f64>,
    projection: Projection,
) -> Result<Vec<usize>> {
    if target_labels.is_empty() {
        return Err(invalid("empty label set"));
    }
    let classes: Vec<usize> = {
        let mut v = target_labels.to_vec();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut onehot = Array2::zeros((target_labels.len(), classes.len()));
    for (j, l) in target_labels.iter().enumerate() {
        let k = classes.binary_search(l).expect("label present");
        onehot[[j, k]] = 1.0;
    }
    let scores = barycentric_project(c, &onehot.view(), b, projection)?;
    Ok(scores
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = k;
                }
            }
            classes[best]
        })
        .collect())
}

/// Label-transfer F1 scores of the coupling against known source labels.
pub fn f1_transfer(
    c: &LowRankCoupling,
    target_labels: &[usize],
    b: &ArrayView1<f64>,
    source_labels: &[usize],
    projection: Projection,
) -> Result<F1Scores> {
    let pred = transfer_labels(c, target_labels, b, projection)?;
    f1_scores(source_labels, &pred)
}

/// Transported mass `‖g‖₁`; a percentage of unit mass for simplex inputs.
pub fn mass_pct(c: &LowRankCoupling) -> f64 {
    c.mass()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub pearson_per_feature: Vec<Option<f64>>,
    pub pearson_mean: Option<f64>,
    pub f1: Option<F1Scores>,
    pub mass_pct: f64,
}

/// Inputs for [`evaluate`]; every part is optional except the coupling data.
#[derive(Debug, Clone, Copy)]
pub struct EvalInputs<'a> {
    pub b: ArrayView1<'a, f64>,
    /// Target features to transfer and the matching source truth.
    pub features: Option<(ArrayView2<'a, f64>, ArrayView2<'a, f64>)>,
    /// Target labels and source labels.
    pub labels: Option<(&'a [usize], &'a [usize])>,
    pub projection: Projection,
}

pub fn evaluate(c: &LowRankCoupling, inputs: &EvalInputs<'_>) -> Result<EvalResult> {
    let (pearson_per_feature, pearson_mean) = match inputs.features {
        Some((target, source)) => {
            let pred = barycentric_project(c, &target, &inputs.b, inputs.projection)?;
            let r = pearson_rho(&pred.view(), &source)?;
            (r.per_feature, r.mean)
        }
        None => (Vec::new(), None),
    };
    let f1 = match inputs.labels {
        Some((target, source)) => Some(f1_transfer(c, target, &inputs.b, source, inputs.projection)?),
        None => None,
    };
    Ok(EvalResult { pearson_per_feature, pearson_mean, f1, mass_pct: mass_pct(c) })
}
