//! Factored costs from point clouds and feasible initial couplings.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coupling::LowRankCoupling;
use crate::cost::FactoredCost;
use crate::error::{invalid, shape, Result};
use crate::DEFAULT_MATERIALIZE_CAP;

/// Exact rank-`(d + 2)` factors of the squared Euclidean cost
/// `‖xᵢ − y_j‖² = ‖xᵢ‖² + ‖y_j‖² − 2⟨xᵢ, y_j⟩`.
pub fn sqeuclidean_factors(x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<FactoredCost> {
    let d = x.ncols();
    if y.ncols() != d {
        return Err(shape(format!("point dimensions differ: {d} vs {}", y.ncols())));
    }
    let mut left = Array2::zeros((x.nrows(), d + 2));
    for (mut row, p) in left.rows_mut().into_iter().zip(x.rows()) {
        row[0] = p.dot(&p);
        row[1] = 1.0;
        row.slice_mut(s![2..]).assign(&(&p * -2.0));
    }
    let mut right = Array2::zeros((y.nrows(), d + 2));
    for (mut row, p) in right.rows_mut().into_iter().zip(y.rows()) {
        row[0] = 1.0;
        row[1] = p.dot(&p);
        row.slice_mut(s![2..]).assign(&p);
    }
    FactoredCost::factored(left, right)
}

/// Row-wise Khatri–Rao self product `[u ⊗ u]` of each row.
fn khatri_rao_rows(f: &Array2<f64>) -> Array2<f64> {
    let d = f.ncols();
    let mut out = Array2::zeros((f.nrows(), d * d));
    for (mut o, row) in out.rows_mut().into_iter().zip(f.rows()) {
        for i in 0..d {
            for j in 0..d {
                o[i * d + j] = row[i] * row[j];
            }
        }
    }
    out
}

/// Elementwise square `C ⊙ C`.
///
/// Factors of inner dimension `d` become factors of inner dimension `d²`.
/// When `d²` is not smaller than the row count and the dense matrix fits
/// under [`DEFAULT_MATERIALIZE_CAP`], a dense square is returned instead.
pub fn elementwise_square_factors(f: &FactoredCost) -> Result<FactoredCost> {
    match f {
        FactoredCost::Dense(c) => FactoredCost::dense(c.mapv(|x| x * x)),
        FactoredCost::Factored { left, right } => {
            let d = left.ncols();
            let (n, m) = f.dim();
            if d * d >= n && n.saturating_mul(m) <= DEFAULT_MATERIALIZE_CAP {
                let dense = f.materialize(DEFAULT_MATERIALIZE_CAP)?;
                return FactoredCost::dense(dense.mapv(|x| x * x));
            }
            FactoredCost::factored(khatri_rao_rows(left), khatri_rao_rows(right))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitKind {
    /// Product of the normalized marginals with a uniform `g`. Every
    /// column of `Q` (and `R`) is identical, a symmetry the multiplicative
    /// updates cannot break.
    RankOne,
    KMeans,
    #[default]
    Random,
}

impl std::str::FromStr for InitKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank_one" | "rank-one" => Ok(Self::RankOne),
            "kmeans" => Ok(Self::KMeans),
            "random" => Ok(Self::Random),
            other => Err(invalid(format!("unknown init strategy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitStrategy {
    pub kind: InitKind,
    /// Lower bound on the raw entries before projection.
    pub floor: f64,
    pub seed: u64,
}

impl Default for InitStrategy {
    fn default() -> Self {
        Self { kind: InitKind::Random, floor: 1e-6, seed: 0 }
    }
}

impl InitStrategy {
    pub fn new(kind: InitKind, seed: u64) -> Self {
        Self { kind, seed, ..Self::default() }
    }
}

/// Scales rows then columns of `mat` towards the given sums, ending with a
/// column step so that the column sums are exact.
fn balanced_project(mat: &mut Array2<f64>, rows: &ArrayView1<f64>, cols: &ArrayView1<f64>) {
    for _ in 0..1000 {
        let rs = mat.sum_axis(Axis(1));
        let mut worst: f64 = 0.0;
        for (mut row, (s, t)) in mat.rows_mut().into_iter().zip(rs.iter().zip(rows.iter())) {
            worst = worst.max((s - t).abs() / t);
            row *= t / s;
        }
        let cs = mat.sum_axis(Axis(0));
        for (mut col, (s, t)) in mat.columns_mut().into_iter().zip(cs.iter().zip(cols.iter())) {
            col *= t / s;
        }
        if worst < 1e-13 {
            break;
        }
    }
}

fn rank_one_factor(w: &Array1<f64>, g: &Array1<f64>) -> Array2<f64> {
    let total = w.sum();
    let col = w / total;
    col.insert_axis(Axis(1)).dot(&g.view().insert_axis(Axis(0)))
}

/// Feasible strictly positive initial triple of rank `rank`.
///
/// The transported mass starts at `min(Σa, Σb)`; `Q` and `R` are projected
/// so that their row sums follow `a` and `b` rescaled to that mass and their
/// column sums equal `g` exactly.
pub fn init_coupling(
    a: &ArrayView1<f64>,
    b: &ArrayView1<f64>,
    rank: usize,
    strategy: &InitStrategy,
    x: Option<&ArrayView2<f64>>,
    y: Option<&ArrayView2<f64>>,
) -> Result<LowRankCoupling> {
    if rank == 0 {
        return Err(invalid("rank must be at least 1"));
    }
    if !(strategy.floor > 0.0) {
        return Err(invalid("init floor must be positive"));
    }
    if a.iter().chain(b.iter()).any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(invalid("marginals must be finite and strictly positive"));
    }
    let (sa, sb) = (a.sum(), b.sum());
    let mass = sa.min(sb);
    let rows_a = a * (mass / sa);
    let rows_b = b * (mass / sb);
    let uniform_g = Array1::from_elem(rank, mass / rank as f64);

    let (q, r, g) = match strategy.kind {
        InitKind::RankOne => (
            rank_one_factor(&a.to_owned(), &uniform_g),
            rank_one_factor(&b.to_owned(), &uniform_g),
            uniform_g,
        ),
        InitKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(strategy.seed);
            let floor = strategy.floor;
            let mut q = Array2::from_shape_fn((a.len(), rank), |_| rng.random::<f64>().max(floor));
            let mut r = Array2::from_shape_fn((b.len(), rank), |_| rng.random::<f64>().max(floor));
            balanced_project(&mut q, &rows_a.view(), &uniform_g.view());
            balanced_project(&mut r, &rows_b.view(), &uniform_g.view());
            (q, r, uniform_g)
        }
        InitKind::KMeans => {
            let (x, y) = match (x, y) {
                (Some(x), Some(y)) => (x, y),
                _ => return Err(invalid("kmeans initialization needs points for both measures")),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(strategy.seed);
            let la = sorted_assignments(x, &rows_a, rank, &mut rng)?;
            let lb = sorted_assignments(y, &rows_b, rank, &mut rng)?;
            let mut g = Array1::<f64>::zeros(rank);
            for (i, &l) in la.iter().enumerate() {
                g[l] += 0.5 * rows_a[i];
            }
            for (j, &l) in lb.iter().enumerate() {
                g[l] += 0.5 * rows_b[j];
            }
            g.mapv_inplace(|v| v.max(strategy.floor * mass));
            g *= mass / g.sum();
            let hard = |labels: &[usize], rows: &Array1<f64>| {
                let mut h = Array2::zeros((rows.len(), rank));
                for (i, &l) in labels.iter().enumerate() {
                    h[[i, l]] = rows[i];
                }
                let blended = h * 0.9 + rank_one_factor(rows, &uniform_g) * 0.1;
                blended.mapv(|v: f64| v.max(strategy.floor))
            };
            let mut q = hard(&la, &rows_a);
            let mut r = hard(&lb, &rows_b);
            balanced_project(&mut q, &rows_a.view(), &g.view());
            balanced_project(&mut r, &rows_b.view(), &g.view());
            (q, r, g)
        }
    };
    LowRankCoupling::new(q, r, g)
}

/// Weighted Lloyd clustering; clusters are relabelled by decreasing mass so
/// that the two sides can be paired index by index.
fn sorted_assignments(
    pts: &ArrayView2<f64>,
    w: &Array1<f64>,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let labels = lloyd(pts, w, k, 100, rng)?;
    let mut mass = vec![0.0; k];
    for (i, &l) in labels.iter().enumerate() {
        mass[l] += w[i];
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| mass[j].total_cmp(&mass[i]).then(i.cmp(&j)));
    let mut relabel = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    Ok(labels.into_iter().map(|l| relabel[l]).collect())
}

/// Lloyd iterations from `k` distinct random points; returns hard labels.
pub fn lloyd(pts: &ArrayView2<f64>, w: &Array1<f64>, k: usize, max_iter: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let n = pts.nrows();
    if n == 0 {
        return Err(invalid("cannot cluster an empty point set"));
    }
    if w.len() != n {
        return Err(shape("weights and points disagree"));
    }
    let starts: Vec<usize> = if k <= n {
        sample(rng, n, k).into_vec()
    } else {
        (0..k).map(|l| l % n).collect()
    };
    let mut centers = Array2::zeros((k, pts.ncols()));
    for (l, &i) in starts.iter().enumerate() {
        centers.row_mut(l).assign(&pts.row(i));
    }
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, p) in pts.rows().into_iter().enumerate() {
            let best = nearest(&p, &centers);
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros(centers.dim());
        let mut mass = vec![0.0; k];
        for (i, p) in pts.rows().into_iter().enumerate() {
            sums.row_mut(labels[i]).scaled_add(w[i], &p);
            mass[labels[i]] += w[i];
        }
        for (l, &m) in mass.iter().enumerate() {
            if m > 0.0 {
                centers.row_mut(l).assign(&(&sums.row(l) / m));
            }
        }
    }
    Ok(labels)
}

fn nearest(p: &ArrayView1<f64>, centers: &Array2<f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (l, c) in centers.rows().into_iter().enumerate() {
        let d: f64 = p.iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (l, d);
        }
    }
    best.0
}
