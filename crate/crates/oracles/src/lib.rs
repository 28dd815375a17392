//! Reference oracles for unbalanced low-rank transport.
//!
//! Everything in this crate is deliberately dense and slow. The routines here
//! never call into the `ulrot` solver crate: they re-derive each quantity from
//! its definition so that tests can compare two independent computations.
//!
//! - [`dense_uot_sinkhorn`]: entropic unbalanced Sinkhorn on a full cost matrix.
//! - [`brute_gw_energy`] / [`gw_energy_expansion`]: the quadratic GW energy by
//!   quadruple loop and by its three-term expansion.
//! - [`inner_problem_oracle`]: primal mirror descent for the KL-prox subproblem
//!   over the set of triples with shared inner marginal.
//! - [`finite_diff_grad`]: central differences.
//! - [`scalar_root`] finds a bracketed root by bisection.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use ndarray::{Array, Array1, Array2, ArrayView1, ArrayView2, Axis, Dimension};

mod sinkhorn;

pub use sinkhorn::{dense_uot_sinkhorn, SinkhornOutput};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("instance too large for a dense oracle: {0}")]
    SizeCap(String),
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Largest side accepted by the quadruple-loop GW energy.
pub const GW_SIZE_CAP: usize = 50;

/// A transport plan held as a full `n × m` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCoupling {
    pub p: Array2<f64>,
}

impl DenseCoupling {
    pub fn new(p: Array2<f64>) -> Result<Self> {
        if p.iter().any(|x| !x.is_finite()) {
            return Err(OracleError::NonFinite("coupling entry".into()));
        }
        Ok(Self { p })
    }

    /// Dense `Q Diag(1/g) Rᵀ`, built with explicit loops.
    pub fn from_factors(q: ArrayView2<f64>, r: ArrayView2<f64>, g: ArrayView1<f64>) -> Result<Self> {
        let (n, rank) = q.dim();
        let m = r.nrows();
        if r.ncols() != rank || g.len() != rank {
            return Err(OracleError::Shape("factor ranks disagree".into()));
        }
        let mut p = Array2::zeros((n, m));
        for i in 0..n {
            for j in 0..m {
                let mut s = 0.0;
                for l in 0..rank {
                    s += q[[i, l]] * r[[j, l]] / g[l];
                }
                p[[i, j]] = s;
            }
        }
        Self::new(p)
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.p.sum_axis(Axis(1))
    }

    pub fn col_sums(&self) -> Array1<f64> {
        self.p.sum_axis(Axis(0))
    }

    pub fn mass(&self) -> f64 {
        self.p.sum()
    }
}

/// Generalized KL divergence `Σ p log(p/q) + q − p`, with `0 log 0 = 0`.
pub fn kl_dense<D: Dimension>(p: &Array<f64, D>, q: &Array<f64, D>) -> f64 {
    p.iter()
        .zip(q.iter())
        .map(|(&pi, &qi)| {
            if pi == 0.0 {
                qi
            } else {
                pi * (pi / qi).ln() + qi - pi
            }
        })
        .sum()
}

/// `Σ_{i,j,i',j'} (A_ii' − B_jj')² P_ij P_i'j'` by a literal quadruple loop.
pub fn brute_gw_energy(a: &Array2<f64>, b: &Array2<f64>, plan: &DenseCoupling) -> Result<f64> {
    let (n, m) = plan.p.dim();
    check_square(a, n, "A")?;
    check_square(b, m, "B")?;
    if n > GW_SIZE_CAP || m > GW_SIZE_CAP {
        return Err(OracleError::SizeCap(format!("{n}x{m} exceeds {GW_SIZE_CAP}")));
    }
    let p = &plan.p;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            let pij = p[[i, j]];
            if pij == 0.0 {
                continue;
            }
            for ip in 0..n {
                for jp in 0..m {
                    let d = a[[i, ip]] - b[[j, jp]];
                    total += d * d * pij * p[[ip, jp]];
                }
            }
        }
    }
    Ok(total)
}

/// Three-term expansion `1ᵀPᵀA²P1 + 1ᵀPB²Pᵀ1 − 2⟨APBᵀ, P⟩` with dense products.
///
/// Equals [`brute_gw_energy`] for any square `A`, `B`; the transpose drops
/// out when `B` is symmetric.
pub fn gw_energy_expansion(a: &Array2<f64>, b: &Array2<f64>, plan: &DenseCoupling) -> Result<f64> {
    let (n, m) = plan.p.dim();
    check_square(a, n, "A")?;
    check_square(b, m, "B")?;
    let p = &plan.p;
    let a2 = a.mapv(|x| x * x);
    let b2 = b.mapv(|x| x * x);
    let rows = plan.row_sums();
    let cols = plan.col_sums();
    let t1 = rows.dot(&a2.dot(&rows));
    let t2 = cols.dot(&b2.dot(&cols));
    let apb = a.dot(p).dot(&b.t());
    let cross: f64 = apb.iter().zip(p.iter()).map(|(x, y)| x * y).sum();
    Ok(t1 + t2 - 2.0 * cross)
}

fn check_square(x: &Array2<f64>, side: usize, name: &str) -> Result<()> {
    if x.nrows() != side || x.ncols() != side {
        return Err(OracleError::Shape(format!(
            "{name} is {}x{}, expected {side}x{side}",
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(())
}

/// Central differences `(f(x + h eᵢ) − f(x − h eᵢ)) / 2h`, one coordinate at a time.
pub fn finite_diff_grad<D, F>(mut f: F, x: &Array<f64, D>, h: f64) -> Result<Array<f64, D>>
where
    D: Dimension,
    F: FnMut(&Array<f64, D>) -> f64,
{
    if !(h > 0.0) {
        return Err(OracleError::Invalid("step h must be positive".into()));
    }
    let mut grad = Array::zeros(x.raw_dim());
    let mut probe = x.clone();
    let len = x.len();
    for k in 0..len {
        let orig = probe.as_slice_memory_order().map(|s| s[k]);
        let orig = match orig {
            Some(v) => v,
            None => return Err(OracleError::Invalid("non-contiguous input".into())),
        };
        probe.as_slice_memory_order_mut().unwrap()[k] = orig + h;
        let fp = f(&probe);
        probe.as_slice_memory_order_mut().unwrap()[k] = orig - h;
        let fm = f(&probe);
        probe.as_slice_memory_order_mut().unwrap()[k] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(OracleError::NonFinite(format!("f near coordinate {k}")));
        }
        grad.as_slice_memory_order_mut().unwrap()[k] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

/// Bisection on `[lo, hi]` until the bracket is narrower than `tol`.
pub fn scalar_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo * fhi > 0.0 || !flo.is_finite() || !fhi.is_finite() {
        return Err(OracleError::NoSignChange { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm * flo < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Step policy for [`inner_problem_oracle`], as a fraction of `1/L` where
/// `L = 1/γ + max(τ₁, τ₂)` is the relative smoothness constant of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `η_t = fraction / (L (1 + t / half_life))`, floored at `floor_fraction / L`.
    Decaying { fraction: f64, half_life: f64, floor_fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOracleOptions {
    pub schedule: StepSchedule,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for InnerOracleOptions {
    fn default() -> Self {
        Self { schedule: StepSchedule::Constant(1.0), max_iter: 200_000, tol: 1e-14 }
    }
}

/// A `(Q, R, g)` triple as returned by the inner-problem oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTriple {
    pub q: Array2<f64>,
    pub r: Array2<f64>,
    pub g: Array1<f64>,
    pub iterations: usize,
}

/// Objective of the inner KL-prox subproblem:
/// `(1/γ)(KL(Q|ξ₁) + KL(R|ξ₂) + KL(g|ξ₃)) + τ₁KL(Q1|a) + τ₂KL(R1|b)`.
#[allow(clippy::too_many_arguments)]
pub fn inner_objective(
    q: &Array2<f64>,
    r: &Array2<f64>,
    g: &Array1<f64>,
    a: &Array1<f64>,
    b: &Array1<f64>,
    xi1: &Array2<f64>,
    xi2: &Array2<f64>,
    xi3: &Array1<f64>,
    gamma: f64,
    tau1: f64,
    tau2: f64,
) -> f64 {
    let prox = kl_dense(q, xi1) + kl_dense(r, xi2) + kl_dense(g, xi3);
    prox / gamma + tau1 * kl_dense(&q.sum_axis(Axis(1)), a) + tau2 * kl_dense(&r.sum_axis(Axis(1)), b)
}

/// Solves the inner subproblem by multiplicative mirror descent on the primal.
///
/// Each step is `ζ ← Proj(ζ ⊙ exp(−η ∇F(ζ)))`, where the KL projection onto
/// `{Qᵀ1 = Rᵀ1 = g}` is computed exactly per column: the common column mass is
/// the geometric mean of the three unprojected masses.
#[allow(clippy::too_many_arguments)]
pub fn inner_problem_oracle(
    a: &Array1<f64>,
    b: &Array1<f64>,
    xi1: &Array2<f64>,
    xi2: &Array2<f64>,
    xi3: &Array1<f64>,
    gamma: f64,
    tau1: f64,
    tau2: f64,
    opts: InnerOracleOptions,
) -> Result<OracleTriple> {
    let (n, rank) = xi1.dim();
    let m = xi2.nrows();
    if a.len() != n || b.len() != m || xi2.ncols() != rank || xi3.len() != rank {
        return Err(OracleError::Shape("inner problem inputs".into()));
    }
    if n > 30 || m > 30 || rank > 5 {
        return Err(OracleError::SizeCap(format!("n={n}, m={m}, r={rank}")));
    }
    if !(gamma > 0.0 && tau1 > 0.0 && tau2 > 0.0) {
        return Err(OracleError::Invalid("gamma and tau must be positive".into()));
    }
    let lip = 1.0 / gamma + tau1.max(tau2);
    let (mut q, mut r, mut g) = project(xi1.clone(), xi2.clone(), xi3.clone());

    for t in 0..opts.max_iter {
        let eta = match opts.schedule {
            StepSchedule::Constant(f) => f / lip,
            StepSchedule::Decaying { fraction, half_life, floor_fraction } => {
                (fraction / (1.0 + t as f64 / half_life)).max(floor_fraction) / lip
            }
        };
        let qrow = q.sum_axis(Axis(1));
        let rrow = r.sum_axis(Axis(1));
        let mut q_new = q.clone();
        for i in 0..n {
            let marg = tau1 * (qrow[i] / a[i]).ln();
            for l in 0..rank {
                let grad = (q[[i, l]] / xi1[[i, l]]).ln() / gamma + marg;
                q_new[[i, l]] = q[[i, l]] * (-eta * grad).exp();
            }
        }
        let mut r_new = r.clone();
        for j in 0..m {
            let marg = tau2 * (rrow[j] / b[j]).ln();
            for l in 0..rank {
                let grad = (r[[j, l]] / xi2[[j, l]]).ln() / gamma + marg;
                r_new[[j, l]] = r[[j, l]] * (-eta * grad).exp();
            }
        }
        let g_new = Array1::from_shape_fn(rank, |l| g[l] * (-eta * (g[l] / xi3[l]).ln() / gamma).exp());
        let (q_next, r_next, g_next) = project(q_new, r_new, g_new);

        let change = rel_change(&q, &q_next)
            .max(rel_change(&r, &r_next))
            .max(rel_change(&g, &g_next));
        if !change.is_finite() {
            return Err(OracleError::NonFinite("mirror descent iterate".into()));
        }
        q = q_next;
        r = r_next;
        g = g_next;
        if change < opts.tol {
            return Ok(OracleTriple { q, r, g, iterations: t + 1 });
        }
    }
    Err(OracleError::NoConvergence(opts.max_iter))
}

fn rel_change<D: Dimension>(old: &Array<f64, D>, new: &Array<f64, D>) -> f64 {
    old.iter()
        .zip(new.iter())
        .map(|(&o, &n)| (n / o).ln().abs())
        .fold(0.0, f64::max)
}

fn project(mut q: Array2<f64>, mut r: Array2<f64>, g: Array1<f64>) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let qs = q.sum_axis(Axis(0));
    let rs = r.sum_axis(Axis(0));
    let target = Array1::from_shape_fn(g.len(), |l| (qs[l] * rs[l] * g[l]).cbrt());
    for (l, mut col) in q.axis_iter_mut(Axis(1)).enumerate() {
        col *= target[l] / qs[l];
    }
    for (l, mut col) in r.axis_iter_mut(Axis(1)).enumerate() {
        col *= target[l] / rs[l];
    }
    (q, r, target)
}
