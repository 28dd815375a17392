//! Unbalanced Dykstra iterations for the KL-prox subproblem
//!
//! `min_{(Q,R,g) ∈ Π_r} (1/γ) [KL(Q|ξ₁) + KL(R|ξ₂) + KL(g|ξ₃)] + τ₁ KL(Q1|a) + τ₂ KL(R1|b)`.
//!
//! The dual is maximized block by block in scaling form, `u = exp(γf)`,
//! `v = exp(γh)`. The translation-invariant variant additionally maximizes
//! over the shifts `(f₁ + λ₁, h₁ − λ₁, f₂ + λ₂, h₂ − λ₂)` in closed form.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use crate::coupling::{KernelTriple, LowRankCoupling};
use crate::error::{invalid, shape, Error, Result};
use crate::kl::gen_kl;
use crate::{clipped_exp, G_FLOOR};

/// Dual scalings and translations of the inner problem.
///
/// In the translation-invariant solver `u` and `v` hold the untranslated
/// parts; the potentials are `f = ln u / γ + λ` and `h = ln v / γ − λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub u1: Array1<f64>,
    pub v1: Array1<f64>,
    pub u2: Array1<f64>,
    pub v2: Array1<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl DualState {
    pub fn ones(n: usize, m: usize, rank: usize) -> Self {
        Self {
            u1: Array1::ones(n),
            v1: Array1::ones(rank),
            u2: Array1::ones(m),
            v2: Array1::ones(rank),
            lambda1: 0.0,
            lambda2: 0.0,
        }
    }

    fn check(&self, n: usize, m: usize, rank: usize) -> Result<()> {
        if self.u1.len() != n || self.u2.len() != m || self.v1.len() != rank || self.v2.len() != rank {
            return Err(shape("dual state does not match problem dimensions"));
        }
        let pos = |v: &Array1<f64>| v.iter().all(|x| x.is_finite() && *x > 0.0);
        if !(pos(&self.u1) && pos(&self.u2) && pos(&self.v1) && pos(&self.v2)) {
            return Err(invalid("dual scalings must be finite and strictly positive"));
        }
        if !(self.lambda1.is_finite() && self.lambda2.is_finite()) {
            return Err(Error::NonFinite("dual translations".into()));
        }
        Ok(())
    }

    /// Folds the translations into the scalings, leaving `λ = 0`.
    pub fn absorb_translations(&self, gamma: f64) -> Self {
        let s1 = (gamma * self.lambda1).exp();
        let s2 = (gamma * self.lambda2).exp();
        Self {
            u1: &self.u1 * s1,
            v1: &self.v1 / s1,
            u2: &self.u2 * s2,
            v2: &self.v2 / s2,
            lambda1: 0.0,
            lambda2: 0.0,
        }
    }
}

/// Parameters of one inner solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerParams {
    pub gamma: f64,
    pub tau1: f64,
    pub tau2: f64,
    /// Tolerance on `(1/γ) · max ‖Δ log scaling‖∞`.
    pub delta: f64,
    pub max_iter: usize,
    /// Sweeps without a new minimum of the stopping quantity before giving up.
    pub stall_window: usize,
}

impl InnerParams {
    pub fn new(gamma: f64, tau1: f64, tau2: f64) -> Self {
        Self { gamma, tau1, tau2, delta: 1e-9, max_iter: 10_000, stall_window: 100 }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma must be positive and finite"));
        }
        if !(self.tau1 > 0.0 && self.tau2 > 0.0) {
            return Err(invalid("tau1 and tau2 must be positive"));
        }
        if !(self.delta > 0.0) {
            return Err(invalid("delta must be positive"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub coupling: LowRankCoupling,
    pub state: DualState,
    pub iterations: usize,
    pub converged: bool,
}

/// `τ⟨exp(−f/τ) − 1, z⟩` written in terms of `ln u = γ(f − λ)`; the limit
/// `⟨f, z⟩` is used for `τ = ∞`.
fn marginal_conjugate(ln_u: &Array1<f64>, lambda: f64, z: &ArrayView1<f64>, gamma: f64, tau: f64) -> f64 {
    if tau.is_infinite() {
        return ln_u.iter().zip(z.iter()).map(|(l, z)| (l / gamma + lambda) * z).sum();
    }
    ln_u.iter()
        .zip(z.iter())
        .map(|(l, z)| tau * ((-(l / gamma + lambda) / tau).exp_m1()) * z)
        .sum()
}

fn bilinear(u: &Array1<f64>, xi: &Array2<f64>, v: &Array1<f64>) -> f64 {
    u.dot(&xi.dot(v))
}

/// Dual objective `D(f₁, h₁, f₂, h₂)` with all conjugate constants kept, so
/// that it equals [`inner_primal_objective`] at the optimum.
///
/// Translations in `state` are honoured; with `λ = 0` this is the plain
/// dual in scaling form.
pub fn dual_objective(
    state: &DualState,
    xi: &KernelTriple,
    a: &ArrayView1<f64>,
    b: &ArrayView1<f64>,
    gamma: f64,
    tau1: f64,
    tau2: f64,
) -> Result<f64> {
    if !(gamma > 0.0 && tau1 > 0.0 && tau2 > 0.0) {
        return Err(invalid("gamma, tau1 and tau2 must be positive"));
    }
    check_dims(a, b, xi)?;
    state.check(a.len(), b.len(), xi.rank())?;
    let ln_u1 = state.u1.mapv(f64::ln);
    let ln_u2 = state.u2.mapv(f64::ln);
    let mut d = -marginal_conjugate(&ln_u1, state.lambda1, a, gamma, tau1);
    d -= marginal_conjugate(&ln_u2, state.lambda2, b, gamma, tau2);
    d -= (bilinear(&state.u1, &xi.xi1, &state.v1) - xi.xi1.sum()) / gamma;
    d -= (bilinear(&state.u2, &xi.xi2, &state.v2) - xi.xi2.sum()) / gamma;
    let shift = (gamma * (state.lambda1 + state.lambda2)).exp();
    let g_term: f64 = Zip::from(&xi.xi3)
        .and(&state.v1)
        .and(&state.v2)
        .fold(0.0, |acc, &x3, &v1, &v2| acc + (shift / (v1 * v2) - 1.0) * x3);
    d -= g_term / gamma;
    Ok(d)
}

/// Primal value `(1/γ)[KL(Q|ξ₁) + KL(R|ξ₂) + KL(g|ξ₃)] + τ₁KL(Q1|a) + τ₂KL(R1|b)`.
pub fn inner_primal_objective(
    c: &LowRankCoupling,
    xi: &KernelTriple,
    a: &ArrayView1<f64>,
    b: &ArrayView1<f64>,
    gamma: f64,
    tau1: f64,
    tau2: f64,
) -> Result<f64> {
    let prox = gen_kl(c.q(), &xi.xi1)? + gen_kl(c.r(), &xi.xi2)? + gen_kl(c.g(), &xi.xi3)?;
    Ok(prox / gamma + tau1 * gen_kl(&c.row_marginal(), a)? + tau2 * gen_kl(&c.col_marginal(), b)?)
}

fn check_dims(a: &ArrayView1<f64>, b: &ArrayView1<f64>, xi: &KernelTriple) -> Result<()> {
    if xi.xi1.nrows() != a.len() || xi.xi2.nrows() != b.len() {
        return Err(shape(format!(
            "kernels are {}x{} and {}x{}, marginals have lengths {} and {}",
            xi.xi1.nrows(),
            xi.xi1.ncols(),
            xi.xi2.nrows(),
            xi.xi2.ncols(),
            a.len(),
            b.len()
        )));
    }
    if xi.xi1.ncols() != xi.rank() || xi.xi2.ncols() != xi.rank() {
        return Err(shape("kernel ranks disagree"));
    }
    if a.iter().chain(b.iter()).any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(invalid("marginals must be finite and strictly positive"));
    }
    Ok(())
}

/// Exponent `τ/(τ + 1/γ)` of the marginal scaling updates.
fn damping(gamma: f64, tau: f64) -> f64 {
    if tau.is_infinite() {
        1.0
    } else {
        gamma * tau / (gamma * tau + 1.0)
    }
}

fn log_sum_exp(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// Optimal translations `(λ₁, λ₂)` for the untranslated scalings in `state`.
///
/// Solves `(1/τ₁ + γ) λ₁ + γ λ₂ = c₁`, `γ λ₁ + (1/τ₂ + γ) λ₂ = c₂` with
/// `c₁ = log⟨u₁^{−1/(γτ₁)}, a⟩ − log⟨ξ₃, 1/(v₁v₂)⟩` and `c₂` alike.
pub fn compute_lambdas(
    a: &ArrayView1<f64>,
    b: &ArrayView1<f64>,
    xi3: &ArrayView1<f64>,
    state: &DualState,
    gamma: f64,
    tau1: f64,
    tau2: f64,
) -> Result<(f64, f64)> {
    let lse_g = log_sum_exp(
        Zip::from(xi3)
            .and(&state.v1)
            .and(&state.v2)
            .map_collect(|x, v1, v2| x.ln() - v1.ln() - v2.ln())
            .into_iter(),
    );
    let marginal = |u: &Array1<f64>, z: &ArrayView1<f64>, tau: f64| {
        let s = if tau.is_infinite() { 0.0 } else { 1.0 / (gamma * tau) };
        log_sum_exp(u.iter().zip(z.iter()).map(|(u, z)| -u.ln() * s + z.ln()))
    };
    let c1 = marginal(&state.u1, a, tau1) - lse_g;
    let c2 = marginal(&state.u2, b, tau2) - lse_g;
    if !(c1.is_finite() && c2.is_finite()) {
        return Err(Error::NonFinite("translation system".into()));
    }
    Ok(solve_lambda_system(c1, c2, gamma, tau1, tau2))
}

pub(crate) fn solve_lambda_system(c1: f64, c2: f64, gamma: f64, tau1: f64, tau2: f64) -> (f64, f64) {
    let k1 = 1.0 / tau1 + gamma;
    let k2 = 1.0 / tau2 + gamma;
    let det = k1 * k2 - gamma * gamma;
    if det.abs() <= 1e-14 * k1 * k2 {
        // Balanced limit: only λ₁ + λ₂ is identified.
        let l = (c1 + c2) / (4.0 * gamma);
        return (l, l);
    }
    ((k2 * c1 - gamma * c2) / det, (k1 * c2 - gamma * c1) / det)
}

/// Which block was just updated, for [`dykstra_traced`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Translations,
    Marginals,
    Inner,
}

struct Workspace<'a> {
    a: ArrayView1<'a, f64>,
    b: ArrayView1<'a, f64>,
    xi1: ArrayView2<'a, f64>,
    xi2: ArrayView2<'a, f64>,
    xi3: ArrayView1<'a, f64>,
    ln_a: Array1<f64>,
    ln_b: Array1<f64>,
    ln_xi3: Array1<f64>,
    p1: f64,
    p2: f64,
    params: InnerParams,
    translate: bool,
}

impl Workspace<'_> {
    fn lambdas(&self, s: &mut DualState) -> Result<()> {
        if self.translate {
            let (l1, l2) =
                compute_lambdas(&self.a, &self.b, &self.xi3, s, self.params.gamma, self.params.tau1, self.params.tau2)?;
            s.lambda1 = l1;
            s.lambda2 = l2;
        }
        Ok(())
    }

    fn marginal_update(&self, s: &mut DualState) {
        let shift = |lambda: f64, tau: f64| if tau.is_infinite() { 0.0 } else { -lambda / tau };
        let k1 = self.xi1.dot(&s.v1);
        let e1 = shift(s.lambda1, self.params.tau1);
        let p1 = self.p1;
        Zip::from(&mut s.u1)
            .and(&self.ln_a)
            .and(&k1)
            .for_each(|u, la, k| *u = clipped_exp(p1 * (la - k.ln() + e1)));
        let k2 = self.xi2.dot(&s.v2);
        let e2 = shift(s.lambda2, self.params.tau2);
        let p2 = self.p2;
        Zip::from(&mut s.u2)
            .and(&self.ln_b)
            .and(&k2)
            .for_each(|u, lb, k| *u = clipped_exp(p2 * (lb - k.ln() + e2)));
    }

    fn inner_update(&self, s: &mut DualState) -> Array1<f64> {
        let s1 = self.xi1.t().dot(&s.u1);
        let s2 = self.xi2.t().dot(&s.u2);
        let lift = self.params.gamma * (s.lambda1 + s.lambda2);
        let g = Zip::from(&self.ln_xi3)
            .and(&s1)
            .and(&s2)
            .map_collect(|lx, a, b| clipped_exp((lx + a.ln() + b.ln() + lift) / 3.0).max(G_FLOOR));
        s.v1 = &g / &s1;
        s.v2 = &g / &s2;
        g
    }
}

fn potential_change(old: &DualState, new: &DualState, gamma: f64) -> f64 {
    let d = |x: &Array1<f64>, y: &Array1<f64>, shift: f64| {
        x.iter().zip(y.iter()).map(|(p, q)| ((q / p).ln() + shift).abs()).fold(0.0, f64::max)
    };
    let s1 = gamma * (new.lambda1 - old.lambda1);
    let s2 = gamma * (new.lambda2 - old.lambda2);
    let m = d(&old.u1, &new.u1, s1).max(d(&old.v1, &new.v1, -s1)).max(d(&old.u2, &new.u2, s2)).max(d(
        &old.v2,
        &new.v2,
        -s2,
    ));
    m / gamma
}

fn all_finite(s: &DualState) -> bool {
    s.lambda1.is_finite()
        && s.lambda2.is_finite()
        && [&s.u1, &s.v1, &s.u2, &s.v2].iter().all(|v| v.iter().all(|x| x.is_finite() && *x > 0.0))
}

type BlockTrace<'a> = &'a mut dyn FnMut(Block, &DualState);

fn run(
    a: &ArrayView1<f64>,
    b: &ArrayView1<f64>,
    xi: &KernelTriple,
    params: &InnerParams,
    init: Option<&DualState>,
    translate: bool,
    mut trace: Option<BlockTrace<'_>>,
) -> Result<InnerSolution> {
    params.validate()?;
    check_dims(a, b, xi)?;
    let (n, m, rank) = (a.len(), b.len(), xi.rank());
    let mut state = match init {
        Some(s) => {
            s.check(n, m, rank)?;
            if translate {
                s.clone()
            } else {
                s.absorb_translations(params.gamma)
            }
        }
        None => DualState::ones(n, m, rank),
    };
    let ws = Workspace {
        a: a.view(),
        b: b.view(),
        xi1: xi.xi1.view(),
        xi2: xi.xi2.view(),
        xi3: xi.xi3.view(),
        ln_a: a.mapv(f64::ln),
        ln_b: b.mapv(f64::ln),
        ln_xi3: xi.xi3.mapv(f64::ln),
        p1: damping(params.gamma, params.tau1),
        p2: damping(params.gamma, params.tau2),
        params: *params,
        translate,
    };

    let mut g = Array1::zeros(rank);
    let mut converged = false;
    let mut iterations = 0;
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let prev = state.clone();
        if translate {
            ws.lambdas(&mut state)?;
            if let Some(t) = trace.as_deref_mut() {
                t(Block::Translations, &state);
            }
        }
        ws.marginal_update(&mut state);
        if let Some(t) = trace.as_deref_mut() {
            t(Block::Marginals, &state);
        }
        if translate {
            ws.lambdas(&mut state)?;
            if let Some(t) = trace.as_deref_mut() {
                t(Block::Translations, &state);
            }
        }
        g = ws.inner_update(&mut state);
        if let Some(t) = trace.as_deref_mut() {
            t(Block::Inner, &state);
        }
        if !all_finite(&state) || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("dual scalings at inner iteration {iterations}")));
        }
        let change = potential_change(&prev, &state, params.gamma);
        if change < params.delta {
            converged = true;
            break;
        }
        if change < best {
            best = change;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= params.stall_window {
                break;
            }
        }
    }

    let q = &state.u1.view().insert_axis(ndarray::Axis(1)) * &xi.xi1 * &state.v1;
    let r = &state.u2.view().insert_axis(ndarray::Axis(1)) * &xi.xi2 * &state.v2;
    let coupling = LowRankCoupling::from_parts_unchecked(q, r, g);
    Ok(InnerSolution { coupling, state, iterations, converged })
}

/// Unbalanced low-rank Dykstra iterations.
pub fn ulr_dykstra(
    a: &ArrayView1<f64>,
    b: &ArrayView1<f64>,
    xi: &KernelTriple,
    params: &InnerParams,
    init: Option<&DualState>,
) -> Result<InnerSolution> {
    run(a, b, xi, params, init, false, None)
}

/// Translation-invariant Dykstra iterations: the optimal shifts are
/// recomputed before the marginal block and before the inner block.
pub fn ulr_ti_dykstra(
    a: &ArrayView1<f64>,
    b: &ArrayView1<f64>,
    xi: &KernelTriple,
    params: &InnerParams,
    init: Option<&DualState>,
) -> Result<InnerSolution> {
    run(a, b, xi, params, init, true, None)
}

/// Runs either solver and calls `observe` after every block update.
pub fn dykstra_traced(
    a: &ArrayView1<f64>,
    b: &ArrayView1<f64>,
    xi: &KernelTriple,
    params: &InnerParams,
    translate: bool,
    observe: &mut dyn FnMut(Block, &DualState),
) -> Result<InnerSolution> {
    run(a, b, xi, params, None, translate, Some(observe))
}
