//! Outer mirror-descent loop shared by the linear, GW and fused problems.

use ndarray::{Array1, ArrayView2};

use crate::coupling::LowRankCoupling;
use crate::cost::FactoredCost;
use crate::dykstra::{ulr_dykstra, ulr_ti_dykstra, DualState, InnerParams};
use crate::error::{invalid, shape, Error, Result};
use crate::geometry::{init_coupling, InitKind, InitStrategy};
use crate::kernels::{
    adapt_step, entropic_transform, kernel_from_gradients, penalty, GradientMode, GwGeometry, SmoothTerm,
};
use crate::kl::{delta_criterion, triple_entropy};
use crate::measure::Measure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerSolver {
    Plain,
    #[default]
    TranslationInvariant,
}

impl std::str::FromStr for InnerSolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" | "dykstra" => Ok(Self::Plain),
            "ti" | "translation_invariant" => Ok(Self::TranslationInvariant),
            other => Err(invalid(format!("unknown inner solver '{other}'"))),
        }
    }
}

/// Step size rule for the outer iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// `γ = γ₀ / max ‖∇‖∞²`, recomputed every iteration.
    #[default]
    Adaptive,
    /// `γ = γ₀` throughout.
    Fixed,
}

impl std::str::FromStr for StepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Self::Adaptive),
            "fixed" => Ok(Self::Fixed),
            other => Err(invalid(format!("unknown step rule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rank: usize,
    pub tau1: f64,
    pub tau2: f64,
    pub gamma0: f64,
    /// Outer stopping tolerance on the symmetrized KL change.
    pub delta: f64,
    /// Inner (Dykstra) stopping tolerance.
    pub inner_delta: f64,
    /// Entropic regularization weight; `0` disables it.
    pub epsilon: f64,
    /// Fusion weight of the linear term, used by the fused problem only.
    pub alpha: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub init: InitKind,
    pub init_floor: f64,
    pub seed: u64,
    pub warm_start_duals: bool,
    pub gradient_mode: GradientMode,
    pub inner_solver: InnerSolver,
    pub step_rule: StepRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rank: 10,
            tau1: 1.0,
            tau2: 1.0,
            gamma0: 10.0,
            delta: 1e-9,
            inner_delta: 1e-9,
            epsilon: 0.0,
            alpha: 0.5,
            max_outer: 1000,
            max_inner: 10_000,
            init: InitKind::Random,
            init_floor: 1e-6,
            seed: 0,
            warm_start_duals: true,
            gradient_mode: GradientMode::Analytic,
            inner_solver: InnerSolver::TranslationInvariant,
            step_rule: StepRule::Adaptive,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(invalid("rank must be at least 1"));
        }
        if !(self.tau1 > 0.0 && self.tau2 > 0.0) {
            return Err(invalid("tau1 and tau2 must be positive"));
        }
        if !(self.gamma0 > 0.0 && self.gamma0.is_finite()) {
            return Err(invalid("gamma0 must be positive and finite"));
        }
        if !(self.delta > 0.0 && self.inner_delta > 0.0) {
            return Err(invalid("tolerances must be positive"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("epsilon must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid("alpha must lie in [0, 1]"));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(invalid("iteration caps must be positive"));
        }
        Ok(())
    }

    fn init_strategy(&self) -> InitStrategy {
        InitStrategy { kind: self.init, floor: self.init_floor, seed: self.seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub coupling: LowRankCoupling,
    /// Final value of the full objective, penalties and entropy included.
    pub objective: f64,
    pub mass: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Objective after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub inner_iteration_counts: Vec<usize>,
    /// Step size used at every outer iteration.
    pub gamma_trace: Vec<f64>,
    /// Whether every inner solve met its tolerance.
    pub inner_converged: bool,
}

/// Full objective `smooth + τ₁KL(Q1|a) + τ₂KL(R1|b) − εH(Q, R, g)`.
pub fn full_objective(
    smooth: &SmoothTerm<'_>,
    c: &LowRankCoupling,
    a: &Array1<f64>,
    b: &Array1<f64>,
    cfg: &SolverConfig,
) -> Result<f64> {
    let mut v = smooth.value(c)? + penalty(c, a, b, cfg.tau1, cfg.tau2)?;
    if cfg.epsilon > 0.0 {
        v -= cfg.epsilon * triple_entropy(c);
    }
    Ok(v)
}

fn weights(mu: &Measure, nu: &Measure) -> Result<(Array1<f64>, Array1<f64>)> {
    if !mu.is_strictly_positive() || !nu.is_strictly_positive() {
        return Err(invalid("measure weights must be strictly positive"));
    }
    Ok((mu.weights().clone(), nu.weights().clone()))
}

/// Runs the outer loop from an explicit starting triple.
pub fn solve_from(
    smooth: SmoothTerm<'_>,
    a: &Array1<f64>,
    b: &Array1<f64>,
    start: LowRankCoupling,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    if smooth.dims() != (a.len(), b.len()) || start.n() != a.len() || start.m() != b.len() {
        return Err(shape(format!(
            "problem is {:?}, marginals have lengths {} and {}, start is {}x{}",
            smooth.dims(),
            a.len(),
            b.len(),
            start.n(),
            start.m()
        )));
    }
    let mut c = start;
    let mut duals: Option<DualState> = None;
    let mut objective_trace = Vec::new();
    let mut inner_iteration_counts = Vec::new();
    let mut gamma_trace = Vec::new();
    let mut converged = false;
    let mut inner_converged = true;

    for it in 1..=cfg.max_outer {
        let grads = smooth.gradients(&c, cfg.gradient_mode)?;
        let gamma = match cfg.step_rule {
            StepRule::Adaptive => adapt_step(&grads, cfg.gamma0),
            StepRule::Fixed => cfg.gamma0,
        };
        let xi = kernel_from_gradients(&c, &grads, gamma)?;
        let (xi, gamma_inner) = entropic_transform(&xi, gamma, cfg.epsilon);
        let params = InnerParams::new(gamma_inner, cfg.tau1, cfg.tau2)
            .with_delta(cfg.inner_delta)
            .with_max_iter(cfg.max_inner);
        let warm = if cfg.warm_start_duals { duals.as_ref() } else { None };
        let sol = match cfg.inner_solver {
            InnerSolver::Plain => ulr_dykstra(&a.view(), &b.view(), &xi, &params, warm),
            InnerSolver::TranslationInvariant => ulr_ti_dykstra(&a.view(), &b.view(), &xi, &params, warm),
        }
        .map_err(|e| match e {
            Error::NonFinite(what) => Error::NonFinite(format!("{what} (outer iteration {it}, gamma {gamma:e})")),
            other => other,
        })?;
        inner_converged &= sol.converged;
        inner_iteration_counts.push(sol.iterations);
        gamma_trace.push(gamma);
        let change = delta_criterion(&sol.coupling, &c, gamma)?;
        c = sol.coupling;
        duals = Some(sol.state);
        objective_trace.push(full_objective(&smooth, &c, a, b, cfg)?);
        if change < cfg.delta {
            converged = true;
            break;
        }
    }

    Ok(SolveReport {
        objective: *objective_trace.last().expect("at least one outer iteration"),
        mass: c.mass(),
        outer_iterations: objective_trace.len(),
        converged,
        objective_trace,
        inner_iteration_counts,
        gamma_trace,
        inner_converged,
        coupling: c,
    })
}

fn start(mu: &Measure, nu: &Measure, a: &Array1<f64>, b: &Array1<f64>, cfg: &SolverConfig) -> Result<LowRankCoupling> {
    let x: Option<ArrayView2<f64>> = mu.points().map(|p| p.view());
    let y: Option<ArrayView2<f64>> = nu.points().map(|p| p.view());
    init_coupling(&a.view(), &b.view(), cfg.rank, &cfg.init_strategy(), x.as_ref(), y.as_ref())
}

/// Unbalanced low-rank OT with cost `C`.
pub fn solve_ulot(mu: &Measure, nu: &Measure, cost: &FactoredCost, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let (a, b) = weights(mu, nu)?;
    let c0 = start(mu, nu, &a, &b, cfg)?;
    solve_from(SmoothTerm::Linear(cost), &a, &b, c0, cfg)
}

/// Unbalanced low-rank Gromov-Wasserstein between intra-space costs.
pub fn solve_ulgw(mu: &Measure, nu: &Measure, geom: &GwGeometry, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let (a, b) = weights(mu, nu)?;
    let c0 = start(mu, nu, &a, &b, cfg)?;
    solve_from(SmoothTerm::Quadratic(geom), &a, &b, c0, cfg)
}

/// Unbalanced low-rank fused GW with fusion weight `cfg.alpha`.
pub fn solve_ulfgw(
    mu: &Measure,
    nu: &Measure,
    cost: &FactoredCost,
    geom: &GwGeometry,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    let (a, b) = weights(mu, nu)?;
    let c0 = start(mu, nu, &a, &b, cfg)?;
    solve_from(SmoothTerm::Fused { cost, geom, alpha: cfg.alpha }, &a, &b, c0, cfg)
}
