//! Smooth objective terms, their gradients in `(Q, R, g)`, and the kernels
//! `ξ = ζ ⊙ exp(−γ∇)` built from them.
//!
//! With `D = Diag(1/g)`, `P = Q D Rᵀ`:
//!
//! - linear term `L_C = ⟨C, P⟩ = Σ_l ω_l / g_l`, `ω_l = [QᵀCR]_ll`;
//! - GW term `⟨A²Q1, Q1⟩ + ⟨B²R1, R1⟩ − 2 Σ_{lk} N_lk M_lk / (g_l g_k)` with
//!   `N = QᵀAQ`, `M = RᵀBR` and `A²`, `B²` elementwise squares;
//! - fused term `α|g| L_C + (1 − α) GW`.

use ndarray::{Array1, Array2, Axis, Zip};

use crate::coupling::{KernelTriple, LowRankCoupling};
use crate::cost::FactoredCost;
use crate::error::{invalid, shape, Error, Result};
use crate::geometry::elementwise_square_factors;
use crate::kl::gen_kl;
use crate::EXP_CLIP;

/// Gradient blocks with respect to `Q`, `R` and `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub q: Array2<f64>,
    pub r: Array2<f64>,
    pub g: Array1<f64>,
}

impl Gradients {
    pub fn zeros(n: usize, m: usize, rank: usize) -> Self {
        Self { q: Array2::zeros((n, rank)), r: Array2::zeros((m, rank)), g: Array1::zeros(rank) }
    }

    fn is_finite(&self) -> bool {
        self.q.iter().chain(self.r.iter()).chain(self.g.iter()).all(|x| x.is_finite())
    }

    fn scaled(mut self, s: f64) -> Self {
        self.q *= s;
        self.r *= s;
        self.g *= s;
        self
    }
}

/// How the GW gradients are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    /// Exact gradients of the GW objective.
    #[default]
    Analytic,
    /// The published update formulas: marginal gradient `2Q1 1ᵀ`, cross
    /// gradient `+4 A P B R D` and `∇g = −ω/g²`.
    PaperLiteral,
}

impl std::str::FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "paper-literal" | "paper_literal" => Ok(Self::PaperLiteral),
            other => Err(invalid(format!("unknown gradient mode '{other}'"))),
        }
    }
}

/// Intra-space costs `A` (n×n), `B` (m×m) with their elementwise squares.
#[derive(Debug, Clone)]
pub struct GwGeometry {
    a: FactoredCost,
    b: FactoredCost,
    a_sq: FactoredCost,
    b_sq: FactoredCost,
}

impl GwGeometry {
    pub fn new(a: FactoredCost, b: FactoredCost) -> Result<Self> {
        if !a.is_square() || !b.is_square() {
            return Err(shape(format!("GW costs must be square, got {:?} and {:?}", a.dim(), b.dim())));
        }
        let a_sq = elementwise_square_factors(&a)?;
        let b_sq = elementwise_square_factors(&b)?;
        Ok(Self { a, b, a_sq, b_sq })
    }

    pub fn a(&self) -> &FactoredCost {
        &self.a
    }

    pub fn b(&self) -> &FactoredCost {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.nrows()
    }
}

fn check_cost(c: &LowRankCoupling, cost: &FactoredCost) -> Result<()> {
    if cost.dim() != (c.n(), c.m()) {
        return Err(shape(format!("cost is {:?}, coupling is {}x{}", cost.dim(), c.n(), c.m())));
    }
    Ok(())
}

fn check_geometry(c: &LowRankCoupling, geom: &GwGeometry) -> Result<()> {
    if geom.n() != c.n() || geom.m() != c.m() {
        return Err(shape(format!(
            "GW costs are {}x{} and {}x{}, coupling is {}x{}",
            geom.n(),
            geom.n(),
            geom.m(),
            geom.m(),
            c.n(),
            c.m()
        )));
    }
    Ok(())
}

/// Diagonal `ω_l = [QᵀCR]_ll` and the product `CR`.
fn linear_parts(c: &LowRankCoupling, cost: &FactoredCost) -> (Array2<f64>, Array1<f64>) {
    let cr = cost.apply(&c.r().view());
    let omega = (c.q() * &cr).sum_axis(Axis(0));
    (cr, omega)
}

/// `L_C = ⟨C, P⟩`, evaluated through the factors.
pub fn linear_term(c: &LowRankCoupling, cost: &FactoredCost) -> Result<f64> {
    check_cost(c, cost)?;
    let (_, omega) = linear_parts(c, cost);
    Ok((&omega / c.g()).sum())
}

/// Gradients of `L_C`: `C R D`, `Cᵀ Q D`, `−ω/g²`.
pub fn linear_gradients(c: &LowRankCoupling, cost: &FactoredCost) -> Result<Gradients> {
    check_cost(c, cost)?;
    let (cr, omega) = linear_parts(c, cost);
    let g = c.g();
    let grad_q = &cr / g;
    let grad_r = cost.apply_t(&c.q().view()) / g;
    let grad_g = Zip::from(&omega).and(g).map_collect(|w, g| -w / (g * g));
    Ok(Gradients { q: grad_q, r: grad_r, g: grad_g })
}

struct GwParts {
    q1: Array1<f64>,
    r1: Array1<f64>,
    a_sq_q1: Array1<f64>,
    b_sq_r1: Array1<f64>,
    aq: Array2<f64>,
    br: Array2<f64>,
    n_mat: Array2<f64>,
    m_mat: Array2<f64>,
    inv_g: Array1<f64>,
}

fn gw_parts(c: &LowRankCoupling, geom: &GwGeometry) -> GwParts {
    let q1 = c.row_marginal();
    let r1 = c.col_marginal();
    let a_sq_q1 = geom.a_sq.apply_vec(&q1.view());
    let b_sq_r1 = geom.b_sq.apply_vec(&r1.view());
    let aq = geom.a.apply(&c.q().view());
    let br = geom.b.apply(&c.r().view());
    let n_mat = c.q().t().dot(&aq);
    let m_mat = c.r().t().dot(&br);
    let inv_g = c.g().mapv(|x| 1.0 / x);
    GwParts { q1, r1, a_sq_q1, b_sq_r1, aq, br, n_mat, m_mat, inv_g }
}

/// `Σ_{lk} N_lk M_lk / (g_l g_k)`.
fn cross_sum(p: &GwParts) -> f64 {
    let mut s = 0.0;
    for ((l, k), nlk) in p.n_mat.indexed_iter() {
        s += nlk * p.m_mat[[l, k]] * p.inv_g[l] * p.inv_g[k];
    }
    s
}

/// GW energy of the coupling in its factored form.
pub fn gw_term(c: &LowRankCoupling, geom: &GwGeometry) -> Result<f64> {
    check_geometry(c, geom)?;
    let p = gw_parts(c, geom);
    Ok(p.q1.dot(&p.a_sq_q1) + p.r1.dot(&p.b_sq_r1) - 2.0 * cross_sum(&p))
}

/// `X Diag(d) Y Diag(d)` for square `Y`.
fn sandwich(x: &Array2<f64>, y: &Array2<f64>, d: &Array1<f64>) -> Array2<f64> {
    let dyd = &(y * &d.view().insert_axis(Axis(1))) * d;
    x.dot(&dyd)
}

fn broadcast_column(v: &Array1<f64>, rank: usize) -> Array2<f64> {
    v.view().insert_axis(Axis(1)).broadcast((v.len(), rank)).expect("broadcast").to_owned()
}

/// Gradients of the GW term.
pub fn quadratic_gradients(c: &LowRankCoupling, geom: &GwGeometry, mode: GradientMode) -> Result<Gradients> {
    check_geometry(c, geom)?;
    let p = gw_parts(c, geom);
    let rank = c.rank();
    let d = &p.inv_g;
    match mode {
        GradientMode::Analytic => {
            let a_sq_t_q1 = geom.a_sq.apply_t_vec(&p.q1.view());
            let b_sq_t_r1 = geom.b_sq.apply_t_vec(&p.r1.view());
            let atq = geom.a.apply_t(&c.q().view());
            let btr = geom.b.apply_t(&c.r().view());
            let m_t = p.m_mat.t().to_owned();
            let n_t = p.n_mat.t().to_owned();
            let mut grad_q = broadcast_column(&(&p.a_sq_q1 + &a_sq_t_q1), rank);
            grad_q.scaled_add(-2.0, &sandwich(&p.aq, &m_t, d));
            grad_q.scaled_add(-2.0, &sandwich(&atq, &p.m_mat, d));
            let mut grad_r = broadcast_column(&(&p.b_sq_r1 + &b_sq_t_r1), rank);
            grad_r.scaled_add(-2.0, &sandwich(&p.br, &n_t, d));
            grad_r.scaled_add(-2.0, &sandwich(&btr, &p.n_mat, d));
            let nm = &p.n_mat * &p.m_mat;
            let s = nm.dot(d) + nm.t().dot(d);
            let grad_g = Zip::from(&s).and(d).map_collect(|s, d| 2.0 * s * d * d);
            Ok(Gradients { q: grad_q, r: grad_r, g: grad_g })
        }
        GradientMode::PaperLiteral => {
            let mut grad_q = broadcast_column(&(&p.q1 * 2.0), rank);
            grad_q.scaled_add(4.0, &sandwich(&p.aq, &p.m_mat, d));
            let mut grad_r = broadcast_column(&(&p.r1 * 2.0), rank);
            grad_r.scaled_add(4.0, &sandwich(&p.br, &p.n_mat, d));
            let omega = p.n_mat.dot(&Array2::from_diag(d)).dot(&p.m_mat).diag().to_owned();
            let grad_g = Zip::from(&omega).and(d).map_collect(|w, d| -w * d * d);
            Ok(Gradients { q: grad_q, r: grad_r, g: grad_g })
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// Fused objective `α|g| L_C + (1 − α) GW`.
pub fn fused_term(c: &LowRankCoupling, cost: &FactoredCost, geom: &GwGeometry, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let mut v = 0.0;
    if alpha > 0.0 {
        v += alpha * c.mass() * linear_term(c, cost)?;
    }
    if alpha < 1.0 {
        v += (1.0 - alpha) * gw_term(c, geom)?;
    }
    Ok(v)
}

/// Gradients of the fused objective. The linear part is skipped at `α = 0`
/// and the quadratic part at `α = 1`, so both endpoints reduce exactly.
pub fn fused_gradients(
    c: &LowRankCoupling,
    cost: &FactoredCost,
    geom: &GwGeometry,
    alpha: f64,
    mode: GradientMode,
) -> Result<Gradients> {
    check_alpha(alpha)?;
    check_cost(c, cost)?;
    check_geometry(c, geom)?;
    let quad = if alpha < 1.0 { Some(quadratic_gradients(c, geom, mode)?) } else { None };
    if alpha == 0.0 {
        return Ok(quad.expect("alpha < 1"));
    }
    let mass = c.mass();
    let lc = linear_term(c, cost)?;
    let lin = linear_gradients(c, cost)?;
    let mut out = Gradients {
        q: lin.q * (alpha * mass),
        r: lin.r * (alpha * mass),
        g: (lin.g * mass + lc) * alpha,
    };
    if let Some(quad) = quad {
        let quad = quad.scaled(1.0 - alpha);
        out.q += &quad.q;
        out.r += &quad.r;
        out.g += &quad.g;
    }
    Ok(out)
}

/// `ξ = ζ ⊙ exp(−γ∇)` with clipped exponents and a positive floor.
pub fn kernel_from_gradients(c: &LowRankCoupling, grads: &Gradients, gamma: f64) -> Result<KernelTriple> {
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients".into()));
    }
    let k = |x: f64, d: f64| (x * (-gamma * d).clamp(-EXP_CLIP, EXP_CLIP).exp()).max(f64::MIN_POSITIVE);
    let xi1 = Zip::from(c.q()).and(&grads.q).map_collect(|&x, &d| k(x, d));
    let xi2 = Zip::from(c.r()).and(&grads.r).map_collect(|&x, &d| k(x, d));
    let xi3 = Zip::from(c.g()).and(&grads.g).map_collect(|&x, &d| k(x, d));
    Ok(KernelTriple { xi1, xi2, xi3 })
}

pub fn kernel_ulot(c: &LowRankCoupling, cost: &FactoredCost, gamma: f64) -> Result<KernelTriple> {
    kernel_from_gradients(c, &linear_gradients(c, cost)?, gamma)
}

pub fn kernel_ulgw(c: &LowRankCoupling, geom: &GwGeometry, gamma: f64, mode: GradientMode) -> Result<KernelTriple> {
    kernel_from_gradients(c, &quadratic_gradients(c, geom, mode)?, gamma)
}

pub fn kernel_ulfgw(
    c: &LowRankCoupling,
    cost: &FactoredCost,
    geom: &GwGeometry,
    gamma: f64,
    alpha: f64,
    mode: GradientMode,
) -> Result<KernelTriple> {
    kernel_from_gradients(c, &fused_gradients(c, cost, geom, alpha, mode)?, gamma)
}

/// `γ₀ / max(‖∇Q‖∞², ‖∇R‖∞², ‖∇g‖∞²)`, or `γ₀` when every gradient vanishes.
pub fn adapt_step(grads: &Gradients, gamma0: f64) -> f64 {
    let sup = grads.q.iter().chain(grads.r.iter()).chain(grads.g.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
    if sup == 0.0 {
        gamma0
    } else {
        gamma0 / (sup * sup)
    }
}

/// Entropic step: `γ_ε = 1/(1/γ + ε)` and `ξ ↦ ξ^{γ_ε/γ}`. Identity at `ε = 0`.
pub fn entropic_transform(xi: &KernelTriple, gamma: f64, epsilon: f64) -> (KernelTriple, f64) {
    if epsilon == 0.0 {
        return (xi.clone(), gamma);
    }
    let gamma_eps = 1.0 / (1.0 / gamma + epsilon);
    let e = gamma_eps / gamma;
    let pow = |x: &f64| x.powf(e).max(f64::MIN_POSITIVE);
    (
        KernelTriple { xi1: xi.xi1.map(pow), xi2: xi.xi2.map(pow), xi3: xi.xi3.map(pow) },
        gamma_eps,
    )
}

/// Marginal penalties `τ₁KL(Q1|a) + τ₂KL(R1|b)`.
pub fn penalty(c: &LowRankCoupling, a: &Array1<f64>, b: &Array1<f64>, tau1: f64, tau2: f64) -> Result<f64> {
    Ok(tau1 * gen_kl(&c.row_marginal(), a)? + tau2 * gen_kl(&c.col_marginal(), b)?)
}

/// The smooth part of one of the three problems.
#[derive(Debug, Clone, Copy)]
pub enum SmoothTerm<'a> {
    Linear(&'a FactoredCost),
    Quadratic(&'a GwGeometry),
    Fused { cost: &'a FactoredCost, geom: &'a GwGeometry, alpha: f64 },
}

impl SmoothTerm<'_> {
    pub fn value(&self, c: &LowRankCoupling) -> Result<f64> {
        match *self {
            Self::Linear(cost) => linear_term(c, cost),
            Self::Quadratic(geom) => gw_term(c, geom),
            Self::Fused { cost, geom, alpha } => fused_term(c, cost, geom, alpha),
        }
    }

    pub fn gradients(&self, c: &LowRankCoupling, mode: GradientMode) -> Result<Gradients> {
        match *self {
            Self::Linear(cost) => linear_gradients(c, cost),
            Self::Quadratic(geom) => quadratic_gradients(c, geom, mode),
            Self::Fused { cost, geom, alpha } => fused_gradients(c, cost, geom, alpha, mode),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match *self {
            Self::Linear(cost) => cost.dim(),
            Self::Quadratic(geom) => (geom.n(), geom.m()),
            Self::Fused { cost, .. } => cost.dim(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn coupling() -> LowRankCoupling {
        LowRankCoupling::new(array![[0.2, 0.1], [0.1, 0.3], [0.3, 0.2]], array![[0.4, 0.3], [0.2, 0.3]], array![0.6, 0.6])
            .unwrap()
    }

    #[test]
    fn zero_step_returns_factors() {
        let c = coupling();
        let cost = FactoredCost::dense(array![[1.0, 2.0], [0.5, 3.0], [2.0, 1.0]]).unwrap();
        let xi = kernel_ulot(&c, &cost, 0.0).unwrap();
        assert_eq!(xi.xi1, *c.q());
        assert_eq!(xi.xi2, *c.r());
        assert_eq!(xi.xi3, *c.g());
    }

    #[test]
    fn constant_cost_gradient() {
        let c = coupling();
        let cost = FactoredCost::dense(Array2::from_elem((3, 2), 2.5)).unwrap();
        let grads = linear_gradients(&c, &cost).unwrap();
        for x in grads.q.iter() {
            assert!((x - 2.5).abs() < 1e-14);
        }
    }

    #[test]
    fn step_rule_examples() {
        let mut grads = Gradients::zeros(2, 2, 1);
        assert_eq!(adapt_step(&grads, 3.0), 3.0);
        grads.q[[0, 0]] = -2.0;
        grads.r[[1, 0]] = 1.0;
        assert_eq!(adapt_step(&grads, 1.0), 0.25);
        let scaled = grads.clone().scaled(10.0);
        assert!((adapt_step(&scaled, 1.0) - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn entropic_examples() {
        let xi = KernelTriple::new(array![[0.5]], array![[2.0]], array![0.25]).unwrap();
        let (same, g) = entropic_transform(&xi, 0.7, 0.0);
        assert_eq!(same, xi);
        assert_eq!(g, 0.7);
        let (t, g) = entropic_transform(&xi, 0.5, 1.0);
        assert!((g - 1.0 / 3.0).abs() < 1e-15);
        assert!((t.xi1[[0, 0]] - 0.5f64.powf(2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn scalar_gw_cross_gradient() {
        // n = m = 1, rank 1: GW = (α² + β²)p² − 2αβp² with p = q r / g.
        let (alpha, beta) = (1.5, 0.5);
        let geom = GwGeometry::new(
            FactoredCost::dense(array![[alpha]]).unwrap(),
            FactoredCost::dense(array![[beta]]).unwrap(),
        )
        .unwrap();
        let (q, r, g) = (0.6, 0.6, 0.6);
        let c = LowRankCoupling::new(array![[q]], array![[r]], array![g]).unwrap();
        let grads = quadratic_gradients(&c, &geom, GradientMode::Analytic).unwrap();
        // d/dg of −2αβ (qr/g)² = 4αβ q²r²/g³.
        let expected = 4.0 * alpha * beta * q * q * r * r / g.powi(3);
        assert!((grads.g[0] - expected).abs() < 1e-12);
        let value = gw_term(&c, &geom).unwrap();
        let p = q * r / g;
        let direct = alpha * alpha * q * q + beta * beta * r * r - 2.0 * alpha * beta * p * p;
        assert!((value - direct).abs() < 1e-14);
    }

    #[test]
    fn fused_alpha_zero_is_gw() {
        let c = coupling();
        let cost = FactoredCost::dense(array![[1.0, 2.0], [0.5, 3.0], [2.0, 1.0]]).unwrap();
        let a = array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]];
        let geom = GwGeometry::new(FactoredCost::dense(a).unwrap(), FactoredCost::dense(array![[0.0, 1.0], [1.0, 0.0]]).unwrap())
            .unwrap();
        for mode in [GradientMode::Analytic, GradientMode::PaperLiteral] {
            let k0 = kernel_ulfgw(&c, &cost, &geom, 0.3, 0.0, mode).unwrap();
            let k1 = kernel_ulgw(&c, &geom, 0.3, mode).unwrap();
            assert_eq!(k0, k1);
        }
        assert!(kernel_ulfgw(&c, &cost, &geom, 0.3, 1.5, GradientMode::Analytic).is_err());
    }

    #[test]
    fn mode_parse() {
        assert_eq!("paper-literal".parse::<GradientMode>().unwrap(), GradientMode::PaperLiteral);
        assert!("other".parse::<GradientMode>().is_err());
    }
}
