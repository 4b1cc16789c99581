//! Dual and primal-dual kernels: the directional TV-ℓ2 problem, the
//! G_S-constrained ℓ1 texture problem and the smoothed multiphase labeling.
//!
//! All three rely on the same semi-implicit projected step
//! `q ← (q + τ d) / (1 + τ|d|)` followed by a pull back into the unit ball.

use crate::diffops::{grad, DirField};
use crate::lattice::Image;
use crate::proximal::{shrink_scalar, softmax_phases};
use crate::{Error, Result};

pub const DEFAULT_TAU: f64 = 0.1;

/// A unit-ball-feasible dual field together with its step size.
#[derive(Clone, Debug, PartialEq)]
pub struct DualState {
    pub field: DirField,
    pub step: f64,
    pub iteration: usize,
}

impl DualState {
    pub fn zeros(k: usize, rows: usize, cols: usize, step: f64) -> Self {
        DualState {
            field: DirField::zeros(k, rows, cols),
            step,
            iteration: 0,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.field.max_magnitude() <= 1.0 + 1e-12
    }
}

/// One projected step along `direction`.
pub fn chambolle_step(state: &mut DualState, direction: &DirField) {
    assert_eq!(state.field.k(), direction.k(), "layer counts differ");
    let tau = state.step;
    let mag = direction.magnitude();
    for (q, d) in state.field.layers_mut().iter_mut().zip(direction.layers()) {
        for ((qv, &dv), &m) in q.as_mut_slice().iter_mut().zip(d.as_slice()).zip(mag.as_slice()) {
            *qv = (*qv + tau * dv) / (1.0 + tau * m);
        }
    }
    state.field.renormalize_unit_ball();
    state.iteration += 1;
}

fn check_step(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        crate::invalid(format!("step τ must be positive, got {tau}"))
    }
}

/// One sweep of the TV-ℓ2 dual iteration; returns the primal estimate
/// `u = h − div⁻ r / μ`.
pub fn dtv_l2_step(r: &mut DualState, h: &Image, weight: f64) -> Image {
    let mut t = r.field.div();
    t.add_scaled(-weight, h);
    let d = grad(&t, r.field.k());
    chambolle_step(r, &d);
    let mut u = h.clone();
    u.add_scaled(-1.0 / weight, &r.field.div());
    u
}

/// Minimizes `‖∇⁺_K u‖₁ + (μ/2)‖u − h‖²` through its dual.
pub fn dtv_l2_solve(h: &Image, weight: f64, k: usize, tau: f64, iters: usize) -> Result<(Image, DualState)> {
    if !(weight > 0.0) {
        return crate::invalid(format!("fidelity weight must be positive, got {weight}"));
    }
    if k == 0 {
        return crate::invalid("direction count must be at least 1");
    }
    check_step(tau)?;
    h.check_finite("TV-ℓ2 data")?;
    let (rows, cols) = h.dims();
    let mut r = DualState::zeros(k, rows, cols, tau);
    let mut u = h.clone();
    for _ in 0..iters {
        u = dtv_l2_step(&mut r, h, weight);
    }
    Ok((u, r))
}

pub fn dtv_l2_energy(u: &Image, h: &Image, weight: f64, k: usize) -> f64 {
    crate::diffops::dtv_norm(u, k) + 0.5 * weight * (u - h).dot(&(u - h))
}

/// The set `{v = μ div⁻_S g : |g| ≤ 1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GsBall {
    pub mu1: f64,
}

impl GsBall {
    /// `‖v − μ div⁻ g‖₂`, zero when `g` certifies `‖v‖_{G_S} ≤ μ`.
    pub fn witness_gap(&self, v: &Image, g: &DirField) -> f64 {
        let mut d = v.clone();
        d.add_scaled(-self.mu1, &g.div());
        d.norm()
    }
}

/// Iterate of the G_S-ℓ1 solver.
#[derive(Clone, Debug)]
pub struct GsL1State {
    pub v: Image,
    pub g: DualState,
    pub lambda1: Image,
}

impl GsL1State {
    pub fn zeros(s: usize, rows: usize, cols: usize, tau: f64) -> Self {
        GsL1State {
            v: Image::zeros(rows, cols),
            g: DualState::zeros(s, rows, cols, tau),
            lambda1: Image::zeros(rows, cols),
        }
    }

    /// `‖v − μ div⁻ g‖₂`
    pub fn constraint_residual(&self, mu: f64) -> f64 {
        GsBall { mu1: mu }.witness_gap(&self.v, &self.g.field)
    }
}

/// Dual step on `g`, shrink on `v`, then the multiplier update.
pub fn gs_l1_step(state: &mut GsL1State, f: &Image, mu: f64, beta: f64, alpha: f64) {
    let s = state.g.field.k();
    let mut t = state.g.field.div();
    t.scale(alpha * mu);
    t -= &state.lambda1;
    t.add_scaled(-alpha, &state.v);
    let d = grad(&t, s);
    chambolle_step(&mut state.g, &d);

    let dg = state.g.field.div();
    let ab = alpha + beta;
    let thr = 1.0 / ab;
    let v = Image::from_vec(
        f.rows(),
        f.cols(),
        f.as_slice()
            .iter()
            .zip(dg.as_slice())
            .zip(state.lambda1.as_slice())
            .map(|((&fv, &dv), &lv)| shrink_scalar(beta / ab * fv + alpha * mu / ab * dv - lv / ab, thr))
            .collect(),
    )
    .expect("dims preserved");
    state.v = v;
    let mut resid = state.v.clone();
    resid.add_scaled(-mu, &dg);
    state.lambda1.add_scaled(alpha, &resid);
}

/// Minimizes `‖v‖₁ + (β/2)‖f − v‖²` subject to `‖v‖_{G_S} ≤ μ`.
pub fn gs_l1_solve(
    f: &Image,
    mu: f64,
    beta: f64,
    alpha: f64,
    s: usize,
    tau: f64,
    iters: usize,
) -> Result<(Image, DualState, Image)> {
    if !(alpha > 0.0 && beta > 0.0) {
        return crate::invalid(format!("α and β must be positive, got α={alpha}, β={beta}"));
    }
    if !(mu >= 0.0) {
        return crate::invalid(format!("G_S radius must be non-negative, got {mu}"));
    }
    if s == 0 {
        return crate::invalid("direction count must be at least 1");
    }
    check_step(tau)?;
    f.check_finite("G_S-ℓ1 data")?;
    let mut st = GsL1State::zeros(s, f.rows(), f.cols(), tau);
    for _ in 0..iters {
        gs_l1_step(&mut st, f, mu, beta, alpha);
    }
    Ok((st.v, st.g, st.lambda1))
}

/// `N` relaxed phase maps and their means.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSet {
    pub phases: Vec<Image>,
    pub means: Vec<f64>,
}

/// Share of the lattice below which a phase counts as empty.
pub const EMPTY_PHASE_FRACTION: f64 = 1e-8;

impl PhaseSet {
    pub fn new(phases: Vec<Image>, means: Vec<f64>) -> Result<Self> {
        if phases.is_empty() || phases.len() != means.len() {
            return crate::invalid(format!(
                "{} phase maps with {} means",
                phases.len(),
                means.len()
            ));
        }
        let dims = phases[0].dims();
        for p in &phases {
            p.check_dims(dims)?;
        }
        Ok(PhaseSet { phases, means })
    }

    /// Every map zero, as in the initialization of the single-level model.
    pub fn zeros(rows: usize, cols: usize, means: Vec<f64>) -> Self {
        PhaseSet {
            phases: vec![Image::zeros(rows, cols); means.len()],
            means,
        }
    }

    pub fn uniform(rows: usize, cols: usize, means: Vec<f64>) -> Self {
        let w = 1.0 / means.len() as f64;
        PhaseSet {
            phases: vec![Image::constant(rows, cols, w); means.len()],
            means,
        }
    }

    pub fn n(&self) -> usize {
        self.phases.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.phases[0].dims()
    }

    /// `Σ_n c_n p_n`
    pub fn reconstruction(&self) -> Image {
        let (rows, cols) = self.dims();
        let mut out = Image::zeros(rows, cols);
        for (p, &c) in self.phases.iter().zip(&self.means) {
            out.add_scaled(c, p);
        }
        out
    }

    /// Per-pixel index of the largest weight, lowest index on ties.
    pub fn labels(&self) -> Vec<usize> {
        let len = self.phases[0].len();
        (0..len)
            .map(|idx| {
                let mut best = 0;
                for n in 1..self.n() {
                    if self.phases[n].as_slice()[idx] > self.phases[best].as_slice()[idx] {
                        best = n;
                    }
                }
                best
            })
            .collect()
    }

    pub fn is_hard_partition(&self) -> bool {
        let len = self.phases[0].len();
        (0..len).all(|idx| {
            let vals: Vec<f64> = self.phases.iter().map(|p| p.as_slice()[idx]).collect();
            vals.iter().all(|&v| v == 0.0 || v == 1.0) && vals.iter().filter(|&&v| v == 1.0).count() == 1
        })
    }

    /// `max_k |Σ_n p_n[k] − 1|`
    pub fn simplex_gap(&self) -> f64 {
        let len = self.phases[0].len();
        (0..len)
            .map(|idx| (self.phases.iter().map(|p| p.as_slice()[idx]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `c_n = Σ u p_n / Σ p_n`, keeping the previous mean for empty phases.
    pub fn update_means(&mut self, u: &Image) {
        let floor = EMPTY_PHASE_FRACTION * u.len() as f64;
        for (p, c) in self.phases.iter().zip(self.means.iter_mut()) {
            let mass = p.sum();
            if mass >= floor {
                *c = u.dot(p) / mass;
            }
        }
    }
}

/// `weight·(u − c_n)² + div⁻_M q_n` for every phase.
pub fn phase_scores(u: &Image, means: &[f64], weight: f64, q: &[DualState]) -> Vec<Image> {
    means
        .iter()
        .zip(q)
        .map(|(&c, qn)| {
            let mut s = u.map(|x| weight * (x - c) * (x - c));
            s += &qn.field.div();
            s
        })
        .collect()
}

/// Dual ascent on `q_n`: the gradient of the smoothed dual with respect to
/// `q_n` is `−∇⁺_M p_n`.
pub fn phase_dual_step(q: &mut DualState, p: &Image) {
    let d = grad(p, q.field.k()).scaled(-1.0);
    chambolle_step(q, &d);
}

/// One softmax update of the phases followed by one dual step per phase.
pub fn pd_phase_step(u: &Image, means: &[f64], weight: f64, xi: f64, q: &mut [DualState]) -> Result<Vec<Image>> {
    let p = softmax_phases(&phase_scores(u, means, weight, q), xi)?;
    for (qn, pn) in q.iter_mut().zip(&p) {
        phase_dual_step(qn, pn);
    }
    Ok(p)
}

#[allow(clippy::too_many_arguments)]
pub fn smoothed_pd_phases(
    u: &Image,
    c: &[f64],
    weight: f64,
    m: usize,
    xi: f64,
    tau: f64,
    iters: usize,
    q0: Option<Vec<DualState>>,
) -> Result<(PhaseSet, Vec<DualState>)> {
    if c.len() < 2 {
        return crate::invalid("at least two phases are required");
    }
    if m == 0 {
        return crate::invalid("direction count must be at least 1");
    }
    check_step(tau)?;
    u.check_finite("phase data")?;
    let (rows, cols) = u.dims();
    let mut q = match q0 {
        Some(q) => {
            if q.len() != c.len() {
                return Err(Error::LayerMismatch {
                    expected: c.len(),
                    found: q.len(),
                });
            }
            q
        }
        None => (0..c.len()).map(|_| DualState::zeros(m, rows, cols, tau)).collect(),
    };
    let mut p = PhaseSet::uniform(rows, cols, c.to_vec());
    for _ in 0..iters {
        p.phases = pd_phase_step(u, c, weight, xi, &mut q)?;
    }
    Ok((p, q))
}

/// `Σ_k min_n score_n[k]`, the unsmoothed dual objective.
pub fn dual_objective(u: &Image, means: &[f64], weight: f64, q: &[DualState]) -> f64 {
    let s = phase_scores(u, means, weight, q);
    (0..u.len())
        .map(|idx| s.iter().map(|x| x.as_slice()[idx]).fold(f64::INFINITY, f64::min))
        .sum()
}

/// `Σ_n ‖∇⁺_M p_n‖₁ + weight·Σ_n ⟨(u − c_n)², p_n⟩`
pub fn phase_primal_energy(u: &Image, means: &[f64], weight: f64, m: usize, p: &[Image]) -> f64 {
    p.iter()
        .zip(means)
        .map(|(pn, &c)| grad(pn, m).norm_l1() + weight * u.map(|x| (x - c) * (x - c)).dot(pn))
        .sum()
}
