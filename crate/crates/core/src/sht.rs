//! Single-level multiphase model: `f = u + v + ε` with `u = b + Σ c_n p_n`,
//! a directional-TV cartoon, a texture in a G_S ball with an ℓ1 penalty and
//! smoothed primal-dual phases.

use crate::dualsolvers::{dtv_l2_step, phase_dual_step, phase_scores, DualState, PhaseSet, DEFAULT_TAU};
use crate::lattice::Image;
use crate::metrics::relative_change;
use crate::proximal::{project_noise, shrink_scalar, softmax_phases, NoiseBall};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct ShtParams {
    pub l: usize,
    pub s: usize,
    pub m: usize,
    pub n: usize,
    pub mu1: f64,
    /// Texture ℓ1 weight; the starting value when `c_mu2` is set.
    pub mu2: f64,
    /// Re-derive `μ2` every iteration from `max|T_v|`.
    pub c_mu2: Option<f64>,
    pub mu3: f64,
    pub mu4: f64,
    pub alpha: f64,
    pub beta: f64,
    pub xi: f64,
    pub tau: f64,
    pub noise: NoiseBall,
    pub iters: usize,
    /// Stop once `Err_u` drops below this value.
    pub err_floor: Option<f64>,
    /// Intensity that maps to 255 when seeding `c_n = (n − 1)⌊255/N⌋`.
    pub range: f64,
}

impl Default for ShtParams {
    fn default() -> Self {
        ShtParams {
            l: 2,
            s: 2,
            m: 2,
            n: 3,
            mu1: 0.1,
            mu2: 0.1,
            c_mu2: Some(0.14),
            mu3: 0.1,
            mu4: 0.01,
            alpha: 0.1,
            beta: 0.04,
            xi: 0.001,
            tau: DEFAULT_TAU,
            noise: NoiseBall::haar(10.0).expect("default noise ball"),
            iters: 500,
            err_floor: None,
            range: 255.0,
        }
    }
}

impl ShtParams {
    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.s == 0 || self.m == 0 {
            return crate::invalid("direction counts must be at least 1");
        }
        if self.n < 2 {
            return crate::invalid(format!("at least two phases are required, got {}", self.n));
        }
        for (name, x) in [
            ("μ3", self.mu3),
            ("μ4", self.mu4),
            ("α", self.alpha),
            ("β", self.beta),
            ("ξ", self.xi),
            ("τ", self.tau),
            ("range", self.range),
        ] {
            if !(x > 0.0) || !x.is_finite() {
                return crate::invalid(format!("{name} must be positive, got {x}"));
            }
        }
        if !(self.mu1 >= 0.0) || !self.mu1.is_finite() {
            return crate::invalid(format!("μ1 must be non-negative, got {}", self.mu1));
        }
        if !(self.mu2 > 0.0) || !self.mu2.is_finite() {
            return crate::invalid(format!("μ2 must be positive, got {}", self.mu2));
        }
        if let Some(c) = self.c_mu2 {
            if !(c > 0.0) || !c.is_finite() {
                return crate::invalid(format!("c_μ2 must be positive, got {c}"));
            }
        }
        Ok(())
    }

    /// `c_n = (n − 1)⌊255/N⌋`, rescaled to `range`.
    pub fn initial_means(&self) -> Vec<f64> {
        let step = (255 / self.n) as f64;
        (0..self.n).map(|i| i as f64 * step * self.range / 255.0).collect()
    }
}

#[derive(Clone, Debug)]
pub struct ShtState {
    pub u: Image,
    pub v: Image,
    pub eps: Image,
    pub phases: PhaseSet,
    pub r: DualState,
    pub g: DualState,
    pub q: Vec<DualState>,
    pub lambda: Image,
    /// Current texture weight.
    pub mu2: f64,
    /// Iterations in which the adaptive `μ2` had to be clamped.
    pub mu2_clamps: usize,
    pub err_u: Vec<f64>,
    pub iteration: usize,
}

impl ShtState {
    pub fn init(f: &Image, params: &ShtParams) -> Self {
        let (rows, cols) = f.dims();
        let z = Image::zeros(rows, cols);
        ShtState {
            u: f.clone(),
            v: z.clone(),
            eps: z.clone(),
            phases: PhaseSet::zeros(rows, cols, params.initial_means()),
            r: DualState::zeros(params.l, rows, cols, params.tau),
            g: DualState::zeros(params.s, rows, cols, params.tau),
            q: (0..params.n).map(|_| DualState::zeros(params.m, rows, cols, params.tau)).collect(),
            lambda: z,
            mu2: params.mu2,
            mu2_clamps: 0,
            err_u: Vec::new(),
            iteration: 0,
        }
    }

    /// Bias field `u − Σ c_n p_n`.
    pub fn bias(&self) -> Image {
        &self.u - &self.phases.reconstruction()
    }

    /// `b + Σ c_n p_n + v + ε`
    pub fn reconstruction(&self) -> Image {
        let mut out = &self.u + &self.v;
        out += &self.eps;
        out
    }

    /// `f − u − v − ε`
    pub fn residual(&self, f: &Image) -> Image {
        f - &self.reconstruction()
    }
}

/// Largest `c·max|T_v|` kept strictly below `1/α`.
const CLAMP_MARGIN: f64 = 1e-3;

fn texture_target(f: &Image, st: &ShtState, div_g: &Image, p: &ShtParams, mu2: f64) -> Image {
    let k = p.beta / mu2;
    let den = p.alpha + k;
    let mut hv = f - &st.u;
    hv -= &st.eps;
    hv.add_scaled(1.0 / p.beta, &st.lambda);
    hv.scale(k / den);
    hv.add_scaled(p.alpha * p.mu1 / den, div_g);
    hv
}

/// `μ2` satisfying `μ2 = β x / (1 − α x)` with `x = c·max|T_v(μ2)|`.
///
/// `T_v` itself depends on `μ2`, and the right-hand side decreases in `μ2`,
/// so the root is unique and found by bisection on `log μ2`. When `x` would
/// reach `1/α` it is clamped just below.
fn consistent_mu2(f: &Image, st: &mut ShtState, div_g: &Image, p: &ShtParams, c: f64) -> f64 {
    let cap = (1.0 - CLAMP_MARGIN) / p.alpha;
    let state: &ShtState = st;
    let rhs = |mu2: f64| {
        let x = c * texture_target(f, state, div_g, p, mu2).max_abs();
        let xc = x.min(cap);
        (p.beta * xc / (1.0 - p.alpha * xc), x > cap)
    };
    let (mut lo, mut hi) = (-60.0f64, 60.0f64);
    let mu2 = if rhs(lo.exp()).0 <= lo.exp() {
        lo.exp()
    } else if rhs(hi.exp()).0 >= hi.exp() {
        hi.exp()
    } else {
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if rhs(mid.exp()).0 > mid.exp() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi)).exp()
    };
    if rhs(mu2).1 {
        if st.mu2_clamps == 0 {
            log::warn!("adaptive μ2 clamped: c_μ2·max|T_v| reached 1/α");
        }
        st.mu2_clamps += 1;
    }
    mu2
}

pub fn sht_step(st: &mut ShtState, f: &Image, p: &ShtParams) -> Result<()> {
    f.check_dims(st.u.dims())?;
    f.check_finite("input image")?;
    if st.phases.n() != p.n || st.q.len() != p.n {
        return Err(Error::LayerMismatch {
            expected: p.n,
            found: st.q.len().min(st.phases.n()),
        });
    }
    let weight = p.mu4 + p.beta;
    let prev_u = st.u.clone();

    // 1
    let mut h = f - &st.v;
    h -= &st.eps;
    h.add_scaled(1.0 / p.beta, &st.lambda);
    h.scale(p.beta / weight);
    h.add_scaled(p.mu4 / weight, &st.phases.reconstruction());

    // 2–3
    st.u = dtv_l2_step(&mut st.r, &h, weight);

    // 4
    let mut t = st.g.field.div();
    t.scale(p.alpha * p.mu1);
    t -= &st.lambda;
    t.add_scaled(-p.alpha, &st.v);
    let d = crate::diffops::grad(&t, p.s);
    crate::dualsolvers::chambolle_step(&mut st.g, &d);

    // 5
    if p.mu1 == 0.0 {
        st.v = Image::zeros(f.rows(), f.cols());
    } else {
        let div_g = st.g.field.div();
        if let Some(c) = p.c_mu2 {
            st.mu2 = consistent_mu2(f, st, &div_g, p, c);
        }
        let tv = texture_target(f, st, &div_g, p, st.mu2);
        let thr = 1.0 / (p.alpha + p.beta / st.mu2);
        st.v = tv.map(|x| shrink_scalar(x, thr));
    }

    // 6
    let mut e = f - &st.u;
    e -= &st.v;
    e.add_scaled(1.0 / p.beta, &st.lambda);
    st.eps = project_noise(&e, &p.noise)?;

    // 7
    let scores = phase_scores(&st.u, &st.phases.means, p.mu4 / (2.0 * p.mu3), &st.q);
    st.phases.phases = softmax_phases(&scores, p.xi)?;

    // 8
    for (qn, pn) in st.q.iter_mut().zip(&st.phases.phases) {
        phase_dual_step(qn, pn);
    }

    // 9
    st.phases.update_means(&st.u);

    let res = st.residual(f);
    st.lambda.add_scaled(p.beta, &res);
    st.err_u.push(relative_change(&prev_u, &st.u)?);
    st.iteration += 1;

    if !(st.u.is_finite() && st.v.is_finite() && st.lambda.is_finite()) {
        return Err(Error::NonFinite("multiphase state"));
    }
    Ok(())
}

pub fn sht_segment(f: &Image, params: &ShtParams) -> Result<ShtState> {
    params.validate()?;
    let mut st = ShtState::init(f, params);
    for _ in 0..params.iters {
        sht_step(&mut st, f, params)?;
        if let (Some(floor), Some(&last)) = (params.err_floor, st.err_u.last()) {
            if last < floor {
                break;
            }
        }
    }
    Ok(st)
}

/// `Err_u` for a recorded sequence of `u` iterates.
pub fn sht_relative_error_trace(history: &[Image]) -> Result<Vec<f64>> {
    crate::metrics::relative_error_trace(history)
}

/// Hard phases from the relaxed ones by per-pixel argmax.
pub fn sht_binarize(phases: &PhaseSet) -> PhaseSet {
    let (rows, cols) = phases.dims();
    crate::metrics::phases_from_labels(&phases.labels(), rows, cols, phases.means.clone())
        .expect("labels come from the same phase set")
}
