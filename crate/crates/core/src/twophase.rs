//! Two-phase piecewise-constant segmentation with texture and residual:
//! `f = c1·p + c2·(1 − p) + v + ε` with `p` relaxed to `[0, 1]`.

use crate::diffops::{bwd, fwd, grad, DirField};
use crate::dualsolvers::EMPTY_PHASE_FRACTION;
use crate::lattice::Image;
use crate::proximal::{clip_unit, project_noise, shrink_scalar, NoiseBall};
use crate::spectral::Diagonalized;
use crate::{Error, Penalties, Result};

/// How an ℓ1 weight is chosen each iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    /// A fixed weight `μ`.
    Fixed(f64),
    /// `c · max|t|` of the quantity being shrunk.
    Adaptive(f64),
}

impl Threshold {
    fn validate(&self) -> Result<()> {
        let (Threshold::Fixed(x) | Threshold::Adaptive(x)) = *self;
        if x >= 0.0 && x.is_finite() {
            Ok(())
        } else {
            crate::invalid(format!("threshold weight must be finite and non-negative, got {x}"))
        }
    }

    /// Shrink level for `t` when the fixed weight is divided by `scale`.
    fn level(&self, t: &Image, scale: f64) -> f64 {
        match *self {
            Threshold::Fixed(mu) => mu / scale,
            Threshold::Adaptive(c) => c * t.max_abs(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TwoPhaseParams {
    pub l: usize,
    pub s: usize,
    pub penalties: Penalties,
    pub mu1: Threshold,
    pub mu2: Threshold,
    pub noise: NoiseBall,
    pub gamma: f64,
    pub iters: usize,
}

impl Default for TwoPhaseParams {
    fn default() -> Self {
        TwoPhaseParams {
            l: 150,
            s: 9,
            penalties: Penalties::from_theta(0.9, 0.03, 1.0, 1.3).expect("default penalties"),
            mu1: Threshold::Adaptive(0.03),
            mu2: Threshold::Adaptive(0.03),
            noise: NoiseBall::haar(10.0).expect("default noise ball"),
            gamma: 1.0,
            iters: 100,
        }
    }
}

impl TwoPhaseParams {
    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.s == 0 {
            return crate::invalid("direction counts must be at least 1");
        }
        self.mu1.validate()?;
        self.mu2.validate()?;
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return crate::invalid(format!("γ must be positive, got {}", self.gamma));
        }
        self.penalties.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoPhaseState {
    pub p: Image,
    pub c1: f64,
    pub c2: f64,
    pub v: Image,
    pub eps: Image,
    pub r: DirField,
    pub w: DirField,
    pub g: DirField,
    pub lambda1: DirField,
    pub lambda2: DirField,
    pub lambda3: Image,
    pub lambda4: Image,
    pub iteration: usize,
}

impl TwoPhaseState {
    /// `p` starts as the indicator of `f > mean(f)` and `c1`, `c2` as the
    /// means of the two sides; every other field is zero.
    pub fn init(f: &Image, l: usize, s: usize) -> Self {
        let (rows, cols) = f.dims();
        let m = f.mean();
        let p = f.map(|x| if x > m { 1.0 } else { 0.0 });
        let mass = p.sum();
        let total = f.len() as f64;
        let c1 = if mass > 0.0 { f.dot(&p) / mass } else { m };
        let c2 = if mass < total {
            (f.sum() - f.dot(&p)) / (total - mass)
        } else {
            m
        };
        let z = Image::zeros(rows, cols);
        TwoPhaseState {
            p,
            c1,
            c2,
            v: z.clone(),
            eps: z.clone(),
            r: DirField::zeros(l, rows, cols),
            w: DirField::zeros(s, rows, cols),
            g: DirField::zeros(s, rows, cols),
            lambda1: DirField::zeros(l, rows, cols),
            lambda2: DirField::zeros(s, rows, cols),
            lambda3: z.clone(),
            lambda4: z,
            iteration: 0,
        }
    }

    /// `c1·p + c2·(1 − p)`
    pub fn piecewise_constant(&self) -> Image {
        let (c1, c2) = (self.c1, self.c2);
        self.p.map(|p| c1 * p + c2 * (1.0 - p))
    }

    /// `f − c1·p − c2·(1 − p) − v − ε`
    pub fn residual(&self, f: &Image) -> Image {
        let mut out = f - &self.piecewise_constant();
        out -= &self.v;
        out -= &self.eps;
        out
    }
}

#[derive(Clone, Debug)]
pub struct TwoPhase {
    params: TwoPhaseParams,
    dims: (usize, usize),
    phase: Diagonalized,
    texture: Diagonalized,
}

impl TwoPhase {
    pub fn new(params: TwoPhaseParams, rows: usize, cols: usize) -> Result<Self> {
        params.validate()?;
        let phase = Diagonalized::new(params.l, rows, cols);
        let texture = Diagonalized::new(params.s, rows, cols);
        let pen = params.penalties;
        let x_min = phase.min_denominator(pen.beta4, pen.beta1);
        if !(x_min >= pen.beta4) {
            return crate::invalid("p-system denominator falls below β4");
        }
        Ok(TwoPhase {
            params,
            dims: (rows, cols),
            phase,
            texture,
        })
    }

    pub fn params(&self) -> &TwoPhaseParams {
        &self.params
    }

    /// Smallest value of the `p`-system spectrum `β4 + β1 Σ|sym_l|²`.
    pub fn min_phase_denominator(&self) -> f64 {
        let pen = self.params.penalties;
        self.phase.min_denominator(pen.beta4, pen.beta1)
    }

    /// Exact `g_a` update against the current values of the other directions.
    fn texture_direction(&self, a: usize, st: &TwoPhaseState) -> Image {
        let s = self.params.s;
        let pen = self.params.penalties;
        let mut inner = st.v.clone();
        for (idx, layer) in st.g.layers().iter().enumerate() {
            if idx != a {
                inner -= &fwd(layer, idx, s);
            }
        }
        inner.add_scaled(1.0 / pen.beta3, &st.lambda3);
        let mut rhs = st.w[a].clone();
        rhs.scale(pen.beta2);
        rhs += &st.lambda2[a];
        rhs.add_scaled(-pen.beta3, &bwd(&inner, a, s));
        self.texture.solve_one(a, &rhs, pen.beta2, pen.beta3)
    }

    pub fn step(&self, st: &mut TwoPhaseState, f: &Image) -> Result<()> {
        f.check_dims(self.dims)?;
        st.p.check_dims(self.dims)?;
        f.check_finite("input image")?;
        for (field, k) in [(&st.r, self.params.l), (&st.lambda1, self.params.l), (&st.g, self.params.s)] {
            if field.k() != k {
                return Err(Error::LayerMismatch {
                    expected: k,
                    found: field.k(),
                });
            }
        }
        let p = &self.params;
        let pen = p.penalties;

        // 1–2: region means of z = f − v − ε + λ4/β4
        let mut z = f - &st.v;
        z -= &st.eps;
        z.add_scaled(1.0 / pen.beta4, &st.lambda4);
        let total = f.len() as f64;
        let floor = EMPTY_PHASE_FRACTION * total;
        let mass = st.p.sum();
        let zp = z.dot(&st.p);
        if mass >= floor {
            st.c1 = zp / mass;
        }
        if total - mass >= floor {
            st.c2 = (z.sum() - zp) / (total - mass);
        }

        // 3
        let dp = grad(&st.p, p.l);
        for a in 0..p.l {
            st.r[a] = dp[a].zip_map(&st.lambda1[a], |d, lam| {
                shrink_scalar(d - lam / pen.beta1, 1.0 / pen.beta1)
            });
        }

        // 4
        for a in 0..p.s {
            let t = st.g[a].zip_map(&st.lambda2[a], |g, lam| g - lam / pen.beta2);
            let thr = p.mu1.level(&t, pen.beta2);
            st.w[a] = t.map(|x| shrink_scalar(x, thr));
        }

        // 5
        for a in 0..p.s {
            st.g[a] = self.texture_direction(a, st);
        }

        // 6
        let k3 = pen.beta3 / (pen.beta3 + pen.beta4);
        let k4 = pen.beta4 / (pen.beta3 + pen.beta4);
        let cbar = st.piecewise_constant();
        let mut j = st.g.fwd_sum().zip_map(&st.lambda3, |x, lam| k3 * (x - lam / pen.beta3));
        let mut data = f - &cbar;
        data -= &st.eps;
        data.add_scaled(1.0 / pen.beta4, &st.lambda4);
        j.add_scaled(k4, &data);
        let thr = p.mu2.level(&j, pen.beta3 + pen.beta4);
        st.v = j.map(|x| shrink_scalar(x, thr));

        // 7
        let mut zv = f - &st.v;
        zv -= &st.eps;
        zv.add_scaled(1.0 / pen.beta4, &st.lambda4);
        let (c1, c2) = (st.c1, st.c2);
        let h = zv.map(|x| 0.5 * ((x - c2) * (x - c2) - (x - c1) * (x - c1)));
        let mut shifted = st.r.scaled(pen.beta1);
        shifted.add_scaled(1.0, &st.lambda1);
        let mut rhs = h;
        rhs.scale(pen.beta4);
        rhs -= &shifted.div();
        st.p = clip_unit(&self.phase.solve_all(&rhs, pen.beta4, pen.beta1));

        // 8
        let mut e = f - &st.piecewise_constant();
        e -= &st.v;
        e.add_scaled(1.0 / pen.beta4, &st.lambda4);
        st.eps = project_noise(&e, &p.noise)?;

        // II
        let gamma = p.gamma;
        let dp = grad(&st.p, p.l);
        for a in 0..p.l {
            let mut d = st.r[a].clone();
            d -= &dp[a];
            st.lambda1[a].add_scaled(gamma * pen.beta1, &d);
        }
        for a in 0..p.s {
            let mut d = st.w[a].clone();
            d -= &st.g[a];
            st.lambda2[a].add_scaled(gamma * pen.beta2, &d);
        }
        let mut d = st.v.clone();
        d -= &st.g.fwd_sum();
        st.lambda3.add_scaled(gamma * pen.beta3, &d);
        let res = st.residual(f);
        st.lambda4.add_scaled(gamma * pen.beta4, &res);
        st.iteration += 1;

        if !(st.p.is_finite() && st.v.is_finite() && st.lambda4.is_finite() && st.c1.is_finite() && st.c2.is_finite()) {
            return Err(Error::NonFinite("two-phase state"));
        }
        Ok(())
    }
}

pub fn twophase_segment(f: &Image, params: &TwoPhaseParams) -> Result<TwoPhaseState> {
    let (rows, cols) = f.dims();
    let solver = TwoPhase::new(params.clone(), rows, cols)?;
    let mut st = TwoPhaseState::init(f, params.l, params.s);
    for _ in 0..params.iters {
        solver.step(&mut st, f)?;
    }
    Ok(st)
}

/// `1` where `p ≥ threshold`, else `0`.
pub fn twophase_binarize(state: &TwoPhaseState, threshold: f64) -> Result<Image> {
    binarize(&state.p, threshold)
}

pub fn binarize(p: &Image, threshold: f64) -> Result<Image> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return crate::invalid(format!("threshold must lie in (0, 1), got {threshold}"));
    }
    Ok(p.map(|x| if x >= threshold { 1.0 } else { 0.0 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quick() -> TwoPhaseParams {
        TwoPhaseParams {
            l: 8,
            s: 4,
            iters: 30,
            ..TwoPhaseParams::default()
        }
    }

    #[test]
    fn binarize_rules() {
        let p = Image::constant(3, 3, 0.9);
        assert_eq!(binarize(&p, 0.5).unwrap().min(), 1.0);
        let p = Image::constant(3, 3, 0.5);
        assert_eq!(binarize(&p, 0.5).unwrap().min(), 1.0);
        assert!(binarize(&p, 1.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Image::from_fn(5, 5, |_, _| rng.gen());
        let once = binarize(&p, 0.3).unwrap();
        assert_eq!(binarize(&once, 0.3).unwrap(), once);
    }

    #[test]
    fn constant_image() {
        let f = Image::constant(16, 16, 120.0);
        let params = TwoPhaseParams {
            noise: NoiseBall::haar(0.0).unwrap(),
            ..quick()
        };
        let st = twophase_segment(&f, &params).unwrap();
        assert!(st.v.max_abs() < 1e-9);
        assert!(st.eps.max_abs() < 1e-9);
        assert!((st.c1 - 120.0).abs() < 1e-6 && (st.c2 - 120.0).abs() < 1e-6);
        let err = (&f - &st.piecewise_constant()).norm() / f.norm();
        assert!(err < 1e-6);
    }

    #[test]
    fn denominator_floor() {
        let solver = TwoPhase::new(quick(), 8, 6).unwrap();
        assert!(solver.min_phase_denominator() >= quick().penalties.beta4);
    }

    #[test]
    fn multiplier_updates_match_hand_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = Image::from_fn(4, 4, |_, _| rng.gen_range(0.0..255.0));
        let params = TwoPhaseParams { l: 3, s: 2, ..quick() };
        let solver = TwoPhase::new(params.clone(), 4, 4).unwrap();
        let mut st = TwoPhaseState::init(&f, 3, 2);
        solver.step(&mut st, &f).unwrap();
        let before = st.clone();
        solver.step(&mut st, &f).unwrap();
        let pen = params.penalties;
        for idx in 0..16 {
            let cbar = st.c1 * st.p.as_slice()[idx] + st.c2 * (1.0 - st.p.as_slice()[idx]);
            let res = f.as_slice()[idx] - cbar - st.v.as_slice()[idx] - st.eps.as_slice()[idx];
            let want = before.lambda4.as_slice()[idx] + pen.beta4 * res;
            assert!((st.lambda4.as_slice()[idx] - want).abs() < 1e-9);
            let synth: f64 = (0..2).map(|a| fwd(&st.g[a], a, 2).as_slice()[idx]).sum();
            let want3 = before.lambda3.as_slice()[idx] + pen.beta3 * (st.v.as_slice()[idx] - synth);
            assert!((st.lambda3.as_slice()[idx] - want3).abs() < 1e-9);
            for a in 0..2 {
                let want2 = before.lambda2[a].as_slice()[idx]
                    + pen.beta2 * (st.w[a].as_slice()[idx] - st.g[a].as_slice()[idx]);
                assert!((st.lambda2[a].as_slice()[idx] - want2).abs() < 1e-9);
            }
            for b in 0..3 {
                let dp = fwd(&st.p, b, 3).as_slice()[idx];
                let want1 = before.lambda1[b].as_slice()[idx] + pen.beta1 * (st.r[b].as_slice()[idx] - dp);
                assert!((st.lambda1[b].as_slice()[idx] - want1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn invariants_each_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = Image::from_fn(16, 16, |i, _| if i < 8 { 200.0 } else { 60.0 } + rng.gen_range(-30.0..30.0));
        let params = quick();
        let solver = TwoPhase::new(params.clone(), 16, 16).unwrap();
        let mut st = TwoPhaseState::init(&f, params.l, params.s);
        for _ in 0..20 {
            solver.step(&mut st, &f).unwrap();
            assert!(st.p.min() >= 0.0 && st.p.max() <= 1.0);
            assert!(params.noise.coefficient_sup(&st.eps).unwrap() <= params.noise.nu + 1e-9);
        }
    }
}
