//! Three-part decomposition `f = u + v + ε`: a directional-TV cartoon `u`,
//! a sparse directional texture `v = Σ_a ∂⁺_a g_a` and a residual `ε`
//! confined to a coefficient ball.
//!
//! The solver is an ALM/ADMM loop on the split variables `r = ∇⁺_L u`,
//! `w = g` and `v = Σ ∂⁺ g`. Both linear subproblems are diagonal in the
//! Fourier domain.

use crate::diffops::{bwd, fwd, grad, DirField};
use crate::lattice::Image;
use crate::proximal::{project_noise, shrink_scalar, NoiseBall};
use crate::spectral::Diagonalized;
use crate::{Error, Penalties, Result};

#[derive(Clone, Debug)]
pub struct Dg3pdParams {
    pub l: usize,
    pub s: usize,
    pub c_mu1: f64,
    pub c_mu2: f64,
    pub penalties: Penalties,
    pub noise: NoiseBall,
    pub gamma: f64,
    pub iters: usize,
    /// With `false` the texture channel is switched off and `v` stays zero.
    pub texture: bool,
}

impl Default for Dg3pdParams {
    fn default() -> Self {
        Dg3pdParams {
            l: 9,
            s: 9,
            c_mu1: 0.03,
            c_mu2: 0.03,
            penalties: Penalties::from_theta(0.9, 0.04, 1.0, 1.3).expect("default penalties"),
            noise: NoiseBall::haar(16.0).expect("default noise ball"),
            gamma: 1.0,
            iters: 100,
            texture: true,
        }
    }
}

impl Dg3pdParams {
    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.s == 0 {
            return crate::invalid("direction counts must be at least 1");
        }
        for (name, c) in [("c_μ1", self.c_mu1), ("c_μ2", self.c_mu2)] {
            if !(c >= 0.0) || !c.is_finite() {
                return crate::invalid(format!("{name} must be finite and non-negative, got {c}"));
            }
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return crate::invalid(format!("γ must be positive, got {}", self.gamma));
        }
        self.penalties.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dg3pdState {
    pub u: Image,
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

impl Dg3pdState {
    pub fn zeros(rows: usize, cols: usize, l: usize, s: usize) -> Self {
        let z = Image::zeros(rows, cols);
        Dg3pdState {
            u: z.clone(),
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

    /// Everything zero except `u = f`.
    pub fn new(f: &Image, l: usize, s: usize) -> Self {
        let mut st = Self::zeros(f.rows(), f.cols(), l, s);
        st.u = f.clone();
        st
    }

    pub fn dims(&self) -> (usize, usize) {
        self.u.dims()
    }

    /// `f − u − v − ε`
    pub fn residual(&self, f: &Image) -> Image {
        let mut out = f - &self.u;
        out -= &self.v;
        out -= &self.eps;
        out
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite()
            && self.v.is_finite()
            && self.eps.is_finite()
            && self.r.is_finite()
            && self.g.is_finite()
            && self.lambda1.is_finite()
            && self.lambda2.is_finite()
            && self.lambda3.is_finite()
            && self.lambda4.is_finite()
    }
}

/// A solver bound to one image size.
#[derive(Clone, Debug)]
pub struct Dg3pd {
    params: Dg3pdParams,
    dims: (usize, usize),
    cartoon: Diagonalized,
    texture: Diagonalized,
}

impl Dg3pd {
    pub fn new(params: Dg3pdParams, rows: usize, cols: usize) -> Result<Self> {
        params.validate()?;
        let cartoon = Diagonalized::new(params.l, rows, cols);
        let texture = Diagonalized::new(params.s, rows, cols);
        let pen = params.penalties;
        if !(cartoon.min_denominator(pen.beta4, pen.beta1) > 0.0) {
            return crate::invalid("u-system denominator vanishes");
        }
        if !(texture.min_denominator(pen.beta2, 0.0) > 0.0) {
            return crate::invalid("g-system denominator vanishes");
        }
        Ok(Dg3pd {
            params,
            dims: (rows, cols),
            cartoon,
            texture,
        })
    }

    pub fn params(&self) -> &Dg3pdParams {
        &self.params
    }

    fn check(&self, state: &Dg3pdState, f: &Image) -> Result<()> {
        f.check_dims(self.dims)?;
        state.u.check_dims(self.dims)?;
        f.check_finite("input image")?;
        for (field, k) in [
            (&state.r, self.params.l),
            (&state.lambda1, self.params.l),
            (&state.g, self.params.s),
            (&state.w, self.params.s),
            (&state.lambda2, self.params.s),
        ] {
            if field.k() != k {
                return Err(Error::LayerMismatch {
                    expected: k,
                    found: field.k(),
                });
            }
            if field.dims() != self.dims {
                return Err(Error::DimMismatch {
                    expected: self.dims,
                    found: field.dims(),
                });
            }
        }
        Ok(())
    }

    /// Exact minimizer of the `g_a` subproblem with every other direction
    /// held at its value in `g`.
    pub fn texture_direction(
        &self,
        a: usize,
        g: &DirField,
        w_a: &Image,
        lambda2_a: &Image,
        v: &Image,
        lambda3: &Image,
    ) -> Image {
        let s = self.params.s;
        let pen = self.params.penalties;
        let mut inner = v.clone();
        for (idx, layer) in g.layers().iter().enumerate() {
            if idx != a {
                inner -= &fwd(layer, idx, s);
            }
        }
        inner.add_scaled(1.0 / pen.beta3, lambda3);
        let mut rhs = w_a.clone();
        rhs.scale(pen.beta2);
        rhs += lambda2_a;
        rhs.add_scaled(-pen.beta3, &bwd(&inner, a, s));
        self.texture.solve_one(a, &rhs, pen.beta2, pen.beta3)
    }

    /// Right-hand side of the `u` system
    /// `(β4 + β1 Σ ∂ᵀ∂) u = β4(f − v − ε + λ4/β4) − β1 div⁻(r + λ1/β1)`.
    pub fn cartoon_rhs(&self, state: &Dg3pdState, f: &Image) -> Image {
        let pen = self.params.penalties;
        let mut rhs = f - &state.v;
        rhs -= &state.eps;
        rhs.scale(pen.beta4);
        rhs += &state.lambda4;
        let mut shifted = state.r.scaled(pen.beta1);
        shifted.add_scaled(1.0, &state.lambda1);
        rhs -= &shifted.div();
        rhs
    }

    /// Applies `β4 + β1 Σ ∂ᵀ∂` in the spatial domain.
    pub fn cartoon_operator(&self, u: &Image) -> Image {
        let pen = self.params.penalties;
        let mut out = u.clone();
        out.scale(pen.beta4);
        out.add_scaled(-pen.beta1, &grad(u, self.params.l).div());
        out
    }

    pub fn step(&self, st: &mut Dg3pdState, f: &Image) -> Result<()> {
        self.check(st, f)?;
        let p = &self.params;
        let pen = p.penalties;

        let du = grad(&st.u, p.l);
        for b in 0..p.l {
            st.r[b] = du[b].zip_map(&st.lambda1[b], |d, lam| {
                shrink_scalar(d - lam / pen.beta1, 1.0 / pen.beta1)
            });
        }

        if p.texture {
            for a in 0..p.s {
                let t = st.g[a].zip_map(&st.lambda2[a], |g, lam| g - lam / pen.beta2);
                let thr = p.c_mu1 * t.max_abs();
                st.w[a] = t.map(|x| shrink_scalar(x, thr));
            }
            for a in 0..p.s {
                let ga = self.texture_direction(a, &st.g, &st.w[a], &st.lambda2[a], &st.v, &st.lambda3);
                st.g[a] = ga;
            }
            let synth = st.g.fwd_sum();
            let k3 = pen.beta3 / (pen.beta3 + pen.beta4);
            let k4 = pen.beta4 / (pen.beta3 + pen.beta4);
            let mut t_v = synth.zip_map(&st.lambda3, |x, lam| k3 * (x - lam / pen.beta3));
            let mut data = f - &st.u;
            data -= &st.eps;
            data.add_scaled(1.0 / pen.beta4, &st.lambda4);
            t_v.add_scaled(k4, &data);
            let thr = p.c_mu2 * t_v.max_abs();
            st.v = t_v.map(|x| shrink_scalar(x, thr));
        }

        st.u = self.cartoon.solve_all(&self.cartoon_rhs(st, f), pen.beta4, pen.beta1);

        let mut e = f - &st.u;
        e -= &st.v;
        e.add_scaled(1.0 / pen.beta4, &st.lambda4);
        st.eps = project_noise(&e, &p.noise)?;

        let gamma = p.gamma;
        let du = grad(&st.u, p.l);
        for b in 0..p.l {
            let mut d = st.r[b].clone();
            d -= &du[b];
            st.lambda1[b].add_scaled(gamma * pen.beta1, &d);
        }
        if p.texture {
            for a in 0..p.s {
                let mut d = st.w[a].clone();
                d -= &st.g[a];
                st.lambda2[a].add_scaled(gamma * pen.beta2, &d);
            }
            let mut d = st.v.clone();
            d -= &st.g.fwd_sum();
            st.lambda3.add_scaled(gamma * pen.beta3, &d);
        }
        let res = st.residual(f);
        st.lambda4.add_scaled(gamma * pen.beta4, &res);
        st.iteration += 1;

        if !st.is_finite() {
            return Err(Error::NonFinite("decomposition state"));
        }
        Ok(())
    }
}

/// One iteration with a freshly planned solver.
pub fn dg3pd_step(state: &mut Dg3pdState, f: &Image, params: &Dg3pdParams) -> Result<()> {
    let (rows, cols) = f.dims();
    Dg3pd::new(params.clone(), rows, cols)?.step(state, f)
}

/// Runs `params.iters` iterations from `u = f`; returns `(u, v, ε, state)`.
pub fn dg3pd_decompose(f: &Image, params: &Dg3pdParams) -> Result<(Image, Image, Image, Dg3pdState)> {
    let (rows, cols) = f.dims();
    let solver = Dg3pd::new(params.clone(), rows, cols)?;
    let mut st = Dg3pdState::new(f, params.l, params.s);
    for _ in 0..params.iters {
        solver.step(&mut st, f)?;
    }
    Ok((st.u.clone(), st.v.clone(), st.eps.clone(), st))
}
