//! Directional differences, directional gradient and divergence.
//!
//! Direction `l` of `K` has angle `πl/K`. The forward difference is
//! `∂⁺_l f = sin(πl/K)·D1 f + cos(πl/K)·f D2ᵀ` and the backward one is
//! `∂⁻_l f = −[sin(πl/K)·D1ᵀ f + cos(πl/K)·f D2]`, so that
//! `⟨∇⁺f, g⟩ = −⟨f, div⁻ g⟩`.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::lattice::{unit_root, Image};
use crate::{Error, Result};

/// An ordered stack of `K` images, one per direction.
#[derive(Clone, Debug, PartialEq)]
pub struct DirField {
    layers: Vec<Image>,
}

impl DirField {
    pub fn zeros(k: usize, rows: usize, cols: usize) -> Self {
        assert!(k >= 1, "a direction field needs at least one layer");
        DirField {
            layers: vec![Image::zeros(rows, cols); k],
        }
    }

    pub fn from_layers(layers: Vec<Image>) -> Result<Self> {
        let first = match layers.first() {
            Some(l) => l.dims(),
            None => return crate::invalid("a direction field needs at least one layer"),
        };
        for l in &layers {
            l.check_dims(first)?;
        }
        Ok(DirField { layers })
    }

    pub fn k(&self) -> usize {
        self.layers.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.layers[0].dims()
    }

    pub fn layers(&self) -> &[Image] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Image] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Image> {
        self.layers
    }

    /// Per-pixel Euclidean norm across layers.
    pub fn magnitude(&self) -> Image {
        let (rows, cols) = self.dims();
        let mut out = Image::zeros(rows, cols);
        for layer in &self.layers {
            for (m, &x) in out.as_mut_slice().iter_mut().zip(layer.as_slice()) {
                *m += x * x;
            }
        }
        out.as_mut_slice().iter_mut().for_each(|m| *m = m.sqrt());
        out
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitude().max()
    }

    /// Sum over pixels of the per-pixel magnitude.
    pub fn norm_l1(&self) -> f64 {
        self.magnitude().sum()
    }

    pub fn dot(&self, other: &DirField) -> f64 {
        assert_eq!(self.k(), other.k(), "layer counts differ");
        self.layers.iter().zip(&other.layers).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn add_scaled(&mut self, a: f64, other: &DirField) {
        assert_eq!(self.k(), other.k(), "layer counts differ");
        for (x, y) in self.layers.iter_mut().zip(&other.layers) {
            x.add_scaled(a, y);
        }
    }

    pub fn scaled(&self, a: f64) -> DirField {
        DirField {
            layers: self.layers.iter().map(|l| l * a).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Image::is_finite)
    }

    /// Pulls every per-pixel vector longer than one back onto the unit sphere.
    pub fn renormalize_unit_ball(&mut self) {
        let mag = self.magnitude();
        for (idx, &m) in mag.as_slice().iter().enumerate() {
            if m > 1.0 {
                for layer in &mut self.layers {
                    layer.as_mut_slice()[idx] /= m;
                }
            }
        }
    }

    /// Divergence `Σ_l ∂⁻_l g_l` with `K` taken from the layer count.
    pub fn div(&self) -> Image {
        let k = self.k();
        let mut out = Image::zeros(self.dims().0, self.dims().1);
        for (l, layer) in self.layers.iter().enumerate() {
            let (s, c) = direction(l, k);
            bwd_accumulate(layer, s, c, &mut out);
        }
        out
    }

    /// Texture synthesis `Σ_l ∂⁺_l g_l`.
    pub fn fwd_sum(&self) -> Image {
        let k = self.k();
        let mut out = Image::zeros(self.dims().0, self.dims().1);
        for (l, layer) in self.layers.iter().enumerate() {
            let (s, c) = direction(l, k);
            fwd_accumulate(layer, s, c, &mut out);
        }
        out
    }
}

impl Index<usize> for DirField {
    type Output = Image;
    fn index(&self, l: usize) -> &Image {
        &self.layers[l]
    }
}

impl IndexMut<usize> for DirField {
    fn index_mut(&mut self, l: usize) -> &mut Image {
        &mut self.layers[l]
    }
}

/// `(sin(πl/K), cos(πl/K))`, exact on the axes.
pub fn direction(l: usize, k: usize) -> (f64, f64) {
    if l == 0 {
        (0.0, 1.0)
    } else if 2 * l == k {
        (1.0, 0.0)
    } else {
        let t = std::f64::consts::PI * l as f64 / k as f64;
        (t.sin(), t.cos())
    }
}

fn fwd_accumulate(f: &Image, s: f64, c: f64, out: &mut Image) {
    let (rows, cols) = f.dims();
    let x = f.as_slice();
    let o = out.as_mut_slice();
    for i in 0..rows {
        let ip = if i + 1 == rows { 0 } else { i + 1 };
        for j in 0..cols {
            let jp = if j + 1 == cols { 0 } else { j + 1 };
            let here = x[i * cols + j];
            o[i * cols + j] += s * (x[ip * cols + j] - here) + c * (x[i * cols + jp] - here);
        }
    }
}

fn bwd_accumulate(f: &Image, s: f64, c: f64, out: &mut Image) {
    let (rows, cols) = f.dims();
    let x = f.as_slice();
    let o = out.as_mut_slice();
    for i in 0..rows {
        let im = if i == 0 { rows - 1 } else { i - 1 };
        for j in 0..cols {
            let jm = if j == 0 { cols - 1 } else { j - 1 };
            let here = x[i * cols + j];
            o[i * cols + j] += s * (here - x[im * cols + j]) + c * (here - x[i * cols + jm]);
        }
    }
}

fn check_direction(l: usize, k: usize) -> Result<()> {
    if l < k {
        Ok(())
    } else {
        Err(Error::DirectionOutOfRange { index: l, count: k })
    }
}

pub fn dir_fwd_diff(f: &Image, l: usize, k: usize) -> Result<Image> {
    check_direction(l, k)?;
    Ok(fwd(f, l, k))
}

pub fn dir_bwd_diff(f: &Image, l: usize, k: usize) -> Result<Image> {
    check_direction(l, k)?;
    let (s, c) = direction(l, k);
    let mut out = Image::zeros(f.rows(), f.cols());
    bwd_accumulate(f, s, c, &mut out);
    Ok(out)
}

pub(crate) fn fwd(f: &Image, l: usize, k: usize) -> Image {
    let (s, c) = direction(l, k);
    let mut out = Image::zeros(f.rows(), f.cols());
    fwd_accumulate(f, s, c, &mut out);
    out
}

pub(crate) fn bwd(f: &Image, l: usize, k: usize) -> Image {
    let (s, c) = direction(l, k);
    let mut out = Image::zeros(f.rows(), f.cols());
    bwd_accumulate(f, s, c, &mut out);
    out
}

/// `∇⁺_K f`, layer `l` being `∂⁺_l f`.
pub fn dir_grad(f: &Image, k: usize) -> Result<DirField> {
    if k == 0 {
        return crate::invalid("direction count must be at least 1");
    }
    Ok(grad(f, k))
}

pub(crate) fn grad(f: &Image, k: usize) -> DirField {
    let layers = (0..k).into_par_iter().map(|l| fwd(f, l, k)).collect();
    DirField { layers }
}

/// `div⁻_K g = Σ_l ∂⁻_l g_l`.
pub fn dir_div(g: &DirField, k: usize) -> Result<Image> {
    if g.k() != k {
        return Err(Error::LayerMismatch {
            expected: k,
            found: g.k(),
        });
    }
    Ok(g.div())
}

/// `⟨∇⁺_K f, g⟩ + ⟨f, div⁻_K g⟩`, zero up to rounding.
pub fn adjoint_residual(f: &Image, g: &DirField, k: usize) -> Result<f64> {
    f.check_dims(g.dims())?;
    let div = dir_div(g, k)?;
    Ok(grad(f, k).dot(g) + f.dot(&div))
}

/// Isotropic directional TV `Σ_k |∇⁺_K f[k]|`.
pub fn dtv_norm(f: &Image, k: usize) -> f64 {
    grad(f, k).norm_l1()
}

/// Frequency responses of the `K` forward differences,
/// `sin(πl/K)(z1 − 1) + cos(πl/K)(z2 − 1)`.
#[derive(Clone, Debug)]
pub struct DirSymbols {
    rows: usize,
    cols: usize,
    symbols: Vec<Vec<Complex64>>,
}

impl DirSymbols {
    pub fn new(k: usize, rows: usize, cols: usize) -> Self {
        let z1: Vec<Complex64> = (0..rows).map(|a| unit_root(a, rows) - 1.0).collect();
        let z2: Vec<Complex64> = (0..cols).map(|b| unit_root(b, cols) - 1.0).collect();
        let symbols = (0..k)
            .map(|l| {
                let (s, c) = direction(l, k);
                let mut out = Vec::with_capacity(rows * cols);
                for a in 0..rows {
                    for b in 0..cols {
                        out.push(s * z1[a] + c * z2[b]);
                    }
                }
                out
            })
            .collect();
        DirSymbols { rows, cols, symbols }
    }

    pub fn k(&self) -> usize {
        self.symbols.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn symbol(&self, l: usize) -> &[Complex64] {
        &self.symbols[l]
    }

    /// `Σ_l |symbol_l|²` per frequency.
    pub fn energy(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for s in &self.symbols {
            for (o, z) in out.iter_mut().zip(s) {
                *o += z.norm_sqr();
            }
        }
        out
    }
}
