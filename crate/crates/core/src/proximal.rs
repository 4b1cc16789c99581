//! Element-wise proximal maps and projections.
//!
//! `shrink` is soft-thresholding. `cst` soft-thresholds the coefficients of an
//! invertible transform, and `project_noise` is the Euclidean projection onto
//! the coefficient box `{ε : ‖T ε‖_∞ ≤ ν}` when `T` is orthonormal.

use std::fmt::Debug;
use std::sync::Arc;

use crate::lattice::Image;
use crate::{Error, Result};

pub fn shrink_scalar(x: f64, tau: f64) -> f64 {
    let m = x.abs() - tau;
    if m > 0.0 {
        m.copysign(x)
    } else {
        0.0
    }
}

/// `sign(x)·max(|x| − τ, 0)` per element.
pub fn shrink(x: &Image, tau: f64) -> Result<Image> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return crate::invalid(format!("shrink threshold must be finite and non-negative, got {tau}"));
    }
    Ok(x.map(|v| shrink_scalar(v, tau)))
}

/// An invertible linear map on images of a fixed size.
pub trait CoefficientTransform: Debug + Send + Sync {
    fn forward(&self, x: &Image) -> Result<Image>;
    fn inverse(&self, coeffs: &Image) -> Result<Image>;
    /// Whether the transform preserves inner products.
    fn is_orthonormal(&self) -> bool;
}

/// Pixel-domain transform; the noise set becomes a plain amplitude box.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityTransform;

impl CoefficientTransform for IdentityTransform {
    fn forward(&self, x: &Image) -> Result<Image> {
        Ok(x.clone())
    }

    fn inverse(&self, coeffs: &Image) -> Result<Image> {
        Ok(coeffs.clone())
    }

    fn is_orthonormal(&self) -> bool {
        true
    }
}

/// Orthonormal separable Haar wavelet with a Mallat layout.
///
/// Each level splits the current low-pass block along every axis whose
/// length is even, so odd sizes are handled by stopping early on that axis.
/// `max_levels = None` keeps splitting while any axis can be halved.
#[derive(Clone, Copy, Debug, Default)]
pub struct HaarTransform {
    pub max_levels: Option<usize>,
}

#[derive(Clone, Copy, Debug)]
struct HaarLevel {
    rows: usize,
    cols: usize,
    split_rows: bool,
    split_cols: bool,
}

impl HaarTransform {
    pub fn new(max_levels: Option<usize>) -> Self {
        HaarTransform { max_levels }
    }

    fn schedule(&self, rows: usize, cols: usize) -> Vec<HaarLevel> {
        let mut out = Vec::new();
        let (mut r, mut c) = (rows, cols);
        while self.max_levels.map_or(true, |m| out.len() < m) {
            let split_rows = r >= 2 && r % 2 == 0;
            let split_cols = c >= 2 && c % 2 == 0;
            if !split_rows && !split_cols {
                break;
            }
            out.push(HaarLevel { rows: r, cols: c, split_rows, split_cols });
            if split_rows {
                r /= 2;
            }
            if split_cols {
                c /= 2;
            }
        }
        out
    }

    /// Number of levels applied to an image of the given size.
    pub fn levels(&self, rows: usize, cols: usize) -> usize {
        self.schedule(rows, cols).len()
    }
}

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn haar_fwd_1d(buf: &mut [f64], tmp: &mut Vec<f64>) {
    let h = buf.len() / 2;
    tmp.clear();
    tmp.extend_from_slice(buf);
    for i in 0..h {
        let (a, b) = (tmp[2 * i], tmp[2 * i + 1]);
        buf[i] = (a + b) * SQRT_HALF;
        buf[h + i] = (a - b) * SQRT_HALF;
    }
}

fn haar_inv_1d(buf: &mut [f64], tmp: &mut Vec<f64>) {
    let h = buf.len() / 2;
    tmp.clear();
    tmp.extend_from_slice(buf);
    for i in 0..h {
        let (s, d) = (tmp[i], tmp[h + i]);
        buf[2 * i] = (s + d) * SQRT_HALF;
        buf[2 * i + 1] = (s - d) * SQRT_HALF;
    }
}

fn for_each_column(x: &mut Image, rows: usize, cols: usize, mut f: impl FnMut(&mut [f64])) {
    let stride = x.cols();
    let data = x.as_mut_slice();
    let mut col = vec![0.0; rows];
    for j in 0..cols {
        for i in 0..rows {
            col[i] = data[i * stride + j];
        }
        f(&mut col);
        for i in 0..rows {
            data[i * stride + j] = col[i];
        }
    }
}

impl CoefficientTransform for HaarTransform {
    fn forward(&self, x: &Image) -> Result<Image> {
        let mut out = x.clone();
        let stride = x.cols();
        let mut tmp = Vec::new();
        for lv in self.schedule(x.rows(), x.cols()) {
            if lv.split_cols {
                for i in 0..lv.rows {
                    let row = &mut out.as_mut_slice()[i * stride..i * stride + lv.cols];
                    haar_fwd_1d(row, &mut tmp);
                }
            }
            if lv.split_rows {
                for_each_column(&mut out, lv.rows, lv.cols, |c| haar_fwd_1d(c, &mut tmp));
            }
        }
        Ok(out)
    }

    fn inverse(&self, coeffs: &Image) -> Result<Image> {
        let mut out = coeffs.clone();
        let stride = coeffs.cols();
        let mut tmp = Vec::new();
        for lv in self.schedule(coeffs.rows(), coeffs.cols()).into_iter().rev() {
            if lv.split_rows {
                for_each_column(&mut out, lv.rows, lv.cols, |c| haar_inv_1d(c, &mut tmp));
            }
            if lv.split_cols {
                for i in 0..lv.rows {
                    let row = &mut out.as_mut_slice()[i * stride..i * stride + lv.cols];
                    haar_inv_1d(row, &mut tmp);
                }
            }
        }
        Ok(out)
    }

    fn is_orthonormal(&self) -> bool {
        true
    }
}

/// The residual set `{ε : ‖T ε‖_∞ ≤ ν}`.
#[derive(Clone, Debug)]
pub struct NoiseBall {
    pub nu: f64,
    pub transform: Arc<dyn CoefficientTransform>,
}

impl NoiseBall {
    pub fn new(nu: f64, transform: Arc<dyn CoefficientTransform>) -> Result<Self> {
        if !(nu >= 0.0) || !nu.is_finite() {
            return crate::invalid(format!("noise radius must be finite and non-negative, got {nu}"));
        }
        Ok(NoiseBall { nu, transform })
    }

    pub fn haar(nu: f64) -> Result<Self> {
        Self::new(nu, Arc::new(HaarTransform::default()))
    }

    /// `‖T ε‖_∞`
    pub fn coefficient_sup(&self, eps: &Image) -> Result<f64> {
        Ok(self.transform.forward(eps)?.max_abs())
    }
}

/// `T⁻¹(shrink(T x, ν))`
pub fn cst(x: &Image, nu: f64, t: &dyn CoefficientTransform) -> Result<Image> {
    if !(nu >= 0.0) {
        return crate::invalid(format!("threshold must be non-negative, got {nu}"));
    }
    let coeffs = t.forward(x)?;
    t.inverse(&coeffs.map(|c| shrink_scalar(c, nu)))
}

/// `x − cst(x, ν)`, evaluated as `T⁻¹(clip(T x, −ν, ν))`.
pub fn project_noise(x: &Image, ball: &NoiseBall) -> Result<Image> {
    let nu = ball.nu;
    let coeffs = ball.transform.forward(x)?;
    ball.transform.inverse(&coeffs.map(|c| c.clamp(-nu, nu)))
}

pub fn clip_unit(x: &Image) -> Image {
    x.map(|v| v.clamp(0.0, 1.0))
}

/// Per-pixel softmax of `−score/ξ` across the `N` score images.
///
/// Weights that underflow are floored at the smallest normal double so every
/// phase keeps a strictly positive share.
pub fn softmax_phases(scores: &[Image], xi: f64) -> Result<Vec<Image>> {
    if !(xi > 0.0) || !xi.is_finite() {
        return crate::invalid(format!("smoothing ξ must be positive, got {xi}"));
    }
    if scores.len() < 2 {
        return crate::invalid("at least two phases are required");
    }
    let dims = scores[0].dims();
    for s in scores {
        s.check_dims(dims)?;
        s.check_finite("phase scores")?;
    }
    let n = scores.len();
    let mut out: Vec<Image> = vec![Image::zeros(dims.0, dims.1); n];
    let mut w = vec![0.0; n];
    for idx in 0..scores[0].len() {
        let m = scores.iter().map(|s| s.as_slice()[idx]).fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for (wi, s) in w.iter_mut().zip(scores) {
            *wi = (-(s.as_slice()[idx] - m) / xi).exp();
            total += *wi;
        }
        for (p, wi) in out.iter_mut().zip(&w) {
            p.as_mut_slice()[idx] = (wi / total).max(f64::MIN_POSITIVE);
        }
    }
    Ok(out)
}

/// `−ξ log Σ_n exp(−score_n/ξ)` per pixel, the smoothed minimum.
pub fn smoothed_min(scores: &[Image], xi: f64) -> Result<Image> {
    if !(xi > 0.0) {
        return crate::invalid(format!("smoothing ξ must be positive, got {xi}"));
    }
    if scores.is_empty() {
        return Err(Error::LayerMismatch { expected: 1, found: 0 });
    }
    let (rows, cols) = scores[0].dims();
    Ok(Image::from_fn(rows, cols, |i, j| {
        let m = scores.iter().map(|s| s[(i, j)]).fold(f64::INFINITY, f64::min);
        let total: f64 = scores.iter().map(|s| (-(s[(i, j)] - m) / xi).exp()).sum();
        m - xi * total.ln()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, rows: usize, cols: usize, amp: f64) -> Image {
        Image::from_fn(rows, cols, |_, _| rng.gen_range(-amp..amp))
    }

    #[test]
    fn shrink_closed_forms() {
        assert_eq!(shrink_scalar(3.0, 1.0), 2.0);
        assert_eq!(shrink_scalar(-3.0, 1.0), -2.0);
        assert_eq!(shrink_scalar(-0.5, 1.0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let x = random_image(&mut rng, 4, 4, 1.0);
        assert_eq!(shrink(&x, 0.0).unwrap(), x);
        assert!(shrink(&x, -1.0).is_err());
    }

    #[test]
    fn haar_is_orthonormal_and_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &(r, c) in &[(8, 8), (6, 10), (7, 4), (5, 5), (64, 48), (1, 2)] {
            let t = HaarTransform::default();
            let x = random_image(&mut rng, r, c, 1.0);
            let y = t.forward(&x).unwrap();
            assert_abs_diff_eq!(x.norm(), y.norm(), epsilon = 1e-12);
            assert!((&t.inverse(&y).unwrap() - &x).max_abs() < 1e-13);
        }
        assert_eq!(HaarTransform::default().levels(8, 8), 3);
        assert_eq!(HaarTransform::default().levels(12, 5), 2);
        assert_eq!(HaarTransform::new(Some(1)).levels(8, 8), 1);
    }

    #[test]
    fn haar_of_constant_concentrates_in_one_coefficient() {
        let t = HaarTransform::default();
        let y = t.forward(&Image::constant(4, 4, 1.0)).unwrap();
        assert_abs_diff_eq!(y[(0, 0)], 4.0, epsilon = 1e-14);
        assert!(y.as_slice()[1..].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn haar_one_level_matches_hand_computation() {
        let x = Image::from_rows(&[&[1.0, 3.0], &[5.0, 11.0]]).unwrap();
        let y = HaarTransform::default().forward(&x).unwrap();
        let want = Image::from_rows(&[&[10.0, -4.0], &[-6.0, 2.0]]).unwrap();
        assert!((&y - &want).max_abs() < 1e-14);
    }

    #[test]
    fn cst_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let t = HaarTransform::default();
        let x = random_image(&mut rng, 8, 8, 2.0);
        assert!((&cst(&x, 0.0, &t).unwrap() - &x).max_abs() < 1e-13);
        let big = t.forward(&x).unwrap().max_abs();
        assert_eq!(cst(&x, big, &t).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn projection_clips_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let t = HaarTransform::default();
        let ball = NoiseBall::haar(0.5).unwrap();
        let x = random_image(&mut rng, 8, 8, 2.0);
        let eps = &x - &cst(&x, 0.5, &t).unwrap();
        let clipped = t.forward(&x).unwrap().map(|c| c.clamp(-0.5, 0.5));
        assert!((&t.forward(&eps).unwrap() - &clipped).max_abs() < 1e-12);
        assert!(t.forward(&eps).unwrap().max_abs() <= 0.5 + 1e-12);
        assert!((&project_noise(&x, &ball).unwrap() - &eps).max_abs() < 1e-12);
    }

    #[test]
    fn projection_trivial_cases() {
        let ball = NoiseBall::haar(0.3).unwrap();
        assert_eq!(project_noise(&Image::zeros(4, 4), &ball).unwrap(), Image::zeros(4, 4));
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let x = random_image(&mut rng, 4, 6, 1.0);
        let zero_ball = NoiseBall::haar(0.0).unwrap();
        assert_eq!(project_noise(&x, &zero_ball).unwrap().max_abs(), 0.0);
        let once = project_noise(&x, &ball).unwrap();
        let twice = project_noise(&once, &ball).unwrap();
        assert!((&once - &twice).max_abs() < 1e-10);
        assert!(NoiseBall::haar(-1.0).is_err());
    }

    #[test]
    fn clip_unit_examples() {
        let x = Image::from_rows(&[&[0.5, -3.0, 7.0]]).unwrap();
        assert_eq!(clip_unit(&x), Image::from_rows(&[&[0.5, 0.0, 1.0]]).unwrap());
        let y = Image::from_rows(&[&[0.0, 0.25, 1.0]]).unwrap();
        assert_eq!(clip_unit(&y), y);
    }

    fn scalar_scores(values: &[f64]) -> Vec<Image> {
        values.iter().map(|&v| Image::constant(1, 1, v)).collect()
    }

    #[test]
    fn softmax_symmetry_and_limit() {
        let p = softmax_phases(&scalar_scores(&[1.0, 1.0]), 0.001).unwrap();
        assert_eq!(p[0][(0, 0)], 0.5);
        assert_eq!(p[1][(0, 0)], 0.5);
        let p = softmax_phases(&scalar_scores(&[0.0, 10.0]), 0.001).unwrap();
        assert!(p[0][(0, 0)] >= 1.0 - 1e-300);
        assert!(p[1][(0, 0)] > 0.0);
    }

    #[test]
    fn softmax_reference_values() {
        // exp(-s)/Σexp(-s) for s = 0, 1, 2, evaluated with 50-digit arithmetic.
        let p = softmax_phases(&scalar_scores(&[0.0, 1.0, 2.0]), 1.0).unwrap();
        let want = [
            0.665_240_955_774_821_89,
            0.244_728_471_054_797_65,
            0.090_030_573_170_380_458,
        ];
        for (pi, w) in p.iter().zip(want) {
            assert_abs_diff_eq!(pi[(0, 0)], w, epsilon = 1e-12);
        }
    }

    #[test]
    fn softmax_rejects_bad_inputs() {
        assert!(softmax_phases(&scalar_scores(&[0.0, 1.0]), 0.0).is_err());
        assert!(softmax_phases(&scalar_scores(&[0.0]), 1.0).is_err());
    }

    #[test]
    fn smoothed_min_brackets_the_min() {
        let s = scalar_scores(&[0.3, 0.5, 2.0]);
        for xi in [1.0, 0.1, 0.001] {
            let v = smoothed_min(&s, xi).unwrap()[(0, 0)];
            assert!(v <= 0.3 + 1e-15);
            assert!(v >= 0.3 - xi * 3f64.ln() - 1e-15);
        }
    }
}
