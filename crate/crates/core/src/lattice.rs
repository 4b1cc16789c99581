//! Images on a periodic lattice, circulant difference matrices and the 2-D DFT.
//!
//! The DFT follows `F(ω) = Σ_k f[k] e^{-j⟨k,ω⟩}` with an unnormalized forward
//! transform and a `1/(d1·d2)` inverse. Shifting by one sample multiplies the
//! spectrum by `z = e^{jω}`, so the forward difference along an axis has the
//! symbol `z − 1`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// Real-valued `d1 × d2` image stored row-major. `k1` indexes rows, `k2` columns.
#[derive(Clone, PartialEq)]
pub struct Image {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Image({}x{})", self.rows, self.cols)?;
        if self.data.len() <= 64 {
            f.debug_list()
                .entries(self.data.chunks(self.cols).map(|r| r.to_vec()))
                .finish()?;
        }
        Ok(())
    }
}

impl Image {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(rows, cols, 0.0)
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "image dims must be positive");
        Image {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return crate::invalid("image dims must be positive");
        }
        if data.len() != rows * cols {
            return crate::invalid(format!(
                "{} samples do not fill a {}x{} image",
                data.len(),
                rows,
                cols
            ));
        }
        Ok(Image { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "image dims must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Image { rows, cols, data }
    }

    /// Builds an image from equal-length rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return crate::invalid("ragged rows");
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Sample at a possibly out-of-range index, wrapped periodically.
    pub fn wrapped(&self, i: isize, j: isize) -> f64 {
        let r = i.rem_euclid(self.rows as isize) as usize;
        let c = j.rem_euclid(self.cols as isize) as usize;
        self.data[r * self.cols + c]
    }

    /// Periodic roll: `out[i, j] = self[i − di, j − dj]`.
    pub fn shifted(&self, di: isize, dj: isize) -> Image {
        Image::from_fn(self.rows, self.cols, |i, j| {
            self.wrapped(i as isize - di, j as isize - dj)
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Image {
        assert_eq!(self.dims(), other.dims(), "image dims differ");
        Image {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += a · other`
    pub fn add_scaled(&mut self, a: f64, other: &Image) {
        assert_eq!(self.dims(), other.dims(), "image dims differ");
        for (x, &y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|x| *x *= a);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn dot(&self, other: &Image) -> f64 {
        assert_eq!(self.dims(), other.dims(), "image dims differ");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    pub(crate) fn check_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() == dims {
            Ok(())
        } else {
            Err(Error::DimMismatch {
                expected: dims,
                found: self.dims(),
            })
        }
    }
}

impl Index<(usize, usize)> for Image {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Image {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &Image {
    type Output = Image;
    fn add(self, rhs: &Image) -> Image {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &Image {
    type Output = Image;
    fn sub(self, rhs: &Image) -> Image {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &Image {
    type Output = Image;
    fn mul(self, rhs: f64) -> Image {
        self.map(|a| a * rhs)
    }
}

impl Neg for &Image {
    type Output = Image;
    fn neg(self) -> Image {
        self.map(|a| -a)
    }
}

impl AddAssign<&Image> for Image {
    fn add_assign(&mut self, rhs: &Image) {
        self.add_scaled(1.0, rhs);
    }
}

impl SubAssign<&Image> for Image {
    fn sub_assign(&mut self, rhs: &Image) {
        self.add_scaled(-1.0, rhs);
    }
}

/// Complex spectrum with the same layout as the [`Image`] it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Spectrum {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return crate::invalid("spectrum size does not match dims");
        }
        Ok(Spectrum { rows, cols, data })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<(usize, usize)> for Spectrum {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Spectrum {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Cached row/column FFT plans for one image size.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fft2({}x{})", self.rows, self.cols)
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "image dims must be positive");
        let mut planner = FftPlanner::new();
        Fft2 {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn forward(&self, x: &Image) -> Spectrum {
        assert_eq!(x.dims(), self.dims(), "image dims differ from plan");
        let mut data: Vec<Complex64> = x.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.run(&mut data, true);
        Spectrum {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Complex inverse including the `1/(d1·d2)` factor.
    pub fn inverse_complex(&self, x: &Spectrum) -> Spectrum {
        assert_eq!(x.dims(), self.dims(), "spectrum dims differ from plan");
        let mut data = x.data.clone();
        self.run(&mut data, false);
        let s = 1.0 / (self.rows * self.cols) as f64;
        data.iter_mut().for_each(|z| *z *= s);
        Spectrum {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Real part of the inverse transform.
    pub fn inverse(&self, x: &Spectrum) -> Image {
        let z = self.inverse_complex(x);
        Image {
            rows: self.rows,
            cols: self.cols,
            data: z.data.iter().map(|c| c.re).collect(),
        }
    }

    fn run(&self, data: &mut [Complex64], forward: bool) {
        let (row_plan, col_plan) = if forward {
            (&self.row_fwd, &self.col_fwd)
        } else {
            (&self.row_inv, &self.col_inv)
        };
        row_plan.process(data);
        let mut column = vec![Complex64::new(0.0, 0.0); self.rows];
        let mut scratch = vec![Complex64::new(0.0, 0.0); col_plan.get_inplace_scratch_len()];
        for j in 0..self.cols {
            for i in 0..self.rows {
                column[i] = data[i * self.cols + j];
            }
            col_plan.process_with_scratch(&mut column, &mut scratch);
            for i in 0..self.rows {
                data[i * self.cols + j] = column[i];
            }
        }
    }
}

pub fn dft_forward(x: &Image) -> Result<Spectrum> {
    x.check_finite("dft input")?;
    Ok(Fft2::new(x.rows, x.cols).forward(x))
}

pub fn dft_inverse(x: &Spectrum) -> Result<Image> {
    if !x.is_finite() {
        return Err(Error::NonFinite("dft input"));
    }
    Ok(Fft2::new(x.rows, x.cols).inverse(x))
}

/// `e^{j 2π k / n}`, the shift eigenvalue of frequency `k` on a length-`n` cycle.
pub fn unit_root(k: usize, n: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

/// How a circulant matrix `D` meets the image `X`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `D X`
    Left,
    /// `Dᵀ X`
    LeftTranspose,
    /// `X D`
    Right,
    /// `X Dᵀ`
    RightTranspose,
}

/// Periodic forward difference matrix: `−1` on the diagonal, `+1` above it
/// and `+1` in the bottom-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CirculantDiff {
    pub axis: Axis,
    pub n: usize,
}

impl CirculantDiff {
    /// `D1`, acting on the row index of a `n × ·` image.
    pub fn rows(n: usize) -> Self {
        CirculantDiff { axis: Axis::Rows, n }
    }

    /// `D2`, acting on the column index of a `· × n` image.
    pub fn cols(n: usize) -> Self {
        CirculantDiff { axis: Axis::Cols, n }
    }

    pub fn for_image(axis: Axis, x: &Image) -> Self {
        match axis {
            Axis::Rows => Self::rows(x.rows),
            Axis::Cols => Self::cols(x.cols),
        }
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] -= 1.0;
            row[(i + 1) % n] += 1.0;
        }
        m
    }
}

pub fn apply_circulant(d: &CirculantDiff, x: &Image, side: Side) -> Result<Image> {
    let (rows, cols) = x.dims();
    let ok = match (d.axis, side) {
        (Axis::Rows, Side::Left | Side::LeftTranspose) => d.n == rows,
        (Axis::Cols, Side::Right | Side::RightTranspose) => d.n == cols,
        _ => {
            return crate::invalid(format!("{:?} matrix cannot be applied on side {:?}", d.axis, side))
        }
    };
    if !ok {
        let expected = match d.axis {
            Axis::Rows => (d.n, cols),
            Axis::Cols => (rows, d.n),
        };
        return Err(Error::DimMismatch {
            expected,
            found: x.dims(),
        });
    }
    let (di, dj) = match side {
        Side::Left => (1, 0),
        Side::LeftTranspose => (-1, 0),
        Side::Right => (0, -1),
        Side::RightTranspose => (0, 1),
    };
    Ok(Image::from_fn(rows, cols, |i, j| {
        x.wrapped(i as isize + di, j as isize + dj) - x[(i, j)]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Image {
        Image::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn brute_dft(x: &Image) -> Vec<Complex64> {
        let (r, c) = x.dims();
        let mut out = Vec::new();
        for a in 0..r {
            for b in 0..c {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..r {
                    for j in 0..c {
                        let w = -2.0 * PI * ((a * i) as f64 / r as f64 + (b * j) as f64 / c as f64);
                        acc += x[(i, j)] * Complex64::from_polar(1.0, w);
                    }
                }
                out.push(acc);
            }
        }
        out
    }

    fn dense_left(m: &[Vec<f64>], x: &Image) -> Image {
        Image::from_fn(x.rows(), x.cols(), |i, j| (0..x.rows()).map(|k| m[i][k] * x[(k, j)]).sum())
    }

    fn dense_right(x: &Image, m: &[Vec<f64>]) -> Image {
        Image::from_fn(x.rows(), x.cols(), |i, j| (0..x.cols()).map(|k| x[(i, k)] * m[k][j]).sum())
    }

    fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = m.len();
        (0..n).map(|i| (0..n).map(|j| m[j][i]).collect()).collect()
    }

    #[test]
    fn constant_spectrum_is_dc_only() {
        let s = dft_forward(&Image::constant(3, 5, 2.0)).unwrap();
        assert_abs_diff_eq!(s[(0, 0)].re, 30.0, epsilon = 1e-12);
        for (k, z) in s.as_slice().iter().enumerate().skip(1) {
            assert!(z.norm() < 1e-12, "bin {k}");
        }
    }

    #[test]
    fn delta_and_ones_are_a_pair() {
        let mut d = Image::zeros(4, 6);
        d[(0, 0)] = 1.0;
        let s = dft_forward(&d).unwrap();
        assert!(s.as_slice().iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-14));
        let back = dft_inverse(&s).unwrap();
        assert_eq!(back.as_slice().iter().filter(|v| v.abs() > 1e-14).count(), 1);
        assert_abs_diff_eq!(back[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(r, c) in &[(4, 4), (3, 5), (1, 7), (6, 1)] {
            let x = random_image(&mut rng, r, c);
            let s = dft_forward(&x).unwrap();
            for (a, b) in s.as_slice().iter().zip(brute_dft(&x)) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn round_trip_various_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(r, c) in &[(8, 8), (64, 64), (7, 12), (31, 17), (1, 1)] {
            let x = random_image(&mut rng, r, c);
            let y = dft_inverse(&dft_forward(&x).unwrap()).unwrap();
            assert!((&x - &y).norm() <= 1e-10 * x.norm().max(1e-300));
        }
    }

    #[test]
    fn hermitian_spectrum_inverts_to_real() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (r, c) = (6, 5);
        let raw: Vec<Complex64> = (0..r * c)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut s = Spectrum::zeros(r, c);
        for a in 0..r {
            for b in 0..c {
                let mirror = ((r - a) % r) * c + (c - b) % c;
                s[(a, b)] = 0.5 * (raw[a * c + b] + raw[mirror].conj());
            }
        }
        let fft = Fft2::new(r, c);
        let z = fft.inverse_complex(&s);
        assert!(z.as_slice().iter().all(|v| v.im.abs() < 1e-10));
    }

    #[test]
    fn real_input_has_hermitian_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_image(&mut rng, 5, 8);
        let s = dft_forward(&x).unwrap();
        for a in 0..5 {
            for b in 0..8 {
                let m = s[((5 - a) % 5, (8 - b) % 8)].conj();
                assert!((s[(a, b)] - m).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let mut x = Image::zeros(2, 2);
        x[(1, 1)] = f64::NAN;
        assert_eq!(dft_forward(&x), Err(Error::NonFinite("dft input")));
    }

    #[test]
    fn d1_on_small_example() {
        let f = Image::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let out = apply_circulant(&CirculantDiff::rows(2), &f, Side::Left).unwrap();
        assert_eq!(out, Image::from_rows(&[&[2.0, 2.0], &[-2.0, -2.0]]).unwrap());
    }

    #[test]
    fn rows_of_d_sum_to_zero() {
        for n in 1..9 {
            for row in CirculantDiff::rows(n).dense() {
                assert_eq!(row.iter().sum::<f64>(), 0.0);
            }
        }
    }

    #[test]
    fn constant_images_are_annihilated() {
        let c = Image::constant(4, 3, 7.5);
        assert_eq!(apply_circulant(&CirculantDiff::rows(4), &c, Side::Left).unwrap(), Image::zeros(4, 3));
        let col_const = Image::from_fn(4, 3, |i, _| i as f64);
        assert_eq!(
            apply_circulant(&CirculantDiff::cols(3), &col_const, Side::RightTranspose).unwrap(),
            Image::zeros(4, 3)
        );
    }

    #[test]
    fn all_sides_match_dense_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for r in 1..=8 {
            for c in 1..=8 {
                let x = random_image(&mut rng, r, c);
                let d1 = CirculantDiff::rows(r);
                let d2 = CirculantDiff::cols(c);
                let m1 = d1.dense();
                let m2 = d2.dense();
                let cases = [
                    (apply_circulant(&d1, &x, Side::Left).unwrap(), dense_left(&m1, &x)),
                    (apply_circulant(&d1, &x, Side::LeftTranspose).unwrap(), dense_left(&transpose(&m1), &x)),
                    (apply_circulant(&d2, &x, Side::Right).unwrap(), dense_right(&x, &m2)),
                    (apply_circulant(&d2, &x, Side::RightTranspose).unwrap(), dense_right(&x, &transpose(&m2))),
                ];
                for (got, want) in cases {
                    assert!((&got - &want).max_abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mismatched_axis_or_size_is_an_error() {
        let x = Image::zeros(3, 4);
        assert!(apply_circulant(&CirculantDiff::rows(4), &x, Side::Left).is_err());
        assert!(apply_circulant(&CirculantDiff::rows(3), &x, Side::Right).is_err());
        assert!(apply_circulant(&CirculantDiff::cols(3), &x, Side::RightTranspose).is_err());
    }

    #[test]
    fn difference_symbols() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (r, c) = (6, 7);
        let x = random_image(&mut rng, r, c);
        let fx = dft_forward(&x).unwrap();
        let d1x = dft_forward(&apply_circulant(&CirculantDiff::rows(r), &x, Side::Left).unwrap()).unwrap();
        let d2x = dft_forward(&apply_circulant(&CirculantDiff::cols(c), &x, Side::RightTranspose).unwrap()).unwrap();
        for a in 0..r {
            for b in 0..c {
                let z1 = unit_root(a, r) - 1.0;
                let z2 = unit_root(b, c) - 1.0;
                assert!((d1x[(a, b)] - z1 * fx[(a, b)]).norm() < 1e-10);
                assert!((d2x[(a, b)] - z2 * fx[(a, b)]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn shift_is_periodic() {
        let x = Image::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        let s = x.shifted(1, -1);
        assert_eq!(s[(0, 0)], x[(2, 1)]);
        assert_eq!(x.shifted(3, 4), x);
    }
}
