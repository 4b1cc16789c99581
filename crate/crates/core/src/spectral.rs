use crate::diffops::DirSymbols;
use crate::lattice::{Fft2, Image, Spectrum};

/// Exact solvers for `(a + b·Σ_{l∈set} ∂_lᵀ∂_l) x = rhs` on the periodic lattice.
#[derive(Clone, Debug)]
pub(crate) struct Diagonalized {
    fft: Fft2,
    symbols: DirSymbols,
    energy: Vec<f64>,
}

impl Diagonalized {
    pub(crate) fn new(k: usize, rows: usize, cols: usize) -> Self {
        let symbols = DirSymbols::new(k, rows, cols);
        let energy = symbols.energy();
        Diagonalized {
            fft: Fft2::new(rows, cols),
            symbols,
            energy,
        }
    }

    /// Smallest value of `a + b·Σ|sym_l|²` over all frequencies.
    pub(crate) fn min_denominator(&self, a: f64, b: f64) -> f64 {
        self.energy.iter().map(|&e| a + b * e).fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn solve_all(&self, rhs: &Image, a: f64, b: f64) -> Image {
        let mut s = self.fft.forward(rhs);
        for (z, &e) in s.as_mut_slice().iter_mut().zip(&self.energy) {
            *z /= a + b * e;
        }
        self.fft.inverse(&s)
    }

    pub(crate) fn solve_one(&self, l: usize, rhs: &Image, a: f64, b: f64) -> Image {
        let mut s: Spectrum = self.fft.forward(rhs);
        for (z, sym) in s.as_mut_slice().iter_mut().zip(self.symbols.symbol(l)) {
            *z /= a + b * sym.norm_sqr();
        }
        self.fft.inverse(&s)
    }
}
