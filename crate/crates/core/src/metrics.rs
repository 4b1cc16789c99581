//! Diagnostics: reconstruction error, convergence traces, sparsity, phase
//! histogram mass and contour overlays.

use crate::dualsolvers::PhaseSet;
use crate::lattice::Image;
use crate::{Error, Result};

/// Mean squared difference. Callers pass images on the `[0, 1]` scale.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.check_dims(b.dims())?;
    let s: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.len() as f64)
}

/// `log(‖cur − prev‖₂ / ‖prev‖₂)`, `−∞` when `prev` is zero or the iterates agree.
pub fn relative_change(prev: &Image, cur: &Image) -> Result<f64> {
    prev.check_dims(cur.dims())?;
    let den = prev.norm();
    if den == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(((cur - prev).norm() / den).ln())
}

/// Relative change between consecutive iterates of a recorded history.
pub fn relative_error_trace(history: &[Image]) -> Result<Vec<f64>> {
    if history.len() < 2 {
        return crate::invalid("at least two iterates are required");
    }
    history.windows(2).map(|w| relative_change(&w[0], &w[1])).collect()
}

/// Percentage of entries that are not exactly zero.
pub fn sparsity_pct(v: &Image) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let nz = v.as_slice().iter().filter(|&&x| x != 0.0).count();
    100.0 * nz as f64 / v.len() as f64
}

/// Share of pixels with `p ≤ band` or `p ≥ 1 − band`.
pub fn phase_histogram_mass(p: &Image, band: f64) -> Result<f64> {
    if !(band > 0.0 && band < 0.5) {
        return crate::invalid(format!("band must lie in (0, 0.5), got {band}"));
    }
    if p.is_empty() {
        return Ok(0.0);
    }
    let hit = p.as_slice().iter().filter(|&&x| x <= band || x >= 1.0 - band).count();
    Ok(hit as f64 / p.len() as f64)
}

/// Share of positions where two label maps agree.
pub fn label_agreement(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return crate::invalid(format!("label maps of length {} and {}", a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(1.0);
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64)
}

/// Label map of a hard partition; errors unless every pixel has exactly one
/// phase equal to one and the rest zero.
pub fn hard_labels(p: &PhaseSet) -> Result<Vec<usize>> {
    if !p.is_hard_partition() {
        return Err(Error::NonBinary);
    }
    Ok(p.labels())
}

/// `1` on pixels whose periodic 4-neighbourhood holds a different label.
pub fn extract_contours(p_bin: &PhaseSet) -> Result<Image> {
    let labels = hard_labels(p_bin)?;
    let (rows, cols) = p_bin.dims();
    let at = |i: usize, j: usize| labels[i * cols + j];
    Ok(Image::from_fn(rows, cols, |i, j| {
        let here = at(i, j);
        let neighbours = [
            at((i + 1) % rows, j),
            at((i + rows - 1) % rows, j),
            at(i, (j + 1) % cols),
            at(i, (j + cols - 1) % cols),
        ];
        if neighbours.iter().any(|&n| n != here) {
            1.0
        } else {
            0.0
        }
    }))
}

/// Hard phase maps from a label image.
pub fn phases_from_labels(labels: &[usize], rows: usize, cols: usize, means: Vec<f64>) -> Result<PhaseSet> {
    if labels.len() != rows * cols {
        return crate::invalid(format!("{} labels for a {rows}x{cols} lattice", labels.len()));
    }
    let n = means.len();
    if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
        return crate::invalid(format!("label {bad} out of range for {n} phases"));
    }
    let phases = (0..n)
        .map(|h| {
            Image::from_vec(rows, cols, labels.iter().map(|&l| if l == h { 1.0 } else { 0.0 }).collect())
                .expect("length checked")
        })
        .collect();
    PhaseSet::new(phases, means)
}
