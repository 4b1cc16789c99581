//! Bilevel scheme: blocks of the three-part decomposition alternate with a
//! smoothed primal-dual segmentation of the cartoon `u`.

use crate::dg3pd::{Dg3pd, Dg3pdParams, Dg3pdState};
use crate::dualsolvers::{phase_dual_step, phase_scores, DualState, PhaseSet, DEFAULT_TAU};
use crate::lattice::Image;
use crate::metrics::{phases_from_labels, relative_change};
use crate::proximal::softmax_phases;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ShtmsParams {
    pub m: usize,
    pub n: usize,
    pub xi: f64,
    pub mu3: f64,
    pub tau: f64,
    /// Intensity that maps to 255 when seeding `c_n = (n − 1)⌊255/N⌋`.
    pub range: f64,
}

impl Default for ShtmsParams {
    fn default() -> Self {
        ShtmsParams {
            m: 2,
            n: 3,
            xi: 0.001,
            mu3: 0.1,
            tau: DEFAULT_TAU,
            range: 255.0,
        }
    }
}

impl ShtmsParams {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return crate::invalid("direction count must be at least 1");
        }
        if self.n < 2 {
            return crate::invalid(format!("at least two phases are required, got {}", self.n));
        }
        for (name, x) in [("ξ", self.xi), ("μ3", self.mu3), ("τ", self.tau), ("range", self.range)] {
            if !(x > 0.0) || !x.is_finite() {
                return crate::invalid(format!("{name} must be positive, got {x}"));
            }
        }
        Ok(())
    }

    pub fn initial_means(&self) -> Vec<f64> {
        let step = (255 / self.n) as f64;
        (0..self.n).map(|i| i as f64 * step * self.range / 255.0).collect()
    }
}

#[derive(Clone, Debug)]
pub struct BilevelParams {
    pub decomposition: Dg3pdParams,
    pub segmentation: ShtmsParams,
    pub t1: usize,
    pub t2: usize,
    pub beta5: f64,
    /// With `false` only the decomposition runs.
    pub segment: bool,
}

impl Default for BilevelParams {
    fn default() -> Self {
        BilevelParams {
            decomposition: Dg3pdParams::default(),
            segmentation: ShtmsParams::default(),
            t1: 100,
            t2: 100,
            beta5: 100.0,
            segment: true,
        }
    }
}

impl BilevelParams {
    pub fn validate(&self) -> Result<()> {
        if self.t1 == 0 || self.t2 == 0 {
            return crate::invalid("T1 and T2 must be at least 1");
        }
        if !(self.beta5 > 0.0) || !self.beta5.is_finite() {
            return crate::invalid(format!("β5 must be positive, got {}", self.beta5));
        }
        self.decomposition.validate()?;
        self.segmentation.validate()
    }
}

#[derive(Clone, Debug)]
pub struct BilevelState {
    pub dg3pd: Dg3pdState,
    pub phases: PhaseSet,
    pub q: Vec<DualState>,
    /// `‖f − u − v − ε‖₂` after each outer iteration.
    pub residuals: Vec<f64>,
    /// `Err_u` after each decomposition step.
    pub err_u: Vec<f64>,
}

impl BilevelState {
    pub fn init(f: &Image, params: &BilevelParams) -> Self {
        let (rows, cols) = f.dims();
        let seg = &params.segmentation;
        BilevelState {
            dg3pd: Dg3pdState::new(f, params.decomposition.l, params.decomposition.s),
            phases: PhaseSet::zeros(rows, cols, seg.initial_means()),
            q: (0..seg.n).map(|_| DualState::zeros(seg.m, rows, cols, seg.tau)).collect(),
            residuals: Vec::new(),
            err_u: Vec::new(),
        }
    }

    /// Bias field `u − Σ c_n p_n`.
    pub fn bias(&self) -> Image {
        &self.dg3pd.u - &self.phases.reconstruction()
    }
}

/// Means from the current phases, softmax phases, then one dual step each.
pub fn shtms_step(phases: &mut PhaseSet, q: &mut [DualState], u: &Image, kappa: &ShtmsParams) -> Result<()> {
    if phases.n() != kappa.n || q.len() != kappa.n {
        return Err(Error::LayerMismatch {
            expected: kappa.n,
            found: q.len().min(phases.n()),
        });
    }
    u.check_dims(phases.dims())?;
    u.check_finite("cartoon")?;
    phases.update_means(u);
    let scores = phase_scores(u, &phases.means, 0.5 * kappa.mu3, q);
    phases.phases = softmax_phases(&scores, kappa.xi)?;
    for (qn, pn) in q.iter_mut().zip(&phases.phases) {
        phase_dual_step(qn, pn);
    }
    Ok(())
}

pub fn bilevel_segment(f: &Image, params: &BilevelParams) -> Result<BilevelState> {
    params.validate()?;
    let (rows, cols) = f.dims();
    let solver = Dg3pd::new(params.decomposition.clone(), rows, cols)?;
    let mut st = BilevelState::init(f, params);
    for _ in 0..params.t1 {
        for _ in 0..params.t2 {
            let prev = st.dg3pd.u.clone();
            solver.step(&mut st.dg3pd, f)?;
            st.err_u.push(relative_change(&prev, &st.dg3pd.u)?);
        }
        st.residuals.push(st.dg3pd.residual(f).norm());
        if params.segment {
            shtms_step(&mut st.phases, &mut st.q, &st.dg3pd.u, &params.segmentation)?;
        }
    }
    Ok(st)
}

/// Hard phases at the per-pixel argmin of `div⁻_M q_n + (β5/2)(u − c_n)²`,
/// lowest index on ties.
pub fn bilevel_binarize(u: &Image, means: &[f64], q: &[DualState], beta5: f64) -> Result<PhaseSet> {
    if means.len() != q.len() {
        return Err(Error::LayerMismatch {
            expected: means.len(),
            found: q.len(),
        });
    }
    if means.is_empty() {
        return crate::invalid("at least one phase is required");
    }
    if !(beta5 > 0.0) {
        return crate::invalid(format!("β5 must be positive, got {beta5}"));
    }
    for qn in q {
        u.check_dims(qn.field.dims())?;
    }
    let scores = phase_scores(u, means, 0.5 * beta5, q);
    let labels: Vec<usize> = (0..u.len())
        .map(|idx| {
            let mut best = 0;
            for n in 1..scores.len() {
                if scores[n].as_slice()[idx] < scores[best].as_slice()[idx] {
                    best = n;
                }
            }
            best
        })
        .collect();
    phases_from_labels(&labels, u.rows(), u.cols(), means.to_vec())
}

/// [`bilevel_binarize`] applied to a finished run.
pub fn binarize_state(state: &BilevelState, beta5: f64) -> Result<PhaseSet> {
    bilevel_binarize(&state.dg3pd.u, &state.phases.means, &state.q, beta5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg3pd::dg3pd_decompose;
    use crate::proximal::NoiseBall;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zeros_q(n: usize, m: usize, rows: usize, cols: usize) -> Vec<DualState> {
        (0..n).map(|_| DualState::zeros(m, rows, cols, DEFAULT_TAU)).collect()
    }

    #[test]
    fn plateaus_get_distinct_phases() {
        let u = Image::from_fn(9, 9, |i, _| [10.0, 95.0, 210.0][i / 3]);
        let kappa = ShtmsParams::default();
        let mut p = PhaseSet::zeros(9, 9, kappa.initial_means());
        let mut q = zeros_q(3, 2, 9, 9);
        shtms_step(&mut p, &mut q, &u, &kappa).unwrap();
        let labels = p.labels();
        assert_eq!(labels[0], 0);
        assert_eq!(labels[40], 1);
        assert_eq!(labels[80], 2);
    }

    #[test]
    fn constant_keeps_uniform_phases() {
        let u = Image::constant(6, 6, 50.0);
        let kappa = ShtmsParams { n: 2, ..ShtmsParams::default() };
        let mut p = PhaseSet::uniform(6, 6, vec![40.0, 60.0]);
        let mut q = zeros_q(2, 2, 6, 6);
        for _ in 0..20 {
            shtms_step(&mut p, &mut q, &u, &kappa).unwrap();
            for ph in &p.phases {
                assert!((ph.max() - 0.5).abs() < 1e-12 && (ph.min() - 0.5).abs() < 1e-12);
            }
        }
        assert!(p.means.iter().all(|&c| (c - 50.0).abs() < 1e-12));
    }

    #[test]
    fn three_level_fixed_point_matches_exhaustive_assignment() {
        let levels = [20.0, 100.0, 200.0];
        let u = Image::from_fn(8, 8, |i, j| levels[(i / 3 + j / 4) % 3]);
        let kappa = ShtmsParams::default();
        let mut p = PhaseSet::zeros(8, 8, kappa.initial_means());
        let mut q = zeros_q(3, 2, 8, 8);
        for _ in 0..200 {
            shtms_step(&mut p, &mut q, &u, &kappa).unwrap();
        }
        // exhaustive search over all maps from levels to phases
        let counts: Vec<f64> = (0..3)
            .map(|k| u.as_slice().iter().filter(|&&x| x == levels[k]).count() as f64)
            .collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for code in 0..27usize {
            let assign = [code % 3, (code / 3) % 3, code / 9];
            let mut means = Vec::new();
            let mut energy = 0.0;
            for n in 0..3 {
                let members: Vec<usize> = (0..3).filter(|&k| assign[k] == n).collect();
                let mass: f64 = members.iter().map(|&k| counts[k]).sum();
                if mass == 0.0 {
                    continue;
                }
                let c = members.iter().map(|&k| counts[k] * levels[k]).sum::<f64>() / mass;
                energy += members.iter().map(|&k| counts[k] * (levels[k] - c).powi(2)).sum::<f64>();
                means.push(c);
            }
            if best.as_ref().map_or(true, |(e, _)| energy < *e) {
                best = Some((energy, means));
            }
        }
        let mut oracle = best.unwrap().1;
        oracle.sort_by(f64::total_cmp);
        let mut got = p.means.clone();
        got.sort_by(f64::total_cmp);
        assert_eq!(oracle.len(), 3);
        for (g, o) in got.iter().zip(&oracle) {
            assert!((g - o).abs() < 0.01 * o, "{got:?} vs {oracle:?}");
        }
    }

    #[test]
    fn binarize_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u = Image::from_fn(7, 7, |_, _| rng.gen_range(0.0..255.0));
        let means = vec![20.0, 128.0, 240.0];
        let q = zeros_q(3, 2, 7, 7);
        let hard = bilevel_binarize(&u, &means, &q, 100.0).unwrap();
        assert!(hard.is_hard_partition());
        for (idx, &l) in hard.labels().iter().enumerate() {
            let x = u.as_slice()[idx];
            let nearest = (0..3)
                .min_by(|&a, &b| (x - means[a]).abs().partial_cmp(&(x - means[b]).abs()).unwrap())
                .unwrap();
            assert_eq!(l, nearest);
        }
        let tie = Image::constant(2, 2, 50.0);
        let hard = bilevel_binarize(&tie, &[40.0, 60.0], &zeros_q(2, 2, 2, 2), 1.0).unwrap();
        assert!(hard.labels().iter().all(|&l| l == 0));

        let mut q = zeros_q(3, 2, 7, 7);
        for qn in &mut q {
            for layer in qn.field.layers_mut() {
                *layer = Image::from_fn(7, 7, |_, _| rng.gen_range(-0.7..0.7));
            }
        }
        assert!(bilevel_binarize(&u, &means, &q, 0.01).unwrap().is_hard_partition());
    }

    fn small() -> BilevelParams {
        BilevelParams {
            decomposition: Dg3pdParams {
                l: 4,
                s: 4,
                noise: NoiseBall::haar(5.0).unwrap(),
                iters: 7,
                ..Dg3pdParams::default()
            },
            t1: 1,
            t2: 7,
            ..BilevelParams::default()
        }
    }

    #[test]
    fn decomposition_only_is_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let f = Image::from_fn(16, 12, |_, _| rng.gen_range(0.0..255.0));
        let params = BilevelParams { segment: false, ..small() };
        let st = bilevel_segment(&f, &params).unwrap();
        let (u, v, e, d) = dg3pd_decompose(&f, &params.decomposition).unwrap();
        assert_eq!(st.dg3pd, d);
        assert_eq!(st.dg3pd.u, u);
        assert_eq!(st.dg3pd.v, v);
        assert_eq!(st.dg3pd.eps, e);
    }

    #[test]
    fn constant_image_reconstructs_cartoon() {
        let f = Image::constant(8, 8, 90.0);
        let params = BilevelParams { t1: 5, t2: 5, ..small() };
        let st = bilevel_segment(&f, &params).unwrap();
        let ure = &st.bias() + &st.phases.reconstruction();
        assert!(crate::metrics::mse(&ure.map(|x| x / 255.0), &st.dg3pd.u.map(|x| x / 255.0)).unwrap() < 1e-8);
        assert!((&st.dg3pd.u - &f).max_abs() < 1e-6);
        assert!(st.phases.simplex_gap() < 1e-12);
    }
}
