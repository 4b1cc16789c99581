use shtseg::bilevel::{bilevel_segment, binarize_state};
use shtseg::dg3pd::{Dg3pd, Dg3pdState};
use shtseg::metrics::{mse, phase_histogram_mass, relative_change, sparsity_pct};
use shtseg::sht::{sht_binarize, sht_segment};
use shtseg::twophase::{binarize, TwoPhase, TwoPhaseState};
use shtseg::{Image, PhaseSet};

use crate::config::{Pipeline, RunConfig, SolverConfig, Source};
use crate::synthetic::{add_noise, generate};
use crate::CliError;

/// Relaxed and hard phases, means on the `[0, 1]` scale.
#[derive(Clone, Debug)]
pub struct Segmentation {
    pub relaxed: PhaseSet,
    pub hard: PhaseSet,
}

/// Everything a finished run reports, on the `[0, 1]` scale.
#[derive(Clone, Debug)]
pub struct Components {
    pub pipeline: Pipeline,
    /// The image handed to the solver, noise included.
    pub f: Image,
    pub u: Image,
    pub v: Image,
    pub eps: Image,
    pub segmentation: Option<Segmentation>,
    pub err_u: Vec<f64>,
    pub iterations: usize,
    /// Run description written at the top of the manifest.
    pub header: Vec<(String, String)>,
    /// Pipeline-specific manifest entries.
    pub extra: Vec<(String, String)>,
}

impl Components {
    /// `Σ c_n p_n` over the relaxed phases.
    pub fn f_seg(&self) -> Option<Image> {
        self.segmentation.as_ref().map(|s| s.relaxed.reconstruction())
    }

    /// `u − Σ c_n p_n`
    pub fn bias(&self) -> Option<Image> {
        self.f_seg().map(|fs| &self.u - &fs)
    }

    pub fn v_bin(&self) -> Image {
        self.v.map(|x| if x != 0.0 { 1.0 } else { 0.0 })
    }

    /// `b + Σ c_n p_n + v + ε`
    pub fn reconstruction(&self) -> Image {
        let mut out = &self.u + &self.v;
        out += &self.eps;
        out
    }

    pub fn mse(&self) -> f64 {
        mse(&self.f, &self.reconstruction()).expect("same lattice")
    }

    /// `‖f − u − v − ε‖₂ / ‖f‖₂`
    pub fn residual_rel(&self) -> f64 {
        let den = self.f.norm();
        let num = (&self.f - &self.reconstruction()).norm();
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }
}

/// The solver input on `[0, 1]`: loaded or generated, then noise added.
pub fn prepare_input(cfg: &RunConfig) -> Result<Image, CliError> {
    let clean = match &cfg.source {
        Source::File(p) => crate::io::load_image(p)?,
        Source::Synthetic { kind, size } => generate(*kind, *size, cfg.seed)?.image,
    };
    add_noise(&clean, cfg.noise_sigma, cfg.seed)
}

fn rescale_phases(p: &PhaseSet, k: f64) -> PhaseSet {
    PhaseSet {
        phases: p.phases.clone(),
        means: p.means.iter().map(|c| c * k).collect(),
    }
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
}

/// Runs the configured solver on `f` (given on `[0, 1]`).
pub fn run_on(cfg: &RunConfig, f: &Image) -> Result<Components, CliError> {
    let k = cfg.scale;
    let fw = f.map(|x| x * k);
    let back = |x: &Image| x.map(|y| y / k);
    let (rows, cols) = f.dims();
    let mut extra = Vec::new();
    let (u, v, eps, segmentation, err_u, iterations) = match &cfg.solver {
        SolverConfig::TwoPhase(p) => {
            let solver = TwoPhase::new(p.clone(), rows, cols)?;
            let mut st = TwoPhaseState::init(&fw, p.l, p.s);
            let mut err = Vec::with_capacity(p.iters);
            for _ in 0..p.iters {
                let prev = st.piecewise_constant();
                solver.step(&mut st, &fw)?;
                err.push(relative_change(&prev, &st.piecewise_constant())?);
            }
            let pb = binarize(&st.p, cfg.threshold)?;
            let flip = |x: &Image| x.map(|y| 1.0 - y);
            let means = vec![st.c1 / k, st.c2 / k];
            let relaxed = PhaseSet::new(vec![st.p.clone(), flip(&st.p)], means.clone())?;
            let hard = PhaseSet::new(vec![pb.clone(), flip(&pb)], means)?;
            extra.push(("phase_mass_0.05".into(), format!("{:e}", phase_histogram_mass(&st.p, 0.05)?)));
            let u = back(&st.piecewise_constant());
            (u, back(&st.v), back(&st.eps), Some(Segmentation { relaxed, hard }), err, st.iteration)
        }
        SolverConfig::Sht(p) => {
            let st = sht_segment(&fw, p)?;
            let relaxed = rescale_phases(&st.phases, 1.0 / k);
            let hard = sht_binarize(&relaxed);
            extra.push(("mu2_final".into(), format!("{:e}", st.mu2)));
            extra.push(("mu2_clamps".into(), st.mu2_clamps.to_string()));
            let seg = Segmentation { relaxed, hard };
            (back(&st.u), back(&st.v), back(&st.eps), Some(seg), st.err_u, st.iteration)
        }
        SolverConfig::Bilevel(p) => {
            let st = bilevel_segment(&fw, p)?;
            let seg = if p.segment {
                let hard = binarize_state(&st, p.beta5)?;
                Some(Segmentation {
                    relaxed: rescale_phases(&st.phases, 1.0 / k),
                    hard: rescale_phases(&hard, 1.0 / k),
                })
            } else {
                None
            };
            let outer: Vec<f64> = st.residuals.iter().map(|r| r / k).collect();
            extra.push(("outer_residuals".into(), fmt_list(&outer)));
            let iters = st.err_u.len();
            let d = st.dg3pd;
            (back(&d.u), back(&d.v), back(&d.eps), seg, st.err_u, iters)
        }
        SolverConfig::Dg3pd(p) => {
            let solver = Dg3pd::new(p.clone(), rows, cols)?;
            let mut st = Dg3pdState::new(&fw, p.l, p.s);
            let mut err = Vec::with_capacity(p.iters);
            for _ in 0..p.iters {
                let prev = st.u.clone();
                solver.step(&mut st, &fw)?;
                err.push(relative_change(&prev, &st.u)?);
            }
            (back(&st.u), back(&st.v), back(&st.eps), None, err, st.iteration)
        }
    };
    extra.push(("sparsity_v_pct".into(), format!("{:e}", sparsity_pct(&v))));
    let header = vec![
        ("pipeline".into(), cfg.pipeline().to_string()),
        ("source".into(), cfg.source.to_string()),
        ("seed".into(), cfg.seed.to_string()),
        ("noise_sigma".into(), format!("{:e}", cfg.noise_sigma)),
        ("scale".into(), format!("{:e}", cfg.scale)),
        ("rows".into(), rows.to_string()),
        ("cols".into(), cols.to_string()),
    ];
    Ok(Components {
        pipeline: cfg.pipeline(),
        f: f.clone(),
        u,
        v,
        eps,
        segmentation,
        err_u,
        iterations,
        header,
        extra,
    })
}

/// Loads or generates the input, runs the solver and writes every artifact.
pub fn run_pipeline(cfg: &RunConfig) -> Result<(Components, crate::Manifest), CliError> {
    let f = prepare_input(cfg)?;
    log::info!("{} on {}x{} input from {}", cfg.pipeline(), f.rows(), f.cols(), cfg.source);
    let comps = run_on(cfg, &f)?;
    let manifest = crate::artifacts::save_components(&comps, &cfg.out, cfg.raw)?;
    Ok((comps, manifest))
}
