use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use shtseg::bilevel::BilevelParams;
use shtseg::dg3pd::Dg3pdParams;
use shtseg::sht::ShtParams;
use shtseg::twophase::{Threshold, TwoPhaseParams};
use shtseg::{HaarTransform, NoiseBall, Penalties};

use crate::synthetic::SyntheticKind;
use crate::CliError;

/// Every key a config file may contain.
pub const VALID_KEYS: &[&str] = &[
    "pipeline",
    "input",
    "synthetic",
    "size",
    "out",
    "seed",
    "noise_sigma",
    "scale",
    "raw",
    "threshold",
    "l",
    "s",
    "m",
    "n",
    "nu",
    "haar_levels",
    "iters",
    "theta",
    "beta4",
    "c_beta1",
    "c_beta2",
    "gamma",
    "mu1",
    "mu2",
    "c_mu1",
    "c_mu2",
    "mu3",
    "mu4",
    "alpha",
    "beta",
    "xi",
    "tau",
    "err_floor",
    "t1",
    "t2",
    "beta5",
    "texture",
    "segment",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    TwoPhase,
    Sht,
    Bilevel,
    Dg3pdOnly,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::TwoPhase => "twophase",
            Pipeline::Sht => "sht",
            Pipeline::Bilevel => "bilevel",
            Pipeline::Dg3pdOnly => "dg3pd-only",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        [Pipeline::TwoPhase, Pipeline::Sht, Pipeline::Bilevel, Pipeline::Dg3pdOnly]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                CliError::Config(format!("unknown pipeline '{s}', expected twophase, sht, bilevel or dg3pd-only"))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    File(PathBuf),
    Synthetic { kind: SyntheticKind, size: usize },
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::File(p) => write!(f, "file:{}", p.display()),
            Source::Synthetic { kind, size } => write!(f, "synthetic:{kind}:{size}"),
        }
    }
}

#[derive(Clone, Debug)]
pub enum SolverConfig {
    TwoPhase(TwoPhaseParams),
    Sht(ShtParams),
    Bilevel(BilevelParams),
    Dg3pd(Dg3pdParams),
}

impl SolverConfig {
    pub fn pipeline(&self) -> Pipeline {
        match self {
            SolverConfig::TwoPhase(_) => Pipeline::TwoPhase,
            SolverConfig::Sht(_) => Pipeline::Sht,
            SolverConfig::Bilevel(_) => Pipeline::Bilevel,
            SolverConfig::Dg3pd(_) => Pipeline::Dg3pdOnly,
        }
    }
}

/// A fully resolved run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub source: Source,
    pub out: PathBuf,
    pub seed: u64,
    /// Gaussian noise level in 8-bit units.
    pub noise_sigma: f64,
    /// Working intensity scale; `[0, 1]` inputs are multiplied by it.
    pub scale: f64,
    pub raw: bool,
    /// Two-phase binarization level.
    pub threshold: f64,
    pub solver: SolverConfig,
}

impl RunConfig {
    pub fn pipeline(&self) -> Pipeline {
        self.solver.pipeline()
    }
}

/// Settings given on the command line; they win over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub synthetic: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub iters: Option<usize>,
}

/// Raw `key = value` entries with their line numbers.
#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, (String, usize)>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {lineno}: expected key = value, found '{line}'")))?;
            let key = key.trim().to_string();
            if !VALID_KEYS.contains(&key.as_str()) {
                return Err(CliError::UnknownKey {
                    key,
                    line: lineno,
                    valid: VALID_KEYS.join(", "),
                });
            }
            if entries.insert(key.clone(), (value.trim().to_string(), lineno)).is_some() {
                return Err(CliError::Config(format!("line {lineno}: key '{key}' given twice")));
            }
        }
        Ok(ConfigFile { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (value.into(), 0));
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("line {line}: cannot parse '{v}' for key '{key}'"))),
        }
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Resolves the entries against the pipeline defaults.
    pub fn resolve(&self, ov: &Overrides) -> Result<RunConfig, CliError> {
        let pipeline: Pipeline = self
            .raw("pipeline")
            .ok_or(CliError::MissingKey("pipeline"))?
            .parse()?;
        let size = self.or("size", 64usize)?;
        let source = match (&ov.input, &ov.synthetic) {
            (Some(p), _) => Source::File(p.clone()),
            (None, Some(name)) => Source::Synthetic {
                kind: name.parse()?,
                size,
            },
            (None, None) => match (self.raw("input"), self.raw("synthetic")) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Config("give either 'input' or 'synthetic', not both".into()))
                }
                (Some(p), None) => Source::File(PathBuf::from(p)),
                (None, Some(name)) => Source::Synthetic {
                    kind: name.parse()?,
                    size,
                },
                (None, None) => return Err(CliError::MissingKey("input or synthetic")),
            },
        };
        let out = match &ov.out {
            Some(p) => p.clone(),
            None => PathBuf::from(self.raw("out").ok_or(CliError::MissingKey("out"))?),
        };
        let seed = match ov.seed {
            Some(s) => s,
            None => self.or("seed", 0u64)?,
        };
        let noise_sigma: f64 = self.or("noise_sigma", 0.0)?;
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(CliError::Config(format!("noise_sigma must be non-negative, got {noise_sigma}")));
        }
        let scale: f64 = self.or("scale", 255.0)?;
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(CliError::Config(format!("scale must be positive, got {scale}")));
        }
        let solver = self.solver(pipeline, scale, ov.iters)?;
        Ok(RunConfig {
            source,
            out,
            seed,
            noise_sigma,
            scale,
            raw: self.or("raw", false)?,
            threshold: self.or("threshold", 0.5)?,
            solver,
        })
    }

    fn noise(&self, default_nu: f64) -> Result<NoiseBall, CliError> {
        let nu = self.or("nu", default_nu)?;
        let levels: Option<usize> = self.get("haar_levels")?;
        Ok(NoiseBall::new(nu, Arc::new(HaarTransform::new(levels)))?)
    }

    fn penalties(&self, theta: f64, beta4: f64, c_beta1: f64, c_beta2: f64) -> Result<Penalties, CliError> {
        Ok(Penalties::from_theta(
            self.or("theta", theta)?,
            self.or("beta4", beta4)?,
            self.or("c_beta1", c_beta1)?,
            self.or("c_beta2", c_beta2)?,
        )?)
    }

    fn threshold(&self, fixed: &str, adaptive: &str, default: Threshold) -> Result<Threshold, CliError> {
        match (self.get::<f64>(fixed)?, self.get::<f64>(adaptive)?) {
            (Some(_), Some(_)) => Err(CliError::Config(format!("give either '{fixed}' or '{adaptive}', not both"))),
            (Some(x), None) => Ok(Threshold::Fixed(x)),
            (None, Some(c)) => Ok(Threshold::Adaptive(c)),
            (None, None) => Ok(default),
        }
    }

    fn dg3pd(&self, iters: Option<usize>) -> Result<Dg3pdParams, CliError> {
        let d = Dg3pdParams::default();
        let p = Dg3pdParams {
            l: self.or("l", d.l)?,
            s: self.or("s", d.s)?,
            c_mu1: self.or("c_mu1", d.c_mu1)?,
            c_mu2: self.or("c_mu2", d.c_mu2)?,
            penalties: self.penalties(0.9, d.penalties.beta4, 1.0, 1.3)?,
            noise: self.noise(d.noise.nu)?,
            gamma: self.or("gamma", d.gamma)?,
            iters: iters.map_or_else(|| self.or("iters", d.iters), Ok)?,
            texture: self.or("texture", d.texture)?,
        };
        p.validate()?;
        Ok(p)
    }

    fn solver(&self, pipeline: Pipeline, scale: f64, iters: Option<usize>) -> Result<SolverConfig, CliError> {
        Ok(match pipeline {
            Pipeline::TwoPhase => {
                let d = TwoPhaseParams::default();
                let p = TwoPhaseParams {
                    l: self.or("l", d.l)?,
                    s: self.or("s", d.s)?,
                    penalties: self.penalties(0.9, d.penalties.beta4, 1.0, 1.3)?,
                    mu1: self.threshold("mu1", "c_mu1", d.mu1)?,
                    mu2: self.threshold("mu2", "c_mu2", d.mu2)?,
                    noise: self.noise(d.noise.nu)?,
                    gamma: self.or("gamma", d.gamma)?,
                    iters: iters.map_or_else(|| self.or("iters", d.iters), Ok)?,
                };
                p.validate()?;
                SolverConfig::TwoPhase(p)
            }
            Pipeline::Sht => {
                let d = ShtParams::default();
                let c_mu2 = match self.raw("c_mu2") {
                    Some("off") => None,
                    Some(_) => self.get("c_mu2")?,
                    None => d.c_mu2,
                };
                let p = ShtParams {
                    l: self.or("l", d.l)?,
                    s: self.or("s", d.s)?,
                    m: self.or("m", d.m)?,
                    n: self.or("n", d.n)?,
                    mu1: self.or("mu1", d.mu1)?,
                    mu2: self.or("mu2", d.mu2)?,
                    c_mu2,
                    mu3: self.or("mu3", d.mu3)?,
                    mu4: self.or("mu4", d.mu4)?,
                    alpha: self.or("alpha", d.alpha)?,
                    beta: self.or("beta", d.beta)?,
                    xi: self.or("xi", d.xi)?,
                    tau: self.or("tau", d.tau)?,
                    noise: self.noise(d.noise.nu)?,
                    iters: iters.map_or_else(|| self.or("iters", d.iters), Ok)?,
                    err_floor: self.get("err_floor")?,
                    range: scale,
                };
                p.validate()?;
                SolverConfig::Sht(p)
            }
            Pipeline::Bilevel => {
                let d = BilevelParams::default();
                let mut p = BilevelParams {
                    decomposition: self.dg3pd(None)?,
                    t1: iters.map_or_else(|| self.or("t1", d.t1), Ok)?,
                    t2: self.or("t2", d.t2)?,
                    beta5: self.or("beta5", d.beta5)?,
                    segment: self.or("segment", d.segment)?,
                    ..d
                };
                let seg = &mut p.segmentation;
                seg.m = self.or("m", seg.m)?;
                seg.n = self.or("n", seg.n)?;
                seg.xi = self.or("xi", seg.xi)?;
                seg.mu3 = self.or("mu3", seg.mu3)?;
                seg.tau = self.or("tau", seg.tau)?;
                seg.range = scale;
                p.validate()?;
                SolverConfig::Bilevel(p)
            }
            Pipeline::Dg3pdOnly => SolverConfig::Dg3pd(self.dg3pd(iters)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines() {
        let c = ConfigFile::parse("# run\npipeline = sht   # inline\n\nsynthetic=two-plateau\nout = /tmp/x\nn = 4\n").unwrap();
        let r = c.resolve(&Overrides::default()).unwrap();
        assert_eq!(r.pipeline(), Pipeline::Sht);
        assert_eq!(r.source, Source::Synthetic { kind: SyntheticKind::TwoPlateau, size: 64 });
        match r.solver {
            SolverConfig::Sht(p) => assert_eq!(p.n, 4),
            _ => unreachable!(),
        }
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = ConfigFile::parse("pipeline = sht\nbeta6 = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("beta6") && msg.contains("line 2"));
        for k in VALID_KEYS {
            assert!(msg.contains(k));
        }
    }

    #[test]
    fn missing_keys() {
        let c = ConfigFile::parse("synthetic = two-plateau\nout = x").unwrap();
        assert!(matches!(c.resolve(&Overrides::default()), Err(CliError::MissingKey("pipeline"))));
        let c = ConfigFile::parse("pipeline = sht\nout = x").unwrap();
        assert!(matches!(c.resolve(&Overrides::default()), Err(CliError::MissingKey(_))));
        let c = ConfigFile::parse("pipeline = sht\ninput = a.pgm").unwrap();
        assert!(matches!(c.resolve(&Overrides::default()), Err(CliError::MissingKey("out"))));
    }

    #[test]
    fn overrides_win() {
        let c = ConfigFile::parse("pipeline = bilevel\ninput = a.pgm\nout = x\nseed = 3\nt1 = 5").unwrap();
        let ov = Overrides {
            synthetic: Some("star-field".into()),
            seed: Some(9),
            iters: Some(2),
            ..Overrides::default()
        };
        let r = c.resolve(&ov).unwrap();
        assert_eq!(r.seed, 9);
        assert!(matches!(r.source, Source::Synthetic { kind: SyntheticKind::StarField, .. }));
        match r.solver {
            SolverConfig::Bilevel(p) => assert_eq!(p.t1, 2),
            _ => unreachable!(),
        }
    }

    #[test]
    fn bad_values() {
        for text in [
            "pipeline = chanvese",
            "pipeline = sht\nsynthetic = x\nout = o",
            "pipeline = sht\nsynthetic = two-plateau\nout = o\nn = three",
            "pipeline = sht\nsynthetic = two-plateau\nout = o\nn = 1",
            "pipeline = twophase\nsynthetic = two-plateau\nout = o\nmu1 = 1\nc_mu1 = 0.1",
            "pipeline = dg3pd-only\nsynthetic = two-plateau\nout = o\ntheta = 1.5",
            "pipeline = sht\npipeline = sht",
            "pipeline sht",
        ] {
            let r = ConfigFile::parse(text).and_then(|c| c.resolve(&Overrides::default()));
            assert!(r.is_err(), "{text}");
        }
    }

    #[test]
    fn twophase_thresholds() {
        let c = ConfigFile::parse("pipeline = twophase\nsynthetic = two-plateau\nout = o\nmu1 = 2\nc_mu2 = 0.05").unwrap();
        match c.resolve(&Overrides::default()).unwrap().solver {
            SolverConfig::TwoPhase(p) => {
                assert_eq!(p.mu1, Threshold::Fixed(2.0));
                assert_eq!(p.mu2, Threshold::Adaptive(0.05));
            }
            _ => unreachable!(),
        }
    }
}
