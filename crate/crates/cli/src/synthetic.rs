use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use shtseg::Image;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    TwoPlateau,
    SquaresStripes,
    StarField,
    IlluminationRamp,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 4] = [
        SyntheticKind::TwoPlateau,
        SyntheticKind::SquaresStripes,
        SyntheticKind::StarField,
        SyntheticKind::IlluminationRamp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::TwoPlateau => "two-plateau",
            SyntheticKind::SquaresStripes => "squares-stripes",
            SyntheticKind::StarField => "star-field",
            SyntheticKind::IlluminationRamp => "illumination-ramp",
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        SyntheticKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = SyntheticKind::ALL.iter().map(|k| k.name()).collect();
            CliError::Config(format!("unknown synthetic image '{s}', expected one of: {}", names.join(", ")))
        })
    }
}

/// A generated image on `[0, 1]` with its ground truth.
#[derive(Clone, Debug)]
pub struct Synthetic {
    pub image: Image,
    /// Region index per pixel of the noise-free cartoon.
    pub labels: Vec<usize>,
    /// Pixels carrying texture (stripes or stars).
    pub texture: Vec<bool>,
}

/// Builds `kind` on an `n × n` lattice. Geometry is laid out for `n = 64`
/// and scaled; `seed` only affects the star positions.
pub fn generate(kind: SyntheticKind, n: usize, seed: u64) -> Result<Synthetic, CliError> {
    if n < 16 {
        return Err(CliError::Config(format!("synthetic size must be at least 16, got {n}")));
    }
    let s = n as f64 / 64.0;
    let mut labels = vec![0; n * n];
    let mut texture = vec![false; n * n];
    let mut data = vec![0.0; n * n];
    let inside = |i: usize, lo: f64, hi: f64| (i as f64) >= lo * s && (i as f64) < hi * s;
    let disk = |i: usize, j: usize, ci: f64, cj: f64, r: f64| {
        let (a, b) = (i as f64 - ci * s, j as f64 - cj * s);
        a * a + b * b < r * r * s * s
    };
    match kind {
        SyntheticKind::TwoPlateau => {
            for i in 0..n {
                for j in 0..n {
                    let k = i * n + j;
                    let hit = disk(i, j, 32.0, 32.0, 20.0);
                    labels[k] = usize::from(hit);
                    data[k] = if hit { 0.94 } else { 0.38 };
                }
            }
        }
        SyntheticKind::SquaresStripes => {
            for i in 0..n {
                for j in 0..n {
                    let k = i * n + j;
                    let (mut lab, mut x) = (0, 40.0);
                    if inside(i, 12.0, 44.0) && inside(j, 6.0, 34.0) {
                        (lab, x) = (2, 200.0);
                    }
                    if disk(i, j, 46.0, 46.0, 12.0) {
                        (lab, x) = (1, 120.0);
                    }
                    if inside(i, 4.0, 28.0) && inside(j, 36.0, 60.0) {
                        texture[k] = true;
                        x += if (j / 2) % 2 == 0 { 30.0 } else { -30.0 };
                    }
                    labels[k] = lab;
                    data[k] = x / 255.0;
                }
            }
        }
        SyntheticKind::StarField => {
            for i in 0..n {
                for j in 0..n {
                    let (a, b) = ((i as f64 - 32.0 * s) / (14.0 * s), (j as f64 - 30.0 * s) / (22.0 * s));
                    let r2 = a * a + b * b;
                    let k = i * n + j;
                    labels[k] = usize::from(r2 < 1.0);
                    data[k] = 0.08 + 0.55 * (-1.5 * r2).exp();
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let stars = (n * n) / 160;
            for _ in 0..stars {
                let k = rng.gen_range(0..n * n);
                if !texture[k] {
                    texture[k] = true;
                    data[k] += rng.gen_range(0.25..0.35);
                }
            }
        }
        SyntheticKind::IlluminationRamp => {
            for i in 0..n {
                for j in 0..n {
                    let k = i * n + j;
                    let (mut lab, mut x) = (0, 0.15);
                    if inside(i, 8.0, 56.0) && inside(j, 4.0, 28.0) {
                        (lab, x) = (1, 0.45);
                    }
                    if disk(i, j, 32.0, 46.0, 13.0) {
                        (lab, x) = (2, 0.75);
                    }
                    labels[k] = lab;
                    data[k] = x + 0.2 * j as f64 / n as f64;
                }
            }
        }
    }
    Ok(Synthetic {
        image: Image::from_vec(n, n, data).expect("n × n"),
        labels,
        texture,
    })
}

/// Adds Gaussian noise with standard deviation `sigma / 255`.
pub fn add_noise(f: &Image, sigma: f64, seed: u64) -> Result<Image, CliError> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(CliError::Config(format!("noise_sigma must be finite and non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(f.clone());
    }
    let dist = Normal::new(0.0, sigma / 255.0).expect("checked above");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6f697365);
    let data = f.as_slice().iter().map(|x| x + dist.sample(&mut rng)).collect();
    Ok(Image::from_vec(f.rows(), f.cols(), data).expect("same length"))
}
