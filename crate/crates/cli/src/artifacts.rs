use std::fs;
use std::path::{Path, PathBuf};

use shtseg::metrics::extract_contours;
use shtseg::Image;

use crate::io::encode_pgm;
use crate::pipeline::Components;
use crate::CliError;

/// Ordered `key: value` metrics record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.push((key.into(), value.into()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}: {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut m = Manifest::default();
        for (i, line) in text.lines().enumerate() {
            let (k, v) = line
                .split_once(": ")
                .ok_or_else(|| CliError::Config(format!("manifest line {}: expected 'key: value'", i + 1)))?;
            m.push(k, v);
        }
        Ok(m)
    }
}

/// How an array is mapped to 8 bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoding {
    /// `[min(0, lo), max(1, hi)]` onto `0..=255`.
    Unit,
    /// `[−a, a]` with `a = max|x|`, so zero sits at mid-grey.
    Signed,
}

/// Pixels and the `(lo, hi)` range that maps to `0` and `255`.
pub fn quantize(x: &Image, enc: Encoding) -> (Vec<u8>, f64, f64) {
    let (lo, hi) = match enc {
        Encoding::Unit => (x.min().min(0.0), x.max().max(1.0)),
        Encoding::Signed => {
            let a = x.max_abs();
            let a = if a > 0.0 { a } else { 1.0 };
            (-a, a)
        }
    };
    let span = hi - lo;
    let px = x
        .as_slice()
        .iter()
        .map(|&v| ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    (px, lo, hi)
}

/// Inverse of [`quantize`] for an image loaded onto `[0, 1]`.
pub fn dequantize(loaded: &Image, lo: f64, hi: f64) -> Image {
    loaded.map(|x| lo + x * (hi - lo))
}

struct Writer {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
}

impl Writer {
    fn open(dir: &Path) -> Result<Self, CliError> {
        let io_err = |source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let created_dir = if dir.is_dir() {
            false
        } else {
            fs::create_dir(dir).map_err(io_err)?;
            true
        };
        Ok(Writer {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        fs::write(&path, bytes).map_err(|source| CliError::Io { path, source })
    }

    fn abort(self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
}

/// Writes every component image, `manifest.txt` and `convergence.log` into
/// `outdir`, creating it when its parent exists. On failure nothing written
/// by this call is left behind.
pub fn save_components(c: &Components, outdir: &Path, raw: bool) -> Result<Manifest, CliError> {
    let mut w = Writer::open(outdir)?;
    match write_all(c, &mut w, raw) {
        Ok(m) => Ok(m),
        Err(e) => {
            w.abort();
            Err(e)
        }
    }
}

fn write_all(c: &Components, w: &mut Writer, raw: bool) -> Result<Manifest, CliError> {
    let (rows, cols) = c.f.dims();
    let mut m = Manifest::default();
    for (k, v) in &c.header {
        m.push(k, v);
    }
    m.push("iterations", c.iterations.to_string());
    m.push("mse", format!("{:e}", c.mse()));
    m.push("residual_rel", format!("{:e}", c.residual_rel()));
    if let Some(seg) = &c.segmentation {
        m.push("phases", seg.relaxed.n().to_string());
        m.push("means", fmt_list(&seg.relaxed.means));
        m.push("hard_partition", seg.hard.is_hard_partition().to_string());
    } else {
        m.push("phases", "0");
    }
    m.push("err_u_final", c.err_u.last().map_or("none".into(), |e| format!("{e:e}")));
    for (k, v) in &c.extra {
        m.push(k, v);
    }
    m.push("err_u_trace", fmt_list(&c.err_u));

    let mut images: Vec<(String, Image, Encoding)> = vec![
        ("f".into(), c.f.clone(), Encoding::Unit),
        ("u".into(), c.u.clone(), Encoding::Unit),
        ("v".into(), c.v.clone(), Encoding::Signed),
        ("v_bin".into(), c.v_bin(), Encoding::Unit),
        ("eps".into(), c.eps.clone(), Encoding::Signed),
    ];
    if let Some(seg) = &c.segmentation {
        images.push(("b".into(), c.bias().expect("segmented"), Encoding::Signed));
        for (n, p) in seg.relaxed.phases.iter().enumerate() {
            images.push((format!("p_{n}"), p.clone(), Encoding::Unit));
        }
        for (n, p) in seg.hard.phases.iter().enumerate() {
            images.push((format!("p_bin_{n}"), p.clone(), Encoding::Unit));
        }
        images.push(("f_seg".into(), c.f_seg().expect("segmented"), Encoding::Unit));
    }
    for (name, img, enc) in &images {
        let (px, lo, hi) = quantize(img, *enc);
        let file = format!("{name}.pgm");
        w.write(&file, &encode_pgm(&px, rows, cols))?;
        m.push(format!("image.{name}"), format!("{file} {lo:e} {hi:e}"));
        if raw {
            let bytes: Vec<u8> = img.as_slice().iter().flat_map(|x| x.to_le_bytes()).collect();
            w.write(&format!("{name}.f64"), &bytes)?;
        }
    }
    if let Some(seg) = &c.segmentation {
        let edges = extract_contours(&seg.hard)?;
        let (mut px, _, _) = quantize(&c.u, Encoding::Unit);
        for (p, e) in px.iter_mut().zip(edges.as_slice()) {
            if *e != 0.0 {
                *p = 255;
            }
        }
        w.write("contours.pgm", &encode_pgm(&px, rows, cols))?;
        m.push("overlay", "contours.pgm");
    }
    let log: String = c.err_u.iter().map(|e| format!("{e:e}\n")).collect();
    w.write("convergence.log", log.as_bytes())?;
    w.write("manifest.txt", m.to_text().as_bytes())?;
    Ok(m)
}

/// Reads a `.f64` dump written with `raw = true`.
pub fn load_raw(path: &Path, rows: usize, cols: usize) -> Result<Image, CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() != rows * cols * 8 {
        return Err(CliError::Format {
            path: path.to_path_buf(),
            offset: bytes.len(),
            msg: format!("expected {} bytes", rows * cols * 8),
        });
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Image::from_vec(rows, cols, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_bounds() {
        let x = Image::from_fn(5, 7, |i, j| (i as f64 - 2.0) * 0.3 + j as f64 * 0.01);
        for enc in [Encoding::Unit, Encoding::Signed] {
            let (px, lo, hi) = quantize(&x, enc);
            let loaded = Image::from_vec(5, 7, px.iter().map(|&p| p as f64 / 255.0).collect()).unwrap();
            let back = dequantize(&loaded, lo, hi);
            assert!((&back - &x).max_abs() <= (hi - lo) / 510.0 + 1e-12);
        }
        let (px, lo, hi) = quantize(&Image::zeros(2, 2), Encoding::Signed);
        assert_eq!((lo, hi), (-1.0, 1.0));
        assert!(px.iter().all(|&p| p == 128));
    }

    #[test]
    fn manifest_text_round_trip() {
        let mut m = Manifest::default();
        m.push("mse", "1e-9");
        m.push("means", "1e0 2.5e-1");
        assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
        assert_eq!(m.get_f64("mse"), Some(1e-9));
        assert!(Manifest::parse("novalue\n").is_err());
    }
}
