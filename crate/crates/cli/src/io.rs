use std::fs;
use std::path::Path;

use shtseg::Image;

use crate::CliError;

/// Loads a grayscale PGM (P2 or P5) or PNG with intensities mapped to `[0, 1]`.
/// Colour PNGs are reduced to luminance.
pub fn load_image(path: &Path) -> Result<Image, CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        return parse_pgm(&bytes).map_err(|(offset, msg)| CliError::Format {
            path: path.to_path_buf(),
            offset,
            msg,
        });
    }
    if bytes.starts_with(b"\x89PNG") {
        return decode_png(&bytes).map_err(|e| CliError::Format {
            path: path.to_path_buf(),
            offset: 0,
            msg: e.to_string(),
        });
    }
    Err(CliError::Format {
        path: path.to_path_buf(),
        offset: 0,
        msg: "unsupported format: expected a P2/P5 PGM or a PNG".into(),
    })
}

fn decode_png(bytes: &[u8]) -> Result<Image, image::ImageError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
    let gray = img.to_luma16();
    let (w, h) = gray.dimensions();
    let data = gray.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
    Ok(Image::from_vec(h as usize, w as usize, data).expect("decoder dims"))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, (usize, String)> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            let msg = if start >= self.bytes.len() {
                format!("truncated file: missing {what}")
            } else {
                format!("expected {what}, found byte 0x{:02x}", self.bytes[start])
            };
            return Err((start, msg));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| (start, format!("{what} out of range")))
    }
}

/// Parses PGM bytes; errors carry the byte offset at which parsing failed.
pub fn parse_pgm(bytes: &[u8]) -> Result<Image, (usize, String)> {
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err((0, "missing P2/P5 magic number".into())),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err((cur.pos, "image has zero size".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err((cur.pos, format!("maxval {maxval} outside 1..=65535")));
    }
    let n = width * height;
    let scale = maxval as f64;
    let mut data = Vec::with_capacity(n);
    if binary {
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err((cur.pos, "expected a single whitespace byte after maxval".into()));
        }
        let start = cur.pos + 1;
        let width_bytes = if maxval < 256 { 1 } else { 2 };
        let need = n * width_bytes;
        if bytes.len() < start + need {
            return Err((
                bytes.len(),
                format!("truncated file: expected {need} bytes of pixel data from offset {start}"),
            ));
        }
        for k in 0..n {
            let v = if width_bytes == 1 {
                bytes[start + k] as u32
            } else {
                u16::from_be_bytes([bytes[start + 2 * k], bytes[start + 2 * k + 1]]) as u32
            };
            if v > maxval {
                return Err((start + k * width_bytes, format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64 / scale);
        }
    } else {
        for _ in 0..n {
            cur.skip_space();
            let at = cur.pos;
            let v = cur.number("pixel value")?;
            if v > maxval {
                return Err((at, format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64 / scale);
        }
    }
    Ok(Image::from_vec(height, width, data).expect("length matches header"))
}

/// 8-bit binary PGM bytes.
pub fn encode_pgm(pixels: &[u8], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}
