//! PGM (P2/P5, 8-bit) and greyscale PFM (`Pf`) reading and writing.
//!
//! PGM is the display format: writing clamps to `[0, 255]` and rounds to the
//! nearest integer. PFM stores unclamped 32-bit floats, little-endian, rows
//! bottom-to-top as in the usual PFM convention.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// On-disk formats understood by [`write_image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    PgmBinary,
    PgmAscii,
    Pfm,
}

impl ImageFormat {
    /// Picks the format from the file extension (`.pgm` binary, `.pfm` float).
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("pgm") => Ok(ImageFormat::PgmBinary),
            Some("pfm") => Ok(ImageFormat::Pfm),
            _ => Err(Error::invalid(format!(
                "cannot infer image format of {} (expected .pgm or .pfm)",
                path.display()
            ))),
        }
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageGrid> {
    decode(&fs::read(path)?)
}

pub fn write_image(img: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = ImageFormat::from_path(path)?;
    fs::write(path, encode(img, format))?;
    Ok(())
}

/// Decodes any supported format, dispatching on the magic number.
pub fn decode(bytes: &[u8]) -> Result<ImageGrid> {
    match bytes.get(..2) {
        Some(b"P5") => decode_pgm(bytes, true),
        Some(b"P2") => decode_pgm(bytes, false),
        Some(b"Pf") => decode_pfm(bytes),
        Some(b"PF") => Err(Error::parse(0, "colour PFM (PF) is not supported")),
        Some(m) if m[0] == b'P' => Err(Error::parse(
            0,
            format!("unsupported netpbm variant {:?}", String::from_utf8_lossy(m)),
        )),
        _ => Err(Error::parse(0, "missing magic number")),
    }
}

pub fn encode(img: &ImageGrid, format: ImageFormat) -> Vec<u8> {
    match format {
        ImageFormat::PgmBinary => {
            let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
            out.extend(img.data().iter().map(|&v| to_u8(v)));
            out
        }
        ImageFormat::PgmAscii => {
            let mut out = format!("P2\n{} {}\n255\n", img.width(), img.height());
            for row in img.data().chunks_exact(img.width()) {
                let line: Vec<String> = row.iter().map(|&v| to_u8(v).to_string()).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
            out.into_bytes()
        }
        ImageFormat::Pfm => {
            let mut out = format!("Pf\n{} {}\n-1.0\n", img.width(), img.height()).into_bytes();
            for row in img.data().chunks_exact(img.width()).rev() {
                for &v in row {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            out
        }
    }
}

/// Clamp-and-round used for 8-bit output.
pub fn to_u8(v: f64) -> u8 {
    v.clamp(0.0, 255.0).round() as u8
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&c) = self.bytes.get(self.pos) {
            if c == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.skip_space_and_comments();
        let start = self.pos;
        while let Some(&c) = self.bytes.get(self.pos) {
            if c.is_ascii_whitespace() || c == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("expected {what}, found end of data")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::parse(start, format!("expected {what}, found non-text bytes")))?;
        Ok((start, text))
    }

    fn unsigned(&mut self, what: &str) -> Result<(usize, usize)> {
        let (at, text) = self.token(what)?;
        let value = text
            .parse::<usize>()
            .map_err(|_| Error::parse(at, format!("expected {what}, found {text:?}")))?;
        Ok((at, value))
    }

    fn float(&mut self, what: &str) -> Result<(usize, f64)> {
        let (at, text) = self.token(what)?;
        let value = text
            .parse::<f64>()
            .map_err(|_| Error::parse(at, format!("expected {what}, found {text:?}")))?;
        Ok((at, value))
    }

    /// Consumes the single whitespace byte that ends a binary header.
    fn header_terminator(&mut self) -> Result<()> {
        match self.bytes.get(self.pos) {
            Some(c) if c.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            Some(_) => Err(Error::parse(self.pos, "expected whitespace after header")),
            None => Err(Error::parse(self.pos, "truncated header")),
        }
    }
}

fn dimensions(cur: &mut Cursor<'_>) -> Result<(usize, usize)> {
    let (wat, width) = cur.unsigned("width")?;
    let (hat, height) = cur.unsigned("height")?;
    if width < ImageGrid::MIN_SIDE {
        return Err(Error::parse(wat, format!("width {width} below minimum 3")));
    }
    if height < ImageGrid::MIN_SIDE {
        return Err(Error::parse(hat, format!("height {height} below minimum 3")));
    }
    Ok((width, height))
}

fn decode_pgm(bytes: &[u8], binary: bool) -> Result<ImageGrid> {
    let mut cur = Cursor { bytes, pos: 2 };
    let (width, height) = dimensions(&mut cur)?;
    let (mat, maxval) = cur.unsigned("maximum value")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(
            mat,
            format!("unsupported maximum value {maxval} (only 8-bit PGM, 1..=255)"),
        ));
    }
    let scale = 255.0 / maxval as f64;
    let n = width * height;
    let mut data = Vec::with_capacity(n);
    if binary {
        cur.header_terminator()?;
        let start = cur.pos;
        let payload = bytes.get(start..start + n).ok_or_else(|| {
            Error::parse(
                bytes.len(),
                format!("truncated payload: expected {n} bytes, found {}", bytes.len() - start),
            )
        })?;
        for (i, &v) in payload.iter().enumerate() {
            if v as usize > maxval {
                return Err(Error::parse(start + i, format!("sample {v} exceeds maximum {maxval}")));
            }
            data.push(if maxval == 255 { v as f64 } else { v as f64 * scale });
        }
    } else {
        for _ in 0..n {
            let (at, v) = cur.unsigned("sample").map_err(|e| match e {
                Error::Parse { offset, message } if message.contains("end of data") => {
                    Error::parse(offset, format!("truncated payload: expected {n} samples"))
                }
                e => e,
            })?;
            if v > maxval {
                return Err(Error::parse(at, format!("sample {v} exceeds maximum {maxval}")));
            }
            data.push(if maxval == 255 { v as f64 } else { v as f64 * scale });
        }
    }
    ImageGrid::new(width, height, data)
}

fn decode_pfm(bytes: &[u8]) -> Result<ImageGrid> {
    let mut cur = Cursor { bytes, pos: 2 };
    let (width, height) = dimensions(&mut cur)?;
    let (sat, scale) = cur.float("scale/endianness")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse(sat, format!("invalid scale {scale}")));
    }
    let little = scale < 0.0;
    cur.header_terminator()?;
    let start = cur.pos;
    let n = width * height;
    let payload = bytes.get(start..start + 4 * n).ok_or_else(|| {
        Error::parse(
            bytes.len(),
            format!("truncated payload: expected {} bytes, found {}", 4 * n, bytes.len() - start),
        )
    })?;
    let mut data = vec![0.0; n];
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        if !v.is_finite() {
            return Err(Error::parse(start + 4 * k, "non-finite sample"));
        }
        let (row_from_bottom, x) = (k / width, k % width);
        data[(height - 1 - row_from_bottom) * width + x] = v as f64;
    }
    ImageGrid::new(width, height, data)
}
