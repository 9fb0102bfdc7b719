//! Binary (P5) and ASCII (P2) graymap I/O. 16-bit samples are big-endian.

use std::path::Path;

use super::{Silhouette, ThermalImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

impl From<PgmImage> for ThermalImage {
    fn from(p: PgmImage) -> Self {
        ThermalImage {
            width: p.width,
            height: p.height,
            data: p.data,
        }
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
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

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Pgm(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Pgm(format!("{what} out of range")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<PgmImage> {
    if bytes.len() < 2 || bytes[0] != b'P' || !matches!(bytes[1], b'2' | b'5') {
        return Err(Error::Pgm("missing P2/P5 magic".into()));
    }
    let binary = bytes[1] == b'5';
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Pgm("zero image dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Pgm(format!("maxval {maxval} outside 1..=65535")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Pgm("image too large".into()))?;
    let data = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        if h.pos >= bytes.len() || !bytes[h.pos].is_ascii_whitespace() {
            return Err(Error::Pgm("missing raster separator".into()));
        }
        let raster = &bytes[h.pos + 1..];
        if maxval < 256 {
            if raster.len() < n {
                return Err(Error::Pgm(format!("raster has {} of {n} samples", raster.len())));
            }
            raster[..n].iter().map(|&b| u16::from(b)).collect()
        } else {
            if raster.len() < 2 * n {
                return Err(Error::Pgm(format!("raster has {} of {} bytes", raster.len(), 2 * n)));
            }
            raster[..2 * n]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        }
    } else {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(h.number("sample")? as u16);
        }
        v
    };
    if let Some(&bad) = data.iter().find(|&&v| usize::from(v) > maxval) {
        return Err(Error::Pgm(format!("sample {bad} exceeds maxval {maxval}")));
    }
    Ok(PgmImage {
        width,
        height,
        maxval: maxval as u16,
        data,
    })
}

pub fn read_pgm(path: &Path) -> Result<PgmImage> {
    decode_pgm(&std::fs::read(path)?)
}

pub fn encode_pgm16(img: &ThermalImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width, img.height).into_bytes();
    out.reserve(2 * img.data.len());
    for v in &img.data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

/// 8-bit mask: 255 for set pixels, 0 elsewhere.
pub fn encode_mask_pgm(sil: &Silhouette) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", sil.width(), sil.height()).into_bytes();
    out.extend(sil.mask().iter().map(|&m| if m { 255u8 } else { 0 }));
    out
}

pub fn write_pgm16(path: &Path, img: &ThermalImage) -> Result<()> {
    std::fs::write(path, encode_pgm16(img))?;
    Ok(())
}

pub fn write_mask_pgm(path: &Path, sil: &Silhouette) -> Result<()> {
    std::fs::write(path, encode_mask_pgm(sil))?;
    Ok(())
}
