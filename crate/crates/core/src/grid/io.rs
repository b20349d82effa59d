//! Raster and field I/O: binary PGM (P5) / PPM (P6) with maxval 255, masks as
//! `{0, 255}` PGM, and scalar fields as a flat `SFLD` record.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Image, Labeling, ScalarField};
use crate::error::{Result, SegError};

const FIELD_MAGIC: &[u8; 4] = b"SFLD";

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    decode_pnm(&fs::read(path)?)
}

/// Decodes a binary P5/P6 buffer. Only maxval 255 is accepted.
pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let mut cursor = HeaderCursor { bytes, pos: 0 };
    let magic = cursor.token()?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(SegError::Format(format!("unsupported magic {other:?}"))),
    };
    let width = cursor.number()?;
    let height = cursor.number()?;
    let maxval = cursor.number()?;
    if maxval != 255 {
        return Err(SegError::Format(format!("unsupported maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(SegError::Format("zero image dimension".into()));
    }
    // exactly one whitespace byte separates the header from the payload
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => return Err(SegError::Format("missing header terminator".into())),
    }
    let need = width * height * channels;
    let payload = &bytes[cursor.pos..];
    if payload.len() < need {
        return Err(SegError::Format(format!(
            "truncated payload: need {need} bytes, have {}",
            payload.len()
        )));
    }
    let data = payload[..need].iter().map(|&b| b as f64).collect();
    Image::new(width, height, channels, data)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn token(&mut self) -> Result<String> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(_) => break,
                None => return Err(SegError::Format("unexpected end of header".into())),
            }
        }
        let start = self.pos;
        while let Some(b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || *b == b'#' {
                break;
            }
            self.pos += 1;
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<usize> {
        let t = self.token()?;
        t.parse()
            .map_err(|_| SegError::Format(format!("bad header number {t:?}")))
    }
}

/// Encodes an image as P5/P6, rounding and clamping samples to bytes.
pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    out
}

pub fn save_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    fs::write(path, encode_pnm(img))?;
    Ok(())
}

/// Writes a mask as a P5 image with set pixels at 255.
pub fn save_mask(path: impl AsRef<Path>, s: &Labeling) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", s.width(), s.height()).into_bytes();
    out.extend(s.as_slice().iter().map(|&b| if b { 255u8 } else { 0 }));
    fs::write(path, out)?;
    Ok(())
}

/// Loads a single-channel PGM as a mask; any nonzero sample is set.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Labeling> {
    let img = load_image(path)?;
    if img.channels() != 1 {
        return Err(SegError::Format("mask must be a grayscale PGM".into()));
    }
    Labeling::from_vec(
        img.width(),
        img.height(),
        img.data().iter().map(|&v| v != 0.0).collect(),
    )
}

pub fn encode_field(f: &ScalarField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * f.len());
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&(f.width() as u32).to_le_bytes());
    out.extend_from_slice(&(f.height() as u32).to_le_bytes());
    for v in f.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(mut bytes: &[u8]) -> Result<ScalarField> {
    let mut head = [0u8; 12];
    bytes
        .read_exact(&mut head)
        .map_err(|_| SegError::Format("truncated field header".into()))?;
    if &head[..4] != FIELD_MAGIC {
        return Err(SegError::Format("bad field magic".into()));
    }
    let width = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    if bytes.len() != width * height * 8 {
        return Err(SegError::Format(format!(
            "field payload has {} bytes, expected {}",
            bytes.len(),
            width * height * 8
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ScalarField::from_vec(width, height, data)
}

pub fn save_field(path: impl AsRef<Path>, f: &ScalarField) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_field(f))?;
    Ok(())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    decode_field(&fs::read(path)?)
}
