//! Grayscale PGM (`P2` plain and `P5` raw) reading and writing.
//!
//! Samples are divided by maxval on load. Writing clamps to `[0, 1]` and
//! quantizes with `round(p·maxval)`; 16-bit rasters are big-endian.

use std::fs;
use std::path::Path;

use deblur_core::{Image, RealPlane};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

/// Maxval used by [`save_image`].
pub const DEFAULT_MAXVAL: u16 = 65535;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    /// `P2`, whitespace-separated decimal samples.
    Plain,
    /// `P5`, one or two bytes per sample.
    Raw,
}

struct Header {
    encoding: Encoding,
    width: usize,
    height: usize,
    maxval: u32,
    /// Offset of the first raster byte.
    data_start: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' && self.bytes[self.pos] != b'\r' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() && self.bytes[self.pos] != b'#' {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn header_number(&mut self, what: &str) -> Result<u32> {
        let tok = self
            .token()
            .ok_or_else(|| Error::CorruptHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| Error::CorruptHeader(format!("{what} is not a number: {:?}", String::from_utf8_lossy(tok))))
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::UnsupportedFormat("not a PNM file".into()));
    }
    let encoding = match bytes[1] {
        b'2' => Encoding::Plain,
        b'5' => Encoding::Raw,
        b'1' | b'4' => return Err(Error::UnsupportedFormat("bitmap (PBM) input".into())),
        b'3' | b'6' => return Err(Error::UnsupportedFormat("color (PPM) input; convert to grayscale".into())),
        b'7' => return Err(Error::UnsupportedFormat("PAM input".into())),
        other => return Err(Error::UnsupportedFormat(format!("unknown magic P{}", other as char))),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    if cur.bytes.get(2).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
        return Err(Error::CorruptHeader("magic not followed by whitespace".into()));
    }
    let width = cur.header_number("width")? as usize;
    let height = cur.header_number("height")? as usize;
    let maxval = cur.header_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::CorruptHeader(format!("empty raster {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::CorruptHeader(format!("maxval {maxval} outside 1..=65535")));
    }
    // Exactly one whitespace byte separates maxval from a raw raster.
    match cur.bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        Some(_) => return Err(Error::CorruptHeader("maxval not followed by whitespace".into())),
        None if encoding == Encoding::Raw => {
            return Err(Error::TruncatedData {
                expected: width * height,
                found: 0,
            })
        }
        None => {}
    }
    Ok(Header {
        encoding,
        width,
        height,
        maxval,
        data_start: cur.pos,
    })
}

/// Decodes a PGM byte stream.
pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let header = parse_header(bytes)?;
    let count = header
        .width
        .checked_mul(header.height)
        .ok_or_else(|| Error::CorruptHeader("raster size overflows".into()))?;
    let maxval = header.maxval;
    let mut raw = Vec::with_capacity(count);
    match header.encoding {
        Encoding::Raw => {
            let wide = maxval > 255;
            let per = if wide { 2 } else { 1 };
            let data = &bytes[header.data_start..];
            if data.len() < count * per {
                return Err(Error::TruncatedData {
                    expected: count,
                    found: data.len() / per,
                });
            }
            for i in 0..count {
                let v = if wide {
                    u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as u32
                } else {
                    data[i] as u32
                };
                raw.push(v);
            }
        }
        Encoding::Plain => {
            let mut cur = Cursor {
                bytes,
                pos: header.data_start,
            };
            for i in 0..count {
                let tok = cur.token().ok_or(Error::TruncatedData { expected: count, found: i })?;
                let v = std::str::from_utf8(tok)
                    .ok()
                    .and_then(|s| s.parse::<u32>().ok())
                    .ok_or_else(|| Error::InvalidSample {
                        index: i,
                        value: String::from_utf8_lossy(tok).into_owned(),
                        maxval,
                    })?;
                raw.push(v);
            }
        }
    }
    if let Some((index, &v)) = raw.iter().enumerate().find(|(_, &v)| v > maxval) {
        return Err(Error::InvalidSample {
            index,
            value: v.to_string(),
            maxval,
        });
    }
    let scale = maxval as f64;
    let pixels = raw.into_iter().map(|v| v as f64 / scale).collect();
    Ok(RealPlane::new(header.height, header.width, pixels)?)
}

/// Encodes an image after clamping to `[0, 1]`.
pub fn encode_pgm(image: &Image, maxval: u16, encoding: Encoding) -> Result<Vec<u8>> {
    if maxval == 0 {
        return Err(Error::InvalidArgument("maxval must be positive".into()));
    }
    if !image.is_finite() {
        return Err(deblur_core::Error::NonFinite("image").into());
    }
    let m = maxval as f64;
    let samples = image.as_slice().iter().map(|&p| (p.clamp(0.0, 1.0) * m).round() as u16);
    let (h, w) = image.dims();
    let magic = match encoding {
        Encoding::Plain => "P2",
        Encoding::Raw => "P5",
    };
    let mut out = format!("{magic}\n{w} {h}\n{maxval}\n").into_bytes();
    match encoding {
        Encoding::Raw if maxval > 255 => samples.for_each(|s| out.extend_from_slice(&s.to_be_bytes())),
        Encoding::Raw => samples.for_each(|s| out.push(s as u8)),
        Encoding::Plain => {
            for (i, s) in samples.enumerate() {
                out.extend_from_slice(s.to_string().as_bytes());
                out.push(if (i + 1) % w == 0 { b'\n' } else { b' ' });
            }
        }
    }
    Ok(out)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|e| e.in_file(path))
}

/// Writes a raw 16-bit PGM.
pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    save_image_with(image, path, DEFAULT_MAXVAL, Encoding::Raw)
}

pub fn save_image_with(image: &Image, path: impl AsRef<Path>, maxval: u16, encoding: Encoding) -> Result<()> {
    let bytes = encode_pgm(image, maxval, encoding)?;
    write_atomic(path.as_ref(), &bytes)
}
