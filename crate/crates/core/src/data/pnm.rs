//! Minimal binary PPM (P6) and PGM (P5) reading and writing, 8-bit only.
//! These are the artifact's own fixture formats; writes are byte-exact so
//! seeded synthetic sequences reproduce identical files.

use super::DataError;
use image::{GrayImage, RgbImage};
use std::fs;
use std::io::Write;
use std::path::Path;

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<(), DataError> {
    let mut f = fs::File::create(path)?;
    write!(f, "P6\n{} {}\n255\n", img.width(), img.height())?;
    f.write_all(img.as_raw())?;
    Ok(())
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<(), DataError> {
    let mut f = fs::File::create(path)?;
    write!(f, "P5\n{} {}\n255\n", img.width(), img.height())?;
    f.write_all(img.as_raw())?;
    Ok(())
}

/// Reads the PNM header, returning (width, height, payload offset).
fn parse_header(bytes: &[u8], magic: &[u8], path: &Path) -> Result<(u32, u32, usize), DataError> {
    let err = |msg: &str| DataError::Decode(format!("{}: {}", path.display(), msg));
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(err("bad magic"));
    }
    let mut pos = 2;
    let mut fields = Vec::with_capacity(3);
    while fields.len() < 3 {
        // skip whitespace and '#' comments
        while pos < bytes.len() {
            if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(err("truncated header"));
        }
        let v: u32 = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| err("bad header"))?
            .parse()
            .map_err(|_| err("bad header value"))?;
        fields.push(v);
    }
    if fields[2] != 255 {
        return Err(err("only maxval 255 supported"));
    }
    // single whitespace after maxval
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(err("missing payload separator"));
    }
    Ok((fields[0], fields[1], pos + 1))
}

pub fn read_ppm(path: &Path) -> Result<RgbImage, DataError> {
    let bytes = fs::read(path)?;
    let (w, h, off) = parse_header(&bytes, b"P6", path)?;
    let need = (w * h * 3) as usize;
    if bytes.len() < off + need {
        return Err(DataError::Decode(format!(
            "{}: truncated pixel data",
            path.display()
        )));
    }
    RgbImage::from_raw(w, h, bytes[off..off + need].to_vec())
        .ok_or_else(|| DataError::Decode(format!("{}: bad dimensions", path.display())))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage, DataError> {
    let bytes = fs::read(path)?;
    let (w, h, off) = parse_header(&bytes, b"P5", path)?;
    let need = (w * h) as usize;
    if bytes.len() < off + need {
        return Err(DataError::Decode(format!(
            "{}: truncated pixel data",
            path.display()
        )));
    }
    GrayImage::from_raw(w, h, bytes[off..off + need].to_vec())
        .ok_or_else(|| DataError::Decode(format!("{}: bad dimensions", path.display())))
}
