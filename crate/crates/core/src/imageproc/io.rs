//! Image file I/O: PNG decode plus binary PPM (P6) / PGM (P5) read/write.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::Image;

/// Loads a PNG or binary PNM image, sniffing the format from the leading
/// bytes. PNG decodes to 3 channels (alpha dropped) unless it is grayscale.
pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    match bytes.as_slice() {
        [b'P', b'5' | b'6', ..] => read_pnm(&bytes).map_err(|detail| Error::ImageDecode {
            path: path.to_path_buf(),
            detail,
        }),
        [0x89, b'P', b'N', b'G', ..] => {
            let decoded = image::load_from_memory(&bytes).map_err(|e| Error::ImageDecode {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
            Ok(match decoded {
                image::DynamicImage::ImageLuma8(img) => {
                    let (w, h) = (img.width() as usize, img.height() as usize);
                    Image::new(w, h, 1, img.into_raw())?
                }
                other => {
                    let rgb = other.to_rgb8();
                    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
                    Image::new(w, h, 3, rgb.into_raw())?
                }
            })
        }
        _ => Err(Error::ImageDecode {
            path: path.to_path_buf(),
            detail: "unrecognized format (expected PNG, P5 PGM, or P6 PPM)".into(),
        }),
    }
}

/// Parses a binary PGM (P5) or PPM (P6) with maxval 255.
pub fn read_pnm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err("not a binary PNM (P5/P6) file".into()),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // Skip whitespace and '#' comments between header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err("truncated PNM header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if pos == start {
            return Err("malformed PNM header field".into());
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are UTF-8");
        *field = text.parse().map_err(|_| "PNM header field overflow")?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(format!("unsupported PNM maxval {maxval} (expected 255)"));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err("missing whitespace after PNM maxval".into()),
    }
    let expected = width * height * channels;
    let data = bytes
        .get(pos..pos + expected)
        .ok_or_else(|| format!("PNM pixel data truncated (expected {expected} bytes)"))?;
    Image::new(width, height, channels, data.to_vec()).map_err(|e| e.to_string())
}

fn write_pnm(img: &Image, magic: &str, path: &Path, comments: &[String]) -> Result<()> {
    let mut out = Vec::with_capacity(img.data().len() + 64);
    out.extend_from_slice(magic.as_bytes());
    out.push(b'\n');
    for c in comments {
        debug_assert!(!c.contains('\n'));
        writeln!(out, "# {c}").expect("vec write");
    }
    writeln!(out, "{} {}\n255", img.width(), img.height()).expect("vec write");
    out.extend_from_slice(img.data());
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes a grayscale image as binary PGM (P5).
pub fn write_pgm(img: &Image, path: &Path, comments: &[String]) -> Result<()> {
    if img.channels() != 1 {
        return Err(Error::InvalidArgument(format!(
            "PGM output requires 1 channel, got {}",
            img.channels()
        )));
    }
    write_pnm(img, "P5", path, comments)
}

/// Writes a color image as binary PPM (P6).
pub fn write_ppm(img: &Image, path: &Path, comments: &[String]) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::InvalidArgument(format!(
            "PPM output requires 3 channels, got {}",
            img.channels()
        )));
    }
    write_pnm(img, "P6", path, comments)
}
