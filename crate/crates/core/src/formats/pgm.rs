//! ASCII PGM (P2). Masks store raw class codes with maxval 2. Images are
//! quantized to 16 bits with the physical range recorded in a header
//! comment; integer 0 is reserved for invalid pixels, so valid values map
//! to 1..=65535. Quantization is idempotent: importing and re-exporting
//! reproduces the file byte for byte.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::cloud::TissueClass;
use crate::img::IntensityImage;
use crate::seg::SegmentationMask;

use super::FormatError;

const IMAGE_MAXVAL: u32 = 65535;

pub fn write_mask_pgm(path: &Path, mask: &SegmentationMask) -> Result<(), FormatError> {
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        writeln!(w, "P2")?;
        writeln!(w, "{} {}", mask.width(), mask.height())?;
        writeln!(w, "2")?;
        for y in 0..mask.height() {
            let row: Vec<String> = (0..mask.width())
                .map(|x| mask.get(x, y).code().to_string())
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        w.flush()
    })()
    .map_err(|e| FormatError::io(path, e))
}

pub fn read_mask_pgm(path: &Path) -> Result<SegmentationMask, FormatError> {
    let (width, height, maxval, values, _comments) = read_pgm_raw(path)?;
    if maxval > 2 {
        return Err(FormatError::structure(
            path,
            format!("mask maxval must be 2, got {maxval}"),
        ));
    }
    let mut classes = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        let class = u16::try_from(*v)
            .ok()
            .and_then(TissueClass::from_code)
            .filter(|c| *c != TissueClass::Margin)
            .ok_or_else(|| {
                FormatError::structure(path, format!("pixel {i} has invalid class value {v}"))
            })?;
        classes.push(class);
    }
    SegmentationMask::new(width, height, classes).map_err(FormatError::from)
}

pub fn write_image_pgm(path: &Path, img: &IntensityImage) -> Result<(), FormatError> {
    let (lo, hi) = value_range(img);
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        writeln!(w, "P2")?;
        writeln!(w, "# range {} {}", lo, hi)?;
        writeln!(w, "{} {}", img.width(), img.height())?;
        writeln!(w, "{}", IMAGE_MAXVAL)?;
        for y in 0..img.height() {
            let row: Vec<String> = (0..img.width())
                .map(|x| quantize(img.get(x, y), lo, hi).to_string())
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        w.flush()
    })()
    .map_err(|e| FormatError::io(path, e))
}

pub fn read_image_pgm(path: &Path) -> Result<IntensityImage, FormatError> {
    let (width, height, maxval, values, comments) = read_pgm_raw(path)?;
    if maxval != IMAGE_MAXVAL {
        return Err(FormatError::structure(
            path,
            format!("image maxval must be {IMAGE_MAXVAL}, got {maxval}"),
        ));
    }
    let range = comments.iter().find_map(|c| {
        let rest = c.strip_prefix("range ")?;
        let mut parts = rest.split_whitespace();
        let lo: f64 = parts.next()?.parse().ok()?;
        let hi: f64 = parts.next()?.parse().ok()?;
        Some((lo, hi))
    });
    let (lo, hi) =
        range.ok_or_else(|| FormatError::structure(path, "missing '# range lo hi' comment"))?;
    let mut img = IntensityImage::new(width, height)?;
    for (i, &v) in values.iter().enumerate() {
        let x = (i % width as usize) as u32;
        let y = (i / width as usize) as u32;
        if v > 0 {
            img.set(x, y, dequantize(v, lo, hi));
        }
    }
    Ok(img)
}

fn value_range(img: &IntensityImage) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, _, v) in img.iter_valid() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        (0.0, 0.0)
    } else {
        (lo, hi)
    }
}

fn quantize(value: Option<f64>, lo: f64, hi: f64) -> u32 {
    match value {
        None => 0,
        Some(v) => {
            if hi > lo {
                1 + (((v - lo) / (hi - lo)) * (IMAGE_MAXVAL - 1) as f64).round() as u32
            } else {
                1
            }
        }
    }
}

fn dequantize(q: u32, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        lo + (q - 1) as f64 / (IMAGE_MAXVAL - 1) as f64 * (hi - lo)
    } else {
        lo
    }
}

/// Parses an ASCII PGM: returns (width, height, maxval, values, comments).
fn read_pgm_raw(path: &Path) -> Result<(u32, u32, u32, Vec<u32>, Vec<String>), FormatError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| FormatError::io(path, e))?;
    let mut comments = Vec::new();
    let mut tokens: Vec<&str> = Vec::new();
    for line in text.lines() {
        if let Some(comment) = line.trim_start().strip_prefix('#') {
            comments.push(comment.trim().to_string());
        } else {
            tokens.extend(line.split_whitespace());
        }
    }
    if tokens.first() != Some(&"P2") {
        return Err(FormatError::structure(path, "not an ASCII PGM (P2)"));
    }
    if tokens.len() < 4 {
        return Err(FormatError::structure(path, "truncated PGM header"));
    }
    let parse_u32 = |s: &str, what: &str| -> Result<u32, FormatError> {
        s.parse::<u32>()
            .map_err(|_| FormatError::structure(path, format!("bad {what}: {s}")))
    };
    let width = parse_u32(tokens[1], "width")?;
    let height = parse_u32(tokens[2], "height")?;
    let maxval = parse_u32(tokens[3], "maxval")?;
    let expected = width as usize * height as usize;
    let values: Result<Vec<u32>, FormatError> = tokens[4..]
        .iter()
        .map(|s| parse_u32(s, "pixel"))
        .collect();
    let values = values?;
    if values.len() != expected {
        return Err(FormatError::structure(
            path,
            format!("expected {expected} pixels, got {}", values.len()),
        ));
    }
    if let Some(bad) = values.iter().find(|&&v| v > maxval) {
        return Err(FormatError::structure(
            path,
            format!("pixel value {bad} exceeds maxval {maxval}"),
        ));
    }
    Ok((width, height, maxval, values, comments))
}
