//! Binary greymap (P5) output for position maps.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Encodes an `h x w` row-major map as P5 with maxval 255, min-max scaled.
/// A constant map encodes as mid-grey.
pub fn encode_pgm(values: &[f32], h: usize, w: usize) -> Result<Vec<u8>> {
    if values.len() != h * w || h == 0 || w == 0 {
        return Err(Error::invalid(format!("pgm: {} values for a {h}x{w} map", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("pgm: map contains non-finite values"));
    }
    let lo = values.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if hi > lo {
            (((v - lo) / (hi - lo)) * 255.0).round() as u8
        } else {
            128
        }
    }));
    Ok(out)
}

pub fn write_pgm(path: impl AsRef<Path>, values: &[f32], h: usize, w: usize) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(values, h, w)?).map_err(|e| Error::io(path, e))
}
