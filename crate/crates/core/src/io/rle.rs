//! Row-major run-length coding of binary masks.
//!
//! Runs alternate zero/one starting with the count of leading zeros, so an
//! all-one mask begins with a `0` run.

use crate::error::{shape_err, Result};
use crate::raster::Mask;

pub fn rle_encode(mask: &Mask) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for &b in mask.bits() {
        if b != current {
            runs.push(len);
            current = b;
            len = 0;
        }
        len += 1;
    }
    runs.push(len);
    runs
}

pub fn rle_decode(runs: &[u32], height: usize, width: usize) -> Result<Mask> {
    let total: u64 = runs.iter().map(|&r| r as u64).sum();
    if total != (height * width) as u64 {
        return shape_err(format!(
            "runs cover {total} pixels, mask {height}x{width} has {}",
            height * width
        ));
    }
    let mut bits = Vec::with_capacity(height * width);
    let mut value = false;
    for &r in runs {
        bits.extend(std::iter::repeat_n(value, r as usize));
        value = !value;
    }
    Mask::new(height, width, bits)
}
