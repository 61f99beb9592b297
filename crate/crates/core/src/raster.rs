//! Pixel containers: RGB images, class-id maps and binary masks.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

pub const IGNORE: u16 = u16::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRGB {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl ImageRGB {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height * width * 3 != data.len() {
            return shape_err(format!(
                "image {height}x{width} needs {} bytes, got {}",
                height * width * 3,
                data.len()
            ));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(height * width * 3).collect();
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, idx: usize) -> [u8; 3] {
        let o = idx * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set_pixel(&mut self, idx: usize, rgb: [u8; 3]) {
        let o = idx * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap2D {
    height: usize,
    width: usize,
    values: Vec<u16>,
}

impl LabelMap2D {
    pub fn new(height: usize, width: usize, values: Vec<u16>) -> Result<Self> {
        if height * width != values.len() {
            return shape_err(format!(
                "label map {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            ));
        }
        Ok(Self { height, width, values })
    }

    pub fn filled(height: usize, width: usize, value: u16) -> Self {
        Self {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [u16] {
        &mut self.values
    }

    pub fn get(&self, idx: usize) -> u16 {
        self.values[idx]
    }

    /// Every non-IGNORE value must index the catalog.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if let Some(v) = self
            .values
            .iter()
            .find(|&&v| v != IGNORE && v as usize >= num_classes)
        {
            return Err(Error::InvalidValue(format!(
                "label {v} outside catalog of {num_classes} classes"
            )));
        }
        Ok(())
    }

    /// Sorted distinct non-IGNORE classes.
    pub fn present_classes(&self) -> Vec<u16> {
        let mut seen: Vec<u16> = self.values.iter().copied().filter(|&v| v != IGNORE).collect();
        seen.sort_unstable();
        seen.dedup();
        seen
    }
}

/// Tight axis-aligned pixel box; `w`/`h` count pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height * width != bits.len() {
            return shape_err(format!(
                "mask {height}x{width} needs {} bits, got {}",
                height * width,
                bits.len()
            ));
        }
        Ok(Self { height, width, bits })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize) -> bool) -> Self {
        Self {
            height,
            width,
            bits: (0..height * width).map(f).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn set(&mut self, idx: usize, v: bool) {
        self.bits[idx] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn or_assign(&mut self, other: &Mask) {
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    pub fn and_not(&self, other: &Mask) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a && !b)
                .collect(),
        }
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).any(|(&a, &b)| a && b)
    }

    pub fn iou(&self, other: &Mask) -> f64 {
        let inter = self.intersection_count(other);
        let union = self.count() + other.count() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Tight bounds; `None` for an empty mask.
    pub fn bounding_box(&self) -> Option<PixelBox> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for i in self.ones() {
            let (y, x) = (i / self.width, i % self.width);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        (x0 != usize::MAX).then(|| PixelBox {
            x: x0,
            y: y0,
            w: x1 - x0 + 1,
            h: y1 - y0 + 1,
        })
    }
}

pub(crate) fn check_dims(what: &str, a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return shape_err(format!("{what}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1));
    }
    Ok(())
}
