//! Overlay rendering of panoptic labels.

use crate::catalog::ClassCatalog;
use crate::components::boundary;
use crate::error::{Error, Result};
use crate::panoptic::PanopticLabel;
use crate::raster::{check_dims, ImageRGB, IGNORE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VizPalette {
    colors: Vec<[u8; 3]>,
    boundary: [u8; 3],
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = (h % 1.0) * 6.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|u| ((u + m) * 255.0).round() as u8)
}

impl VizPalette {
    pub fn new(colors: Vec<[u8; 3]>, boundary: [u8; 3]) -> Result<Self> {
        let mut sorted = colors.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidValue("palette colors must be distinct".into()));
        }
        Ok(Self { colors, boundary })
    }

    /// Golden-ratio hue spacing with alternating brightness; white boundaries.
    pub fn for_catalog(catalog: &ClassCatalog) -> Self {
        let colors = (0..catalog.len())
            .map(|c| {
                let v = if c % 2 == 0 { 0.95 } else { 0.7 };
                hsv_to_rgb(c as f64 * 0.618_033_988_749_895, 0.75, v)
            })
            .collect();
        Self::new(colors, [255, 255, 255]).expect("golden-ratio hues are distinct")
    }

    pub fn color(&self, class: u16) -> [u8; 3] {
        self.colors[class as usize]
    }

    pub fn boundary_color(&self) -> [u8; 3] {
        self.boundary
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }
}

/// Blends class colors at 50% over `image` and paints each instance's
/// 1-pixel inner boundary. IGNORE pixels keep the image color.
pub fn visualize(label: &PanopticLabel, image: &ImageRGB, palette: &VizPalette) -> Result<ImageRGB> {
    check_dims("visualize", label.dims(), image.dims())?;
    let mut out = image.clone();
    for (p, &c) in label.semantic().values().iter().enumerate() {
        if c == IGNORE {
            continue;
        }
        if c as usize >= palette.len() {
            return Err(Error::InvalidValue(format!("class {c} has no palette color")));
        }
        let a = image.pixel(p);
        let b = palette.color(c);
        out.set_pixel(p, std::array::from_fn(|k| (a[k] as u16 + b[k] as u16).div_ceil(2) as u8));
    }
    for r in label.instances().records() {
        for p in boundary(r.mask()).ones() {
            out.set_pixel(p, palette.boundary);
        }
    }
    Ok(out)
}
