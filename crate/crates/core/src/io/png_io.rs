//! PNG read/write for RGB images and 16-bit class-id maps.

use std::io::Cursor;

use crate::error::{Error, Result};
use crate::raster::{ImageRGB, LabelMap2D};

pub(crate) fn encode_png(width: usize, height: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc.write_header()?;
        writer.write_image_data(data)?;
        writer.finish()?;
    }
    Ok(out)
}

pub(crate) struct DecodedPng {
    pub width: usize,
    pub height: usize,
    pub color: png::ColorType,
    pub depth: png::BitDepth,
    pub data: Vec<u8>,
}

pub(crate) fn decode_png(bytes: &[u8]) -> Result<DecodedPng> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf)?;
    buf.truncate(info.buffer_size());
    Ok(DecodedPng {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        data: buf,
    })
}

pub fn encode_image_png(img: &ImageRGB) -> Result<Vec<u8>> {
    encode_png(img.width(), img.height(), png::ColorType::Rgb, png::BitDepth::Eight, img.data())
}

pub fn decode_image_png(bytes: &[u8]) -> Result<ImageRGB> {
    let d = decode_png(bytes)?;
    if d.depth != png::BitDepth::Eight {
        return Err(Error::Format("expected an 8-bit image".into()));
    }
    let data = match d.color {
        png::ColorType::Rgb => d.data,
        png::ColorType::Rgba => d.data.chunks(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => d.data.iter().flat_map(|&g| [g, g, g]).collect(),
        other => return Err(Error::Format(format!("unsupported color type {other:?}"))),
    };
    ImageRGB::new(d.height, d.width, data)
}

/// 16-bit grayscale; IGNORE is stored as 65535.
pub fn encode_label_png(labels: &LabelMap2D) -> Result<Vec<u8>> {
    let data: Vec<u8> = labels.values().iter().flat_map(|v| v.to_be_bytes()).collect();
    encode_png(labels.width(), labels.height(), png::ColorType::Grayscale, png::BitDepth::Sixteen, &data)
}

pub fn decode_label_png(bytes: &[u8]) -> Result<LabelMap2D> {
    let d = decode_png(bytes)?;
    if d.color != png::ColorType::Grayscale || d.depth != png::BitDepth::Sixteen {
        return Err(Error::Format("label maps are 16-bit grayscale PNGs".into()));
    }
    let values = d
        .data
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    LabelMap2D::new(d.height, d.width, values)
}
