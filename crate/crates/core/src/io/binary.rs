//! Little-endian binary formats: "CEB1" text-embedding banks and "PRB1"
//! dense f32 volumes (H, W, C header, row-major, channel-minor).

use crate::cda::PromptEmbeddingBank;
use crate::error::{Error, Result};
use crate::volume::ProbVolume;

pub const BANK_MAGIC: &[u8; 4] = b"CEB1";
pub const VOLUME_MAGIC: &[u8; 4] = b"PRB1";

fn header(bytes: &[u8], magic: &[u8; 4]) -> Result<[u32; 3]> {
    if bytes.len() < 16 {
        return Err(Error::Format(format!("{} bytes is shorter than the 16-byte header", bytes.len())));
    }
    if &bytes[..4] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let f = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap());
    Ok([f(0), f(1), f(2)])
}

fn payload(bytes: &[u8], count: usize) -> Result<Vec<f32>> {
    let need = count
        .checked_mul(4)
        .and_then(|n| n.checked_add(16))
        .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
    if bytes.len() < need {
        return Err(Error::Format(format!(
            "truncated payload: need {need} bytes, have {}",
            bytes.len()
        )));
    }
    if bytes.len() > need {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - need)));
    }
    Ok(bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect())
}

fn write(magic: &[u8; 4], dims: [usize; 3], data: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + data.len() * 4);
    out.extend_from_slice(magic);
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_embedding_bank(bytes: &[u8], expected_classes: Option<usize>) -> Result<PromptEmbeddingBank> {
    let [c, p, d] = header(bytes, BANK_MAGIC)?;
    let data = payload(bytes, c as usize * p as usize * d as usize)?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("embedding bank holds non-finite values".into()));
    }
    if let Some(n) = expected_classes {
        if n != c as usize {
            return Err(Error::Format(format!("bank has {c} classes, catalog has {n}")));
        }
    }
    PromptEmbeddingBank::new(c as usize, p as usize, d as usize, data)
}

pub fn write_embedding_bank(bank: &PromptEmbeddingBank) -> Vec<u8> {
    write(BANK_MAGIC, [bank.classes(), bank.prompts(), bank.dim()], bank.data())
}

/// Dimensions and values of any PRB1 file, without normalization checks.
pub fn read_volume_raw(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f32>)> {
    let [h, w, c] = header(bytes, VOLUME_MAGIC)?;
    let data = payload(bytes, h as usize * w as usize * c as usize)?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("volume holds non-finite values".into()));
    }
    Ok((h as usize, w as usize, c as usize, data))
}

pub fn write_volume_raw(height: usize, width: usize, channels: usize, data: &[f32]) -> Vec<u8> {
    assert_eq!(height * width * channels, data.len());
    write(VOLUME_MAGIC, [height, width, channels], data)
}

pub fn read_prob_volume(bytes: &[u8]) -> Result<ProbVolume> {
    let (h, w, c, data) = read_volume_raw(bytes)?;
    ProbVolume::new(h, w, c, data)
}

pub fn write_prob_volume(v: &ProbVolume) -> Vec<u8> {
    write_volume_raw(v.height(), v.width(), v.classes(), v.data())
}
