//! Panoptic labels as a 24-bit RGB PNG plus a JSON segment sidecar.
//!
//! Pixel id = R + 256·G + 65536·B. Stuff pixels carry `class·1000`, thing
//! pixels `class·1000 + ordinal` with ordinals 1-based per class in
//! ascending instance-id order, IGNORE pixels carry 0. Id 0 is reserved, so
//! a stuff segment of class 0 is written as id 1 (class-0 ordinals are never
//! used by stuff, and `1 / 1000 == 0` keeps the class recoverable).

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::png_io::{decode_png, encode_png};
use crate::catalog::ClassCatalog;
use crate::error::{Error, Result};
use crate::instance::{InstanceRecord, InstanceSet, Provenance};
use crate::panoptic::PanopticLabel;
use crate::raster::{LabelMap2D, Mask, IGNORE};

pub const MAX_INSTANCES_PER_CLASS: usize = 999;
const MAX_ID: u32 = (1 << 24) - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub id: u32,
    pub class_id: u16,
    pub is_thing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<u32>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanopticSidecar {
    pub height: usize,
    pub width: usize,
    pub provenance: Provenance,
    pub segments: Vec<SegmentInfo>,
}

pub fn stuff_segment_id(class_id: u16) -> u32 {
    if class_id == 0 {
        1
    } else {
        class_id as u32 * 1000
    }
}

pub fn encode_panoptic(label: &PanopticLabel, catalog: &ClassCatalog) -> Result<(Vec<u8>, PanopticSidecar)> {
    label.check(catalog)?;
    let (h, w) = label.dims();
    let mut ids = vec![0u32; h * w];
    let mut segments = Vec::new();

    let mut owned = vec![false; h * w];
    for r in label.instances().records() {
        for i in r.mask().ones() {
            owned[i] = true;
        }
    }
    let mut stuff = BTreeMap::new();
    for (i, &v) in label.semantic().values().iter().enumerate() {
        if v != IGNORE && !owned[i] {
            let id = stuff_segment_id(v);
            if id > MAX_ID {
                return Err(Error::Capacity(format!("class {v} does not fit a 24-bit id")));
            }
            ids[i] = id;
            stuff.insert(v, id);
        }
    }
    for (class_id, id) in stuff {
        segments.push(SegmentInfo {
            id,
            class_id,
            is_thing: false,
            instance_id: None,
            score: 1.0,
        });
    }

    let mut per_class: BTreeMap<u16, Vec<u32>> = BTreeMap::new();
    for r in label.instances().records() {
        per_class.entry(r.class_id()).or_default().push(r.id());
    }
    let mut ordinal: HashMap<u32, u32> = HashMap::new();
    for (class_id, mut members) in per_class {
        if members.len() > MAX_INSTANCES_PER_CLASS {
            return Err(Error::Capacity(format!(
                "class {class_id} has {} instances, at most {MAX_INSTANCES_PER_CLASS} fit",
                members.len()
            )));
        }
        members.sort_unstable();
        for (k, id) in members.into_iter().enumerate() {
            ordinal.insert(id, k as u32 + 1);
        }
    }
    for r in label.instances().records() {
        let id = r.class_id() as u32 * 1000 + ordinal[&r.id()];
        if id > MAX_ID {
            return Err(Error::Capacity(format!("class {} does not fit a 24-bit id", r.class_id())));
        }
        for i in r.mask().ones() {
            ids[i] = id;
        }
        segments.push(SegmentInfo {
            id,
            class_id: r.class_id(),
            is_thing: true,
            instance_id: Some(r.id()),
            score: r.score(),
        });
    }

    let rgb: Vec<u8> = ids
        .iter()
        .flat_map(|&id| [(id & 0xFF) as u8, ((id >> 8) & 0xFF) as u8, ((id >> 16) & 0xFF) as u8])
        .collect();
    let png = encode_png(w, h, png::ColorType::Rgb, png::BitDepth::Eight, &rgb)?;
    Ok((
        png,
        PanopticSidecar {
            height: h,
            width: w,
            provenance: label.instances().provenance(),
            segments,
        },
    ))
}

/// Raw 24-bit segment ids of a panoptic PNG.
pub fn decode_segment_ids(png_bytes: &[u8]) -> Result<(usize, usize, Vec<u32>)> {
    let d = decode_png(png_bytes)?;
    if d.color != png::ColorType::Rgb || d.depth != png::BitDepth::Eight {
        return Err(Error::Format("panoptic PNGs are 8-bit RGB".into()));
    }
    let ids = d
        .data
        .chunks_exact(3)
        .map(|p| p[0] as u32 | (p[1] as u32) << 8 | (p[2] as u32) << 16)
        .collect();
    Ok((d.height, d.width, ids))
}

pub fn decode_panoptic(png_bytes: &[u8], sidecar: &PanopticSidecar, catalog: &ClassCatalog) -> Result<PanopticLabel> {
    let (h, w, ids) = decode_segment_ids(png_bytes)?;
    if (h, w) != (sidecar.height, sidecar.width) {
        return Err(Error::Format(format!(
            "sidecar says {}x{}, image is {h}x{w}",
            sidecar.height, sidecar.width
        )));
    }
    let mut by_id: HashMap<u32, usize> = HashMap::new();
    for (k, s) in sidecar.segments.iter().enumerate() {
        if s.id == 0 {
            return Err(Error::Format("segment id 0 is reserved for IGNORE".into()));
        }
        if !catalog.contains(s.class_id) {
            return Err(Error::Format(format!("segment {} references unknown class {}", s.id, s.class_id)));
        }
        if s.id / 1000 != s.class_id as u32 {
            return Err(Error::Format(format!("segment id {} does not encode class {}", s.id, s.class_id)));
        }
        if s.is_thing != catalog.is_thing(s.class_id) || s.is_thing != s.instance_id.is_some() {
            return Err(Error::Format(format!("segment {} has an inconsistent thing flag", s.id)));
        }
        if by_id.insert(s.id, k).is_some() {
            return Err(Error::Format(format!("segment {} listed twice", s.id)));
        }
    }

    let mut semantic = vec![IGNORE; h * w];
    let mut masks: Vec<Option<Vec<bool>>> = sidecar
        .segments
        .iter()
        .map(|s| s.is_thing.then(|| vec![false; h * w]))
        .collect();
    let mut seen = vec![false; sidecar.segments.len()];
    for (i, &id) in ids.iter().enumerate() {
        if id == 0 {
            continue;
        }
        let k = *by_id
            .get(&id)
            .ok_or_else(|| Error::Format(format!("pixel {i} has id {id} missing from the sidecar")))?;
        seen[k] = true;
        semantic[i] = sidecar.segments[k].class_id;
        if let Some(m) = masks[k].as_mut() {
            m[i] = true;
        }
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::Format(format!(
            "sidecar segment {} has no pixels",
            sidecar.segments[k].id
        )));
    }

    let mut records = Vec::new();
    for (s, m) in sidecar.segments.iter().zip(masks) {
        if let (Some(bits), Some(iid)) = (m, s.instance_id) {
            records.push(InstanceRecord::new(iid, s.class_id, s.score, Mask::new(h, w, bits)?)?);
        }
    }
    let instances = InstanceSet::new(records, sidecar.provenance)?;
    PanopticLabel::new(LabelMap2D::new(h, w, semantic)?, instances, catalog)
}
