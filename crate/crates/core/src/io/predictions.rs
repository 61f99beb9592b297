//! Instance predictions as JSON lines: `{id, class_id, score, rle, H, W}`.

use serde::{Deserialize, Serialize};

use super::rle::{rle_decode, rle_encode};
use crate::error::{Error, Result};
use crate::instance::{InstanceRecord, InstanceSet, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceLine {
    pub id: u32,
    pub class_id: u16,
    pub score: f64,
    pub rle: Vec<u32>,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
}

impl InstanceLine {
    pub fn from_record(r: &InstanceRecord) -> Self {
        Self {
            id: r.id(),
            class_id: r.class_id(),
            score: r.score(),
            rle: rle_encode(r.mask()),
            height: r.mask().height(),
            width: r.mask().width(),
        }
    }

    pub fn to_record(&self) -> Result<InstanceRecord> {
        let mask = rle_decode(&self.rle, self.height, self.width)?;
        InstanceRecord::new(self.id, self.class_id, self.score, mask)
    }
}

pub fn write_instances_jsonl(set: &InstanceSet) -> Result<String> {
    let mut out = String::new();
    for r in set.records() {
        out.push_str(&serde_json::to_string(&InstanceLine::from_record(r))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_instances_jsonl(text: &str, provenance: Provenance) -> Result<InstanceSet> {
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: InstanceLine = serde_json::from_str(line)
            .map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
        records.push(parsed.to_record()?);
    }
    InstanceSet::new(records, provenance)
}
