//! File formats exchanged between pipeline stages.

mod binary;
mod panoptic_png;
mod png_io;
mod predictions;
mod rle;

pub use binary::{
    read_embedding_bank, read_prob_volume, read_volume_raw, write_embedding_bank, write_prob_volume,
    write_volume_raw, BANK_MAGIC, VOLUME_MAGIC,
};
pub use panoptic_png::{
    decode_panoptic, decode_segment_ids, encode_panoptic, stuff_segment_id, PanopticSidecar, SegmentInfo,
    MAX_INSTANCES_PER_CLASS,
};
pub use png_io::{decode_image_png, decode_label_png, encode_image_png, encode_label_png};
pub use predictions::{read_instances_jsonl, write_instances_jsonl, InstanceLine};
pub use rle::{rle_decode, rle_encode};
