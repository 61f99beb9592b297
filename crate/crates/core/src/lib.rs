//! Building blocks for domain-adaptive panoptic segmentation: cross-domain
//! mixing, pseudo-label filtering, mean-teacher averaging, the training loss
//! family with analytic gradients, panoptic fusion and evaluation, and a
//! small synthetic lab that runs the whole self-training loop on a CPU.

pub mod catalog;
pub mod cda;
pub mod components;
pub mod error;
pub mod fusion;
pub mod instance;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod mixing;
pub mod panoptic;
pub mod pseudo;
pub mod raster;
pub mod rng;
pub mod synthlab;
pub mod viz;
pub mod volume;

pub use catalog::ClassCatalog;
pub use cda::{ClassEmbeddingMatrix, PromptEmbeddingBank};
pub use error::{Error, Result};
pub use fusion::FusionConfig;
pub use instance::{InstanceRecord, InstanceSet, Provenance};
pub use metrics::{ApConfig, PqStats};
pub use mixing::{MixDirection, MixedSample};
pub use panoptic::PanopticLabel;
pub use raster::{ImageRGB, LabelMap2D, Mask, PixelBox, IGNORE};
pub use rng::SeededRng;
pub use volume::{FeatureMap, LogitVolume, ParamVector, ProbVolume};
