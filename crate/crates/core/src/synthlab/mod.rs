//! Desk-scale self-training lab: procedurally generated source and target
//! domains, a toy per-pixel model with connected-component instances, and a
//! mean-teacher trainer wiring mixing, pseudo-labels and the loss family
//! together.

mod ablation;
mod config;
mod model;
mod scene;
mod train;

pub use ablation::{expand_grid, run_ablation, AblationGrid, AblationReport, AblationRow, SummaryRow, Variant, ABLATION_SCHEMA};
pub use config::{direction_name, parse_pairs, TrainConfig, DEFAULT_CONFIG};
pub use model::{ema_update, extract_instances, pixel_features, toy_instance_loss, Activations, Adam, ToyModel, INPUT_FEATURES};
pub use scene::{generate_scene, lab_catalog, scene_at, DomainSpec, PhotometricShift, BLOCK, DISC, GROUND, SKY};
pub use train::{evaluate, lab_anchors, predict_panoptic, train, train_with_domains, EpochMetrics, EvalMetrics, TrainOutcome};
