pub mod cda;
pub mod convert;
pub mod eval;
pub mod fuse;
pub mod loss_check;
pub mod mix;
pub mod pseudo;
pub mod synth;
pub mod viz;

use clap::ValueEnum;
use panmix::mixing::MixDirection;
use panmix::pseudo::ConfidenceMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    T2s,
    S2t,
}

impl From<DirectionArg> for MixDirection {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::T2s => MixDirection::TargetToSource,
            DirectionArg::S2t => MixDirection::SourceToTarget,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConfidenceArg {
    PerImage,
    PerPixel,
}

impl From<ConfidenceArg> for ConfidenceMode {
    fn from(c: ConfidenceArg) -> Self {
        match c {
            ConfidenceArg::PerImage => ConfidenceMode::PerImage,
            ConfidenceArg::PerPixel => ConfidenceMode::PerPixel,
        }
    }
}
