//! Experiment orchestration.

pub mod experiment;
pub mod region;
pub mod synth;

pub use experiment::{
    recompute_metrics, render_heatmaps, run_experiment, CellFailure, ExperimentConfig,
    ExperimentOutcome, ExperimentSummary, Method, MethodParams, RegionSpec,
};
pub use region::{
    autolabel_region, read_meta, read_pair, write_region, write_synthetic_region, Layer,
    RegionMeta, RegionStore,
};
pub use synth::{synth_generate, Pond, Signature, Signatures, SynthConfig, SynthScene};
