//! Telemetry power side-channel toolkit.
//!
//! Simulates data-dependent power telemetry from AES-128 victims, assesses it
//! with TVLA, and recovers keys with correlation power analysis. See the
//! crate's `examples/` directory for one runnable program per capability and
//! `src/bin/telescp.rs` for the command-line front end.

pub mod aes_model;
pub mod cli;
pub mod cpa;
pub mod leakage_sim;
pub mod stats_core;
pub mod trace_store;
pub mod tvla;

pub use aes_model::{encrypt_block, expand_key, invert_key_schedule, Block, RoundKeys};
pub use cpa::{compute_ge, ge_curve, run_cpa, CpaReport, GeCurve, LeakModel};
pub use leakage_sim::{
    apply_mitigation, preset, simulate_campaign, simulate_class_groups, simulate_trace,
    throttle_transform, ChannelProfile, MitigationSpec, PlaintextSource, ThrottleDriver,
    ThrottleSpec,
};
pub use stats_core::{pearson, welch_t, CorrAccumulator, MomentAccumulator, THRESHOLD_TVLA};
pub use trace_store::{read_traceset, write_traceset, PlaintextClass, TraceRecord, TraceSet};
pub use tvla::{classify_cell, run_tvla, Classification, TvlaReport};
