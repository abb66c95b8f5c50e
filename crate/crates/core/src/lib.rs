//! Analytics over anonymized hospital admission/discharge records.
//!
//! The crate reconstructs patient histories from a flat record table,
//! detects and classifies overlapping stays, derives a directed
//! inter-facility transfer network, and computes cohort and facility
//! statistics. A seeded generator produces synthetic record files with
//! planted overlap patterns for end-to-end verification.

pub mod cohort;
pub mod facilities;
pub mod histogram;
pub mod icd;
pub mod network;
pub mod overlaps;
pub mod pipeline;
pub mod records;
pub mod synth;

/// Version stamped into every JSON report.
pub const SCHEMA_VERSION: u32 = 1;
