//! Desk-scale simulator for 1-bit reconfigurable intelligent surfaces (RIS)
//! operating in the 5G N78 band (3.3–3.8 GHz).
//!
//! The crate is split along the signal chain:
//!
//! * [`propagation`] – path loss, per-element channel coefficients, fading.
//! * [`surface`] – modular 8×8-block surface geometry, phase bitmaps and the
//!   cascaded received-power model.
//! * [`optimizer`] – iterative, grouped-iterative, location-based and
//!   grid-search configuration, plus a brute-force reference.
//! * [`kpi`] – RSRP/RSRQ/RSSI/SINR mapping and service availability.
//! * [`coverage`] – drive-test ingestion, FSPL baseline fit, gap detection and
//!   line-of-sight classification.
//! * [`harness`] – scenario files, Monte-Carlo runner and the `ris` CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coverage;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kpi;
pub mod optimizer;
pub mod propagation;
pub mod rng;
pub mod surface;

pub use error::{Error, Result};
pub use geometry::{Aabb, Vec3};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Watts to dBm.
#[inline]
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// dBm to watts.
#[inline]
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
