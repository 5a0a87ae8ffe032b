//! Desk-scale laboratory for telemetry-driven MAV drift prediction.
//!
//! The pipeline: synthesize or ingest 60-channel telemetry logs with
//! tracker ground truth ([`flightsim`], [`telemetry`]), clean them and
//! derive per-axis pixel-velocity targets ([`telemetry`]), train
//! ε-insensitive support vector regressors per axis with a from-scratch
//! SMO solver ([`svr`]), inspect the data's singular-value spectrum
//! ([`normdiag`]), score drift predictions against the zero-drift null
//! baseline ([`evalreport`]), and close the loop with a PD controller,
//! injectable feedback latency, and drift feedforward ([`control`]).
//!
//! Data-parallel hot paths (Gram matrix assembly, batch prediction, KKT
//! audits) run on rayon under the default `parallel` feature and fall
//! back to sequential code without it; results are bit-identical either
//! way.

pub mod control;
pub mod evalreport;
pub mod flightsim;
pub mod mat;
pub mod normdiag;
pub mod parallel;
pub mod svr;
pub mod telemetry;
