//! Detection of smartphone use from EEG, heart-rate and head-pose time series.
//!
//! The pipeline runs session loading, resampling and windowing
//! ([`session`], [`preprocess`]), global feature extraction and early fusion
//! ([`features`]), optional dimensionality reduction ([`dimreduce`]) and
//! classification ([`classifiers`]), evaluated with participant-level
//! leave-one-out ([`evaluation`]). [`synthgen`] produces labelled synthetic
//! cohorts and [`experiment`] drives the full grid.

pub mod classifiers;
pub mod dimreduce;
pub mod evaluation;
pub mod experiment;
pub mod features;
pub mod preprocess;
pub mod session;
pub mod synthgen;
