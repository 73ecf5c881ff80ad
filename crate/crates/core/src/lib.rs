//! Personalized skill classification at desk scale.
//!
//! The pipeline: generate weakly supervised training data from invocation
//! patterns in a raw log, train a shared hierarchical character/word BiLSTM
//! encoder with per-skill classifiers and personalized attention over each
//! user's enabled skills, bootstrap new skills without full retraining, and
//! evaluate with top-N accuracy, expand-vs-refresh and acceptance-rate
//! correlation protocols.

pub mod bootstrap;
pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod evaluation;
pub mod model;
pub mod numeric;
pub mod personalization;
pub mod runconfig;
pub mod synth;
pub mod training;
pub mod weaksup;
