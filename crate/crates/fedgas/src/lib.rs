//! Federated gas-usage forecasting with contribution-aware rewards.
//!
//! This crate simulates a two-tier federation: gas companies improve a shared
//! usage forecaster by exchanging model parameters (horizontal tier), and each
//! company trains a split model with the heating stations in its jurisdiction,
//! which hold complementary feature blocks of the same days (vertical tier).
//! After training, every participant is scored on two dimensions: the quality
//! of the data it committed, and the accuracy its participation added for the
//! rest of the cohort. Reward pools are divided in proportion.
//!
//! The whole pipeline is deterministic: given a scenario config and a seed,
//! every model, score, report, and network transcript is reproducible
//! byte for byte.
//!
//! See the `book/` directory for a guided tour with runnable examples.

pub mod datagen;
pub mod domain;
pub mod error;
pub mod forecaster;
pub mod hfl;
pub mod incentive;
pub mod scenario;
pub mod simnet;
pub mod vfl;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book;
