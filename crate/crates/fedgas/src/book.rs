// The guide's code blocks run as doctests, which keeps every chapter in
// sync with the library: `cargo test --doc` fails if the book drifts.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/data-model.md")]
pub mod data_model {}
#[doc = include_str!("../../../book/src/synthetic-data.md")]
pub mod synthetic_data {}
#[doc = include_str!("../../../book/src/forecasting.md")]
pub mod forecasting {}
#[doc = include_str!("../../../book/src/horizontal-federation.md")]
pub mod horizontal_federation {}
#[doc = include_str!("../../../book/src/vertical-federation.md")]
pub mod vertical_federation {}
#[doc = include_str!("../../../book/src/incentives.md")]
pub mod incentives {}
#[doc = include_str!("../../../book/src/simulation-harness.md")]
pub mod simulation_harness {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
