//! Chapters of the guide, compiled so `cargo test` runs their listings.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/synthetic-data.md")]
pub mod synthetic_data {}
#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}
