//! Compiles every chapter of the guide as documentation so that
//! `cargo test` runs its snippets.

#![doc = include_str!("../../../book/src/introduction.md")]

#[doc = include_str!("../../../book/src/dynamics.md")]
pub mod dynamics {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/spectra.md")]
pub mod spectra {}

#[doc = include_str!("../../../book/src/pca.md")]
pub mod pca {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../book/src/limitations.md")]
pub mod limitations {}
