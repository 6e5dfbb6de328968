//! The chapters of `book/` as modules, so `cargo test -p bridge-guide` runs
//! every snippet in the guide.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/simulator.md")]
pub mod simulator {}

#[doc = include_str!("../../../book/src/environment.md")]
pub mod environment {}

#[doc = include_str!("../../../book/src/curriculum.md")]
pub mod curriculum {}

#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod autodiff {}

#[doc = include_str!("../../../book/src/policy.md")]
pub mod policy {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/formats.md")]
pub mod formats {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../book/src/results.md")]
pub mod results {}
