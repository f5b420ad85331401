//! The `odeid` guide, compiled so that its examples run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/library.md")]
pub mod library {}

#[doc = include_str!("../../../book/src/discrete-model.md")]
pub mod discrete_model {}

#[doc = include_str!("../../../book/src/curvature.md")]
pub mod curvature {}

#[doc = include_str!("../../../book/src/optimizer.md")]
pub mod optimizer {}

#[doc = include_str!("../../../book/src/selection.md")]
pub mod selection {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
