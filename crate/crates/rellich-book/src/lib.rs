//! Doctest shim for the guide in `book/`.
//!
//! mdBook cannot run a chapter's code blocks against the crate, so each
//! chapter is included here as a rustdoc page; `cargo test --doc` then
//! compiles and runs every snippet, keeping the book and the library in
//! sync. Failures name the chapter through the module the block lives in.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/cascade.md")]
pub mod cascade {}

#[doc = include_str!("../../../book/src/geometry.md")]
pub mod geometry {}

#[doc = include_str!("../../../book/src/constants.md")]
pub mod constants {}

#[doc = include_str!("../../../book/src/quadrature.md")]
pub mod quadrature {}

#[doc = include_str!("../../../book/src/inequalities.md")]
pub mod inequalities {}

#[doc = include_str!("../../../book/src/sharpness.md")]
pub mod sharpness {}

#[doc = include_str!("../../../book/src/variational.md")]
pub mod variational {}

#[doc = include_str!("../../../book/src/driver.md")]
pub mod driver {}
