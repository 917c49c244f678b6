//! The chapters of `book/` compiled as doctests, so the book cannot drift
//! from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/time.md")]
pub mod time {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}
#[doc = include_str!("../../../book/src/losses.md")]
pub mod losses {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/upsampling.md")]
pub mod upsampling {}
#[doc = include_str!("../../../book/src/synthesis.md")]
pub mod synthesis {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
