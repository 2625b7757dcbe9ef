//! The guide in `book/` is plain mdbook, which cannot link against the
//! workspace crates when it runs listings. Each chapter is pulled in here as
//! module docs instead, so `cargo test -p drl-book` runs every listing.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/tracks.md")]
pub mod tracks {}
#[doc = include_str!("../../../book/src/trajectories.md")]
pub mod trajectories {}
#[doc = include_str!("../../../book/src/flight.md")]
pub mod flight {}
#[doc = include_str!("../../../book/src/racing.md")]
pub mod racing {}
#[doc = include_str!("../../../book/src/opponents.md")]
pub mod opponents {}
#[doc = include_str!("../../../book/src/sensors.md")]
pub mod sensors {}
#[doc = include_str!("../../../book/src/perception.md")]
pub mod perception {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/environment.md")]
pub mod environment {}
#[doc = include_str!("../../../book/src/reproducibility.md")]
pub mod reproducibility {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
