//! Numerical core of a Heath–Jarrow–Morton forward-rate model driven by
//! fractional Brownian motion with Hurst exponent `1/2 < H < 1`.
//!
//! The crate is `no_std` and only needs an allocator.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod consistency;
pub mod drift;
pub mod error;
pub mod fbm;
pub mod hjm;
pub mod kernel;
pub mod ledger;
pub mod math;
pub mod noarb;
pub mod vol;

pub use drift::DriftField;
pub use error::{Error, Result};
pub use fbm::{BrownianDriver, FbmMethod, FbmPathSet, TimeGrid};
pub use hjm::{BondSurface, ForwardSurface, InitialCurve};
pub use kernel::{FracOrder, HurstParam, SampledFunction};
pub use vol::{MaturityGrid, VolFactor, VolatilitySpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
