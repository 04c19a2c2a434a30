//! Streaming filters and lock-in extraction.

pub mod filter;
pub mod lockin;

pub use filter::{design_filter, Biquad, FilterKind, FilterSpec, IirFilter};
pub use lockin::{wrap_angle, CoilLock, LiaOutput, LockInBank, LockInChannel};
