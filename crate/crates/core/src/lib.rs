//! Exact temporal network kernel density estimation (TN-KDE) over road
//! networks.
//!
//! A query asks for `F(q) = sum_i K_s(d(q, o_i) / b_s) K_t(|t - t_i| / b_t)`
//! at the center of every lixel (fixed-length edge piece) of the network.
//! Kernels are split into query-side and event-side terms so that whole
//! groups of events collapse into one aggregated vector per edge; the
//! [`aggindex`] module holds the structures that serve those vectors.

pub mod aggindex;
pub mod bench;
pub mod engine;
pub mod error;
pub mod events;
pub mod io;
pub mod kernels;
pub mod network;
pub mod oracle;
pub mod synth;

pub use error::{Error, Result};
