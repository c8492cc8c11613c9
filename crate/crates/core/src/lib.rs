//! Underwater image enhancement toolkit: dense tensor kernels, a forward-only
//! JDPNet (joint feature extraction, probabilistic bootstrap, feature
//! post-processing), the AquaBalance loss family and a quality metric suite.

// Range checks are written as negated comparisons so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aqualoss;
pub mod error;
pub mod fpp;
pub mod jdpnet;
pub mod metrics;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{ChannelStats, ConvKernel, ImageTensor, Padding};
