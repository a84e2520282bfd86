//! Compressed-domain multi-object tracking.
//!
//! Motion vectors and quantized luminance DCT residuals are read straight
//! from MPEG-4 Part 2 streams (or produced by a small block-matching
//! encoder), then initial boxes are propagated across each GOP either by
//! averaging motion vectors or with a box-aligned feature BiLSTM.

pub mod bafe;
pub mod codec_features;
pub mod eval;
pub mod mini_encoder;
pub mod mpeg4_parser;
pub mod temporal_model;
pub mod trackers;
