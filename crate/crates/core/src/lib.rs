//! Specification compiler and verification front end for neural networks
//! and support vector machines.
//!
//! A specification file is parsed and type-checked ([`speclang`]), reduced
//! to quantifier-free goals over model applications ([`interp`]), merged
//! into a single network ([`embed`]), written out in verifier formats
//! ([`emit`]) and handed to provers ([`provers`]). [`cli`] ties the stages
//! together.

pub mod cli;
pub mod embed;
pub mod emit;
pub mod interp;
pub mod nir;
pub mod provers;
pub mod rational;
pub mod speclang;
pub mod svm;
