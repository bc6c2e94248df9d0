//! Progressive compression and streaming of measured surface reflectance.
//!
//! The pipeline factorizes a BTF per decorrelated color channel, lays the
//! spatial factors out on a sparse surface octree, cuts everything into
//! independently compressed chunks in a progressive load order, streams the
//! chunks to several clients that share annotations, and renders whatever
//! prefix a client holds.

pub mod btf;
pub mod chunk;
pub mod client;
pub mod error;
pub mod octree;
pub mod pipeline;
pub mod protocol;
pub mod render;
pub mod server;

pub use error::{Error, Result};
