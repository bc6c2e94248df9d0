//! Chunking of a populated octree, the progressive load order, per-chunk
//! compression and the on-disk container.

pub mod codec;
pub mod container;
pub mod order;
pub mod payload;

pub use codec::{compress_chunk, decompress_chunk};
pub use container::{read_container, write_container, Container, Header};
pub use order::{build_load_order, check_order, chunk_count, chunk_set, ChunkDescriptor, ChunkKey, LoadOrder};
pub use payload::{assemble_tree, build_chunks, raw_payloads, Chunk};
