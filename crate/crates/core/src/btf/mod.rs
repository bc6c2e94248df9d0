//! Raw BTF tensors, direction sampling, color decorrelation and the
//! truncated-SVD compression of each decorrelated channel.

pub mod color;
pub mod dfmf;
pub mod direction;
pub mod svd;
pub mod synth;
pub mod tensor;

pub use color::{decorrelate, recorrelate, DecorrelatedChannels};
pub use dfmf::{compress_dfmf, evaluate, AngularSource, CompressedBtf, CompressedChannel};
pub use direction::{AngularTaps, Direction, DirectionGrid};
pub use svd::{truncated_svd, TruncatedSvd};
pub use synth::{synthesize_btf, synthesize_with_field, Material, MaterialField};
pub use tensor::BtfTensor;
