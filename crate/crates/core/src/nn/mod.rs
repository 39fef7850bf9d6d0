//! A small layer-wise autodiff engine and the classifier architectures.
//!
//! Network inputs are `[N, channels, frequency, time]`; a time × mel
//! segment is transposed on the way in (see [`segment_input`]).

mod checkpoint;
mod layers;
mod network;
mod scalar;
mod tensor;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use layers::{BatchNorm, Conv3x3, ConvBlock, FcBlock, Linear};
pub use network::{
    build_network, count_parameters, sigmoid, time_average_embedding, AuxHead, ConvStack,
    ForwardOutput, Mode, Network, NetworkConfig, FULL_CONV_WIDTHS, FULL_FC_WIDTHS,
};
pub use scalar::{gemm, Scalar};
pub use tensor::Tensor;

use crate::matrix::Matrix;

/// Stacks time × mel segments into a `[N, 1, mel, time]` tensor.
pub fn segment_input<T: Scalar>(segments: &[&Matrix]) -> Tensor<T> {
    let (rows, cols) = segments.first().map_or((0, 0), |m| m.shape());
    let mut data = Vec::with_capacity(segments.len() * rows * cols);
    for m in segments {
        debug_assert_eq!(m.shape(), (rows, cols));
        for c in 0..cols {
            for r in 0..rows {
                data.push(T::of(m.get(r, c)));
            }
        }
    }
    Tensor::from_vec(&[segments.len(), 1, cols, rows], data).expect("segment shape")
}
