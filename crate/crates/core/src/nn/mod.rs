//! Small neural-network engine with hand-written backward passes.
//!
//! All weights of a model live in one flat vector; each layer owns a
//! contiguous range of it (weights first, then biases).

mod adam;
mod architecture;
mod layers;
mod model;

pub use adam::{AdamConfig, AdamState};
pub use architecture::{
    build_architecture, layer_stack, max_conv_blocks, nominal_size, sis_table, spatial_table, toy_table,
};
pub use layers::{sigmoid, Activation, Layer, LayerSpec};
pub use model::{HeadPass, RatioModel, Tape, TrunkPass};
