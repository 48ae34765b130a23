//! Minimal deterministic reverse-mode autodiff over `ndarray`, plus the
//! layers and optimizer the model zoo is assembled from.
//!
//! Everything trains on one `Tape` per sample: forward calls append nodes
//! eagerly, `backward` walks the tape in reverse and accumulates parameter
//! gradients into a [`ParamStore`]. All values are `f64` 2-D arrays; a
//! vector is a 1-row matrix. Single-threaded, fixed evaluation order, so
//! identical seeds give bit-identical runs.

mod adam;
mod layers;
mod params;
mod tape;

pub use adam::Adam;
pub use layers::{
    AdditiveAttention, CrossNetwork, GruCell, LayerNorm, Linear, Mlp, MultiHeadSelfAttention,
    TitleConv,
};
pub use params::{ParamId, ParamStore};
pub use tape::{stable_sigmoid, NodeId, Tape};
