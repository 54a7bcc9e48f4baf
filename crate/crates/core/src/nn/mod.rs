//! Residual attention regression network.

mod config;
mod heatmap;
mod layers;
mod network;
mod params;

pub use config::{AblationSpec, NetworkConfig, MODULES_PER_STAGE, MODULE_NAMES};
pub use heatmap::{export_heatmap, export_heatmap_for, heatmap_indices, jet};
pub use layers::{
    modulate, AttentionCapture, AttentionModule, AttentionOutput, Buffers, Context, ResidualUnit,
};
pub use network::{apply_ablation, build_network, Mode, Network, NetworkOutput};
pub use params::{Bindings, ParamStore};
