//! The encoder/decoder denoiser with subspace attention on every skip path.

pub mod config;
pub mod cost;
pub mod layers;
pub mod nbnet;
pub mod params;
pub mod presets;
pub mod state;

pub use config::{BasisSource, Fusion, NetworkConfig, ProjectedInput, SsaConfig, SsaVariant};
pub use cost::{count_params_and_flops, CostReport, ModuleCost};
pub use nbnet::{BasisTrace, NbNet};
pub use params::{Bound, ParamStore};
pub use presets::ablation_presets;
pub use state::{build, TrainState};
