use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// How SSA turns basis coefficients into features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsaVariant {
    /// Orthogonal projection `V (VᵀV)⁻¹ Vᵀ X`.
    Projection,
    /// `V Vᵀ X`, without the Gram normalization.
    DotProduct,
}

/// Which feature maps feed basis generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSource {
    X1Only,
    X2Only,
    X1AndX2,
}

/// Which feature map is projected onto the generated subspace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectedInput {
    X1,
    X2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsaConfig {
    /// Subspace dimension.
    pub k: usize,
    pub variant: SsaVariant,
    pub basis_source: BasisSource,
    pub projected_input: ProjectedInput,
    /// Apply LeakyReLU to the generated basis maps.
    pub head_activation: bool,
    /// Ridge term added to the Gram matrix before the solve.
    pub gram_epsilon: f64,
}

impl Default for SsaConfig {
    fn default() -> Self {
        SsaConfig {
            k: 16,
            variant: SsaVariant::Projection,
            basis_source: BasisSource::X1AndX2,
            projected_input: ProjectedInput::X1,
            head_activation: false,
            gram_epsilon: 1e-4,
        }
    }
}

impl SsaConfig {
    pub fn with_k(k: usize) -> Self {
        SsaConfig { k, ..Self::default() }
    }
}

/// How projected skip features are merged with the upsampled decoder features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Channel concatenation followed by a residual block back to stage width.
    ConcatConv,
    /// Elementwise sum followed by a residual block.
    Add,
}

/// Architecture of the encoder/decoder denoiser.
///
/// Stage `s` runs at `1 / 2^s` of the input resolution with
/// `base_channels * 2^s` channels; stage `stages` is the bottleneck.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub stages: usize,
    pub base_channels: usize,
    /// Residual blocks on each skip connection when `skip_blocks` is set.
    pub blocks_per_stage: usize,
    /// `None` passes skip features to the decoder unprojected.
    pub ssa: Option<SsaConfig>,
    pub skip_blocks: bool,
    pub fusion: Fusion,
    pub image_channels: usize,
    pub negative_slope: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            stages: 4,
            base_channels: 32,
            blocks_per_stage: 2,
            ssa: Some(SsaConfig::default()),
            skip_blocks: true,
            fusion: Fusion::ConcatConv,
            image_channels: 3,
            negative_slope: 0.2,
        }
    }
}

impl NetworkConfig {
    /// Two-stage network used for gradient checks and desk-scale runs.
    pub fn tiny() -> Self {
        NetworkConfig { stages: 2, base_channels: 8, ssa: Some(SsaConfig::with_k(4)), ..Self::default() }
    }

    pub fn k(&self) -> Option<usize> {
        self.ssa.as_ref().map(|s| s.k)
    }

    pub fn channels(&self, stage: usize) -> usize {
        self.base_channels << stage
    }

    /// Required divisor of input height and width.
    pub fn size_multiple(&self) -> usize {
        1 << self.stages
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 || self.stages > 8 {
            return config_err(format!("stages must be in 1..=8, got {}", self.stages));
        }
        if self.base_channels == 0 || self.image_channels == 0 {
            return config_err("channel counts must be positive");
        }
        if self.skip_blocks && self.blocks_per_stage == 0 {
            return config_err("blocks_per_stage must be positive when skip_blocks is set");
        }
        if !(self.negative_slope > 0.0 && self.negative_slope < 1.0) {
            return config_err(format!("negative_slope {} must lie in (0, 1)", self.negative_slope));
        }
        if let Some(ssa) = &self.ssa {
            if ssa.k == 0 || ssa.k >= self.base_channels {
                return config_err(format!(
                    "subspace dimension K = {} must satisfy 1 <= K < base_channels = {}",
                    ssa.k, self.base_channels
                ));
            }
            if !(ssa.gram_epsilon >= 0.0 && ssa.gram_epsilon.is_finite()) {
                return config_err("gram_epsilon must be finite and non-negative");
            }
        }
        Ok(())
    }

    pub fn check_input(&self, height: usize, width: usize) -> Result<()> {
        let m = self.size_multiple();
        if height % m != 0 || width % m != 0 || height == 0 || width == 0 {
            return config_err(format!(
                "input size {height}x{width} is not divisible by {m} (2^stages for stages = {})",
                self.stages
            ));
        }
        Ok(())
    }
}
