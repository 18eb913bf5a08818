use crate::error::{config_err, Result};
use crate::net::NetworkConfig;
use crate::noise::NoiseSpec;
use crate::numerics::Scalar;
use crate::pipeline::data::{synthetic_images, TrainData};
use crate::pipeline::train::EvalImage;
use crate::pipeline::TrainConfig;

/// A self-contained experiment on procedurally generated images.
#[derive(Clone, Debug, PartialEq)]
pub struct DeskPreset {
    pub name: &'static str,
    pub net: NetworkConfig,
    pub train: TrainConfig,
    pub noise: NoiseSpec,
    pub train_images: usize,
    pub val_images: usize,
    pub image_size: usize,
    pub data_seed: u64,
}

pub const DESK_PRESETS: [&str; 2] = ["overfit1", "tiny-awgn"];

pub fn desk_preset(name: &str) -> Result<DeskPreset> {
    let sigma = 25.0 / 255.0;
    match name {
        "overfit1" => Ok(DeskPreset {
            name: "overfit1",
            net: NetworkConfig::tiny(),
            train: TrainConfig {
                lr0: 5e-3,
                total_iters: 2_000,
                batch: 1,
                patch: 64,
                augment_rotate: false,
                augment_flip: false,
                freeze_noise: true,
                log_every: 100,
                ..TrainConfig::default()
            },
            noise: NoiseSpec::awgn(sigma, 1),
            train_images: 1,
            val_images: 0,
            image_size: 64,
            data_seed: 11,
        }),
        "tiny-awgn" => Ok(DeskPreset {
            name: "tiny-awgn",
            net: NetworkConfig::tiny(),
            train: TrainConfig {
                lr0: 2e-3,
                total_iters: 20_000,
                batch: 4,
                patch: 32,
                log_every: 1_000,
                eval_every: 5_000,
                ..TrainConfig::default()
            },
            noise: NoiseSpec::awgn(sigma, 2),
            train_images: 20,
            val_images: 5,
            image_size: 64,
            data_seed: 12,
        }),
        other => config_err(format!("unknown desk preset {other:?}; known: {}", DESK_PRESETS.join(", "))),
    }
}

impl DeskPreset {
    pub fn train_data<T: Scalar>(&self) -> Result<TrainData<T>> {
        let c = self.net.image_channels;
        let imgs = synthetic_images(self.train_images, self.image_size, self.image_size, c, self.data_seed);
        TrainData::synthetic(imgs, self.noise, self.train.patch)
    }

    /// Held-out images drawn from a disjoint stream of the same generator.
    pub fn val_images<T: Scalar>(&self) -> Vec<EvalImage<T>> {
        let c = self.net.image_channels;
        synthetic_images(self.val_images, self.image_size, self.image_size, c, self.data_seed ^ 0xfeed)
            .into_iter()
            .enumerate()
            .map(|(i, clean)| EvalImage { name: format!("{}-val{i}", self.name), clean, noisy: None })
            .collect()
    }
}
