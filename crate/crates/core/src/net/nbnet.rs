use crate::error::Result;
use crate::net::config::{Fusion, NetworkConfig};
use crate::net::layers::{Conv, ConvBlock, ConvTranspose};
use crate::net::params::{Bound, ParamStore};
use crate::numerics::{Scalar, Tensor, Var};
use crate::ssa::SsaBlock;

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStage {
    pub block: ConvBlock,
    pub down: Conv,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderStage {
    pub up: ConvTranspose,
    pub skip_blocks: Vec<ConvBlock>,
    pub ssa: Option<SsaBlock>,
    pub fuse: ConvBlock,
}

/// Layer graph of the denoiser. Holds no weights; those live in a
/// [`ParamStore`] keyed by the layer names.
#[derive(Clone, Debug, PartialEq)]
pub struct NbNet {
    pub config: NetworkConfig,
    pub encoders: Vec<EncoderStage>,
    pub bottleneck: ConvBlock,
    /// Indexed by stage, so `decoders[0]` is the full-resolution stage that runs last.
    pub decoders: Vec<DecoderStage>,
    pub head: Conv,
}

/// Per-stage basis vectors `[B, H_s*W_s, K]` recorded during a forward pass.
#[derive(Clone, Debug)]
pub struct BasisTrace<T> {
    pub stage: usize,
    pub height: usize,
    pub width: usize,
    pub vectors: Tensor<T>,
}

impl NbNet {
    pub fn new(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let slope = config.negative_slope;
        let c = |s| config.channels(s);
        let stages = config.stages;
        let encoders = (0..stages)
            .map(|s| {
                let cin = if s == 0 { config.image_channels } else { c(s - 1) };
                EncoderStage {
                    block: ConvBlock::new(format!("enc{s}"), cin, c(s), slope),
                    down: Conv::new(format!("enc{s}.down"), c(s), c(s), 4, 2, 1),
                }
            })
            .collect();
        let bottleneck = ConvBlock::new("mid", c(stages - 1), c(stages), slope);
        let mut decoders = Vec::with_capacity(stages);
        for s in 0..stages {
            let skip_blocks = if config.skip_blocks {
                (0..config.blocks_per_stage).map(|i| ConvBlock::new(format!("dec{s}.skip{i}"), c(s), c(s), slope)).collect()
            } else {
                Vec::new()
            };
            let ssa = match &config.ssa {
                Some(cfg) => Some(SsaBlock::new(format!("dec{s}.ssa"), c(s), cfg.clone(), slope)?),
                None => None,
            };
            let fuse_in = match config.fusion {
                Fusion::ConcatConv => 2 * c(s),
                Fusion::Add => c(s),
            };
            decoders.push(DecoderStage {
                up: ConvTranspose::new(format!("dec{s}.up"), c(s + 1), c(s), 2),
                skip_blocks,
                ssa,
                fuse: ConvBlock::new(format!("dec{s}.fuse"), fuse_in, c(s), slope),
            });
        }
        let head = Conv::same3x3("head", c(0), config.image_channels);
        Ok(NbNet { config: config.clone(), encoders, bottleneck, decoders, head })
    }

    /// Fresh parameters: He-normal weights, zero biases.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> ParamStore<T> {
        let mut store = ParamStore::new();
        for e in &self.encoders {
            e.block.register(&mut store, seed);
            e.down.register(&mut store, seed);
        }
        self.bottleneck.register(&mut store, seed);
        for d in &self.decoders {
            d.up.register(&mut store, seed);
            for b in &d.skip_blocks {
                b.register(&mut store, seed);
            }
            if let Some(ssa) = &d.ssa {
                ssa.register(&mut store, seed);
            }
            d.fuse.register(&mut store, seed);
        }
        self.head.register(&mut store, seed);
        store
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, noisy: Var<'t, T>) -> Result<Var<'t, T>> {
        self.run(p, noisy, None)
    }

    /// Forward pass that also returns the SSA bases, ordered by stage.
    pub fn forward_traced<'t, T: Scalar>(
        &self,
        p: &Bound<'t, T>,
        noisy: Var<'t, T>,
    ) -> Result<(Var<'t, T>, Vec<BasisTrace<T>>)> {
        let mut trace = Vec::new();
        let out = self.run(p, noisy, Some(&mut trace))?;
        trace.sort_by_key(|t| t.stage);
        Ok((out, trace))
    }

    fn run<'t, T: Scalar>(
        &self,
        p: &Bound<'t, T>,
        noisy: Var<'t, T>,
        mut trace: Option<&mut Vec<BasisTrace<T>>>,
    ) -> Result<Var<'t, T>> {
        let [_, c, h, w] = noisy.value().dims4()?;
        if c != self.config.image_channels {
            return crate::error::config_err(format!(
                "expected {} image channels, got {c}",
                self.config.image_channels
            ));
        }
        self.config.check_input(h, w)?;

        let mut skips = Vec::with_capacity(self.encoders.len());
        let mut x = noisy;
        for e in &self.encoders {
            let f = e.block.forward(p, x)?;
            x = e.down.forward(p, f)?;
            skips.push(f);
        }
        x = self.bottleneck.forward(p, x)?;

        for (s, d) in self.decoders.iter().enumerate().rev() {
            let up = d.up.forward(p, x)?;
            let mut skip = skips[s];
            for b in &d.skip_blocks {
                skip = b.forward(p, skip)?;
            }
            let (kept, other) = match &d.ssa {
                Some(ssa) => {
                    let (projected, basis) = ssa.forward_with_basis(p, skip, up)?;
                    if let Some(t) = trace.as_deref_mut() {
                        t.push(BasisTrace {
                            stage: s,
                            height: basis.height,
                            width: basis.width,
                            vectors: (*basis.vectors.value()).clone(),
                        });
                    }
                    let other = match ssa.config.projected_input {
                        crate::net::config::ProjectedInput::X1 => up,
                        crate::net::config::ProjectedInput::X2 => skip,
                    };
                    (projected, other)
                }
                None => (skip, up),
            };
            let fused = match self.config.fusion {
                Fusion::ConcatConv => Var::concat(&[other, kept], 1)?,
                Fusion::Add => other.add(&kept)?,
            };
            x = d.fuse.forward(p, fused)?;
        }
        self.head.forward(p, x)?.add(&noisy)
    }
}
