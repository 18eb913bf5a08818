use std::fmt;

use crate::error::Result;
use crate::net::config::{NetworkConfig, SsaVariant};
use crate::net::nbnet::NbNet;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModuleCost {
    pub name: String,
    pub params: usize,
    /// Multiply-accumulates for one image at the report's input size.
    pub macs: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub height: usize,
    pub width: usize,
    pub modules: Vec<ModuleCost>,
}

impl CostReport {
    pub fn params(&self) -> usize {
        self.modules.iter().map(|m| m.params).sum()
    }

    pub fn macs(&self) -> u64 {
        self.modules.iter().map(|m| m.macs).sum()
    }

    /// Totals grouped by module kind (`encoder`, `ssa`, ...), in first-seen order.
    pub fn by_kind(&self) -> Vec<ModuleCost> {
        let mut out: Vec<ModuleCost> = Vec::new();
        for m in &self.modules {
            let kind = kind_of(&m.name);
            match out.iter_mut().find(|o| o.name == kind) {
                Some(o) => {
                    o.params += m.params;
                    o.macs += m.macs;
                }
                None => out.push(ModuleCost { name: kind.to_string(), ..m.clone() }),
            }
        }
        out
    }
}

fn kind_of(name: &str) -> &'static str {
    let tail = name.rsplit('.').next().unwrap_or(name);
    match tail {
        "up" => "upsample",
        "skip" => "skip_blocks",
        "ssa" => "ssa",
        "fuse" => "fusion",
        "head" => "head",
        "mid" => "bottleneck",
        _ => "encoder",
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:>12} {:>10}", "module", "params", "GMAC")?;
        for m in &self.modules {
            writeln!(f, "{:<14} {:>12} {:>10.3}", m.name, m.params, m.macs as f64 / 1e9)?;
        }
        write!(
            f,
            "{:<14} {:>12} {:>10.3}  at {}x{}",
            "total",
            self.params(),
            self.macs() as f64 / 1e9,
            self.height,
            self.width
        )
    }
}

/// Analytic parameter and MAC counts for one `height x width` image.
pub fn count_params_and_flops(config: &NetworkConfig, height: usize, width: usize) -> Result<CostReport> {
    config.check_input(height, width)?;
    let net = NbNet::new(config)?;
    let size = |s: usize| (height >> s, width >> s);
    let mut modules = Vec::new();
    for (s, e) in net.encoders.iter().enumerate() {
        let (h, w) = size(s);
        modules.push(ModuleCost {
            name: format!("enc{s}"),
            params: e.block.param_count() + e.down.param_count(),
            macs: e.block.macs(h, w) + e.down.macs(h, w),
        });
    }
    let (h, w) = size(config.stages);
    modules.push(ModuleCost { name: "mid".into(), params: net.bottleneck.param_count(), macs: net.bottleneck.macs(h, w) });
    for (s, d) in net.decoders.iter().enumerate().rev() {
        let (h, w) = size(s);
        modules.push(ModuleCost { name: format!("dec{s}.up"), params: d.up.param_count(), macs: d.up.macs(h / 2, w / 2) });
        if !d.skip_blocks.is_empty() {
            modules.push(ModuleCost {
                name: format!("dec{s}.skip"),
                params: d.skip_blocks.iter().map(|b| b.param_count()).sum(),
                macs: d.skip_blocks.iter().map(|b| b.macs(h, w)).sum(),
            });
        }
        if let Some(ssa) = &d.ssa {
            let (n, k, c) = ((h * w) as u64, ssa.config.k as u64, ssa.channels as u64);
            // Vᵀ X and V A, plus the Gram matrix, its factorization and the triangular solves.
            let mut solve = 2 * n * k * c;
            if ssa.config.variant == SsaVariant::Projection {
                solve += n * k * k + k * k * k / 3 + 2 * k * k * c;
            }
            modules.push(ModuleCost {
                name: format!("dec{s}.ssa"),
                params: ssa.param_count(),
                macs: ssa.basis_block.macs(h, w) + solve,
            });
        }
        modules.push(ModuleCost { name: format!("dec{s}.fuse"), params: d.fuse.param_count(), macs: d.fuse.macs(h, w) });
    }
    modules.push(ModuleCost { name: "head".into(), params: net.head.param_count(), macs: net.head.macs(height, width) });
    Ok(CostReport { height, width, modules })
}
