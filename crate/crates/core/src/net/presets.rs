use crate::net::config::{BasisSource, NetworkConfig, ProjectedInput, SsaConfig, SsaVariant};

/// Named variants of the default network for ablation runs.
///
/// `k32` is absent: it would set K equal to the first-stage width, which
/// [`NetworkConfig::validate`] rejects.
pub fn ablation_presets() -> Vec<(&'static str, NetworkConfig)> {
    let base = NetworkConfig::default();
    let ssa = |f: &dyn Fn(&mut SsaConfig)| {
        let mut s = SsaConfig::default();
        f(&mut s);
        NetworkConfig { ssa: Some(s), ..base.clone() }
    };
    let proj = |input, source| {
        ssa(&|s: &mut SsaConfig| {
            s.projected_input = input;
            s.basis_source = source;
        })
    };
    use BasisSource::*;
    use ProjectedInput::*;
    vec![
        ("unet_plain", NetworkConfig { ssa: None, skip_blocks: false, ..base.clone() }),
        ("unet_ssa", NetworkConfig { skip_blocks: false, ..base.clone() }),
        ("unet_blocks", NetworkConfig { ssa: None, ..base.clone() }),
        ("unet_blocks_ssa", base.clone()),
        ("k1", ssa(&|s| s.k = 1)),
        ("k8", ssa(&|s| s.k = 8)),
        ("k16", ssa(&|s| s.k = 16)),
        ("dotprod", ssa(&|s| s.variant = SsaVariant::DotProduct)),
        ("proj_x1_given_x1", proj(X1, X1Only)),
        ("proj_x1_given_x2", proj(X1, X2Only)),
        ("proj_x2_given_x2", proj(X2, X2Only)),
        ("proj_x2_given_x1", proj(X2, X1Only)),
        ("proj_x2_given_x1x2", proj(X2, X1AndX2)),
        ("proj_x1_given_x1x2", proj(X1, X1AndX2)),
    ]
}

pub fn preset(name: &str) -> Option<NetworkConfig> {
    ablation_presets().into_iter().find(|(n, _)| *n == name).map(|(_, c)| c)
}
