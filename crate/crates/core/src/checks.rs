//! The gradient-check suite behind `nbnet gradcheck`.

use std::str::FromStr;

use crate::error::{config_err, Error, Result};
use crate::net::{Bound, NbNet, NetworkConfig, SsaConfig, SsaVariant};
use crate::numerics::gradcheck::{gradcheck, GradcheckOptions, GradcheckReport};
use crate::numerics::{batched_gram_solve, Normalization, Tensor, Var};
use crate::random::SeededStream;
use crate::ssa::SsaBlock;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckModule {
    Ops,
    Ssa,
    Nbnet,
    All,
}

impl FromStr for CheckModule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ops" => Ok(CheckModule::Ops),
            "ssa" => Ok(CheckModule::Ssa),
            "nbnet" => Ok(CheckModule::Nbnet),
            "all" => Ok(CheckModule::All),
            _ => config_err(format!("unknown gradcheck module {s:?}; expected all, ops, ssa or nbnet")),
        }
    }
}

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut s = SeededStream::new(seed, 0x9c);
    Tensor::from_fn(shape, |_| s.normal())
}

fn named(items: &[(&str, Tensor<f64>)]) -> Vec<(String, Tensor<f64>)> {
    items.iter().map(|(n, t)| (n.to_string(), t.clone())).collect()
}

fn ops(opts: GradcheckOptions) -> Result<Vec<GradcheckReport>> {
    let mut out = Vec::new();
    // Keep leaky_relu inputs well clear of the kink.
    let relu_in = randn(&[64], 1).map(|v| if v.abs() < 0.05 { v.signum() * 0.5 } else { v });
    out.push(gradcheck("leaky_relu", |_, v| v[0].leaky_relu(0.2), &named(&[("x", relu_in)]), opts)?);
    out.push(gradcheck(
        "elementwise",
        |_, v| v[0].mul(&v[1])?.add(&v[0].scale(0.5)?)?.sub(&v[1]),
        &named(&[("a", randn(&[2, 3, 4], 2)), ("b", randn(&[2, 3, 4], 3))]),
        opts,
    )?);
    out.push(gradcheck(
        "conv2d 3x3 s1 p1",
        |_, v| v[0].conv2d(&v[1], &v[2], 1, 1),
        &named(&[("x", randn(&[2, 3, 6, 6], 4)), ("w", randn(&[4, 3, 3, 3], 5)), ("b", randn(&[4], 6))]),
        opts,
    )?);
    out.push(gradcheck(
        "conv2d 4x4 s2 p1",
        |_, v| v[0].conv2d(&v[1], &v[2], 2, 1),
        &named(&[("x", randn(&[1, 2, 8, 8], 7)), ("w", randn(&[3, 2, 4, 4], 8)), ("b", randn(&[3], 9))]),
        opts,
    )?);
    out.push(gradcheck(
        "conv_transpose2d 2x2 s2",
        |_, v| v[0].conv_transpose2d(&v[1], &v[2], 2),
        &named(&[("x", randn(&[2, 3, 3, 4], 10)), ("w", randn(&[3, 2, 2, 2], 11)), ("b", randn(&[2], 12))]),
        opts,
    )?);
    for (label, mode) in [
        ("gram solve eps=0", Normalization::Gram { epsilon: 0.0 }),
        ("gram solve eps=1e-4", Normalization::Gram { epsilon: 1e-4 }),
        ("dot product", Normalization::None),
    ] {
        out.push(gradcheck(
            label,
            move |_, v| batched_gram_solve(&v[0], &v[1], mode),
            &named(&[("v", randn(&[2, 12, 3], 13)), ("x", randn(&[2, 12, 5], 14))]),
            opts,
        )?);
    }
    out.push(gradcheck(
        "concat/reshape/permute/crop/sum/mean",
        |_, v| {
            let c = Var::concat(&[v[0], v[1]], 1)?;
            let p = c.reshape(&[1, 5, 16])?.permute(&[0, 2, 1])?;
            let q = p.mul(&p)?.sum()?;
            q.add(&v[0].crop2d(1, 1, 2, 3)?.mean()?.scale(3.0)?)
        },
        &named(&[("a", randn(&[1, 2, 4, 4], 15)), ("b", randn(&[1, 3, 4, 4], 16))]),
        opts,
    )?);
    out.push(gradcheck("l1_loss", |_, v| v[0].l1_loss(&v[1]), &named(&[("p", randn(&[40], 17)), ("t", randn(&[40], 18))]), opts)?);
    Ok(out)
}

fn with_params(
    label: &str,
    names: Vec<String>,
    mut inputs: Vec<(String, Tensor<f64>)>,
    params: Vec<(String, Tensor<f64>)>,
    f: impl for<'t> Fn(&Bound<'t, f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
    opts: GradcheckOptions,
) -> Result<GradcheckReport> {
    let n = inputs.len();
    inputs.extend(params);
    gradcheck(
        label,
        |_, v| {
            let p = Bound::from_vars(names.iter().cloned().zip(v[n..].iter().copied()).collect());
            f(&p, &v[..n])
        },
        &inputs,
        opts,
    )
}

fn ssa(opts: GradcheckOptions) -> Result<Vec<GradcheckReport>> {
    let mut out = Vec::new();
    for (label, variant) in [("ssa projection", SsaVariant::Projection), ("ssa dot product", SsaVariant::DotProduct)] {
        let cfg = SsaConfig { variant, gram_epsilon: 0.0, ..SsaConfig::with_k(2) };
        let block = SsaBlock::new("ssa", 4, cfg, 0.2)?;
        let mut store = crate::net::ParamStore::<f64>::new();
        block.register(&mut store, 5);
        let names = store.names().cloned().collect();
        let params = store.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let inputs = named(&[("x1", randn(&[1, 4, 8, 8], 20)), ("x2", randn(&[1, 4, 8, 8], 21))]);
        out.push(with_params(label, names, inputs, params, |p, v| block.forward(p, v[0], v[1]), opts)?);
    }
    Ok(out)
}

fn nbnet(opts: GradcheckOptions) -> Result<Vec<GradcheckReport>> {
    let mut cfg = NetworkConfig::tiny();
    if let Some(s) = cfg.ssa.as_mut() {
        s.gram_epsilon = 0.0;
    }
    let net = NbNet::new(&cfg)?;
    let store = net.init_params::<f64>(7);
    let names = store.names().cloned().collect();
    let params = store.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let mut s = SeededStream::new(8, 1);
    let input = Tensor::from_fn(&[1, 3, 16, 16], |_| s.uniform_open0());
    let opts = GradcheckOptions { max_probes: Some(opts.max_probes.unwrap_or(24)), ..opts };
    Ok(vec![with_params(
        "nbnet tiny (stages=2, base 8, K=4, 1x3x16x16)",
        names,
        named(&[("noisy", input)]),
        params,
        |p, v| net.forward(p, v[0]),
        opts,
    )?])
}

/// Runs the selected checks in 64-bit. Probing is exhaustive for the
/// standalone ops and sampled for networks.
pub fn run(module: CheckModule) -> Result<Vec<GradcheckReport>> {
    let exhaustive = GradcheckOptions::default();
    let sampled = GradcheckOptions { max_probes: Some(32), ..GradcheckOptions::default() };
    let mut out = Vec::new();
    if matches!(module, CheckModule::Ops | CheckModule::All) {
        out.extend(ops(exhaustive)?);
    }
    if matches!(module, CheckModule::Ssa | CheckModule::All) {
        out.extend(ssa(sampled)?);
    }
    if matches!(module, CheckModule::Nbnet | CheckModule::All) {
        out.extend(nbnet(sampled)?);
    }
    Ok(out)
}
