//! Subspace attention: generate `K` basis maps from two feature maps and
//! project one of them onto their span.

use crate::error::{config_err, Result};
use crate::net::config::{BasisSource, ProjectedInput, SsaConfig, SsaVariant};
use crate::net::layers::ConvBlock;
use crate::net::params::{Bound, ParamStore};
use crate::numerics::{batched_gram_solve, Normalization, Scalar, Var};

/// `K` basis vectors of length `N = H * W` per batch element, `[B, N, K]`.
/// Columns are not required to be orthogonal or normalized.
#[derive(Clone, Copy, Debug)]
pub struct BasisSet<'t, T: Scalar> {
    pub vectors: Var<'t, T>,
    pub k: usize,
    pub height: usize,
    pub width: usize,
}

/// Learned parameters and wiring of one subspace attention block.
#[derive(Clone, Debug, PartialEq)]
pub struct SsaBlock {
    pub name: String,
    pub channels: usize,
    pub config: SsaConfig,
    pub basis_block: ConvBlock,
    pub slope: f64,
}

impl SsaBlock {
    pub fn new(name: impl Into<String>, channels: usize, config: SsaConfig, slope: f64) -> Result<Self> {
        let name = name.into();
        if config.k == 0 || config.k >= channels {
            return config_err(format!("{name}: K = {} must satisfy 1 <= K < C = {channels}", config.k));
        }
        let basis_in = match config.basis_source {
            BasisSource::X1AndX2 => 2 * channels,
            BasisSource::X1Only | BasisSource::X2Only => channels,
        };
        let basis_block = ConvBlock::new(format!("{name}.basis"), basis_in, config.k, slope);
        Ok(SsaBlock { name, channels, config, basis_block, slope })
    }

    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, seed: u64) {
        self.basis_block.register(store, seed);
    }

    pub fn param_count(&self) -> usize {
        self.basis_block.param_count()
    }

    pub fn normalization(&self) -> Normalization {
        match self.config.variant {
            SsaVariant::Projection => Normalization::Gram { epsilon: self.config.gram_epsilon },
            SsaVariant::DotProduct => Normalization::None,
        }
    }

    /// Basis maps from the configured sources, reshaped to `[B, H*W, K]`.
    pub fn generate_basis<'t, T: Scalar>(
        &self,
        p: &Bound<'t, T>,
        x1: Var<'t, T>,
        x2: Var<'t, T>,
    ) -> Result<BasisSet<'t, T>> {
        let s1 = x1.value().dims4()?;
        if s1 != x2.value().dims4()? {
            return config_err(format!("{}: X1 {:?} and X2 {:?} differ", self.name, x1.shape(), x2.shape()));
        }
        let [b, _, h, w] = s1;
        let source = match self.config.basis_source {
            BasisSource::X1AndX2 => Var::concat(&[x1, x2], 1)?,
            BasisSource::X1Only => x1,
            BasisSource::X2Only => x2,
        };
        let mut maps = self.basis_block.forward(p, source)?;
        if self.config.head_activation {
            maps = maps.leaky_relu(T::from_f64_lossy(self.slope))?;
        }
        let k = self.config.k;
        let vectors = maps.reshape(&[b, k, h * w])?.permute(&[0, 2, 1])?;
        Ok(BasisSet { vectors, k, height: h, width: w })
    }

    /// SSA output with the basis that produced it.
    pub fn forward_with_basis<'t, T: Scalar>(
        &self,
        p: &Bound<'t, T>,
        x1: Var<'t, T>,
        x2: Var<'t, T>,
    ) -> Result<(Var<'t, T>, BasisSet<'t, T>)> {
        let basis = self.generate_basis(p, x1, x2)?;
        let target = match self.config.projected_input {
            ProjectedInput::X1 => x1,
            ProjectedInput::X2 => x2,
        };
        Ok((project(&basis, target, self.normalization())?, basis))
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x1: Var<'t, T>, x2: Var<'t, T>) -> Result<Var<'t, T>> {
        Ok(self.forward_with_basis(p, x1, x2)?.0)
    }
}

/// Reconstructs every channel of `x` (`[B, C, H, W]`) inside the span of `basis`.
pub fn project<'t, T: Scalar>(basis: &BasisSet<'t, T>, x: Var<'t, T>, mode: Normalization) -> Result<Var<'t, T>> {
    let [b, c, h, w] = x.value().dims4()?;
    if h * w != basis.height * basis.width {
        return config_err(format!(
            "basis has N = {} but features have H*W = {}",
            basis.height * basis.width,
            h * w
        ));
    }
    let cols = x.reshape(&[b, c, h * w])?.permute(&[0, 2, 1])?;
    let y = batched_gram_solve(&basis.vectors, &cols, mode)?;
    y.permute(&[0, 2, 1])?.reshape(&[b, c, h, w])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{gradcheck, GradcheckOptions};
    use crate::numerics::{Tape, Tensor};
    use crate::random::SeededStream;

    fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut s = SeededStream::new(seed, 5);
        Tensor::from_fn(shape, |_| s.normal())
    }

    fn basis_from<'t>(tape: &'t Tape<f64>, v: Tensor<f64>, h: usize, w: usize) -> BasisSet<'t, f64> {
        let k = v.shape()[2];
        BasisSet { vectors: tape.var(v), k, height: h, width: w }
    }

    const EXACT: Normalization = Normalization::Gram { epsilon: 0.0 };

    #[test]
    fn basis_shape_for_default_k() {
        let block = SsaBlock::new("s", 32, SsaConfig::default(), 0.2).unwrap();
        let mut store = ParamStore::<f32>::new();
        block.register(&mut store, 3);
        let tape = Tape::new();
        let p = store.bind(&tape);
        let x1 = tape.constant(randn(&[1, 32, 16, 16], 1).cast());
        let x2 = tape.constant(randn(&[1, 32, 16, 16], 2).cast());
        let basis = block.generate_basis(&p, x1, x2).unwrap();
        assert_eq!(basis.vectors.shape(), vec![1, 256, 16]);
        let y = block.forward(&p, x1, x2).unwrap();
        assert_eq!(y.shape(), vec![1, 32, 16, 16]);
        // Same weights, same inputs: bitwise identical basis.
        let again = block.generate_basis(&p, x1, x2).unwrap();
        assert_eq!(*again.vectors.value(), *basis.vectors.value());
    }

    #[test]
    fn rejects_k_not_below_channels() {
        assert!(SsaBlock::new("s", 8, SsaConfig::with_k(8), 0.2).is_err());
    }

    #[test]
    fn zeroed_head_gives_zero_basis_and_degenerate_solve() {
        let cfg = SsaConfig { gram_epsilon: 0.0, ..SsaConfig::with_k(2) };
        let block = SsaBlock::new("s", 4, cfg, 0.2).unwrap();
        let mut store = ParamStore::<f64>::new();
        block.register(&mut store, 3);
        let skip = block.basis_block.skip.as_ref().unwrap();
        for name in [
            block.basis_block.conv2.weight_name(),
            block.basis_block.conv2.bias_name(),
            skip.weight_name(),
            skip.bias_name(),
        ] {
            store.get_mut(&name).unwrap().data_mut().fill(0.0);
        }
        let tape = Tape::new();
        let p = store.bind(&tape);
        let x1 = tape.constant(randn(&[1, 4, 4, 4], 4));
        let x2 = tape.constant(randn(&[1, 4, 4, 4], 5));
        let basis = block.generate_basis(&p, x1, x2).unwrap();
        assert!(basis.vectors.value().data().iter().all(|&v| v == 0.0));
        assert!(matches!(block.forward(&p, x1, x2), Err(crate::Error::Numerical { batch: 0, .. })));
    }

    #[test]
    fn projection_fixes_its_range() {
        let tape = Tape::new();
        let v = randn(&[1, 16, 3], 6);
        let a = randn(&[3, 2], 7);
        // X = V A laid out as [1, C, H, W] with C = 2.
        let mut x = Tensor::zeros(&[1, 2, 4, 4]);
        for n in 0..16 {
            for c in 0..2 {
                x.data_mut()[c * 16 + n] = (0..3).map(|j| v.data()[n * 3 + j] * a.data()[j * 2 + c]).sum();
            }
        }
        let basis = basis_from(&tape, v, 4, 4);
        let y = project(&basis, tape.var(x.clone()), EXACT).unwrap();
        assert!(y.value().max_abs_diff(&x) < 1e-4);
    }

    #[test]
    fn constant_basis_gives_channel_means() {
        let tape = Tape::new();
        let basis = basis_from(&tape, Tensor::full(&[1, 20, 1], 1.0), 4, 5);
        let x = randn(&[1, 3, 4, 5], 8);
        let y = project(&basis, tape.var(x.clone()), EXACT).unwrap();
        for c in 0..3 {
            let mean = x.data()[c * 20..(c + 1) * 20].iter().sum::<f64>() / 20.0;
            assert!(y.value().data()[c * 20..(c + 1) * 20].iter().all(|v| (v - mean).abs() < 1e-12));
        }
    }

    #[test]
    fn matches_explicit_projector() {
        let tape = Tape::new();
        let v = randn(&[1, 16, 4], 9);
        let x = randn(&[1, 2, 4, 4], 10);
        let y = project(&basis_from(&tape, v.clone(), 4, 4), tape.var(x.clone()), EXACT).unwrap();
        let cols: Vec<f64> = (0..16).flat_map(|n| (0..2).map(move |c| (n, c))).map(|(n, c)| x.data()[c * 16 + n]).collect();
        let want = crate::numerics::tests::explicit_projection(v.data(), &cols, 16, 4, 2);
        for n in 0..16 {
            for c in 0..2 {
                assert!((y.value().data()[c * 16 + n] - want[n * 2 + c]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn dot_product_scales_quadratically_projection_is_invariant() {
        let tape = Tape::new();
        let v = randn(&[1, 16, 3], 11);
        let x = tape.var(randn(&[1, 2, 4, 4], 12));
        let v2 = v.map(|e| 2.0 * e);
        let p1 = project(&basis_from(&tape, v.clone(), 4, 4), x, EXACT).unwrap().value();
        let p2 = project(&basis_from(&tape, v2.clone(), 4, 4), x, EXACT).unwrap().value();
        assert!(p1.max_abs_diff(&p2) < 1e-4);
        let d1 = project(&basis_from(&tape, v, 4, 4), x, Normalization::None).unwrap().value();
        let d2 = project(&basis_from(&tape, v2, 4, 4), x, Normalization::None).unwrap().value();
        assert!(d2.max_abs_diff(&d1.map(|e| 4.0 * e)) < 1e-9 * d2.max_abs().max(1.0));
    }

    #[test]
    fn gradcheck_full_block_both_variants() {
        for variant in [SsaVariant::Projection, SsaVariant::DotProduct] {
            let cfg = SsaConfig { variant, gram_epsilon: 0.0, ..SsaConfig::with_k(2) };
            let block = SsaBlock::new("s", 4, cfg, 0.2).unwrap();
            let mut store = ParamStore::<f64>::new();
            block.register(&mut store, 21);
            let mut inputs = vec![("x1".to_string(), randn(&[1, 4, 8, 8], 13)), ("x2".to_string(), randn(&[1, 4, 8, 8], 14))];
            let names: Vec<String> = store.names().cloned().collect();
            inputs.extend(store.iter().map(|(k, v)| (k.clone(), v.clone())));
            let r = gradcheck(
                "ssa",
                |_, v| {
                    let p = Bound::from_vars(names.iter().cloned().zip(v[2..].iter().copied()).collect());
                    block.forward(&p, v[0], v[1])
                },
                &inputs,
                GradcheckOptions { max_probes: Some(48), ..Default::default() },
            )
            .unwrap();
            assert!(r.passed(), "{variant:?}: {r}");
        }
    }
}
