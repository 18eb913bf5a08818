//! Parameterized layers. Layers hold parameter names; values live in a
//! [`ParamStore`] and are looked up on a [`Bound`] set during `forward`.

use super::params::{Bound, ParamStore};
use crate::error::{config_err, Result};
use crate::numerics::{Scalar, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct Conv {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Conv { name: name.into(), in_channels: cin, out_channels: cout, kernel, stride, padding }
    }

    /// 3x3, stride 1, padding 1.
    pub fn same3x3(name: impl Into<String>, cin: usize, cout: usize) -> Self {
        Self::new(name, cin, cout, 3, 1, 1)
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, seed: u64) {
        let k = self.kernel;
        store.insert_he(&self.weight_name(), &[self.out_channels, self.in_channels, k, k], self.in_channels * k * k, seed);
        store.insert_zeros(&self.bias_name(), &[self.out_channels]);
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.conv2d(&p.get(&self.weight_name())?, &p.get(&self.bias_name())?, self.stride, self.padding)
    }

    pub fn param_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel + self.out_channels
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        ((h + 2 * self.padding - self.kernel) / self.stride + 1, (w + 2 * self.padding - self.kernel) / self.stride + 1)
    }

    /// Multiply-accumulates for one image of size `h x w`.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let (oh, ow) = self.output_size(h, w);
        (self.out_channels * self.in_channels * self.kernel * self.kernel * oh * ow) as u64
    }
}

/// Transposed convolution with kernel equal to stride.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
}

impl ConvTranspose {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize, stride: usize) -> Self {
        ConvTranspose { name: name.into(), in_channels: cin, out_channels: cout, stride }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, seed: u64) {
        let s = self.stride;
        // Taps do not overlap, so each output sums over the input channels only.
        store.insert_he(&self.weight_name(), &[self.in_channels, self.out_channels, s, s], self.in_channels, seed);
        store.insert_zeros(&self.bias_name(), &[self.out_channels]);
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.conv_transpose2d(&p.get(&self.weight_name())?, &p.get(&self.bias_name())?, self.stride)
    }

    pub fn param_count(&self) -> usize {
        self.in_channels * self.out_channels * self.stride * self.stride + self.out_channels
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        (self.in_channels * self.out_channels * self.stride * self.stride * h * w) as u64
    }
}

/// Residual block: two 3x3 convolutions, each followed by LeakyReLU, plus an
/// identity skip (or a 1x1 convolution when the channel count changes).
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock {
    pub name: String,
    pub conv1: Conv,
    pub conv2: Conv,
    pub skip: Option<Conv>,
    pub slope: f64,
}

impl ConvBlock {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize, slope: f64) -> Self {
        let name = name.into();
        ConvBlock {
            conv1: Conv::same3x3(format!("{name}.conv1"), cin, cout),
            conv2: Conv::same3x3(format!("{name}.conv2"), cout, cout),
            skip: (cin != cout).then(|| Conv::new(format!("{name}.skip"), cin, cout, 1, 1, 0)),
            name,
            slope,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.conv1.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels
    }

    pub fn convs(&self) -> impl Iterator<Item = &Conv> {
        [&self.conv1, &self.conv2].into_iter().chain(self.skip.as_ref())
    }

    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, seed: u64) {
        for c in self.convs() {
            c.register(store, seed);
        }
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let [_, c, _, _] = x.value().dims4()?;
        if c != self.in_channels() {
            return config_err(format!("{}: expected {} channels, got {c}", self.name, self.in_channels()));
        }
        let slope = T::from_f64_lossy(self.slope);
        let h = self.conv1.forward(p, x)?.leaky_relu(slope)?;
        let h = self.conv2.forward(p, h)?.leaky_relu(slope)?;
        let identity = match &self.skip {
            Some(s) => s.forward(p, x)?,
            None => x,
        };
        h.add(&identity)
    }

    pub fn param_count(&self) -> usize {
        self.convs().map(Conv::param_count).sum()
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        self.convs().map(|c| c.macs(h, w)).sum()
    }
}
