//! Synthetic Gaussian noise: spatially constant (AWGN) and mask-modulated.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::numerics::{Scalar, Tensor};
use crate::random::{mix_seed, SeededStream};

pub const SIGMA_MIN: f64 = 5.0 / 255.0;
pub const SIGMA_MAX: f64 = 50.0 / 255.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskId {
    /// Gaussian bump with a random center.
    Train,
    /// Centered valley, the inverse of the training bump.
    Test1,
    /// Left-to-right ramp.
    Test2,
    /// Diagonal sinusoid.
    Test3,
    /// Every pixel has the given standard deviation (debugging aid).
    Constant(f64),
}

/// Per-pixel standard deviations, `[H, W]`, in `[0, 1]` image units.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseMask {
    pub values: Tensor<f64>,
}

pub fn make_mask(id: MaskId, height: usize, width: usize, seed: u64) -> Result<NoiseMask> {
    if height < 8 || width < 8 {
        return config_err(format!("noise masks need at least 8x8 pixels, got {height}x{width}"));
    }
    let (h, w) = (height as f64, width as f64);
    let span = SIGMA_MAX - SIGMA_MIN;
    let bump = |cy: f64, cx: f64| {
        let s = 0.25 * h.max(w);
        move |y: f64, x: f64| (-((y - cy).powi(2) + (x - cx).powi(2)) / (2.0 * s * s)).exp()
    };
    let f: Box<dyn Fn(f64, f64) -> f64> = match id {
        MaskId::Train => {
            let mut rng = SeededStream::new(mix_seed(seed, 0x6d61_736b), 0);
            let b = bump(rng.uniform_open0() * h, rng.uniform_open0() * w);
            Box::new(move |y, x| SIGMA_MIN + span * b(y, x))
        }
        MaskId::Test1 => {
            let b = bump((h - 1.0) / 2.0, (w - 1.0) / 2.0);
            Box::new(move |y, x| SIGMA_MAX - span * b(y, x))
        }
        MaskId::Test2 => Box::new(move |_, x| SIGMA_MIN + span * x / (w - 1.0)),
        MaskId::Test3 => {
            let period = (h + w) / 4.0;
            Box::new(move |y, x| SIGMA_MIN + span * 0.5 * (1.0 + (2.0 * PI * (x + y) / period).sin()))
        }
        MaskId::Constant(v) => {
            if !(v > 0.0 && v.is_finite()) {
                return config_err(format!("constant mask value {v} must be positive"));
            }
            Box::new(move |_, _| v)
        }
    };
    let values = Tensor::from_fn(&[height, width], |i| f((i / width) as f64, (i % width) as f64));
    Ok(NoiseMask { values })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseKind {
    Awgn { sigma: f64 },
    Noniid { mask: MaskId },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn awgn(sigma: f64, seed: u64) -> Self {
        NoiseSpec { kind: NoiseKind::Awgn { sigma }, seed }
    }

    pub fn noniid(mask: MaskId, seed: u64) -> Self {
        NoiseSpec { kind: NoiseKind::Noniid { mask }, seed }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        NoiseSpec { seed, ..self }
    }
}

/// CLI form: `awgn:<sigma in 8-bit units>` or `noniid:<train|test1|test2|test3|const=<8-bit sigma>>`.
/// The seed is left at 0.
impl FromStr for NoiseSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s.split_once(':').ok_or_else(|| Error::Config(format!("noise spec {s:?} lacks ':'")))?;
        let level = |v: &str| -> Result<f64> {
            match v.parse::<f64>() {
                Ok(x) if x > 0.0 && x.is_finite() => Ok(x / 255.0),
                _ => config_err(format!("noise level {v:?} must be a positive number in 8-bit units")),
            }
        };
        let kind = match kind {
            "awgn" => NoiseKind::Awgn { sigma: level(arg)? },
            "noniid" => NoiseKind::Noniid {
                mask: match arg {
                    "train" => MaskId::Train,
                    "test1" => MaskId::Test1,
                    "test2" => MaskId::Test2,
                    "test3" => MaskId::Test3,
                    other => match other.strip_prefix("const=") {
                        Some(v) => MaskId::Constant(level(v)?),
                        None => return config_err(format!("unknown mask {other:?}")),
                    },
                },
            },
            other => return config_err(format!("unknown noise kind {other:?}; expected awgn or noniid")),
        };
        Ok(NoiseSpec { kind, seed: 0 })
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NoiseKind::Awgn { sigma } => write!(f, "awgn:{}", sigma * 255.0)?,
            NoiseKind::Noniid { mask: MaskId::Constant(v) } => write!(f, "noniid:const={}", v * 255.0)?,
            NoiseKind::Noniid { mask } => write!(f, "noniid:{}", format!("{mask:?}").to_lowercase())?,
        }
        write!(f, " seed={}", self.seed)
    }
}

/// Adds noise to `clean` (`[B, C, H, W]`). `stream` selects an independent
/// realization, e.g. one per training step or per evaluation image. The
/// output is not clamped.
pub fn apply_noise<T: Scalar>(clean: &Tensor<T>, spec: &NoiseSpec, stream: u64) -> Result<Tensor<T>> {
    let [_, _, h, w] = clean.dims4()?;
    let mut rng = SeededStream::new(spec.seed, stream);
    let mut out = clean.clone();
    match spec.kind {
        NoiseKind::Awgn { sigma } => {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return config_err(format!("sigma {sigma} must be finite and non-negative"));
            }
            for v in out.data_mut() {
                *v = *v + T::from_f64_lossy(rng.normal() * sigma);
            }
        }
        NoiseKind::Noniid { mask } => {
            let m = make_mask(mask, h, w, mix_seed(spec.seed, stream))?;
            let hw = h * w;
            for (i, v) in out.data_mut().iter_mut().enumerate() {
                *v = *v + T::from_f64_lossy(rng.normal() * m.values.data()[i % hw]);
            }
        }
    }
    Ok(out)
}
