use std::fmt;
use std::path::Path;

use crate::error::{config_err, Error, Result};
use crate::metrics::{psnr, ssim, MetricReport, SsimWindow};
use crate::net::{NbNet, ParamStore, TrainState};
use crate::noise::{apply_noise, NoiseSpec};
use crate::numerics::{Scalar, Tape, Tensor};
use crate::pipeline::data::{sample_batch, TrainData};
use crate::pipeline::optim::{adam_step, clip_grad_norm, cosine_lr};
use crate::pipeline::TrainConfig;
use crate::random::{mix_seed, str_hash, SeededStream};

const BATCH_STREAM: u64 = 0xba7c;

#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry {
    /// Number of optimizer steps completed.
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub val: Option<(f64, f64)>,
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step={} lr={:.6e} loss={:.6}", self.step, self.lr, self.loss)?;
        if let Some((p, s)) = self.val {
            write!(f, " val_psnr={p:.4} val_ssim={s:.5}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T: Scalar> {
    pub state: TrainState<T>,
    /// Training loss of every step run, in order.
    pub losses: Vec<f64>,
    pub log: Vec<LogEntry>,
}

/// An evaluation image, `[1, C, H, W]`. Without `noisy`, noise is synthesized.
#[derive(Clone, Debug)]
pub struct EvalImage<T: Scalar> {
    pub name: String,
    pub clean: Tensor<T>,
    pub noisy: Option<Tensor<T>>,
}

/// Runs the network once; the output is not clamped.
pub fn denoise<T: Scalar>(net: &NbNet, params: &ParamStore<T>, noisy: &Tensor<T>) -> Result<Tensor<T>> {
    let tape = Tape::new();
    let out = net.forward(&params.bind(&tape), tape.constant(noisy.clone()))?;
    Ok((*out.value()).clone())
}

fn grads_of<T: Scalar>(state: &TrainState<T>, cfg: &TrainConfig, data: &TrainData<T>, net: &NbNet) -> Result<(f64, ParamStore<T>)> {
    let step = state.step;
    let mut rng = SeededStream::new(mix_seed(cfg.seed, BATCH_STREAM), step);
    let noise_stream = if cfg.freeze_noise { 0 } else { step };
    let (clean, noisy) = sample_batch(data, cfg.patch, cfg.batch, cfg.augment(), &mut rng, noise_stream)?;
    let tape = Tape::new();
    let p = state.params.bind(&tape);
    let loss = net.forward(&p, tape.constant(noisy))?.l1_loss(&tape.constant(clean))?;
    let value = loss.value().item().to_f64_lossy();
    let g = tape.backward(loss)?;
    let mut grads = ParamStore::new();
    for (name, v) in p.iter() {
        grads.insert(name.clone(), g.get_or_zeros(v));
    }
    Ok((value, grads))
}

/// Trains from `state.step` up to `cfg.total_iters`.
///
/// If the loss or a gradient goes non-finite, the state from before that step
/// is written to `checkpoint` (when given) and the error is returned.
pub fn train<T: Scalar>(
    mut state: TrainState<T>,
    cfg: &TrainConfig,
    data: &TrainData<T>,
    val: &[EvalImage<T>],
    checkpoint: Option<&Path>,
    mut on_log: impl FnMut(&LogEntry),
) -> Result<TrainOutcome<T>> {
    cfg.validate(&state.config)?;
    if data.channels() != state.config.image_channels {
        return config_err(format!(
            "data has {} channels, network expects {}",
            data.channels(),
            state.config.image_channels
        ));
    }
    let net = state.net()?;
    let mut losses = Vec::new();
    let mut log = Vec::new();
    let end = cfg.stop_at.map_or(cfg.total_iters, |s| s.min(cfg.total_iters));
    while state.step < end {
        let lr = cosine_lr(state.step, cfg.total_iters, cfg.lr0, cfg.eta_min);
        let step = state.step;
        let attempt = grads_of(&state, cfg, data, &net).and_then(|(loss, mut grads)| {
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            if let Some(n) = cfg.max_grad_norm {
                clip_grad_norm(&mut grads, n);
            }
            let mut next = state.clone();
            adam_step(&mut next, &grads, cfg.adam(lr))?;
            Ok((loss, next))
        });
        let (loss, next) = match attempt {
            Ok(v) => v,
            Err(e) => {
                let e = match e {
                    Error::NonFinite { .. } => Error::NonFiniteLoss { step },
                    other => other,
                };
                if let (Some(path), Error::NonFiniteLoss { .. } | Error::NonFiniteGradient(_)) = (checkpoint, &e) {
                    state.save(path)?;
                }
                return Err(e);
            }
        };
        state = next;
        losses.push(loss);
        let done = state.step;
        let want_val = cfg.eval_every > 0 && !val.is_empty() && done % cfg.eval_every == 0;
        if want_val || (cfg.log_every > 0 && done % cfg.log_every == 0) || done == cfg.total_iters {
            let val = if want_val {
                let r = evaluate(&state, val, data.noise())?;
                Some((r.mean_psnr(), r.mean_ssim()))
            } else {
                None
            };
            let entry = LogEntry { step: done, lr, loss, val };
            on_log(&entry);
            log.push(entry);
        }
        if let Some(path) = checkpoint {
            if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 {
                state.save(path)?;
            }
        }
    }
    if let Some(path) = checkpoint {
        state.save(path)?;
    }
    Ok(TrainOutcome { state, losses, log })
}

fn center_crop<T: Scalar>(t: &Tensor<T>, multiple: usize) -> Result<Tensor<T>> {
    let [b, c, h, w] = t.dims4()?;
    let (nh, nw) = (h / multiple * multiple, w / multiple * multiple);
    if nh == 0 || nw == 0 {
        return config_err(format!("image {h}x{w} is smaller than the required multiple {multiple}"));
    }
    if (nh, nw) == (h, w) {
        return Ok(t.clone());
    }
    let (top, left) = ((h - nh) / 2, (w - nw) / 2);
    let d = t.data();
    Ok(Tensor::from_fn(&[b, c, nh, nw], |i| {
        let (plane, y, x) = (i / (nh * nw), (i / nw) % nh, i % nw);
        d[(plane * h + top + y) * w + left + x]
    }))
}

/// Clean/noisy pairs as evaluated: center-cropped to `multiple`, with
/// synthesized noise seeded by the image name.
pub fn eval_pairs<T: Scalar>(
    images: &[EvalImage<T>],
    noise: Option<&NoiseSpec>,
    multiple: usize,
) -> Result<Vec<(String, Tensor<T>, Tensor<T>)>> {
    images
        .iter()
        .map(|img| {
            let clean = center_crop(&img.clean, multiple)?;
            let noisy = match (&img.noisy, noise) {
                (Some(n), _) => center_crop(n, multiple)?,
                (None, Some(spec)) => apply_noise(&clean, spec, str_hash(&img.name))?,
                (None, None) => return config_err(format!("{}: no noisy image and no noise model", img.name)),
            };
            Ok((img.name.clone(), clean, noisy))
        })
        .collect()
}

fn score<T: Scalar>(report: &mut MetricReport, name: &str, clean: &Tensor<T>, out: &Tensor<T>) -> Result<()> {
    let out = out.clamp(T::zero(), T::one());
    report.push(name, psnr(clean, &out, 1.0)?, ssim(clean, &out, 1.0, SsimWindow::Gaussian11)?);
    Ok(())
}

/// Per-image PSNR/SSIM of the clamped network output against the clean image.
pub fn evaluate<T: Scalar>(state: &TrainState<T>, images: &[EvalImage<T>], noise: Option<&NoiseSpec>) -> Result<MetricReport> {
    let net = state.net()?;
    let mut report = MetricReport::default();
    for (name, clean, noisy) in eval_pairs(images, noise, state.config.size_multiple())? {
        score(&mut report, &name, &clean, &denoise(&net, &state.params, &noisy)?)?;
    }
    Ok(report)
}

/// The same report for the (clamped) noisy inputs themselves.
pub fn baseline<T: Scalar>(images: &[EvalImage<T>], noise: Option<&NoiseSpec>, multiple: usize) -> Result<MetricReport> {
    let mut report = MetricReport::default();
    for (name, clean, noisy) in eval_pairs(images, noise, multiple)? {
        score(&mut report, &name, &clean, &noisy)?;
    }
    Ok(report)
}
