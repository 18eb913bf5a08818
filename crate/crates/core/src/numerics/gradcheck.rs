//! Central finite-difference verification of analytic gradients (64-bit).
//!
//! A non-scalar output is reduced with fixed pseudo-random weights so that
//! every output element contributes. The error reported for an input is
//!
//! `max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-3 * s)`
//!
//! where `a` is the analytic gradient, `n` the numeric one and `s` the
//! largest gradient magnitude seen for that input. The floor keeps entries
//! that are tiny relative to the rest of the gradient from being judged on
//! cancellation noise alone.

use super::{Tape, Tensor, Var};
use crate::error::Result;
use crate::random::SeededStream;

#[derive(Clone, Copy, Debug)]
pub struct GradcheckOptions {
    /// Finite-difference step relative to the input's scale `max(1, ‖x‖∞)`.
    pub relative_step: f64,
    pub tolerance: f64,
    /// Maximum number of probed elements per input; `None` probes all.
    pub max_probes: Option<usize>,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions { relative_step: 1e-5, tolerance: 1e-4, max_probes: None, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct InputReport {
    pub name: String,
    pub probes: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub label: String,
    pub inputs: Vec<InputReport>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.inputs.iter().map(|r| r.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.inputs.iter().all(|r| r.max_rel_error.is_finite() && r.max_rel_error < self.tolerance)
    }
}

impl std::fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "[{}] {}  max rel err {:.3e} (tol {:.0e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.label,
            self.max_rel_error(),
            self.tolerance
        )?;
        for r in &self.inputs {
            writeln!(f, "    {:<40} probes {:>5}  max rel err {:.3e}", r.name, r.probes, r.max_rel_error)?;
        }
        Ok(())
    }
}

fn probe_indices(len: usize, max: Option<usize>, seed: u64) -> Vec<usize> {
    match max {
        Some(m) if m < len => {
            let mut s = SeededStream::new(seed, len as u64);
            let mut idx: Vec<usize> = (0..len).collect();
            for i in 0..m {
                let j = i + s.below(len - i);
                idx.swap(i, j);
            }
            let mut chosen = idx[..m].to_vec();
            chosen.sort_unstable();
            chosen
        }
        _ => (0..len).collect(),
    }
}

/// Checks `f` at `inputs`. `f` receives one variable per input, in order.
pub fn gradcheck<F>(
    label: &str,
    f: F,
    inputs: &[(String, Tensor<f64>)],
    opts: GradcheckOptions,
) -> Result<GradcheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let mut weights: Option<Tensor<f64>> = None;
    let mut eval = |values: &[Tensor<f64>], grads: bool| -> Result<(f64, Vec<Tensor<f64>>)> {
        let tape = Tape::new();
        let vars: Vec<Var<'_, f64>> = values.iter().map(|v| tape.var(v.clone())).collect();
        let out = f(&tape, &vars)?;
        let out_val = out.value();
        let loss = if out_val.len() == 1 {
            out
        } else {
            let w = weights.get_or_insert_with(|| {
                let mut s = SeededStream::new(opts.seed, 0x5eed);
                Tensor::from_fn(out_val.shape(), |_| s.normal())
            });
            out.mul(&tape.constant(w.clone()))?.sum()?
        };
        let value = loss.value().item();
        if !grads {
            return Ok((value, Vec::new()));
        }
        let g = tape.backward(loss)?;
        Ok((value, vars.iter().map(|v| g.get_or_zeros(v)).collect()))
    };

    let mut values: Vec<Tensor<f64>> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let (_, analytic) = eval(&values, true)?;
    let mut reports = Vec::with_capacity(inputs.len());
    for (k, (name, base)) in inputs.iter().enumerate() {
        let h = opts.relative_step * base.max_abs().max(1.0);
        let idx = probe_indices(base.len(), opts.max_probes, opts.seed ^ k as u64);
        let mut pairs = Vec::with_capacity(idx.len());
        for &i in &idx {
            let x0 = base.data()[i];
            values[k].data_mut()[i] = x0 + h;
            let (fp, _) = eval(&values, false)?;
            values[k].data_mut()[i] = x0 - h;
            let (fm, _) = eval(&values, false)?;
            values[k].data_mut()[i] = x0;
            pairs.push((analytic[k].data()[i], (fp - fm) / (2.0 * h)));
        }
        let scale = pairs.iter().fold(0.0f64, |m, &(a, n)| m.max(a.abs()).max(n.abs()));
        let floor = (1e-3 * scale).max(f64::MIN_POSITIVE);
        let max_rel_error = pairs
            .iter()
            .map(|&(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
            .fold(0.0, f64::max);
        reports.push(InputReport { name: name.clone(), probes: idx.len(), max_rel_error });
    }
    Ok(GradcheckReport { label: label.to_string(), inputs: reports, tolerance: opts.tolerance })
}
