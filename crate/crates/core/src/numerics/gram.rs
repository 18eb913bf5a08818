//! Batched projection onto the column span of a basis, `V (VᵀV + εI)⁻¹ Vᵀ X`,
//! evaluated without forming the `N x N` projector.

use super::linalg::{gemm, Cholesky, MatMut, MatRef};
use super::{Scalar, Tensor};
use crate::error::{config_err, Error, Result};

/// How the coefficients `A` in `Y = V A` are obtained from `B = VᵀX`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Normalization {
    /// `A = (VᵀV + εI)⁻¹ B`; `epsilon = 0` gives the exact orthogonal projector.
    Gram { epsilon: f64 },
    /// `A = B`; the un-normalized dot-product variant.
    None,
}

/// Per-batch quantities saved by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ProjectionCache<T> {
    /// Coefficients `A`, `[B, K, C]`.
    pub coeffs: Tensor<T>,
    /// Cholesky factors of the regularized Gram matrices (empty for `Normalization::None`).
    pub factors: Vec<Cholesky>,
}

struct Dims {
    batch: usize,
    n: usize,
    k: usize,
    c: usize,
}

fn dims<T: Scalar>(basis: &Tensor<T>, x: &Tensor<T>) -> Result<Dims> {
    let [b, n, k] = basis.dims3()?;
    let [bx, nx, c] = x.dims3()?;
    if b != bx || n != nx {
        return config_err(format!(
            "projection basis {:?} incompatible with features {:?}",
            basis.shape(),
            x.shape()
        ));
    }
    if k > n {
        return config_err(format!("subspace dimension {k} exceeds vector length {n}"));
    }
    Ok(Dims { batch: b, n, k, c })
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

fn from_f64<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::from_f64_lossy(x)).collect()
}

/// Computes `Y = V A` for every batch element. `basis` is `[B, N, K]`,
/// `x` is `[B, N, C]`.
pub fn project_forward<T: Scalar>(
    basis: &Tensor<T>,
    x: &Tensor<T>,
    mode: Normalization,
) -> Result<(Tensor<T>, ProjectionCache<T>)> {
    let Dims { batch, n, k, c } = dims(basis, x)?;
    let mut coeffs = vec![T::zero(); batch * k * c];
    let mut out = vec![T::zero(); batch * n * c];
    let mut factors = Vec::new();
    let mut gram = vec![T::zero(); k * k];
    for b in 0..batch {
        let vb = MatRef::new(&basis.data()[b * n * k..(b + 1) * n * k], n, k);
        let xb = MatRef::new(&x.data()[b * n * c..(b + 1) * n * c], n, c);
        let ab = &mut coeffs[b * k * c..(b + 1) * k * c];
        gemm(T::one(), vb.t(), xb, T::zero(), MatMut::new(ab, k, c));
        if let Normalization::Gram { epsilon } = mode {
            gemm(T::one(), vb.t(), vb, T::zero(), MatMut::new(&mut gram, k, k));
            let mut g64 = to_f64(&gram);
            for i in 0..k {
                g64[i * k + i] += epsilon;
            }
            if g64.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical { batch: b, reason: "non-finite Gram matrix".into() });
            }
            let chol = Cholesky::factor(&g64, k)
                .map_err(|reason| Error::Numerical { batch: b, reason })?;
            let mut a64 = to_f64(ab);
            chol.solve_in_place(&mut a64, c);
            ab.copy_from_slice(&from_f64::<T>(&a64));
            factors.push(chol);
        }
        gemm(
            T::one(),
            vb,
            MatRef::new(ab, k, c),
            T::zero(),
            MatMut::new(&mut out[b * n * c..(b + 1) * n * c], n, c),
        );
    }
    let y = Tensor::from_parts(vec![batch, n, c], out);
    y.ensure_finite("batched_gram_solve")?;
    Ok((y, ProjectionCache { coeffs: Tensor::from_parts(vec![batch, k, c], coeffs), factors }))
}

/// Vector-Jacobian product of [`project_forward`]. Returns `(dV, dX)`.
///
/// With `dA = Vᵀ dY` and `dB = G⁻¹ dA` (or `dB = dA` without normalization):
/// `dX = V dB` and `dV = dY Aᵀ + X dBᵀ − V (dB Aᵀ + A dBᵀ)`, the last term
/// only when the Gram matrix participates.
pub fn project_backward<T: Scalar>(
    basis: &Tensor<T>,
    x: &Tensor<T>,
    cache: &ProjectionCache<T>,
    grad_out: &Tensor<T>,
    need: [bool; 2],
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>)> {
    let Dims { batch, n, k, c } = dims(basis, x)?;
    let normalized = !cache.factors.is_empty();
    let mut dv = need[0].then(|| vec![T::zero(); basis.len()]);
    let mut dx = need[1].then(|| vec![T::zero(); x.len()]);
    let mut db = vec![T::zero(); k * c];
    let mut sym = vec![T::zero(); k * k];
    for b in 0..batch {
        let vb = MatRef::new(&basis.data()[b * n * k..(b + 1) * n * k], n, k);
        let xb = MatRef::new(&x.data()[b * n * c..(b + 1) * n * c], n, c);
        let gb = MatRef::new(&grad_out.data()[b * n * c..(b + 1) * n * c], n, c);
        let ab = MatRef::new(&cache.coeffs.data()[b * k * c..(b + 1) * k * c], k, c);
        gemm(T::one(), vb.t(), gb, T::zero(), MatMut::new(&mut db, k, c));
        if normalized {
            let mut d64 = to_f64(&db);
            cache.factors[b].solve_in_place(&mut d64, c);
            db.copy_from_slice(&from_f64::<T>(&d64));
        }
        let dbm = MatRef::new(&db, k, c);
        if let Some(dx) = dx.as_mut() {
            gemm(T::one(), vb, dbm, T::zero(), MatMut::new(&mut dx[b * n * c..(b + 1) * n * c], n, c));
        }
        if let Some(dv) = dv.as_mut() {
            let dvb = &mut dv[b * n * k..(b + 1) * n * k];
            gemm(T::one(), gb, ab.t(), T::zero(), MatMut::new(dvb, n, k));
            gemm(T::one(), xb, dbm.t(), T::one(), MatMut::new(dvb, n, k));
            if normalized {
                gemm(T::one(), dbm, ab.t(), T::zero(), MatMut::new(&mut sym, k, k));
                for i in 0..k {
                    for j in (i + 1)..k {
                        let s = sym[i * k + j] + sym[j * k + i];
                        sym[i * k + j] = s;
                        sym[j * k + i] = s;
                    }
                    sym[i * k + i] = sym[i * k + i] + sym[i * k + i];
                }
                gemm(-T::one(), vb, MatRef::new(&sym, k, k), T::one(), MatMut::new(dvb, n, k));
            }
        }
    }
    Ok((
        dv.map(|d| Tensor::from_parts(basis.shape().to_vec(), d)),
        dx.map(|d| Tensor::from_parts(x.shape().to_vec(), d)),
    ))
}
