//! Oracle-backed tests for the tensor engine.

use super::gradcheck::{gradcheck, GradcheckOptions};
use super::{batched_gram_solve, Normalization, Tape, Tensor};
use crate::random::SeededStream;

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut s = SeededStream::new(seed, 99);
    Tensor::from_fn(shape, |_| s.normal())
}

/// Direct sliding-window cross-correlation.
fn conv2d_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], stride: usize, pad: usize) -> Tensor<f64> {
    let [bn, cin, h, wd] = x.dims4().unwrap();
    let [cout, _, kh, kw] = w.dims4().unwrap();
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = Tensor::zeros(&[bn, cout, oh, ow]);
    for n in 0..bn {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = b[co];
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    s += x.data()[((n * cin + ci) * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((co * cin + ci) * kh + ky) * kw + kx];
                                }
                            }
                        }
                    }
                    out.data_mut()[((n * cout + co) * oh + oy) * ow + ox] = s;
                }
            }
        }
    }
    out
}

/// Insert `stride - 1` zeros between pixels, pad by `k - 1`, then correlate
/// with the spatially flipped kernel.
fn conv_transpose_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], stride: usize) -> Tensor<f64> {
    let [bn, cin, h, wd] = x.dims4().unwrap();
    let [_, cout, k, _] = w.dims4().unwrap();
    let zh = (h - 1) * stride + 1 + 2 * (k - 1);
    let zw = (wd - 1) * stride + 1 + 2 * (k - 1);
    let mut z = Tensor::zeros(&[bn, cin, zh, zw]);
    for n in 0..bn {
        for c in 0..cin {
            for i in 0..h {
                for j in 0..wd {
                    z.data_mut()[((n * cin + c) * zh + k - 1 + i * stride) * zw + k - 1 + j * stride] =
                        x.data()[((n * cin + c) * h + i) * wd + j];
                }
            }
        }
    }
    let mut flipped = Tensor::zeros(&[cout, cin, k, k]);
    for ci in 0..cin {
        for co in 0..cout {
            for a in 0..k {
                for bb in 0..k {
                    flipped.data_mut()[((co * cin + ci) * k + a) * k + bb] =
                        w.data()[((ci * cout + co) * k + (k - 1 - a)) * k + (k - 1 - bb)];
                }
            }
        }
    }
    conv2d_oracle(&z, &flipped, b, 1, 0)
}

fn invert(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs())).unwrap();
        for k in 0..n {
            m.swap(col * n + k, piv * n + k);
            inv.swap(col * n + k, piv * n + k);
        }
        let d = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                for k in 0..n {
                    m[r * n + k] -= f * m[col * n + k];
                    inv[r * n + k] -= f * inv[col * n + k];
                }
            }
        }
    }
    inv
}

/// Explicit `P = V (VᵀV)⁻¹ Vᵀ`, then `P X`, for one batch element.
pub(crate) fn explicit_projection(v: &[f64], x: &[f64], n: usize, k: usize, c: usize) -> Vec<f64> {
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            g[i * k + j] = (0..n).map(|r| v[r * k + i] * v[r * k + j]).sum();
        }
    }
    let gi = invert(&g, k);
    let mut p = vec![0.0; n * n];
    for r in 0..n {
        for s in 0..n {
            let mut acc = 0.0;
            for i in 0..k {
                for j in 0..k {
                    acc += v[r * k + i] * gi[i * k + j] * v[s * k + j];
                }
            }
            p[r * n + s] = acc;
        }
    }
    let mut y = vec![0.0; n * c];
    for r in 0..n {
        for cc in 0..c {
            y[r * c + cc] = (0..n).map(|s| p[r * n + s] * x[s * c + cc]).sum();
        }
    }
    y
}

#[test]
fn conv2d_scalar_scaling() {
    let tape = Tape::<f32>::new();
    let x = tape.var(Tensor::full(&[1, 1, 2, 2], 1.0));
    let w = tape.var(Tensor::full(&[1, 1, 1, 1], 2.0));
    let b = tape.var(Tensor::zeros(&[1]));
    let y = x.conv2d(&w, &b, 1, 0).unwrap();
    assert_eq!(y.value().data(), &[2.0; 4]);
}

#[test]
fn conv2d_identity_kernel() {
    let tape = Tape::<f64>::new();
    let xin = randn(&[1, 1, 5, 5], 1);
    let mut k = Tensor::zeros(&[1, 1, 3, 3]);
    k.data_mut()[4] = 1.0;
    let y = tape
        .var(xin.clone())
        .conv2d(&tape.var(k), &tape.var(Tensor::zeros(&[1])), 1, 1)
        .unwrap();
    assert_eq!(*y.value(), xin);
}

#[test]
fn conv2d_matches_sliding_window_oracle() {
    let x = randn(&[1, 2, 6, 6], 2);
    let w = randn(&[4, 2, 3, 3], 3);
    let b = randn(&[4], 4);
    let tape = Tape::<f64>::new();
    let y = tape.var(x.clone()).conv2d(&tape.var(w.clone()), &tape.var(b.clone()), 2, 1).unwrap();
    let want = conv2d_oracle(&x, &w, b.data(), 2, 1);
    assert_eq!(y.shape(), vec![1, 4, 3, 3]);
    assert!(y.value().max_abs_diff(&want) < 1e-5);
    // 4x4 stride-2 downsampling halves even sizes exactly.
    let w4 = randn(&[3, 2, 4, 4], 5);
    let y4 = tape.var(x.clone()).conv2d(&tape.var(w4.clone()), &tape.var(Tensor::zeros(&[3])), 2, 1).unwrap();
    assert_eq!(y4.shape(), vec![1, 3, 3, 3]);
    assert!(y4.value().max_abs_diff(&conv2d_oracle(&x, &w4, &[0.0; 3], 2, 1)) < 1e-9);
}

#[test]
fn conv2d_f32_agrees_with_oracle() {
    let x = randn(&[2, 3, 7, 5], 6);
    let w = randn(&[5, 3, 3, 3], 7);
    let b = randn(&[5], 8);
    let tape = Tape::<f32>::new();
    let y = tape.var(x.cast()).conv2d(&tape.var(w.cast()), &tape.var(b.cast()), 1, 1).unwrap();
    let want = conv2d_oracle(&x, &w, b.data(), 1, 1);
    assert!(y.value().cast::<f64>().max_abs_diff(&want) < 1e-4);
}

#[test]
fn conv2d_rejects_channel_mismatch() {
    let tape = Tape::<f32>::new();
    let x = tape.var(Tensor::zeros(&[1, 2, 4, 4]));
    let w = tape.var(Tensor::zeros(&[1, 3, 3, 3]));
    let b = tape.var(Tensor::zeros(&[1]));
    assert!(matches!(x.conv2d(&w, &b, 1, 1), Err(crate::Error::Config(_))));
}

#[test]
fn conv_transpose_single_pixel_broadcast() {
    let tape = Tape::<f32>::new();
    let x = tape.var(Tensor::full(&[1, 1, 1, 1], 3.0));
    let w = tape.var(Tensor::full(&[1, 1, 2, 2], 1.0));
    let y = x.conv_transpose2d(&w, &tape.var(Tensor::zeros(&[1])), 2).unwrap();
    assert_eq!(y.shape(), vec![1, 1, 2, 2]);
    assert_eq!(y.value().data(), &[3.0; 4]);
}

#[test]
fn conv_transpose_delta_kernel_scatters() {
    let tape = Tape::<f64>::new();
    let xin = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let mut w = Tensor::zeros(&[1, 1, 2, 2]);
    w.data_mut()[1] = 0.5; // tap at (0, 1)
    let y = tape.var(xin).conv_transpose2d(&tape.var(w), &tape.var(Tensor::zeros(&[1])), 2).unwrap();
    let v = y.value();
    let mut want = vec![0.0; 16];
    for (i, val) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
        let (r, c) = (i / 2, i % 2);
        want[(2 * r) * 4 + 2 * c + 1] = 0.5 * val;
    }
    assert_eq!(v.data(), want.as_slice());
}

#[test]
fn conv_transpose_matches_zero_insertion_oracle() {
    let x = randn(&[2, 3, 3, 4], 9);
    let w = randn(&[3, 2, 2, 2], 10);
    let b = randn(&[2], 11);
    let tape = Tape::<f64>::new();
    let y = tape.var(x.clone()).conv_transpose2d(&tape.var(w.clone()), &tape.var(b.clone()), 2).unwrap();
    assert_eq!(y.shape(), vec![2, 2, 6, 8]);
    assert!(y.value().max_abs_diff(&conv_transpose_oracle(&x, &w, b.data(), 2)) < 1e-5);
}

#[test]
fn conv_transpose_rejects_overlapping_kernels() {
    let tape = Tape::<f32>::new();
    let x = tape.var(Tensor::zeros(&[1, 1, 2, 2]));
    let w = tape.var(Tensor::zeros(&[1, 1, 3, 3]));
    assert!(x.conv_transpose2d(&w, &tape.var(Tensor::zeros(&[1])), 2).is_err());
}

#[test]
fn leaky_relu_values() {
    let tape = Tape::<f32>::new();
    let x = tape.var(Tensor::new(&[2], vec![4.0, -1.0]).unwrap());
    let y = x.leaky_relu(0.2).unwrap();
    assert_eq!(y.value().data()[0], 4.0);
    assert!((y.value().data()[1] + 0.2).abs() < 1e-7);
    assert!(x.leaky_relu(1.5).is_err());
}

#[test]
fn gram_solve_orthonormal_collapses_to_vvt() {
    // Columns of a scaled Hadamard matrix are orthonormal.
    let n = 4;
    let h = [1.0, 1.0, 1.0, 1.0, 1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
    let v = Tensor::from_fn(&[1, n, 3], |i| h[(i % 3) * 4 + i / 3] * 0.5);
    let x = randn(&[1, n, 2], 12);
    let tape = Tape::<f64>::new();
    let y = batched_gram_solve(&tape.var(v.clone()), &tape.var(x.clone()), Normalization::Gram { epsilon: 0.0 })
        .unwrap();
    let mut want = vec![0.0; n * 2];
    for r in 0..n {
        for c in 0..2 {
            for s in 0..n {
                let vvt: f64 = (0..3).map(|k| v.data()[r * 3 + k] * v.data()[s * 3 + k]).sum();
                want[r * 2 + c] += vvt * x.data()[s * 2 + c];
            }
        }
    }
    assert!(y.value().max_abs_diff(&Tensor::new(&[1, n, 2], want).unwrap()) < 1e-5);
}

#[test]
fn gram_solve_constant_column_gives_means() {
    let x = randn(&[2, 6, 3], 13);
    let tape = Tape::<f64>::new();
    let v = tape.var(Tensor::full(&[2, 6, 1], 1.0));
    let y = batched_gram_solve(&v, &tape.var(x.clone()), Normalization::Gram { epsilon: 0.0 }).unwrap();
    for b in 0..2 {
        for c in 0..3 {
            let mean: f64 = (0..6).map(|r| x.data()[(b * 6 + r) * 3 + c]).sum::<f64>() / 6.0;
            for r in 0..6 {
                assert!((y.value().data()[(b * 6 + r) * 3 + c] - mean).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn gram_solve_matches_explicit_inverse() {
    let v = randn(&[3, 12, 3], 14);
    let x = randn(&[3, 12, 5], 15);
    let tape = Tape::<f64>::new();
    let y = batched_gram_solve(&tape.var(v.clone()), &tape.var(x.clone()), Normalization::Gram { epsilon: 0.0 })
        .unwrap();
    for b in 0..3 {
        let want = explicit_projection(&v.data()[b * 36..(b + 1) * 36], &x.data()[b * 60..(b + 1) * 60], 12, 3, 5);
        for (a, w) in y.value().data()[b * 60..(b + 1) * 60].iter().zip(&want) {
            assert!((a - w).abs() < 1e-4);
        }
    }
}

#[test]
fn gram_solve_reports_degenerate_batch() {
    let tape = Tape::<f64>::new();
    let mut v = randn(&[2, 8, 2], 16);
    for e in &mut v.data_mut()[16..] {
        *e = 0.0;
    }
    let err = batched_gram_solve(&tape.var(v), &tape.var(randn(&[2, 8, 1], 17)), Normalization::Gram { epsilon: 0.0 })
        .unwrap_err();
    assert!(matches!(err, crate::Error::Numerical { batch: 1, .. }), "{err}");
}

#[test]
fn shape_ops() {
    let tape = Tape::<f32>::new();
    let a = tape.var(Tensor::zeros(&[1, 2, 4, 4]));
    let b = tape.var(Tensor::zeros(&[1, 3, 4, 4]));
    assert_eq!(super::Var::concat(&[a, b], 1).unwrap().shape(), vec![1, 5, 4, 4]);

    let x = randn(&[2, 3, 2, 4], 18).cast::<f32>();
    let v = tape.var(x.clone());
    let flat = v.reshape(&[2, 3, 8]).unwrap().permute(&[0, 2, 1]).unwrap();
    assert_eq!(flat.shape(), vec![2, 8, 3]);
    let mut sorted_a: Vec<f32> = flat.value().data().to_vec();
    let mut sorted_b: Vec<f32> = x.data().to_vec();
    sorted_a.sort_by(f32::total_cmp);
    sorted_b.sort_by(f32::total_cmp);
    assert_eq!(sorted_a, sorted_b);
    let back = flat.permute(&[0, 2, 1]).unwrap().reshape(&[2, 3, 2, 4]).unwrap();
    assert_eq!(*back.value(), x);
    assert!(v.permute(&[0, 0, 1, 2]).is_err());
    assert!(v.reshape(&[5]).is_err());
}

#[test]
fn mean_gradient_is_one_over_n() {
    let tape = Tape::<f64>::new();
    let x = tape.var(randn(&[3, 5], 19));
    let g = tape.backward(x.mean().unwrap()).unwrap();
    assert!(g.get(&x).unwrap().data().iter().all(|&v| v == 1.0 / 15.0));
}

#[test]
fn l1_loss_cases() {
    let tape = Tape::<f64>::new();
    let a = randn(&[2, 3, 4, 4], 20);
    let p = tape.var(a.clone());
    assert_eq!(p.l1_loss(&tape.var(a.clone())).unwrap().value().item(), 0.0);
    let shifted = tape.var(a.map(|v| v + 0.5));
    assert!((p.l1_loss(&shifted).unwrap().value().item() - 0.5).abs() < 1e-12);

    let b = randn(&[2, 3, 4, 4], 21);
    let want: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    let got = p.l1_loss(&tape.constant(b)).unwrap().value().item();
    assert!((got - want).abs() < 1e-6);
    assert!(p.l1_loss(&tape.var(Tensor::zeros(&[2]))).is_err());
}

#[test]
fn l1_loss_tie_subgradient_is_zero() {
    let tape = Tape::<f32>::new();
    let p = tape.var(Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap());
    let t = tape.constant(Tensor::new(&[3], vec![1.0, 1.0, 4.0]).unwrap());
    let g = tape.backward(p.l1_loss(&t).unwrap()).unwrap();
    assert_eq!(g.get(&p).unwrap().data(), &[0.0, 1.0 / 3.0, -1.0 / 3.0]);
}

#[test]
fn shared_input_gradients_accumulate() {
    let tape = Tape::<f64>::new();
    let x = tape.var(Tensor::new(&[2], vec![1.5, -2.0]).unwrap());
    let y = x.mul(&x).unwrap().add(&x).unwrap().sum().unwrap();
    let g = tape.backward(y).unwrap();
    assert_eq!(g.get(&x).unwrap().data(), &[4.0, -3.0]);
}

#[test]
fn non_finite_outputs_are_errors() {
    let tape = Tape::<f32>::new();
    let x = tape.var(Tensor::full(&[2], f32::MAX));
    assert!(matches!(x.add(&x), Err(crate::Error::NonFinite { .. })));
}

fn opts() -> GradcheckOptions {
    GradcheckOptions { tolerance: 1e-4, ..Default::default() }
}

#[test]
fn gradcheck_linear_map_is_exact() {
    let r = gradcheck("2x", |_, v| v[0].scale(2.0), &[("x".into(), randn(&[7], 22))], opts()).unwrap();
    assert!(r.max_rel_error() < 1e-10, "{r}");
}

#[test]
fn gradcheck_leaky_relu_away_from_kink() {
    let h = 1e-5 * 3.0;
    let mut x = randn(&[40], 23);
    for v in x.data_mut() {
        if v.abs() < 20.0 * h {
            *v = v.signum() * 0.5;
        }
    }
    let mut o = opts();
    o.tolerance = 1e-6;
    let r = gradcheck("leaky_relu", |_, v| v[0].leaky_relu(0.2), &[("x".into(), x)], o).unwrap();
    assert!(r.passed(), "{r}");
}

#[test]
fn gradcheck_conv_ops() {
    let r = gradcheck(
        "conv2d",
        |_, v| v[0].conv2d(&v[1], &v[2], 2, 1),
        &[("x".into(), randn(&[2, 2, 6, 6], 24)), ("w".into(), randn(&[3, 2, 4, 4], 25)), ("b".into(), randn(&[3], 26))],
        opts(),
    )
    .unwrap();
    assert!(r.passed(), "{r}");
    let r = gradcheck(
        "conv1x1",
        |_, v| v[0].conv2d(&v[1], &v[2], 1, 0),
        &[("x".into(), randn(&[2, 3, 3, 3], 27)), ("w".into(), randn(&[2, 3, 1, 1], 28)), ("b".into(), randn(&[2], 29))],
        opts(),
    )
    .unwrap();
    assert!(r.passed(), "{r}");
    let r = gradcheck(
        "conv_transpose2d",
        |_, v| v[0].conv_transpose2d(&v[1], &v[2], 2),
        &[("x".into(), randn(&[2, 3, 3, 2], 30)), ("w".into(), randn(&[3, 2, 2, 2], 31)), ("b".into(), randn(&[2], 32))],
        opts(),
    )
    .unwrap();
    assert!(r.passed(), "{r}");
}

#[test]
fn gradcheck_gram_solve_both_modes() {
    for mode in [Normalization::Gram { epsilon: 0.0 }, Normalization::Gram { epsilon: 1e-4 }, Normalization::None] {
        let r = gradcheck(
            "gram",
            move |_, v| batched_gram_solve(&v[0], &v[1], mode),
            &[("v".into(), randn(&[2, 10, 3], 33)), ("x".into(), randn(&[2, 10, 4], 34))],
            opts(),
        )
        .unwrap();
        assert!(r.passed(), "{mode:?}: {r}");
    }
}

#[test]
fn gradcheck_shape_ops() {
    let r = gradcheck(
        "shape ops",
        |_, v| {
            let c = super::Var::concat(&[v[0], v[1]], 1)?;
            let p = c.reshape(&[1, 5, 16])?.permute(&[0, 2, 1])?;
            let q = p.mul(&p)?;
            let crop = v[0].crop2d(1, 0, 2, 3)?.mean()?;
            q.sum()?.add(&crop.scale(3.0)?)?.sub(&v[1].mean()?)
        },
        &[("a".into(), randn(&[1, 2, 4, 4], 35)), ("b".into(), randn(&[1, 3, 4, 4], 36))],
        opts(),
    )
    .unwrap();
    assert!(r.passed(), "{r}");
}

#[test]
fn gradcheck_l1_loss() {
    let r = gradcheck(
        "l1",
        |_, v| v[0].l1_loss(&v[1]),
        &[("p".into(), randn(&[30], 37)), ("t".into(), randn(&[30], 38))],
        opts(),
    )
    .unwrap();
    assert!(r.passed(), "{r}");
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn conv2d_is_linear_in_input_and_weight(seed in 0u64..10_000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let x1 = randn(&[1, 2, 5, 5], seed);
            let x2 = randn(&[1, 2, 5, 5], seed + 1);
            let w1 = randn(&[3, 2, 3, 3], seed + 2);
            let w2 = randn(&[3, 2, 3, 3], seed + 3);
            let zero = Tensor::zeros(&[3]);
            let tape = Tape::<f64>::new();
            let conv = |x: &Tensor<f64>, w: &Tensor<f64>| {
                tape.var(x.clone()).conv2d(&tape.var(w.clone()), &tape.var(zero.clone()), 1, 1).unwrap().value()
            };
            let combo_x = Tensor::from_fn(&[1, 2, 5, 5], |i| a * x1.data()[i] + b * x2.data()[i]);
            let lhs = conv(&combo_x, &w1);
            let (y1, y2) = (conv(&x1, &w1), conv(&x2, &w1));
            let rhs = Tensor::from_fn(lhs.shape(), |i| a * y1.data()[i] + b * y2.data()[i]);
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-5);
            let combo_w = Tensor::from_fn(&[3, 2, 3, 3], |i| a * w1.data()[i] + b * w2.data()[i]);
            let lhs = conv(&x1, &combo_w);
            let (z1, z2) = (conv(&x1, &w1), conv(&x1, &w2));
            let rhs = Tensor::from_fn(lhs.shape(), |i| a * z1.data()[i] + b * z2.data()[i]);
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-5);
        }

        #[test]
        fn projection_is_idempotent_and_orthogonal(seed in 0u64..10_000, n in 6usize..40, k in 1usize..6, c in 1usize..4) {
            let tape = Tape::<f64>::new();
            let v = tape.var(randn(&[1, n, k], seed));
            let x = randn(&[1, n, c], seed + 7);
            let mode = Normalization::Gram { epsilon: 0.0 };
            let y = batched_gram_solve(&v, &tape.var(x.clone()), mode).unwrap();
            let yy = batched_gram_solve(&v, &y, mode).unwrap();
            prop_assert!(yy.value().max_abs_diff(&y.value()) < 1e-5);
            let vt = v.value();
            let yv = y.value();
            for j in 0..k {
                for cc in 0..c {
                    let r: f64 = (0..n).map(|i| vt.data()[i * k + j] * (x.data()[i * c + cc] - yv.data()[i * c + cc])).sum();
                    prop_assert!(r.abs() < 1e-3 * x.max_abs());
                }
            }
        }

        #[test]
        fn identical_runs_are_bitwise_equal(seed in 0u64..10_000) {
            let run = || {
                let tape = Tape::<f32>::new();
                let x = tape.var(randn(&[2, 3, 8, 8], seed).cast());
                let w = tape.var(randn(&[4, 3, 3, 3], seed + 1).cast());
                let b = tape.var(randn(&[4], seed + 2).cast());
                let y = x.conv2d(&w, &b, 1, 1).unwrap().leaky_relu(0.2).unwrap();
                let g = tape.backward(y.sum().unwrap()).unwrap();
                (y.value().data().to_vec(), g.get(&w).unwrap().clone())
            };
            prop_assert_eq!(run(), run());
        }
    }
}
