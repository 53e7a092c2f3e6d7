//! Layer math on plain slices, generic over the element type.
//!
//! Convolutions are 3x3 / stride 1 / pad 1 throughout (the only geometry the
//! network builders emit) and are computed via patch-matrix expansion: the
//! input is unrolled into one row of 9*in_ch values per output pixel, and the
//! forward pass is a dot product of that row with each filter row. The same
//! patch matrix drives the weight and input gradients.

use rayon::prelude::*;

use super::scalar::Scalar;

/// Work threshold (multiply-accumulate count) above which a kernel fans out
/// across the current rayon pool. Each output element is computed
/// independently, so parallel runs are bit-identical to sequential ones.
const PAR_MACS: usize = 1 << 21;

#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    const LANES: usize = 8;
    let mut acc = [S::zero(); LANES];
    let chunks_a = a.chunks_exact(LANES);
    let chunks_b = b.chunks_exact(LANES);
    let rem_a = chunks_a.remainder();
    let rem_b = chunks_b.remainder();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for j in 0..LANES {
            acc[j] = acc[j] + ca[j] * cb[j];
        }
    }
    let mut sum = S::zero();
    for &v in &acc {
        sum = sum + v;
    }
    for (&x, &y) in rem_a.iter().zip(rem_b) {
        sum = sum + x * y;
    }
    sum
}

#[inline]
pub fn axpy<S: Scalar>(out: &mut [S], alpha: S, x: &[S]) {
    debug_assert_eq!(out.len(), x.len());
    for (o, &v) in out.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

/// Asserts every value is finite. Active in debug and test builds only.
#[inline]
pub fn debug_assert_finite<S: Scalar>(values: &[S], context: &str) {
    if cfg!(debug_assertions) {
        for (i, v) in values.iter().enumerate() {
            debug_assert!(
                v.is_finite(),
                "non-finite value {v:?} at index {i} after {context}"
            );
        }
    }
}

/// Unrolls a `[in_ch, h, w]` input into the patch matrix for a 3x3 / pad 1 /
/// stride 1 convolution: `h*w` rows of `in_ch * 9` values, zero-filled where
/// the window leaves the input.
pub fn im2col_3x3<S: Scalar>(input: &[S], in_ch: usize, h: usize, w: usize, patches: &mut [S]) {
    let k = in_ch * 9;
    debug_assert_eq!(input.len(), in_ch * h * w);
    debug_assert_eq!(patches.len(), h * w * k);
    for y in 0..h {
        for x in 0..w {
            let row = &mut patches[(y * w + x) * k..(y * w + x + 1) * k];
            let mut col = 0;
            for i in 0..in_ch {
                let plane = &input[i * h * w..(i + 1) * h * w];
                for dy in 0..3 {
                    let sy = (y + dy).wrapping_sub(1);
                    if sy < h {
                        let src = &plane[sy * w..(sy + 1) * w];
                        for dx in 0..3 {
                            let sx = (x + dx).wrapping_sub(1);
                            row[col] = if sx < w { src[sx] } else { S::zero() };
                            col += 1;
                        }
                    } else {
                        row[col] = S::zero();
                        row[col + 1] = S::zero();
                        row[col + 2] = S::zero();
                        col += 3;
                    }
                }
            }
        }
    }
}

/// Forward convolution from a prepared patch matrix.
///
/// `weights` is `[out_ch, in_ch*9]` row-major, `output` is `[out_ch, h*w]`.
pub fn conv3x3_forward_patches<S: Scalar>(
    patches: &[S],
    hw: usize,
    k: usize,
    weights: &[S],
    bias: &[S],
    output: &mut [S],
) {
    let out_ch = bias.len();
    debug_assert_eq!(weights.len(), out_ch * k);
    debug_assert_eq!(output.len(), out_ch * hw);
    let plane = |o: usize, out_plane: &mut [S]| {
        let wo = &weights[o * k..(o + 1) * k];
        let b = bias[o];
        for p in 0..hw {
            out_plane[p] = b + dot(wo, &patches[p * k..(p + 1) * k]);
        }
    };
    if out_ch * hw * k >= PAR_MACS {
        output
            .par_chunks_mut(hw)
            .enumerate()
            .for_each(|(o, out_plane)| plane(o, out_plane));
    } else {
        for (o, out_plane) in output.chunks_mut(hw).enumerate() {
            plane(o, out_plane);
        }
    }
}

/// Convenience wrapper that allocates the patch matrix internally.
pub fn conv3x3_forward<S: Scalar>(
    input: &[S],
    in_ch: usize,
    h: usize,
    w: usize,
    weights: &[S],
    bias: &[S],
) -> Vec<S> {
    let k = in_ch * 9;
    let mut patches = vec![S::zero(); h * w * k];
    im2col_3x3(input, in_ch, h, w, &mut patches);
    let mut output = vec![S::zero(); bias.len() * h * w];
    conv3x3_forward_patches(&patches, h * w, k, weights, bias, &mut output);
    output
}

/// Gradients of a 3x3 convolution. Accumulates into `grad_weights` /
/// `grad_bias`; returns the input gradient when `want_input_grad` is set.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward<S: Scalar>(
    grad_output: &[S],
    patches: &[S],
    in_ch: usize,
    h: usize,
    w: usize,
    weights: &[S],
    grad_weights: &mut [S],
    grad_bias: &mut [S],
    want_input_grad: bool,
) -> Option<Vec<S>> {
    let k = in_ch * 9;
    let hw = h * w;
    let out_ch = grad_bias.len();
    debug_assert_eq!(grad_output.len(), out_ch * hw);
    debug_assert_eq!(grad_weights.len(), out_ch * k);

    let row = |o: usize, gw: &mut [S], gb: &mut S| {
        let gout = &grad_output[o * hw..(o + 1) * hw];
        for p in 0..hw {
            let g = gout[p];
            *gb += g;
            axpy(gw, g, &patches[p * k..(p + 1) * k]);
        }
    };
    if out_ch * hw * k >= PAR_MACS {
        grad_weights
            .par_chunks_mut(k)
            .zip(grad_bias.par_iter_mut())
            .enumerate()
            .for_each(|(o, (gw, gb))| row(o, gw, gb));
    } else {
        for (o, (gw, gb)) in grad_weights
            .chunks_mut(k)
            .zip(grad_bias.iter_mut())
            .enumerate()
        {
            row(o, gw, gb);
        }
    }

    if !want_input_grad {
        return None;
    }

    // dPatches[p] = sum_o grad_output[o][p] * weights[o], then fold the patch
    // rows back onto the padded input grid.
    let mut grad_patches = vec![S::zero(); hw * k];
    let patch_row = |p: usize, gp: &mut [S]| {
        for o in 0..out_ch {
            let g = grad_output[o * hw + p];
            axpy(gp, g, &weights[o * k..(o + 1) * k]);
        }
    };
    if out_ch * hw * k >= PAR_MACS {
        grad_patches
            .par_chunks_mut(k)
            .enumerate()
            .for_each(|(p, gp)| patch_row(p, gp));
    } else {
        for (p, gp) in grad_patches.chunks_mut(k).enumerate() {
            patch_row(p, gp);
        }
    }

    let mut grad_input = vec![S::zero(); in_ch * hw];
    for y in 0..h {
        for x in 0..w {
            let row = &grad_patches[(y * w + x) * k..(y * w + x + 1) * k];
            let mut col = 0;
            for i in 0..in_ch {
                let plane = &mut grad_input[i * hw..(i + 1) * hw];
                for dy in 0..3 {
                    let sy = (y + dy).wrapping_sub(1);
                    if sy < h {
                        for dx in 0..3 {
                            let sx = (x + dx).wrapping_sub(1);
                            if sx < w {
                                plane[sy * w + sx] += row[col];
                            }
                            col += 1;
                        }
                    } else {
                        col += 3;
                    }
                }
            }
        }
    }
    Some(grad_input)
}

pub fn relu_forward<S: Scalar>(input: &[S]) -> Vec<S> {
    input
        .iter()
        .map(|&v| if v > S::zero() { v } else { S::zero() })
        .collect()
}

/// ReLU forward that also emits the active-unit mask for the backward pass.
pub fn relu_forward_masked<S: Scalar>(input: &[S]) -> (Vec<S>, Vec<u8>) {
    let mut out = Vec::with_capacity(input.len());
    let mut mask = Vec::with_capacity(input.len());
    for &v in input {
        let on = v > S::zero();
        mask.push(on as u8);
        out.push(if on { v } else { S::zero() });
    }
    (out, mask)
}

pub fn relu_backward<S: Scalar>(grad_output: &[S], mask: &[u8]) -> Vec<S> {
    debug_assert_eq!(grad_output.len(), mask.len());
    grad_output
        .iter()
        .zip(mask)
        .map(|(&g, &m)| if m != 0 { g } else { S::zero() })
        .collect()
}

/// 2x2 / stride 2 max pooling over `[ch, h, w]`; `h` and `w` must be even
/// (checked by callers). Returns the pooled tensor and the flat input index
/// of each window maximum. Ties go to the first element in scan order.
pub fn maxpool2x2_forward<S: Scalar>(
    input: &[S],
    ch: usize,
    h: usize,
    w: usize,
) -> (Vec<S>, Vec<u32>) {
    debug_assert!(h % 2 == 0 && w % 2 == 0);
    let oh = h / 2;
    let ow = w / 2;
    let mut out = vec![S::zero(); ch * oh * ow];
    let mut argmax = vec![0u32; ch * oh * ow];
    for c in 0..ch {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = (2 * oy) * w + 2 * ox;
                let mut best = plane[best_idx];
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = (2 * oy + dy) * w + (2 * ox + dx);
                        if plane[idx] > best {
                            best = plane[idx];
                            best_idx = idx;
                        }
                    }
                }
                out[c * oh * ow + oy * ow + ox] = best;
                argmax[c * oh * ow + oy * ow + ox] = (c * h * w + best_idx) as u32;
            }
        }
    }
    (out, argmax)
}

pub fn maxpool2x2_backward<S: Scalar>(
    grad_output: &[S],
    argmax: &[u32],
    input_len: usize,
) -> Vec<S> {
    debug_assert_eq!(grad_output.len(), argmax.len());
    let mut grad_input = vec![S::zero(); input_len];
    for (&g, &idx) in grad_output.iter().zip(argmax) {
        grad_input[idx as usize] += g;
    }
    grad_input
}

/// `output = weights * input + bias` with `weights` as `[m, n]` row-major.
pub fn linear_forward<S: Scalar>(input: &[S], weights: &[S], bias: &[S], output: &mut [S]) {
    let n = input.len();
    let m = bias.len();
    debug_assert_eq!(weights.len(), m * n);
    debug_assert_eq!(output.len(), m);
    if m * n >= PAR_MACS {
        output.par_iter_mut().enumerate().for_each(|(r, out)| {
            *out = bias[r] + dot(&weights[r * n..(r + 1) * n], input);
        });
    } else {
        for (r, out) in output.iter_mut().enumerate() {
            *out = bias[r] + dot(&weights[r * n..(r + 1) * n], input);
        }
    }
}

/// Gradients of a linear layer; accumulates parameter gradients and returns
/// the input gradient when requested.
pub fn linear_backward<S: Scalar>(
    grad_output: &[S],
    input: &[S],
    weights: &[S],
    grad_weights: &mut [S],
    grad_bias: &mut [S],
    want_input_grad: bool,
) -> Option<Vec<S>> {
    let n = input.len();
    let m = grad_output.len();
    debug_assert_eq!(weights.len(), m * n);
    if m * n >= PAR_MACS {
        grad_weights
            .par_chunks_mut(n)
            .zip(grad_bias.par_iter_mut())
            .enumerate()
            .for_each(|(r, (gw, gb))| {
                *gb += grad_output[r];
                axpy(gw, grad_output[r], input);
            });
    } else {
        for (r, (gw, gb)) in grad_weights
            .chunks_mut(n)
            .zip(grad_bias.iter_mut())
            .enumerate()
        {
            *gb += grad_output[r];
            axpy(gw, grad_output[r], input);
        }
    }
    if !want_input_grad {
        return None;
    }
    let mut grad_input = vec![S::zero(); n];
    for r in 0..m {
        axpy(&mut grad_input, grad_output[r], &weights[r * n..(r + 1) * n]);
    }
    Some(grad_input)
}

/// Numerically stable softmax.
pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits.iter().cloned().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum = exps.iter().fold(S::zero(), |a, &b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax + negative log-likelihood, fused for stability: the loss is
/// computed from the log-sum-exp directly so probabilities that underflow to
/// zero cannot produce an infinite loss.
pub fn softmax_cross_entropy<S: Scalar>(logits: &[S], label: usize) -> (S, Vec<S>) {
    debug_assert!(label < logits.len());
    let max = logits.iter().cloned().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum = exps.iter().fold(S::zero(), |a, &b| a + b);
    let loss = sum.ln() - (logits[label] - max);
    let probs = exps.into_iter().map(|e| e / sum).collect();
    (loss, probs)
}

/// Gradient of softmax cross-entropy with respect to the logits:
/// `probs - onehot(label)`.
pub fn softmax_cross_entropy_backward<S: Scalar>(probs: &[S], label: usize) -> Vec<S> {
    let mut grad: Vec<S> = probs.to_vec();
    grad[label] = grad[label] - S::one();
    grad
}
