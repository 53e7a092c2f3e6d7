//! Tape-based reverse mode over a static op sequence.
//!
//! Networks here are pure layer chains, so the "graph" is a `Plan`: a list of
//! shape-resolved ops. The forward pass records per-op context (conv patch
//! matrices, ReLU masks, pool argmaxes, linear inputs, softmax probabilities)
//! and the backward pass walks the list in reverse applying the chain rule.

use crate::error::{Error, Result};

use super::kernels;
use super::Scalar;

/// A shape-resolved op. Spatial dims are those of the op's input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanOp {
    /// 3x3 / stride 1 / pad 1 convolution.
    Conv {
        in_ch: usize,
        out_ch: usize,
        h: usize,
        w: usize,
    },
    Relu { len: usize },
    /// 2x2 / stride 2 max pool.
    MaxPool { ch: usize, h: usize, w: usize },
    /// Flattens its input implicitly.
    Linear { in_dim: usize, out_dim: usize },
    Softmax { classes: usize },
}

impl PlanOp {
    pub fn input_len(&self) -> usize {
        match *self {
            PlanOp::Conv { in_ch, h, w, .. } => in_ch * h * w,
            PlanOp::Relu { len } => len,
            PlanOp::MaxPool { ch, h, w } => ch * h * w,
            PlanOp::Linear { in_dim, .. } => in_dim,
            PlanOp::Softmax { classes } => classes,
        }
    }

    pub fn output_len(&self) -> usize {
        match *self {
            PlanOp::Conv { out_ch, h, w, .. } => out_ch * h * w,
            PlanOp::Relu { len } => len,
            PlanOp::MaxPool { ch, h, w } => ch * (h / 2) * (w / 2),
            PlanOp::Linear { out_dim, .. } => out_dim,
            PlanOp::Softmax { classes } => classes,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, PlanOp::Conv { .. } | PlanOp::Linear { .. })
    }
}

/// An executable op sequence. `param_slots[i]` is the parameter index of op
/// `i` when it owns parameters.
#[derive(Debug, Clone)]
pub struct Plan {
    pub ops: Vec<PlanOp>,
    pub param_slots: Vec<Option<usize>>,
    pub num_slots: usize,
}

impl Plan {
    /// Builds a plan from ops, assigning parameter slots in op order and
    /// checking that adjacent shapes compose.
    pub fn new(ops: Vec<PlanOp>) -> Result<Self> {
        let mut param_slots = Vec::with_capacity(ops.len());
        let mut num_slots = 0;
        for pair in ops.windows(2) {
            if pair[0].output_len() != pair[1].input_len() {
                return Err(Error::shape(
                    "plan composition",
                    format!("{:?} feeding {} values", pair[0], pair[0].output_len()),
                    format!("{:?} expecting {} values", pair[1], pair[1].input_len()),
                ));
            }
        }
        for op in &ops {
            if op.has_params() {
                param_slots.push(Some(num_slots));
                num_slots += 1;
            } else {
                param_slots.push(None);
            }
        }
        Ok(Plan {
            ops,
            param_slots,
            num_slots,
        })
    }

    pub fn input_len(&self) -> usize {
        self.ops.first().map_or(0, PlanOp::input_len)
    }

    pub fn output_len(&self) -> usize {
        self.ops.last().map_or(0, PlanOp::output_len)
    }
}

/// Borrowed view of one op's parameters.
#[derive(Debug, Clone, Copy)]
pub struct ParamView<'a, S> {
    pub weights: &'a [S],
    pub bias: &'a [S],
}

/// Owned gradient buffers for one op's parameters.
#[derive(Debug, Clone)]
pub struct GradBuf<S> {
    pub weights: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> GradBuf<S> {
    pub fn zeros_like(view: &ParamView<'_, S>) -> Self {
        GradBuf {
            weights: vec![S::zero(); view.weights.len()],
            bias: vec![S::zero(); view.bias.len()],
        }
    }

    pub fn accumulate(&mut self, other: &GradBuf<S>) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += *b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, factor: S) {
        self.weights.iter_mut().for_each(|v| *v *= factor);
        self.bias.iter_mut().for_each(|v| *v *= factor);
    }
}

/// Per-op context saved by a recording forward pass.
#[derive(Debug, Clone)]
enum TapeEntry<S> {
    Skipped,
    Conv { patches: Vec<S> },
    Relu { mask: Vec<u8> },
    Pool { argmax: Vec<u32>, input_len: usize },
    Linear { input: Vec<S> },
    Softmax { logits: Vec<S>, probs: Vec<S> },
}

/// Recorded forward pass. Consumed by [`backward`]; a backward pass without a
/// preceding forward is unrepresentable.
#[derive(Debug)]
pub struct Tape<S> {
    entries: Vec<TapeEntry<S>>,
    output: Vec<S>,
}

impl<S: Scalar> Tape<S> {
    /// Final network output (softmax probabilities for classifier plans).
    pub fn output(&self) -> &[S] {
        &self.output
    }

    /// Negative log-likelihood of `label` from the recorded logits.
    pub fn loss(&self, label: usize) -> Result<S> {
        match self.entries.last() {
            Some(TapeEntry::Softmax { logits, .. }) => {
                if label >= logits.len() {
                    return Err(Error::InvalidArgument(format!(
                        "label {label} out of range for {} classes",
                        logits.len()
                    )));
                }
                Ok(kernels::softmax_cross_entropy(logits, label).0)
            }
            _ => Err(Error::InvalidArgument(
                "plan does not end in a softmax op".into(),
            )),
        }
    }
}

fn check_params<S: Scalar>(plan: &Plan, params: &[ParamView<'_, S>]) -> Result<()> {
    if params.len() != plan.num_slots {
        return Err(Error::shape(
            "plan parameters",
            format!("{} parameter slots", plan.num_slots),
            format!("{} provided", params.len()),
        ));
    }
    for (op, slot) in plan.ops.iter().zip(&plan.param_slots) {
        let Some(slot) = slot else { continue };
        let view = &params[*slot];
        let (w_len, b_len) = match *op {
            PlanOp::Conv { in_ch, out_ch, .. } => (out_ch * in_ch * 9, out_ch),
            PlanOp::Linear { in_dim, out_dim } => (out_dim * in_dim, out_dim),
            _ => unreachable!(),
        };
        if view.weights.len() != w_len || view.bias.len() != b_len {
            return Err(Error::shape(
                "plan parameter sizes",
                format!("{w_len} weights / {b_len} bias for {op:?}"),
                format!("{} weights / {} bias", view.weights.len(), view.bias.len()),
            ));
        }
    }
    Ok(())
}

/// Applies one op without recording.
pub fn apply_op<S: Scalar>(
    op: &PlanOp,
    param: Option<&ParamView<'_, S>>,
    input: &[S],
) -> Vec<S> {
    match *op {
        PlanOp::Conv { in_ch, h, w, .. } => {
            let view = param.expect("conv op requires parameters");
            kernels::conv3x3_forward(input, in_ch, h, w, view.weights, view.bias)
        }
        PlanOp::Relu { .. } => kernels::relu_forward(input),
        PlanOp::MaxPool { ch, h, w } => kernels::maxpool2x2_forward(input, ch, h, w).0,
        PlanOp::Linear { out_dim, .. } => {
            let view = param.expect("linear op requires parameters");
            let mut out = vec![S::zero(); out_dim];
            kernels::linear_forward(input, view.weights, view.bias, &mut out);
            out
        }
        PlanOp::Softmax { .. } => kernels::softmax(input),
    }
}

/// Inference pass: runs the plan without recording a tape.
pub fn forward<S: Scalar>(plan: &Plan, params: &[ParamView<'_, S>], input: &[S]) -> Result<Vec<S>> {
    check_params(plan, params)?;
    if input.len() != plan.input_len() {
        return Err(Error::shape(
            "plan input",
            format!("{} values", plan.input_len()),
            format!("{} values", input.len()),
        ));
    }
    let mut current = input.to_vec();
    for (op, slot) in plan.ops.iter().zip(&plan.param_slots) {
        current = apply_op(op, slot.map(|s| &params[s]), &current);
    }
    Ok(current)
}

/// Training pass: records the tape needed by [`backward`].
///
/// Ops before `record_from` are executed but leave no context; use this when
/// a frozen prefix will never be differentiated through.
pub fn forward_train<S: Scalar>(
    plan: &Plan,
    params: &[ParamView<'_, S>],
    input: &[S],
    record_from: usize,
) -> Result<Tape<S>> {
    check_params(plan, params)?;
    if input.len() != plan.input_len() {
        return Err(Error::shape(
            "plan input",
            format!("{} values", plan.input_len()),
            format!("{} values", input.len()),
        ));
    }
    let mut current = input.to_vec();
    let mut entries = Vec::with_capacity(plan.ops.len());
    for (idx, (op, slot)) in plan.ops.iter().zip(&plan.param_slots).enumerate() {
        let record = idx >= record_from || matches!(op, PlanOp::Softmax { .. });
        if !record {
            current = apply_op(op, slot.map(|s| &params[s]), &current);
            entries.push(TapeEntry::Skipped);
            continue;
        }
        let (next, entry) = match *op {
            PlanOp::Conv {
                in_ch,
                out_ch,
                h,
                w,
            } => {
                let view = &params[slot.expect("conv has a slot")];
                let k = in_ch * 9;
                let mut patches = vec![S::zero(); h * w * k];
                kernels::im2col_3x3(&current, in_ch, h, w, &mut patches);
                let mut out = vec![S::zero(); out_ch * h * w];
                kernels::conv3x3_forward_patches(&patches, h * w, k, view.weights, view.bias, &mut out);
                (out, TapeEntry::Conv { patches })
            }
            PlanOp::Relu { .. } => {
                let (out, mask) = kernels::relu_forward_masked(&current);
                (out, TapeEntry::Relu { mask })
            }
            PlanOp::MaxPool { ch, h, w } => {
                let (out, argmax) = kernels::maxpool2x2_forward(&current, ch, h, w);
                (
                    out,
                    TapeEntry::Pool {
                        argmax,
                        input_len: ch * h * w,
                    },
                )
            }
            PlanOp::Linear { out_dim, .. } => {
                let view = &params[slot.expect("linear has a slot")];
                let mut out = vec![S::zero(); out_dim];
                kernels::linear_forward(&current, view.weights, view.bias, &mut out);
                let saved = std::mem::take(&mut current);
                (out, TapeEntry::Linear { input: saved })
            }
            PlanOp::Softmax { .. } => {
                let probs = kernels::softmax(&current);
                let logits = std::mem::take(&mut current);
                (
                    probs.clone(),
                    TapeEntry::Softmax { logits, probs },
                )
            }
        };
        kernels::debug_assert_finite(&next, "forward_train op");
        entries.push(entry);
        current = next;
    }
    Ok(Tape {
        entries,
        output: current,
    })
}

/// Reverse-mode pass. Seeds from the softmax cross-entropy gradient of
/// `label`, accumulates parameter gradients into `grads` (indexed by slot),
/// and stops at op `start_op` (0 for a full pass). Returns the input gradient
/// when `want_input_grad` is set and `start_op` is 0.
pub fn backward<S: Scalar>(
    plan: &Plan,
    params: &[ParamView<'_, S>],
    tape: &Tape<S>,
    label: usize,
    grads: &mut [GradBuf<S>],
    start_op: usize,
    want_input_grad: bool,
) -> Result<Option<Vec<S>>> {
    check_params(plan, params)?;
    if grads.len() != plan.num_slots {
        return Err(Error::shape(
            "gradient buffers",
            format!("{} slots", plan.num_slots),
            format!("{} provided", grads.len()),
        ));
    }
    let n = plan.ops.len();
    let Some(TapeEntry::Softmax { probs, .. }) = tape.entries.last() else {
        return Err(Error::InvalidArgument(
            "backward requires a softmax-terminated tape".into(),
        ));
    };
    if label >= probs.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            probs.len()
        )));
    }
    let mut grad = kernels::softmax_cross_entropy_backward(probs, label);

    for idx in (start_op..n.saturating_sub(1)).rev() {
        let op = &plan.ops[idx];
        let entry = &tape.entries[idx];
        let need_input = want_input_grad || idx > start_op;
        grad = match (op, entry) {
            (
                PlanOp::Conv { in_ch, h, w, .. },
                TapeEntry::Conv { patches },
            ) => {
                let slot = plan.param_slots[idx].expect("conv has a slot");
                let view = &params[slot];
                let gbuf = &mut grads[slot];
                let gin = kernels::conv3x3_backward(
                    &grad,
                    patches,
                    *in_ch,
                    *h,
                    *w,
                    view.weights,
                    &mut gbuf.weights,
                    &mut gbuf.bias,
                    need_input,
                );
                match gin {
                    Some(g) => g,
                    None => break,
                }
            }
            (PlanOp::Relu { .. }, TapeEntry::Relu { mask }) => {
                kernels::relu_backward(&grad, mask)
            }
            (PlanOp::MaxPool { .. }, TapeEntry::Pool { argmax, input_len }) => {
                kernels::maxpool2x2_backward(&grad, argmax, *input_len)
            }
            (PlanOp::Linear { .. }, TapeEntry::Linear { input }) => {
                let slot = plan.param_slots[idx].expect("linear has a slot");
                let view = &params[slot];
                let gbuf = &mut grads[slot];
                let gin = kernels::linear_backward(
                    &grad,
                    input,
                    view.weights,
                    &mut gbuf.weights,
                    &mut gbuf.bias,
                    need_input,
                );
                match gin {
                    Some(g) => g,
                    None => break,
                }
            }
            (op, TapeEntry::Skipped) => {
                return Err(Error::InvalidArgument(format!(
                    "backward reached unrecorded op {op:?}; forward_train was truncated higher up"
                )))
            }
            (op, _) => {
                return Err(Error::InvalidArgument(format!(
                    "tape entry does not match op {op:?}"
                )))
            }
        };
    }

    Ok(if want_input_grad && start_op == 0 {
        Some(grad)
    } else {
        None
    })
}
