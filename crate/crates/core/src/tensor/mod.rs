//! N-dimensional tensors and the forward/backward math for every layer kind
//! the network builders emit.

pub mod kernels;
mod scalar;
pub mod seq;

pub use scalar::Scalar;

use crate::error::{Error, Result};

/// Row-major n-dimensional array of 32-bit floats with an optional gradient
/// buffer of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::shape(
                "tensor construction",
                format!("{expect} values for shape {shape:?}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
            grad: None,
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> f32) -> Self {
        let len = shape.iter().product();
        Tensor {
            data: (0..len).map(&mut f).collect(),
            shape,
            grad: None,
        }
    }

    pub fn scalar_filled(shape: Vec<usize>, value: f32) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; len],
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    /// Allocates (or keeps) a zeroed gradient buffer.
    pub fn ensure_grad(&mut self) -> &mut [f32] {
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.data.len()]);
        }
        self.grad.as_deref_mut().unwrap()
    }

    pub fn set_grad(&mut self, grad: Vec<f32>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::shape(
                "gradient buffer",
                format!("{} values", self.data.len()),
                format!("{} values", grad.len()),
            ));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Reinterprets as `[C, H, W]`; errors on any other rank.
    pub fn as_chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            [c, h, w] => Ok((*c, *h, *w)),
            other => Err(Error::shape(
                "tensor rank",
                "[C, H, W]".to_string(),
                format!("{other:?}"),
            )),
        }
    }
}

/// Parameters of a 3x3 / stride 1 / pad 1 convolution.
#[derive(Debug, Clone)]
pub struct ConvParams {
    /// `[out_ch, in_ch, 3, 3]`.
    pub weights: Tensor,
    /// `[out_ch]`.
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl ConvParams {
    /// Builds conv parameters, enforcing the fixed 3x3 / stride 1 / pad 1
    /// geometry used by every convolution in this crate.
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        match weights.shape() {
            [out_ch, _, 3, 3] if bias.shape() == [*out_ch] => Ok(ConvParams {
                weights,
                bias,
                stride: 1,
                padding: 1,
            }),
            _ => Err(Error::shape(
                "conv params",
                "[out_ch, in_ch, 3, 3] weights with [out_ch] bias",
                format!("{:?} weights with {:?} bias", weights.shape(), bias.shape()),
            )),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }
}

/// 3x3 / pad 1 / stride 1 convolution; preserves the spatial dimensions.
pub fn conv2d_forward(input: &Tensor, params: &ConvParams) -> Result<Tensor> {
    let (c, h, w) = input.as_chw()?;
    if c != params.in_channels() {
        return Err(Error::shape(
            "conv2d input channels",
            format!("{} channels (weights {:?})", params.in_channels(), params.weights.shape()),
            format!("{} channels (input {:?})", c, input.shape()),
        ));
    }
    let out = kernels::conv3x3_forward(
        input.data(),
        c,
        h,
        w,
        params.weights.data(),
        params.bias.data(),
    );
    kernels::debug_assert_finite(&out, "conv2d_forward");
    Tensor::new(vec![params.out_channels(), h, w], out)
}

/// 2x2 / stride 2 max pooling; halves both spatial dimensions.
pub fn maxpool2x2_forward(input: &Tensor) -> Result<Tensor> {
    let (c, h, w) = input.as_chw()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "maxpool2x2 requires even spatial dims, got {h}x{w}"
        )));
    }
    let (out, _) = kernels::maxpool2x2_forward(input.data(), c, h, w);
    Tensor::new(vec![c, h / 2, w / 2], out)
}

/// Elementwise `max(0, x)`; shape preserved.
pub fn relu_forward(input: &Tensor) -> Tensor {
    let out = kernels::relu_forward(input.data());
    Tensor {
        shape: input.shape.clone(),
        data: out,
        grad: None,
    }
}

/// `weights * input + bias` with `weights` as `[M, N]` and `input` as `[N]`.
pub fn linear_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (m, n) = match weights.shape() {
        [m, n] => (*m, *n),
        other => {
            return Err(Error::shape(
                "linear weights rank",
                "[M, N]",
                format!("{other:?}"),
            ))
        }
    };
    if input.len() != n || bias.len() != m {
        return Err(Error::shape(
            "linear_forward",
            format!("input of {n} with weights [{m}, {n}]"),
            format!("input of {} with bias of {}", input.len(), bias.len()),
        ));
    }
    let mut out = vec![0.0f32; m];
    kernels::linear_forward(input.data(), weights.data(), bias.data(), &mut out);
    kernels::debug_assert_finite(&out, "linear_forward");
    Tensor::new(vec![m], out)
}

/// Softmax probabilities and negative log-likelihood of `label`.
pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<(f32, Tensor)> {
    let k = logits.len();
    if label >= k {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {k} classes"
        )));
    }
    let (loss, probs) = kernels::softmax_cross_entropy(logits.data(), label);
    Ok((loss, Tensor::new(vec![k], probs)?))
}
