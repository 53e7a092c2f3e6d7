//! Network construction (VGG-16 and the small 4-conv CNN), trainability
//! flags, head re-initialization, parameter counting, and checkpoints.

mod checkpoint;

pub use checkpoint::{
    load_checkpoint_into, read_checkpoint, save_checkpoint, CheckpointRecord, TensorRole,
};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::seq::{ParamView, Plan, PlanOp};
use crate::tensor::{seq, Tensor};

/// Default standard deviation for re-initialized classifier heads
/// (variance 1e-4).
pub const HEAD_INIT_STDDEV: f32 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// 3x3 / stride 1 / pad 1 convolution.
    Conv { in_ch: usize, out_ch: usize },
    Relu,
    /// 2x2 / stride 2 max pool.
    MaxPool,
    /// Fully connected; flattens spatial input implicitly.
    Linear { in_dim: usize, out_dim: usize },
    Softmax,
}

impl LayerKind {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerKind::Conv { .. } | LayerKind::Linear { .. })
    }
}

#[derive(Debug, Clone)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

/// Output extent of a layer: spatial feature maps or a flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActShape {
    Spatial { ch: usize, h: usize, w: usize },
    Flat { len: usize },
}

impl ActShape {
    pub fn len(&self) -> usize {
        match *self {
            ActShape::Spatial { ch, h, w } => ch * h * w,
            ActShape::Flat { len } => len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            ActShape::Spatial { ch, h, w } => vec![ch, h, w],
            ActShape::Flat { len } => vec![len],
        }
    }
}

/// Weights/bias pair owned by one parameterized layer.
#[derive(Debug, Clone)]
pub struct NamedParam {
    pub name: String,
    pub weights: Tensor,
    pub bias: Tensor,
    pub trainable: bool,
}

/// An ordered layer stack with its parameter store.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<LayerSpec>,
    shapes: Vec<ActShape>,
    params: Vec<NamedParam>,
    input_shape: (usize, usize, usize),
}

/// Which parameters to count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMode {
    All,
    TrainableOnly,
}

/// Topology selector used by checkpoint loading and the CLI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    Vgg16 { num_classes: usize },
    Mini(MiniCnnConfig),
}

impl ModelSpec {
    pub fn build(&self) -> Result<Network> {
        match self {
            ModelSpec::Vgg16 { num_classes } => build_vgg16(*num_classes),
            ModelSpec::Mini(cfg) => build_minicnn(cfg),
        }
    }

    pub fn input_side(&self) -> usize {
        match self {
            ModelSpec::Vgg16 { .. } => VGG_INPUT_SIDE,
            ModelSpec::Mini(cfg) => cfg.input_side,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            ModelSpec::Vgg16 { num_classes } => *num_classes,
            ModelSpec::Mini(cfg) => cfg.num_classes,
        }
    }
}

pub const VGG_INPUT_SIDE: usize = 224;

/// Configuration of the small CNN: one conv/ReLU/pool block per channel
/// entry, then a single fully-connected classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniCnnConfig {
    pub channels: Vec<usize>,
    /// Width knob kept for feature-probing configurations; the classifier
    /// itself maps the flattened maps straight to `num_classes`.
    pub fc_width: usize,
    pub num_classes: usize,
    pub input_side: usize,
}

impl Default for MiniCnnConfig {
    fn default() -> Self {
        MiniCnnConfig {
            channels: vec![8, 16, 32, 64],
            fc_width: 64,
            num_classes: 2,
            input_side: 64,
        }
    }
}

struct NetworkBuilder {
    layers: Vec<LayerSpec>,
    shapes: Vec<ActShape>,
    params: Vec<NamedParam>,
    current: ActShape,
    input_shape: (usize, usize, usize),
}

impl NetworkBuilder {
    fn new(in_ch: usize, side: usize) -> Self {
        NetworkBuilder {
            layers: Vec::new(),
            shapes: Vec::new(),
            params: Vec::new(),
            current: ActShape::Spatial {
                ch: in_ch,
                h: side,
                w: side,
            },
            input_shape: (in_ch, side, side),
        }
    }

    fn conv(&mut self, name: &str, out_ch: usize) -> &mut Self {
        let ActShape::Spatial { ch, h, w } = self.current else {
            panic!("conv after flatten in builder");
        };
        self.layers.push(LayerSpec {
            name: name.to_string(),
            kind: LayerKind::Conv { in_ch: ch, out_ch },
        });
        self.params.push(NamedParam {
            name: name.to_string(),
            weights: Tensor::zeros(vec![out_ch, ch, 3, 3]),
            bias: Tensor::zeros(vec![out_ch]),
            trainable: true,
        });
        self.current = ActShape::Spatial { ch: out_ch, h, w };
        self.shapes.push(self.current);
        self
    }

    fn relu(&mut self, name: &str) -> &mut Self {
        self.layers.push(LayerSpec {
            name: name.to_string(),
            kind: LayerKind::Relu,
        });
        self.shapes.push(self.current);
        self
    }

    fn pool(&mut self, name: &str) -> Result<&mut Self> {
        let ActShape::Spatial { ch, h, w } = self.current else {
            panic!("pool after flatten in builder");
        };
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "pool {name} would see odd spatial dims {h}x{w}"
            )));
        }
        self.layers.push(LayerSpec {
            name: name.to_string(),
            kind: LayerKind::MaxPool,
        });
        self.current = ActShape::Spatial {
            ch,
            h: h / 2,
            w: w / 2,
        };
        self.shapes.push(self.current);
        Ok(self)
    }

    fn linear(&mut self, name: &str, out_dim: usize) -> &mut Self {
        let in_dim = self.current.len();
        self.layers.push(LayerSpec {
            name: name.to_string(),
            kind: LayerKind::Linear { in_dim, out_dim },
        });
        self.params.push(NamedParam {
            name: name.to_string(),
            weights: Tensor::zeros(vec![out_dim, in_dim]),
            bias: Tensor::zeros(vec![out_dim]),
            trainable: true,
        });
        self.current = ActShape::Flat { len: out_dim };
        self.shapes.push(self.current);
        self
    }

    fn softmax(&mut self, name: &str) -> &mut Self {
        self.layers.push(LayerSpec {
            name: name.to_string(),
            kind: LayerKind::Softmax,
        });
        self.shapes.push(self.current);
        self
    }

    fn finish(self) -> Network {
        Network {
            layers: self.layers,
            shapes: self.shapes,
            params: self.params,
            input_shape: self.input_shape,
        }
    }
}

/// Builds the 16-layer VGG topology: five conv blocks of (64,64), (128,128),
/// (256,256,256), (512,512,512), (512,512,512) 3x3 convolutions with ReLU and
/// a 2x2 pool after each block, then fc6/fc7 at 4096 and an fc8 classifier.
/// Parameters start at zero; call [`init_he`] or load a checkpoint.
pub fn build_vgg16(num_classes: usize) -> Result<Network> {
    if num_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "vgg16 needs at least 2 classes, got {num_classes}"
        )));
    }
    let blocks: [&[usize]; 5] = [
        &[64, 64],
        &[128, 128],
        &[256, 256, 256],
        &[512, 512, 512],
        &[512, 512, 512],
    ];
    let mut b = NetworkBuilder::new(3, VGG_INPUT_SIDE);
    for (bi, widths) in blocks.iter().enumerate() {
        for (ci, &out_ch) in widths.iter().enumerate() {
            let suffix = format!("{}_{}", bi + 1, ci + 1);
            b.conv(&format!("conv{suffix}"), out_ch)
                .relu(&format!("relu{suffix}"));
        }
        b.pool(&format!("pool{}", bi + 1))?;
    }
    b.linear("fc6", 4096).relu("relu6");
    b.linear("fc7", 4096).relu("relu7");
    b.linear("fc8", num_classes).softmax("softmax");
    Ok(b.finish())
}

/// Builds the small CNN: one conv/ReLU/pool block per `channels` entry and a
/// single fully-connected classifier over the flattened maps.
pub fn build_minicnn(cfg: &MiniCnnConfig) -> Result<Network> {
    if cfg.channels.is_empty() {
        return Err(Error::InvalidArgument("channels must be non-empty".into()));
    }
    if cfg.num_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "mini cnn needs at least 2 classes, got {}",
            cfg.num_classes
        )));
    }
    let down = 1usize << cfg.channels.len();
    if cfg.input_side == 0 || cfg.input_side % down != 0 {
        return Err(Error::InvalidArgument(format!(
            "input side {} not divisible by 2^{} = {down}",
            cfg.input_side,
            cfg.channels.len()
        )));
    }
    let mut b = NetworkBuilder::new(3, cfg.input_side);
    for (i, &out_ch) in cfg.channels.iter().enumerate() {
        b.conv(&format!("conv{}", i + 1), out_ch)
            .relu(&format!("relu{}", i + 1));
        b.pool(&format!("pool{}", i + 1))?;
    }
    b.linear("fc", cfg.num_classes).softmax("softmax");
    Ok(b.finish())
}

impl Network {
    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[NamedParam] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [NamedParam] {
        &mut self.params
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().map_or(0, ActShape::len)
    }

    /// Output extent of each layer, in layer order.
    pub fn shape_trace(&self) -> Vec<(&str, ActShape)> {
        self.layers
            .iter()
            .zip(&self.shapes)
            .map(|(l, s)| (l.name.as_str(), *s))
            .collect()
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Total stored parameter values (weights + biases).
    pub fn count_parameters(&self, mode: CountMode) -> u64 {
        self.params
            .iter()
            .filter(|p| mode == CountMode::All || p.trainable)
            .map(|p| (p.weights.len() + p.bias.len()) as u64)
            .sum()
    }

    /// Flips the trainable flag on every parameterized layer matching the
    /// glob `pattern`; returns the number of parameter tensors affected.
    pub fn set_trainable(&mut self, pattern: &str, flag: bool) -> Result<usize> {
        let mut tensors = 0;
        for p in &mut self.params {
            if glob_match(pattern, &p.name) {
                p.trainable = flag;
                tensors += 2;
            }
        }
        if tensors == 0 {
            return Err(Error::PatternUnmatched(pattern.to_string()));
        }
        Ok(tensors)
    }

    /// Re-initializes a linear layer's weights from N(0, stddev^2) and zeroes
    /// its bias.
    pub fn reinit_head(&mut self, layer: &str, stddev: f32, rng: &mut impl Rng) -> Result<()> {
        let idx = self
            .layer_index(layer)
            .ok_or_else(|| Error::UnknownLayer(layer.to_string()))?;
        if !matches!(self.layers[idx].kind, LayerKind::Linear { .. }) {
            return Err(Error::InvalidArgument(format!(
                "reinit_head target {layer} is not a linear layer"
            )));
        }
        let normal = Normal::new(0.0f32, stddev)
            .map_err(|e| Error::InvalidArgument(format!("bad head stddev {stddev}: {e}")))?;
        let param = self
            .params
            .iter_mut()
            .find(|p| p.name == layer)
            .expect("linear layer owns parameters");
        for v in param.weights.data_mut() {
            *v = normal.sample(rng);
        }
        for v in param.bias.data_mut() {
            *v = 0.0;
        }
        Ok(())
    }

    /// He-style initialization for every trainable conv/linear layer:
    /// weights from N(0, 2/fan_in), biases zero.
    pub fn init_he(&mut self, rng: &mut impl Rng) {
        for (layer, shape) in self.layers.iter().zip(self.shapes.iter()) {
            let _ = shape;
            let fan_in = match layer.kind {
                LayerKind::Conv { in_ch, .. } => in_ch * 9,
                LayerKind::Linear { in_dim, .. } => in_dim,
                _ => continue,
            };
            let stddev = (2.0 / fan_in as f32).sqrt();
            let normal = Normal::new(0.0f32, stddev).expect("finite stddev");
            let param = self
                .params
                .iter_mut()
                .find(|p| p.name == layer.name)
                .expect("parameterized layer");
            for v in param.weights.data_mut() {
                *v = normal.sample(rng);
            }
            for v in param.bias.data_mut() {
                *v = 0.0;
            }
        }
    }

    /// Lowers the layer stack to an executable plan. Parameter slot order
    /// equals the order of [`Network::params`].
    pub fn plan(&self) -> Plan {
        let mut ops = Vec::with_capacity(self.layers.len());
        let mut current = ActShape::Spatial {
            ch: self.input_shape.0,
            h: self.input_shape.1,
            w: self.input_shape.2,
        };
        for (layer, out_shape) in self.layers.iter().zip(&self.shapes) {
            let op = match layer.kind {
                LayerKind::Conv { in_ch, out_ch } => {
                    let ActShape::Spatial { h, w, .. } = current else {
                        unreachable!("conv input is spatial by construction")
                    };
                    PlanOp::Conv {
                        in_ch,
                        out_ch,
                        h,
                        w,
                    }
                }
                LayerKind::Relu => PlanOp::Relu {
                    len: current.len(),
                },
                LayerKind::MaxPool => {
                    let ActShape::Spatial { ch, h, w } = current else {
                        unreachable!("pool input is spatial by construction")
                    };
                    PlanOp::MaxPool { ch, h, w }
                }
                LayerKind::Linear { in_dim, out_dim } => PlanOp::Linear { in_dim, out_dim },
                LayerKind::Softmax => PlanOp::Softmax {
                    classes: current.len(),
                },
            };
            ops.push(op);
            current = *out_shape;
        }
        Plan::new(ops).expect("builder-validated layers always compose")
    }

    /// Parameter views in slot order, for the seq engine.
    pub fn param_views(&self) -> Vec<ParamView<'_, f32>> {
        self.params
            .iter()
            .map(|p| ParamView {
                weights: p.weights.data(),
                bias: p.bias.data(),
            })
            .collect()
    }

    /// Index of the first op that feeds any trainable parameter, or the op
    /// count when nothing is trainable. Backward passes never need to walk
    /// below this point.
    pub fn first_trainable_op(&self) -> usize {
        let mut slot = 0;
        for (idx, layer) in self.layers.iter().enumerate() {
            if layer.kind.has_params() {
                if self.params[slot].trainable {
                    return idx;
                }
                slot += 1;
            }
        }
        self.layers.len()
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let expect = self.input_shape.0 * self.input_shape.1 * self.input_shape.2;
        if input.len() != expect {
            return Err(Error::shape(
                "network input",
                format!(
                    "[{}, {}, {}]",
                    self.input_shape.0, self.input_shape.1, self.input_shape.2
                ),
                format!("{:?}", input.shape()),
            ));
        }
        Ok(())
    }

    /// Full inference pass; returns softmax probabilities.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let plan = self.plan();
        let out = seq::forward(&plan, &self.param_views(), input.data())?;
        Tensor::new(vec![out.len()], out)
    }

    /// Runs the forward pass capturing the activation after each named layer.
    /// Conv/linear layers immediately followed by a ReLU report the post-ReLU
    /// activation. Execution stops after the deepest requested layer.
    pub fn forward_collect(&self, input: &Tensor, targets: &[&str]) -> Result<Vec<Tensor>> {
        self.check_input(input)?;
        // Map each target to the op index whose output we return.
        let mut capture: Vec<usize> = Vec::with_capacity(targets.len());
        for t in targets {
            let idx = self
                .layer_index(t)
                .ok_or_else(|| Error::UnknownLayer(t.to_string()))?;
            let fused_relu = self.layers[idx].kind.has_params()
                && self
                    .layers
                    .get(idx + 1)
                    .is_some_and(|l| l.kind == LayerKind::Relu);
            capture.push(if fused_relu { idx + 1 } else { idx });
        }
        let deepest = *capture.iter().max().expect("targets verified non-empty");

        let plan = self.plan();
        let views = self.param_views();
        let mut current = input.data().to_vec();
        let mut results: Vec<Option<Tensor>> = vec![None; targets.len()];
        for (idx, (op, slot)) in plan.ops.iter().zip(&plan.param_slots).enumerate() {
            current = seq::apply_op(op, slot.map(|s| &views[s]), &current);
            for (t, &cap) in capture.iter().enumerate() {
                if cap == idx {
                    let dims = self.shapes[idx].dims();
                    results[t] = Some(Tensor::new(dims, current.clone())?);
                }
            }
            if idx == deepest {
                break;
            }
        }
        Ok(results.into_iter().map(|r| r.expect("captured")).collect())
    }

    /// Activation after the named layer (post-ReLU for conv/linear layers).
    pub fn extract_features(&self, input: &Tensor, layer: &str) -> Result<Tensor> {
        Ok(self.forward_collect(input, &[layer])?.pop().expect("one target"))
    }
}

/// Anchored glob match supporting `*` wildcards.
pub fn glob_match(pattern: &str, name: &str) -> bool {
    if !pattern.contains('*') {
        return pattern == name;
    }
    let mut parts = pattern.split('*');
    let first = parts.next().unwrap_or("");
    let Some(mut rest) = name.strip_prefix(first) else {
        return false;
    };
    let mut segments: Vec<&str> = parts.collect();
    let last = segments.pop().unwrap_or("");
    for seg in segments {
        if seg.is_empty() {
            continue;
        }
        match rest.find(seg) {
            Some(i) => rest = &rest[i + seg.len()..],
            None => return false,
        }
    }
    rest.ends_with(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn vgg16_parameter_count_thousand_classes() {
        let net = build_vgg16(1000).unwrap();
        assert_eq!(net.count_parameters(CountMode::All), 138_357_544);
    }

    #[test]
    fn vgg16_trainable_count_after_conv_freeze() {
        let mut net = build_vgg16(2).unwrap();
        let frozen = net.set_trainable("conv*", false).unwrap();
        assert_eq!(frozen, 26);
        assert_eq!(net.count_parameters(CountMode::TrainableOnly), 119_554_050);
        assert_eq!(net.count_parameters(CountMode::All), 134_268_738);
    }

    #[test]
    fn vgg16_closed_form_count() {
        for k in [2usize, 10, 1000] {
            let net = build_vgg16(k).unwrap();
            assert_eq!(
                net.count_parameters(CountMode::All),
                134_260_544 + 4097 * k as u64
            );
        }
    }

    #[test]
    fn vgg16_shape_trace_matches_feature_map_sizes() {
        let net = build_vgg16(2).unwrap();
        let trace: std::collections::HashMap<&str, ActShape> =
            net.shape_trace().into_iter().collect();
        let spatial = |ch, s| ActShape::Spatial { ch, h: s, w: s };
        assert_eq!(trace["conv1_2"], spatial(64, 224));
        assert_eq!(trace["conv2_2"], spatial(128, 112));
        assert_eq!(trace["conv3_3"], spatial(256, 56));
        assert_eq!(trace["conv4_3"], spatial(512, 28));
        assert_eq!(trace["conv5_3"], spatial(512, 14));
        assert_eq!(trace["pool5"], spatial(512, 7));
        assert_eq!(trace["fc6"], ActShape::Flat { len: 4096 });
        assert_eq!(trace["fc8"], ActShape::Flat { len: 2 });
    }

    #[test]
    fn minicnn_default_shapes_and_count() {
        let net = build_minicnn(&MiniCnnConfig::default()).unwrap();
        let trace: std::collections::HashMap<&str, ActShape> =
            net.shape_trace().into_iter().collect();
        assert_eq!(trace["conv4"], ActShape::Spatial { ch: 64, h: 8, w: 8 });
        assert_eq!(trace["pool4"], ActShape::Spatial { ch: 64, h: 4, w: 4 });
        assert_eq!(trace["fc"], ActShape::Flat { len: 2 });
        // Conv stack 24,528 plus the 1024->2 classifier.
        assert_eq!(net.count_parameters(CountMode::All), 24_528 + 2_050);
    }

    #[test]
    fn minicnn_single_block() {
        let cfg = MiniCnnConfig {
            channels: vec![4],
            fc_width: 8,
            num_classes: 2,
            input_side: 4,
        };
        let net = build_minicnn(&cfg).unwrap();
        let fc = net
            .layers()
            .iter()
            .find(|l| l.name == "fc")
            .unwrap();
        assert_eq!(
            fc.kind,
            LayerKind::Linear {
                in_dim: 4 * 2 * 2,
                out_dim: 2
            }
        );
    }

    #[test]
    fn minicnn_rejects_indivisible_side() {
        let cfg = MiniCnnConfig {
            input_side: 50,
            ..MiniCnnConfig::default()
        };
        assert!(build_minicnn(&cfg).is_err());
    }

    #[test]
    fn set_trainable_is_idempotent_and_validates() {
        let mut net = build_minicnn(&MiniCnnConfig::default()).unwrap();
        assert_eq!(net.set_trainable("fc", true).unwrap(), 2);
        assert_eq!(net.set_trainable("fc", true).unwrap(), 2);
        assert!(net.set_trainable("fc9*", false).is_err());
        assert_eq!(net.set_trainable("conv*", false).unwrap(), 8);
        assert_eq!(net.count_parameters(CountMode::TrainableOnly), 2_050);
    }

    #[test]
    fn freezing_does_not_change_forward() {
        let mut net = build_minicnn(&MiniCnnConfig {
            channels: vec![4, 8],
            input_side: 8,
            ..MiniCnnConfig::default()
        })
        .unwrap();
        net.init_he(&mut rng::stream(11, &[rng::tag::INIT]));
        let input = Tensor::from_fn(vec![3, 8, 8], |i| (i % 7) as f32 * 0.25 - 0.5);
        let before = net.forward(&input).unwrap();
        net.set_trainable("conv*", false).unwrap();
        let after = net.forward(&input).unwrap();
        assert_eq!(before.data(), after.data());
    }

    #[test]
    fn reinit_head_statistics() {
        let mut net = build_vgg16(2).unwrap();
        net.reinit_head("fc8", HEAD_INIT_STDDEV, &mut rng::stream(3, &[rng::tag::HEAD]))
            .unwrap();
        let param = &net.params()[net.param_index("fc8").unwrap()];
        let w = param.weights.data();
        let n = w.len() as f64; // 8192 weights
        let mean: f64 = w.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var: f64 = w.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let stddev = HEAD_INIT_STDDEV as f64;
        assert!(mean.abs() < 3.0 * stddev / n.sqrt(), "mean {mean}");
        assert!((var - 1e-4).abs() < 0.1 * 1e-4, "variance {var}");
        assert!(param.bias.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn reinit_head_rejects_non_linear_and_unknown() {
        let mut net = build_minicnn(&MiniCnnConfig::default()).unwrap();
        let mut r = rng::stream(0, &[rng::tag::HEAD]);
        assert!(net.reinit_head("conv1", 0.01, &mut r).is_err());
        assert!(net.reinit_head("fc9", 0.01, &mut r).is_err());
    }

    #[test]
    fn extract_at_final_layer_equals_forward() {
        let mut net = build_minicnn(&MiniCnnConfig {
            channels: vec![4],
            input_side: 4,
            ..MiniCnnConfig::default()
        })
        .unwrap();
        net.init_he(&mut rng::stream(5, &[rng::tag::INIT]));
        let input = Tensor::from_fn(vec![3, 4, 4], |i| (i as f32).sin());
        let full = net.forward(&input).unwrap();
        let extracted = net.extract_features(&input, "softmax").unwrap();
        assert_eq!(full.data(), extracted.data());
    }

    #[test]
    fn extract_is_post_relu_for_conv_layers() {
        let mut net = build_minicnn(&MiniCnnConfig {
            channels: vec![4],
            input_side: 4,
            ..MiniCnnConfig::default()
        })
        .unwrap();
        net.init_he(&mut rng::stream(6, &[rng::tag::INIT]));
        let input = Tensor::from_fn(vec![3, 4, 4], |i| (i as f32 * 0.37).cos());
        let conv = net.extract_features(&input, "conv1").unwrap();
        assert_eq!(conv.shape(), &[4, 4, 4]);
        assert!(conv.data().iter().all(|&v| v >= 0.0), "expected post-ReLU");
    }

    #[test]
    fn unknown_extract_layer_rejected() {
        let net = build_minicnn(&MiniCnnConfig::default()).unwrap();
        let input = Tensor::zeros(vec![3, 64, 64]);
        assert!(net.extract_features(&input, "conv9").is_err());
    }

    #[test]
    fn glob_patterns() {
        assert!(glob_match("conv*", "conv1_1"));
        assert!(glob_match("conv*", "conv4"));
        assert!(!glob_match("conv*", "fc6"));
        assert!(glob_match("fc8", "fc8"));
        assert!(!glob_match("fc8", "fc80"));
        assert!(glob_match("*", "anything"));
        assert!(glob_match("conv*_1", "conv3_1"));
        assert!(!glob_match("conv*_1", "conv3_2"));
    }
}
