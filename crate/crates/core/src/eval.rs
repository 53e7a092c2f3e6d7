//! Cross-validation, accuracy reporting, distortion sweeps, and feature/
//! feature-map export.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{self, PipelineOptions};
use crate::distort::DistortionSpec;
use crate::error::{Error, Result};
use crate::imageproc::{self, Image};
use crate::net::{load_checkpoint_into, ModelSpec, Network};
use crate::rng::{self, tag};
use crate::tensor::Tensor;
use crate::trainer::{self, TrainSettings};

/// Index of the largest value; exact ties resolve to the lower class index.
pub fn argmax_tie_low(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of predictions matching their labels.
pub fn accuracy(predictions: &[usize], labels: &[u8]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "accuracy needs equal non-empty slices, got {} predictions / {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| **p == **l as usize)
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Classifies one already-normalized input tensor.
pub fn predict(net: &Network, input: &Tensor) -> Result<usize> {
    let probs = net.forward(input)?;
    Ok(argmax_tie_low(probs.data()))
}

/// Center-crop accuracy of `net` over the given sample indices.
pub fn evaluate_subset(
    net: &Network,
    images: &[Image],
    labels: &[u8],
    indices: &[usize],
    pipeline: &PipelineOptions,
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    let plan = net.plan();
    let views = net.param_views();
    let correct: Result<Vec<u32>> = indices
        .par_iter()
        .map(|&i| {
            let input = data::eval_input(&images[i], pipeline)?;
            let probs = crate::tensor::seq::forward(&plan, &views, input.data())?;
            Ok((argmax_tie_low(&probs) == labels[i] as usize) as u32)
        })
        .collect();
    let correct: u32 = correct?.iter().sum();
    Ok(correct as f64 / indices.len() as f64)
}

/// Per-fold accuracies with their mean and sample standard deviation
/// (k-1 denominator, the convention behind "mean +- std" tables).
#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub folds: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub seed: u64,
    pub config_digest: String,
}

impl CvReport {
    pub fn from_folds(folds: Vec<f64>, seed: u64, config_digest: String) -> Self {
        let mean = folds.iter().sum::<f64>() / folds.len() as f64;
        let std = if folds.len() > 1 {
            (folds.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (folds.len() - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        CvReport {
            folds,
            mean,
            std,
            seed,
            config_digest,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// How each fold's model comes to life.
#[derive(Debug, Clone)]
pub enum ModelInit {
    /// He-initialized from scratch.
    Scratch,
    /// Load a checkpoint, optionally freeze a pattern of layers and re-draw
    /// the head from N(0, stddev^2).
    FromCheckpoint {
        path: PathBuf,
        freeze: Option<String>,
        reinit_head: Option<String>,
        head_stddev: f32,
    },
}

#[derive(Debug, Clone)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    pub config_digest: String,
    pub model: ModelSpec,
    pub init: ModelInit,
    pub train: TrainSettings,
    /// Fixed channel means; when absent each fold uses its training split's.
    pub means: Option<[f32; 3]>,
}

/// Builds and initializes one model instance per `init`.
pub fn init_model(
    model: &ModelSpec,
    init: &ModelInit,
    seed: u64,
    fold: u64,
) -> Result<Network> {
    let mut net = model.build()?;
    match init {
        ModelInit::Scratch => {
            net.init_he(&mut rng::stream(seed, &[tag::INIT, fold]));
        }
        ModelInit::FromCheckpoint {
            path,
            freeze,
            reinit_head,
            head_stddev,
        } => {
            load_checkpoint_into(&mut net, path)?;
            if let Some(pattern) = freeze {
                net.set_trainable(pattern, false)?;
            }
            if let Some(layer) = reinit_head {
                net.reinit_head(layer, *head_stddev, &mut rng::stream(seed, &[tag::HEAD, fold]))?;
            }
        }
    }
    Ok(net)
}

/// K-fold cross-validation: for each fold, build/initialize a model per the
/// options, train it on the other folds, and test on the held-out one.
pub fn run_cv(images: &[Image], labels: &[u8], opts: &CvOptions) -> Result<CvReport> {
    let partition = data::stratified_folds(labels, opts.k, opts.seed)?;
    let mut fold_accuracies = Vec::with_capacity(opts.k);
    for fold in 0..opts.k {
        let train_idx = partition.train_indices(fold);
        let test_idx = partition.fold(fold);

        let mut net = init_model(&opts.model, &opts.init, opts.seed, fold as u64)?;
        let means = opts
            .means
            .unwrap_or_else(|| data::channel_means(images, &train_idx));
        let settings = TrainSettings {
            seed: rng::mix(opts.seed, &[fold as u64]),
            pipeline: PipelineOptions {
                means,
                ..opts.train.pipeline
            },
            ..opts.train
        };
        trainer::train(&mut net, images, labels, &train_idx, &settings, Some(fold))?;

        let eval_pipeline = PipelineOptions {
            means,
            flip: false,
            ..opts.train.pipeline
        };
        fold_accuracies.push(evaluate_subset(&net, images, labels, test_idx, &eval_pipeline)?);
    }
    Ok(CvReport::from_folds(
        fold_accuracies,
        opts.seed,
        opts.config_digest.clone(),
    ))
}

/// One line of a distortion sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub kind: String,
    pub sigma: f64,
    pub accuracy: f64,
    pub n: usize,
}

/// Evaluates `net` on distorted copies of the evaluation images, one row per
/// sigma, with the clean (sigma = 0) baseline first. Distortion happens at
/// the images' native (aligned) size, before the center crop.
pub fn distortion_sweep(
    net: &Network,
    images: &[Image],
    labels: &[u8],
    indices: &[usize],
    spec: &DistortionSpec,
    pipeline: &PipelineOptions,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("empty sweep evaluation set".into()));
    }
    let plan = net.plan();
    let views = net.param_views();
    let mut rows = Vec::with_capacity(spec.sigmas.len() + 1);

    let clean = evaluate_subset(net, images, labels, indices, pipeline)?;
    rows.push(SweepRow {
        kind: spec.kind.as_str().to_string(),
        sigma: 0.0,
        accuracy: clean,
        n: indices.len(),
    });

    for (si, &sigma) in spec.sigmas.iter().enumerate() {
        let correct: Result<Vec<u32>> = indices
            .par_iter()
            .map(|&i| {
                let mut stream = rng::stream(seed, &[tag::NOISE, si as u64, i as u64]);
                let distorted = spec.apply(&images[i], sigma, &mut stream);
                let input = data::eval_input(&distorted, pipeline)?;
                let probs = crate::tensor::seq::forward(&plan, &views, input.data())?;
                Ok((argmax_tie_low(&probs) == labels[i] as usize) as u32)
            })
            .collect();
        let correct: u32 = correct?.iter().sum();
        rows.push(SweepRow {
            kind: spec.kind.as_str().to_string(),
            sigma,
            accuracy: correct as f64 / indices.len() as f64,
            n: indices.len(),
        });
    }
    Ok(rows)
}

/// Renders sweep rows as CSV with provenance header comments.
pub fn sweep_to_csv(
    rows: &[SweepRow],
    distorted_at: usize,
    crop_side: usize,
    config_digest: &str,
    seed: u64,
) -> String {
    let mut out = format!("# distorted-at={distorted_at},crop=center{crop_side}\n");
    out.push_str(&format!("# config={config_digest} seed={seed}\n"));
    out.push_str("kind,sigma,accuracy,n\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.kind, row.sigma, row.accuracy, row.n
        ));
    }
    out
}

/// Writes each requested layer's activations under `out_dir`: spatial layers
/// as one min-max normalized PGM per channel (`{layer}_{map}.pgm`), flat
/// layers as one value-per-line text file, plus an `index.txt` of shapes.
/// Returns every written path, index last.
pub fn export_feature_maps(
    net: &Network,
    input: &Tensor,
    layers: &[&str],
    out_dir: &Path,
    comments: &[String],
) -> Result<Vec<PathBuf>> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("no layers requested".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let feats = net.forward_collect(input, layers)?;
    let mut written = Vec::new();
    let mut index = String::new();
    for (layer, tensor) in layers.iter().zip(&feats) {
        match *tensor.shape() {
            [ch, h, w] => {
                for c in 0..ch {
                    let plane = &tensor.data()[c * h * w..(c + 1) * h * w];
                    let img = normalize_map(plane, w, h);
                    let path = out_dir.join(format!("{layer}_{c}.pgm"));
                    imageproc::write_pgm(&img, &path, comments)?;
                    written.push(path);
                }
                index.push_str(&format!("{layer} {ch}x{h}x{w} {ch} maps\n"));
            }
            [len] => {
                let path = out_dir.join(format!("{layer}.txt"));
                let mut text = String::with_capacity(len * 12);
                for v in tensor.data() {
                    text.push_str(&format!("{v}\n"));
                }
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
                written.push(path);
                index.push_str(&format!("{layer} {len} 1 file\n"));
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "layer {layer} has unsupported rank {:?}",
                    tensor.shape()
                )))
            }
        }
    }
    let index_path = out_dir.join("index.txt");
    std::fs::write(&index_path, index).map_err(|e| Error::io(&index_path, e))?;
    written.push(index_path);
    Ok(written)
}

/// Min-max normalizes one activation map to 0..255; a constant map renders
/// as mid-gray.
fn normalize_map(plane: &[f32], w: usize, h: usize) -> Image {
    let min = plane.iter().cloned().fold(f32::INFINITY, f32::min);
    let max = plane.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let data: Vec<u8> = if max > min {
        plane
            .iter()
            .map(|&v| ((v - min) / (max - min) * 255.0).round() as u8)
            .collect()
    } else {
        vec![128; plane.len()]
    };
    Image::new(w, h, 1, data).expect("sized plane")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_minicnn, MiniCnnConfig};

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0, 1, 1], &[1, 1, 1, 0]).unwrap(), 0.5);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn ties_break_to_lower_class() {
        assert_eq!(argmax_tie_low(&[0.5, 0.5]), 0);
        assert_eq!(argmax_tie_low(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax_tie_low(&[0.1, 0.9]), 1);
    }

    #[test]
    fn report_statistics_recomputable() {
        let report = CvReport::from_folds(vec![0.95, 0.955, 0.957, 0.953], 7, "digest".into());
        let mean = report.folds.iter().sum::<f64>() / 4.0;
        assert!((report.mean - mean).abs() < 1e-12);
        let var =
            report.folds.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 3.0;
        assert!((report.std - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn report_json_shape_is_stable() {
        let report = CvReport::from_folds(vec![0.5, 0.75], 3, "abc".into());
        let json = report.to_json();
        assert!(json.contains("\"folds\""));
        assert!(json.contains("\"config_digest\": \"abc\""));
        assert_eq!(report.to_json(), json, "serialization must be stable");
    }

    #[test]
    fn sweep_csv_format() {
        let rows = vec![
            SweepRow {
                kind: "noise".into(),
                sigma: 0.0,
                accuracy: 0.97,
                n: 500,
            },
            SweepRow {
                kind: "noise".into(),
                sigma: 1.0,
                accuracy: 0.96,
                n: 500,
            },
        ];
        let csv = sweep_to_csv(&rows, 256, 224, "deadbeef", 9);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# distorted-at=256,crop=center224");
        assert_eq!(lines[1], "# config=deadbeef seed=9");
        assert_eq!(lines[2], "kind,sigma,accuracy,n");
        assert_eq!(lines[3], "noise,0,0.97,500");
        assert_eq!(lines[4], "noise,1,0.96,500");
    }

    #[test]
    fn feature_export_writes_maps_and_text() {
        let dir = std::env::temp_dir().join("smelter-eval-tests/features");
        let _ = std::fs::remove_dir_all(&dir);
        let mut net = build_minicnn(&MiniCnnConfig {
            channels: vec![4],
            input_side: 8,
            ..MiniCnnConfig::default()
        })
        .unwrap();
        net.init_he(&mut rng::stream(1, &[tag::INIT]));
        let input = Tensor::from_fn(vec![3, 8, 8], |i| ((i * 13) % 17) as f32 - 8.0);
        let files =
            export_feature_maps(&net, &input, &["conv1", "fc"], &dir, &[]).unwrap();
        // 4 conv maps + 1 text file + index.
        assert_eq!(files.len(), 6);
        assert!(dir.join("conv1_0.pgm").is_file());
        assert!(dir.join("conv1_3.pgm").is_file());
        let fc_text = std::fs::read_to_string(dir.join("fc.txt")).unwrap();
        assert_eq!(fc_text.lines().count(), 2);
        let index = std::fs::read_to_string(dir.join("index.txt")).unwrap();
        assert!(index.contains("conv1 4x8x8 4 maps"), "{index}");
    }

    #[test]
    fn constant_map_renders_mid_gray() {
        let img = normalize_map(&[3.25; 16], 4, 4);
        assert!(img.data().iter().all(|&v| v == 128));
    }
}
