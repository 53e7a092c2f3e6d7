//! The mini-batch training loop shared by from-scratch training, fine-tuning,
//! and the cross-validation runner.
//!
//! Per-sample forward/backward passes fan out across the rayon pool; the
//! per-sample gradients are then reduced in batch order, so results are
//! bit-identical at any thread count. All randomness (batch order, crops,
//! flips) derives from per-(seed, sample, epoch) streams.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::{self, PipelineOptions};
use crate::error::{Error, Result};
use crate::eval;
use crate::imageproc::Image;
use crate::net::Network;
use crate::optim::{OptimState, SgdHyper};
use crate::rng::{self, tag};
use crate::tensor::seq::{self, GradBuf};

#[derive(Debug, Clone, Copy)]
pub struct TrainSettings {
    pub hyper: SgdHyper,
    pub batch_size: usize,
    pub iterations: usize,
    /// Validation cadence in iterations (0 disables validation entirely).
    pub eval_every: usize,
    /// Fraction of the training set carved out for validation, stratified.
    pub val_fraction: f64,
    pub seed: u64,
    pub pipeline: PipelineOptions,
}

impl TrainSettings {
    pub fn with_paper_defaults(pipeline: PipelineOptions, seed: u64) -> Self {
        TrainSettings {
            hyper: SgdHyper::default(),
            batch_size: 64,
            iterations: 1000,
            eval_every: 100,
            val_fraction: 0.1,
            seed,
            pipeline,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mean_loss: f32,
    pub val_accuracy: Option<f64>,
    pub learning_rate: f32,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub records: Vec<IterationRecord>,
    pub iterations_run: usize,
    pub stopped_early: bool,
    pub final_val_accuracy: Option<f64>,
}

/// Carves a stratified validation subset out of `train_indices`.
/// Returns (train, val); val is empty when the set is too small to split.
fn split_validation(
    train_indices: &[usize],
    labels: &[u8],
    val_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    if val_fraction <= 0.0 {
        return (train_indices.to_vec(), Vec::new());
    }
    let k = ((1.0 / val_fraction).round() as usize).max(2);
    let sub_labels: Vec<u8> = train_indices.iter().map(|&i| labels[i]).collect();
    match data::stratified_folds(&sub_labels, k, rng::mix(seed, &[tag::VAL_SPLIT])) {
        Ok(partition) => {
            let val = partition
                .fold(0)
                .iter()
                .map(|&pos| train_indices[pos])
                .collect();
            let train = partition
                .train_indices(0)
                .iter()
                .map(|&pos| train_indices[pos])
                .collect();
            (train, val)
        }
        // Too few samples per class to carve a split: train on everything.
        Err(_) => (train_indices.to_vec(), Vec::new()),
    }
}

/// Trains `net` in place on the given subset of `images`/`labels`.
///
/// `fold` only decorates error diagnostics from cross-validation runs.
pub fn train(
    net: &mut Network,
    images: &[Image],
    labels: &[u8],
    train_indices: &[usize],
    settings: &TrainSettings,
    fold: Option<usize>,
) -> Result<TrainReport> {
    if images.len() != labels.len() {
        return Err(Error::shape(
            "training data",
            format!("{} labels", images.len()),
            format!("{} labels", labels.len()),
        ));
    }
    if train_indices.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if settings.batch_size == 0 || settings.iterations == 0 {
        return Err(Error::InvalidArgument(
            "batch size and iteration count must be positive".into(),
        ));
    }
    let (_, in_h, in_w) = net.input_shape();
    if settings.pipeline.crop_side != in_h || in_h != in_w {
        return Err(Error::shape(
            "pipeline crop",
            format!("{in_h}x{in_w} network input"),
            format!("{0}x{0} crop", settings.pipeline.crop_side),
        ));
    }

    let plan = net.plan();
    let first_trainable = net.first_trainable_op();
    if first_trainable >= plan.ops.len() {
        return Err(Error::InvalidArgument(
            "network has no trainable parameters".into(),
        ));
    }

    let (train_idx, val_idx) =
        split_validation(train_indices, labels, settings.val_fraction, settings.seed);
    let mut optim = OptimState::new(net, settings.hyper)?;

    let mut records = Vec::with_capacity(settings.iterations);
    let mut epoch: u64 = 0;
    let mut order = shuffled_epoch(&train_idx, settings.seed, epoch);
    let mut cursor = 0usize;
    let mut stopped_early = false;
    let mut final_val = None;
    let mut iterations_run = 0;

    for t in 1..=settings.iterations {
        if cursor >= order.len() {
            epoch += 1;
            order = shuffled_epoch(&train_idx, settings.seed, epoch);
            cursor = 0;
        }
        // The last batch of an epoch may be short; it is used as-is.
        let take = settings.batch_size.min(order.len() - cursor);
        let batch = &order[cursor..cursor + take];
        cursor += take;

        let (mean_loss, grads) = {
            let views = net.param_views();
            let per_sample: Result<Vec<(f32, Vec<GradBuf<f32>>)>> = batch
                .par_iter()
                .map(|&idx| {
                    let mut stream =
                        rng::stream(settings.seed, &[tag::AUGMENT, idx as u64, epoch]);
                    let input = data::augment(&images[idx], &settings.pipeline, &mut stream)?;
                    let tape =
                        seq::forward_train(&plan, &views, input.data(), first_trainable)?;
                    let label = labels[idx] as usize;
                    let loss = tape.loss(label)?;
                    let mut grads: Vec<GradBuf<f32>> =
                        views.iter().map(GradBuf::zeros_like).collect();
                    seq::backward(&plan, &views, &tape, label, &mut grads, first_trainable, false)?;
                    Ok((loss, grads))
                })
                .collect();
            let per_sample = per_sample?;

            let mut loss_sum = 0f64;
            let mut iter = per_sample.into_iter();
            let (first_loss, mut total) = iter.next().expect("non-empty batch");
            loss_sum += first_loss as f64;
            for (loss, grads) in iter {
                loss_sum += loss as f64;
                for (acc, g) in total.iter_mut().zip(&grads) {
                    acc.accumulate(g);
                }
            }
            let scale = 1.0 / take as f32;
            for g in &mut total {
                g.scale(scale);
            }
            ((loss_sum / take as f64) as f32, total)
        };

        if !mean_loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: t, fold });
        }
        optim.sgd_step(net, &grads)?;
        iterations_run = t;

        let mut val_accuracy = None;
        if !val_idx.is_empty() && settings.eval_every > 0 && t % settings.eval_every == 0 {
            let acc = eval::evaluate_subset(net, images, labels, &val_idx, &settings.pipeline)?;
            val_accuracy = Some(acc);
            final_val = Some(acc);
            let (_, stop) = optim.plateau_update(acc);
            if stop {
                stopped_early = true;
            }
        }
        records.push(IterationRecord {
            iteration: t,
            mean_loss,
            val_accuracy,
            learning_rate: optim.learning_rate(),
        });
        if stopped_early {
            break;
        }
    }

    Ok(TrainReport {
        records,
        iterations_run,
        stopped_early,
        final_val_accuracy: final_val,
    })
}

fn shuffled_epoch(indices: &[usize], seed: u64, epoch: u64) -> Vec<usize> {
    let mut order = indices.to_vec();
    order.shuffle(&mut rng::stream(seed, &[tag::SHUFFLE, epoch]));
    order
}
