//! Scratch harness for pre-validating the desk-scale training and transfer
//! experiments (run manually; not part of the test suite).

use std::time::Instant;

use smelter_core::data::synth::{generate, SynthOptions, SynthVariant};
use smelter_core::data::{self, PipelineOptions};
use smelter_core::eval;
use smelter_core::imageproc::Image;
use smelter_core::net::{build_minicnn, save_checkpoint, MiniCnnConfig};
use smelter_core::optim::SgdHyper;
use smelter_core::rng::{self, tag};
use smelter_core::trainer::{self, TrainSettings};

fn dataset(n: usize, variant: SynthVariant, seed: u64) -> (Vec<Image>, Vec<u8>) {
    let samples = generate(&SynthOptions {
        n,
        side: 64,
        seed,
        variant,
    })
    .unwrap();
    let labels = samples.iter().map(|s| s.label).collect();
    let images = samples.into_iter().map(|s| s.image).collect();
    (images, labels)
}

fn settings(seed: u64, iterations: usize) -> TrainSettings {
    TrainSettings {
        hyper: SgdHyper::default(),
        batch_size: 64,
        iterations,
        eval_every: 100,
        val_fraction: 0.1,
        seed,
        pipeline: PipelineOptions {
            crop_side: 64,
            means: [0.0; 3],
            flip: true,
        },
    }
}

fn main() {
    let lr: f32 = std::env::var("LR").ok().and_then(|v| v.parse().ok()).unwrap_or(1e-3);
    let skip_transfer = std::env::var("SKIP_TRANSFER").is_ok();
    let t0 = Instant::now();
    // --- Desk-scale source training -------------------------------------
    let (images, labels) = dataset(2500, SynthVariant::Source, 20_001);
    let train_idx: Vec<usize> = (0..2000).collect();
    let test_idx: Vec<usize> = (2000..2500).collect();
    let means = data::channel_means(&images, &train_idx);
    println!("means: {means:?} (gen {:?})", t0.elapsed());

    let mut net = build_minicnn(&MiniCnnConfig::default()).unwrap();
    net.init_he(&mut rng::stream(1, &[tag::INIT]));
    let mut s = settings(1, 1000);
    s.hyper.learning_rate = lr;
    s.pipeline.means = means;
    println!("lr = {lr:.1e}");
    let t1 = Instant::now();
    let report = trainer::train(&mut net, &images, &labels, &train_idx, &s, None).unwrap();
    println!(
        "train: {} iterations in {:?} (stopped_early={}, final_val={:?})",
        report.iterations_run,
        t1.elapsed(),
        report.stopped_early,
        report.final_val_accuracy
    );
    for r in report.records.iter().filter(|r| r.val_accuracy.is_some()) {
        println!(
            "  it {:4} loss {:.4} val {:.4} lr {:.1e}",
            r.iteration,
            r.mean_loss,
            r.val_accuracy.unwrap(),
            r.learning_rate
        );
    }
    let pipeline = PipelineOptions {
        crop_side: 64,
        means,
        flip: false,
    };
    let acc = eval::evaluate_subset(&net, &images, &labels, &test_idx, &pipeline).unwrap();
    println!("held-out source accuracy: {acc:.4} (total {:?})", t0.elapsed());

    let ckpt = std::env::temp_dir().join("oracle_source.smnn");
    save_checkpoint(&net, &ckpt).unwrap();
    if skip_transfer {
        return;
    }

    // --- Transfer experiment --------------------------------------------
    let (timages, tlabels) = dataset(900, SynthVariant::Target, 30_001);
    let t_train: Vec<usize> = (0..400).collect();
    let t_eval: Vec<usize> = (400..900).collect();
    let t_means = data::channel_means(&timages, &t_train);

    let mut pre_accs = Vec::new();
    let mut rand_accs = Vec::new();
    for seed in [101u64, 102, 103] {
        let t2 = Instant::now();
        let arm = |pretrained: bool| -> f64 {
            let mut net = build_minicnn(&MiniCnnConfig::default()).unwrap();
            if pretrained {
                smelter_core::net::load_checkpoint_into(&mut net, &ckpt).unwrap();
            } else {
                net.init_he(&mut rng::stream(seed, &[tag::INIT, 7]));
            }
            net.set_trainable("conv*", false).unwrap();
            net.reinit_head("fc", 1e-2, &mut rng::stream(seed, &[tag::HEAD]))
                .unwrap();
            let mut s = settings(seed, 300);
            s.pipeline.means = t_means;
            trainer::train(&mut net, &timages, &tlabels, &t_train, &s, None).unwrap();
            let ep = PipelineOptions {
                crop_side: 64,
                means: t_means,
                flip: false,
            };
            eval::evaluate_subset(&net, &timages, &tlabels, &t_eval, &ep).unwrap()
        };
        let pre = arm(true);
        let rnd = arm(false);
        println!("seed {seed}: pretrained {pre:.4} vs random {rnd:.4} ({:?})", t2.elapsed());
        pre_accs.push(pre);
        rand_accs.push(rnd);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "transfer means: pretrained {:.4} vs random {:.4} (gap {:+.4}), total {:?}",
        mean(&pre_accs),
        mean(&rand_accs),
        mean(&pre_accs) - mean(&rand_accs),
        t0.elapsed()
    );
}
