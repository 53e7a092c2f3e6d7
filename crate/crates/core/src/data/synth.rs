//! Synthetic face generator: a desk-scale stand-in for a real smile dataset.
//!
//! Each image is an ellipse "face" with two dark eye dots (recorded as the
//! landmarks) and a parabolic mouth stroke curving up (label 1) or down
//! (label 0), over a noisy background. Pose jitter covers rotation, uniform
//! scale, and translation. The `source` and `target` variants differ in
//! stroke thickness, background texture, and polarity, giving the transfer
//! experiment its domain shift.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imageproc::{write_ppm, Image, Landmarks};
use crate::rng::{self, tag};

use super::{write_manifest, ImageSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthVariant {
    Source,
    Target,
}

impl SynthVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            SynthVariant::Source => "source",
            SynthVariant::Target => "target",
        }
    }
}

impl std::str::FromStr for SynthVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(SynthVariant::Source),
            "target" => Ok(SynthVariant::Target),
            other => Err(Error::InvalidArgument(format!(
                "unknown variant {other:?} (expected source or target)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub n: usize,
    pub side: usize,
    pub seed: u64,
    pub variant: SynthVariant,
}

impl SynthOptions {
    pub fn new(n: usize, variant: SynthVariant, seed: u64) -> Self {
        SynthOptions {
            n,
            side: 64,
            seed,
            variant,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSample {
    pub image: Image,
    pub landmarks: Landmarks,
    pub label: u8,
}

// Canonical geometry, in units of the image side, relative to face center.
const FACE_RX: f64 = 0.34;
const FACE_RY: f64 = 0.42;
const EYE_X: f64 = 0.15;
const EYE_Y: f64 = -0.15;
const EYE_R: f64 = 0.05;
const MOUTH_Y: f64 = 0.20;
const MOUTH_HALF_WIDTH: f64 = 0.16;
const MOUTH_DEPTH: f64 = 0.10;
const NOISE_SIGMA: f64 = 8.0;

struct Palette {
    background: f64,
    face: f64,
    eye: f64,
    mouth: f64,
    stroke_radius: f64,
    textured: bool,
}

impl Palette {
    fn of(variant: SynthVariant) -> Self {
        match variant {
            SynthVariant::Source => Palette {
                background: 200.0,
                face: 150.0,
                eye: 40.0,
                mouth: 30.0,
                stroke_radius: 0.022,
                textured: false,
            },
            // Polarity-inverted colors, thicker stroke, striped background.
            SynthVariant::Target => Palette {
                background: 55.0,
                face: 105.0,
                eye: 215.0,
                mouth: 225.0,
                stroke_radius: 0.034,
                textured: true,
            },
        }
    }
}

fn render(opts: &SynthOptions, index: usize) -> SynthSample {
    let mut r = rng::stream(opts.seed, &[tag::SYNTH, index as u64]);
    let s = opts.side as f64;
    let palette = Palette::of(opts.variant);
    let label = (index % 2) as u8;

    // Pose jitter: rotation +-15 deg, scale +-20%, translation +-10%.
    let theta = r.random_range(-15.0f64..=15.0).to_radians();
    let scale = r.random_range(0.8f64..=1.2);
    let shift_x = r.random_range(-0.1f64..=0.1);
    let shift_y = r.random_range(-0.1f64..=0.1);
    let tint = [
        r.random_range(-10.0f64..=10.0),
        r.random_range(-10.0f64..=10.0),
        r.random_range(-10.0f64..=10.0),
    ];
    let (stripe_period, stripe_angle, stripe_phase) = if palette.textured {
        (
            r.random_range(6.0f64..=12.0),
            r.random_range(0.0..PI),
            r.random_range(0.0..TAU),
        )
    } else {
        (1.0, 0.0, 0.0)
    };

    let (cos_t, sin_t) = (theta.cos(), theta.sin());
    let cx = (0.5 + shift_x) * s;
    let cy = (0.5 + shift_y) * s;

    // Smiles curve up at the corners, frowns down (+y points down the image).
    let curve_sign = if label == 1 { 1.0 } else { -1.0 };
    let mouth_at = |ux: f64| {
        MOUTH_Y + curve_sign * (MOUTH_DEPTH / 2.0 - MOUTH_DEPTH * (ux / MOUTH_HALF_WIDTH).powi(2))
    };

    let noise = Normal::new(0.0, NOISE_SIGMA).expect("fixed sigma");
    let mut data = Vec::with_capacity(opts.side * opts.side * 3);
    for y in 0..opts.side {
        for x in 0..opts.side {
            let dx = (x as f64 - cx) / (scale * s);
            let dy = (y as f64 - cy) / (scale * s);
            let ux = cos_t * dx + sin_t * dy;
            let uy = -sin_t * dx + cos_t * dy;

            let mut base = if palette.textured {
                let along = x as f64 * stripe_angle.cos() + y as f64 * stripe_angle.sin();
                palette.background + 12.0 * (TAU * along / stripe_period + stripe_phase).sin()
            } else {
                palette.background
            };
            if (ux / FACE_RX).powi(2) + (uy / FACE_RY).powi(2) <= 1.0 {
                base = palette.face;
            }
            for ex in [-EYE_X, EYE_X] {
                if (ux - ex).powi(2) + (uy - EYE_Y).powi(2) <= EYE_R * EYE_R {
                    base = palette.eye;
                }
            }
            if ux.abs() <= MOUTH_HALF_WIDTH + palette.stroke_radius
                && (uy - mouth_at(ux)).abs() <= palette.stroke_radius
            {
                base = palette.mouth;
            }
            for t in tint {
                let v = (base + t + noise.sample(&mut r)).round().clamp(0.0, 255.0);
                data.push(v as u8);
            }
        }
    }

    let eye_point = |ex: f64| {
        (
            cx + (cos_t * ex - sin_t * EYE_Y) * scale * s,
            cy + (sin_t * ex + cos_t * EYE_Y) * scale * s,
        )
    };
    let landmarks = Landmarks::new(eye_point(-EYE_X), eye_point(EYE_X))
        .expect("eye separation stays positive under +-15 degree rotation");

    SynthSample {
        image: Image::new(opts.side, opts.side, 3, data).expect("sized buffer"),
        landmarks,
        label,
    }
}

/// Generates `n` samples in memory, exactly half per class.
pub fn generate(opts: &SynthOptions) -> Result<Vec<SynthSample>> {
    if opts.n == 0 || opts.n % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "sample count must be positive and even, got {}",
            opts.n
        )));
    }
    if opts.side < 16 {
        return Err(Error::InvalidArgument(format!(
            "side {} is too small to draw a face",
            opts.side
        )));
    }
    Ok((0..opts.n)
        .into_par_iter()
        .map(|i| render(opts, i))
        .collect())
}

/// Generates the dataset under `dir` as PPM files plus a `manifest.csv`;
/// returns the manifest path. `comments` lines are embedded in every image.
pub fn generate_to_dir(opts: &SynthOptions, dir: &Path, comments: &[String]) -> Result<PathBuf> {
    let samples = generate(opts)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let digits = (opts.n.max(2) as f64).log10().ceil() as usize + 1;
    let mut manifest_rows = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        let name = format!("face_{i:0digits$}.ppm");
        write_ppm(&sample.image, &dir.join(&name), comments)?;
        manifest_rows.push(ImageSample {
            path: PathBuf::from(&name),
            resolved: dir.join(&name),
            label: sample.label,
            landmarks: sample.landmarks,
        });
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest_rows, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_balance_and_landmark_order() {
        let opts = SynthOptions::new(100, SynthVariant::Source, 3);
        let samples = generate(&opts).unwrap();
        let smiles = samples.iter().filter(|s| s.label == 1).count();
        assert_eq!(smiles, 50);
        for s in &samples {
            assert!(s.landmarks.right.0 > s.landmarks.left.0);
            assert_eq!(s.image.channels(), 3);
            assert_eq!(s.image.width(), 64);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let opts = SynthOptions::new(6, SynthVariant::Target, 11);
        let a = generate(&opts).unwrap();
        let b = generate(&opts).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.landmarks, y.landmarks);
        }
    }

    #[test]
    fn on_disk_files_are_byte_identical_across_runs() {
        let base = std::env::temp_dir().join("smelter-synth-tests");
        let dir_a = base.join("a");
        let dir_b = base.join("b");
        let opts = SynthOptions::new(4, SynthVariant::Source, 21);
        let man_a = generate_to_dir(&opts, &dir_a, &[]).unwrap();
        let man_b = generate_to_dir(&opts, &dir_b, &[]).unwrap();
        assert_eq!(
            std::fs::read(man_a).unwrap(),
            std::fs::read(man_b).unwrap()
        );
        for i in 0..4 {
            let name = format!("face_{i:02}.ppm");
            assert_eq!(
                std::fs::read(dir_a.join(&name)).unwrap(),
                std::fs::read(dir_b.join(&name)).unwrap(),
                "{name}"
            );
        }
    }

    #[test]
    fn odd_count_rejected() {
        assert!(generate(&SynthOptions::new(5, SynthVariant::Source, 0)).is_err());
        assert!(generate(&SynthOptions::new(0, SynthVariant::Source, 0)).is_err());
    }

    #[test]
    fn variants_differ_visibly() {
        let src = generate(&SynthOptions::new(2, SynthVariant::Source, 7)).unwrap();
        let tgt = generate(&SynthOptions::new(2, SynthVariant::Target, 7)).unwrap();
        // Polarity inversion: source backgrounds are bright, target dark.
        let mean = |img: &Image| {
            img.data().iter().map(|&v| v as f64).sum::<f64>() / img.data().len() as f64
        };
        assert!(mean(&src[0].image) > 120.0);
        assert!(mean(&tgt[0].image) < 120.0);
    }
}
