//! Dataset ingestion: manifest parsing, stratified k-fold partitioning, the
//! training augmentation pipeline, and a synthetic desk-scale dataset
//! generator.

pub mod synth;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imageproc::{self, Image, Landmarks};
use crate::rng::{self, tag};
use crate::tensor::Tensor;

pub const MANIFEST_HEADER: &str = "path,label,lx,ly,rx,ry";

/// One dataset row: an image on disk, its binary label, and the eye-corner
/// landmarks in that image's pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    /// Path as written in the manifest (possibly relative).
    pub path: PathBuf,
    /// Path resolved against the manifest location.
    pub resolved: PathBuf,
    pub label: u8,
    pub landmarks: Landmarks,
}

/// Loads a manifest CSV with header `path,label,lx,ly,rx,ry`. Relative image
/// paths are resolved against the manifest's directory; every row must point
/// at a readable file. Malformed rows abort the load naming their line.
pub fn load_manifest(path: &Path) -> Result<Vec<ImageSample>> {
    let err_at = |line: usize, detail: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                Error::io(path, std::io::Error::other(e.to_string()))
            }
            _ => err_at(1, e.to_string()),
        })?;
    {
        let headers = reader.headers().map_err(|e| err_at(1, e.to_string()))?;
        let got = headers.iter().collect::<Vec<_>>().join(",");
        if got != MANIFEST_HEADER {
            return Err(err_at(
                1,
                format!("expected header {MANIFEST_HEADER:?}, found {got:?}"),
            ));
        }
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(samples.len() + 2);
            err_at(line, e.to_string())
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(samples.len() + 2);
        if record.len() != 6 {
            return Err(err_at(line, format!("expected 6 fields, found {}", record.len())));
        }
        let raw_path = PathBuf::from(&record[0]);
        let resolved = if raw_path.is_absolute() {
            raw_path.clone()
        } else {
            base.join(&raw_path)
        };
        if !resolved.is_file() {
            return Err(err_at(
                line,
                format!("image {} is not a readable file", resolved.display()),
            ));
        }
        let label: i64 = record[1]
            .parse()
            .map_err(|_| err_at(line, format!("label {:?} is not an integer", &record[1])))?;
        if label != 0 && label != 1 {
            return Err(err_at(line, format!("label {label} is not 0 or 1")));
        }
        let coord = |field: usize, name: &str| -> Result<f64> {
            record[field].parse::<f64>().map_err(|_| {
                err_at(
                    line,
                    format!("landmark {name} {:?} is not numeric", &record[field]),
                )
            })
        };
        let landmarks = Landmarks::new(
            (coord(2, "lx")?, coord(3, "ly")?),
            (coord(4, "rx")?, coord(5, "ry")?),
        )
        .map_err(|e| err_at(line, e.to_string()))?;
        samples.push(ImageSample {
            path: raw_path,
            resolved,
            label: label as u8,
            landmarks,
        });
    }
    Ok(samples)
}

/// Writes a manifest next to its images; `path` fields are written as given.
pub fn write_manifest(samples: &[ImageSample], path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for s in samples {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.path.display(),
            s.label,
            s.landmarks.left.0,
            s.landmarks.left.1,
            s.landmarks.right.0,
            s.landmarks.right.1
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Decodes every sample's image, in manifest order.
pub fn load_images(samples: &[ImageSample]) -> Result<Vec<Image>> {
    samples
        .par_iter()
        .map(|s| imageproc::load_image(&s.resolved))
        .collect()
}

/// Assignment of sample indices to `k` folds, stratified by label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPartition {
    folds: Vec<Vec<usize>>,
    seed: u64,
}

impl FoldPartition {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fold(&self, i: usize) -> &[usize] {
        &self.folds[i]
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    /// All indices outside fold `i`, ascending.
    pub fn train_indices(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

/// Shuffles each class deterministically by seed, then deals round-robin.
/// Consecutive classes start dealing where the previous class's remainder
/// left off, so fold sizes stay balanced (the 2162/1838 split lands exactly
/// on four folds of 1000).
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<FoldPartition> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    let classes: BTreeSet<u8> = labels.iter().copied().collect();
    if classes.is_empty() {
        return Err(Error::InvalidArgument("no samples to partition".into()));
    }
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0usize;
    for class in classes {
        let mut idxs: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if idxs.len() < k {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} samples, fewer than k = {k}",
                idxs.len()
            )));
        }
        idxs.shuffle(&mut rng::stream(seed, &[tag::FOLDS, class as u64]));
        for (j, idx) in idxs.iter().enumerate() {
            folds[(offset + j) % k].push(*idx);
        }
        offset = (offset + idxs.len()) % k;
    }
    Ok(FoldPartition { folds, seed })
}

/// Options shared by the training and evaluation input pipelines.
#[derive(Debug, Clone, Copy)]
pub struct PipelineOptions {
    /// Side of the crop fed to the network (the model input side).
    pub crop_side: usize,
    /// Per-channel means subtracted after cropping.
    pub means: [f32; 3],
    /// Whether training applies the 50% horizontal flip.
    pub flip: bool,
}

/// The random choices of one training-time augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentDraw {
    pub dx: usize,
    pub dy: usize,
    pub flip: bool,
}

impl AugmentDraw {
    /// Draws crop offsets uniformly from `{0..margin}` per axis, then the
    /// flip coin when enabled.
    pub fn sample(img: &Image, opts: &PipelineOptions, rng: &mut impl Rng) -> Result<Self> {
        if img.width() < opts.crop_side || img.height() < opts.crop_side {
            return Err(Error::InvalidArgument(format!(
                "cannot crop {0}x{0} from {1}x{2}",
                opts.crop_side,
                img.width(),
                img.height()
            )));
        }
        let dx = rng.random_range(0..=img.width() - opts.crop_side);
        let dy = rng.random_range(0..=img.height() - opts.crop_side);
        let flip = opts.flip && rng.random_bool(0.5);
        Ok(AugmentDraw { dx, dy, flip })
    }
}

/// Applies an explicit augmentation draw: crop, optional flip, normalize.
pub fn apply_augment(img: &Image, draw: AugmentDraw, opts: &PipelineOptions) -> Result<Tensor> {
    let cropped = imageproc::crop_at(img, draw.dx, draw.dy, opts.crop_side)?;
    let flipped = if draw.flip {
        imageproc::hflip(&cropped)
    } else {
        cropped
    };
    imageproc::normalize(&flipped, opts.means)
}

/// Training-time input: random crop, 50% horizontal flip, mean subtraction.
pub fn augment(img: &Image, opts: &PipelineOptions, rng: &mut impl Rng) -> Result<Tensor> {
    let draw = AugmentDraw::sample(img, opts, rng)?;
    apply_augment(img, draw, opts)
}

/// Evaluation-time input: center crop and mean subtraction, no flip.
pub fn eval_input(img: &Image, opts: &PipelineOptions) -> Result<Tensor> {
    let cropped = imageproc::center_crop(img, opts.crop_side)?;
    imageproc::normalize(&cropped, opts.means)
}

/// Per-channel means over the listed images (every pixel weighted equally).
pub fn channel_means(images: &[Image], indices: &[usize]) -> [f32; 3] {
    let mut sums = [0.0f64; 3];
    let mut count = 0usize;
    for &i in indices {
        let (s, px) = images[i].channel_sums();
        for c in 0..3 {
            sums[c] += s[c];
        }
        count += px;
    }
    if count == 0 {
        return [0.0; 3];
    }
    [
        (sums[0] / count as f64) as f32,
        (sums[1] / count as f64) as f32,
        (sums[2] / count as f64) as f32,
    ]
}
