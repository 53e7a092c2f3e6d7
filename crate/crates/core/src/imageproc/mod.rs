//! Landmark-driven face alignment, cropping, flipping, grayscale
//! replication, and normalization.
//!
//! Alignment maps the two eye corners onto canonical positions in a 256x256
//! frame via a similarity transform (rotation + uniform scale + translation;
//! the 4-DOF subgroup a two-point correspondence determines exactly).

mod io;

pub use io::{load_image, read_pnm, write_pgm, write_ppm};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Canonical left outer eye corner in the aligned 256x256 frame.
pub const EYE_TARGET_LEFT: (f64, f64) = (74.0, 90.0);
/// Canonical right outer eye corner in the aligned 256x256 frame.
pub const EYE_TARGET_RIGHT: (f64, f64) = (182.0, 90.0);
/// Side of the aligned output frame.
pub const ALIGNED_SIDE: usize = 256;

/// 8-bit image, row-major and channel-interleaved; 1 or 3 channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "images must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape(
                "image buffer",
                format!("{} bytes for {width}x{height}x{channels}", width * height * channels),
                format!("{} bytes", data.len()),
            ));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Expands a grayscale image to three identical channels; 3-channel
    /// images are returned unchanged.
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.width * self.height * 3);
        for &v in &self.data {
            data.extend_from_slice(&[v, v, v]);
        }
        Image {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    /// Per-channel value sums, for dataset mean computation.
    pub fn channel_sums(&self) -> ([f64; 3], usize) {
        let mut sums = [0.0f64; 3];
        let pixels = self.width * self.height;
        if self.channels == 1 {
            let s: f64 = self.data.iter().map(|&v| v as f64).sum();
            sums = [s, s, s];
        } else {
            for px in self.data.chunks_exact(3) {
                sums[0] += px[0] as f64;
                sums[1] += px[1] as f64;
                sums[2] += px[2] as f64;
            }
        }
        (sums, pixels)
    }
}

/// Outer eye corners in source-image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmarks {
    pub left: (f64, f64),
    pub right: (f64, f64),
}

impl Landmarks {
    pub fn new(left: (f64, f64), right: (f64, f64)) -> Result<Self> {
        if !(left.0.is_finite() && left.1.is_finite() && right.0.is_finite() && right.1.is_finite())
        {
            return Err(Error::InvalidArgument("non-finite landmark".into()));
        }
        if right.0 <= left.0 {
            return Err(Error::InvalidArgument(format!(
                "right eye corner x ({}) must exceed left ({})",
                right.0, left.0
            )));
        }
        Ok(Landmarks { left, right })
    }
}

/// 2x3 affine matrix mapping output coordinates to source coordinates:
/// `src = (a*x + b*y + tx, c*x + d*y + ty)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub m: [f64; 6],
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform {
        m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    };

    pub fn translation(tx: f64, ty: f64) -> Self {
        AffineTransform {
            m: [1.0, 0.0, tx, 0.0, 1.0, ty],
        }
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let [a, b, tx, c, d, ty] = self.m;
        (a * x + b * y + tx, c * x + d * y + ty)
    }

    pub fn det(&self) -> f64 {
        self.m[0] * self.m[4] - self.m[1] * self.m[3]
    }

    pub fn is_valid(&self) -> bool {
        self.m.iter().all(|v| v.is_finite()) && self.det().abs() > 1e-9
    }
}

/// Solves the similarity transform that makes [`warp_affine`] place the
/// source eye corners on the canonical targets of the 256x256 frame.
///
/// The returned transform maps output coordinates to source coordinates, so
/// `t(EYE_TARGET_LEFT) == lm.left` and `t(EYE_TARGET_RIGHT) == lm.right`.
pub fn solve_alignment(lm: &Landmarks) -> Result<AffineTransform> {
    let (lx, ly) = lm.left;
    let (rx, ry) = lm.right;
    let dx = rx - lx;
    let dy = ry - ly;
    if dx * dx + dy * dy < 1e-12 {
        return Err(Error::InvalidArgument(
            "eye corners are coincident; alignment is undetermined".into(),
        ));
    }
    // Complex-plane solve: src = s * out + c0 with s encoding rotation+scale.
    let span = EYE_TARGET_RIGHT.0 - EYE_TARGET_LEFT.0; // targets share y
    let sp = dx / span;
    let sq = dy / span;
    let tx = lx - (sp * EYE_TARGET_LEFT.0 - sq * EYE_TARGET_LEFT.1);
    let ty = ly - (sq * EYE_TARGET_LEFT.0 + sp * EYE_TARGET_LEFT.1);
    let t = AffineTransform {
        m: [sp, -sq, tx, sq, sp, ty],
    };
    if !t.is_valid() {
        return Err(Error::InvalidArgument(
            "alignment transform is degenerate".into(),
        ));
    }
    Ok(t)
}

/// Warps `img` into an `out_w` x `out_h` frame, sampling the source
/// bilinearly at `t * (x, y)`. Samples outside the source read as black.
pub fn warp_affine(img: &Image, t: &AffineTransform, out_w: usize, out_h: usize) -> Result<Image> {
    if !t.is_valid() {
        return Err(Error::InvalidArgument(
            "warp_affine requires an invertible transform".into(),
        ));
    }
    let ch = img.channels;
    let (w, h) = (img.width as i64, img.height as i64);
    let mut out = vec![0u8; out_w * out_h * ch];
    for oy in 0..out_h {
        for ox in 0..out_w {
            let (sx, sy) = t.apply(ox as f64, oy as f64);
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as i64, y0 as i64);
            let sample = |x: i64, y: i64, c: usize| -> f64 {
                if x >= 0 && x < w && y >= 0 && y < h {
                    img.data[(y as usize * img.width + x as usize) * ch + c] as f64
                } else {
                    0.0
                }
            };
            for c in 0..ch {
                let v = sample(x0, y0, c) * (1.0 - fx) * (1.0 - fy)
                    + sample(x0 + 1, y0, c) * fx * (1.0 - fy)
                    + sample(x0, y0 + 1, c) * (1.0 - fx) * fy
                    + sample(x0 + 1, y0 + 1, c) * fx * fy;
                out[(oy * out_w + ox) * ch + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Image::new(out_w, out_h, ch, out)
}

/// Aligns a face image: solve the eye-corner transform, then warp into the
/// canonical 256x256 frame.
pub fn align_face(img: &Image, lm: &Landmarks) -> Result<Image> {
    let t = solve_alignment(lm)?;
    warp_affine(img, &t, ALIGNED_SIDE, ALIGNED_SIDE)
}

/// Copies the `side` x `side` window whose top-left corner is `(x0, y0)`.
pub fn crop_at(img: &Image, x0: usize, y0: usize, side: usize) -> Result<Image> {
    if x0 + side > img.width || y0 + side > img.height {
        return Err(Error::InvalidArgument(format!(
            "crop window ({x0},{y0})+{side} exceeds {}x{}",
            img.width, img.height
        )));
    }
    let ch = img.channels;
    let mut data = Vec::with_capacity(side * side * ch);
    for y in 0..side {
        let row_start = ((y0 + y) * img.width + x0) * ch;
        data.extend_from_slice(&img.data[row_start..row_start + side * ch]);
    }
    Ok(Image {
        width: side,
        height: side,
        channels: ch,
        data,
    })
}

fn check_crop_fits(img: &Image, out_side: usize) -> Result<(usize, usize)> {
    if img.width < out_side || img.height < out_side {
        return Err(Error::InvalidArgument(format!(
            "cannot crop {out_side}x{out_side} from {}x{}",
            img.width, img.height
        )));
    }
    Ok((img.width - out_side, img.height - out_side))
}

/// Crops an `out_side` square at offsets drawn uniformly from
/// `{0..margin}` per axis (inclusive; 256 -> 224 gives offsets in 0..=32).
pub fn random_crop(img: &Image, out_side: usize, rng: &mut impl Rng) -> Result<Image> {
    let (mx, my) = check_crop_fits(img, out_side)?;
    let x0 = rng.random_range(0..=mx);
    let y0 = rng.random_range(0..=my);
    crop_at(img, x0, y0, out_side)
}

/// Deterministic evaluation-time counterpart of [`random_crop`]: offsets are
/// the window-centering `margin/2` (16,16 for 256 -> 224).
pub fn center_crop(img: &Image, out_side: usize) -> Result<Image> {
    let (mx, my) = check_crop_fits(img, out_side)?;
    crop_at(img, mx / 2, my / 2, out_side)
}

/// Mirrors the image horizontally.
pub fn hflip(img: &Image) -> Image {
    let ch = img.channels;
    let mut data = Vec::with_capacity(img.data.len());
    for y in 0..img.height {
        for x in (0..img.width).rev() {
            let start = (y * img.width + x) * ch;
            data.extend_from_slice(&img.data[start..start + ch]);
        }
    }
    Image {
        width: img.width,
        height: img.height,
        channels: ch,
        data,
    }
}

/// BT.601 luma replicated into all three channels.
pub fn grayscale_replicate(img: &Image) -> Result<Image> {
    if img.channels != 3 {
        return Err(Error::InvalidArgument(format!(
            "grayscale_replicate expects a 3-channel image, got {}",
            img.channels
        )));
    }
    let mut data = Vec::with_capacity(img.data.len());
    for px in img.data.chunks_exact(3) {
        let gray = (0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64)
            .round()
            .clamp(0.0, 255.0) as u8;
        data.extend_from_slice(&[gray, gray, gray]);
    }
    Image::new(img.width, img.height, 3, data)
}

/// Converts to a channel-planar float tensor `[3, H, W]`, subtracting the
/// per-channel mean. Grayscale input is replicated across the three planes.
pub fn normalize(img: &Image, means: [f32; 3]) -> Result<Tensor> {
    if means.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "channel means must be finite, got {means:?}"
        )));
    }
    let (w, h) = (img.width, img.height);
    let mut data = vec![0.0f32; 3 * h * w];
    for c in 0..3 {
        let src_c = if img.channels == 1 { 0 } else { c };
        let plane = &mut data[c * h * w..(c + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                plane[y * w + x] =
                    img.data[(y * w + x) * img.channels + src_c] as f32 - means[c];
            }
        }
    }
    Tensor::new(vec![3, h, w], data)
}
