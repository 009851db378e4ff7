//! Frame transforms available to the observation channel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::image::{ChannelModel, ImageFrame};
use crate::error::{invalid, Error, Result};

/// Threshold used when Otsu's method has nothing to separate.
pub const OTSU_FALLBACK_THRESHOLD: u8 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ThresholdMode {
    /// Samples `>= k` become 1.
    Fixed(u8),
    Otsu,
}

/// How a binarization threshold was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdInfo {
    pub threshold: u8,
    /// Otsu found a single gray level and fell back to
    /// [`OTSU_FALLBACK_THRESHOLD`].
    pub fallback: bool,
}

/// Luminance `0.299 R + 0.587 G + 0.114 B`, rounded half-up.
pub fn to_grayscale(img: &ImageFrame) -> Result<ImageFrame> {
    if img.channels() != ChannelModel::Color {
        return Err(invalid(format!(
            "to_grayscale expects a color frame, got {:?}",
            img.channels()
        )));
    }
    Ok(gray_unchecked(img))
}

fn gray_unchecked(img: &ImageFrame) -> ImageFrame {
    let px = img
        .pixels()
        .chunks_exact(3)
        .map(|c| luminance(c[0], c[1], c[2]))
        .collect();
    ImageFrame::new(img.width(), img.height(), ChannelModel::Gray, px)
        .expect("same dimensions")
        .with_timestamp(img.timestamp())
}

#[inline]
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    // Integer form of the weights keeps the rounding exact.
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

fn histogram(samples: &[u8]) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &s in samples {
        h[s as usize] += 1;
    }
    h
}

/// Threshold maximizing the between-class variance of the histogram,
/// where class 1 holds samples `>= t`. Ties go to the lowest `t`.
pub fn otsu_threshold(samples: &[u8]) -> ThresholdInfo {
    let hist = histogram(samples);
    if hist.iter().filter(|&&c| c > 0).count() <= 1 {
        return ThresholdInfo {
            threshold: OTSU_FALLBACK_THRESHOLD,
            fallback: true,
        };
    }
    let total: u64 = hist.iter().sum();
    let total_sum: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();

    // Between-class variance is proportional to (s0 w1 - s1 w0)^2 / (w0 w1);
    // candidates are compared exactly by cross-multiplication.
    let mut best: Option<(u8, u128, u128)> = None;
    let (mut w0, mut s0) = (0u64, 0u64);
    for t in 1..=255usize {
        w0 += hist[t - 1];
        s0 += (t as u64 - 1) * hist[t - 1];
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let s1 = total_sum - s0;
        let diff = (s0 as i128 * w1 as i128 - s1 as i128 * w0 as i128).unsigned_abs();
        let num = diff * diff;
        let den = w0 as u128 * w1 as u128;
        let better = match best {
            None => true,
            Some((_, bn, bd)) => greater(num, den, bn, bd),
        };
        if better {
            best = Some((t as u8, num, den));
        }
    }
    ThresholdInfo {
        threshold: best.map(|b| b.0).unwrap_or(OTSU_FALLBACK_THRESHOLD),
        fallback: false,
    }
}

/// `a / b > c / d` for positive denominators.
fn greater(a: u128, b: u128, c: u128, d: u128) -> bool {
    match (a.checked_mul(d), c.checked_mul(b)) {
        (Some(l), Some(r)) => l > r,
        _ => (a as f64 / b as f64) > (c as f64 / d as f64),
    }
}

fn resolve_threshold(samples: &[u8], mode: ThresholdMode) -> ThresholdInfo {
    match mode {
        ThresholdMode::Fixed(k) => ThresholdInfo {
            threshold: k,
            fallback: false,
        },
        ThresholdMode::Otsu => otsu_threshold(samples),
    }
}

/// Gray to binary: samples at or above the threshold become 1.
pub fn binarize(img: &ImageFrame, mode: ThresholdMode) -> Result<(ImageFrame, ThresholdInfo)> {
    if img.channels() != ChannelModel::Gray {
        return Err(invalid(format!("binarize expects a gray frame, got {:?}", img.channels())));
    }
    let info = resolve_threshold(img.pixels(), mode);
    let px = img
        .pixels()
        .iter()
        .map(|&p| u8::from(p >= info.threshold))
        .collect();
    let out = ImageFrame::new(img.width(), img.height(), ChannelModel::Binary, px)?
        .with_timestamp(img.timestamp());
    Ok((out, info))
}

/// Sobel gradient magnitude with replicated borders, saturated to 8 bits.
pub fn sobel_magnitude(img: &ImageFrame) -> Result<ImageFrame> {
    if img.channels() != ChannelModel::Gray {
        return Err(invalid("edge detection expects a gray frame"));
    }
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(invalid(format!("edge detection needs at least 3x3 pixels, got {w}x{h}")));
    }
    let p = img.pixels();
    let at = |x: isize, y: isize| -> i32 {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        p[yc * w + xc] as i32
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2 * at(x, y - 1) + at(x + 1, y - 1));
            let mag = ((gx * gx + gy * gy) as f64).sqrt().round().min(255.0);
            out.push(mag as u8);
        }
    }
    Ok(ImageFrame::new(w, h, ChannelModel::Gray, out)?.with_timestamp(img.timestamp()))
}

pub fn edge_detect(img: &ImageFrame, mode: ThresholdMode) -> Result<(ImageFrame, ThresholdInfo)> {
    binarize(&sobel_magnitude(img)?, mode)
}

/// Block-mean pooling over `factor x factor` blocks; trailing rows and
/// columns that do not fill a block are dropped. Binary frames use a
/// majority vote with ties going to 1.
pub fn downsample(img: &ImageFrame, factor: usize) -> Result<ImageFrame> {
    if factor < 1 {
        return Err(invalid("downsample factor must be at least 1"));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width() / factor, img.height() / factor);
    let spp = img.channels().samples_per_pixel();
    let count = (factor * factor) as u32;
    let mut out = Vec::with_capacity(w * h * spp);
    for by in 0..h {
        for bx in 0..w {
            for c in 0..spp {
                let mut sum = 0u32;
                for y in by * factor..(by + 1) * factor {
                    for x in bx * factor..(bx + 1) * factor {
                        sum += img.at(x, y)[c] as u32;
                    }
                }
                let v = match img.channels() {
                    ChannelModel::Binary => u8::from(2 * sum >= count),
                    _ => ((2 * sum + count) / (2 * count)) as u8,
                };
                out.push(v);
            }
        }
    }
    Ok(ImageFrame::new(w, h, img.channels(), out)?.with_timestamp(img.timestamp()))
}

/// Nearest-neighbour upsampling back to `width x height`; pixels past the
/// last full block repeat the final source row or column.
pub fn upsample_to(img: &ImageFrame, width: usize, height: usize) -> Result<ImageFrame> {
    if img.width() == width && img.height() == height {
        return Ok(img.clone());
    }
    if img.width() == 0 || img.height() == 0 || img.width() > width || img.height() > height {
        return Err(invalid("upsample target must contain the source frame"));
    }
    let fx = (width / img.width()).max(1);
    let fy = (height / img.height()).max(1);
    let mut out = Vec::with_capacity(width * height * img.channels().samples_per_pixel());
    for y in 0..height {
        let sy = (y / fy).min(img.height() - 1);
        for x in 0..width {
            let sx = (x / fx).min(img.width() - 1);
            out.extend_from_slice(img.at(sx, sy));
        }
    }
    Ok(ImageFrame::new(width, height, img.channels(), out)?.with_timestamp(img.timestamp()))
}

/// A single transform step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transform {
    Identity,
    /// Luminance; a no-op on gray input.
    Grayscale,
    /// Reduces color to luminance first when needed.
    Binarize(ThresholdMode),
    /// Reduces color to luminance first when needed.
    EdgeDetect(ThresholdMode),
    Downsample(usize),
}

impl Transform {
    pub fn apply(&self, img: &ImageFrame) -> Result<ImageFrame> {
        let as_gray = |img: &ImageFrame| -> Result<ImageFrame> {
            match img.channels() {
                ChannelModel::Color => Ok(gray_unchecked(img)),
                ChannelModel::Gray => Ok(img.clone()),
                ChannelModel::Binary => Err(invalid("cannot convert a binary frame to gray")),
            }
        };
        match *self {
            Transform::Identity => Ok(img.clone()),
            Transform::Grayscale => as_gray(img),
            Transform::Binarize(mode) => Ok(binarize(&as_gray(img)?, mode)?.0),
            Transform::EdgeDetect(mode) => Ok(edge_detect(&as_gray(img)?, mode)?.0),
            Transform::Downsample(f) => downsample(img, f),
        }
    }

    /// Output channel model for a given input model.
    pub fn output_model(&self, input: ChannelModel) -> ChannelModel {
        match self {
            Transform::Identity | Transform::Downsample(_) => input,
            Transform::Grayscale => ChannelModel::Gray,
            Transform::Binarize(_) | Transform::EdgeDetect(_) => ChannelModel::Binary,
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = |m: &ThresholdMode| match m {
            ThresholdMode::Otsu => "otsu".to_string(),
            ThresholdMode::Fixed(k) => k.to_string(),
        };
        match self {
            Transform::Identity => write!(f, "identity"),
            Transform::Grayscale => write!(f, "grayscale"),
            Transform::Binarize(m) => write!(f, "binarize:{}", mode(m)),
            Transform::EdgeDetect(m) => write!(f, "edge:{}", mode(m)),
            Transform::Downsample(k) => write!(f, "downsample:{k}"),
        }
    }
}

impl FromStr for Transform {
    type Err = Error;

    /// Accepts `identity`, `grayscale`, `binarize[:otsu|:<k>]`,
    /// `edge[:otsu|:<k>]` and `downsample:<factor>`. Binarize and edge
    /// default to Otsu.
    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.trim().split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let mode = |arg: Option<&str>| -> Result<ThresholdMode> {
            match arg {
                None | Some("otsu") => Ok(ThresholdMode::Otsu),
                Some(k) => k
                    .parse::<u8>()
                    .map(ThresholdMode::Fixed)
                    .map_err(|_| invalid(format!("bad threshold '{k}' in transform '{s}'"))),
            }
        };
        match (head, arg) {
            ("identity", None) => Ok(Transform::Identity),
            ("grayscale" | "gray", None) => Ok(Transform::Grayscale),
            ("binarize" | "bw", a) => Ok(Transform::Binarize(mode(a)?)),
            ("edge", a) => Ok(Transform::EdgeDetect(mode(a)?)),
            ("downsample", Some(k)) => {
                let f: usize = k
                    .parse()
                    .map_err(|_| invalid(format!("bad downsample factor in '{s}'")))?;
                if f < 1 {
                    return Err(invalid("downsample factor must be at least 1"));
                }
                Ok(Transform::Downsample(f))
            }
            _ => Err(invalid(format!("unknown transform '{s}'"))),
        }
    }
}

/// A named composition of transform steps applied left to right.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransformSpec {
    pub steps: Vec<Transform>,
}

impl TransformSpec {
    pub fn new(steps: Vec<Transform>) -> Self {
        Self { steps }
    }

    pub fn single(t: Transform) -> Self {
        Self { steps: vec![t] }
    }

    pub fn identity() -> Self {
        Self::single(Transform::Identity)
    }

    pub fn grayscale() -> Self {
        Self::single(Transform::Grayscale)
    }

    pub fn binarize(mode: ThresholdMode) -> Self {
        Self::single(Transform::Binarize(mode))
    }

    pub fn apply(&self, img: &ImageFrame) -> Result<ImageFrame> {
        let mut cur = img.clone();
        for s in &self.steps {
            cur = s.apply(&cur)?;
        }
        Ok(cur)
    }

    /// Total downsampling factor of the composition.
    pub fn scale(&self) -> usize {
        self.steps
            .iter()
            .map(|s| match s {
                Transform::Downsample(k) => *k,
                _ => 1,
            })
            .product()
    }
}

impl fmt::Display for TransformSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.steps.is_empty() {
            return write!(f, "identity");
        }
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                write!(f, "|")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for TransformSpec {
    type Err = Error;

    /// Steps separated by `|`, e.g. `downsample:2|binarize:otsu`.
    fn from_str(s: &str) -> Result<Self> {
        let steps = s
            .split('|')
            .map(str::parse)
            .collect::<Result<Vec<Transform>>>()?;
        Ok(Self { steps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_examples() {
        let white = ImageFrame::filled(4, 3, ChannelModel::Color, 255).unwrap();
        let g = to_grayscale(&white).unwrap();
        assert_eq!(g.channels(), ChannelModel::Gray);
        assert!(g.pixels().iter().all(|&p| p == 255));

        let red = ImageFrame::color_from_fn(2, 2, |_, _| [255, 0, 0]);
        assert!(to_grayscale(&red).unwrap().pixels().iter().all(|&p| p == 76));

        assert!(to_grayscale(&g).is_err());
    }

    #[test]
    fn luminance_half_up() {
        // 0.299 * 5 + 0.587 * 0 + 0.114 * 5 = 2.065 -> 2; (1, 1, 0) = 0.886 -> 1
        assert_eq!(luminance(5, 0, 5), 2);
        assert_eq!(luminance(1, 1, 0), 1);
        // 0.5 exactly rounds up: 0.299*a + 0.587*b + 0.114*c with (0, 0, 0) stays 0
        assert_eq!(luminance(0, 0, 0), 0);
    }

    #[test]
    fn binarize_fixed() {
        let zero = ImageFrame::filled(3, 3, ChannelModel::Gray, 0).unwrap();
        let (b, _) = binarize(&zero, ThresholdMode::Fixed(1)).unwrap();
        assert!(b.pixels().iter().all(|&p| p == 0));

        let checker = ImageFrame::gray_from_fn(4, 4, |x, y| if (x + y) % 2 == 0 { 0 } else { 255 });
        let (b, _) = binarize(&checker, ThresholdMode::Fixed(128)).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(b.at(x, y)[0], ((x + y) % 2) as u8);
            }
        }
    }

    #[test]
    fn otsu_two_levels() {
        let img = ImageFrame::gray_from_fn(8, 8, |x, _| if x < 3 { 40 } else { 200 });
        let (b, info) = binarize(&img, ThresholdMode::Otsu).unwrap();
        assert!(!info.fallback);
        assert!(info.threshold > 40 && info.threshold <= 200);
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(b.at(x, y)[0], u8::from(x >= 3));
            }
        }
    }

    #[test]
    fn otsu_matches_brute_force() {
        // Float brute force over all 256 thresholds; lowest maximizer.
        let img = ImageFrame::gray_from_fn(17, 9, |x, y| ((x * 37 + y * y * 11) % 251) as u8);
        let px = img.pixels();
        let n = px.len() as f64;
        let mut best = (0u8, -1.0f64);
        for t in 0..=255u16 {
            let (c0, c1): (Vec<f64>, Vec<f64>) = (
                px.iter().filter(|&&p| (p as u16) < t).map(|&p| p as f64).collect(),
                px.iter().filter(|&&p| (p as u16) >= t).map(|&p| p as f64).collect(),
            );
            if c0.is_empty() || c1.is_empty() {
                continue;
            }
            let m0 = c0.iter().sum::<f64>() / c0.len() as f64;
            let m1 = c1.iter().sum::<f64>() / c1.len() as f64;
            let var = (c0.len() as f64 / n) * (c1.len() as f64 / n) * (m0 - m1).powi(2);
            if var > best.1 * (1.0 + 1e-12) {
                best = (t as u8, var);
            }
        }
        assert_eq!(otsu_threshold(px).threshold, best.0);
    }

    #[test]
    fn otsu_constant_falls_back() {
        let img = ImageFrame::filled(5, 5, ChannelModel::Gray, 77).unwrap();
        let (b, info) = binarize(&img, ThresholdMode::Otsu).unwrap();
        assert!(info.fallback);
        assert_eq!(info.threshold, 128);
        assert!(b.pixels().iter().all(|&p| p == 0));
    }

    #[test]
    fn edges() {
        let flat = ImageFrame::filled(6, 5, ChannelModel::Gray, 90).unwrap();
        let (e, _) = edge_detect(&flat, ThresholdMode::Fixed(128)).unwrap();
        assert!(e.pixels().iter().all(|&p| p == 0));

        let k = 4;
        let step = ImageFrame::gray_from_fn(10, 6, |x, _| if x < k { 0 } else { 255 });
        let (e, _) = edge_detect(&step, ThresholdMode::Fixed(128)).unwrap();
        for y in 0..6 {
            for x in 0..10 {
                let expected = u8::from(x == k - 1 || x == k);
                assert_eq!(e.at(x, y)[0], expected, "({x},{y})");
            }
        }

        let tiny = ImageFrame::filled(2, 2, ChannelModel::Gray, 0).unwrap();
        assert!(edge_detect(&tiny, ThresholdMode::Otsu).is_err());
    }

    #[test]
    fn downsample_examples() {
        let img = ImageFrame::gray_from_fn(5, 3, |x, y| (x * 40 + y) as u8);
        assert_eq!(downsample(&img, 1).unwrap(), img);

        let blk = ImageFrame::new(2, 2, ChannelModel::Gray, vec![0, 0, 255, 255]).unwrap();
        let d = downsample(&blk, 2).unwrap();
        assert_eq!((d.width(), d.height()), (1, 1));
        assert_eq!(d.pixels(), &[128]);

        let c = ImageFrame::filled(7, 5, ChannelModel::Color, 33).unwrap();
        let d = downsample(&c, 3).unwrap();
        assert_eq!((d.width(), d.height()), (2, 1));
        assert!(d.pixels().iter().all(|&p| p == 33));

        let b = ImageFrame::new(2, 2, ChannelModel::Binary, vec![1, 0, 0, 1]).unwrap();
        assert_eq!(downsample(&b, 2).unwrap().pixels(), &[1]);

        assert!(downsample(&img, 0).is_err());
    }

    #[test]
    fn upsample_replicates() {
        let small = ImageFrame::new(2, 1, ChannelModel::Gray, vec![10, 20]).unwrap();
        let up = upsample_to(&small, 5, 2).unwrap();
        assert_eq!(up.pixels(), &[10, 10, 20, 20, 20, 10, 10, 20, 20, 20]);
    }

    #[test]
    fn spec_parsing() {
        let s: TransformSpec = "downsample:2|binarize:otsu".parse().unwrap();
        assert_eq!(s.steps, vec![Transform::Downsample(2), Transform::Binarize(ThresholdMode::Otsu)]);
        assert_eq!(s.to_string(), "downsample:2|binarize:otsu");
        assert_eq!(s.scale(), 2);
        let e: Transform = "edge:100".parse().unwrap();
        assert_eq!(e, Transform::EdgeDetect(ThresholdMode::Fixed(100)));
        assert!("blur".parse::<Transform>().is_err());
        assert!("downsample:0".parse::<Transform>().is_err());
        assert!("binarize:300".parse::<Transform>().is_err());
    }

    #[test]
    fn pipeline_on_color() {
        let img = ImageFrame::color_from_fn(6, 6, |x, _| if x < 3 { [0, 0, 0] } else { [250, 250, 250] });
        let out = TransformSpec::binarize(ThresholdMode::Otsu).apply(&img).unwrap();
        assert_eq!(out.channels(), ChannelModel::Binary);
        assert_eq!(out.at(0, 0)[0], 0);
        assert_eq!(out.at(5, 5)[0], 1);
    }
}
