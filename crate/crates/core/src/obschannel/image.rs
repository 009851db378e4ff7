use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Pixel layout of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelModel {
    /// Three 8-bit samples per pixel, RGB order.
    Color,
    /// One 8-bit sample per pixel.
    Gray,
    /// One bit per pixel stored as 0 or 1.
    Binary,
}

impl ChannelModel {
    pub fn samples_per_pixel(self) -> usize {
        match self {
            ChannelModel::Color => 3,
            ChannelModel::Gray | ChannelModel::Binary => 1,
        }
    }

    pub fn bits_per_pixel(self) -> u64 {
        match self {
            ChannelModel::Color => 24,
            ChannelModel::Gray => 8,
            ChannelModel::Binary => 1,
        }
    }

    /// Exclusive upper bound of a sample value.
    pub fn levels(self) -> usize {
        match self {
            ChannelModel::Binary => 2,
            _ => 256,
        }
    }
}

/// Row-major raster with a capture timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageFrame {
    width: usize,
    height: usize,
    channels: ChannelModel,
    pixels: Vec<u8>,
    /// Capture time in seconds, stored as raw bits so frames stay `Eq`.
    timestamp_bits: u64,
}

impl ImageFrame {
    pub fn new(width: usize, height: usize, channels: ChannelModel, pixels: Vec<u8>) -> Result<Self> {
        let expected = width * height * channels.samples_per_pixel();
        if pixels.len() != expected {
            return Err(invalid(format!(
                "{width}x{height} {channels:?} frame needs {expected} samples, got {}",
                pixels.len()
            )));
        }
        if channels == ChannelModel::Binary && pixels.iter().any(|&p| p > 1) {
            return Err(invalid("binary frame samples must be 0 or 1"));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
            timestamp_bits: 0f64.to_bits(),
        })
    }

    pub fn filled(width: usize, height: usize, channels: ChannelModel, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels.samples_per_pixel()])
    }

    pub fn gray_from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Self {
        let mut px = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                px.push(f(x, y));
            }
        }
        Self::new(width, height, ChannelModel::Gray, px).expect("sized by construction")
    }

    pub fn color_from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Self {
        let mut px = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                px.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, ChannelModel::Color, px).expect("sized by construction")
    }

    pub fn with_timestamp(mut self, t: f64) -> Self {
        self.timestamp_bits = t.to_bits();
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> ChannelModel {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn timestamp(&self) -> f64 {
        f64::from_bits(self.timestamp_bits)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Samples of pixel `(x, y)`.
    pub fn at(&self, x: usize, y: usize) -> &[u8] {
        let s = self.channels.samples_per_pixel();
        let i = (y * self.width + x) * s;
        &self.pixels[i..i + s]
    }
}

/// Bits needed to transmit `img` uncompressed.
pub fn bits_required(img: &ImageFrame) -> u64 {
    img.pixel_count() as u64 * img.channels.bits_per_pixel()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_counts() {
        let c = ImageFrame::filled(640, 480, ChannelModel::Color, 0).unwrap();
        assert_eq!(bits_required(&c), 7_372_800);
        let b = ImageFrame::filled(640, 480, ChannelModel::Binary, 1).unwrap();
        assert_eq!(bits_required(&b), 307_200);
        let g = ImageFrame::filled(320, 240, ChannelModel::Gray, 9).unwrap();
        assert_eq!(bits_required(&g), 614_400);
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(ImageFrame::new(2, 2, ChannelModel::Color, vec![0; 4]).is_err());
        assert!(ImageFrame::new(2, 1, ChannelModel::Binary, vec![0, 2]).is_err());
    }
}
