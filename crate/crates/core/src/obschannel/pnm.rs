//! Binary Netpbm codec: P4 (bitmap), P5 (graymap) and P6 (pixmap).
//!
//! Only `maxval = 255` is accepted for P5/P6. PBM stores 1 for black, so
//! binary frames (where 1 means bright) are inverted on the way in and out.

use std::fs;
use std::path::Path;

use super::image::{ChannelModel, ImageFrame};
use crate::error::{Error, Result};

fn format(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Encodes a frame. The timestamp is not stored.
pub fn encode(img: &ImageFrame) -> Vec<u8> {
    let (w, h) = (img.width(), img.height());
    match img.channels() {
        ChannelModel::Binary => {
            let mut out = format!("P4\n{w} {h}\n").into_bytes();
            let stride = w.div_ceil(8);
            for row in img.pixels().chunks(w.max(1)).take(h) {
                let mut packed = vec![0u8; stride];
                for (x, &v) in row.iter().enumerate() {
                    if v == 0 {
                        packed[x / 8] |= 0x80 >> (x % 8);
                    }
                }
                out.extend_from_slice(&packed);
            }
            out
        }
        ChannelModel::Gray => {
            let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
            out.extend_from_slice(img.pixels());
            out
        }
        ChannelModel::Color => {
            let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
            out.extend_from_slice(img.pixels());
            out
        }
    }
}

struct Header<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while let Some(&c) = self.data.get(self.pos) {
            if c == b'#' {
                while self.data.get(self.pos).is_some_and(|&c| c != b'\n' && c != b'\r') {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.data.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format(format!("expected {what} at byte {start}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| format(format!("{what} out of range")))
    }

    /// Exactly one whitespace byte separates the header from the raster.
    fn raster(&mut self) -> Result<&[u8]> {
        match self.data.get(self.pos) {
            Some(c) if c.is_ascii_whitespace() => Ok(&self.data[self.pos + 1..]),
            _ => Err(format("missing whitespace before raster")),
        }
    }
}

/// Decodes a P4, P5 or P6 image.
pub fn decode(data: &[u8]) -> Result<ImageFrame> {
    if data.len() < 2 || data[0] != b'P' {
        return Err(format("not a binary Netpbm file"));
    }
    let channels = match data[1] {
        b'4' => ChannelModel::Binary,
        b'5' => ChannelModel::Gray,
        b'6' => ChannelModel::Color,
        m => return Err(format(format!("unsupported magic P{}", m as char))),
    };
    let mut hdr = Header { data, pos: 2 };
    let w = hdr.number("width")?;
    let h = hdr.number("height")?;
    if w == 0 || h == 0 {
        return Err(format("image has zero size"));
    }
    if channels != ChannelModel::Binary {
        let maxval = hdr.number("maxval")?;
        if maxval != 255 {
            return Err(format(format!("maxval {maxval} is not supported (only 255)")));
        }
    }
    let raster = hdr.raster()?;

    let pixels = if channels == ChannelModel::Binary {
        let stride = w.div_ceil(8);
        if raster.len() < stride * h {
            return Err(format(format!("raster truncated: {} of {} bytes", raster.len(), stride * h)));
        }
        let mut px = Vec::with_capacity(w * h);
        for row in raster.chunks(stride).take(h) {
            for x in 0..w {
                px.push(u8::from(row[x / 8] & (0x80 >> (x % 8)) == 0));
            }
        }
        px
    } else {
        let need = w * h * channels.samples_per_pixel();
        if raster.len() < need {
            return Err(format(format!("raster truncated: {} of {need} bytes", raster.len())));
        }
        raster[..need].to_vec()
    };
    ImageFrame::new(w, h, channels, pixels)
}

pub fn read(path: impl AsRef<Path>) -> Result<ImageFrame> {
    let path = path.as_ref();
    let data = fs::read(path)?;
    decode(&data).map_err(|e| match e {
        Error::Format(m) => format(format!("{}: {m}", path.display())),
        e => e,
    })
}

pub fn write(path: impl AsRef<Path>, img: &ImageFrame) -> Result<()> {
    fs::write(path, encode(img))?;
    Ok(())
}
