//! Procedural stand-ins for underwater camera frames: a bright tiled pool
//! floor with caustic ripples and a dark cube resting on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::ImageFrame;

pub const POOL_WIDTH: usize = 160;
pub const POOL_HEIGHT: usize = 120;

/// Number of scenes in the bundled corpus.
pub const POOL_CORPUS_LEN: usize = 5;

/// Renders scene `index` at the given size. Deterministic in `index`.
pub fn pool_scene(index: u64, width: usize, height: usize) -> ImageFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9001 + index);
    let (wf, hf) = (width as f64, height as f64);
    let tile = rng.gen_range(14.0..22.0) * wf / 160.0;
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let ripple = rng.gen_range(0.06..0.12);
    let side = rng.gen_range(0.22..0.34) * hf;
    let cx = rng.gen_range(0.25..0.75) * wf;
    let cy = rng.gen_range(0.35..0.7) * hf;
    let depth = side * 0.35;
    let noise: Vec<i16> = (0..width * height).map(|_| rng.gen_range(-6..=6)).collect();

    ImageFrame::color_from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let n = noise[y * width + x];
        // Cube: front face, top face, shadow on its right.
        let (x0, y0) = (cx - side / 2.0, cy - side / 2.0);
        let front = xf >= x0 && xf < x0 + side && yf >= y0 && yf < y0 + side;
        let top = yf >= y0 - depth && yf < y0 && xf >= x0 + (y0 - yf) && xf < x0 + side + (y0 - yf);
        let shadow = xf >= x0 + side && xf < x0 + side + depth && yf >= y0 && yf < y0 + side + depth * 0.5;
        let base = if front {
            [28.0, 30.0, 36.0]
        } else if top {
            [55.0, 60.0, 70.0]
        } else {
            let grout = (xf % tile) < 1.5 || (yf % tile) < 1.5;
            let caustic = 1.0
                + ripple
                    * ((xf * 0.21 + phase).sin() * (yf * 0.17 - phase).cos()
                        + 0.5 * ((xf + yf) * 0.11 + 2.0 * phase).sin());
            let mut c = if grout { [150.0, 185.0, 195.0] } else { [185.0, 225.0, 235.0] };
            for v in &mut c {
                *v *= caustic;
            }
            if shadow {
                for v in &mut c {
                    *v *= 0.6;
                }
            }
            c
        };
        base.map(|v| (v + f64::from(n)).round().clamp(0.0, 255.0) as u8)
    })
}

/// The bundled corpus at its default size.
pub fn pool_corpus() -> Vec<ImageFrame> {
    (0..POOL_CORPUS_LEN as u64)
        .map(|i| pool_scene(i, POOL_WIDTH, POOL_HEIGHT))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obschannel::transform::to_grayscale;

    #[test]
    fn floor_is_bright_and_cube_is_dark() {
        let img = to_grayscale(&pool_scene(0, POOL_WIDTH, POOL_HEIGHT)).unwrap();
        let px = img.pixels();
        let bright = px.iter().filter(|&&p| p > 150).count();
        let dark = px.iter().filter(|&&p| p < 60).count();
        assert!(bright > px.len() / 2);
        assert!(dark > px.len() / 50);
    }

    #[test]
    fn deterministic() {
        assert_eq!(pool_scene(3, 40, 30), pool_scene(3, 40, 30));
        assert_ne!(pool_scene(3, 40, 30), pool_scene(4, 40, 30));
    }
}
