use rayon::prelude::*;

use super::image::{ChannelModel, ImageFrame};
use super::transform::{luminance, upsample_to, TransformSpec};
use crate::error::{invalid, Result};

/// Samples used for information estimates: luminance for color frames, raw
/// values otherwise, together with the number of levels.
fn levels_of(img: &ImageFrame) -> (Vec<u8>, usize) {
    match img.channels() {
        ChannelModel::Color => (
            img.pixels().chunks_exact(3).map(|p| luminance(p[0], p[1], p[2])).collect(),
            256,
        ),
        m => (img.pixels().to_vec(), m.levels()),
    }
}

fn binned(img: &ImageFrame, bins: Option<usize>) -> Result<(Vec<usize>, usize)> {
    let (samples, levels) = levels_of(img);
    let bins = bins.unwrap_or(levels);
    if bins == 0 {
        return Err(invalid("bins must be at least 1"));
    }
    let idx = samples.iter().map(|&s| s as usize * bins / levels).collect();
    Ok((idx, bins))
}

/// `sum c/n * log2(n * c / (a * b))` over the nonzero cells, in row-major
/// order.
fn plugin_sum(joint: &[u64], row: &[u64], col: &[u64], n: f64) -> f64 {
    let nc = col.len();
    let mut acc = 0.0;
    for (i, &a) in row.iter().enumerate() {
        if a == 0 {
            continue;
        }
        for (j, &b) in col.iter().enumerate() {
            let c = joint[i * nc + j];
            if c > 0 {
                let c = c as f64;
                acc += c / n * (n * c / (a as f64 * b as f64)).log2();
            }
        }
    }
    acc.max(0.0)
}

/// Plug-in Shannon entropy of the pixel values in bits.
///
/// `bins` defaults to 256 for 8-bit frames and 2 for binary frames; color
/// frames are reduced to luminance first.
pub fn entropy(img: &ImageFrame, bins: Option<usize>) -> Result<f64> {
    let (idx, bins) = binned(img, bins)?;
    let n = idx.len();
    if n == 0 {
        return Err(invalid("entropy of an empty frame"));
    }
    let mut hist = vec![0u64; bins];
    for &i in &idx {
        hist[i] += 1;
    }
    let n = n as f64;
    // Same expression as the diagonal of the mutual-information sum so that
    // I(X, X) and H(X) agree to rounding.
    Ok(hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let c = c as f64;
            c / n * (n * c / (c * c)).log2()
        })
        .sum::<f64>()
        .max(0.0))
}

/// Plug-in mutual information between two aligned frames in bits.
///
/// Each frame is histogrammed on its own: color frames by luminance, 8-bit
/// frames into `bins` equal-width bins (default 256) and binary frames as
/// two levels unless `bins` says otherwise.
pub fn mutual_information(x: &ImageFrame, y: &ImageFrame, bins: Option<usize>) -> Result<f64> {
    if x.width() != y.width() || x.height() != y.height() {
        return Err(invalid(format!(
            "frames differ in size: {}x{} vs {}x{}",
            x.width(),
            x.height(),
            y.width(),
            y.height()
        )));
    }
    let (xi, bx) = binned(x, bins)?;
    let (yi, by) = binned(y, bins)?;
    if xi.is_empty() {
        return Err(invalid("mutual information of empty frames"));
    }
    let mut joint = vec![0u64; bx * by];
    let mut row = vec![0u64; bx];
    let mut col = vec![0u64; by];
    for (&a, &b) in xi.iter().zip(&yi) {
        joint[a * by + b] += 1;
        row[a] += 1;
        col[b] += 1;
    }
    Ok(plugin_sum(&joint, &row, &col, xi.len() as f64))
}

/// Information `h` keeps about `y`: `I(h(y), y)` with `h(y)` replicated back
/// to the size of `y` when `h` shrinks it.
pub fn preserved_info(h: &TransformSpec, y: &ImageFrame, bins: Option<usize>) -> Result<f64> {
    let out = h.apply(y)?;
    let out = if out.width() != y.width() || out.height() != y.height() {
        upsample_to(&out, y.width(), y.height())?
    } else {
        out
    };
    mutual_information(&out, y, bins)
}

/// Mean of [`preserved_info`] over a corpus.
pub fn expected_preserved_info(h: &TransformSpec, corpus: &[ImageFrame], bins: Option<usize>) -> Result<f64> {
    if corpus.is_empty() {
        return Err(invalid("corpus is empty"));
    }
    let per_image = corpus
        .par_iter()
        .map(|y| preserved_info(h, y, bins))
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_image.iter().sum::<f64>() / corpus.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obschannel::transform::ThresholdMode;
    use proptest::prelude::*;

    fn gray(w: usize, h: usize, px: &[u8]) -> ImageFrame {
        ImageFrame::new(w, h, ChannelModel::Gray, px.to_vec()).unwrap()
    }

    #[test]
    fn two_level_example() {
        let x = gray(2, 2, &[0, 0, 255, 255]);
        let mi = mutual_information(&x, &x, Some(2)).unwrap();
        assert!((mi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_frame_carries_nothing() {
        let x = gray(3, 3, &[7; 9]);
        let y = gray(3, 3, &[0, 10, 20, 30, 40, 50, 60, 70, 80]);
        assert_eq!(mutual_information(&x, &y, None).unwrap(), 0.0);
        assert_eq!(entropy(&x, None).unwrap(), 0.0);
    }

    #[test]
    fn size_mismatch() {
        let x = gray(2, 2, &[0; 4]);
        let y = gray(4, 1, &[0; 4]);
        assert!(mutual_information(&x, &y, None).is_err());
    }

    #[test]
    fn identity_preserves_entropy() {
        let y = ImageFrame::gray_from_fn(8, 8, |x, y| ((x * 37 + y * 11) % 256) as u8);
        let k = expected_preserved_info(&TransformSpec::identity(), std::slice::from_ref(&y), None).unwrap();
        assert!((k - entropy(&y, None).unwrap()).abs() < 1e-12);
        assert!(expected_preserved_info(&TransformSpec::identity(), &[], None).is_err());
    }

    #[test]
    fn downsampled_output_is_realigned() {
        let y = ImageFrame::gray_from_fn(8, 6, |x, _| (x * 30) as u8);
        let h: TransformSpec = "downsample:2".parse().unwrap();
        let k = preserved_info(&h, &y, None).unwrap();
        assert!(k > 0.0 && k <= entropy(&y, None).unwrap() + 1e-12);
    }

    fn frame() -> impl Strategy<Value = (ImageFrame, ImageFrame)> {
        (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
            (
                proptest::collection::vec(any::<u8>(), w * h),
                proptest::collection::vec(any::<u8>(), w * h),
            )
                .prop_map(move |(a, b)| (gray(w, h, &a), gray(w, h, &b)))
        })
    }

    proptest! {
        #[test]
        fn mi_is_symmetric_and_bounded((x, y) in frame()) {
            let a = mutual_information(&x, &y, None).unwrap();
            let b = mutual_information(&y, &x, None).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a <= entropy(&x, None).unwrap() + 1e-12);
            let h = entropy(&x, None).unwrap();
            prop_assert!((mutual_information(&x, &x, None).unwrap() - h).abs() < 1e-12);
        }

        #[test]
        fn binarizing_loses_information((x, _) in frame()) {
            let bw = TransformSpec::binarize(ThresholdMode::Otsu);
            let g = preserved_info(&TransformSpec::grayscale(), &x, None).unwrap();
            let b = preserved_info(&bw, &x, None).unwrap();
            prop_assert!(b <= g + 1e-12);
        }
    }
}
