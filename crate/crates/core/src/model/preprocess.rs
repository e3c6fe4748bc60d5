use super::ModelError;
use crate::diffcore::Tensor;
use crate::render::StaffImage;

/// Resizes to `height` rows (bilinear, half-pixel centers, width scaled by
/// the same factor and rounded) and inverts so ink is near 1 and paper near
/// 0. Output shape `[1, height, width]`.
pub fn preprocess(image: &StaffImage, height: usize) -> Result<Tensor, ModelError> {
    let (w, h) = (image.width(), image.height());
    if w == 0 || h == 0 || height == 0 {
        return Err(ModelError::EmptyImage);
    }
    if h < 8 {
        return Err(ModelError::ImageTooSmall { width: w, height: h });
    }
    let scale = height as f64 / h as f64;
    let out_w = ((w as f64 * scale).round() as usize).max(1);
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / height as f64;
    let taps = |dst: usize, s: f64, n: usize| {
        let src = ((dst as f64 + 0.5) * s - 0.5).clamp(0.0, (n - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        (lo, hi, src - lo as f64)
    };
    let cols: Vec<_> = (0..out_w).map(|x| taps(x, sx, w)).collect();
    let mut data = Vec::with_capacity(height * out_w);
    for y in 0..height {
        let (y0, y1, fy) = taps(y, sy, h);
        for &(x0, x1, fx) in &cols {
            let top = image.get(x0, y0) * (1.0 - fx) + image.get(x1, y0) * fx;
            let bottom = image.get(x0, y1) * (1.0 - fx) + image.get(x1, y1) * fx;
            data.push(1.0 - (top * (1.0 - fy) + bottom * fy));
        }
    }
    Ok(Tensor::new(vec![1, height, out_w], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column_image(w: usize, h: usize, col: usize) -> StaffImage {
        let v: Vec<f64> = (0..w * h).map(|i| if i % w == col { 0.0 } else { 1.0 }).collect();
        StaffImage::from_values(w, h, &v)
    }

    #[test]
    fn white_is_zero() {
        let t = preprocess(&StaffImage::blank(50, 160), 128).unwrap();
        assert_eq!(t.shape(), [1, 128, 40]);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_height_is_fixed_and_width_scales() {
        for w in [64, 100, 513] {
            let t = preprocess(&StaffImage::blank(w, 160), 128).unwrap();
            assert_eq!(t.shape(), [1, 128, (w as f64 * 0.8).round() as usize]);
        }
        assert!(matches!(preprocess(&StaffImage::blank(0, 0), 128), Err(ModelError::EmptyImage)));
        assert!(preprocess(&StaffImage::blank(10, 4), 128).is_err());
    }

    /// Direct 2-D bilinear lookup, written without the separable taps.
    fn reference(img: &StaffImage, out_h: usize, out_w: usize, x: usize, y: usize) -> f64 {
        let fx = ((x as f64 + 0.5) * img.width() as f64 / out_w as f64 - 0.5).clamp(0.0, (img.width() - 1) as f64);
        let fy = ((y as f64 + 0.5) * img.height() as f64 / out_h as f64 - 0.5).clamp(0.0, (img.height() - 1) as f64);
        let mut acc = 0.0;
        for yy in 0..img.height() {
            for xx in 0..img.width() {
                let wx = (1.0 - (fx - xx as f64).abs()).max(0.0);
                let wy = (1.0 - (fy - yy as f64).abs()).max(0.0);
                acc += wx * wy * (1.0 - img.get(xx, yy));
            }
        }
        acc
    }

    #[test]
    fn matches_reference_bilinear() {
        let v: Vec<f64> = (0..30 * 20).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        let img = StaffImage::from_values(30, 20, &v);
        let t = preprocess(&img, 12).unwrap();
        let (h, w) = (t.shape()[1], t.shape()[2]);
        for y in 0..h {
            for x in 0..w {
                assert!((t.data()[y * w + x] - reference(&img, h, w, x, y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn black_column_stays_the_brightest() {
        for col in [0, 7, 33, 59] {
            let t = preprocess(&column_image(60, 160, col), 128).unwrap();
            let w = t.shape()[2];
            let sums: Vec<f64> = (0..w).map(|x| (0..128).map(|y| t.data()[y * w + x]).sum()).collect();
            let best = (0..w).max_by(|&a, &b| sums[a].total_cmp(&sums[b])).unwrap();
            let expected = ((col as f64 + 0.5) * 0.8 - 0.5).round().clamp(0.0, (w - 1) as f64) as usize;
            assert!(best.abs_diff(expected) <= 1, "col {col}: {best} vs {expected}");
            assert!(sums[best] > 0.3 * 128.0, "{}", sums[best]);
        }
    }
}
