use crate::scene::{AlphaMask, ImageBuffer};
use crate::Result;

/// Reported in place of +∞ for identical images.
pub const PSNR_CAP: f64 = 99.0;

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

/// Peak signal-to-noise ratio in dB with both images clamped to `[0, 1]`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.same_size(b)?;
    let se: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = x.clamp(0.0, 1.0) - y.clamp(0.0, 1.0);
            d * d
        })
        .sum();
    Ok(psnr_from_mse(se / a.data.len() as f64))
}

/// PSNR over foreground pixels only. An empty mask falls back to the whole
/// image.
pub fn masked_psnr(a: &ImageBuffer, b: &ImageBuffer, mask: &AlphaMask) -> Result<f64> {
    a.same_size(b)?;
    if mask.foreground_count() == 0 {
        return psnr(a, b);
    }
    let mut se = 0.0;
    let mut n = 0usize;
    for i in 0..a.pixel_count() {
        if !mask.is_foreground(i) {
            continue;
        }
        for c in 0..3 {
            let d = a.data[i * 3 + c].clamp(0.0, 1.0) - b.data[i * 3 + c].clamp(0.0, 1.0);
            se += d * d;
        }
        n += 3;
    }
    Ok(psnr_from_mse(se / n as f64))
}
