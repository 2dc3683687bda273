//! Resampling the good image onto the poor image grid.

use hkcd_core::image::bilinear_rgb;
use hkcd_core::ImageBuffer;

use crate::alignment::RigidTransform;
use crate::error::{PrepError, Result};

/// Resamples `good` into poor-image coordinates, where `t` maps good
/// coordinates onto poor ones. Output pixel `p` takes the bilinear value of
/// `good` at `t⁻¹(p)`; pixels whose source falls outside `good` are set to 0
/// and counted. Returns the warped image and the blank fraction.
pub fn warp_good_image(
    good: &ImageBuffer,
    t: &RigidTransform,
    target_shape: (usize, usize),
) -> Result<(ImageBuffer, f64)> {
    if !t.is_finite() {
        return Err(PrepError::NonFiniteTransform);
    }
    let (h, w) = target_shape;
    let (gh, gw) = good.dims();
    let inv = t.inverse();
    let src = good.as_raw();
    let mut data = vec![0u8; h * w * 3];
    let mut blank = 0usize;
    for y in 0..h {
        for x in 0..w {
            let [sx, sy] = inv.apply([x as f64, y as f64]);
            match bilinear_rgb(src, gh, gw, sx, sy) {
                Some(v) => {
                    let o = (y * w + x) * 3;
                    for c in 0..3 {
                        data[o + c] = v[c].round().clamp(0.0, 255.0) as u8;
                    }
                }
                None => blank += 1,
            }
        }
    }
    let out = ImageBuffer::new(h, w, data)?;
    Ok((out, blank as f64 / (h * w) as f64))
}
