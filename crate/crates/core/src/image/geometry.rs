use super::{round_to_u8, sample_bilinear, GrayImage, ImageError};

/// Bilinear resize with the pixel-center convention:
/// `src = (dst + 0.5) * (src_dim / out_dim) - 0.5`, clamped to the raster.
pub fn resize_bilinear(
    img: &GrayImage,
    out_w: usize,
    out_h: usize,
) -> Result<GrayImage, ImageError> {
    if out_w == 0 || out_h == 0 {
        return Err(ImageError::ZeroDimension);
    }
    if out_w == img.width() && out_h == img.height() {
        return Ok(img.clone());
    }
    let sx = img.width() as f64 / out_w as f64;
    let sy = img.height() as f64 / out_h as f64;
    let xs: Vec<f64> = (0..out_w).map(|x| (x as f64 + 0.5) * sx - 0.5).collect();
    let mut data = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        for &src_x in &xs {
            data.push(round_to_u8(sample_bilinear(img, src_x, src_y)));
        }
    }
    GrayImage::new(out_w, out_h, data)
}

/// Rotates the image content by `angle_deg` about `(cx, cy)`, keeping the
/// input dimensions.
///
/// Angles are measured in image coordinates (y axis pointing down), so a
/// positive angle turns the content clockwise on screen: a source point `p`
/// lands at `c + R(angle) (p - c)` with `R` the usual rotation matrix. Each
/// output pixel samples the source through the inverse rotation; samples
/// falling outside replicate the nearest edge pixel.
pub fn rotate_bilinear(img: &GrayImage, angle_deg: f64, cx: f64, cy: f64) -> GrayImage {
    if angle_deg == 0.0 {
        return img.clone();
    }
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let mut out = Vec::with_capacity(img.width() * img.height());
    for y in 0..img.height() {
        let dy = y as f64 - cy;
        for x in 0..img.width() {
            let dx = x as f64 - cx;
            // inverse rotation R(-angle)
            let src_x = cx + cos * dx + sin * dy;
            let src_y = cy - sin * dx + cos * dy;
            out.push(round_to_u8(sample_bilinear(img, src_x, src_y)));
        }
    }
    GrayImage::new(img.width(), img.height(), out).expect("dimensions unchanged")
}

/// Maps a point through the same forward rotation `rotate_bilinear` applies.
pub fn rotate_point(x: f64, y: f64, angle_deg: f64, cx: f64, cy: f64) -> (f64, f64) {
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let dx = x - cx;
    let dy = y - cy;
    (cx + cos * dx - sin * dy, cy + sin * dx + cos * dy)
}
