//! Face chip preparation: eye localization, in-plane alignment, cropping.
//!
//! Enrollment images are median filtered; queries go through CLAHE and a
//! binomial blur before detection. Both paths end in a square chip of
//! `PrepParams::chip_size` pixels.

use thiserror::Error;

use crate::haar::{detect_multiscale, CascadeModel, DetectError, DetectParams, FaceBox};
use crate::image::{
    apply_clahe, binomial_blur_3x3, median_filter_3x3, resize_bilinear, rotate_bilinear,
    ClaheParams, GrayImage, ImageError,
};

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("no face found")]
    NoFaceFound,
    #[error("invalid preparation parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Centers of the two eyes in source coordinates; `left.0 < right.0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EyePair {
    pub left: (f64, f64),
    pub right: (f64, f64),
}

impl EyePair {
    /// Tilt of the eye line in degrees; positive when the right eye is lower.
    pub fn angle_deg(&self) -> f64 {
        (self.right.1 - self.left.1)
            .atan2(self.right.0 - self.left.0)
            .to_degrees()
    }

    pub fn midpoint(&self) -> (f64, f64) {
        (
            (self.left.0 + self.right.0) / 2.0,
            (self.left.1 + self.right.1) / 2.0,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaceChip {
    pub image: GrayImage,
    pub source_box: FaceBox,
    pub aligned: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrepParams {
    pub chip_size: usize,
    /// Fraction of the face box height, from the top, searched for eyes.
    pub eye_band: f64,
    /// Tilts beyond this many degrees are left uncorrected.
    pub max_correction_deg: f64,
    pub face_detect: DetectParams,
    /// `min_size` is overridden with `face.w / 8` per face.
    pub eye_detect: DetectParams,
}

impl Default for PrepParams {
    fn default() -> Self {
        Self {
            chip_size: 100,
            eye_band: 0.6,
            max_correction_deg: 45.0,
            face_detect: DetectParams::default(),
            eye_detect: DetectParams::default(),
        }
    }
}

impl PrepParams {
    pub fn validate(&self) -> Result<(), PrepError> {
        if self.chip_size < 8 {
            return Err(PrepError::InvalidParams(format!(
                "chip size {} is below 8",
                self.chip_size
            )));
        }
        if !(self.eye_band > 0.0 && self.eye_band <= 1.0) {
            return Err(PrepError::InvalidParams(format!(
                "eye band {} outside (0, 1]",
                self.eye_band
            )));
        }
        if self.max_correction_deg.is_nan() || self.max_correction_deg < 0.0 {
            return Err(PrepError::InvalidParams(format!(
                "max correction {} is negative",
                self.max_correction_deg
            )));
        }
        Ok(())
    }
}

fn check_box(img: &GrayImage, face: &FaceBox) -> Result<(), ImageError> {
    if face.w == 0 || face.h == 0 || face.x + face.w > img.width() || face.y + face.h > img.height()
    {
        return Err(ImageError::OutOfBounds {
            x: face.x,
            y: face.y,
            w: face.w,
            h: face.h,
            width: img.width(),
            height: img.height(),
        });
    }
    Ok(())
}

/// Picks the strongest eye detection in each half of the face box.
///
/// Returns `None` when the box lies outside the image, the band is smaller
/// than the eye window, or either half has no detection.
pub fn detect_eyes(
    img: &GrayImage,
    face: &FaceBox,
    eye_model: &CascadeModel,
    p: &PrepParams,
) -> Option<EyePair> {
    check_box(img, face).ok()?;
    let band_h = ((face.h as f64 * p.eye_band).round() as usize).clamp(1, face.h);
    let band = img.crop(face.x, face.y, face.w, band_h).ok()?;
    let params = DetectParams {
        min_size: Some(face.w / 8),
        ..p.eye_detect
    };
    // too-small bands simply have no eyes
    let hits = detect_multiscale(eye_model, &band, &params).ok()?;
    let mid = face.w as f64 / 2.0;
    // hits are sorted by descending neighbours, so the first per half wins
    let pick = |left: bool| {
        hits.iter().find(|b| (b.center().0 < mid) == left).map(|b| {
            let (cx, cy) = b.center();
            (face.x as f64 + cx, face.y as f64 + cy)
        })
    };
    Some(EyePair {
        left: pick(true)?,
        right: pick(false)?,
    })
}

/// Rotates the image so the eyes become level.
///
/// Returns the rotated image and `true`, or a copy of the input and `false`
/// when the tilt exceeds `p.max_correction_deg`.
pub fn align_face(img: &GrayImage, eyes: &EyePair, p: &PrepParams) -> (GrayImage, bool) {
    let theta = eyes.angle_deg();
    if theta.abs() > p.max_correction_deg {
        return (img.clone(), false);
    }
    let (cx, cy) = eyes.midpoint();
    (rotate_bilinear(img, -theta, cx, cy), true)
}

/// Crops the face box and resizes it to the chip size.
pub fn extract_chip(
    img: &GrayImage,
    face: &FaceBox,
    p: &PrepParams,
    aligned: bool,
) -> Result<FaceChip, PrepError> {
    check_box(img, face)?;
    let crop = img.crop(face.x, face.y, face.w, face.h)?;
    Ok(FaceChip {
        image: resize_bilinear(&crop, p.chip_size, p.chip_size)?,
        source_box: *face,
        aligned,
    })
}

/// Detection, optional alignment and cropping shared by both paths.
/// `filter` runs on the (aligned) image just before cropping.
fn prepare(
    img: &GrayImage,
    face_model: &CascadeModel,
    eye_model: &CascadeModel,
    p: &PrepParams,
    filter: impl Fn(&GrayImage) -> GrayImage,
) -> Result<FaceChip, PrepError> {
    p.validate()?;
    let faces = match detect_multiscale(face_model, img, &p.face_detect) {
        Ok(f) => f,
        Err(DetectError::ImageTooSmall { .. }) => return Err(PrepError::NoFaceFound),
        Err(e) => return Err(e.into()),
    };
    let face = *faces.first().ok_or(PrepError::NoFaceFound)?;
    let (aligned_img, aligned) = match detect_eyes(img, &face, eye_model, p) {
        Some(eyes) => align_face(img, &eyes, p),
        None => (img.clone(), false),
    };
    extract_chip(&filter(&aligned_img), &face, p, aligned)
}

/// Enrollment path: detect, align, median filter, crop.
pub fn prepare_enrollment(
    img: &GrayImage,
    face_model: &CascadeModel,
    eye_model: &CascadeModel,
    p: &PrepParams,
) -> Result<FaceChip, PrepError> {
    prepare(img, face_model, eye_model, p, median_filter_3x3)
}

/// Query path: CLAHE, binomial blur, then detect, align, crop.
pub fn prepare_query(
    img: &GrayImage,
    face_model: &CascadeModel,
    eye_model: &CascadeModel,
    clahe: &ClaheParams,
    p: &PrepParams,
) -> Result<FaceChip, PrepError> {
    let enhanced = binomial_blur_3x3(&apply_clahe(img, clahe)?);
    prepare(&enhanced, face_model, eye_model, p, GrayImage::clone)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::rotate_point;

    fn gradient(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| ((x * 7 + y * 3) % 256) as u8).unwrap()
    }

    #[test]
    fn level_eyes_leave_image_unchanged() {
        let img = gradient(40, 40);
        let eyes = EyePair {
            left: (10.0, 15.0),
            right: (30.0, 15.0),
        };
        assert_eq!(eyes.angle_deg(), 0.0);
        assert_eq!(align_face(&img, &eyes, &PrepParams::default()), (img, true));
    }

    #[test]
    fn forty_five_degrees_is_corrected() {
        let eyes = EyePair {
            left: (10.0, 10.0),
            right: (20.0, 20.0),
        };
        assert!((eyes.angle_deg() - 45.0).abs() < 1e-12);
        let img = gradient(30, 30);
        let (out, applied) = align_face(&img, &eyes, &PrepParams::default());
        assert!(applied);
        assert_ne!(out, img);
        let steep = EyePair {
            left: (10.0, 10.0),
            right: (15.0, 20.0),
        };
        assert_eq!(
            align_face(&img, &steep, &PrepParams::default()),
            (img, false)
        );
    }

    #[test]
    fn alignment_levels_rotated_annotations() {
        let (l, r) = ((30.0, 40.0), (60.0, 40.0));
        for theta in [-15.0, -10.0, -5.0, 5.0, 10.0, 15.0] {
            let c = (45.0, 50.0);
            let tl = rotate_point(l.0, l.1, theta, c.0, c.1);
            let tr = rotate_point(r.0, r.1, theta, c.0, c.1);
            let eyes = EyePair {
                left: tl,
                right: tr,
            };
            assert!((eyes.angle_deg() - theta).abs() < 1e-9);
            let (mx, my) = eyes.midpoint();
            let al = rotate_point(tl.0, tl.1, -eyes.angle_deg(), mx, my);
            let ar = rotate_point(tr.0, tr.1, -eyes.angle_deg(), mx, my);
            assert!((al.1 - ar.1).abs() <= 1e-9, "theta {theta}");
        }
    }

    #[test]
    fn identity_chip() {
        let img = gradient(130, 120);
        let face = FaceBox::new(10, 5, 100, 100);
        let chip = extract_chip(&img, &face, &PrepParams::default(), false).unwrap();
        assert_eq!(chip.image, img.crop(10, 5, 100, 100).unwrap());
        assert!(!chip.aligned);
    }

    #[test]
    fn upscaled_chip_keeps_corners() {
        let img = gradient(60, 60);
        let face = FaceBox::new(5, 5, 50, 50);
        let chip = extract_chip(&img, &face, &PrepParams::default(), true).unwrap();
        assert_eq!(chip.image.width(), 100);
        assert_eq!(chip.image.get(0, 0), img.get(5, 5));
        assert_eq!(chip.image.get(99, 99), img.get(54, 54));
        assert_eq!(chip.image.get(99, 0), img.get(54, 5));
    }

    #[test]
    fn constant_region_constant_chip() {
        let img = GrayImage::filled(50, 50, 77).unwrap();
        let chip = extract_chip(
            &img,
            &FaceBox::new(3, 3, 31, 40),
            &PrepParams::default(),
            false,
        )
        .unwrap();
        assert!(chip.image.data().iter().all(|&v| v == 77));
    }

    #[test]
    fn out_of_bounds_box() {
        let img = GrayImage::filled(50, 50, 0).unwrap();
        assert!(matches!(
            extract_chip(
                &img,
                &FaceBox::new(30, 0, 30, 30),
                &PrepParams::default(),
                false
            ),
            Err(PrepError::Image(ImageError::OutOfBounds { .. }))
        ));
    }

    #[test]
    fn params_validation() {
        let p = PrepParams {
            chip_size: 7,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = PrepParams {
            eye_band: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        assert!(PrepParams::default().validate().is_ok());
    }
}
