use std::f64::consts::PI;

use super::{LbpMode, LbpParams, LbphError};
use crate::image::GrayImage;

/// Neighbour offsets for the 3×3 operator, clockwise from the top-left.
const BASIC_OFFSETS: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
];

/// Image of LBP codes, `2R` narrower and shorter than its source.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LbpImage {
    pub width: usize,
    pub height: usize,
    pub codes: Vec<u8>,
}

impl LbpImage {
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.codes[y * self.width + x]
    }
}

/// Code of a 3×3 window given row-major (`window[4]` is the center).
///
/// Bit `p` is set when neighbour `p` is at least the center; neighbours are
/// numbered clockwise from the top-left and bit `p` weighs `2^p`.
pub fn lbp_code_basic(window: &[u8; 9]) -> u8 {
    let center = window[4];
    // row-major indices of the clockwise neighbours
    const ORDER: [usize; 8] = [0, 1, 2, 5, 8, 7, 6, 3];
    ORDER.iter().enumerate().fold(0u8, |code, (bit, &i)| {
        code | (u8::from(window[i] >= center) << bit)
    })
}

/// Offsets of the circular sampling points, snapped to the grid when they
/// are within rounding noise of an integer (so axis samples stay exact).
fn circle_offsets(neighbors: usize, radius: usize) -> Vec<(f64, f64)> {
    let snap = |v: f64| {
        if (v - v.round()).abs() < 1e-9 {
            v.round()
        } else {
            v
        }
    };
    (0..neighbors)
        .map(|p| {
            let angle = 2.0 * PI * p as f64 / neighbors as f64;
            (
                snap(radius as f64 * angle.cos()),
                snap(-(radius as f64) * angle.sin()),
            )
        })
        .collect()
}

#[inline]
fn interpolate(img: &GrayImage, x: f64, y: f64) -> f64 {
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
    let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
    let a = img.get(x0, y0) as f64;
    let b = img.get(x1, y0) as f64;
    let c = img.get(x0, y1) as f64;
    let d = img.get(x1, y1) as f64;
    let top = a + fx * (b - a);
    let bottom = c + fx * (d - c);
    top + fy * (bottom - top)
}

fn circular_code(img: &GrayImage, xc: usize, yc: usize, offsets: &[(f64, f64)]) -> u32 {
    let center = img.get(xc, yc) as f64;
    offsets
        .iter()
        .enumerate()
        .fold(0u32, |code, (bit, &(dx, dy))| {
            let v = interpolate(img, xc as f64 + dx, yc as f64 + dy);
            code | (u32::from(v >= center) << bit)
        })
}

/// Circular LBP code with `neighbors` samples (at most 32) at `radius`.
///
/// Sample `p` sits at `(xc + R cos(2πp/P), yc − R sin(2πp/P))`, i.e. counting
/// from the +x axis; off-grid samples are bilinearly interpolated and
/// compared unrounded.
pub fn lbp_code_circular(
    img: &GrayImage,
    xc: usize,
    yc: usize,
    neighbors: usize,
    radius: usize,
) -> Result<u32, LbphError> {
    if neighbors == 0 || neighbors > 32 || radius == 0 {
        return Err(LbphError::InvalidParams(format!(
            "P={neighbors}, R={radius} unsupported"
        )));
    }
    if xc < radius || yc < radius || xc + radius >= img.width() || yc + radius >= img.height() {
        return Err(LbphError::OutOfBounds {
            x: xc,
            y: yc,
            radius,
        });
    }
    Ok(circular_code(
        img,
        xc,
        yc,
        &circle_offsets(neighbors, radius),
    ))
}

/// Codes for every pixel with a complete neighbourhood.
pub fn lbp_image(chip: &GrayImage, p: &LbpParams) -> Result<LbpImage, LbphError> {
    p.validate()?;
    let r = p.radius;
    if chip.width() <= 2 * r || chip.height() <= 2 * r {
        return Err(LbphError::ChipTooSmall {
            width: chip.width(),
            height: chip.height(),
            radius: r,
        });
    }
    let (w, h) = (chip.width() - 2 * r, chip.height() - 2 * r);
    let mut codes = Vec::with_capacity(w * h);
    match p.mode {
        LbpMode::Basic => {
            for y in 1..=h {
                for x in 1..=w {
                    let center = chip.get(x, y);
                    let code = BASIC_OFFSETS
                        .iter()
                        .enumerate()
                        .fold(0u8, |c, (bit, &(dx, dy))| {
                            let v =
                                chip.get((x as isize + dx) as usize, (y as isize + dy) as usize);
                            c | (u8::from(v >= center) << bit)
                        });
                    codes.push(code);
                }
            }
        }
        LbpMode::Circular => {
            let offsets = circle_offsets(p.neighbors, r);
            for y in r..r + h {
                for x in r..r + w {
                    codes.push(circular_code(chip, x, y, &offsets) as u8);
                }
            }
        }
    }
    Ok(LbpImage {
        width: w,
        height: h,
        codes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_constant_window() {
        assert_eq!(lbp_code_basic(&[7; 9]), 255);
    }

    #[test]
    fn basic_dominant_center() {
        assert_eq!(lbp_code_basic(&[1, 2, 3, 4, 200, 5, 6, 7, 8]), 0);
    }

    #[test]
    fn basic_hand_evaluated() {
        // clockwise from top-left: [80, 95, 100, 90, 70, 60, 95, 88]
        // bits [0,1,1,1,0,0,1,0] -> 2 + 4 + 8 + 64 = 78
        let window = [80, 95, 100, 88, 90, 90, 95, 60, 70];
        assert_eq!(lbp_code_basic(&window), 78);
    }

    #[test]
    fn circular_constant() {
        let img = GrayImage::filled(7, 7, 40).unwrap();
        assert_eq!(lbp_code_circular(&img, 3, 3, 8, 1).unwrap(), 255);
        assert_eq!(lbp_code_circular(&img, 3, 3, 16, 2).unwrap(), 0xffff);
    }

    #[test]
    fn circular_four_samples_hit_axes() {
        // right 50 (>= 30), top 10, left 30 (>= 30), bottom 20
        let img = GrayImage::new(3, 3, vec![0, 10, 0, 30, 30, 50, 0, 20, 0]).unwrap();
        assert_eq!(lbp_code_circular(&img, 1, 1, 4, 1).unwrap(), 0b0101);
    }

    #[test]
    fn circular_eight_samples_hand_interpolated() {
        // 3x3 with distinct diagonal values, center 100:
        //   200  90  10
        //    95 100 120
        //     0 105  60
        // diagonal samples sit √2/2 from the center on each axis; with
        // f = 1 - √2/2 the corner weights are (1-f)^2 = 0.5 for the far
        // corner, f(1-f) ≈ 0.2071 for the two edge neighbours, f^2 ≈ 0.0858
        // for the center:
        //   p=1 top-right:    0.5*10  + 0.2071*(90+120)  + 0.0858*100 ≈ 57.1  -> 0
        //   p=3 top-left:     0.5*200 + 0.2071*(90+95)   + 0.0858*100 ≈ 146.9 -> 1
        //   p=5 bottom-left:  0.5*0   + 0.2071*(95+105)  + 0.0858*100 ≈ 50.0  -> 0
        //   p=7 bottom-right: 0.5*60  + 0.2071*(105+120) + 0.0858*100 ≈ 85.2  -> 0
        // axis samples: right 120 -> 1, top 90 -> 0, left 95 -> 0, bottom 105 -> 1
        // bits p=0..7: [1, 0, 0, 1, 0, 0, 1, 0] -> 1 + 8 + 64 = 73
        let img = GrayImage::new(3, 3, vec![200, 90, 10, 95, 100, 120, 0, 105, 60]).unwrap();
        assert_eq!(lbp_code_circular(&img, 1, 1, 8, 1).unwrap(), 73);
    }

    #[test]
    fn circular_border() {
        let img = GrayImage::filled(5, 5, 0).unwrap();
        assert!(matches!(
            lbp_code_circular(&img, 1, 2, 8, 2),
            Err(LbphError::OutOfBounds { .. })
        ));
        assert!(lbp_code_circular(&img, 2, 2, 8, 2).is_ok());
    }

    #[test]
    fn image_dimensions() {
        let p = LbpParams::default();
        let out = lbp_image(&GrayImage::filled(3, 3, 1).unwrap(), &p).unwrap();
        assert_eq!((out.width, out.height), (1, 1));
        assert_eq!(out.codes, vec![255]);
        let p2 = LbpParams { radius: 2, ..p };
        let out = lbp_image(&GrayImage::filled(9, 6, 1).unwrap(), &p2).unwrap();
        assert_eq!((out.width, out.height), (5, 2));
        assert!(matches!(
            lbp_image(&GrayImage::filled(4, 9, 1).unwrap(), &p2),
            Err(LbphError::ChipTooSmall { .. })
        ));
    }

    #[test]
    fn basic_and_circular_agree_on_constant_images() {
        let img = GrayImage::filled(6, 6, 3).unwrap();
        let basic = lbp_image(
            &img,
            &LbpParams {
                mode: LbpMode::Basic,
                ..Default::default()
            },
        )
        .unwrap();
        let circ = lbp_image(&img, &LbpParams::default()).unwrap();
        assert_eq!(basic, circ);
    }
}
