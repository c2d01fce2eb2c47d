use facerec_core::image::{
    apply_clahe, build_integrals, decode_pgm, encode_pgm, resize_bilinear, rotate_bilinear,
    rotate_point, ClaheParams, GrayImage,
};
use proptest::prelude::*;

fn image(max_w: usize, max_h: usize) -> impl Strategy<Value = GrayImage> {
    (1..=max_w, 1..=max_h).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), w * h)
            .prop_map(move |data| GrayImage::new(w, h, data).unwrap())
    })
}

fn naive_sum(img: &GrayImage, x: usize, y: usize, w: usize, h: usize, squared: bool) -> u64 {
    let mut s = 0u64;
    for yy in y..y + h {
        for xx in x..x + w {
            let v = img.get(xx, yy) as u64;
            s += if squared { v * v } else { v };
        }
    }
    s
}

proptest! {
    #[test]
    fn rect_sums_match_loops(img in image(24, 24), a in any::<(u16, u16, u16, u16)>()) {
        let ii = build_integrals(&img);
        let x = a.0 as usize % img.width();
        let y = a.1 as usize % img.height();
        let w = a.2 as usize % (img.width() - x + 1);
        let h = a.3 as usize % (img.height() - y + 1);
        for squared in [false, true] {
            prop_assert_eq!(ii.rect_sum(x, y, w, h, squared).unwrap(), naive_sum(&img, x, y, w, h, squared));
        }
        prop_assert!(ii.rect_sum(x, y, img.width() - x + 1, h, false).is_err());
    }

    #[test]
    fn pgm_round_trip(img in image(40, 40)) {
        prop_assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn clahe_keeps_shape(img in image(48, 48), tiles in 1usize..5, clip in 0.5f64..8.0) {
        let p = ClaheParams { tiles_x: tiles, tiles_y: tiles, clip_limit: clip };
        if img.width() < tiles || img.height() < tiles {
            prop_assert!(apply_clahe(&img, &p).is_err());
        } else {
            let out = apply_clahe(&img, &p).unwrap();
            prop_assert_eq!((out.width(), out.height()), (img.width(), img.height()));
        }
    }

    /// With one tile the mapping is a single monotone LUT.
    #[test]
    fn single_tile_clahe_is_monotone(img in image(32, 32), clip in 0.5f64..8.0) {
        let p = ClaheParams { tiles_x: 1, tiles_y: 1, clip_limit: clip };
        let out = apply_clahe(&img, &p).unwrap();
        let mut pairs: Vec<(u8, u8)> = img.data().iter().copied().zip(out.data().iter().copied()).collect();
        pairs.sort_unstable();
        for w in pairs.windows(2) {
            prop_assert!(w[0].1 <= w[1].1, "{:?}", w);
        }
    }

    #[test]
    fn rotate_point_inverts(x in -50f64..50.0, y in -50f64..50.0, a in -180f64..180.0) {
        let (rx, ry) = rotate_point(x, y, a, 3.0, -2.0);
        let (bx, by) = rotate_point(rx, ry, -a, 3.0, -2.0);
        prop_assert!((bx - x).abs() < 1e-9 && (by - y).abs() < 1e-9);
    }

    #[test]
    fn same_size_resize_is_identity(img in image(30, 30)) {
        prop_assert_eq!(resize_bilinear(&img, img.width(), img.height()).unwrap(), img);
    }
}

#[test]
fn clockwise_rotation_moves_right_pixel_down() {
    // y points down: +90 degrees takes (cx+1, cy) to (cx, cy+1)
    let (x, y) = rotate_point(6.0, 5.0, 90.0, 5.0, 5.0);
    assert!((x - 5.0).abs() < 1e-12 && (y - 6.0).abs() < 1e-12);

    let mut img = GrayImage::filled(11, 11, 0).unwrap();
    img.set(8, 5, 200);
    let out = rotate_bilinear(&img, 90.0, 5.0, 5.0);
    assert_eq!(out.get(5, 8), 200);
    assert_eq!(out.get(8, 5), 0);
}

#[test]
fn invalid_clahe_params_rejected() {
    let img = GrayImage::filled(8, 8, 10).unwrap();
    for p in [
        ClaheParams {
            tiles_x: 0,
            tiles_y: 1,
            clip_limit: 2.0,
        },
        ClaheParams {
            tiles_x: 1,
            tiles_y: 1,
            clip_limit: 0.0,
        },
        ClaheParams {
            tiles_x: 1,
            tiles_y: 1,
            clip_limit: f64::NAN,
        },
    ] {
        assert!(apply_clahe(&img, &p).is_err());
    }
}
