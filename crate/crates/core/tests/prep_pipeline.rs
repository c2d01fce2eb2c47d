use std::path::{Path, PathBuf};

use facerec_core::haar::load_cascade;
use facerec_core::image::{read_pgm, rotate_bilinear, ClaheParams, GrayImage};
use facerec_core::prep::{
    align_face, prepare_enrollment, prepare_query, EyePair, PrepError, PrepParams,
};

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(rel)
}

fn frame(subject: usize, image: usize) -> GrayImage {
    let face = read_pgm(data(&format!("orl/s{subject}/{image}.pgm"))).unwrap();
    let mut canvas = GrayImage::filled(300, 300, 128).unwrap();
    canvas.paste(&face, (300 - face.width()) / 2, (300 - face.height()) / 2);
    canvas
}

#[test]
fn both_paths_produce_chips_around_the_face() {
    let faces = load_cascade(data("cascades/haarcascade_frontalface_default.xml")).unwrap();
    let eyes = load_cascade(data("cascades/haarcascade_eye.xml")).unwrap();
    let p = PrepParams::default();
    for s in [1, 7, 13] {
        let img = frame(s, 1);
        let e = prepare_enrollment(&img, &faces, &eyes, &p).unwrap();
        let q = prepare_query(&img, &faces, &eyes, &ClaheParams::default(), &p).unwrap();
        for chip in [&e, &q] {
            assert_eq!((chip.image.width(), chip.image.height()), (100, 100));
            let (cx, cy) = chip.source_box.center();
            assert!(
                (cx - 150.0).abs() < 30.0 && (cy - 150.0).abs() < 30.0,
                "{:?}",
                chip.source_box
            );
        }
    }

    let blank = GrayImage::filled(200, 200, 40).unwrap();
    assert!(matches!(
        prepare_enrollment(&blank, &faces, &eyes, &p),
        Err(PrepError::NoFaceFound)
    ));
    let tiny = GrayImage::filled(10, 10, 40).unwrap();
    assert!(matches!(
        prepare_query(&tiny, &faces, &eyes, &ClaheParams::default(), &p),
        Err(PrepError::NoFaceFound)
    ));
}

/// Two dark blobs tilted by a known angle end up on one row.
#[test]
fn alignment_levels_synthetic_eyes() {
    let p = PrepParams::default();
    let mut level = GrayImage::filled(120, 120, 200).unwrap();
    for (ex, ey) in [(40usize, 50usize), (80, 50)] {
        for y in ey - 3..=ey + 3 {
            for x in ex - 3..=ex + 3 {
                level.set(x, y, 0);
            }
        }
    }
    for angle in [-20.0f64, -8.0, 8.0, 20.0] {
        let tilted = rotate_bilinear(&level, angle, 60.0, 50.0);
        let (s, c) = angle.to_radians().sin_cos();
        let eyes = EyePair {
            left: (60.0 - 20.0 * c, 50.0 - 20.0 * s),
            right: (60.0 + 20.0 * c, 50.0 + 20.0 * s),
        };
        assert!((eyes.angle_deg() - angle).abs() < 1e-9);
        let (out, aligned) = align_face(&tilted, &eyes, &p);
        assert!(aligned);
        let row_of = |x0: usize, x1: usize| {
            let (mut m, mut n) = (0.0, 0.0);
            for y in 0..120 {
                for x in x0..x1 {
                    let w = 255.0 - out.get(x, y) as f64 - 55.0;
                    if w > 0.0 {
                        m += w * y as f64;
                        n += w;
                    }
                }
            }
            m / n
        };
        let (l, r) = (row_of(25, 60), row_of(60, 95));
        assert!((l - r).abs() <= 1.0, "angle {angle}: rows {l:.2} vs {r:.2}");
    }

    let steep = EyePair {
        left: (0.0, 0.0),
        right: (10.0, 20.0),
    };
    assert!(!align_face(&level, &steep, &p).1);
}
