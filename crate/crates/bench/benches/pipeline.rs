use std::path::{Path, PathBuf};

use criterion::{criterion_group, criterion_main, Criterion};
use facerec_core::haar::{detect_multiscale, load_cascade, DetectParams};
use facerec_core::image::{apply_clahe, binomial_blur_3x3, read_pgm, ClaheParams, GrayImage};
use facerec_core::lbph::{lbph_describe, predict, train, LbpParams};
use facerec_core::prep::{detect_eyes, prepare_enrollment, prepare_query, PrepParams};

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(rel)
}

/// An ORL face centered on a flat 300x300 frame.
fn frame(subject: usize, image: usize) -> GrayImage {
    let face = read_pgm(data(&format!("orl/s{subject}/{image}.pgm"))).unwrap();
    let mut canvas = GrayImage::filled(300, 300, 128).unwrap();
    canvas.paste(&face, (300 - face.width()) / 2, (300 - face.height()) / 2);
    canvas
}

fn pipeline(c: &mut Criterion) {
    let faces = load_cascade(data("cascades/haarcascade_frontalface_default.xml")).unwrap();
    let eyes = load_cascade(data("cascades/haarcascade_eye.xml")).unwrap();
    let prep = PrepParams::default();
    let clahe = ClaheParams::default();
    let lbp = LbpParams::default();
    let img = frame(1, 1);

    let samples: Vec<(u32, GrayImage)> = (1..=10)
        .flat_map(|s| (1..=3).map(move |i| (s, i)))
        .map(|(s, i)| {
            let chip = prepare_enrollment(&frame(s, i), &faces, &eyes, &prep).unwrap();
            (s as u32 - 1, chip.image)
        })
        .collect();
    let names = (0..10).map(|i| (i, format!("s{}", i + 1))).collect();
    let model = train(&samples, &lbp, &names).unwrap();
    let chip = &samples[0].1;

    c.bench_function("clahe_300", |b| {
        b.iter(|| apply_clahe(&img, &clahe).unwrap())
    });
    c.bench_function("blur_300", |b| b.iter(|| binomial_blur_3x3(&img)));
    c.bench_function("detect_300", |b| {
        b.iter(|| detect_multiscale(&faces, &img, &DetectParams::default()).unwrap())
    });
    let face = detect_multiscale(&faces, &img, &prep.face_detect).unwrap()[0];
    c.bench_function("eyes_in_face", |b| {
        b.iter(|| detect_eyes(&img, &face, &eyes, &prep))
    });
    c.bench_function("describe_100", |b| {
        b.iter(|| lbph_describe(chip, &lbp).unwrap())
    });
    c.bench_function("predict_30_templates", |b| {
        b.iter(|| predict(&model, chip).unwrap())
    });
    c.bench_function("query_frame_300", |b| {
        b.iter(|| {
            let q = prepare_query(&img, &faces, &eyes, &clahe, &prep).unwrap();
            predict(&model, &q.image).unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = pipeline
}
criterion_main!(benches);
