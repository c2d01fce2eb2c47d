use std::collections::BTreeMap;

use super::{lbp_image, LbpParams, LbphError, BINS};
use crate::image::GrayImage;

/// Default order statistic for the unknown-face threshold.
pub const DEFAULT_QUANTILE: f64 = 0.95;

/// One enrolled exemplar: a subject id and its concatenated grid histogram.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaceTemplate {
    pub subject: u32,
    pub histogram: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecognizerModel {
    pub params: LbpParams,
    /// Side length of the square chips the model was trained on.
    pub chip_size: usize,
    pub templates: Vec<FaceTemplate>,
    /// Largest distance still accepted as a match; `+inf` accepts everything.
    pub threshold: f64,
    pub names: BTreeMap<u32, String>,
}

impl RecognizerModel {
    pub fn name_of(&self, subject: u32) -> Option<&str> {
        self.names.get(&subject).map(String::as_str)
    }

    /// Checks the structural invariants a deserialized model must satisfy.
    pub fn validate(&self) -> Result<(), LbphError> {
        self.params.validate()?;
        if self.templates.is_empty() {
            return Err(LbphError::EmptyModel);
        }
        let len = self.params.histogram_len();
        for t in &self.templates {
            if t.histogram.len() != len {
                return Err(LbphError::LengthMismatch(t.histogram.len(), len));
            }
            if !self.names.contains_key(&t.subject) {
                return Err(LbphError::UnnamedSubject(t.subject));
            }
        }
        if self.threshold.is_nan() || self.threshold < 0.0 {
            return Err(LbphError::InvalidParams(format!(
                "threshold {} is not a nonnegative distance",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Result of matching one chip against a model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    /// `None` when the nearest template is farther than the threshold.
    pub subject: Option<u32>,
    pub distance: f64,
    /// Index of the nearest template, reported even for unknown faces.
    pub template: usize,
}

/// Cell boundaries along one axis; the last cell absorbs the remainder.
fn cell_of(len: usize, cells: usize) -> impl Fn(usize) -> usize {
    let size = len / cells;
    move |i| (i / size).min(cells - 1)
}

/// Grid histogram of LBP codes, cells concatenated row-major.
pub fn lbph_describe(chip: &GrayImage, p: &LbpParams) -> Result<Vec<u32>, LbphError> {
    let codes = lbp_image(chip, p)?;
    if codes.width < p.grid_x || codes.height < p.grid_y {
        return Err(LbphError::GridDegenerate {
            grid_x: p.grid_x,
            grid_y: p.grid_y,
            width: codes.width,
            height: codes.height,
        });
    }
    let col = cell_of(codes.width, p.grid_x);
    let row = cell_of(codes.height, p.grid_y);
    let cols: Vec<usize> = (0..codes.width).map(|x| col(x) * BINS).collect();
    let mut hist = vec![0u32; p.histogram_len()];
    for (y, line) in codes.codes.chunks_exact(codes.width).enumerate() {
        let row_base = row(y) * p.grid_x * BINS;
        for (&code, &c) in line.iter().zip(&cols) {
            hist[row_base + c + code as usize] += 1;
        }
    }
    Ok(hist)
}

fn squared_distance(a: &[u32], b: &[u32]) -> u64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.abs_diff(y) as u64;
            d * d
        })
        .sum()
}

/// Exact squared Euclidean distance.
pub fn squared_euclidean(a: &[u32], b: &[u32]) -> Result<u64, LbphError> {
    if a.len() != b.len() {
        return Err(LbphError::LengthMismatch(a.len(), b.len()));
    }
    Ok(squared_distance(a, b))
}

/// Euclidean distance between two histograms, summed exactly in integers.
pub fn euclidean_distance(a: &[u32], b: &[u32]) -> Result<f64, LbphError> {
    if a.len() != b.len() {
        return Err(LbphError::LengthMismatch(a.len(), b.len()));
    }
    Ok((squared_distance(a, b) as f64).sqrt())
}

/// Builds one template per chip. The threshold starts at `+inf`.
pub fn train(
    chips: &[(u32, GrayImage)],
    p: &LbpParams,
    names: &BTreeMap<u32, String>,
) -> Result<RecognizerModel, LbphError> {
    p.validate()?;
    let (_, first) = chips.first().ok_or(LbphError::EmptyTrainingSet)?;
    let size = first.width();
    let mut templates = Vec::with_capacity(chips.len());
    for (subject, chip) in chips {
        if chip.width() != size || chip.height() != size {
            return Err(LbphError::MixedChipSizes(chip.width(), chip.height(), size));
        }
        if !names.contains_key(subject) {
            return Err(LbphError::UnnamedSubject(*subject));
        }
        templates.push(FaceTemplate {
            subject: *subject,
            histogram: lbph_describe(chip, p)?,
        });
    }
    let used: BTreeMap<u32, String> = templates
        .iter()
        .map(|t| (t.subject, names[&t.subject].clone()))
        .collect();
    Ok(RecognizerModel {
        params: *p,
        chip_size: size,
        templates,
        threshold: f64::INFINITY,
        names: used,
    })
}

/// Index and squared distance of the nearest template; ties go to the
/// lowest index.
fn nearest<'a>(
    hist: &[u32],
    templates: impl Iterator<Item = (usize, &'a FaceTemplate)>,
) -> Option<(usize, u64)> {
    templates.fold(None, |best, (i, t)| {
        let d = squared_distance(hist, &t.histogram);
        match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((i, d)),
        }
    })
}

/// Nearest-template identification of a chip of the model's size.
pub fn predict(model: &RecognizerModel, chip: &GrayImage) -> Result<Prediction, LbphError> {
    if model.templates.is_empty() {
        return Err(LbphError::EmptyModel);
    }
    if chip.width() != model.chip_size || chip.height() != model.chip_size {
        return Err(LbphError::ChipSizeMismatch {
            width: chip.width(),
            height: chip.height(),
            expected: model.chip_size,
        });
    }
    let hist = lbph_describe(chip, &model.params)?;
    predict_histogram(model, &hist)
}

/// Like [`predict`] for an already computed descriptor.
pub fn predict_histogram(model: &RecognizerModel, hist: &[u32]) -> Result<Prediction, LbphError> {
    let expected = model.params.histogram_len();
    if hist.len() != expected {
        return Err(LbphError::LengthMismatch(hist.len(), expected));
    }
    let (template, sq) =
        nearest(hist, model.templates.iter().enumerate()).ok_or(LbphError::EmptyModel)?;
    let distance = (sq as f64).sqrt();
    let subject = (distance <= model.threshold).then_some(model.templates[template].subject);
    Ok(Prediction {
        subject,
        distance,
        template,
    })
}

/// Sets the threshold to the `quantile` order statistic of the
/// leave-one-out nearest same-subject distances and returns it.
///
/// With `n` genuine distances sorted ascending the result is element
/// `ceil(quantile * n) - 1`, so a quantile of 1 picks the maximum.
pub fn calibrate_threshold(model: &mut RecognizerModel, quantile: f64) -> Result<f64, LbphError> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(LbphError::BadQuantile(quantile));
    }
    if model.templates.is_empty() {
        return Err(LbphError::EmptyModel);
    }
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for t in &model.templates {
        *counts.entry(t.subject).or_default() += 1;
    }
    if let Some((&s, _)) = counts.iter().find(|(_, &c)| c < 2) {
        return Err(LbphError::InsufficientSamples(s));
    }
    let mut genuine: Vec<u64> = model
        .templates
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let same = model
                .templates
                .iter()
                .enumerate()
                .filter(|&(j, o)| j != i && o.subject == t.subject);
            nearest(&t.histogram, same).map(|(_, d)| d).unwrap_or(0)
        })
        .collect();
    genuine.sort_unstable();
    let n = genuine.len();
    let k = ((quantile * n as f64).ceil() as usize).clamp(1, n) - 1;
    let threshold = (genuine[k] as f64).sqrt();
    model.threshold = threshold;
    Ok(threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lbph::LbpMode;

    fn names(ids: &[u32]) -> BTreeMap<u32, String> {
        ids.iter().map(|&i| (i, format!("s{i}"))).collect()
    }

    fn noise(seed: u64, side: usize) -> GrayImage {
        let mut s = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
        GrayImage::from_fn(side, side, |_, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 56) as u8
        })
        .unwrap()
    }

    #[test]
    fn describe_constant_single_cell() {
        let p = LbpParams {
            grid_x: 1,
            grid_y: 1,
            ..Default::default()
        };
        let h = lbph_describe(&GrayImage::filled(10, 7, 5).unwrap(), &p).unwrap();
        assert_eq!(h.len(), 256);
        assert_eq!(h[255], 8 * 5);
        assert_eq!(h.iter().sum::<u32>(), 40);
    }

    #[test]
    fn describe_two_by_two_cells() {
        let p = LbpParams {
            grid_x: 2,
            grid_y: 2,
            ..Default::default()
        };
        let h = lbph_describe(&noise(3, 10), &p).unwrap();
        for cell in h.chunks(BINS) {
            assert_eq!(cell.iter().sum::<u32>(), 16);
        }
    }

    #[test]
    fn remainder_goes_to_last_cell() {
        // 11 code columns over 2 cells: 5 and 6; 9 rows over 2 cells: 4 and 5
        let p = LbpParams {
            grid_x: 2,
            grid_y: 2,
            ..Default::default()
        };
        let h = lbph_describe(&GrayImage::filled(13, 11, 0).unwrap(), &p).unwrap();
        let sums: Vec<u32> = h.chunks(BINS).map(|c| c.iter().sum()).collect();
        assert_eq!(sums, vec![20, 24, 25, 30]);
    }

    #[test]
    fn degenerate_grid() {
        let p = LbpParams::default();
        assert!(matches!(
            lbph_describe(&GrayImage::filled(9, 20, 0).unwrap(), &p),
            Err(LbphError::GridDegenerate { .. })
        ));
        assert!(lbph_describe(&GrayImage::filled(10, 10, 0).unwrap(), &p).is_ok());
    }

    #[test]
    fn distance_examples() {
        assert_eq!(euclidean_distance(&[0, 3], &[4, 0]).unwrap(), 5.0);
        assert_eq!(euclidean_distance(&[7, 7], &[7, 7]).unwrap(), 0.0);
        assert_eq!(
            euclidean_distance(&[1], &[1, 2]),
            Err(LbphError::LengthMismatch(1, 2))
        );
    }

    #[test]
    fn train_errors() {
        let p = LbpParams::default();
        assert_eq!(
            train(&[], &p, &names(&[])),
            Err(LbphError::EmptyTrainingSet)
        );
        let chips = [
            (0, noise(1, 20)),
            (1, GrayImage::filled(20, 21, 0).unwrap()),
        ];
        assert!(matches!(
            train(&chips, &p, &names(&[0, 1])),
            Err(LbphError::MixedChipSizes(20, 21, 20))
        ));
        assert_eq!(
            train(&chips[..1], &p, &names(&[1])),
            Err(LbphError::UnnamedSubject(0))
        );
    }

    #[test]
    fn identical_chips_distinct_ids() {
        let chip = noise(9, 24);
        let m = train(
            &[(0, chip.clone()), (1, chip)],
            &LbpParams::default(),
            &names(&[0, 1]),
        )
        .unwrap();
        assert_eq!(m.templates.len(), 2);
        assert_eq!(m.templates[0].histogram, m.templates[1].histogram);
        assert!(m.threshold.is_infinite());
    }

    #[test]
    fn predict_exact_match_and_ties() {
        let chips: Vec<(u32, GrayImage)> = (0..4).map(|i| (i % 2, noise(i as u64, 24))).collect();
        let mut m = train(&chips, &LbpParams::default(), &names(&[0, 1])).unwrap();
        let hit = predict(&m, &chips[3].1).unwrap();
        assert_eq!((hit.subject, hit.distance, hit.template), (Some(1), 0.0, 3));

        // a duplicate template ties; the lower index wins
        m.templates.push(m.templates[0].clone());
        m.templates[4].subject = 1;
        assert_eq!(predict(&m, &chips[0].1).unwrap().template, 0);

        m.threshold = 0.0;
        let other = predict(&m, &noise(77, 24)).unwrap();
        assert_eq!(other.subject, None);
        assert!(other.distance > 0.0);
    }

    #[test]
    fn predict_errors() {
        let m = train(&[(0, noise(1, 20))], &LbpParams::default(), &names(&[0])).unwrap();
        assert!(matches!(
            predict(&m, &noise(1, 21)),
            Err(LbphError::ChipSizeMismatch { expected: 20, .. })
        ));
        let empty = RecognizerModel {
            templates: vec![],
            ..m
        };
        assert_eq!(predict(&empty, &noise(1, 20)), Err(LbphError::EmptyModel));
    }

    fn model_from(hists: &[(u32, Vec<u32>)]) -> RecognizerModel {
        let params = LbpParams {
            grid_x: 1,
            grid_y: 1,
            mode: LbpMode::Basic,
            ..Default::default()
        };
        RecognizerModel {
            params,
            chip_size: 10,
            templates: hists
                .iter()
                .map(|(s, h)| {
                    let mut full = h.clone();
                    full.resize(BINS, 0);
                    FaceTemplate {
                        subject: *s,
                        histogram: full,
                    }
                })
                .collect(),
            threshold: f64::INFINITY,
            names: names(&[0, 1]),
        }
    }

    #[test]
    fn calibrate_hand_computed() {
        // subject 0: [0,0] vs [3,4] -> 5 (twice); subject 1: [10,0] vs [10,1] -> 1 (twice)
        // sorted genuine distances [1, 1, 5, 5]
        let mut m = model_from(&[
            (0, vec![0, 0]),
            (0, vec![3, 4]),
            (1, vec![10, 0]),
            (1, vec![10, 1]),
        ]);
        // ceil(0.5 * 4) - 1 = 1 -> 1; ceil(0.75 * 4) - 1 = 2 -> 5
        assert_eq!(calibrate_threshold(&mut m, 0.5).unwrap(), 1.0);
        assert_eq!(calibrate_threshold(&mut m, 0.75).unwrap(), 5.0);
        assert_eq!(calibrate_threshold(&mut m, DEFAULT_QUANTILE).unwrap(), 5.0);
        assert_eq!(calibrate_threshold(&mut m, 0.01).unwrap(), 1.0);
        assert_eq!(m.threshold, 1.0);
    }

    #[test]
    fn calibrate_identical_is_zero() {
        let mut m = model_from(&[(0, vec![2]), (0, vec![2]), (1, vec![2]), (1, vec![2])]);
        assert_eq!(calibrate_threshold(&mut m, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn calibrate_errors() {
        let mut m = model_from(&[(0, vec![2]), (0, vec![2]), (1, vec![2])]);
        assert_eq!(
            calibrate_threshold(&mut m, 0.9),
            Err(LbphError::InsufficientSamples(1))
        );
        assert_eq!(
            calibrate_threshold(&mut m, 0.0),
            Err(LbphError::BadQuantile(0.0))
        );
        assert_eq!(
            calibrate_threshold(&mut m, 1.5),
            Err(LbphError::BadQuantile(1.5))
        );
    }
}
