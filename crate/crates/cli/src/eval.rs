//! Accuracy experiments: resolution, rotation and training-set size.
//!
//! Every dataset image is turned into an enrollment chip and (per rotation
//! angle) a query chip once. Squared distances between degraded query
//! descriptors and enrollment descriptors are cached as dense matrices, so
//! each repeat only draws a split, samples frames and looks up minima.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use facerec_core::db::{parse_subject_name, DbError};
use facerec_core::haar::{detect_multiscale, CascadeModel, DetectError, FaceBox};
use facerec_core::image::{
    apply_clahe, binomial_blur_3x3, median_filter_3x3, read_pgm, resize_bilinear, rotate_bilinear,
    ClaheParams, GrayImage, ImageError,
};
use facerec_core::lbph::{lbph_describe, squared_euclidean, LbpParams, LbphError};
use facerec_core::prep::{align_face, detect_eyes, extract_chip, PrepError, PrepParams};
use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: ImageError },
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Prep(#[from] PrepError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Lbph(#[from] LbphError),
    #[error(transparent)]
    ImageOp(#[from] ImageError),
}

/// Subjects and their image files.
#[derive(Clone, Debug)]
pub struct Dataset {
    /// Subject names in byte order; a subject's id is its index.
    pub subjects: Vec<String>,
    /// `(subject id, path)`, grouped by subject.
    pub images: Vec<(u32, PathBuf)>,
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let io = |source| EvalError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        out.push(entry.map_err(io)?.path());
    }
    out.sort();
    Ok(out)
}

fn is_pgm(p: &Path) -> bool {
    p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

impl Dataset {
    /// Reads a subject-per-subdirectory layout, or a flat directory of
    /// `<name>_<k>.pgm` files when there are no subdirectories.
    pub fn load(dir: &Path) -> Result<Self, EvalError> {
        let entries = read_dir_sorted(dir)?;
        let mut by_subject: Vec<(String, Vec<PathBuf>)> = Vec::new();
        if entries.iter().any(|p| p.is_dir()) {
            for sub in entries.iter().filter(|p| p.is_dir()) {
                let files: Vec<PathBuf> = read_dir_sorted(sub)?
                    .into_iter()
                    .filter(|p| is_pgm(p))
                    .collect();
                if !files.is_empty() {
                    let name = sub.file_name().unwrap_or_default().to_string_lossy();
                    by_subject.push((name.into_owned(), files));
                }
            }
        } else {
            let mut map: HashMap<String, Vec<PathBuf>> = HashMap::new();
            for f in entries.into_iter().filter(|p| is_pgm(p)) {
                let file = f
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned();
                map.entry(parse_subject_name(&file)?).or_default().push(f);
            }
            by_subject = map.into_iter().collect();
        }
        by_subject.sort();
        let subjects = by_subject.iter().map(|(n, _)| n.clone()).collect();
        let images = by_subject
            .into_iter()
            .enumerate()
            .flat_map(|(id, (_, files))| files.into_iter().map(move |f| (id as u32, f)))
            .collect();
        Ok(Self { subjects, images })
    }

    fn per_subject(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.subjects.len()];
        for (i, (s, _)) in self.images.iter().enumerate() {
            groups[*s as usize].push(i);
        }
        groups
    }
}

/// Chip extraction for dataset images, which show a face filling most of
/// the frame.
///
/// Images are padded by edge replication so the detector sees some margin;
/// when nothing is detected a centered square over the original image is
/// used instead.
#[derive(Clone, Debug)]
pub struct ChipPipeline {
    pub prep: PrepParams,
    pub clahe: ClaheParams,
    pub pad: usize,
}

impl Default for ChipPipeline {
    fn default() -> Self {
        Self {
            prep: PrepParams::default(),
            clahe: ClaheParams::default(),
            pad: 10,
        }
    }
}

/// Chip plus whether the face box came from the detector.
pub struct PreparedChip {
    pub image: GrayImage,
    pub detected: bool,
    pub aligned: bool,
}

fn pad_edges(img: &GrayImage, pad: usize) -> GrayImage {
    let p = pad as isize;
    GrayImage::from_fn(img.width() + 2 * pad, img.height() + 2 * pad, |x, y| {
        img.get_clamped(x as isize - p, y as isize - p)
    })
    .expect("padded dimensions are nonzero")
}

impl ChipPipeline {
    fn chip(
        &self,
        framed: &GrayImage,
        original: (usize, usize),
        faces: &CascadeModel,
        eyes: &CascadeModel,
        align: bool,
        filter: impl Fn(&GrayImage) -> GrayImage,
    ) -> Result<PreparedChip, EvalError> {
        let found = match detect_multiscale(faces, framed, &self.prep.face_detect) {
            Ok(f) => f.first().copied(),
            Err(DetectError::ImageTooSmall { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        let face = found.unwrap_or_else(|| {
            let side = original.0.min(original.1);
            FaceBox::new(
                self.pad + (original.0 - side) / 2,
                self.pad + (original.1 - side) / 2,
                side,
                side,
            )
        });
        let pair = if align {
            detect_eyes(framed, &face, eyes, &self.prep)
        } else {
            None
        };
        let (img, aligned) = match pair {
            Some(e) => align_face(framed, &e, &self.prep),
            None => (framed.clone(), false),
        };
        let chip = extract_chip(&filter(&img), &face, &self.prep, aligned)?;
        Ok(PreparedChip {
            image: chip.image,
            detected: found.is_some(),
            aligned,
        })
    }

    /// Enrollment path: detect, align, median filter, crop.
    pub fn enrollment(
        &self,
        img: &GrayImage,
        faces: &CascadeModel,
        eyes: &CascadeModel,
    ) -> Result<PreparedChip, EvalError> {
        let framed = pad_edges(img, self.pad);
        let dims = (img.width(), img.height());
        self.chip(&framed, dims, faces, eyes, true, median_filter_3x3)
    }

    /// Query path on the image rotated by `angle_deg` about its center:
    /// CLAHE, blur, detect, optionally align, crop.
    pub fn query(
        &self,
        img: &GrayImage,
        angle_deg: f64,
        align: bool,
        faces: &CascadeModel,
        eyes: &CascadeModel,
    ) -> Result<PreparedChip, EvalError> {
        let (cx, cy) = (
            (img.width() as f64 - 1.0) / 2.0,
            (img.height() as f64 - 1.0) / 2.0,
        );
        let turned = rotate_bilinear(img, angle_deg, cx, cy);
        let framed = pad_edges(&turned, self.pad);
        let enhanced = binomial_blur_3x3(&apply_clahe(&framed, &self.clahe)?);
        let dims = (img.width(), img.height());
        self.chip(&enhanced, dims, faces, eyes, align, GrayImage::clone)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub train_per_subject: usize,
    pub resolutions: Vec<usize>,
    pub repeats: usize,
    pub frames_per_repeat: usize,
    pub seed: u64,
    pub rotations: Vec<f64>,
    /// Run eye alignment on query chips.
    pub align: bool,
    /// Query with the training chips themselves instead of held-out images.
    pub self_test: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            train_per_subject: 8,
            resolutions: vec![15, 20, 30, 35, 45],
            repeats: 10,
            frames_per_repeat: 200,
            seed: 0,
            rotations: vec![-30.0, 0.0, 30.0],
            align: true,
            self_test: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidConfig(m.to_string()));
        if self.train_per_subject == 0 {
            return bad("trainPerSubject must be at least 1");
        }
        if self.resolutions.is_empty() || self.resolutions.iter().any(|&r| r < 8) {
            return bad("resolutions must be nonempty and all at least 8");
        }
        if self.repeats == 0 || self.frames_per_repeat == 0 {
            return bad("repeats and framesPerRepeat must be at least 1");
        }
        Ok(())
    }
}

/// Tally for one experimental condition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub correct: u64,
    pub wrong: u64,
}

impl Tally {
    /// Percentage of correct identifications.
    pub fn rate(&self) -> f64 {
        let total = self.correct + self.wrong;
        if total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / total as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalRow {
    pub resolution: usize,
    pub tally: Tally,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationRow {
    pub angle_deg: f64,
    pub tally: Tally,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainSizeRow {
    pub train_per_subject: usize,
    pub resolution: usize,
    pub tally: Tally,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum QuerySource {
    Enrollment,
    Query { angle_bits: u64, align: bool },
}

/// Cached chips, descriptors and distance matrices for one dataset.
pub struct EvalContext {
    pub dataset: Dataset,
    pub pipeline: ChipPipeline,
    pub lbp: LbpParams,
    faces: CascadeModel,
    eyes: CascadeModel,
    sources: Vec<GrayImage>,
    enroll_chips: Vec<GrayImage>,
    enroll_hists: Vec<Vec<u32>>,
    query_chips: HashMap<QuerySource, Arc<Vec<GrayImage>>>,
    matrices: HashMap<(QuerySource, usize), Arc<Vec<u64>>>,
    /// Images whose face box had to fall back to the centered square,
    /// counted per chip kind.
    pub fallbacks: HashMap<String, usize>,
}

impl EvalContext {
    pub fn new(
        dataset: Dataset,
        faces: CascadeModel,
        eyes: CascadeModel,
        pipeline: ChipPipeline,
        lbp: LbpParams,
    ) -> Result<Self, EvalError> {
        let sources = dataset
            .images
            .iter()
            .map(|(_, p)| {
                read_pgm(p).map_err(|source| EvalError::Image {
                    path: p.clone(),
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let chips = sources
            .par_iter()
            .map(|img| pipeline.enrollment(img, &faces, &eyes))
            .collect::<Result<Vec<_>, _>>()?;
        let missed = chips.iter().filter(|c| !c.detected).count();
        let enroll_chips: Vec<GrayImage> = chips.into_iter().map(|c| c.image).collect();
        let enroll_hists = enroll_chips
            .par_iter()
            .map(|c| lbph_describe(c, &lbp))
            .collect::<Result<Vec<_>, _>>()?;
        info!(
            "prepared {} enrollment chips ({missed} without detection)",
            enroll_chips.len()
        );
        Ok(Self {
            dataset,
            pipeline,
            lbp,
            faces,
            eyes,
            sources,
            enroll_chips,
            enroll_hists,
            query_chips: HashMap::new(),
            matrices: HashMap::new(),
            fallbacks: HashMap::from([("enrollment".to_string(), missed)]),
        })
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn enrollment_chip(&self, i: usize) -> &GrayImage {
        &self.enroll_chips[i]
    }

    fn chips(&mut self, src: QuerySource) -> Result<Arc<Vec<GrayImage>>, EvalError> {
        if let QuerySource::Enrollment = src {
            return Ok(Arc::new(self.enroll_chips.clone()));
        }
        if let Some(c) = self.query_chips.get(&src) {
            return Ok(Arc::clone(c));
        }
        let QuerySource::Query { angle_bits, align } = src else {
            unreachable!()
        };
        let angle = f64::from_bits(angle_bits);
        let prepared = self
            .sources
            .par_iter()
            .map(|img| {
                self.pipeline
                    .query(img, angle, align, &self.faces, &self.eyes)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let missed = prepared.iter().filter(|c| !c.detected).count();
        let aligned = prepared.iter().filter(|c| c.aligned).count();
        info!("query chips at {angle} deg: {missed} without detection, {aligned} aligned");
        self.fallbacks
            .insert(format!("query angle={angle} align={align}"), missed);
        let chips = Arc::new(prepared.into_iter().map(|c| c.image).collect::<Vec<_>>());
        self.query_chips.insert(src, Arc::clone(&chips));
        Ok(chips)
    }

    /// `n × n` squared distances from degraded query `i` to enrollment `j`.
    fn matrix(&mut self, src: QuerySource, resolution: usize) -> Result<Arc<Vec<u64>>, EvalError> {
        if let Some(m) = self.matrices.get(&(src, resolution)) {
            return Ok(Arc::clone(m));
        }
        let chips = self.chips(src)?;
        let size = self.pipeline.prep.chip_size;
        let lbp = self.lbp;
        let hists = chips
            .par_iter()
            .map(|c| {
                let small = resize_bilinear(c, resolution, resolution)?;
                let back = resize_bilinear(&small, size, size)?;
                Ok(lbph_describe(&back, &lbp)?)
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        let n = hists.len();
        let rows: Vec<Vec<u64>> = hists
            .par_iter()
            .map(|q| {
                self.enroll_hists
                    .iter()
                    .map(|t| squared_euclidean(q, t))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        debug!("distance matrix {n}x{n} at {resolution} px");
        let m = Arc::new(rows.concat());
        self.matrices.insert((src, resolution), Arc::clone(&m));
        Ok(m)
    }

    fn check_size(&self, train_per_subject: usize, self_test: bool) -> Result<(), EvalError> {
        let groups = self.dataset.per_subject();
        if groups.len() < 2 {
            return Err(EvalError::DatasetTooSmall(format!(
                "{} subject(s), need at least 2",
                groups.len()
            )));
        }
        let need = if self_test {
            train_per_subject
        } else {
            train_per_subject + 1
        };
        if let Some((s, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < need) {
            return Err(EvalError::DatasetTooSmall(format!(
                "subject {} has {} images, need {need}",
                self.dataset.subjects[s],
                g.len()
            )));
        }
        Ok(())
    }

    /// Core protocol: one tally per matrix, all driven by the same splits
    /// and sampled frames.
    fn protocol(
        &self,
        cfg: &EvalConfig,
        train_per_subject: usize,
        matrices: &[Arc<Vec<u64>>],
    ) -> Vec<Tally> {
        let groups = self.dataset.per_subject();
        let n = self.len();
        let subject = |i: usize| self.dataset.images[i].0;
        let per_repeat: Vec<Vec<Tally>> = (0..cfg.repeats)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
                let mut train = Vec::new();
                let mut test = Vec::new();
                for g in &groups {
                    let mut g = g.clone();
                    g.shuffle(&mut rng);
                    train.extend_from_slice(&g[..train_per_subject]);
                    if !cfg.self_test {
                        test.extend_from_slice(&g[train_per_subject..]);
                    }
                }
                if cfg.self_test {
                    test = train.clone();
                }
                let frames: Vec<usize> = (0..cfg.frames_per_repeat)
                    .map(|_| test[rng.gen_range(0..test.len())])
                    .collect();
                matrices
                    .iter()
                    .map(|m| {
                        let mut t = Tally::default();
                        for &f in &frames {
                            let row = &m[f * n..(f + 1) * n];
                            // strict `<` keeps the lowest template index on ties
                            let best = train
                                .iter()
                                .copied()
                                .reduce(|b, j| if row[j] < row[b] { j } else { b })
                                .expect("every subject contributes training images");
                            if subject(best) == subject(f) {
                                t.correct += 1;
                            } else {
                                t.wrong += 1;
                            }
                        }
                        t
                    })
                    .collect()
            })
            .collect();
        let mut total = vec![Tally::default(); matrices.len()];
        for rep in per_repeat {
            for (acc, t) in total.iter_mut().zip(rep) {
                acc.correct += t.correct;
                acc.wrong += t.wrong;
            }
        }
        total
    }

    fn source(&self, cfg: &EvalConfig, angle: f64) -> QuerySource {
        if cfg.self_test {
            QuerySource::Enrollment
        } else {
            QuerySource::Query {
                angle_bits: (angle + 0.0).to_bits(),
                align: cfg.align,
            }
        }
    }

    /// Accuracy per query resolution.
    pub fn run_resolution_eval(&mut self, cfg: &EvalConfig) -> Result<Vec<EvalRow>, EvalError> {
        cfg.validate()?;
        self.check_size(cfg.train_per_subject, cfg.self_test)?;
        let src = self.source(cfg, 0.0);
        let mats = cfg
            .resolutions
            .iter()
            .map(|&r| self.matrix(src, r))
            .collect::<Result<Vec<_>, _>>()?;
        let tallies = self.protocol(cfg, cfg.train_per_subject, &mats);
        Ok(cfg
            .resolutions
            .iter()
            .zip(tallies)
            .map(|(&resolution, tally)| EvalRow { resolution, tally })
            .collect())
    }

    /// Accuracy per in-plane rotation of the query images, at full chip
    /// resolution.
    pub fn run_rotation_eval(&mut self, cfg: &EvalConfig) -> Result<Vec<RotationRow>, EvalError> {
        cfg.validate()?;
        self.check_size(cfg.train_per_subject, cfg.self_test)?;
        let size = self.pipeline.prep.chip_size;
        let mut rows = Vec::new();
        for &angle in &cfg.rotations {
            let m = self.matrix(self.source(cfg, angle), size)?;
            let tally = self.protocol(cfg, cfg.train_per_subject, &[m])[0];
            rows.push(RotationRow {
                angle_deg: angle,
                tally,
            });
        }
        Ok(rows)
    }

    /// The resolution protocol repeated for each training-set size.
    pub fn run_trainsize_eval(
        &mut self,
        cfg: &EvalConfig,
        sizes: &[usize],
    ) -> Result<Vec<TrainSizeRow>, EvalError> {
        cfg.validate()?;
        let mut rows = Vec::new();
        for &k in sizes {
            let run = EvalConfig {
                train_per_subject: k,
                ..cfg.clone()
            };
            for row in self.run_resolution_eval(&run)? {
                rows.push(TrainSizeRow {
                    train_per_subject: k,
                    resolution: row.resolution,
                    tally: row.tally,
                });
            }
        }
        Ok(rows)
    }
}

fn csv_tally(t: &Tally) -> String {
    format!("{},{},{:.2}", t.correct, t.wrong, t.rate())
}

pub fn resolution_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("resolution,correct,wrong,rate\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", r.resolution, csv_tally(&r.tally));
    }
    out
}

pub fn rotation_csv(rows: &[RotationRow]) -> String {
    let mut out = String::from(
        "# angleDeg is an in-plane rotation of the query image, standing in for out-of-plane yaw\n\
         angleDeg,correct,wrong,rate\n",
    );
    for r in rows {
        let _ = writeln!(out, "{},{}", r.angle_deg, csv_tally(&r.tally));
    }
    out
}

pub fn trainsize_csv(rows: &[TrainSizeRow]) -> String {
    let mut out = String::from("trainPerSubject,resolution,correct,wrong,rate\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{}",
            r.train_per_subject,
            r.resolution,
            csv_tally(&r.tally)
        );
    }
    out
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` when either side has no spread.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
