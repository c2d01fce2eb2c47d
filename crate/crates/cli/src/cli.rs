//! Subcommands. [`run`] writes to caller-supplied streams and returns the
//! process exit status: 0 on success, 2 when no face was found, 1 on any
//! other failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use facerec_core::db::{
    build_name_table, enroll, load_model, save_model, save_namelist, train_store, DbError,
    EnrollmentStore, Watcher, WatcherConfig, NAMELIST_FILE,
};
use facerec_core::haar::{detect_multiscale, load_cascade, CascadeModel, DetectParams};
use facerec_core::image::{read_pgm, ClaheParams, GrayImage};
use facerec_core::lbph::{predict, LbpMode, LbpParams, Prediction, RecognizerModel};
use facerec_core::prep::{prepare_query, PrepError, PrepParams};

use crate::eval::{
    resolution_csv, rotation_csv, trainsize_csv, ChipPipeline, Dataset, EvalConfig, EvalContext,
};

#[derive(Parser, Debug)]
#[command(
    name = "facerec",
    version,
    about = "Haar detection and LBPH face recognition"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print detected face boxes as `x y w h neighbors`.
    Detect(DetectArgs),
    /// Detect, align and store one face chip for a subject.
    Enroll(EnrollArgs),
    /// Train a model from every chip in an enrollment directory.
    Train(TrainArgs),
    /// Identify the face in one image.
    Recognize(RecognizeArgs),
    /// Enroll images dropped into a directory and retrain after each batch.
    Watch(WatchArgs),
    /// Run the query pipeline over a directory of frames.
    Stream(StreamArgs),
    /// Accuracy experiments on a labelled dataset.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long)]
    pub cascade: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1.1)]
    pub scale_factor: f64,
    #[arg(long, default_value_t = 3)]
    pub min_neighbors: usize,
    #[arg(long)]
    pub min_size: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EnrollArgs {
    #[arg(long)]
    pub name: String,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub db_dir: PathBuf,
    #[arg(long)]
    pub cascade: PathBuf,
    #[arg(long)]
    pub eye_cascade: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub chip_size: usize,
}

#[derive(Args, Debug, Clone)]
pub struct LbpArgs {
    #[arg(long, default_value_t = 1)]
    pub radius: usize,
    #[arg(long, default_value_t = 8)]
    pub grid: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Circular)]
    pub mode: ModeArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Basic,
    Circular,
}

impl LbpArgs {
    fn params(&self) -> LbpParams {
        LbpParams {
            radius: self.radius,
            grid_x: self.grid,
            grid_y: self.grid,
            mode: match self.mode {
                ModeArg::Basic => LbpMode::Basic,
                ModeArg::Circular => LbpMode::Circular,
            },
            ..LbpParams::default()
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub db_dir: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub lbp: LbpArgs,
}

#[derive(Args, Debug)]
pub struct RecognizeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// A chip of the model's size, or a frame when cascades are given.
    #[arg(long)]
    pub input: PathBuf,
    /// Overrides the model's unknown-face threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub cascade: Option<PathBuf>,
    #[arg(long, requires = "cascade")]
    pub eye_cascade: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct WatchArgs {
    #[arg(long)]
    pub incoming: PathBuf,
    #[arg(long)]
    pub db_dir: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub cascade: PathBuf,
    #[arg(long)]
    pub eye_cascade: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub poll_ms: u64,
    /// Stop after this many polls instead of running forever.
    #[arg(long)]
    pub max_polls: Option<usize>,
    #[command(flatten)]
    pub lbp: LbpArgs,
}

#[derive(Args, Debug)]
pub struct StreamArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub frames_dir: PathBuf,
    #[arg(long)]
    pub cascade: PathBuf,
    #[arg(long)]
    pub eye_cascade: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub interval_ms: u64,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Experiment {
    Resolution,
    Rotation,
    Trainsize,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(value_enum)]
    pub experiment: Experiment,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub cascade: PathBuf,
    #[arg(long)]
    pub eye_cascade: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub train_per_subject: usize,
    #[arg(long, value_delimiter = ',', default_value = "15,20,30,35,45")]
    pub resolutions: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 200)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "-30,0,30",
        allow_hyphen_values = true
    )]
    pub rotations: Vec<f64>,
    /// Training-set sizes for the trainsize experiment.
    #[arg(long, value_delimiter = ',', default_value = "4,8")]
    pub train_sizes: Vec<usize>,
    /// Skip eye alignment on query images.
    #[arg(long)]
    pub no_align: bool,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub lbp: LbpArgs,
}

/// Failure of a subcommand, carrying its exit status.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn error(e: impl std::fmt::Display) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }

    fn no_face() -> Self {
        Self {
            code: 2,
            message: "no face found".into(),
        }
    }
}

impl From<DbError> for Failure {
    fn from(e: DbError) -> Self {
        match e {
            DbError::NoFaceFound => Failure::no_face(),
            other => Failure::error(other),
        }
    }
}

impl From<PrepError> for Failure {
    fn from(e: PrepError) -> Self {
        match e {
            PrepError::NoFaceFound => Failure::no_face(),
            other => Failure::error(other),
        }
    }
}

type Outcome = Result<i32, Failure>;

fn cascade(path: &Path) -> Result<CascadeModel, Failure> {
    load_cascade(path).map_err(|e| Failure::error(format!("{}: {e}", path.display())))
}

fn image(path: &Path) -> Result<GrayImage, Failure> {
    read_pgm(path).map_err(|e| Failure::error(format!("{}: {e}", path.display())))
}

fn model(path: &Path, threshold: Option<f64>) -> Result<RecognizerModel, Failure> {
    let mut m = load_model(path).map_err(Failure::error)?;
    if let Some(t) = threshold {
        if t.is_nan() || t < 0.0 {
            return Err(Failure::error(format!("threshold {t} must be nonnegative")));
        }
        m.threshold = t;
    }
    Ok(m)
}

fn prep_for(m: &RecognizerModel) -> PrepParams {
    PrepParams {
        chip_size: m.chip_size,
        ..PrepParams::default()
    }
}

fn describe(m: &RecognizerModel, p: &Prediction) -> String {
    match p.subject.and_then(|s| m.name_of(s)) {
        Some(name) => format!("{name} {:.3}", p.distance),
        None => format!("unknown {:.3}", p.distance),
    }
}

fn write_line(out: &mut dyn Write, line: &str) -> Result<(), Failure> {
    writeln!(out, "{line}").map_err(Failure::error)
}

fn cmd_detect(a: &DetectArgs, out: &mut dyn Write) -> Outcome {
    let model = cascade(&a.cascade)?;
    let img = image(&a.input)?;
    let params = DetectParams {
        scale_factor: a.scale_factor,
        min_neighbors: a.min_neighbors,
        min_size: a.min_size,
        ..DetectParams::default()
    };
    let faces = match detect_multiscale(&model, &img, &params) {
        Ok(f) => f,
        Err(facerec_core::haar::DetectError::ImageTooSmall { .. }) => Vec::new(),
        Err(e) => return Err(Failure::error(e)),
    };
    for f in &faces {
        write_line(
            out,
            &format!("{} {} {} {} {}", f.x, f.y, f.w, f.h, f.neighbors),
        )?;
    }
    Ok(if faces.is_empty() { 2 } else { 0 })
}

fn cmd_enroll(a: &EnrollArgs, out: &mut dyn Write) -> Outcome {
    let faces = cascade(&a.cascade)?;
    let eyes = cascade(&a.eye_cascade)?;
    let img = image(&a.input)?;
    let store = EnrollmentStore::create(&a.db_dir)?;
    let prep = PrepParams {
        chip_size: a.chip_size,
        ..PrepParams::default()
    };
    let path = enroll(&img, &a.name, &store, &faces, &eyes, &prep)?;
    write_line(out, &format!("enrolled {} as {}", a.name, path.display()))?;
    Ok(0)
}

fn namelist_path(model: &Path) -> PathBuf {
    model.parent().unwrap_or(Path::new(".")).join(NAMELIST_FILE)
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Outcome {
    let store = EnrollmentStore::open(&a.db_dir)?;
    let m = train_store(&store, &a.lbp.params())?;
    save_model(&m, &a.model)?;
    save_namelist(
        &build_name_table(m.names.values())?,
        &namelist_path(&a.model),
    )?;
    write_line(
        out,
        &format!(
            "trained {} templates for {} subjects, threshold {}",
            m.templates.len(),
            m.names.len(),
            m.threshold
        ),
    )?;
    Ok(0)
}

fn cmd_recognize(a: &RecognizeArgs, out: &mut dyn Write) -> Outcome {
    let m = model(&a.model, a.threshold)?;
    let img = image(&a.input)?;
    let chip = match &a.cascade {
        Some(c) => {
            let faces = cascade(c)?;
            let eyes = match &a.eye_cascade {
                Some(e) => cascade(e)?,
                None => faces.clone(),
            };
            prepare_query(&img, &faces, &eyes, &ClaheParams::default(), &prep_for(&m))?.image
        }
        None => img,
    };
    let p = predict(&m, &chip).map_err(Failure::error)?;
    write_line(out, &describe(&m, &p))?;
    Ok(0)
}

fn cmd_watch(a: &WatchArgs, out: &mut dyn Write) -> Outcome {
    let store = EnrollmentStore::create(&a.db_dir)?;
    let cfg = WatcherConfig {
        incoming: a.incoming.clone(),
        model_path: a.model.clone(),
        poll_interval: Duration::from_millis(a.poll_ms),
        prep: PrepParams::default(),
        lbp: a.lbp.params(),
    };
    let mut w = Watcher::new(cfg, store, cascade(&a.cascade)?, cascade(&a.eye_cascade)?)?;
    match a.max_polls {
        None => w.run(&AtomicBool::new(false))?,
        Some(n) => {
            let (mut enrolled, mut failed, mut retrains) = (0, 0, 0);
            for i in 0..n {
                match w.poll_once() {
                    Ok(r) => {
                        enrolled += r.enrolled.len();
                        failed += r.failed.len();
                        retrains += usize::from(r.retrained);
                    }
                    Err(e) => log::warn!("poll failed: {e}"),
                }
                if i + 1 < n {
                    std::thread::sleep(Duration::from_millis(a.poll_ms));
                }
            }
            write_line(
                out,
                &format!("enrolled {enrolled}, failed {failed}, retrained {retrains} times"),
            )?;
        }
    }
    Ok(0)
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Failure::error(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

fn cmd_stream(a: &StreamArgs, out: &mut dyn Write) -> Outcome {
    let m = model(&a.model, a.threshold)?;
    let faces = cascade(&a.cascade)?;
    let eyes = cascade(&a.eye_cascade)?;
    let prep = prep_for(&m);
    let clahe = ClaheParams::default();
    let interval = Duration::from_millis(a.interval_ms);
    for path in frame_files(&a.frames_dir)? {
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        let start = Instant::now();
        let frame = match read_pgm(&path) {
            Ok(f) => f,
            Err(e) => {
                log::warn!("{}: {e}", path.display());
                write_line(out, &format!("{name} error"))?;
                continue;
            }
        };
        let line = match prepare_query(&frame, &faces, &eyes, &clahe, &prep) {
            Ok(chip) => {
                let p = predict(&m, &chip.image).map_err(Failure::error)?;
                let ms = start.elapsed().as_secs_f64() * 1000.0;
                format!("{name} {} {ms:.1}", describe(&m, &p))
            }
            Err(PrepError::NoFaceFound) => format!("{name} noface"),
            Err(e) => {
                log::warn!("{}: {e}", path.display());
                format!("{name} error")
            }
        };
        write_line(out, &line)?;
        if let Some(rest) = interval.checked_sub(start.elapsed()) {
            std::thread::sleep(rest);
        }
    }
    Ok(0)
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Outcome {
    let dataset = Dataset::load(&a.dataset).map_err(Failure::error)?;
    let lbp = a.lbp.params();
    let mut ctx = EvalContext::new(
        dataset,
        cascade(&a.cascade)?,
        cascade(&a.eye_cascade)?,
        ChipPipeline::default(),
        lbp,
    )
    .map_err(Failure::error)?;
    let cfg = EvalConfig {
        train_per_subject: a.train_per_subject,
        resolutions: a.resolutions.clone(),
        repeats: a.repeats,
        frames_per_repeat: a.frames,
        seed: a.seed,
        rotations: a.rotations.clone(),
        align: !a.no_align,
        self_test: false,
    };
    let csv = match a.experiment {
        Experiment::Resolution => ctx.run_resolution_eval(&cfg).map(|r| resolution_csv(&r)),
        Experiment::Rotation => ctx.run_rotation_eval(&cfg).map(|r| rotation_csv(&r)),
        Experiment::Trainsize => ctx
            .run_trainsize_eval(&cfg, &a.train_sizes)
            .map(|r| trainsize_csv(&r)),
    }
    .map_err(Failure::error)?;
    match &a.out {
        Some(path) => std::fs::write(path, csv)
            .map_err(|e| Failure::error(format!("{}: {e}", path.display())))?,
        None => out.write_all(csv.as_bytes()).map_err(Failure::error)?,
    }
    Ok(0)
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let result = match &cli.command {
        Command::Detect(a) => cmd_detect(a, out),
        Command::Enroll(a) => cmd_enroll(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Recognize(a) => cmd_recognize(a, out),
        Command::Watch(a) => cmd_watch(a, out),
        Command::Stream(a) => cmd_stream(a, out),
        Command::Eval(a) => cmd_eval(a, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
