//! Local binary pattern histograms and nearest-neighbour identification.
//!
//! A chip is turned into an image of 8-bit LBP codes, the code image is cut
//! into a grid of cells, and the per-cell 256-bin count histograms are
//! concatenated into one descriptor. Descriptors are compared with the
//! Euclidean distance on raw counts.

mod code;
mod model;

pub use code::{lbp_code_basic, lbp_code_circular, lbp_image, LbpImage};
pub use model::{
    calibrate_threshold, euclidean_distance, lbph_describe, predict, predict_histogram,
    squared_euclidean, train, FaceTemplate, Prediction, RecognizerModel, DEFAULT_QUANTILE,
};

use thiserror::Error;

/// Number of histogram bins per grid cell.
pub const BINS: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum LbphError {
    #[error("invalid LBP parameters: {0}")]
    InvalidParams(String),
    #[error("sampling point ({x}, {y}) lies closer than {radius} px to the border")]
    OutOfBounds { x: usize, y: usize, radius: usize },
    #[error("chip {width}x{height} is too small for radius {radius}")]
    ChipTooSmall {
        width: usize,
        height: usize,
        radius: usize,
    },
    #[error("a {grid_x}x{grid_y} grid leaves empty cells on a {width}x{height} code image")]
    GridDegenerate {
        grid_x: usize,
        grid_y: usize,
        width: usize,
        height: usize,
    },
    #[error("histogram lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no training chips")]
    EmptyTrainingSet,
    #[error("training chips must share one square size; found {0}x{1} after {2}x{2}")]
    MixedChipSizes(usize, usize, usize),
    #[error("subject {0} has no name")]
    UnnamedSubject(u32),
    #[error("model has no templates")]
    EmptyModel,
    #[error("chip is {width}x{height}, model expects {expected}x{expected}")]
    ChipSizeMismatch {
        width: usize,
        height: usize,
        expected: usize,
    },
    #[error("subject {0} has fewer than two templates")]
    InsufficientSamples(u32),
    #[error("quantile must lie in (0, 1], got {0}")]
    BadQuantile(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LbpMode {
    /// 3×3 neighbourhood read directly from the pixel grid.
    Basic,
    /// `neighbors` samples on a circle of `radius`, bilinearly interpolated.
    Circular,
}

impl LbpMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            LbpMode::Basic => "basic",
            LbpMode::Circular => "circular",
        }
    }
}

impl std::str::FromStr for LbpMode {
    type Err = LbphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "basic" => Ok(LbpMode::Basic),
            "circular" => Ok(LbpMode::Circular),
            other => Err(LbphError::InvalidParams(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LbpParams {
    /// Sample count P. Descriptors use 8-bit codes, so this is pinned to 8.
    pub neighbors: usize,
    /// Sampling radius R in pixels.
    pub radius: usize,
    pub grid_x: usize,
    pub grid_y: usize,
    pub mode: LbpMode,
}

impl Default for LbpParams {
    fn default() -> Self {
        Self {
            neighbors: 8,
            radius: 1,
            grid_x: 8,
            grid_y: 8,
            mode: LbpMode::Circular,
        }
    }
}

impl LbpParams {
    pub fn validate(&self) -> Result<(), LbphError> {
        if self.neighbors != 8 {
            return Err(LbphError::InvalidParams(format!(
                "descriptors need 8 neighbors, got {}",
                self.neighbors
            )));
        }
        if self.radius == 0 {
            return Err(LbphError::InvalidParams("radius must be at least 1".into()));
        }
        if self.mode == LbpMode::Basic && self.radius != 1 {
            return Err(LbphError::InvalidParams(
                "basic mode reads the 3x3 neighbourhood; radius must be 1".into(),
            ));
        }
        if self.grid_x == 0 || self.grid_y == 0 {
            return Err(LbphError::InvalidParams("grid must be at least 1x1".into()));
        }
        Ok(())
    }

    /// Length of a descriptor built with these parameters.
    pub fn histogram_len(&self) -> usize {
        self.grid_x * self.grid_y * BINS
    }
}
