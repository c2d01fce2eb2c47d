//! Haar-cascade object detection.
//!
//! Models come from the legacy OpenCV XML layout (`parse_cascade`). Windows
//! are scored over a single integral image by scaling the feature rectangles
//! instead of resampling the image, and raw hits are merged by
//! `group_rects`.

mod detect;
mod group;
mod parse;

pub use detect::{detect_multiscale, evaluate_window, DetectParams, WindowDecision};
pub use group::group_rects;
pub use parse::{load_cascade, parse_cascade};

use thiserror::Error;

use crate::image::ImageError;

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("missing element <{0}>")]
    MissingElement(String),
    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),
    #[error("invalid cascade: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("image {width}x{height} is smaller than the {base_w}x{base_h} detection window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        base_w: usize,
        base_h: usize,
    },
    #[error("window at ({x}, {y}) of {w}x{h} exceeds the image")]
    OutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
    },
    #[error("invalid detection parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// One weighted rectangle of a Haar-like feature, in base-window pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HaarRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HaarFeature {
    pub rects: Vec<HaarRect>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeChild {
    /// Index of another node in the same tree.
    Node(usize),
    Leaf(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub feature: HaarFeature,
    pub threshold: f64,
    pub left: NodeChild,
    pub right: NodeChild,
}

/// A decision tree; node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub trees: Vec<Tree>,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeModel {
    pub base_w: usize,
    pub base_h: usize,
    pub stages: Vec<Stage>,
}

impl CascadeModel {
    pub fn feature_count(&self) -> usize {
        self.stages
            .iter()
            .flat_map(|s| &s.trees)
            .map(|t| t.nodes.len())
            .sum()
    }
}

/// A detected object; `neighbors` counts the raw hits merged into it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FaceBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub neighbors: usize,
}

impl FaceBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self {
            x,
            y,
            w,
            h,
            neighbors: 1,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn iou(&self, other: &FaceBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) as isize - self.x.max(other.x) as isize;
        let iy = (self.y + self.h).min(other.y + other.h) as isize - self.y.max(other.y) as isize;
        if ix <= 0 || iy <= 0 {
            return 0.0;
        }
        let inter = (ix * iy) as f64;
        inter / (self.area() as f64 + other.area() as f64 - inter)
    }
}

/// Result order for detections: most neighbors first, then top-to-bottom,
/// left-to-right.
pub(crate) fn detection_order(a: &FaceBox, b: &FaceBox) -> std::cmp::Ordering {
    b.neighbors
        .cmp(&a.neighbors)
        .then(a.y.cmp(&b.y))
        .then(a.x.cmp(&b.x))
        .then(a.w.cmp(&b.w))
        .then(a.h.cmp(&b.h))
}
