//! Face detection and recognition on 8-bit grayscale images.
//!
//! The pipeline runs Haar-cascade detection over an integral image, levels
//! the eyes, crops a fixed-size chip and describes it with grid histograms of
//! local binary patterns. Identification is nearest-neighbour under the
//! Euclidean distance with an optional rejection threshold.

pub mod db;
pub mod haar;
pub mod image;
pub mod lbph;
pub mod prep;

pub use haar::{CascadeModel, DetectParams, FaceBox};
pub use image::{ClaheParams, GrayImage, ImageError, IntegralImage};
