//! Flowchart raster to directed graph extraction.
//!
//! The pipeline binarizes the image, finds closed node shapes, detects
//! filled arrowheads, extracts line segments with a probabilistic Hough
//! transform and, for every arrowhead, walks the segment graph from the
//! blunt end back to a source node. Decision labels come from an OCR
//! sidecar. A deterministic synthetic generator and an evaluation harness
//! are included for measurement.

pub mod arrowhead;
pub mod bbox;
pub mod config;
pub mod edgetrace;
pub mod eval;
pub mod geometry;
pub mod graph;
pub mod labels;
pub mod lines;
pub mod nodedetect;
pub mod pipeline;
pub mod raster;
pub mod rng;
pub mod synthgen;

pub use bbox::BoundingBox;

/// Pipeline scalar.
pub type Scalar = f64;
pub type Point = geometry::Point<Scalar>;
pub type Segment = geometry::Segment<Scalar>;
pub type Rect = geometry::Rect<Scalar>;
