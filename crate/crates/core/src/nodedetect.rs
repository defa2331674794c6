//! Flowchart element detection.
//!
//! Two paths produce the same [`DetectedNode`] list: a geometric detector
//! that finds closed outlines in the binary image and classifies their
//! shape, and an adapter for detection JSON written by an external model.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::geometry::{angle_between_lines, simplify_closed, Point, Segment};
use crate::labels::OcrSidecar;
use crate::raster::{BinaryImage, Components, Connectivity};

/// The five ISO 5807 node shapes that become graph nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeClass {
    Process,
    Decision,
    Document,
    Terminator,
    Connector,
}

impl NodeClass {
    pub const ALL: [NodeClass; 5] = [
        NodeClass::Process,
        NodeClass::Decision,
        NodeClass::Document,
        NodeClass::Terminator,
        NodeClass::Connector,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeClass::Process => "process",
            NodeClass::Decision => "decision",
            NodeClass::Document => "document",
            NodeClass::Terminator => "terminator",
            NodeClass::Connector => "connector",
        }
    }
}

impl fmt::Display for NodeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown node class {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectedNode {
    pub id: String,
    pub class: NodeClass,
    pub bbox: BoundingBox,
    /// 1.0 for geometric detections.
    pub confidence: f64,
    pub text: String,
}

/// Thresholds for the geometric detector.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeParams {
    /// Minimum enclosed area (px²) of a closed outline.
    pub min_shape_area: f64,
    /// Polygon approximation tolerance as a fraction of contour perimeter.
    pub poly_epsilon: f64,
    pub theta_tol_deg: f64,
    pub circularity_min: f64,
    pub corner_max: f64,
    pub wavy_min: f64,
    /// Square closing applied before outline search; `<= 1` disables it.
    pub gap_close: u32,
}

impl Default for NodeParams {
    fn default() -> Self {
        NodeParams {
            min_shape_area: 400.0,
            poly_epsilon: 0.02,
            theta_tol_deg: 10.0,
            circularity_min: 0.75,
            corner_max: 0.15,
            wavy_min: 0.08,
            gap_close: 3,
        }
    }
}

/// Shape measurements of one enclosed region, exposed for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeFeatures {
    pub width: u32,
    pub height: u32,
    pub area: f64,
    pub perimeter: f64,
    pub circularity: f64,
    pub vertices: Vec<Point<f64>>,
    pub fill_ratio: f64,
    pub corner_fill: [f64; 4],
    /// Spread of the top boundary over the middle half of the columns, as
    /// a fraction of the height.
    pub top_deviation: f64,
    pub bottom_deviation: f64,
}

/// Node id for the `index`-th detection (0-based): `n001`, `n002`, ...
pub fn node_id(index: usize) -> String {
    format!("n{:03}", index + 1)
}

/// Finds closed outlines and classifies each enclosed region.
///
/// Outlines are located through the background regions they enclose, so
/// connector lines touching a node do not disturb its shape. Regions that
/// match none of the five classes are dropped.
pub fn detect_nodes_geometric(img: &BinaryImage, params: &NodeParams) -> Vec<DetectedNode> {
    let work = if params.gap_close > 1 { img.close(params.gap_close) } else { img.clone() };
    let (w, h) = (work.width(), work.height());
    let background = Components::label(w, h, Connectivity::Four, |x, y| !work.get(x, y));

    let mut found: Vec<(BoundingBox, NodeClass)> = Vec::new();
    for region in &background.members {
        if region.iter().any(|&(x, y)| x == 0 || y == 0 || x == w - 1 || y == h - 1) {
            continue;
        }
        let Some(mask) = RegionMask::filled(region) else { continue };
        if (mask.area as f64) < params.min_shape_area {
            continue;
        }
        let Some(features) = mask.features(params) else { continue };
        let Some(class) = classify(&features, params) else { continue };
        let bbox = mask.outer_bbox(&work);
        found.push((bbox, class));
    }

    found.sort_by_key(|(b, _)| (b.y, b.x, b.h, b.w));
    found
        .into_iter()
        .enumerate()
        .map(|(i, (bbox, class))| DetectedNode { id: node_id(i), class, bbox, confidence: 1.0, text: String::new() })
        .collect()
}

/// Rule-based shape classifier over [`ShapeFeatures`].
pub fn classify(f: &ShapeFeatures, p: &NodeParams) -> Option<NodeClass> {
    let tol = p.theta_tol_deg.to_radians();
    let axis_aligned = |a: Point<f64>, b: Point<f64>| {
        let ang = Segment::new(a, b).angle();
        angle_between_lines(ang, 0.0) <= tol || angle_between_lines(ang, std::f64::consts::FRAC_PI_2) <= tol
    };
    let v = &f.vertices;
    let corners_mean = f.corner_fill.iter().sum::<f64>() / 4.0;
    let top_corners = (f.corner_fill[0] + f.corner_fill[1]) / 2.0;
    let aspect = f.width as f64 / f.height as f64;

    if v.len() == 4 {
        let sides_aligned = (0..4).all(|i| axis_aligned(v[i], v[(i + 1) % 4]));
        let diagonals_aligned = axis_aligned(v[0], v[2]) && axis_aligned(v[1], v[3]);
        if diagonals_aligned && !sides_aligned && f.fill_ratio < 0.75 {
            return Some(NodeClass::Decision);
        }
        if sides_aligned && corners_mean >= 0.5 && f.bottom_deviation <= p.wavy_min {
            return Some(NodeClass::Process);
        }
    }
    if f.circularity > p.circularity_min && (0.8..=1.25).contains(&aspect) && corners_mean < 0.5 {
        return Some(NodeClass::Connector);
    }
    if f.fill_ratio >= 0.7 && f.top_deviation <= p.wavy_min {
        if corners_mean < p.corner_max {
            return Some(NodeClass::Terminator);
        }
        if top_corners >= 0.5 {
            if f.bottom_deviation > p.wavy_min {
                return Some(NodeClass::Document);
            }
            if corners_mean >= 0.5 {
                return Some(NodeClass::Process);
            }
        }
    }
    None
}

/// A filled region (enclosed background plus any islands inside it) in a
/// local coordinate frame.
struct RegionMask {
    x0: u32,
    y0: u32,
    w: u32,
    h: u32,
    cells: Vec<bool>,
    area: usize,
}

impl RegionMask {
    fn filled(region: &[(u32, u32)]) -> Option<RegionMask> {
        let bb = crate::raster::pixel_bbox(region)?;
        // One pixel of margin so the outside flood can go around the region.
        let (x0, y0) = (bb.x as i64 - 1, bb.y as i64 - 1);
        let (w, h) = (bb.w as usize + 2, bb.h as usize + 2);
        let mut inside = vec![false; w * h];
        for &(x, y) in region {
            inside[(y as i64 - y0) as usize * w + (x as i64 - x0) as usize] = true;
        }
        let mut outside = vec![false; w * h];
        let mut stack = vec![(0usize, 0usize)];
        outside[0] = true;
        while let Some((cx, cy)) = stack.pop() {
            for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
                let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let idx = ny as usize * w + nx as usize;
                if !outside[idx] && !inside[idx] {
                    outside[idx] = true;
                    stack.push((nx as usize, ny as usize));
                }
            }
        }
        // Trim the margin back off.
        let (iw, ih) = (bb.w as usize, bb.h as usize);
        let mut cells = vec![false; iw * ih];
        let mut area = 0;
        for y in 0..ih {
            for x in 0..iw {
                let v = !outside[(y + 1) * w + x + 1];
                cells[y * iw + x] = v;
                area += v as usize;
            }
        }
        Some(RegionMask { x0: bb.x, y0: bb.y, w: bb.w, h: bb.h, cells, area })
    }

    fn at(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as u32) < self.w && (y as u32) < self.h && self.cells[y as usize * self.w as usize + x as usize]
    }

    fn features(&self, p: &NodeParams) -> Option<ShapeFeatures> {
        let contour = trace_outer_contour(&self.cells, self.w, self.h);
        if contour.len() < 4 {
            return None;
        }
        let perimeter: f64 = (0..contour.len())
            .map(|i| {
                let (a, b) = (contour[i], contour[(i + 1) % contour.len()]);
                if a.0 != b.0 && a.1 != b.1 {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                }
            })
            .sum();
        let pts: Vec<Point<f64>> = contour.iter().map(|&(x, y)| Point::new(x as f64, y as f64)).collect();
        let vertices = simplify_closed(&pts, p.poly_epsilon * perimeter);
        let area = self.area as f64;
        let circularity = 4.0 * std::f64::consts::PI * area / (perimeter * perimeter);
        let fill_ratio = area / (self.w as f64 * self.h as f64);

        let k = (self.w.min(self.h) / 8).max(2) as i64;
        let (w, h) = (self.w as i64, self.h as i64);
        let patch = |ox: i64, oy: i64| {
            let mut n = 0;
            for y in oy..oy + k {
                for x in ox..ox + k {
                    n += self.at(x, y) as i64;
                }
            }
            n as f64 / (k * k) as f64
        };
        let corner_fill = [patch(0, 0), patch(w - k, 0), patch(w - k, h - k), patch(0, h - k)];

        let (c0, c1) = ((w as f64 * 0.25).round() as i64, (w as f64 * 0.75).round() as i64);
        let mut tops = Vec::new();
        let mut bottoms = Vec::new();
        for x in c0..c1.max(c0 + 1) {
            if let Some(t) = (0..h).find(|&y| self.at(x, y)) {
                tops.push(t);
            }
            if let Some(b) = (0..h).rev().find(|&y| self.at(x, y)) {
                bottoms.push(b);
            }
        }
        let spread = |v: &[i64]| match (v.iter().min(), v.iter().max()) {
            (Some(a), Some(b)) => (b - a) as f64 / h as f64,
            _ => 1.0,
        };
        Some(ShapeFeatures {
            width: self.w,
            height: self.h,
            area,
            perimeter,
            circularity,
            vertices,
            fill_ratio,
            corner_fill,
            top_deviation: spread(&tops),
            bottom_deviation: spread(&bottoms),
        })
    }

    /// The enclosing outline's box: the region box grown by the ink
    /// thickness measured on each side.
    fn outer_bbox(&self, img: &BinaryImage) -> BoundingBox {
        let (gx0, gy0) = (self.x0 as i64, self.y0 as i64);
        let (w, h) = (self.w as i64, self.h as i64);
        let fracs = [0.25, 1.0 / 3.0, 2.0 / 3.0, 0.75];
        // Walk from the region's edge along `step` and count ink pixels.
        let run = |sx: i64, sy: i64, dx: i64, dy: i64| -> i64 {
            let mut n = 0;
            let (mut x, mut y) = (sx + dx, sy + dy);
            while n < 12 && img.ink_at(x, y) {
                n += 1;
                x += dx;
                y += dy;
            }
            n
        };
        let median = |mut v: Vec<i64>| -> i64 {
            v.sort_unstable();
            if v.is_empty() {
                0
            } else {
                v[(v.len() - 1) / 2]
            }
        };
        let mut top = Vec::new();
        let mut bottom = Vec::new();
        let mut left = Vec::new();
        let mut right = Vec::new();
        for f in fracs {
            let x = (w as f64 * f) as i64;
            if let Some(y) = (0..h).find(|&y| self.at(x, y)) {
                top.push(run(gx0 + x, gy0 + y, 0, -1));
            }
            if let Some(y) = (0..h).rev().find(|&y| self.at(x, y)) {
                bottom.push(run(gx0 + x, gy0 + y, 0, 1));
            }
            let y = (h as f64 * f) as i64;
            if let Some(x) = (0..w).find(|&x| self.at(x, y)) {
                left.push(run(gx0 + x, gy0 + y, -1, 0));
            }
            if let Some(x) = (0..w).rev().find(|&x| self.at(x, y)) {
                right.push(run(gx0 + x, gy0 + y, 1, 0));
            }
        }
        let x0 = (gx0 - median(left)).max(0) as u32;
        let y0 = (gy0 - median(top)).max(0) as u32;
        let x1 = ((gx0 + w - 1 + median(right)) as u32).min(img.width() - 1);
        let y1 = ((gy0 + h - 1 + median(bottom)) as u32).min(img.height() - 1);
        BoundingBox::from_corners(x0, y0, x1, y1)
    }
}

/// Moore-neighbour border following of the component containing the first
/// set pixel in raster order. Returns boundary pixels in traversal order.
pub fn trace_outer_contour(cells: &[bool], w: u32, h: u32) -> Vec<(i64, i64)> {
    const DIRS: [(i64, i64); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];
    let at = |x: i64, y: i64| x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && cells[y as usize * w as usize + x as usize];
    let Some(first) = cells.iter().position(|&v| v) else { return Vec::new() };
    let start = ((first % w as usize) as i64, (first / w as usize) as i64);
    let step = |cur: (i64, i64), dir: usize| -> Option<usize> {
        (0..8).map(|i| (dir + 6 + i) % 8).find(|&d| at(cur.0 + DIRS[d].0, cur.1 + DIRS[d].1))
    };
    let Some(first_dir) = step(start, 0) else { return vec![start] };
    let mut contour = vec![start];
    let mut cur = (start.0 + DIRS[first_dir].0, start.1 + DIRS[first_dir].1);
    let mut dir = first_dir;
    let limit = 4 * cells.len() + 16;
    while contour.len() < limit {
        let Some(d) = step(cur, dir) else { break };
        if cur == start && d == first_dir {
            break;
        }
        contour.push(cur);
        cur = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
        dir = d;
    }
    contour
}

/// Fills each node's text with the sidecar tokens centered inside its box,
/// space-joined in sidecar order.
pub fn attach_text(nodes: &[DetectedNode], ocr: &OcrSidecar) -> Vec<DetectedNode> {
    nodes
        .iter()
        .map(|n| {
            let rect = n.bbox.to_rect::<f64>();
            let words: Vec<&str> = ocr
                .tokens
                .iter()
                .filter(|t| rect.contains(t.center))
                .map(|t| t.text.as_str())
                .collect();
            DetectedNode { text: words.join(" "), ..n.clone() }
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
}

/// An arrowhead box reported by an external detector; orientation is
/// recovered from the image later.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalArrowhead {
    pub id: String,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Detections {
    pub nodes: Vec<DetectedNode>,
    pub arrowheads: Vec<ExternalArrowhead>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionFile {
    detections: Vec<DetectionEntry>,
}

#[derive(Deserialize)]
struct DetectionEntry {
    id: String,
    class: String,
    bbox: BoundingBox,
    confidence: f64,
}

pub fn ingest_detections(path: &Path) -> Result<Detections, IngestError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    parse_detections(&text)
}

/// Parses and validates detection JSON (see [`ingest_detections`]).
pub fn parse_detections(text: &str) -> Result<Detections, IngestError> {
    let file: DetectionFile = serde_json::from_str(text).map_err(|e| IngestError::SchemaViolation(e.to_string()))?;
    let mut seen = HashSet::new();
    let mut out = Detections::default();
    for d in file.detections {
        if d.id.is_empty() {
            return Err(IngestError::SchemaViolation("empty id".into()));
        }
        if !seen.insert(d.id.clone()) {
            return Err(IngestError::SchemaViolation(format!("duplicate id {:?}", d.id)));
        }
        if !(0.0..=1.0).contains(&d.confidence) {
            return Err(IngestError::SchemaViolation(format!(
                "confidence {} of {:?} outside [0, 1]",
                d.confidence, d.id
            )));
        }
        if d.class == "arrowhead" {
            out.arrowheads.push(ExternalArrowhead { id: d.id, bbox: d.bbox, confidence: d.confidence });
            continue;
        }
        let class = NodeClass::from_str(&d.class).map_err(IngestError::SchemaViolation)?;
        out.nodes.push(DetectedNode { id: d.id, class, bbox: d.bbox, confidence: d.confidence, text: String::new() });
    }
    Ok(out)
}
