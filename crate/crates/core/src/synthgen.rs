//! Deterministic synthetic flowcharts with exact ground truth.
//!
//! Nodes sit on a jittered grid of 200 px cells. A tree of control flow is
//! grown breadth-first from a start terminator; every connector is an
//! orthogonal polyline ending in a filled triangular arrowhead whose tip
//! sits one pixel outside the target outline. All randomness comes from
//! [`Lcg`], so a seed fully determines the image, the truth graph and the
//! OCR sidecar.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::geometry::{point_in_polygon, polygon_boundary_distance, polyline_midpoint};
use crate::graph::{ArrowheadRecord, EdgeType, FlowGraph, GraphEdge, GraphNode};
use crate::labels::{LabelValue, OcrSidecar, OcrToken};
use crate::nodedetect::NodeClass;
use crate::raster::GrayImage;
use crate::rng::Lcg;
use crate::{Point, Rect, Segment};

pub const CELL: i64 = 200;
pub const MARGIN: i64 = 50;
pub const JITTER: i32 = 8;
pub const ARROW_LENGTH: f64 = 14.0;
pub const ARROW_HALF_WIDTH: f64 = 6.0;
pub const CHAR_WIDTH: i64 = 6;
pub const TEXT_HEIGHT: i64 = 9;
const MAX_ATTEMPTS: usize = 60;
/// Where the shared bar of a decision fork sits between the decision and
/// its children, as a fraction of the gap.
const BAR_FRACTION: f64 = 0.4;
const GAP_LENGTH: f64 = 14.0;
const LABEL_MARGIN: f64 = 10.0;
const LABEL_MAX_DIST: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionMode {
    /// Arrowhead drawn below the detector's minimum area.
    Shrink,
    /// A short stroke drawn across the arrowhead.
    CrossingStroke,
    /// A piece of the connector erased.
    ConnectorGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    pub seed: u64,
    pub node_count: usize,
    pub branch_prob: f64,
    pub width: u32,
    pub height: u32,
    pub line_thickness: u32,
    pub noise: f64,
    pub occlusion_prob: f64,
    pub occlusion_modes: Vec<OcclusionMode>,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            seed: 0,
            node_count: 10,
            branch_prob: 0.6,
            width: 1200,
            height: 1600,
            line_thickness: 2,
            noise: 0.0,
            occlusion_prob: 0.0,
            occlusion_modes: vec![OcclusionMode::Shrink, OcclusionMode::CrossingStroke, OcclusionMode::ConnectorGap],
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("invalid generator parameter: {0}")]
    InvalidParams(String),
    #[error("layout overflow: {node_count} nodes do not fit a grid of capacity {capacity}")]
    LayoutOverflow { node_count: usize, capacity: usize },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl GenParams {
    pub fn grid(&self) -> (i64, i64) {
        let cols = (self.width as i64 - 2 * MARGIN).max(0) / CELL;
        let rows = (self.height as i64 - 2 * MARGIN).max(0) / CELL;
        (rows, cols)
    }

    pub fn capacity(&self) -> usize {
        let (r, c) = self.grid();
        (r * c) as usize
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::InvalidParams(m));
        if self.width < 400 || self.height < 400 {
            return bad(format!("canvas {}x{} is smaller than 400x400", self.width, self.height));
        }
        if self.node_count < 2 {
            return bad(format!("node_count {} is below 2", self.node_count));
        }
        for (k, v) in [("branch_prob", self.branch_prob), ("noise", self.noise), ("occlusion_prob", self.occlusion_prob)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{k} {v} is outside [0, 1]"));
            }
        }
        if !(1..=4).contains(&self.line_thickness) {
            return bad(format!("line_thickness {} is outside [1, 4]", self.line_thickness));
        }
        if self.occlusion_prob > 0.0 && self.occlusion_modes.is_empty() {
            return bad("occlusion_prob is positive but no occlusion mode is enabled".into());
        }
        if self.node_count > self.capacity() {
            return Err(GenError::LayoutOverflow { node_count: self.node_count, capacity: self.capacity() });
        }
        Ok(())
    }
}

/// One generated diagram.
#[derive(Debug, Clone)]
pub struct GroundTruthBundle {
    pub image: GrayImage,
    /// Truth graph with node geometry, edge paths and arrowhead records.
    pub graph: FlowGraph,
    pub sidecar: OcrSidecar,
}

impl GroundTruthBundle {
    pub fn node_boxes(&self) -> Vec<BoundingBox> {
        self.graph.nodes.iter().map(|n| n.bbox).collect()
    }

    pub fn arrowheads(&self) -> &[ArrowheadRecord] {
        &self.graph.arrowheads
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Rect,
    Diamond,
    Stadium,
    Circle,
    Document,
}

fn shape_of(c: NodeClass) -> Shape {
    match c {
        NodeClass::Process => Shape::Rect,
        NodeClass::Decision => Shape::Diamond,
        NodeClass::Terminator => Shape::Stadium,
        NodeClass::Connector => Shape::Circle,
        NodeClass::Document => Shape::Document,
    }
}

fn nominal_size(c: NodeClass) -> (i64, i64) {
    match c {
        NodeClass::Process => (120, 60),
        NodeClass::Document => (120, 70),
        NodeClass::Decision => (110, 80),
        NodeClass::Terminator => (120, 50),
        NodeClass::Connector => (50, 50),
    }
}

#[derive(Debug, Clone)]
struct PNode {
    class: NodeClass,
    cell: (i64, i64),
    cx: i64,
    cy: i64,
    w: i64,
    h: i64,
    words: Vec<String>,
}

impl PNode {
    fn frame(&self) -> (f64, f64, f64, f64) {
        let (cx, cy, hw, hh) = (self.cx as f64, self.cy as f64, self.w as f64 / 2.0, self.h as f64 / 2.0);
        (cx - hw, cy - hh, cx + hw, cy + hh)
    }

    fn top(&self) -> i64 {
        self.cy - self.h / 2
    }

    fn bottom(&self) -> i64 {
        self.cy + self.h / 2
    }

    fn left(&self) -> i64 {
        self.cx - self.w / 2
    }

    fn right(&self) -> i64 {
        self.cx + self.w / 2
    }

    fn wave_amplitude(&self) -> f64 {
        (self.h as f64 * 0.16).round()
    }

    /// Bottom outline y at column `x` of a document shape.
    fn wave_y(&self, x: f64) -> f64 {
        let (x0, _, x1, y1) = self.frame();
        let a = self.wave_amplitude();
        let u = (x - x0) / (x1 - x0);
        y1 - a / 2.0 + a / 2.0 * (2.0 * std::f64::consts::PI * u).sin()
    }

    fn document_polygon(&self) -> Vec<Point> {
        let (x0, y0, x1, _) = self.frame();
        let mut poly = vec![Point::new(x0, y0), Point::new(x1, y0)];
        let n = 48;
        for i in (0..=n).rev() {
            let x = x0 + (x1 - x0) * i as f64 / n as f64;
            poly.push(Point::new(x, self.wave_y(x)));
        }
        poly
    }

    /// Signed depth of a point inside the outline (negative outside).
    fn depth(&self, p: Point, poly: &[Point]) -> f64 {
        let (x0, y0, x1, y1) = self.frame();
        let (cx, cy) = (self.cx as f64, self.cy as f64);
        match shape_of(self.class) {
            Shape::Rect => (p.x - x0).min(x1 - p.x).min(p.y - y0).min(y1 - p.y),
            Shape::Diamond => {
                let (hw, hh) = ((x1 - x0) / 2.0, (y1 - y0) / 2.0);
                let l = ((p.x - cx).abs() / hw + (p.y - cy).abs() / hh - 1.0) * -1.0;
                // Scale the normalized distance to pixels along the side normal.
                l * hw * hh / (hw * hw + hh * hh).sqrt()
            }
            Shape::Stadium => {
                let r = (y1 - y0) / 2.0;
                let s = Segment::new(Point::new(x0 + r, cy), Point::new(x1 - r, cy));
                r - s.distance_to_point(p)
            }
            Shape::Circle => (x1 - x0) / 2.0 - p.distance(Point::new(cx, cy)),
            Shape::Document => {
                let d = polygon_boundary_distance(p, poly);
                if point_in_polygon(p, poly) {
                    d
                } else {
                    -d
                }
            }
        }
    }

    fn outline_pixels(&self, t: f64) -> Vec<(i64, i64)> {
        let poly = if self.class == NodeClass::Document { self.document_polygon() } else { Vec::new() };
        let mut out = Vec::new();
        for y in self.top() - 1..=self.bottom() + 1 {
            for x in self.left() - 1..=self.right() + 1 {
                let d = self.depth(Point::new(x as f64, y as f64), &poly);
                if d >= -1e-9 && d < t {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// Attachment point on the outline for a side (0 top, 1 right, 2 bottom, 3 left).
    fn port(&self, side: u8) -> (i64, i64) {
        match side {
            0 => (self.cx, self.top()),
            1 => (self.right(), self.cy),
            2 if self.class == NodeClass::Document => (self.cx, self.wave_y(self.cx as f64).floor() as i64),
            2 => (self.cx, self.bottom()),
            _ => (self.left(), self.cy),
        }
    }

    /// Arrow tip one pixel outside the outline for an entry on `side`.
    fn entry_tip(&self, side: u8) -> (i64, i64) {
        let (x, y) = self.port(side);
        match side {
            0 => (x, y - 1),
            1 => (x + 1, y),
            2 => (x, y + 1),
            _ => (x - 1, y),
        }
    }
}

#[derive(Debug, Clone)]
struct PEdge {
    src: usize,
    dst: usize,
    /// Source port to arrow tip.
    path: Vec<(i64, i64)>,
    label: Option<LabelValue>,
    /// Edges of one decision fork share a trunk.
    group: Option<usize>,
    /// Start of the part of the path not shared with another edge.
    exclusive_from: (i64, i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Free,
    Node,
    Reserved,
}

struct Grid {
    rows: i64,
    cols: i64,
    cells: Vec<Cell>,
    ox: i64,
    oy: i64,
}

impl Grid {
    fn new(p: &GenParams) -> Grid {
        let (rows, cols) = p.grid();
        let ox = (p.width as i64 - cols * CELL) / 2;
        let oy = (p.height as i64 - rows * CELL) / 2;
        Grid { rows, cols, cells: vec![Cell::Free; (rows * cols) as usize], ox, oy }
    }

    fn free(&self, (r, c): (i64, i64)) -> bool {
        r >= 0 && c >= 0 && r < self.rows && c < self.cols && self.cells[(r * self.cols + c) as usize] == Cell::Free
    }

    fn mark(&mut self, (r, c): (i64, i64), v: Cell) {
        self.cells[(r * self.cols + c) as usize] = v;
    }

    fn center(&self, (r, c): (i64, i64)) -> (i64, i64) {
        (self.ox + c * CELL + CELL / 2, self.oy + r * CELL + CELL / 2)
    }
}

const VERBS: [&str; 8] = ["meet", "test", "reset", "check", "open", "sluit", "vul", "lees"];
const NOUNS: [&str; 8] = ["klep", "motor", "druk", "pomp", "filter", "sensor", "tank", "lamp"];

/// Class mix of interior nodes: process, document, decision.
const INTERIOR_WEIGHTS: [u32; 3] = [50, 30, 20];

struct Builder<'a> {
    p: &'a GenParams,
    rng: &'a mut Lcg,
    grid: Grid,
    nodes: Vec<PNode>,
    edges: Vec<PEdge>,
    groups: usize,
}

/// One planned child: its cell, class and the route shape leading to it.
enum Route {
    Down,
    Side(i64),
    /// Out of the parent's side, then down into the child's top.
    SideDown(i64),
    /// Out of the parent's bottom, then sideways into the child's side.
    DownSide(i64),
}

impl<'a> Builder<'a> {
    fn new_node(&mut self, class: NodeClass, cell: (i64, i64)) -> usize {
        let (w, h) = nominal_size(class);
        let (gx, gy) = self.grid.center(cell);
        let jx = self.rng.range_i32(-JITTER, JITTER) as i64;
        let jy = self.rng.range_i32(-JITTER, JITTER) as i64;
        self.grid.mark(cell, Cell::Node);
        let idx = self.nodes.len();
        self.nodes.push(PNode { class, cell, cx: gx + jx, cy: gy + jy, w, h, words: Vec::new() });
        idx
    }

    fn pick_class(&mut self, remaining: usize, pending: usize) -> (NodeClass, usize) {
        // Child slots this node may open without exceeding the budget.
        let room = remaining as i64 - pending as i64;
        if room <= 0 {
            return if self.rng.weighted(&[2, 1]) == 0 { (NodeClass::Terminator, 0) } else { (NodeClass::Connector, 0) };
        }
        match self.rng.weighted(&INTERIOR_WEIGHTS) {
            0 => (NodeClass::Process, 1),
            1 => (NodeClass::Document, 1),
            _ => {
                let two = room >= 2 && self.rng.chance(self.p.branch_prob);
                (NodeClass::Decision, if two { 2 } else { 1 })
            }
        }
    }

    fn build(&mut self) -> bool {
        let n = self.p.node_count;
        let root_cell = (0, self.grid.cols / 2);
        let root = self.new_node(NodeClass::Terminator, root_cell);
        let mut queue: VecDeque<(usize, usize)> = VecDeque::from([(root, 1)]);
        let mut pending = 1usize;
        while let Some((parent, slots)) = queue.pop_front() {
            let remaining = n - self.nodes.len();
            let mut classes = Vec::new();
            let mut budget_left = remaining;
            let mut pend = pending;
            for _ in 0..slots {
                // This child fills one pending slot.
                let (c, k) = self.pick_class(budget_left, pend);
                pend = pend - 1 + k;
                budget_left -= 1;
                classes.push((c, k));
            }
            pending = pend;
            let Some(children) = self.place_children(parent, &classes) else { return false };
            for (child, &(_, k)) in children.into_iter().zip(&classes) {
                if k > 0 {
                    queue.push_back((child, k));
                }
            }
        }
        self.nodes.len() == n
    }

    fn place_children(&mut self, parent: usize, classes: &[(NodeClass, usize)]) -> Option<Vec<usize>> {
        if classes.len() == 2 {
            return self.place_branch(parent, classes);
        }
        let (r, c) = self.nodes[parent].cell;
        let s = if self.rng.chance(0.5) { 1 } else { -1 };
        let mut options = vec![(4, Route::Down), (2, Route::Side(s)), (2, Route::SideDown(s)), (1, Route::DownSide(s))];
        options.extend([(1, Route::Side(-s)), (1, Route::SideDown(-s)), (1, Route::DownSide(-s))]);
        let mut order = Vec::new();
        while !options.is_empty() {
            let i = self.rng.weighted(&options.iter().map(|o| o.0).collect::<Vec<_>>());
            order.push(options.remove(i).1);
        }
        for route in order {
            let (target, reserve) = match route {
                Route::Down => ((r + 1, c), None),
                Route::Side(d) => ((r, c + d), None),
                Route::SideDown(d) => ((r + 1, c + d), Some((r, c + d))),
                Route::DownSide(d) => ((r + 1, c + d), Some((r + 1, c))),
            };
            if !self.grid.free(target) || reserve.is_some_and(|x| !self.grid.free(x)) {
                continue;
            }
            if let Some(x) = reserve {
                self.grid.mark(x, Cell::Reserved);
            }
            let child = self.new_node(classes[0].0, target);
            let path = self.route_single(parent, child, &route);
            let start = path[0];
            self.edges.push(PEdge { src: parent, dst: child, path, label: None, group: None, exclusive_from: start });
            return Some(vec![child]);
        }
        None
    }

    fn align_x(&mut self, child: usize, x: i64) {
        self.nodes[child].cx = x;
    }

    fn align_y(&mut self, child: usize, y: i64) {
        self.nodes[child].cy = y;
    }

    fn route_single(&mut self, parent: usize, child: usize, route: &Route) -> Vec<(i64, i64)> {
        match *route {
            Route::Down => {
                let x = self.nodes[parent].cx;
                self.align_x(child, x);
                vec![self.nodes[parent].port(2), self.nodes[child].entry_tip(0)]
            }
            Route::Side(d) => {
                let y = self.nodes[parent].cy;
                self.align_y(child, y);
                let (out, inn) = if d > 0 { (1, 3) } else { (3, 1) };
                vec![self.nodes[parent].port(out), self.nodes[child].entry_tip(inn)]
            }
            Route::SideDown(d) => {
                let out = if d > 0 { 1 } else { 3 };
                let s = self.nodes[parent].port(out);
                let t = self.nodes[child].entry_tip(0);
                vec![s, (t.0, s.1), t]
            }
            Route::DownSide(d) => {
                let inn = if d > 0 { 3 } else { 1 };
                let s = self.nodes[parent].port(2);
                let t = self.nodes[child].entry_tip(inn);
                vec![s, (s.0, t.1), t]
            }
        }
    }

    fn place_branch(&mut self, parent: usize, classes: &[(NodeClass, usize)]) -> Option<Vec<usize>> {
        let (r, c) = self.nodes[parent].cell;
        let s = if self.rng.chance(0.5) { 1 } else { -1 };
        // 0 fork, 1 asymmetric T, 2 both sides, 3 down plus one side
        let mut options: Vec<(u32, u8, i64)> = vec![(3, 0, 0), (3, 1, s), (1, 2, 0), (1, 3, s), (1, 1, -s), (1, 3, -s)];
        let mut order = Vec::new();
        while !options.is_empty() {
            let i = self.rng.weighted(&options.iter().map(|o| o.0).collect::<Vec<_>>());
            let o = options.remove(i);
            order.push((o.1, o.2));
        }
        let ja_first = self.rng.chance(0.5);
        let labels = if ja_first { [LabelValue::Ja, LabelValue::Nee] } else { [LabelValue::Nee, LabelValue::Ja] };
        for (kind, d) in order {
            let cells = match kind {
                0 => [(r + 1, c - 1), (r + 1, c + 1)],
                1 => [(r + 1, c), (r + 1, c + d)],
                2 => [(r, c - 1), (r, c + 1)],
                _ => [(r + 1, c), (r, c + d)],
            };
            if !cells.iter().all(|&x| self.grid.free(x)) {
                continue;
            }
            let a = self.new_node(classes[0].0, cells[0]);
            let b = self.new_node(classes[1].0, cells[1]);
            let (pa, pb, group, ex) = match kind {
                0 | 1 => {
                    if kind == 1 {
                        let x = self.nodes[parent].cx;
                        self.align_x(a, x);
                    }
                    let s = self.nodes[parent].port(2);
                    let (ta, tb) = (self.nodes[a].entry_tip(0), self.nodes[b].entry_tip(0));
                    let top = ta.1.min(tb.1);
                    let ybar = s.1 + ((top - s.1) as f64 * BAR_FRACTION).round() as i64;
                    let pa = if kind == 0 { vec![s, (s.0, ybar), (ta.0, ybar), ta] } else { vec![s, ta] };
                    let pb = vec![s, (s.0, ybar), (tb.0, ybar), tb];
                    self.groups += 1;
                    (pa, pb, Some(self.groups), (s.0, ybar))
                }
                2 => {
                    let y = self.nodes[parent].cy;
                    self.align_y(a, y);
                    self.align_y(b, y);
                    let pa = vec![self.nodes[parent].port(3), self.nodes[a].entry_tip(1)];
                    let pb = vec![self.nodes[parent].port(1), self.nodes[b].entry_tip(3)];
                    let ex = pa[0];
                    (pa, pb, None, ex)
                }
                _ => {
                    let x = self.nodes[parent].cx;
                    self.align_x(a, x);
                    let y = self.nodes[parent].cy;
                    self.align_y(b, y);
                    let (out, inn) = if d > 0 { (1, 3) } else { (3, 1) };
                    let pa = vec![self.nodes[parent].port(2), self.nodes[a].entry_tip(0)];
                    let pb = vec![self.nodes[parent].port(out), self.nodes[b].entry_tip(inn)];
                    let ex = pa[0];
                    (pa, pb, None, ex)
                }
            };
            let ex_a = if group.is_some() { ex } else { pa[0] };
            let ex_b = if group.is_some() { ex } else { pb[0] };
            self.edges.push(PEdge { src: parent, dst: a, path: pa, label: Some(labels[0]), group, exclusive_from: ex_a });
            self.edges.push(PEdge { src: parent, dst: b, path: pb, label: Some(labels[1]), group, exclusive_from: ex_b });
            return Some(vec![a, b]);
        }
        None
    }
}

fn seg(a: (i64, i64), b: (i64, i64)) -> Segment {
    Segment::new(Point::new(a.0 as f64, a.1 as f64), Point::new(b.0 as f64, b.1 as f64))
}

fn segments_distance(a: &Segment, b: &Segment) -> f64 {
    if crate::geometry::segments_intersect(a, b) {
        return 0.0;
    }
    a.distance_to_point(b.p1).min(a.distance_to_point(b.p2)).min(b.distance_to_point(a.p1)).min(b.distance_to_point(a.p2))
}

fn node_rect(n: &PNode) -> Rect {
    Rect::new(n.left() as f64, n.top() as f64, n.right() as f64, n.bottom() as f64)
}

fn path_segments(e: &PEdge) -> Vec<Segment> {
    e.path.windows(2).map(|w| seg(w[0], w[1])).collect()
}

/// Geometric sanity of a finished layout: every connector keeps clear of
/// unrelated nodes and of other connectors.
fn layout_ok(p: &GenParams, nodes: &[PNode], edges: &[PEdge]) -> bool {
    let (w, h) = (p.width as i64, p.height as i64);
    if nodes.iter().any(|n| n.left() < 20 || n.top() < 20 || n.right() > w - 20 || n.bottom() > h - 20) {
        return false;
    }
    let segs: Vec<Vec<Segment>> = edges.iter().map(path_segments).collect();
    for (i, e) in edges.iter().enumerate() {
        for (j, n) in nodes.iter().enumerate() {
            if j == e.src || j == e.dst {
                continue;
            }
            let r = node_rect(n);
            if segs[i].iter().any(|s| r.distance_to_segment(s) < 24.0) {
                return false;
            }
        }
        for (k, f) in edges.iter().enumerate().skip(i + 1) {
            if e.group.is_some() && e.group == f.group {
                continue;
            }
            let near = segs[i].iter().any(|a| segs[k].iter().any(|b| segments_distance(a, b) < 20.0));
            if near {
                return false;
            }
        }
        if segs[i].iter().any(|s| s.length() < 1.0) {
            return false;
        }
    }
    true
}

fn to_points(path: &[(i64, i64)]) -> Vec<Point> {
    path.iter().map(|&(x, y)| Point::new(x as f64, y as f64)).collect()
}

/// Ink canvas with clipped writes.
struct Canvas {
    w: i64,
    h: i64,
    ink: Vec<bool>,
}

impl Canvas {
    fn new(w: u32, h: u32) -> Canvas {
        Canvas { w: w as i64, h: h as i64, ink: vec![false; w as usize * h as usize] }
    }

    fn set(&mut self, x: i64, y: i64, v: bool) {
        if x >= 0 && y >= 0 && x < self.w && y < self.h {
            self.ink[(y * self.w + x) as usize] = v;
        }
    }

    fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, v: bool) {
        for y in y0.min(y1)..=y0.max(y1) {
            for x in x0.min(x1)..=x0.max(x1) {
                self.set(x, y, v);
            }
        }
    }

    /// Axis-aligned stroke of thickness `t` between two points, extended by
    /// half the thickness at both ends so corners join.
    fn stroke(&mut self, a: (i64, i64), b: (i64, i64), t: i64, v: bool) {
        let lo = -(t - 1) / 2;
        let hi = t / 2;
        if a.1 == b.1 {
            self.fill_rect(a.0.min(b.0) + lo, a.1 + lo, a.0.max(b.0) + hi, a.1 + hi, v);
        } else {
            self.fill_rect(a.0 + lo, a.1.min(b.1) + lo, a.0 + hi, a.1.max(b.1) + hi, v);
        }
    }

    fn fill_triangle(&mut self, pts: [Point; 3]) -> Vec<(i64, i64)> {
        let xs = pts.iter().map(|p| p.x);
        let ys = pts.iter().map(|p| p.y);
        let (x0, x1) = (xs.clone().fold(f64::MAX, f64::min).floor() as i64, xs.fold(f64::MIN, f64::max).ceil() as i64);
        let (y0, y1) = (ys.clone().fold(f64::MAX, f64::min).floor() as i64, ys.fold(f64::MIN, f64::max).ceil() as i64);
        let mut out = Vec::new();
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = Point::new(x as f64, y as f64);
                let d = [(pts[1] - pts[0]).cross(p - pts[0]), (pts[2] - pts[1]).cross(p - pts[1]), (pts[0] - pts[2]).cross(p - pts[2])];
                let inside = d.iter().all(|&v| v >= -1e-9) || d.iter().all(|&v| v <= 1e-9);
                if inside {
                    self.set(x, y, true);
                    out.push((x, y));
                }
            }
        }
        out
    }

    fn to_gray(&self) -> GrayImage {
        let data = self.ink.iter().map(|&v| if v { 0 } else { 255 }).collect();
        GrayImage::new(self.w as u32, self.h as u32, data).expect("canvas dimensions")
    }
}

fn bbox_of(pixels: &[(i64, i64)]) -> Option<BoundingBox> {
    let x0 = pixels.iter().map(|p| p.0).min()?;
    let y0 = pixels.iter().map(|p| p.1).min()?;
    let x1 = pixels.iter().map(|p| p.0).max()?;
    let y1 = pixels.iter().map(|p| p.1).max()?;
    Some(BoundingBox::from_corners(x0.max(0) as u32, y0.max(0) as u32, x1.max(0) as u32, y1.max(0) as u32))
}

fn direction(a: (i64, i64), b: (i64, i64)) -> Point {
    Point::new((b.0 - a.0).signum() as f64, (b.1 - a.1).signum() as f64)
}

fn text_box(cx: f64, cy: f64, text: &str) -> BoundingBox {
    let w = CHAR_WIDTH * text.chars().count() as i64;
    let x = (cx - w as f64 / 2.0).round() as i64;
    let y = (cy - TEXT_HEIGHT as f64 / 2.0).round() as i64;
    BoundingBox::from_corners(x as u32, y as u32, (x + w - 1) as u32, (y + TEXT_HEIGHT - 1) as u32)
}

fn token(text: &str, b: BoundingBox) -> OcrToken {
    let center = Point::new(b.x as f64 + b.w as f64 / 2.0, b.y as f64 + b.h as f64 / 2.0);
    OcrToken { text: text.to_string(), center, bbox: b }
}

fn assign_words(rng: &mut Lcg, nodes: &mut [PNode]) {
    for (i, n) in nodes.iter_mut().enumerate() {
        let idx = i + 1;
        n.words = match n.class {
            NodeClass::Terminator if i == 0 => vec!["start".into()],
            NodeClass::Terminator => vec![if rng.chance(0.5) { "einde".into() } else { "stop".into() }],
            NodeClass::Connector => vec![format!("C{idx}")],
            NodeClass::Decision => vec![format!("{}{idx}", NOUNS[rng.below(NOUNS.len() as u32) as usize])],
            _ => vec![
                VERBS[rng.below(VERBS.len() as u32) as usize].to_string(),
                format!("{}{idx}", NOUNS[rng.below(NOUNS.len() as u32) as usize]),
            ],
        };
    }
}

/// Places ja/nee tokens beside each labeled path midpoint and checks that
/// nearest-first assignment recovers them with a margin.
fn place_labels(rng: &mut Lcg, nodes: &[PNode], edges: &[PEdge]) -> Option<Vec<(usize, BoundingBox, String)>> {
    let segs: Vec<Vec<Segment>> = edges.iter().map(path_segments).collect();
    let mids: Vec<Option<Point>> = edges
        .iter()
        .map(|e| if nodes[e.src].class == NodeClass::Decision { polyline_midpoint(&to_points(&e.path)) } else { None })
        .collect();
    let mut placed: Vec<(usize, BoundingBox, String)> = Vec::new();
    for (i, e) in edges.iter().enumerate() {
        let Some(label) = e.label else { continue };
        let mid = mids[i]?;
        let text = if rng.chance(0.3) { format!("{}{}", label.as_str()[..1].to_uppercase(), &label.as_str()[1..]) } else { label.as_str().to_string() };
        let on = segs[i].iter().min_by(|a, b| a.distance_to_point(mid).total_cmp(&b.distance_to_point(mid)))?;
        let dir = on.direction()?;
        let normal = dir.perp();
        let half_w = (CHAR_WIDTH * text.len() as i64) as f64 / 2.0;
        let half_perp = if dir.x.abs() > 0.5 { TEXT_HEIGHT as f64 / 2.0 } else { half_w };
        let mut sides = [1.0, -1.0];
        if rng.chance(0.5) {
            sides.swap(0, 1);
        }
        let mut chosen = None;
        for s in sides {
            let c = mid + normal.scale(s * (half_perp + 8.0));
            let b = text_box(c.x, c.y, &text);
            let r = b.to_rect::<f64>().grow(4.0);
            let clear_lines = segs.iter().enumerate().all(|(k, ss)| {
                ss.iter().all(|s| r.distance_to_segment(s) > if k == i { 2.0 } else { 6.0 })
            });
            let clear_nodes = nodes.iter().all(|n| node_rect(n).intersection(&b.to_rect::<f64>().grow(10.0)).is_none());
            let clear_labels = placed.iter().all(|(_, o, _)| o.to_rect::<f64>().intersection(&r).is_none());
            if clear_lines && clear_nodes && clear_labels {
                chosen = Some(b);
                break;
            }
        }
        placed.push((i, chosen?, text));
    }
    // Margin check against every decision-sourced path midpoint.
    for (i, b, _) in &placed {
        let c = token("", *b).center;
        let own = c.distance(mids[*i]?);
        if own > LABEL_MAX_DIST {
            return None;
        }
        for (k, m) in mids.iter().enumerate() {
            if let (true, Some(m)) = (k != *i, m) {
                if c.distance(*m) < own + LABEL_MARGIN {
                    return None;
                }
            }
        }
        for (j, o, _) in &placed {
            if j != i && token("", *o).center.distance(mids[*i]?) < own + LABEL_MARGIN {
                return None;
            }
        }
    }
    Some(placed)
}

fn plan(p: &GenParams, rng: &mut Lcg) -> Option<(Vec<PNode>, Vec<PEdge>, Vec<(usize, BoundingBox, String)>)> {
    let mut b = Builder { p, rng, grid: Grid::new(p), nodes: Vec::new(), edges: Vec::new(), groups: 0 };
    if !b.build() {
        return None;
    }
    let Builder { mut nodes, edges, .. } = b;
    if !layout_ok(p, &nodes, &edges) {
        return None;
    }
    assign_words(rng, &mut nodes);
    let labels = place_labels(rng, &nodes, &edges)?;
    Some((nodes, edges, labels))
}

pub fn generate(p: &GenParams) -> Result<GroundTruthBundle, GenError> {
    p.validate()?;
    let mut rng = Lcg::new(p.seed);
    let mut planned = None;
    for _ in 0..MAX_ATTEMPTS {
        if let Some(x) = plan(p, &mut rng) {
            planned = Some(x);
            break;
        }
    }
    let Some((nodes, edges, labels)) = planned else {
        return Err(GenError::LayoutOverflow { node_count: p.node_count, capacity: p.capacity() });
    };
    Ok(render(p, &mut rng, &nodes, &edges, &labels))
}

fn node_id(i: usize) -> String {
    format!("n{:03}", i + 1)
}

fn render(p: &GenParams, rng: &mut Lcg, nodes: &[PNode], edges: &[PEdge], labels: &[(usize, BoundingBox, String)]) -> GroundTruthBundle {
    let t = p.line_thickness as i64;
    let mut canvas = Canvas::new(p.width, p.height);
    let mut node_boxes = Vec::with_capacity(nodes.len());
    let mut tokens = Vec::new();
    for n in nodes {
        let px = n.outline_pixels(t as f64);
        for &(x, y) in &px {
            canvas.set(x, y, true);
        }
        node_boxes.push(bbox_of(&px).expect("outline has pixels"));
        let widths: Vec<i64> = n.words.iter().map(|w| CHAR_WIDTH * w.chars().count() as i64).collect();
        let total = widths.iter().sum::<i64>() + CHAR_WIDTH * (n.words.len() as i64 - 1);
        let mut x = n.cx as f64 - total as f64 / 2.0;
        for (word, w) in n.words.iter().zip(&widths) {
            let b = text_box(x + *w as f64 / 2.0, n.cy as f64, word);
            tokens.push(token(word, b));
            x += (*w + CHAR_WIDTH) as f64;
        }
    }
    for (_, b, text) in labels {
        tokens.push(token(text, *b));
    }
    for tk in &tokens {
        let b = tk.bbox;
        canvas.fill_rect(b.x as i64, b.y as i64, b.right() as i64, b.bottom() as i64, true);
    }

    // Node ids follow the detector's ordering so ids line up on clean input.
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by_key(|&i| {
        let b = node_boxes[i];
        (b.y, b.x, b.h, b.w)
    });
    let mut id_of = vec![String::new(); nodes.len()];
    for (rank, &i) in order.iter().enumerate() {
        id_of[i] = node_id(rank);
    }

    struct Head {
        edge: usize,
        bbox: BoundingBox,
        tip: Point,
        blunt: Point,
        occluded: bool,
    }
    let mut heads = Vec::new();
    let mut gaps = Vec::new();
    let mut crossings = Vec::new();
    for (ei, e) in edges.iter().enumerate() {
        let n = e.path.len();
        let tip = e.path[n - 1];
        let dir = direction(e.path[n - 2], tip);
        let mode = if p.occlusion_prob > 0.0 && rng.chance(p.occlusion_prob) {
            Some(p.occlusion_modes[rng.below(p.occlusion_modes.len() as u32) as usize])
        } else {
            None
        };
        let (len, half) = if mode == Some(OcclusionMode::Shrink) { (5.0, 2.0) } else { (ARROW_LENGTH, ARROW_HALF_WIDTH) };
        let tipf = Point::new(tip.0 as f64, tip.1 as f64);
        let base = tipf - dir.scale(len);
        let blunt_px = (base.x.round() as i64, base.y.round() as i64);
        let mut stroke_path = e.path.clone();
        stroke_path[n - 1] = (blunt_px.0 + dir.x as i64, blunt_px.1 + dir.y as i64);
        for w in stroke_path.windows(2) {
            canvas.stroke(w[0], w[1], t, true);
        }
        let normal = dir.perp();
        let px = canvas.fill_triangle([tipf, base + normal.scale(half), base - normal.scale(half)]);
        let bbox = bbox_of(&px).expect("triangle has pixels");
        match mode {
            Some(OcclusionMode::CrossingStroke) => {
                let mid = tipf - dir.scale(len / 2.0);
                let a = mid + normal.scale(14.0);
                let b = mid - normal.scale(14.0);
                crossings.push(((a.x.round() as i64, a.y.round() as i64), (b.x.round() as i64, b.y.round() as i64)));
            }
            Some(OcclusionMode::ConnectorGap) => gaps.push(gap_for(e, blunt_px)),
            _ => {}
        }
        heads.push(Head { edge: ei, bbox, tip: tipf, blunt: base, occluded: mode.is_some() });
    }
    for g in gaps.into_iter().flatten() {
        canvas.stroke(g.0, g.1, t + 2, false);
    }
    for (a, b) in crossings {
        canvas.stroke(a, b, t, true);
    }

    if p.noise > 0.0 {
        for v in canvas.ink.iter_mut() {
            if rng.chance(p.noise) {
                *v = !*v;
            }
        }
    }

    heads.sort_by(|a, b| (a.bbox.y, a.bbox.x).cmp(&(b.bbox.y, b.bbox.x)).then(a.tip.x.total_cmp(&b.tip.x)));
    let mut arrowheads = Vec::new();
    let mut graph_edges = Vec::new();
    for (k, h) in heads.iter().enumerate() {
        let id = crate::arrowhead::arrow_id(k);
        let e = &edges[h.edge];
        arrowheads.push(ArrowheadRecord { id: id.clone(), bbox: h.bbox, tip: h.tip, blunt: h.blunt, occluded: h.occluded });
        graph_edges.push(GraphEdge {
            source: id_of[e.src].clone(),
            target: id_of[e.dst].clone(),
            kind: EdgeType::Flow,
            label: e.label,
            arrowhead: Some(id),
            path: to_points(&e.path),
        });
    }
    let graph_nodes = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| GraphNode { id: id_of[i].clone(), class: n.class, bbox: node_boxes[i], text: n.words.join(" ") })
        .collect();
    let mut graph = FlowGraph {
        context: None,
        ground_truth: true,
        nodes: graph_nodes,
        edges: graph_edges,
        arrowheads,
        diagnostics: Vec::new(),
    };
    graph.canonicalize();
    tokens.sort_by(|a, b| (a.bbox.y, a.bbox.x).cmp(&(b.bbox.y, b.bbox.x)));
    GroundTruthBundle { image: canvas.to_gray(), graph, sidecar: OcrSidecar { tokens } }
}

/// A stretch of the edge's own (unshared) final run to erase, if it is long
/// enough to leave stubs on both sides.
fn gap_for(e: &PEdge, blunt: (i64, i64)) -> Option<((i64, i64), (i64, i64))> {
    let n = e.path.len();
    let a = e.path[n - 2];
    let from = if seg(a, blunt).distance_to_point(Point::new(e.exclusive_from.0 as f64, e.exclusive_from.1 as f64)) < 0.5 {
        e.exclusive_from
    } else {
        a
    };
    let s = seg(from, blunt);
    if s.length() < GAP_LENGTH + 24.0 {
        return None;
    }
    let d = s.direction()?;
    let mid = s.p1.midpoint(s.p2);
    let g0 = mid - d.scale(GAP_LENGTH / 2.0);
    let g1 = mid + d.scale(GAP_LENGTH / 2.0);
    Some(((g0.x.round() as i64, g0.y.round() as i64), (g1.x.round() as i64, g1.y.round() as i64)))
}

/// A named set of generator parameters; instance seeds are filled in per
/// diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tier {
    pub name: String,
    pub params: GenParams,
    /// Inclusive node-count range; each instance draws its count from it.
    pub node_count: (usize, usize),
}

impl Tier {
    pub fn new(name: impl Into<String>, params: GenParams) -> Tier {
        let n = params.node_count;
        Tier { name: name.into(), params, node_count: (n, n) }
    }

    pub fn with_node_range(mut self, lo: usize, hi: usize) -> Tier {
        self.node_count = (lo.min(hi), lo.max(hi));
        self
    }

    /// Parameters for instance `i` of a corpus with base seed `base_seed`.
    pub fn instance(&self, base_seed: u64, i: usize) -> GenParams {
        let seed = base_seed.wrapping_add(i as u64);
        let (lo, hi) = self.node_count;
        let mut draw = Lcg::new(seed ^ 0x9e37_79b9_7f4a_7c15);
        let node_count = lo + draw.below((hi - lo + 1) as u32) as usize;
        GenParams { seed, node_count, ..self.params.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub tier: String,
    pub index: usize,
    pub seed: u64,
    pub node_count: usize,
    pub image: String,
    pub truth: String,
    pub ocr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub base_seed: u64,
    pub count: usize,
    pub tiers: Vec<Tier>,
    pub instances: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest, GenError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| GenError::Io { path: path.display().to_string(), message: e.to_string() })
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> GenError {
    GenError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), GenError> {
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Writes `count` diagrams per tier under `dir` plus `manifest.json`. A
/// single tier writes straight into `dir`; several tiers get one
/// subdirectory each.
pub fn generate_corpus(dir: &Path, base_seed: u64, count: usize, tiers: &[Tier]) -> Result<Manifest, GenError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for t in tiers {
        t.params.validate().or_else(|e| match e {
            // Per-instance counts are checked when drawn.
            GenError::LayoutOverflow { .. } if t.node_count.0 <= t.params.capacity() => Ok(()),
            e => Err(e),
        })?;
    }
    let mut instances = Vec::new();
    for t in tiers {
        let sub = if tiers.len() > 1 { t.name.clone() } else { String::new() };
        let out = dir.join(&sub);
        std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
        for i in 0..count {
            let params = t.instance(base_seed, i);
            let b = generate(&params)?;
            let rel = |f: String| if sub.is_empty() { f } else { format!("{sub}/{f}") };
            let (img, truth, ocr) = (format!("diagram_{i}.png"), format!("diagram_{i}.truth.json"), format!("diagram_{i}.ocr.json"));
            let png = b.image.to_png_bytes().map_err(|e| io_err(&out.join(&img), e))?;
            write(&out.join(&img), &png)?;
            write(&out.join(&truth), &b.graph.serialize())?;
            write(&out.join(&ocr), b.sidecar.to_json().as_bytes())?;
            instances.push(ManifestEntry {
                tier: t.name.clone(),
                index: i,
                seed: params.seed,
                node_count: params.node_count,
                image: rel(img),
                truth: rel(truth),
                ocr: rel(ocr),
            });
        }
    }
    let manifest = Manifest { base_seed, count, tiers: tiers.to_vec(), instances };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write(&dir.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(seed: u64, n: usize, branch: f64) -> GenParams {
        GenParams { seed, node_count: n, branch_prob: branch, ..Default::default() }
    }

    #[test]
    fn two_nodes_one_edge() {
        let b = generate(&params(1, 2, 0.0)).unwrap();
        assert_eq!(b.graph.nodes.len(), 2);
        assert_eq!(b.graph.edges.len(), 1);
        assert_eq!(b.graph.arrowheads.len(), 1);
        let again = generate(&params(1, 2, 0.0)).unwrap();
        assert_eq!(b.image.to_png_bytes().unwrap(), again.image.to_png_bytes().unwrap());
        assert_eq!(b.graph.serialize(), again.graph.serialize());
    }

    #[test]
    fn full_branching_labels_every_decision() {
        let b = generate(&params(7, 10, 1.0)).unwrap();
        for n in b.graph.nodes.iter().filter(|n| n.class == NodeClass::Decision) {
            let out: Vec<_> = b.graph.edges.iter().filter(|e| e.source == n.id).collect();
            assert_eq!(out.len(), 2, "decision {}", n.id);
            let mut labels: Vec<_> = out.iter().map(|e| e.label.unwrap()).collect();
            labels.sort();
            assert_eq!(labels, vec![LabelValue::Ja, LabelValue::Nee]);
        }
    }

    #[test]
    fn full_occlusion_flags_every_head() {
        let p = GenParams { occlusion_prob: 1.0, ..params(3, 8, 0.5) };
        let b = generate(&p).unwrap();
        assert!(b.graph.arrowheads.iter().all(|a| a.occluded));
    }

    #[test]
    fn overflow_is_reported() {
        assert!(matches!(generate(&params(1, 500, 0.5)), Err(GenError::LayoutOverflow { .. })));
    }

    #[test]
    fn structure_is_a_tree_from_the_start_terminator() {
        for seed in 0..20 {
            let b = generate(&params(seed, 12, 0.6)).unwrap();
            let g = &b.graph;
            g.validate().unwrap();
            assert_eq!(g.edges.len(), g.nodes.len() - 1);
            let start = g.nodes.iter().find(|n| n.text == "start").unwrap();
            let mut seen = vec![start.id.clone()];
            let mut i = 0;
            while i < seen.len() {
                let cur = seen[i].clone();
                for e in g.edges.iter().filter(|e| e.source == cur) {
                    seen.push(e.target.clone());
                }
                i += 1;
            }
            assert_eq!(seen.len(), g.nodes.len());
            for e in &g.edges {
                assert!(g.arrowheads.iter().any(|a| Some(&a.id) == e.arrowhead.as_ref()));
            }
        }
    }
}
