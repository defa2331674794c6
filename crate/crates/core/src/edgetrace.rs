//! Edge reconstruction: from each arrowhead's blunt end, walk the segment
//! graph back to the nearest reachable node.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use crate::arrowhead::{assign_target, Arrowhead};
use crate::geometry::angle_between_lines;
use crate::labels::LabelValue;
use crate::nodedetect::DetectedNode;
use crate::raster::BinaryImage;
use crate::{Point, Segment};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceParams {
    pub join_eps: f64,
    pub start_tol: f64,
    pub theta_align_deg: f64,
    pub node_prox: f64,
    /// Most segments a single trace may pass through.
    pub max_depth: usize,
    pub target_tol: f64,
    /// Width (px) of the ink across a segment's last stretch that marks the
    /// end as sitting inside an arrowhead. 0 disables the check.
    pub cap_width: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        TraceParams { join_eps: 8.0, start_tol: 10.0, theta_align_deg: 30.0, node_prox: 12.0, max_depth: 50, target_tol: 15.0, cap_width: 7.0 }
    }
}

/// Where segment `i` meets segment `j`: the point on `i`, the point on `j`,
/// and the gap between them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Junction {
    pub on_from: Point,
    pub on_to: Point,
    pub gap: f64,
}

fn junction(a: &Segment, b: &Segment) -> Junction {
    let mut best = Junction { on_from: a.p1, on_to: a.p1, gap: f64::INFINITY };
    for e in [a.p1, a.p2] {
        let (q, _) = b.closest_point(e);
        let d = e.distance(q);
        if d < best.gap {
            best = Junction { on_from: e, on_to: q, gap: d };
        }
    }
    for f in [b.p1, b.p2] {
        let (q, _) = a.closest_point(f);
        let d = f.distance(q);
        if d < best.gap {
            best = Junction { on_from: q, on_to: f, gap: d };
        }
    }
    best
}

/// Segments plus endpoint-proximity adjacency (corners and T-junctions).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGraph {
    pub segments: Vec<Segment>,
    /// Sorted `(i, j)` pairs with `i < j`.
    pub adjacency: Vec<(usize, usize)>,
    /// Per segment, whether `p1` / `p2` end inside an arrowhead.
    pub capped: Vec<[bool; 2]>,
    neighbors: Vec<Vec<(usize, Junction)>>,
}

impl SegmentGraph {
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors[i].iter().map(|&(j, _)| j)
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].iter().any(|&(k, _)| k == j)
    }

    /// Flags segment ends that run into a filled arrowhead in `img` (the
    /// node-masked image the segments came from).
    pub fn mark_capped_ends(&mut self, img: &BinaryImage, cap_width: f64) {
        if cap_width <= 0.0 {
            return;
        }
        self.capped = self.segments.iter().map(|s| [end_is_capped(img, s.p2, s.p1, cap_width), end_is_capped(img, s.p1, s.p2, cap_width)]).collect();
    }

    fn is_capped_end(&self, seg: usize, at: Point) -> bool {
        let s = &self.segments[seg];
        let c = self.capped[seg];
        (c[0] && s.p1.distance(at) < 1e-6) || (c[1] && s.p2.distance(at) < 1e-6)
    }
}

/// Symmetric ink run across the line at `p`, perpendicular to `dir`.
fn cross_width(img: &BinaryImage, p: Point, dir: Point, limit: i64) -> i64 {
    let n = dir.perp();
    let ink = |k: i64| {
        let q = p + n.scale(k as f64);
        img.ink_at(q.x.round() as i64, q.y.round() as i64)
    };
    let side = |sign: i64| (1..=limit).take_while(|&k| ink(sign * k)).count() as i64;
    if !ink(0) {
        return 0;
    }
    2 * side(1).min(side(-1)) + 1
}

/// Whether the last stretch of the segment from `from` to `end` widens into
/// a head: several cross sections between `cap_width` and three times that.
fn end_is_capped(img: &BinaryImage, from: Point, end: Point, cap_width: f64) -> bool {
    let Some(d) = (end - from).normalized() else { return false };
    let limit = (3.0 * cap_width).ceil() as i64;
    let reach = 16.0f64.min(from.distance(end));
    let wide = (0..=reach as i64)
        .map(|k| cross_width(img, end - d.scale(k as f64), d, limit) as f64)
        .filter(|&w| w >= cap_width && w < 3.0 * cap_width)
        .count();
    wide >= 3
}

pub fn build_segment_graph(segs: &[Segment], join_eps: f64) -> SegmentGraph {
    let n = segs.len();
    let mut adjacency = Vec::new();
    let mut neighbors = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            let jn = junction(&segs[i], &segs[j]);
            if jn.gap <= join_eps {
                adjacency.push((i, j));
                neighbors[i].push((j, jn));
                neighbors[j].push((i, Junction { on_from: jn.on_to, on_to: jn.on_from, gap: jn.gap }));
            }
        }
    }
    SegmentGraph { segments: segs.to_vec(), adjacency, capped: vec![[false; 2]; n], neighbors }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracedEdge {
    pub source: String,
    pub target: String,
    pub arrowhead: String,
    /// From the source attachment to the arrowhead tip.
    pub path: Vec<Point>,
    pub label: Option<LabelValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NotTraced {
    NoTarget,
    NoStartSegment,
    NoSourceReached,
    MaxDepthExceeded,
}

impl NotTraced {
    pub fn as_str(self) -> &'static str {
        match self {
            NotTraced::NoTarget => "no_target",
            NotTraced::NoStartSegment => "no_start_segment",
            NotTraced::NoSourceReached => "no_source_reached",
            NotTraced::MaxDepthExceeded => "max_depth_exceeded",
        }
    }
}

impl fmt::Display for NotTraced {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Search state: a point on a segment, reached through some chain of
/// segments.
#[derive(Clone, Copy)]
struct Station {
    seg: usize,
    at: Point,
    depth: usize,
    /// Index of the station we came from, and whether the step crossed to a
    /// new segment.
    prev: Option<(usize, bool)>,
}

#[derive(PartialEq)]
struct Queued(f64, usize);

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Nearest node (other than `exclude`) within `prox` of `p`; ties go to the
/// smaller id.
fn node_near<'a>(p: Point, nodes: &'a [DetectedNode], exclude: &str, prox: f64) -> Option<&'a DetectedNode> {
    nodes
        .iter()
        .filter(|n| n.id != exclude)
        .map(|n| (n.bbox.distance_to(p), n))
        .filter(|(d, _)| *d <= prox)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)))
        .map(|(_, n)| n)
}

pub fn trace_edge(a: &Arrowhead, g: &SegmentGraph, nodes: &[DetectedNode], p: &TraceParams) -> Result<TracedEdge, NotTraced> {
    let target = assign_target(a, nodes, p.target_tol).ok_or(NotTraced::NoTarget)?;
    let back = a.direction.scale(-1.0);
    let align = p.theta_align_deg.to_radians();

    let mut stations: Vec<Station> = Vec::new();
    let mut cost: Vec<f64> = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut start_dir: Vec<Option<Point>> = Vec::new();

    for (i, s) in g.segments.iter().enumerate() {
        let (q, _) = s.closest_point(a.blunt);
        let d = q.distance(a.blunt);
        if d > p.start_tol {
            continue;
        }
        let back_angle = back.y.atan2(back.x).rem_euclid(std::f64::consts::PI);
        if angle_between_lines(s.angle(), back_angle) > align {
            continue;
        }
        // The segment must actually extend away from the tip.
        let reach = [s.p1, s.p2].iter().map(|&e| (e - q).dot(back)).fold(f64::MIN, f64::max);
        if reach <= 1.0 {
            continue;
        }
        stations.push(Station { seg: i, at: q, depth: 1, prev: None });
        cost.push(d);
        start_dir.push(Some(back));
        heap.push(Queued(d, stations.len() - 1));
    }
    if stations.is_empty() {
        return Err(NotTraced::NoStartSegment);
    }

    let mut done = vec![false; stations.len()];
    let mut terminals: Vec<(f64, String, usize)> = Vec::new();
    let mut depth_hit = false;

    while let Some(Queued(c, si)) = heap.pop() {
        if done[si] || c > cost[si] {
            continue;
        }
        done[si] = true;
        let st = stations[si];
        // A line that ends inside another arrowhead enters its node there;
        // it cannot be where this edge leaves its source.
        if st.prev.is_some() && !g.is_capped_end(st.seg, st.at) {
            if let Some(n) = node_near(st.at, nodes, &target, p.node_prox) {
                terminals.push((c, n.id.clone(), si));
                continue;
            }
        }
        let seg = g.segments[st.seg];
        let mut moves: Vec<(Point, Option<(usize, Junction)>)> = vec![(seg.p1, None), (seg.p2, None)];
        for &(j, jn) in &g.neighbors[st.seg] {
            moves.push((jn.on_from, Some((j, jn))));
        }
        for (exit, cross) in moves {
            if let Some(dir) = start_dir[si] {
                if (exit - st.at).dot(dir) < -1.0 {
                    continue;
                }
            }
            let along = exit.distance(st.at);
            // Walk along this segment to the exit point.
            let walked = push_station(
                &mut stations,
                &mut cost,
                &mut done,
                &mut start_dir,
                &mut heap,
                Station { seg: st.seg, at: exit, depth: st.depth, prev: Some((si, false)) },
                c + along,
            );
            let Some((j, jn)) = cross else { continue };
            // When the exit point is already known at equal or lower cost, its
            // own expansion handles the crossing.
            let from = if along < 1e-6 {
                si
            } else if let Some(k) = walked {
                k
            } else {
                continue;
            };
            if st.depth + 1 > p.max_depth {
                depth_hit = true;
                continue;
            }
            push_station(
                &mut stations,
                &mut cost,
                &mut done,
                &mut start_dir,
                &mut heap,
                Station { seg: j, at: jn.on_to, depth: st.depth + 1, prev: Some((from, true)) },
                c + along + jn.gap,
            );
        }
    }

    let Some((_, source, si)) = terminals
        .into_iter()
        .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
    else {
        return Err(if depth_hit { NotTraced::MaxDepthExceeded } else { NotTraced::NoSourceReached });
    };

    let mut pts = Vec::new();
    let mut cur = Some(si);
    while let Some(i) = cur {
        let st = stations[i];
        match st.prev {
            Some((pi, true)) => {
                let from = stations[pi];
                let corner = corner_point(&g.segments[from.seg], &g.segments[st.seg], from.at, st.at, p.join_eps);
                pts.push(corner.unwrap_or(st.at));
                if corner.is_none() {
                    pts.push(from.at);
                }
                cur = from.prev.map(|(k, _)| k);
                continue;
            }
            Some((pi, false)) => {
                pts.push(st.at);
                cur = Some(pi);
            }
            None => {
                pts.push(st.at);
                cur = None;
            }
        }
    }
    pts.push(a.tip);
    Ok(TracedEdge { source, target, arrowhead: a.id.clone(), path: simplify_path(&pts), label: None })
}

/// Adds or improves a station; returns its index when it was (re)queued.
fn push_station(
    stations: &mut Vec<Station>,
    cost: &mut Vec<f64>,
    done: &mut Vec<bool>,
    start_dir: &mut Vec<Option<Point>>,
    heap: &mut BinaryHeap<Queued>,
    st: Station,
    c: f64,
) -> Option<usize> {
    let existing = stations
        .iter()
        .position(|o| o.seg == st.seg && o.at.distance(st.at) < 1e-6);
    match existing {
        Some(k) if done[k] || cost[k] <= c => None,
        Some(k) => {
            stations[k] = st;
            cost[k] = c;
            heap.push(Queued(c, k));
            Some(k)
        }
        None => {
            stations.push(st);
            cost.push(c);
            done.push(false);
            start_dir.push(None);
            heap.push(Queued(c, stations.len() - 1));
            Some(stations.len() - 1)
        }
    }
}

/// Intersection of the two segments' lines when they meet at a clear angle
/// and the intersection is close to both junction points.
fn corner_point(a: &Segment, b: &Segment, pa: Point, pb: Point, eps: f64) -> Option<Point> {
    if angle_between_lines(a.angle(), b.angle()) < 20f64.to_radians() {
        return None;
    }
    let x = a.line_intersection(b)?;
    (x.distance(pa) <= 2.0 * eps && x.distance(pb) <= 2.0 * eps).then_some(x)
}

/// Drops near-duplicate vertices and vertices on a straight run.
pub fn simplify_path(pts: &[Point]) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(pts.len());
    for &p in pts {
        if out.last().is_some_and(|l: &Point| l.distance(p) < 2.0) {
            continue;
        }
        out.push(p);
    }
    if out.len() < 2 {
        if let (Some(&f), Some(&l)) = (pts.first(), pts.last()) {
            return vec![f, l];
        }
        return out;
    }
    let last = *out.last().unwrap();
    if out.len() >= 2 && pts.last() != Some(&last) {
        *out.last_mut().unwrap() = *pts.last().unwrap();
    }
    let mut i = 1;
    while i + 1 < out.len() {
        let chord = Segment::new(out[i - 1], out[i + 1]);
        if chord.distance_to_point(out[i]) <= 1.5 {
            out.remove(i);
        } else {
            i += 1;
        }
    }
    out
}

/// Outcome of tracing every arrowhead.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceReport {
    pub edges: Vec<TracedEdge>,
    /// `(arrowhead id, reason)` for arrowheads that produced no edge.
    pub failures: Vec<(String, NotTraced)>,
}

/// Traces each arrowhead independently; output ordered by arrowhead id.
pub fn trace_all(arrows: &[Arrowhead], g: &SegmentGraph, nodes: &[DetectedNode], p: &TraceParams) -> TraceReport {
    let mut sorted: Vec<&Arrowhead> = arrows.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut report = TraceReport::default();
    for a in sorted {
        match trace_edge(a, g, nodes, p) {
            Ok(e) => report.edges.push(e),
            Err(r) => report.failures.push((a.id.clone(), r)),
        }
    }
    report
}
