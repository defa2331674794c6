//! Arrowhead detection and orientation.
//!
//! Filled heads are found as the compact blobs that survive a morphological
//! opening sized just above the stroke width, which strips connector lines
//! away from the heads they touch. The blob is then regrown into the ink
//! to recover the thin tip, and a triangle fitted to its convex hull gives
//! the tip and the blunt (base-midpoint) end.

use std::collections::HashSet;

use crate::bbox::BoundingBox;
use crate::geometry::{convex_hull, max_area_triangle, polygon_area, polygon_perimeter, triangle_area};
use crate::nodedetect::DetectedNode;
use crate::raster::{mask_node_regions, pixel_bbox, BinaryImage, Components, Connectivity};
use crate::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct Arrowhead {
    pub id: String,
    pub bbox: BoundingBox,
    pub tip: Point,
    pub blunt: Point,
    /// Unit vector from `blunt` toward `tip`.
    pub direction: Point,
}

impl Arrowhead {
    /// Builds an arrowhead, deriving `direction`; `None` if `tip == blunt`.
    pub fn new(id: impl Into<String>, bbox: BoundingBox, tip: Point, blunt: Point) -> Option<Self> {
        let direction = (tip - blunt).normalized()?;
        Some(Arrowhead { id: id.into(), bbox, tip, blunt, direction })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrowParams {
    pub area_min: f64,
    pub area_max: f64,
    pub solidity_min: f64,
    pub triangularity_min: f64,
    /// Widest connector stroke (px) that the opening should remove.
    pub stroke_width: u32,
    /// Tip-to-node distance for target assignment.
    pub target_tol: f64,
    /// Median-length ratio below which orientation falls back to the
    /// nearest-node rule.
    pub ambiguity_ratio: f64,
    /// Also look for open (V-stroke) heads.
    pub open_heads: bool,
    pub open_angle_min_deg: f64,
    pub open_angle_max_deg: f64,
    /// Longest stroke (px) accepted as one arm of an open head.
    pub open_arm_max: f64,
}

impl Default for ArrowParams {
    fn default() -> Self {
        ArrowParams {
            area_min: 30.0,
            area_max: 400.0,
            solidity_min: 0.8,
            triangularity_min: 0.65,
            stroke_width: 2,
            target_tol: 15.0,
            ambiguity_ratio: 1.05,
            open_heads: false,
            open_angle_min_deg: 20.0,
            open_angle_max_deg: 90.0,
            open_arm_max: 20.0,
        }
    }
}

/// `a001`, `a002`, ...
pub fn arrow_id(index: usize) -> String {
    format!("a{:03}", index + 1)
}

/// Area of a pixel set's convex region by Pick's theorem, so that a convex
/// digital shape has solidity close to one.
fn pixel_hull_area(hull: &[Point]) -> f64 {
    polygon_area(hull) + polygon_perimeter(hull) / 2.0 + 1.0
}

/// Tip and blunt end from three triangle vertices. The tip is the vertex
/// farthest from the midpoint of the other two; `None` when that choice is
/// not clear by `ratio`.
pub fn orient_triangle(v: [Point; 3], ratio: f64) -> Option<(Point, Point)> {
    let mut medians: Vec<(f64, usize)> = (0..3)
        .map(|i| (v[i].distance(v[(i + 1) % 3].midpoint(v[(i + 2) % 3])), i))
        .collect();
    medians.sort_by(|a, b| b.0.total_cmp(&a.0));
    if medians[0].0 < medians[1].0 * ratio {
        return None;
    }
    let i = medians[0].1;
    Some((v[i], v[(i + 1) % 3].midpoint(v[(i + 2) % 3])))
}

/// Fallback orientation: the vertex nearest a node is the tip.
fn orient_by_nodes(v: [Point; 3], nodes: &[DetectedNode]) -> Option<(Point, Point)> {
    let dist = |p: Point| nodes.iter().map(|n| n.bbox.distance_to(p)).fold(f64::INFINITY, f64::min);
    let i = (0..3).min_by(|&a, &b| dist(v[a]).total_cmp(&dist(v[b])))?;
    if !dist(v[i]).is_finite() {
        return None;
    }
    Some((v[i], v[(i + 1) % 3].midpoint(v[(i + 2) % 3])))
}

fn to_points(px: &[(u32, u32)]) -> Vec<Point> {
    px.iter().map(|&(x, y)| Point::new(x as f64, y as f64)).collect()
}

fn triangle_bbox(v: &[Point; 3]) -> BoundingBox {
    let xs = v.iter().map(|p| p.x.round().max(0.0) as u32);
    let ys = v.iter().map(|p| p.y.round().max(0.0) as u32);
    let (x0, x1) = (xs.clone().min().unwrap(), xs.max().unwrap());
    let (y0, y1) = (ys.clone().min().unwrap(), ys.max().unwrap());
    BoundingBox::from_corners(x0, y0, x1, y1)
}

/// Fits a triangle to `pixels` and orients it. Returns `(tip, blunt, bbox)`.
fn orient_pixels(pixels: &[(u32, u32)], nodes: &[DetectedNode], p: &ArrowParams) -> Option<(Point, Point, BoundingBox)> {
    let hull = convex_hull(&to_points(pixels));
    let idx = max_area_triangle(&hull)?;
    let v = [hull[idx[0]], hull[idx[1]], hull[idx[2]]];
    let (tip, blunt) = orient_triangle(v, p.ambiguity_ratio).or_else(|| orient_by_nodes(v, nodes))?;
    if tip.distance(blunt) < 1.0 {
        return None;
    }
    Some((tip, blunt, triangle_bbox(&v)))
}

pub fn detect_arrowheads(img: &BinaryImage, nodes: &[DetectedNode], p: &ArrowParams) -> Vec<Arrowhead> {
    let boxes: Vec<BoundingBox> = nodes.iter().map(|n| n.bbox).collect();
    let work = mask_node_regions(img, &boxes, 0);
    let core = work.open(p.stroke_width + 1);
    let comps = Components::label(core.width(), core.height(), Connectivity::Eight, |x, y| core.get(x, y));
    let regrow = (p.stroke_width + 3) as i64;

    let mut found: Vec<(BoundingBox, Point, Point)> = Vec::new();
    for comp in &comps.members {
        let Some(cb) = pixel_bbox(comp) else { continue };
        // Ink within one pixel of the core: the core plus the rim the
        // opening shaved off.
        let rim = ink_near(&work, comp, cb, 1);
        let area = rim.len() as f64;
        if area < p.area_min || area > p.area_max {
            continue;
        }
        let core_pts = to_points(comp);
        let hull = convex_hull(&core_pts);
        if hull.len() < 3 {
            continue;
        }
        let solidity = comp.len() as f64 / pixel_hull_area(&hull);
        if solidity < p.solidity_min {
            continue;
        }
        // Shape test on the rim, which still has the tip the opening removed.
        let rim_hull = convex_hull(&to_points(&rim));
        let Some(t) = max_area_triangle(&rim_hull) else { continue };
        let triangularity = triangle_area(rim_hull[t[0]], rim_hull[t[1]], rim_hull[t[2]]) / polygon_area(&rim_hull);
        if triangularity < p.triangularity_min {
            continue;
        }
        let grown = connected_within(&work, comp, &ink_near(&work, comp, cb, regrow));
        let Some((tip, blunt, bbox)) = orient_pixels(&grown, nodes, p) else { continue };
        if boxes.iter().any(|b| b.intersects(&bbox)) {
            continue;
        }
        found.push((bbox, tip, blunt));
    }

    if p.open_heads {
        for (tip, blunt, bbox) in detect_open_heads(&work, p) {
            if boxes.iter().any(|b| b.intersects(&bbox)) || found.iter().any(|f| f.0.intersects(&bbox)) {
                continue;
            }
            found.push((bbox, tip, blunt));
        }
    }

    found.sort_by(|a, b| (a.0.y, a.0.x).cmp(&(b.0.y, b.0.x)).then(a.1.x.total_cmp(&b.1.x)));
    found
        .into_iter()
        .enumerate()
        .filter_map(|(i, (bbox, tip, blunt))| Arrowhead::new(arrow_id(i), bbox, tip, blunt))
        .collect()
}

/// The part of `allowed` 8-connected to `seed`.
fn connected_within(img: &BinaryImage, seed: &[(u32, u32)], allowed: &[(u32, u32)]) -> Vec<(u32, u32)> {
    let allowed: HashSet<(u32, u32)> = allowed.iter().copied().collect();
    let mut seen: HashSet<(u32, u32)> = seed.iter().copied().filter(|p| allowed.contains(p)).collect();
    let mut stack: Vec<(u32, u32)> = seen.iter().copied().collect();
    while let Some((x, y)) = stack.pop() {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || !img.ink_at(nx, ny) {
                    continue;
                }
                let q = (nx as u32, ny as u32);
                if allowed.contains(&q) && seen.insert(q) {
                    stack.push(q);
                }
            }
        }
    }
    let mut out: Vec<(u32, u32)> = seen.into_iter().collect();
    out.sort_unstable_by_key(|&(x, y)| (y, x));
    out
}

/// Ink pixels of `img` within Chebyshev distance `r` of any pixel in `seed`.
fn ink_near(img: &BinaryImage, seed: &[(u32, u32)], sb: BoundingBox, r: i64) -> Vec<(u32, u32)> {
    let x0 = (sb.x as i64 - r).max(0);
    let y0 = (sb.y as i64 - r).max(0);
    let x1 = (sb.right() as i64 - 1 + r).min(img.width() as i64 - 1);
    let y1 = (sb.bottom() as i64 - 1 + r).min(img.height() as i64 - 1);
    let (lw, lh) = ((x1 - x0 + 1) as usize, (y1 - y0 + 1) as usize);
    let mut near = vec![false; lw * lh];
    for &(sx, sy) in seed {
        for y in (sy as i64 - r).max(y0)..=(sy as i64 + r).min(y1) {
            for x in (sx as i64 - r).max(x0)..=(sx as i64 + r).min(x1) {
                near[(y - y0) as usize * lw + (x - x0) as usize] = true;
            }
        }
    }
    let mut out = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            if near[(y - y0) as usize * lw + (x - x0) as usize] && img.get(x as u32, y as u32) {
                out.push((x as u32, y as u32));
            }
        }
    }
    out
}

/// Orients an externally detected arrowhead from the ink inside its box.
pub fn orient_in_bbox(
    img: &BinaryImage,
    nodes: &[DetectedNode],
    id: &str,
    bbox: BoundingBox,
    p: &ArrowParams,
) -> Option<Arrowhead> {
    let boxes: Vec<BoundingBox> = nodes.iter().map(|n| n.bbox).collect();
    let work = mask_node_regions(img, &boxes, 0);
    let region = bbox.grown_clamped(1, img.width(), img.height())?;
    let mut pixels = Vec::new();
    for y in region.y..region.bottom() {
        for x in region.x..region.right() {
            if work.get(x, y) {
                pixels.push((x, y));
            }
        }
    }
    let (tip, blunt, _) = orient_pixels(&pixels, nodes, p)?;
    Arrowhead::new(id, bbox, tip, blunt)
}

/// Id of the node whose box is nearest to the tip, if within `tol`.
/// Ties go to the smaller id.
pub fn assign_target(a: &Arrowhead, nodes: &[DetectedNode], tol: f64) -> Option<String> {
    nodes
        .iter()
        .map(|n| (n.bbox.distance_to(a.tip), n.id.as_str()))
        .filter(|(d, _)| *d <= tol)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)))
        .map(|(_, id)| id.to_string())
}

// ---------------------------------------------------------------------------
// Open (V-stroke) heads: skeleton junctions where two short arms meet.

/// Guo-Hall thinning to a one pixel wide, 8-connected skeleton.
pub fn skeletonize(img: &BinaryImage) -> BinaryImage {
    let mut cur = img.clone();
    let mut candidates: Vec<(u32, u32)> = (0..img.height())
        .flat_map(|y| (0..img.width()).map(move |x| (x, y)))
        .filter(|&(x, y)| img.get(x, y))
        .collect();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for &(x, y) in &candidates {
                if !cur.get(x, y) {
                    continue;
                }
                let (xi, yi) = (x as i64, y as i64);
                let at = |dx: i64, dy: i64| cur.ink_at(xi + dx, yi + dy) as u8;
                let (p2, p3, p4, p5) = (at(0, -1), at(1, -1), at(1, 0), at(1, 1));
                let (p6, p7, p8, p9) = (at(0, 1), at(-1, 1), at(-1, 0), at(-1, -1));
                let c = ((p2 == 0) & (p3 | p4 == 1)) as u8
                    + ((p4 == 0) & (p5 | p6 == 1)) as u8
                    + ((p6 == 0) & (p7 | p8 == 1)) as u8
                    + ((p8 == 0) & (p9 | p2 == 1)) as u8;
                let n1 = (p9 | p2) + (p3 | p4) + (p5 | p6) + (p7 | p8);
                let n2 = (p2 | p3) + (p4 | p5) + (p6 | p7) + (p8 | p9);
                let n = n1.min(n2);
                let m = if pass == 0 { (p6 | p7 | (1 - p9)) & p8 } else { (p2 | p3 | (1 - p5)) & p4 };
                if c == 1 && (2..=3).contains(&n) && m == 0 {
                    remove.push((x, y));
                }
            }
            for &(x, y) in &remove {
                cur.set(x, y, false);
            }
            changed |= !remove.is_empty();
        }
        candidates.retain(|&(x, y)| cur.get(x, y));
        if !changed {
            return cur;
        }
    }
}

fn skel_neighbors(s: &BinaryImage, x: u32, y: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            if (dx, dy) != (0, 0) && s.ink_at(x as i64 + dx, y as i64 + dy) {
                out.push(((x as i64 + dx) as u32, (y as i64 + dy) as u32));
            }
        }
    }
    out
}

fn is_adjacent(a: (u32, u32), b: (u32, u32)) -> bool {
    a != b && a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1
}

/// Follows a skeleton branch until it ends, meets another junction, or
/// runs for `max_len` pixels. Returns the last pixel, whether the branch
/// ended freely, and its length.
fn walk_branch(s: &BinaryImage, visited: &mut HashSet<(u32, u32)>, first: (u32, u32), max_len: usize) -> ((u32, u32), bool, usize) {
    let mut cur = first;
    let mut len = 1;
    loop {
        let next: Vec<(u32, u32)> = skel_neighbors(s, cur.0, cur.1).into_iter().filter(|q| !visited.contains(q)).collect();
        if next.is_empty() {
            return (cur, true, len);
        }
        if len >= max_len {
            return (cur, false, len);
        }
        let compact = next.iter().all(|&a| next.iter().all(|&b| a == b || is_adjacent(a, b)));
        if !compact {
            return (cur, false, len);
        }
        let step = next
            .iter()
            .copied()
            .find(|q| q.0 == cur.0 || q.1 == cur.1)
            .unwrap_or(next[0]);
        visited.extend(next.iter().copied());
        cur = step;
        len += 1;
    }
}

fn detect_open_heads(work: &BinaryImage, p: &ArrowParams) -> Vec<(Point, Point, BoundingBox)> {
    let skel = skeletonize(work);
    let (min_a, max_a) = (p.open_angle_min_deg.to_radians(), p.open_angle_max_deg.to_radians());
    let junctions = Components::label(skel.width(), skel.height(), Connectivity::Eight, |x, y| {
        skel.get(x, y) && skel_neighbors(&skel, x, y).len() >= 3
    });
    let mut out = Vec::new();
    for cluster in &junctions.members {
        let members: HashSet<(u32, u32)> = cluster.iter().copied().collect();
        let mut starts: Vec<(u32, u32)> = cluster
            .iter()
            .flat_map(|&(x, y)| skel_neighbors(&skel, x, y))
            .filter(|q| !members.contains(q))
            .collect();
        starts.sort();
        starts.dedup();
        let mut groups: Vec<Vec<(u32, u32)>> = Vec::new();
        for q in starts {
            match groups.iter_mut().find(|g| g.iter().any(|&r| is_adjacent(r, q))) {
                Some(g) => g.push(q),
                None => groups.push(vec![q]),
            }
        }
        if groups.len() != 3 {
            continue;
        }
        let n = cluster.len() as f64;
        let j = Point::new(
            cluster.iter().map(|c| c.0 as f64).sum::<f64>() / n,
            cluster.iter().map(|c| c.1 as f64).sum::<f64>() / n,
        );
        let mut visited: HashSet<(u32, u32)> = members.clone();
        for g in &groups {
            visited.extend(g.iter().copied());
        }
        let arms: Vec<(Point, bool, usize)> = groups
            .iter()
            .map(|g| {
                let (end, free, len) = walk_branch(&skel, &mut visited, g[0], 4 * p.open_arm_max as usize);
                (Point::new(end.0 as f64, end.1 as f64), free, len)
            })
            .collect();
        let short: Vec<usize> = (0..3)
            .filter(|&i| arms[i].1 && arms[i].0.distance(j) <= p.open_arm_max && arms[i].2 >= 4)
            .collect();
        if short.len() != 2 {
            continue;
        }
        let long = (0..3).find(|i| !short.contains(i)).unwrap();
        let (a, b) = (arms[short[0]].0, arms[short[1]].0);
        let (Some(ua), Some(ub)) = ((a - j).normalized(), (b - j).normalized()) else { continue };
        let angle = ua.dot(ub).clamp(-1.0, 1.0).acos();
        if angle < min_a || angle > max_a {
            continue;
        }
        let blunt = a.midpoint(b);
        // The shaft must leave from the blunt side.
        match (arms[long].0 - j).normalized() {
            Some(ul) if ul.dot(blunt - j) > 0.0 => {}
            _ => continue,
        }
        out.push((j, blunt, triangle_bbox(&[j, a, b])));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nodedetect::NodeClass;

    fn fill_triangle(img: &mut BinaryImage, a: Point, b: Point, c: Point) {
        for y in 0..img.height() {
            for x in 0..img.width() {
                let p = Point::new(x as f64, y as f64);
                let s1 = (b - a).cross(p - a);
                let s2 = (c - b).cross(p - b);
                let s3 = (a - c).cross(p - c);
                let neg = s1 < -1e-9 || s2 < -1e-9 || s3 < -1e-9;
                let pos = s1 > 1e-9 || s2 > 1e-9 || s3 > 1e-9;
                if !(neg && pos) {
                    img.set(x, y, true);
                }
            }
        }
    }

    fn node(id: &str, b: [u32; 4]) -> DetectedNode {
        DetectedNode {
            id: id.into(),
            class: NodeClass::Process,
            bbox: BoundingBox::new(b[0], b[1], b[2], b[3]).unwrap(),
            confidence: 1.0,
            text: String::new(),
        }
    }

    #[test]
    fn blank_has_no_arrowheads() {
        assert!(detect_arrowheads(&BinaryImage::blank(40, 40), &[], &ArrowParams::default()).is_empty());
    }

    #[test]
    fn upward_triangle_orientation() {
        let mut img = BinaryImage::blank(100, 40);
        fill_triangle(&mut img, Point::new(50.0, 10.0), Point::new(44.0, 22.0), Point::new(56.0, 22.0));
        let a = detect_arrowheads(&img, &[], &ArrowParams::default());
        assert_eq!(a.len(), 1);
        let a = &a[0];
        assert!(a.tip.distance(Point::new(50.0, 10.0)) <= 2.0, "{:?}", a.tip);
        assert!(a.blunt.distance(Point::new(50.0, 22.0)) <= 2.0, "{:?}", a.blunt);
        assert!(a.direction.distance(Point::new(0.0, -1.0)) <= 0.05);
        assert!((a.direction.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn head_attached_to_shaft_and_node() {
        // Node below, head pointing down onto it, shaft coming from above.
        let mut img = BinaryImage::blank(200, 200);
        let n = node("n001", [60, 120, 80, 40]);
        for y in 120..160 {
            for x in 60..140 {
                if y < 122 || y >= 158 || x < 62 || x >= 138 {
                    img.set(x, y, true);
                }
            }
        }
        fill_triangle(&mut img, Point::new(100.0, 119.0), Point::new(94.0, 105.0), Point::new(106.0, 105.0));
        for y in 20..106 {
            img.set(99, y, true);
            img.set(100, y, true);
        }
        let a = detect_arrowheads(&img, std::slice::from_ref(&n), &ArrowParams::default());
        assert_eq!(a.len(), 1, "{a:?}");
        assert!(a[0].tip.distance(Point::new(100.0, 119.0)) <= 2.0, "{:?}", a[0].tip);
        assert!(a[0].direction.y > 0.99);
        assert_eq!(assign_target(&a[0], &[n], 15.0).as_deref(), Some("n001"));
    }

    #[test]
    fn square_blob_is_not_an_arrowhead() {
        let mut img = BinaryImage::blank(40, 40);
        for y in 10..20 {
            for x in 10..22 {
                img.set(x, y, true);
            }
        }
        assert!(detect_arrowheads(&img, &[], &ArrowParams::default()).is_empty());
    }

    #[test]
    fn target_assignment_examples() {
        let a = Arrowhead::new("a001", BoundingBox::new(90, 45, 11, 11).unwrap(), Point::new(100.0, 50.0), Point::new(90.0, 50.0)).unwrap();
        let n = node("n001", [105, 30, 80, 40]);
        assert_eq!(assign_target(&a, &[n], 15.0).as_deref(), Some("n001"));

        let tip = Arrowhead::new("a002", BoundingBox::new(0, 0, 5, 5).unwrap(), Point::new(100.0, 100.0), Point::new(100.0, 90.0)).unwrap();
        let left = node("n002", [40, 80, 56, 40]);
        let right = node("n001", [104, 80, 56, 40]);
        assert_eq!(assign_target(&tip, &[left, right], 15.0).as_deref(), Some("n001"));

        let far = node("n001", [140, 100, 20, 20]);
        assert_eq!(assign_target(&tip, &[far], 15.0), None);
    }

    #[test]
    fn direction_is_normalized_difference() {
        let a = Arrowhead::new("a", BoundingBox::new(0, 0, 9, 9).unwrap(), Point::new(3.0, 4.0), Point::new(0.0, 0.0)).unwrap();
        assert_eq!(Some(a.direction), (a.tip - a.blunt).normalized());
        assert!(a.direction.distance(Point::new(0.6, 0.8)) < 1e-12);
        assert!(Arrowhead::new("b", BoundingBox::new(0, 0, 1, 1).unwrap(), Point::new(1.0, 1.0), Point::new(1.0, 1.0)).is_none());
    }

    #[test]
    fn open_head_found_only_when_enabled() {
        // ">" head at (150, 50) with a shaft from the left.
        let mut img = BinaryImage::blank(200, 100);
        for x in 40..=150 {
            img.set(x, 50, true);
            img.set(x, 51, true);
        }
        for k in 0..=16u32 {
            let dy = k / 2;
            img.set(150 - k, 50 - dy, true);
            img.set(150 - k, 49 - dy, true);
            img.set(150 - k, 51 + dy, true);
            img.set(150 - k, 52 + dy, true);
        }
        let off = detect_arrowheads(&img, &[], &ArrowParams::default());
        assert!(off.is_empty());
        let on = detect_arrowheads(&img, &[], &ArrowParams { open_heads: true, ..Default::default() });
        assert!(skeletonize(&img).ink_count() < img.ink_count() / 2 + 10);
        assert_eq!(on.len(), 1, "{on:?}");
        assert!(on[0].direction.x > 0.9, "{:?}", on[0]);
        assert!(on[0].tip.distance(Point::new(149.0, 50.5)) <= 3.0, "{:?}", on[0].tip);
    }
}
