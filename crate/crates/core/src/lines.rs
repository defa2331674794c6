//! Line segment detection with a progressive probabilistic Hough transform.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::angle_between_lines;
use crate::raster::BinaryImage;
use crate::{Point, Segment};

#[derive(Debug, Clone, PartialEq)]
pub struct HoughParams {
    pub rho_res: f64,
    pub theta_res_deg: f64,
    pub votes_min: u32,
    pub min_line_length: f64,
    pub max_line_gap: u32,
    pub theta_merge_deg: f64,
    pub rho_merge: f64,
    /// Fraction of a segment's rasterized pixels that must lie near ink.
    pub coverage_min: f64,
    /// "Near ink" distance for the coverage check.
    pub coverage_tol: f64,
    pub seed: u64,
}

impl Default for HoughParams {
    fn default() -> Self {
        HoughParams {
            rho_res: 1.0,
            theta_res_deg: 1.0,
            votes_min: 30,
            min_line_length: 20.0,
            max_line_gap: 5,
            theta_merge_deg: 3.0,
            rho_merge: 4.0,
            coverage_min: 0.85,
            coverage_tol: 2.0,
            seed: 42,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum PixelState {
    Background,
    Unvoted,
    Voted,
    Removed,
}

struct Accumulator {
    cos: Vec<f64>,
    sin: Vec<f64>,
    num_rho: usize,
    rho_res: f64,
    votes: Vec<i32>,
}

impl Accumulator {
    fn new(w: u32, h: u32, p: &HoughParams) -> Self {
        let num_theta = (180.0 / p.theta_res_deg).round().max(1.0) as usize;
        let (cos, sin) = (0..num_theta)
            .map(|i| {
                let t = (i as f64 * p.theta_res_deg).to_radians();
                (t.cos(), t.sin())
            })
            .unzip();
        let num_rho = (2.0 * (w + h) as f64 / p.rho_res).ceil() as usize + 1;
        Accumulator { cos, sin, num_rho, rho_res: p.rho_res, votes: vec![0; num_theta * num_rho] }
    }

    fn bin(&self, t: usize, x: u32, y: u32) -> usize {
        let rho = x as f64 * self.cos[t] + y as f64 * self.sin[t];
        let r = (rho / self.rho_res).round() as i64 + (self.num_rho as i64 - 1) / 2;
        t * self.num_rho + r as usize
    }

    /// Adds one vote per angle and returns the strongest `(theta index, votes)`.
    fn vote(&mut self, x: u32, y: u32) -> (usize, i32) {
        let mut best = (0, i32::MIN);
        for t in 0..self.cos.len() {
            let b = self.bin(t, x, y);
            self.votes[b] += 1;
            if self.votes[b] > best.1 {
                best = (t, self.votes[b]);
            }
        }
        best
    }

    fn unvote(&mut self, x: u32, y: u32) {
        for t in 0..self.cos.len() {
            let b = self.bin(t, x, y);
            self.votes[b] -= 1;
        }
    }
}

/// Raw Hough segments, before merging and coverage filtering.
pub fn hough_segments(img: &BinaryImage, p: &HoughParams) -> Vec<Segment> {
    let (w, h) = (img.width(), img.height());
    let mut state: Vec<PixelState> = img
        .data()
        .iter()
        .map(|&v| if v { PixelState::Unvoted } else { PixelState::Background })
        .collect();
    let mut order: Vec<(u32, u32)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| img.get(x, y))
        .collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(p.seed));

    let mut acc = Accumulator::new(w, h, p);
    let idx = |x: i64, y: i64| -> Option<usize> {
        (x >= 0 && y >= 0 && x < w as i64 && y < h as i64).then(|| y as usize * w as usize + x as usize)
    };
    let live = |s: PixelState| matches!(s, PixelState::Unvoted | PixelState::Voted);
    let mut out = Vec::new();

    for &(x0, y0) in &order {
        let i0 = y0 as usize * w as usize + x0 as usize;
        if state[i0] != PixelState::Unvoted {
            continue;
        }
        state[i0] = PixelState::Voted;
        let (t, votes) = acc.vote(x0, y0);
        if votes < p.votes_min as i32 {
            continue;
        }

        // Walk along the line through (x0, y0) at angle t, with a one pixel
        // band on either side so thick strokes are swept in one pass.
        let (nx, ny) = (acc.cos[t], acc.sin[t]);
        let (dx, dy) = (-ny, nx);
        let x_major = dx.abs() >= dy.abs();
        let (sx, sy) = if x_major { (dx.signum(), dy / dx.abs()) } else { (dx / dy.abs(), dy.signum()) };
        let band: [(i64, i64); 3] = if x_major { [(0, -1), (0, 0), (0, 1)] } else { [(-1, 0), (0, 0), (1, 0)] };
        let pixel_at = |k: i64| ((x0 as f64 + sx * k as f64).round() as i64, (y0 as f64 + sy * k as f64).round() as i64);

        let mut ends = [0i64; 2];
        for (e, dir) in [1i64, -1].into_iter().enumerate() {
            let mut gap = 0;
            let mut k = 0i64;
            loop {
                k += dir;
                let (px, py) = pixel_at(k);
                if idx(px, py).is_none() {
                    break;
                }
                let hit = band.iter().any(|&(bx, by)| idx(px + bx, py + by).is_some_and(|j| live(state[j])));
                if hit {
                    gap = 0;
                    ends[e] = k;
                } else {
                    gap += 1;
                    if gap > p.max_line_gap {
                        break;
                    }
                }
            }
        }

        let (ax, ay) = pixel_at(ends[1]);
        let (bx, by) = pixel_at(ends[0]);
        let length = ((ax - bx) as f64).hypot((ay - by) as f64);
        let good = length >= p.min_line_length;

        let mut offset_sum = 0.0;
        let mut offset_n = 0usize;
        for k in ends[1]..=ends[0] {
            let (px, py) = pixel_at(k);
            for &(ox, oy) in &band {
                let (qx, qy) = (px + ox, py + oy);
                let Some(j) = idx(qx, qy) else { continue };
                if !live(state[j]) {
                    continue;
                }
                if good {
                    if state[j] == PixelState::Voted {
                        acc.unvote(qx as u32, qy as u32);
                    }
                    offset_sum += (qx - x0 as i64) as f64 * nx + (qy - y0 as i64) as f64 * ny;
                    offset_n += 1;
                }
                state[j] = PixelState::Removed;
            }
        }
        if good {
            let shift = Point::new(nx, ny).scale(offset_sum / offset_n.max(1) as f64);
            let a = Point::new(ax as f64, ay as f64) + shift;
            let b = Point::new(bx as f64, by as f64) + shift;
            out.push(canonical(Segment::new(a, b)));
        }
    }
    out
}

/// Orders endpoints so that `p1` is the top-left one.
fn canonical(s: Segment) -> Segment {
    if (s.p2.y, s.p2.x) < (s.p1.y, s.p1.x) {
        Segment::new(s.p2, s.p1)
    } else {
        s
    }
}

fn segment_order(a: &Segment, b: &Segment) -> std::cmp::Ordering {
    a.p1.y
        .total_cmp(&b.p1.y)
        .then(a.p1.x.total_cmp(&b.p1.x))
        .then(a.p2.y.total_cmp(&b.p2.y))
        .then(a.p2.x.total_cmp(&b.p2.x))
}

/// Spanning segment of `a` and `b` if they are collinear and touching.
fn try_merge(a: &Segment, b: &Segment, p: &HoughParams) -> Option<Segment> {
    if angle_between_lines(a.angle(), b.angle()) >= p.theta_merge_deg.to_radians() {
        return None;
    }
    let (long, short) = if a.length() >= b.length() { (a, b) } else { (b, a) };
    if long.line_distance(short.p1).max(long.line_distance(short.p2)) >= p.rho_merge {
        return None;
    }
    let d = long.direction()?;
    let t = |q: Point| (q - long.p1).dot(d);
    let (l0, l1) = (0.0, long.length());
    let (s0, s1) = {
        let (u, v) = (t(short.p1), t(short.p2));
        (u.min(v), u.max(v))
    };
    let gap = (s0 - l1).max(l0 - s1);
    if gap > p.max_line_gap as f64 {
        return None;
    }
    let lo = l0.min(s0);
    let hi = l1.max(s1);
    Some(canonical(Segment::new(long.p1 + d.scale(lo), long.p1 + d.scale(hi))))
}

/// Replaces touching collinear pairs by their spanning segment until no pair
/// qualifies. Output is sorted by endpoint coordinates.
pub fn merge_collinear(segs: &[Segment], p: &HoughParams) -> Vec<Segment> {
    let mut cur: Vec<Segment> = segs.iter().copied().map(canonical).collect();
    cur.sort_by(segment_order);
    'outer: loop {
        for i in 0..cur.len() {
            for j in i + 1..cur.len() {
                if let Some(m) = try_merge(&cur[i], &cur[j], p) {
                    cur.remove(j);
                    cur[i] = m;
                    cur.sort_by(segment_order);
                    continue 'outer;
                }
            }
        }
        return cur;
    }
}

/// Pixels of the Bresenham line between the rounded endpoints.
pub fn rasterize(s: &Segment) -> Vec<(i64, i64)> {
    let (mut x0, mut y0) = (s.p1.x.round() as i64, s.p1.y.round() as i64);
    let (x1, y1) = (s.p2.x.round() as i64, s.p2.y.round() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push((x0, y0));
        if x0 == x1 && y0 == y1 {
            return out;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Fraction of the segment's rasterized pixels within `tol` (Euclidean) of ink.
pub fn ink_coverage(img: &BinaryImage, s: &Segment, tol: f64) -> f64 {
    let r = tol.floor() as i64;
    let offsets: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| ((dx * dx + dy * dy) as f64) <= tol * tol)
        .collect();
    let px = rasterize(s);
    let near = px
        .iter()
        .filter(|&&(x, y)| offsets.iter().any(|&(dx, dy)| img.ink_at(x + dx, y + dy)))
        .count();
    near as f64 / px.len() as f64
}

/// Hough segments, merged and filtered by length and ink coverage.
pub fn detect_segments(img: &BinaryImage, p: &HoughParams) -> Vec<Segment> {
    merge_collinear(&hough_segments(img, p), p)
        .into_iter()
        .filter(|s| s.length() >= p.min_line_length && ink_coverage(img, s, p.coverage_tol) >= p.coverage_min)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(a: (f64, f64), b: (f64, f64)) -> Segment {
        Segment::new(Point::new(a.0, a.1), Point::new(b.0, b.1))
    }

    fn draw_h(img: &mut BinaryImage, x0: u32, x1: u32, y: u32, t: u32) {
        for yy in y..y + t {
            for x in x0..=x1 {
                img.set(x, yy, true);
            }
        }
    }

    fn draw_v(img: &mut BinaryImage, x: u32, y0: u32, y1: u32, t: u32) {
        for xx in x..x + t {
            for y in y0..=y1 {
                img.set(xx, y, true);
            }
        }
    }

    #[test]
    fn blank_gives_nothing() {
        assert!(detect_segments(&BinaryImage::blank(64, 64), &HoughParams::default()).is_empty());
    }

    #[test]
    fn horizontal_run() {
        let mut img = BinaryImage::blank(240, 60);
        draw_h(&mut img, 10, 200, 20, 2);
        let segs = detect_segments(&img, &HoughParams::default());
        assert_eq!(segs.len(), 1, "{segs:?}");
        let s = segs[0];
        let (l, r) = if s.p1.x < s.p2.x { (s.p1, s.p2) } else { (s.p2, s.p1) };
        assert!(l.distance(Point::new(10.0, 20.0)) <= 3.0, "{l:?}");
        assert!(r.distance(Point::new(200.0, 20.0)) <= 3.0, "{r:?}");
        for y in 0..60 {
            for x in 0..240 {
                if img.get(x, y) {
                    assert!(s.distance_to_point(Point::new(x as f64, y as f64)) <= 2.0);
                }
            }
        }
    }

    #[test]
    fn l_shape_gives_two_segments_meeting_at_corner() {
        let mut img = BinaryImage::blank(200, 140);
        draw_h(&mut img, 20, 120, 20, 2);
        draw_v(&mut img, 119, 20, 100, 2);
        let segs = detect_segments(&img, &HoughParams::default());
        assert_eq!(segs.len(), 2, "{segs:?}");
        let corner = Point::new(120.0, 20.5);
        for s in &segs {
            let d = s.p1.distance(corner).min(s.p2.distance(corner));
            assert!(d <= 8.0, "{s:?}");
        }
    }

    #[test]
    fn merge_examples() {
        let p = HoughParams::default();
        assert!(merge_collinear(&[], &p).is_empty());
        let m = merge_collinear(&[seg((0.0, 0.0), (50.0, 0.0)), seg((48.0, 0.0), (100.0, 0.0))], &p);
        assert_eq!(m, vec![seg((0.0, 0.0), (100.0, 0.0))]);
        let perp = [seg((0.0, 0.0), (50.0, 0.0)), seg((50.0, 0.0), (50.0, 50.0))];
        assert_eq!(merge_collinear(&perp, &p).len(), 2);
    }

    #[test]
    fn merge_bridges_small_gap_only() {
        let p = HoughParams::default();
        assert_eq!(merge_collinear(&[seg((0.0, 0.0), (40.0, 0.0)), seg((44.0, 1.0), (90.0, 1.0))], &p).len(), 1);
        assert_eq!(merge_collinear(&[seg((0.0, 0.0), (40.0, 0.0)), seg((60.0, 0.0), (90.0, 0.0))], &p).len(), 2);
    }

    #[test]
    fn deterministic_for_seed() {
        let mut img = BinaryImage::blank(200, 200);
        draw_h(&mut img, 10, 190, 30, 2);
        draw_v(&mut img, 50, 40, 180, 2);
        draw_v(&mut img, 150, 40, 180, 3);
        let p = HoughParams::default();
        assert_eq!(detect_segments(&img, &p), detect_segments(&img, &p));
    }

    #[test]
    fn bresenham_endpoints() {
        let px = rasterize(&seg((0.0, 0.0), (5.0, 2.0)));
        assert_eq!(px.first(), Some(&(0, 0)));
        assert_eq!(px.last(), Some(&(5, 2)));
        assert_eq!(px.len(), 6);
    }
}
