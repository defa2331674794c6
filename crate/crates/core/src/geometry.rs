//! Planar geometry shared by every pipeline stage.
//!
//! Everything here is generic over the scalar type (`f32` or `f64`); the
//! pipeline itself runs on the `f64` aliases exported at the crate root.
//! Points use pixel-center coordinates: pixel `(i, j)` sits at `(i, j)`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_traits::{Float, NumCast};
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeTuple, Serializer};
use serde::{Deserialize, Serialize};

#[inline]
fn c<T: Float>(v: f64) -> T {
    <T as NumCast>::from(v).expect("scalar conversion")
}

/// A point (or vector) in image coordinates, y pointing down.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Float> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Point { x, y }
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    pub fn scale(self, k: T) -> Self {
        Point::new(self.x * k, self.y * k)
    }

    /// Unit vector in the same direction; `None` for the zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() {
            Some(self.scale(T::one() / n))
        } else {
            None
        }
    }

    /// Counter-clockwise (in y-down coordinates: clockwise on screen) normal.
    pub fn perp(self) -> Self {
        Point::new(-self.y, self.x)
    }

    pub fn midpoint(self, o: Self) -> Self {
        (self + o).scale(c(0.5))
    }

    pub fn cast<U: Float>(self) -> Point<U> {
        Point::new(
            <U as NumCast>::from(self.x).expect("scalar conversion"),
            <U as NumCast>::from(self.y).expect("scalar conversion"),
        )
    }
}

impl<T: Float> Add for Point<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Float> Sub for Point<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Float> Mul<T> for Point<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        self.scale(k)
    }
}

// Points serialize as `[x, y]`.
impl<T: Serialize> Serialize for Point<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut t = s.serialize_tuple(2)?;
        t.serialize_element(&self.x)?;
        t.serialize_element(&self.y)?;
        t.end()
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Point<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct PointVisitor<T>(std::marker::PhantomData<T>);
        impl<'de, T: Deserialize<'de>> Visitor<'de> for PointVisitor<T> {
            type Value = Point<T>;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a two-element [x, y] array")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Point<T>, A::Error> {
                let x = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let y = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(1, &self))?;
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::invalid_length(3, &self));
                }
                Ok(Point { x, y })
            }
        }
        d.deserialize_tuple(2, PointVisitor(std::marker::PhantomData))
    }
}

/// A straight line segment between two distinct points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<T> {
    pub p1: Point<T>,
    pub p2: Point<T>,
}

impl<T: Float> Segment<T> {
    pub fn new(p1: Point<T>, p2: Point<T>) -> Self {
        Segment { p1, p2 }
    }

    pub fn length(&self) -> T {
        self.p1.distance(self.p2)
    }

    /// Unit direction from `p1` to `p2`.
    pub fn direction(&self) -> Option<Point<T>> {
        (self.p2 - self.p1).normalized()
    }

    /// Closest point on the segment to `p`, with its parameter in `[0, 1]`.
    pub fn closest_point(&self, p: Point<T>) -> (Point<T>, T) {
        let d = self.p2 - self.p1;
        let len2 = d.dot(d);
        if len2 <= T::zero() {
            return (self.p1, T::zero());
        }
        let t = ((p - self.p1).dot(d) / len2).max(T::zero()).min(T::one());
        (self.p1 + d.scale(t), t)
    }

    pub fn distance_to_point(&self, p: Point<T>) -> T {
        self.closest_point(p).0.distance(p)
    }

    /// Undirected orientation in `[0, π)`.
    pub fn angle(&self) -> T {
        let d = self.p2 - self.p1;
        let pi = T::from(std::f64::consts::PI).unwrap();
        let mut a = d.y.atan2(d.x);
        if a < T::zero() {
            a = a + pi;
        }
        if a >= pi {
            a = a - pi;
        }
        a
    }

    /// Perpendicular distance from `p` to the infinite supporting line.
    pub fn line_distance(&self, p: Point<T>) -> T {
        match self.direction() {
            Some(u) => (p - self.p1).cross(u).abs(),
            None => p.distance(self.p1),
        }
    }

    /// Intersection of the two supporting lines, if they are not parallel.
    pub fn line_intersection(&self, o: &Segment<T>) -> Option<Point<T>> {
        let r = self.p2 - self.p1;
        let s = o.p2 - o.p1;
        let denom = r.cross(s);
        if denom.abs() <= c::<T>(1e-12) * r.norm() * s.norm() {
            return None;
        }
        let t = (o.p1 - self.p1).cross(s) / denom;
        Some(self.p1 + r.scale(t))
    }
}

/// Smallest absolute difference between two undirected angles in `[0, π)`.
pub fn angle_between_lines<T: Float>(a: T, b: T) -> T {
    let pi = T::from(std::f64::consts::PI).unwrap();
    let d = (a - b).abs() % pi;
    d.min(pi - d)
}

/// Axis-aligned rectangle over continuous coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect<T> {
    pub x0: T,
    pub y0: T,
    pub x1: T,
    pub y1: T,
}

impl<T: Float> Rect<T> {
    pub fn new(x0: T, y0: T, x1: T, y1: T) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> T {
        (self.x1 - self.x0).max(T::zero())
    }

    pub fn height(&self) -> T {
        (self.y1 - self.y0).max(T::zero())
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn intersection(&self, o: &Rect<T>) -> Option<Rect<T>> {
        let r = Rect::new(
            self.x0.max(o.x0),
            self.y0.max(o.y0),
            self.x1.min(o.x1),
            self.y1.min(o.y1),
        );
        if r.x1 > r.x0 && r.y1 > r.y0 {
            Some(r)
        } else {
            None
        }
    }

    /// Intersection over union; 0 for disjoint or degenerate inputs.
    pub fn iou(&self, o: &Rect<T>) -> T {
        let inter = self.intersection(o).map_or(T::zero(), |r| r.area());
        let union = self.area() + o.area() - inter;
        if union <= T::zero() {
            T::zero()
        } else {
            inter / union
        }
    }

    pub fn contains(&self, p: Point<T>) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    /// Euclidean distance from `p` to the rectangle; zero inside.
    pub fn distance_to_point(&self, p: Point<T>) -> T {
        let dx = (self.x0 - p.x).max(p.x - self.x1).max(T::zero());
        let dy = (self.y0 - p.y).max(p.y - self.y1).max(T::zero());
        dx.hypot(dy)
    }

    /// Distance from `p` to the nearest point of a segment, clipped to zero inside.
    pub fn distance_to_segment(&self, s: &Segment<T>) -> T {
        if self.contains(s.p1) || self.contains(s.p2) {
            return T::zero();
        }
        let corners = [
            Point::new(self.x0, self.y0),
            Point::new(self.x1, self.y0),
            Point::new(self.x1, self.y1),
            Point::new(self.x0, self.y1),
        ];
        let edges = [
            Segment::new(corners[0], corners[1]),
            Segment::new(corners[1], corners[2]),
            Segment::new(corners[2], corners[3]),
            Segment::new(corners[3], corners[0]),
        ];
        if edges.iter().any(|e| segments_intersect(e, s)) {
            return T::zero();
        }
        let mut best = self.distance_to_point(s.p1).min(self.distance_to_point(s.p2));
        for q in corners {
            best = best.min(s.distance_to_point(q));
        }
        best
    }

    pub fn grow(&self, d: T) -> Rect<T> {
        Rect::new(self.x0 - d, self.y0 - d, self.x1 + d, self.y1 + d)
    }
}

/// Proper or touching intersection test for two closed segments.
pub fn segments_intersect<T: Float>(a: &Segment<T>, b: &Segment<T>) -> bool {
    let o = |p: Point<T>, q: Point<T>, r: Point<T>| (q - p).cross(r - p);
    let d1 = o(b.p1, b.p2, a.p1);
    let d2 = o(b.p1, b.p2, a.p2);
    let d3 = o(a.p1, a.p2, b.p1);
    let d4 = o(a.p1, a.p2, b.p2);
    let z = T::zero();
    if ((d1 > z && d2 < z) || (d1 < z && d2 > z)) && ((d3 > z && d4 < z) || (d3 < z && d4 > z)) {
        return true;
    }
    let eps = c::<T>(1e-12);
    (d1.abs() <= eps && a.p1.distance(b.closest_point(a.p1).0) <= eps)
        || (d2.abs() <= eps && a.p2.distance(b.closest_point(a.p2).0) <= eps)
        || (d3.abs() <= eps && b.p1.distance(a.closest_point(b.p1).0) <= eps)
        || (d4.abs() <= eps && b.p2.distance(a.closest_point(b.p2).0) <= eps)
}

pub fn polyline_length<T: Float>(pts: &[Point<T>]) -> T {
    pts.windows(2)
        .fold(T::zero(), |acc, w| acc + w[0].distance(w[1]))
}

/// Point at arc length `s` along the polyline, clamped to its ends.
pub fn point_at_arc_length<T: Float>(pts: &[Point<T>], s: T) -> Option<Point<T>> {
    let first = *pts.first()?;
    if s <= T::zero() {
        return Some(first);
    }
    let mut rest = s;
    for w in pts.windows(2) {
        let len = w[0].distance(w[1]);
        if rest <= len && len > T::zero() {
            return Some(w[0] + (w[1] - w[0]).scale(rest / len));
        }
        rest = rest - len;
    }
    pts.last().copied()
}

/// Point halfway along the polyline by arc length.
pub fn polyline_midpoint<T: Float>(pts: &[Point<T>]) -> Option<Point<T>> {
    point_at_arc_length(pts, polyline_length(pts) * c(0.5))
}

/// Shoelace area; positive for counter-clockwise order in y-up coordinates.
pub fn polygon_signed_area<T: Float>(pts: &[Point<T>]) -> T {
    if pts.len() < 3 {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..pts.len() {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        acc = acc + a.cross(b);
    }
    acc * c(0.5)
}

pub fn polygon_area<T: Float>(pts: &[Point<T>]) -> T {
    polygon_signed_area(pts).abs()
}

pub fn polygon_perimeter<T: Float>(pts: &[Point<T>]) -> T {
    if pts.len() < 2 {
        return T::zero();
    }
    let mut acc = polyline_length(pts);
    acc = acc + pts[pts.len() - 1].distance(pts[0]);
    acc
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon<T: Float>(p: Point<T>, poly: &[Point<T>]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Distance from `p` to the closed polygon boundary.
pub fn polygon_boundary_distance<T: Float>(p: Point<T>, poly: &[Point<T>]) -> T {
    let n = poly.len();
    let mut best = T::infinity();
    for i in 0..n {
        let s = Segment::new(poly[i], poly[(i + 1) % n]);
        best = best.min(s.distance_to_point(p));
    }
    best
}

/// Convex hull by Andrew's monotone chain. Collinear points are dropped;
/// the result is in counter-clockwise order for y-up coordinates.
pub fn convex_hull<T: Float>(points: &[Point<T>]) -> Vec<Point<T>> {
    let mut pts: Vec<Point<T>> = points.to_vec();
    pts.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .unwrap()
            .then(a.y.partial_cmp(&b.y).unwrap())
    });
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let turn = |o: Point<T>, a: Point<T>, b: Point<T>| (a - o).cross(b - o);
    let mut lower: Vec<Point<T>> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && turn(lower[lower.len() - 2], lower[lower.len() - 1], p) <= T::zero() {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point<T>> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && turn(upper[upper.len() - 2], upper[upper.len() - 1], p) <= T::zero() {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Douglas-Peucker simplification of an open polyline.
pub fn simplify_polyline<T: Float>(pts: &[Point<T>], eps: T) -> Vec<Point<T>> {
    if pts.len() < 3 {
        return pts.to_vec();
    }
    let mut keep = vec![false; pts.len()];
    keep[0] = true;
    keep[pts.len() - 1] = true;
    let mut stack = vec![(0usize, pts.len() - 1)];
    while let Some((a, b)) = stack.pop() {
        if b <= a + 1 {
            continue;
        }
        let chord = Segment::new(pts[a], pts[b]);
        let mut far = a;
        let mut far_d = T::zero();
        for (i, &p) in pts.iter().enumerate().take(b).skip(a + 1) {
            let d = chord.distance_to_point(p);
            if d > far_d {
                far_d = d;
                far = i;
            }
        }
        if far_d > eps {
            keep[far] = true;
            stack.push((a, far));
            stack.push((far, b));
        }
    }
    pts.iter()
        .zip(keep)
        .filter_map(|(&p, k)| k.then_some(p))
        .collect()
}

/// Douglas-Peucker on a closed contour. The contour is split at its first
/// point and the point farthest from it, which are both kept.
pub fn simplify_closed<T: Float>(pts: &[Point<T>], eps: T) -> Vec<Point<T>> {
    if pts.len() < 4 {
        return pts.to_vec();
    }
    let start = pts[0];
    let (far, _) = pts
        .iter()
        .enumerate()
        .fold((0, T::zero()), |(bi, bd), (i, p)| {
            let d = p.distance(start);
            if d > bd {
                (i, d)
            } else {
                (bi, bd)
            }
        });
    let mut first: Vec<Point<T>> = pts[..=far].to_vec();
    let mut second: Vec<Point<T>> = pts[far..].to_vec();
    second.push(start);
    first = simplify_polyline(&first, eps);
    second = simplify_polyline(&second, eps);
    first.pop();
    second.pop();
    first.extend(second);
    // The split point itself may be redundant; drop it if it is collinear.
    if first.len() > 3 {
        let n = first.len();
        let chord = Segment::new(first[n - 1], first[1]);
        if chord.distance_to_point(first[0]) <= eps {
            first.remove(0);
        }
    }
    first
}

/// Indices of the three hull vertices spanning the largest triangle.
pub fn max_area_triangle<T: Float>(hull: &[Point<T>]) -> Option<[usize; 3]> {
    let n = hull.len();
    if n < 3 {
        return None;
    }
    let mut best = T::zero();
    let mut idx = None;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let a = (hull[j] - hull[i]).cross(hull[k] - hull[i]).abs() * c(0.5);
                if a > best {
                    best = a;
                    idx = Some([i, j, k]);
                }
            }
        }
    }
    idx
}

pub fn triangle_area<T: Float>(a: Point<T>, b: Point<T>, p: Point<T>) -> T {
    (b - a).cross(p - a).abs() * c(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    type P = Point<f64>;

    #[test]
    fn closest_point_clamps_to_ends() {
        let s = Segment::new(P::new(0.0, 0.0), P::new(10.0, 0.0));
        assert_eq!(s.closest_point(P::new(-5.0, 3.0)).0, P::new(0.0, 0.0));
        assert_eq!(s.closest_point(P::new(4.0, 3.0)).0, P::new(4.0, 0.0));
        assert!((s.distance_to_point(P::new(13.0, 4.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn angle_wraps_into_half_turn() {
        let s = Segment::new(P::new(5.0, 5.0), P::new(0.0, 5.0));
        assert!(s.angle().abs() < 1e-12);
        let v = Segment::new(P::new(0.0, 10.0), P::new(0.0, 0.0));
        assert!((v.angle() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let d = angle_between_lines(0.01, std::f64::consts::PI - 0.01);
        assert!((d - 0.02).abs() < 1e-12);
    }

    #[test]
    fn rect_distance_is_zero_inside() {
        let r = Rect::new(0.0, 0.0, 10.0, 5.0);
        assert_eq!(r.distance_to_point(P::new(3.0, 3.0)), 0.0);
        assert!((r.distance_to_point(P::new(13.0, 9.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn hull_of_square_with_interior_points() {
        let pts: Vec<P> = (0..5)
            .flat_map(|x| (0..5).map(move |y| P::new(x as f64, y as f64)))
            .collect();
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!((polygon_area(&h) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn midpoint_of_l_path_follows_arc_length() {
        let path = [P::new(0.0, 0.0), P::new(0.0, 10.0), P::new(30.0, 10.0)];
        let m = polyline_midpoint(&path).unwrap();
        assert!((m.x - 10.0).abs() < 1e-12 && (m.y - 10.0).abs() < 1e-12);
    }

    #[test]
    fn closed_simplification_keeps_rectangle_corners() {
        let mut pts = Vec::new();
        for x in 0..20 {
            pts.push(P::new(x as f64, 0.0));
        }
        for y in 0..10 {
            pts.push(P::new(20.0, y as f64));
        }
        for x in (1..=20).rev() {
            pts.push(P::new(x as f64, 10.0));
        }
        for y in (1..=10).rev() {
            pts.push(P::new(0.0, y as f64));
        }
        let s = simplify_closed(&pts, 0.5);
        assert_eq!(s.len(), 4, "{s:?}");
    }

    #[test]
    fn max_triangle_in_square_is_half() {
        let sq = [P::new(0.0, 0.0), P::new(4.0, 0.0), P::new(4.0, 4.0), P::new(0.0, 4.0)];
        let t = max_area_triangle(&sq).unwrap();
        assert!((triangle_area(sq[t[0]], sq[t[1]], sq[t[2]]) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn generic_over_f32() {
        let r: Rect<f32> = Rect::new(0.0, 0.0, 10.0, 10.0);
        let o: Rect<f32> = Rect::new(5.0, 0.0, 15.0, 10.0);
        assert!((r.iou(&o) - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn point_serializes_as_pair() {
        let p = P::new(1.5, 2.0);
        assert_eq!(serde_json::to_string(&p).unwrap(), "[1.5,2.0]");
        let q: P = serde_json::from_str("[3, 4]").unwrap();
        assert_eq!(q, P::new(3.0, 4.0));
        assert!(serde_json::from_str::<P>("[1,2,3]").is_err());
    }
}
