//! Integer pixel bounding boxes.

use std::fmt;

use num_traits::Float;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::geometry::{Point, Rect};

/// Pixel-aligned box covering columns `x..x+w` and rows `y..y+h`.
///
/// Serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bounding box must have positive width and height, got {w}x{h}")]
pub struct EmptyBox {
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self, EmptyBox> {
        if w == 0 || h == 0 {
            return Err(EmptyBox { w, h });
        }
        Ok(BoundingBox { x, y, w, h })
    }

    /// Smallest box containing the inclusive pixel range `[x0, x1] x [y0, y1]`.
    pub fn from_corners(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        BoundingBox {
            x: x0.min(x1),
            y: y0.min(y1),
            w: x0.abs_diff(x1) + 1,
            h: y0.abs_diff(y1) + 1,
        }
    }

    /// Exclusive right edge.
    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    /// Exclusive bottom edge.
    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn center<T: Float>(&self) -> Point<T> {
        let half = T::from(0.5).unwrap();
        Point::new(
            T::from(self.x).unwrap() + T::from(self.w).unwrap() * half,
            T::from(self.y).unwrap() + T::from(self.h).unwrap() * half,
        )
    }

    /// Continuous area covered by the box's pixels, used for overlap ratios
    /// and token containment.
    pub fn to_rect<T: Float>(&self) -> Rect<T> {
        Rect::new(
            T::from(self.x).unwrap(),
            T::from(self.y).unwrap(),
            T::from(self.right()).unwrap(),
            T::from(self.bottom()).unwrap(),
        )
    }

    /// Extent of the box's pixel centers; distances to a box are measured
    /// against this, so a point on the outermost pixel row is at distance 0.
    pub fn pixel_extent<T: Float>(&self) -> Rect<T> {
        Rect::new(
            T::from(self.x).unwrap(),
            T::from(self.y).unwrap(),
            T::from(self.right() - 1).unwrap(),
            T::from(self.bottom() - 1).unwrap(),
        )
    }

    pub fn distance_to<T: Float>(&self, p: Point<T>) -> T {
        self.pixel_extent().distance_to_point(p)
    }

    pub fn contains_pixel(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    /// True when the open interiors overlap.
    pub fn intersects(&self, o: &BoundingBox) -> bool {
        self.x < o.right() && o.x < self.right() && self.y < o.bottom() && o.y < self.bottom()
    }

    /// Grows the box by `d` on every side, clamped to a `width x height` image.
    /// Returns `None` when the grown box lies entirely outside the image.
    pub fn grown_clamped(&self, d: u32, width: u32, height: u32) -> Option<BoundingBox> {
        let x0 = self.x.saturating_sub(d);
        let y0 = self.y.saturating_sub(d);
        let x1 = (self.right() + d).min(width);
        let y1 = (self.bottom() + d).min(height);
        if x0 >= x1 || y0 >= y1 {
            return None;
        }
        Some(BoundingBox { x: x0, y: y0, w: x1 - x0, h: y1 - y0 })
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x, self.y, self.w, self.h)
    }
}

impl Serialize for BoundingBox {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y, self.w, self.h].serialize(s)
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y, w, h] = <[u32; 4]>::deserialize(d)?;
        BoundingBox::new(x, y, w, h).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_negative() {
        assert!(BoundingBox::new(0, 0, 0, 4).is_err());
        assert!(serde_json::from_str::<BoundingBox>("[1, 2, -3, 4]").is_err());
        assert!(serde_json::from_str::<BoundingBox>("[1, 2, 0, 4]").is_err());
        let b: BoundingBox = serde_json::from_str("[10, 10, 100, 50]").unwrap();
        assert_eq!(b, BoundingBox::new(10, 10, 100, 50).unwrap());
        assert_eq!(serde_json::to_string(&b).unwrap(), "[10,10,100,50]");
    }

    #[test]
    fn distance_to_box_boundary() {
        let b = BoundingBox::new(105, 30, 80, 40).unwrap();
        assert_eq!(b.distance_to(Point::new(100.0, 50.0)), 5.0);
        assert_eq!(b.distance_to(Point::new(120.0, 50.0)), 0.0);
    }

    #[test]
    fn grow_clamps_to_image() {
        let b = BoundingBox::new(2, 2, 3, 3).unwrap();
        assert_eq!(b.grown_clamped(1, 10, 10), Some(BoundingBox::new(1, 1, 5, 5).unwrap()));
        assert_eq!(b.grown_clamped(5, 6, 6), Some(BoundingBox::new(0, 0, 6, 6).unwrap()));
        let far = BoundingBox::new(50, 50, 3, 3).unwrap();
        assert_eq!(far.grown_clamped(0, 10, 10), None);
    }
}
