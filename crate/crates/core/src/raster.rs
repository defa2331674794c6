//! Image loading, binarization and region masking.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat};

use crate::bbox::BoundingBox;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("unsupported format (expected PNG): {}", .0.display())]
    UnsupportedFormat(PathBuf),
    #[error("corrupt image {}: {reason}", path.display())]
    CorruptImage { path: PathBuf, reason: String },
    #[error("invalid image dimensions {width}x{height} for {len} pixels")]
    Dimensions { width: u32, height: u32, len: usize },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("png encoding failed: {0}")]
    Encode(String),
}

/// 8-bit luminance image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 || data.len() != width as usize * height as usize {
            return Err(RasterError::Dimensions { width, height, len: data.len() });
        }
        Ok(GrayImage { width, height, data })
    }

    /// A `width x height` image filled with `value`.
    ///
    /// # Panics
    /// If either dimension is zero.
    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        GrayImage { width, height, data: vec![value; width as usize * height as usize] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = v;
    }

    /// Sets a pixel given signed coordinates; out-of-range writes are dropped.
    pub fn put(&mut self, x: i64, y: i64, v: u8) {
        if x >= 0 && y >= 0 && (x as u32) < self.width && (y as u32) < self.height {
            self.set(x as u32, y as u32, v);
        }
    }

    pub fn inverted(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| 255 - v).collect(),
        }
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut h = [0u64; 256];
        for &v in &self.data {
            h[v as usize] += 1;
        }
        h
    }

    /// Encodes as an 8-bit grayscale PNG.
    pub fn to_png_bytes(&self) -> Result<Vec<u8>, RasterError> {
        let buf = image::GrayImage::from_raw(self.width, self.height, self.data.clone())
            .expect("dimensions validated at construction");
        let mut out = Cursor::new(Vec::new());
        DynamicImage::ImageLuma8(buf)
            .write_to(&mut out, ImageFormat::Png)
            .map_err(|e| RasterError::Encode(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        let bytes = self.to_png_bytes()?;
        std::fs::write(path, bytes).map_err(|source| RasterError::Io { path: path.to_path_buf(), source })
    }
}

/// Standard luma weighting, rounded to the nearest integer.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round().clamp(0.0, 255.0) as u8
}

fn over_white(v: u8, alpha: u8) -> u8 {
    let a = alpha as f64 / 255.0;
    (v as f64 * a + 255.0 * (1.0 - a)).round() as u8
}

/// Loads a PNG as luminance. Color is reduced with [`luma`]; transparent
/// pixels are composited over white first.
pub fn load_image(path: &Path) -> Result<GrayImage, RasterError> {
    if !path.exists() {
        return Err(RasterError::FileNotFound(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|source| RasterError::Io { path: path.to_path_buf(), source })?;
    decode_png(&bytes).map_err(|e| match e {
        DecodeFailure::NotPng => RasterError::UnsupportedFormat(path.to_path_buf()),
        DecodeFailure::Corrupt(reason) => RasterError::CorruptImage { path: path.to_path_buf(), reason },
    })
}

enum DecodeFailure {
    NotPng,
    Corrupt(String),
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage, DecodeFailure> {
    if bytes.len() < PNG_SIGNATURE.len() || bytes[..8] != PNG_SIGNATURE {
        return Err(DecodeFailure::NotPng);
    }
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| DecodeFailure::Corrupt(e.to_string()))?;
    let (width, height) = (img.width(), img.height());
    let data: Vec<u8> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| over_white(p.0[0], p.0[1])).collect(),
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
        other => other
            .to_rgba8()
            .pixels()
            .map(|p| {
                let [r, g, b, a] = p.0;
                luma(over_white(r, a), over_white(g, a), over_white(b, a))
            })
            .collect(),
    };
    GrayImage::new(width, height, data).map_err(|e| DecodeFailure::Corrupt(e.to_string()))
}

/// Boolean ink mask; `true` is foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: u32, height: u32, data: Vec<bool>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 || data.len() != width as usize * height as usize {
            return Err(RasterError::Dimensions { width, height, len: data.len() });
        }
        Ok(BinaryImage { width, height, data })
    }

    /// All-background image.
    ///
    /// # Panics
    /// If either dimension is zero.
    pub fn blank(width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        BinaryImage { width, height, data: vec![false; width as usize * height as usize] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Out-of-range coordinates read as background.
    #[inline]
    pub fn ink_at(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as u32) < self.width && (y as u32) < self.height && self.get(x as u32, y as u32)
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = v;
    }

    pub fn ink_count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Ink -> 0, background -> 255.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| if v { 0 } else { 255 }).collect(),
        }
    }

    /// Sets every pixel of `b` (clamped to the image) to background.
    pub fn clear_box(&mut self, b: &BoundingBox) {
        let x1 = b.right().min(self.width);
        let y1 = b.bottom().min(self.height);
        for y in b.y.min(self.height)..y1 {
            for x in b.x.min(self.width)..x1 {
                self.set(x, y, false);
            }
        }
    }

    /// 3x3 majority (binary median) filter: a pixel is ink when at least
    /// five of the nine pixels around and including it are.
    pub fn majority(&self) -> BinaryImage {
        self.neighborhood_filter(|own, n| n + own as u32 >= 5)
    }

    /// Drops ink pixels with at most one ink 8-neighbour and fills
    /// background pixels with at least five.
    pub fn despeckle(&self) -> BinaryImage {
        self.neighborhood_filter(|own, n| if own { n >= 2 } else { n >= 5 })
    }

    fn neighborhood_filter(&self, keep: impl Fn(bool, u32) -> bool) -> BinaryImage {
        let (w, h) = (self.width as i64, self.height as i64);
        let mut data = vec![false; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut n = 0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if (dx, dy) != (0, 0) && self.ink_at(x + dx, y + dy) {
                            n += 1;
                        }
                    }
                }
                data[(y * w + x) as usize] = keep(self.data[(y * w + x) as usize], n);
            }
        }
        BinaryImage { width: self.width, height: self.height, data }
    }

    /// Erosion with a `size x size` square (anchor at the top-left-biased center).
    pub fn erode(&self, size: u32) -> BinaryImage {
        self.morph(size, true)
    }

    /// Dilation with a `size x size` square, the dual of [`BinaryImage::erode`].
    pub fn dilate(&self, size: u32) -> BinaryImage {
        self.morph(size, false)
    }

    pub fn open(&self, size: u32) -> BinaryImage {
        self.erode(size).dilate(size)
    }

    pub fn close(&self, size: u32) -> BinaryImage {
        self.dilate(size).erode(size)
    }

    // Separable min/max filter. Erosion treats out-of-range pixels as
    // background so shapes touching the border shrink as usual.
    fn morph(&self, size: u32, erode: bool) -> BinaryImage {
        if size <= 1 {
            return self.clone();
        }
        let (w, h) = (self.width as i64, self.height as i64);
        let lo = (size as i64 - 1) / 2;
        let hi = size as i64 - 1 - lo;
        // Dilation uses the reflected window so that open/close are proper.
        let (a, b) = if erode { (lo, hi) } else { (hi, lo) };
        let pass = |src: &[bool], horizontal: bool| -> Vec<bool> {
            let mut out = vec![false; src.len()];
            for y in 0..h {
                for x in 0..w {
                    let mut acc = erode;
                    for k in -a..=b {
                        let (xx, yy) = if horizontal { (x + k, y) } else { (x, y + k) };
                        let v = xx >= 0 && yy >= 0 && xx < w && yy < h && src[(yy * w + xx) as usize];
                        if erode {
                            if !v {
                                acc = false;
                                break;
                            }
                        } else if v {
                            acc = true;
                            break;
                        }
                    }
                    out[(y * w + x) as usize] = acc;
                }
            }
            out
        };
        let tmp = pass(&self.data, true);
        let data = pass(&tmp, false);
        BinaryImage { width: self.width, height: self.height, data }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binarization {
    Otsu,
    /// Pixels darker than the threshold are ink.
    FixedThreshold(u8),
}

/// Result of [`binarize`]. `degenerate` is set when Otsu saw a constant
/// image; the output is then all background.
#[derive(Debug, Clone, PartialEq)]
pub struct Binarized {
    pub image: BinaryImage,
    /// Pixels with luminance strictly below this value are ink (0..=256).
    pub threshold: u16,
    pub degenerate: bool,
}

/// Otsu threshold over a 256-bin histogram.
///
/// Returns `t` such that class 0 is `v < t`; `None` when the histogram has
/// a single populated bin. Ties resolve to the smallest `t`.
pub fn otsu_threshold(hist: &[u64; 256]) -> Option<u16> {
    let total: u64 = hist.iter().sum();
    if total == 0 || hist.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let total_f = total as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    let mut best = (-1.0f64, 0u16);
    for t in 1..=255u16 {
        let c = hist[t as usize - 1] as f64;
        w0 += c;
        sum0 += (t - 1) as f64 * c;
        let w1 = total_f - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best.0 * (1.0 + 1e-12) {
            best = (between, t);
        }
    }
    Some(best.1)
}

pub fn binarize(img: &GrayImage, method: Binarization) -> Binarized {
    let (threshold, degenerate) = match method {
        Binarization::FixedThreshold(t) => (t as u16, false),
        Binarization::Otsu => match otsu_threshold(&img.histogram()) {
            Some(t) => (t, false),
            None => (0, true),
        },
    };
    let data = img.data.iter().map(|&v| (v as u16) < threshold).collect();
    Binarized {
        image: BinaryImage { width: img.width, height: img.height, data },
        threshold,
        degenerate,
    }
}

/// Clears every box grown by `dilation` on each side; boxes are clamped.
pub fn mask_node_regions(img: &BinaryImage, boxes: &[BoundingBox], dilation: u32) -> BinaryImage {
    let mut out = img.clone();
    for b in boxes {
        if let Some(g) = b.grown_clamped(dilation, img.width, img.height) {
            out.clear_box(&g);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Connected-component labelling over pixels selected by `select`.
#[derive(Debug, Clone)]
pub struct Components {
    pub width: u32,
    pub height: u32,
    /// `0` for unselected pixels, otherwise the 1-based component label.
    pub labels: Vec<u32>,
    /// Pixel lists per component, in raster order of first discovery.
    pub members: Vec<Vec<(u32, u32)>>,
}

impl Components {
    /// Labels are assigned in raster-scan order of each component's first pixel.
    pub fn label(width: u32, height: u32, conn: Connectivity, select: impl Fn(u32, u32) -> bool) -> Self {
        let (w, h) = (width as i64, height as i64);
        let mut labels = vec![0u32; width as usize * height as usize];
        let mut sizes: Vec<usize> = Vec::new();
        let mut stack = Vec::new();
        let offsets: &[(i64, i64)] = match conn {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)],
        };
        for y in 0..height {
            for x in 0..width {
                let idx = (y * width + x) as usize;
                if labels[idx] != 0 || !select(x, y) {
                    continue;
                }
                let id = sizes.len() as u32 + 1;
                let mut size = 0;
                labels[idx] = id;
                stack.push((x, y));
                while let Some((cx, cy)) = stack.pop() {
                    size += 1;
                    for &(dx, dy) in offsets {
                        let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let nidx = (ny * w + nx) as usize;
                        if labels[nidx] == 0 && select(nx as u32, ny as u32) {
                            labels[nidx] = id;
                            stack.push((nx as u32, ny as u32));
                        }
                    }
                }
                sizes.push(size);
            }
        }
        let mut members: Vec<Vec<(u32, u32)>> = sizes.iter().map(|&n| Vec::with_capacity(n)).collect();
        for (i, &l) in labels.iter().enumerate() {
            if l != 0 {
                members[l as usize - 1].push((i as u32 % width, i as u32 / width));
            }
        }
        Components { width, height, labels, members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Bounding box of a non-empty pixel list.
pub fn pixel_bbox(pixels: &[(u32, u32)]) -> Option<BoundingBox> {
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for &(x, y) in pixels {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    (!pixels.is_empty()).then(|| BoundingBox::from_corners(x0, y0, x1, y1))
}
