//! Pixel containers shared by every stage: color/gray rasters, binary ink
//! masks, rectangles, and quantized color histograms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DPI: f64 = 200.0;
pub const DEFAULT_HISTOGRAM_BITS: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channels {
    Rgb8,
    Gray8,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Rgb8 => 3,
            Channels::Gray8 => 1,
        }
    }
}

/// Row-major, channel-interleaved 8-bit image.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: Channels,
    pixels: Vec<u8>,
    dpi: f64,
}

impl Raster {
    pub fn from_raw(
        width: usize,
        height: usize,
        channels: Channels,
        pixels: Vec<u8>,
        dpi: f64,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "raster dimensions must be positive, got {width}x{height}"
            )));
        }
        if !(dpi.is_finite() && dpi > 0.0) {
            return Err(Error::InvalidInput(format!("dpi must be positive, got {dpi}")));
        }
        let expected = width * height * channels.count();
        if pixels.len() != expected {
            return Err(Error::InvalidInput(format!(
                "pixel buffer holds {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, channels, pixels, dpi })
    }

    /// Uniform RGB image. Panics on zero dimensions.
    pub fn filled_rgb(width: usize, height: usize, rgb: [u8; 3], dpi: f64) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, channels: Channels::Rgb8, pixels, dpi }
    }

    pub fn filled_gray(width: usize, height: usize, value: u8, dpi: f64) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        Self { width, height, channels: Channels::Gray8, pixels: vec![value; width * height], dpi }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> Channels {
        self.channels
    }

    pub fn dpi(&self) -> f64 {
        self.dpi
    }

    pub fn set_dpi(&mut self, dpi: f64) {
        assert!(dpi.is_finite() && dpi > 0.0);
        self.dpi = dpi;
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn frame(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    #[inline]
    fn offset(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels.count()
    }

    /// RGB value of a pixel; gray rasters replicate the single channel.
    #[inline]
    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let o = self.offset(x, y);
        match self.channels {
            Channels::Rgb8 => [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]],
            Channels::Gray8 => [self.pixels[o]; 3],
        }
    }

    #[inline]
    pub fn set_rgb(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        match self.channels {
            Channels::Rgb8 => self.pixels[o..o + 3].copy_from_slice(&rgb),
            Channels::Gray8 => self.pixels[o] = luma(rgb),
        }
    }

    /// Gray value of a pixel (luma for RGB rasters).
    #[inline]
    pub fn gray(&self, x: usize, y: usize) -> u8 {
        match self.channels {
            Channels::Gray8 => self.pixels[y * self.width + x],
            Channels::Rgb8 => luma(self.rgb(x, y)),
        }
    }

    pub fn crop(&self, rect: Rect) -> Result<Raster> {
        if rect.is_empty() || !self.frame().contains_rect(&rect) {
            return Err(Error::InvalidInput(format!(
                "crop {rect:?} outside {}x{} frame",
                self.width, self.height
            )));
        }
        let n = self.channels.count();
        let mut pixels = Vec::with_capacity(rect.w * rect.h * n);
        for y in rect.y..rect.bottom() {
            let start = self.offset(rect.x, y);
            pixels.extend_from_slice(&self.pixels[start..start + rect.w * n]);
        }
        Ok(Raster { width: rect.w, height: rect.h, channels: self.channels, pixels, dpi: self.dpi })
    }
}

/// ITU-R BT.601 luma, rounded to nearest.
#[inline]
pub fn luma(rgb: [u8; 3]) -> u8 {
    let v = 0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64;
    v.round().clamp(0.0, 255.0) as u8
}

/// Binary image; `true` marks ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BitMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "bit buffer holds {} entries, expected {}",
                bits.len(),
                width * height
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    /// Parse rows of `#` (ink) and `.` (background). Handy in tests.
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        Self::from_fn(width, height, |x, y| rows[y].as_bytes()[x] == b'#')
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-frame coordinates read as background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn iter_ink(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Tight bounding box of the ink, if any.
    pub fn ink_bbox(&self) -> Option<Rect> {
        let mut acc: Option<(usize, usize, usize, usize)> = None;
        for (x, y) in self.iter_ink() {
            acc = Some(match acc {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        acc.map(|(x0, y0, x1, y1)| Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    pub fn crop(&self, rect: Rect) -> BitMask {
        assert!(self.frame().contains_rect(&rect), "crop {rect:?} outside mask frame");
        BitMask::from_fn(rect.w, rect.h, |x, y| self.get(rect.x + x, rect.y + y))
    }

    /// Copy of this mask keeping only the ink inside `rect`.
    pub fn restrict(&self, rect: Rect) -> BitMask {
        BitMask::from_fn(self.width, self.height, |x, y| rect.contains(x, y) && self.get(x, y))
    }

    pub fn is_subset_of(&self, other: &BitMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Gray rendering: ink 0, background 255.
    pub fn to_raster(&self, dpi: f64) -> Raster {
        let pixels = self.bits.iter().map(|&b| if b { 0 } else { 255 }).collect();
        Raster::from_raw(self.width.max(1), self.height.max(1), Channels::Gray8, pixels, dpi)
            .expect("mask dimensions are positive")
    }

    /// Intersection-over-union of the two ink sets (1.0 when both are empty).
    pub fn iou(&self, other: &BitMask) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Axis-aligned pixel rectangle; `x`,`y` is the top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    /// Rectangle spanning the inclusive corners.
    pub fn from_corners(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self::new(x0.min(x1), y0.min(y1), x0.abs_diff(x1) + 1, y0.abs_diff(y1) + 1)
    }

    /// Exclusive right edge.
    pub fn right(&self) -> usize {
        self.x + self.w
    }

    /// Exclusive bottom edge.
    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x0 < x1 && y0 < y1).then(|| Rect::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn union(&self, other: &Rect) -> Rect {
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = self.right().max(other.right());
        let y1 = self.bottom().max(other.bottom());
        Rect::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn iou(&self, other: &Rect) -> f64 {
        let inter = self.intersect(other).map_or(0, |r| r.area());
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Grow by `margin` on every side, clamped to a `width`×`height` frame.
    pub fn expand(&self, margin: usize, width: usize, height: usize) -> Rect {
        let x0 = self.x.saturating_sub(margin);
        let y0 = self.y.saturating_sub(margin);
        let x1 = (self.right() + margin).min(width);
        let y1 = (self.bottom() + margin).min(height);
        Rect::new(x0, y0, x1.saturating_sub(x0), y1.saturating_sub(y0))
    }

    /// Clip to a `width`×`height` frame.
    pub fn clamp_to(&self, width: usize, height: usize) -> Rect {
        let x0 = self.x.min(width);
        let y0 = self.y.min(height);
        let x1 = self.right().min(width);
        let y1 = self.bottom().min(height);
        Rect::new(x0, y0, x1 - x0, y1 - y0)
    }

    /// Shift by a signed offset; coordinates saturate at zero.
    pub fn translate(&self, dx: i64, dy: i64) -> Rect {
        let x = (self.x as i64 + dx).max(0) as usize;
        let y = (self.y as i64 + dy).max(0) as usize;
        Rect::new(x, y, self.w, self.h)
    }
}

/// Pixel counts per quantized RGB bin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorHistogram {
    pub bits_per_channel: u8,
    pub counts: BTreeMap<u32, u64>,
}

impl ColorHistogram {
    pub fn new(bits_per_channel: u8) -> Result<Self> {
        if !(1..=8).contains(&bits_per_channel) {
            return Err(Error::InvalidInput(format!(
                "bits_per_channel must be in 1..=8, got {bits_per_channel}"
            )));
        }
        Ok(Self { bits_per_channel, counts: BTreeMap::new() })
    }

    /// Bin index: the top `bits_per_channel` bits of R, G, B packed high to low.
    #[inline]
    pub fn bin_of(&self, rgb: [u8; 3]) -> u32 {
        quantize(rgb, self.bits_per_channel)
    }

    /// Representative 8-bit color at the middle of a bin.
    pub fn bin_center(&self, bin: u32) -> [u8; 3] {
        bin_center(bin, self.bits_per_channel)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn count(&self, bin: u32) -> u64 {
        self.counts.get(&bin).copied().unwrap_or(0)
    }

    pub fn bin_count(&self) -> u32 {
        1u32 << (3 * self.bits_per_channel as u32)
    }
}

#[inline]
pub fn quantize(rgb: [u8; 3], bits: u8) -> u32 {
    let shift = 8 - bits as u32;
    let b = bits as u32;
    ((rgb[0] as u32 >> shift) << (2 * b)) | ((rgb[1] as u32 >> shift) << b) | (rgb[2] as u32 >> shift)
}

pub fn bin_center(bin: u32, bits: u8) -> [u8; 3] {
    let b = bits as u32;
    let mask = (1u32 << b) - 1;
    let shift = 8 - b;
    let half = if shift == 0 { 0 } else { 1u32 << (shift - 1) };
    let level = |q: u32| ((q << shift) + half).min(255) as u8;
    [level((bin >> (2 * b)) & mask), level((bin >> b) & mask), level(bin & mask)]
}

/// Per-pixel luma conversion.
pub fn to_grayscale(img: &Raster) -> Result<Raster> {
    if img.channels() != Channels::Rgb8 {
        return Err(Error::InvalidInput("to_grayscale expects an RGB8 raster".into()));
    }
    let pixels = img.pixels().chunks_exact(3).map(|p| luma([p[0], p[1], p[2]])).collect();
    Raster::from_raw(img.width(), img.height(), Channels::Gray8, pixels, img.dpi())
}

pub fn gray_histogram(img: &Raster) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for y in 0..img.height() {
        for x in 0..img.width() {
            hist[img.gray(x, y) as usize] += 1;
        }
    }
    hist
}

/// Otsu threshold over a 256-bin histogram. Ink is `value < threshold`.
///
/// Candidate thresholds run over 1..=255; when several maximize the
/// between-class variance the middle of that plateau is returned. `None` for
/// an empty or single-valued histogram.
pub fn otsu_threshold(hist: &[u64; 256]) -> Option<u8> {
    let total: u64 = hist.iter().sum();
    if total == 0 || hist.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let sum_all: i128 = hist.iter().enumerate().map(|(v, &c)| v as i128 * c as i128).sum();

    // between-class variance ∝ (w0·S − n·s0)² / (w0·w1); the numerator is
    // exact so equal class splits score bit-identically
    let mut best = f64::NEG_INFINITY;
    let mut best_range = (0usize, 0usize);
    let (mut w0, mut sum0) = (0u64, 0i128);
    for t in 1..256usize {
        w0 += hist[t - 1];
        sum0 += (t - 1) as i128 * hist[t - 1] as i128;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let num = (w0 as i128 * sum_all - total as i128 * sum0) as f64;
        let var = num * num / (w0 as f64 * w1 as f64);
        let tol = if best.is_finite() { 1e-12 * best.abs().max(1.0) } else { 0.0 };
        if var > best + tol {
            best = var;
            best_range = (t, t);
        } else if (var - best).abs() <= tol {
            best_range.1 = t;
        }
    }
    Some(((best_range.0 + best_range.1) / 2) as u8)
}

/// Global Otsu binarization, dark pixels are ink. A constant image yields an
/// empty mask.
pub fn binarize_otsu(img: &Raster) -> BitMask {
    let hist = gray_histogram(img);
    match otsu_threshold(&hist) {
        None => BitMask::new(img.width(), img.height()),
        Some(t) => BitMask::from_fn(img.width(), img.height(), |x, y| img.gray(x, y) < t),
    }
}

pub fn color_histogram(img: &Raster, bits_per_channel: u8) -> Result<ColorHistogram> {
    let mut hist = ColorHistogram::new(bits_per_channel)?;
    for y in 0..img.height() {
        for x in 0..img.width() {
            *hist.counts.entry(quantize(img.rgb(x, y), bits_per_channel)).or_insert(0) += 1;
        }
    }
    Ok(hist)
}
