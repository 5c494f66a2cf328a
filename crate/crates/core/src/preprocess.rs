//! Deskew and margin trimming.
//!
//! Angles are in degrees, positive = counterclockwise as seen on screen
//! (image rows grow downward). Rotation is about the pixel-center midpoint
//! `((w-1)/2, (h-1)/2)` and keeps the frame size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BitMask, Channels, Raster, Rect};

pub const DEFAULT_SKEW_RANGE_DEG: f64 = 5.0;
pub const DEFAULT_SKEW_STEP_DEG: f64 = 0.1;
pub const DEFAULT_TRIM_MARGIN: usize = 2;
const COARSE_STEP_DEG: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewEstimate {
    pub angle_deg: f64,
    /// Variance of the row profile at `angle_deg`.
    pub score: f64,
}

/// Row-profile variance of the ink after rotating it by `-angle_deg`.
///
/// Ink points are projected directly (forward nearest mapping) rather than
/// rotating the whole mask. The bin range is fixed for every angle so scores
/// are comparable.
fn profile_variance(points: &[(f64, f64)], height: usize, width: usize, angle_deg: f64) -> f64 {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let pad = width + height;
    let bins = height + 2 * pad;
    let mut counts = vec![0u64; bins];
    let cy = (height as f64 - 1.0) / 2.0;
    for &(dx, dy) in points {
        let y = cy + dx * s + dy * c;
        let idx = (y.round() as i64 + pad as i64).clamp(0, bins as i64 - 1) as usize;
        counts[idx] += 1;
    }
    let n = bins as f64;
    let sum = points.len() as f64;
    let sum_sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    sum_sq / n - (sum / n).powi(2)
}

/// Grid search for the skew that maximizes horizontal-profile variance.
///
/// Coarse pass on a 0.5° grid (or `step_deg` if coarser), then a fine pass at
/// `step_deg` around the coarse winner. Ties go to the smaller |angle|.
pub fn estimate_skew(mask: &BitMask, half_range_deg: f64, step_deg: f64) -> Result<SkewEstimate> {
    if !(step_deg > 0.0 && step_deg.is_finite()) || !(half_range_deg >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "skew search needs step > 0 and range >= 0, got step {step_deg}, range {half_range_deg}"
        )));
    }
    if mask.is_empty() {
        return Err(Error::NoInk);
    }
    let cx = (mask.width() as f64 - 1.0) / 2.0;
    let cy = (mask.height() as f64 - 1.0) / 2.0;
    let points: Vec<(f64, f64)> =
        mask.iter_ink().map(|(x, y)| (x as f64 - cx, y as f64 - cy)).collect();

    let max_k = (half_range_deg / step_deg + 1e-9).floor() as i64;
    let score_at = |k: i64| profile_variance(&points, mask.height(), mask.width(), k as f64 * step_deg);
    let better = |cand: (i64, f64), best: (i64, f64)| {
        let tol = 1e-12 * best.1.abs().max(1.0);
        cand.1 > best.1 + tol || ((cand.1 - best.1).abs() <= tol && cand.0.abs() < best.0.abs())
    };

    let stride = ((COARSE_STEP_DEG / step_deg).round() as i64).max(1);
    let mut best = (0i64, score_at(0));
    let mut k = stride;
    while k <= max_k {
        for cand in [k, -k] {
            let cand = (cand, score_at(cand));
            if better(cand, best) {
                best = cand;
            }
        }
        k += stride;
    }
    let center = best.0;
    for k in (center - stride + 1)..(center + stride) {
        if k == center || k.abs() > max_k {
            continue;
        }
        let cand = (k, score_at(k));
        if better(cand, best) {
            best = cand;
        }
    }
    Ok(SkewEstimate { angle_deg: best.0 as f64 * step_deg, score: best.1 })
}

/// Source coordinate sampled by output pixel `(x, y)` for a rotation by `angle_deg`.
struct InverseMap {
    sin: f64,
    cos: f64,
    cx: f64,
    cy: f64,
}

impl InverseMap {
    fn new(width: usize, height: usize, angle_deg: f64) -> Self {
        let (sin, cos) = angle_deg.to_radians().sin_cos();
        Self { sin, cos, cx: (width as f64 - 1.0) / 2.0, cy: (height as f64 - 1.0) / 2.0 }
    }

    #[inline]
    fn source(&self, x: usize, y: usize) -> (f64, f64) {
        let dx = x as f64 - self.cx;
        let dy = y as f64 - self.cy;
        (self.cx + dx * self.cos - dy * self.sin, self.cy + dx * self.sin + dy * self.cos)
    }
}

/// Rotate a raster about its center with bilinear sampling; uncovered pixels
/// become white. Angle 0 returns an exact copy.
pub fn rotate(img: &Raster, angle_deg: f64) -> Raster {
    if angle_deg == 0.0 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let nc = img.channels().count();
    let map = InverseMap::new(w, h, angle_deg);
    let src = img.pixels();
    let mut out = vec![255u8; src.len()];
    let (maxx, maxy) = ((w - 1) as f64, (h - 1) as f64);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = map.source(x, y);
            if sx < -0.5 || sy < -0.5 || sx > maxx + 0.5 || sy > maxy + 0.5 {
                continue;
            }
            let sx = sx.clamp(0.0, maxx);
            let sy = sy.clamp(0.0, maxy);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let o = (y * w + x) * nc;
            for ch in 0..nc {
                let p = |px: usize, py: usize| src[(py * w + px) * nc + ch] as f64;
                let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                out[o + ch] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Raster::from_raw(w, h, img.channels(), out, img.dpi()).expect("same geometry as input")
}

/// Nearest-neighbor rotation of a mask; uncovered positions are background.
pub fn rotate_mask(mask: &BitMask, angle_deg: f64) -> BitMask {
    if angle_deg == 0.0 {
        return mask.clone();
    }
    let map = InverseMap::new(mask.width(), mask.height(), angle_deg);
    BitMask::from_fn(mask.width(), mask.height(), |x, y| {
        let (sx, sy) = map.source(x, y);
        mask.get_signed(sx.round() as i64, sy.round() as i64)
    })
}

/// Crop rectangle: ink bounding box grown by `margin`, clamped to the frame.
pub fn trim_rect(ink: &BitMask, margin: usize) -> Result<Rect> {
    let bbox = ink.ink_bbox().ok_or(Error::NoInk)?;
    Ok(bbox.expand(margin, ink.width(), ink.height()))
}

/// Crop `img` to the ink bounding box plus `margin`. Returns the crop and
/// its rectangle in the original coordinates.
pub fn trim_margins(img: &Raster, ink: &BitMask, margin: usize) -> Result<(Raster, Rect)> {
    if (img.width(), img.height()) != (ink.width(), ink.height()) {
        return Err(Error::InvalidInput(format!(
            "mask is {}x{} but image is {}x{}",
            ink.width(),
            ink.height(),
            img.width(),
            img.height()
        )));
    }
    let rect = trim_rect(ink, margin)?;
    Ok((img.crop(rect)?, rect))
}

/// Binarize, estimate skew and rotate the image back upright.
pub fn deskew(img: &Raster, half_range_deg: f64, step_deg: f64) -> Result<(Raster, SkewEstimate)> {
    let gray = match img.channels() {
        Channels::Rgb8 => crate::raster::to_grayscale(img)?,
        Channels::Gray8 => img.clone(),
    };
    let mask = crate::raster::binarize_otsu(&gray);
    let est = estimate_skew(&mask, half_range_deg, step_deg)?;
    Ok((rotate(img, -est.angle_deg), est))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines_mask(w: usize, h: usize) -> BitMask {
        BitMask::from_fn(w, h, |x, y| y % 12 == 3 && x > 8 && x < w - 8)
    }

    #[test]
    fn upright_lines_give_zero_skew() {
        let est = estimate_skew(&lines_mask(160, 90), 5.0, 0.1).unwrap();
        assert_eq!(est.angle_deg, 0.0);
    }

    #[test]
    fn rotated_lines_are_recovered() {
        let m = lines_mask(201, 121);
        for angle in [2.0, -3.3, 4.5] {
            let est = estimate_skew(&rotate_mask(&m, angle), 5.0, 0.1).unwrap();
            assert!((est.angle_deg - angle).abs() <= 0.2, "{angle} -> {}", est.angle_deg);
        }
    }

    #[test]
    fn empty_mask_has_no_skew() {
        assert!(matches!(estimate_skew(&BitMask::new(5, 5), 5.0, 0.1), Err(Error::NoInk)));
    }

    #[test]
    fn zero_rotation_is_identity() {
        let mut img = Raster::filled_rgb(9, 7, [200, 100, 50], 200.0);
        img.set_rgb(2, 3, [0, 1, 2]);
        assert_eq!(rotate(&img, 0.0), img);
    }

    #[test]
    fn full_turn_is_close_to_identity() {
        let img = Raster::from_raw(
            13,
            11,
            Channels::Rgb8,
            (0..13 * 11 * 3).map(|i| (i * 37 % 251) as u8).collect(),
            200.0,
        )
        .unwrap();
        let back = rotate(&img, 360.0);
        let max = img.pixels().iter().zip(back.pixels()).map(|(a, b)| a.abs_diff(*b)).max();
        assert!(max.unwrap() <= 2);
    }

    #[test]
    fn quarter_turn_moves_pixel_by_hand_formula() {
        // 11x11, center (5,5); (8,5) is 3 px right of center. A quarter turn
        // counterclockwise sends it 3 px above center.
        let mut m = BitMask::new(11, 11);
        m.set(8, 5, true);
        let r = rotate_mask(&m, 90.0);
        assert_eq!(r.iter_ink().collect::<Vec<_>>(), vec![(5, 2)]);

        let mut img = Raster::filled_gray(11, 11, 255, 200.0);
        img.set_rgb(8, 5, [0; 3]);
        assert_eq!(rotate(&img, 90.0).gray(5, 2), 0);
    }

    #[test]
    fn trim_single_pixel() {
        let mut m = BitMask::new(30, 30);
        m.set(10, 10, true);
        let img = Raster::filled_rgb(30, 30, [255; 3], 200.0);
        let (crop, rect) = trim_margins(&img, &m, 2).unwrap();
        assert_eq!(rect, Rect::new(8, 8, 5, 5));
        assert_eq!((crop.width(), crop.height()), (5, 5));
    }

    #[test]
    fn trim_full_frame_is_identity() {
        let m = BitMask::from_fn(6, 4, |x, y| x == 0 || y == 0 || x == 5 || y == 3);
        let img = Raster::filled_rgb(6, 4, [1, 2, 3], 200.0);
        let (crop, rect) = trim_margins(&img, &m, 2).unwrap();
        assert_eq!(rect, Rect::new(0, 0, 6, 4));
        assert_eq!(crop, img);
    }

    #[test]
    fn trim_is_idempotent() {
        let m = BitMask::from_fn(40, 30, |x, y| (12..20).contains(&x) && (5..9).contains(&y));
        let img = Raster::filled_rgb(40, 30, [255; 3], 200.0);
        let (_, r1) = trim_margins(&img, &m, 2).unwrap();
        let m2 = m.crop(r1);
        let (_, r2) = trim_margins(&img.crop(r1).unwrap(), &m2, 2).unwrap();
        assert_eq!((r1.w, r1.h), (r2.w, r2.h));
    }

    #[test]
    fn trim_needs_ink() {
        let img = Raster::filled_rgb(4, 4, [255; 3], 200.0);
        assert!(matches!(trim_margins(&img, &BitMask::new(4, 4), 2), Err(Error::NoInk)));
    }
}
