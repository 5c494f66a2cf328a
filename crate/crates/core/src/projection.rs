//! Row/column ink profiles, marking-band location, and cutting the band into
//! character boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BitMask, Rect};

/// Physical height of the marking band.
pub const BAND_HEIGHT_MM: f64 = 16.0;
/// Physical spacing of CMC7 sticks.
pub const STICK_PITCH_MM: f64 = 0.6;

pub fn nominal_band_height(dpi: f64) -> usize {
    (BAND_HEIGHT_MM * dpi / 25.4).round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Rows,
    Columns,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    pub axis: Axis,
    pub counts: Vec<usize>,
}

impl Profile {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Ink count per row or per column.
pub fn profile(mask: &BitMask, axis: Axis) -> Profile {
    let (w, h) = (mask.width(), mask.height());
    let mut counts = vec![0usize; if axis == Axis::Rows { h } else { w }];
    for (x, y) in mask.iter_ink() {
        match axis {
            Axis::Rows => counts[y] += 1,
            Axis::Columns => counts[x] += 1,
        }
    }
    Profile { axis, counts }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandParams {
    /// A row is active when its ink count exceeds this fraction of the width.
    pub noise_floor: f64,
    /// Blank rows required between band and body, as a fraction of the
    /// nominal band height.
    pub min_gap: f64,
    /// Cut between characters when the stick spacing reaches this multiple
    /// of the estimated stick pitch.
    pub char_gap_factor: f64,
}

impl Default for BandParams {
    fn default() -> Self {
        Self { noise_floor: 0.005, min_gap: 0.15, char_gap_factor: 2.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandGeometry {
    /// Full-width row span of the band.
    pub rows: Rect,
    pub nominal_height_px: usize,
}

/// Find the marking band from the row profile of a deskewed, trimmed check.
///
/// The band is the bottom-most run of active rows. Runs separated by fewer
/// than `min_gap × nominal` blank rows are merged, so the band must stand
/// clear of the body above it. The run must reach into the bottom quarter of
/// the image, be at least half the nominal height, and show sticks at
/// roughly the CMC7 pitch.
pub fn locate_marking_band(mask: &BitMask, dpi: f64, params: &BandParams) -> Result<BandGeometry> {
    if !(dpi.is_finite() && dpi > 0.0) {
        return Err(Error::InvalidInput(format!("dpi must be positive, got {dpi}")));
    }
    let (w, h) = (mask.width(), mask.height());
    let nominal = nominal_band_height(dpi);
    let floor = params.noise_floor * w as f64;
    let active: Vec<bool> =
        profile(mask, Axis::Rows).counts.iter().map(|&c| c as f64 > floor).collect();
    let min_gap = (params.min_gap * nominal as f64).ceil() as usize;

    let bottom = active.iter().rposition(|&a| a).ok_or(Error::BandNotFound)?;
    if bottom < h - h / 4 - 1 {
        return Err(Error::BandNotFound);
    }
    let mut top = bottom;
    loop {
        while top > 0 && active[top - 1] {
            top -= 1;
        }
        // blank rows above the current run
        let mut gap = 0;
        while gap < top && !active[top - 1 - gap] {
            gap += 1;
        }
        if gap == top || gap >= min_gap {
            break;
        }
        top -= gap;
    }

    let rows = bottom - top + 1;
    if (rows as f64) < 0.5 * nominal as f64 {
        return Err(Error::BandNotFound);
    }
    // the bottom of the run must be sticks at roughly the CMC7 pitch, not body text
    let expected = STICK_PITCH_MM * dpi / 25.4;
    let probe_h = rows.min(nominal);
    let probe = mask.crop(Rect::new(0, bottom + 1 - probe_h, w, probe_h));
    match estimate_stick_pitch(&column_runs(&probe)) {
        Some(u) if u >= 0.5 * expected && u <= 2.0 * expected => {}
        _ => return Err(Error::BandNotFound),
    }
    let limit = (1.5 * nominal as f64).floor() as usize;
    if rows > limit {
        return Err(Error::BandTooTall { rows, limit });
    }
    Ok(BandGeometry { rows: Rect::new(0, top, w, rows), nominal_height_px: nominal })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharBox {
    pub rect: Rect,
    pub index: usize,
}

/// Maximal runs of non-empty columns as `(first, last)` inclusive.
pub fn column_runs(mask: &BitMask) -> Vec<(usize, usize)> {
    let counts = profile(mask, Axis::Columns).counts;
    let mut runs = Vec::new();
    let mut start = None;
    for (x, &c) in counts.iter().enumerate() {
        match (c > 0, start) {
            (true, None) => start = Some(x),
            (false, Some(s)) => {
                runs.push((s, x - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, counts.len() - 1));
    }
    runs
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Stick pitch of a glyph or band: median start-to-start distance between
/// adjacent column runs. `None` with fewer than two runs.
pub fn estimate_stick_pitch(runs: &[(usize, usize)]) -> Option<f64> {
    if runs.len() < 2 {
        return None;
    }
    let mut pitches: Vec<f64> = runs.windows(2).map(|p| (p[1].0 - p[0].0) as f64).collect();
    Some(median(&mut pitches))
}

/// Cut the clipped band into character boxes, left to right.
///
/// Sticks inside a character are one or two pitches apart, characters three.
/// A cut is made wherever the start-to-start spacing of adjacent sticks
/// reaches `char_gap_factor` pitches.
pub fn segment_band_characters(band: &BitMask, params: &BandParams) -> Result<Vec<CharBox>> {
    let runs = column_runs(band);
    if runs.is_empty() {
        return Err(Error::EmptyBand);
    }
    let pitch = estimate_stick_pitch(&runs);
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut current = runs[0];
    for pair in runs.windows(2) {
        let spacing = (pair[1].0 - pair[0].0) as f64;
        match pitch {
            Some(u) if spacing >= params.char_gap_factor * u => {
                groups.push(current);
                current = pair[1];
            }
            _ => current.1 = pair[1].1,
        }
    }
    groups.push(current);

    let boxes = groups
        .into_iter()
        .enumerate()
        .map(|(index, (x0, x1))| {
            let mut y0 = usize::MAX;
            let mut y1 = 0;
            for y in 0..band.height() {
                if (x0..=x1).any(|x| band.get(x, y)) {
                    y0 = y0.min(y);
                    y1 = y1.max(y);
                }
            }
            CharBox { rect: Rect::from_corners(x0, y0, x1, y1), index }
        })
        .collect();
    Ok(boxes)
}
