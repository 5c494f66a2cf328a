//! Bank identification from the CMC7 marking band.
//!
//! A character box is bridged horizontally until its sticks merge into one
//! silhouette, the silhouette's outer contour is described by normalized
//! elliptic Fourier descriptors, and the nearest digit reference wins.

mod glyphs;
mod registry;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::efd::{describe_component, efd_distance, EfdSet, DEFAULT_HARMONICS};
use crate::error::{Error, Result};
use crate::morphology::{label_components, ultimate_dilate, Connectivity, StructuringElement};
use crate::projection::{column_runs, estimate_stick_pitch, CharBox};
use crate::raster::{BitMask, Rect};

pub use glyphs::{
    render_glyph, Cmc7Glyph, GlyphGeometry, GlyphTable, GlyphValue, CHAR_GAP_UNITS, SHAPE_ROWS, STICKS,
    STICK_PITCH_MM,
};
pub use registry::{BandField, BandLayout, BankRecord, Registry, REGISTRY_SCHEMA};

/// Dilation budget when bridging a glyph's sticks.
pub const MAX_BRIDGE_ITER: usize = 8;
/// Resolution at which digit references are rendered.
pub const REFERENCE_DPI: f64 = 200.0;

/// Normalized descriptor of the bridged silhouette of one character clip.
pub fn describe_glyph(clip: &BitMask, n_harmonics: usize) -> Result<EfdSet> {
    let bbox = clip.ink_bbox().ok_or(Error::EmptyGlyph)?;
    let tight = clip.crop(bbox);
    let pitch = estimate_stick_pitch(&column_runs(&tight)).unwrap_or(1.0);
    let level = ((pitch / 2.0).ceil() as usize).max(1);

    // pad so dilation never runs into the border, plus one blank ring for tracing
    let pad = level * MAX_BRIDGE_ITER + 1;
    let padded = BitMask::from_fn(tight.width() + 2 * pad, tight.height() + 2, |x, y| {
        x >= pad && y >= 1 && tight.get_signed(x as i64 - pad as i64, y as i64 - 1)
    });
    let (bridged, _) = ultimate_dilate(&padded, &StructuringElement::horizontal(level), MAX_BRIDGE_ITER)?;
    let labels = label_components(&bridged, Connectivity::Eight);
    let largest = labels.largest().ok_or(Error::EmptyGlyph)?;
    describe_component(&bridged, largest, &labels, n_harmonics)
}

/// Normalized descriptors of the ten digit glyphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub table_hash: String,
    pub geometry: GlyphGeometry,
    pub harmonics: usize,
    /// Indexed by digit.
    pub digits: Vec<EfdSet>,
}

impl ReferenceSet {
    pub fn build(table: &GlyphTable, geometry: GlyphGeometry, harmonics: usize) -> Result<Self> {
        table.validate()?;
        let digits = (0..10u8)
            .map(|d| describe_glyph(&render_glyph(table.digit(d), &geometry), harmonics))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { table_hash: table.content_hash(), geometry, harmonics, digits })
    }

    /// References for the default table at the reference resolution.
    pub fn default_set() -> Result<Self> {
        Self::build(&GlyphTable::default(), GlyphGeometry::for_dpi(REFERENCE_DPI), DEFAULT_HARMONICS)
    }

    /// Cache file kept beside a glyph table file.
    pub fn cache_path(table_path: &Path) -> PathBuf {
        table_path.with_extension("refs.json")
    }

    /// Load cached references for the table at `table_path`, rebuilding and
    /// rewriting the cache when it is missing or was built from other inputs.
    pub fn load_or_build(table_path: &Path, harmonics: usize) -> Result<Self> {
        let table = GlyphTable::from_json(&fs::read_to_string(table_path)?)?;
        let geometry = GlyphGeometry::for_dpi(REFERENCE_DPI);
        let cache = Self::cache_path(table_path);
        if let Ok(text) = fs::read_to_string(&cache) {
            if let Ok(refs) = serde_json::from_str::<ReferenceSet>(&text) {
                if refs.table_hash == table.content_hash()
                    && refs.geometry == geometry
                    && refs.harmonics == harmonics
                    && refs.digits.len() == 10
                {
                    return Ok(refs);
                }
            }
        }
        let refs = Self::build(&table, geometry, harmonics)?;
        fs::write(&cache, serde_json::to_string(&refs)?)?;
        Ok(refs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitMatch {
    pub digit: u8,
    /// Distance to each digit reference.
    pub distances: [f64; 10],
}

/// Nearest digit reference; ties go to the smaller digit.
pub fn recognize_digit(clip: &BitMask, refs: &ReferenceSet) -> Result<DigitMatch> {
    let efd = describe_glyph(clip, refs.harmonics)?;
    let mut distances = [0.0; 10];
    let mut best = 0;
    for (d, r) in refs.digits.iter().enumerate() {
        distances[d] = efd_distance(&efd, r)?;
        if distances[d] < distances[best] {
            best = d;
        }
    }
    Ok(DigitMatch { digit: best as u8, distances })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankCodeReading {
    pub code: String,
    pub digits: Vec<DigitMatch>,
    /// Character boxes read, in band coordinates.
    pub boxes: Vec<Rect>,
}

/// Read the bank code digits at the layout's code positions.
pub fn extract_bank_code(
    band: &BitMask,
    chars: &[CharBox],
    layout: &BandLayout,
    refs: &ReferenceSet,
) -> Result<BankCodeReading> {
    let needed = layout.code_positions.iter().copied().max().unwrap_or(0);
    if chars.len() <= needed {
        return Err(Error::BandTooShort { found: chars.len(), needed });
    }
    let mut code = String::new();
    let mut digits = Vec::new();
    let mut boxes = Vec::new();
    for &p in &layout.code_positions {
        let rect = chars[p].rect;
        let m = recognize_digit(&band.crop(rect), refs)?;
        code.push(char::from(b'0' + m.digit));
        digits.push(m);
        boxes.push(rect);
    }
    Ok(BankCodeReading { code, digits, boxes })
}

pub fn lookup_bank<'a>(code: &str, registry: &'a Registry) -> Result<&'a BankRecord> {
    registry.lookup(code).ok_or_else(|| Error::UnknownBank(code.to_string()))
}
