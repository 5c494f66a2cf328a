//! CMC7 glyph table and rendering.
//!
//! Each glyph is seven vertical sticks. The six gaps between sticks are one
//! or two pitch units wide, and the next character starts three units after
//! the last stick. Every stick is cut vertically by a 7×9 silhouette so that
//! the dilated glyph shows the character's outline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
pub use crate::projection::STICK_PITCH_MM;
use crate::projection::nominal_band_height;
use crate::raster::BitMask;

pub const STICKS: usize = 7;
pub const SHAPE_ROWS: usize = 9;
/// Pitch units between the last stick of a character and the first of the next.
pub const CHAR_GAP_UNITS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GlyphValue {
    Digit(u8),
    /// Separator SI..SV as 1..=5.
    Separator(u8),
}

const ROMAN: [&str; 5] = ["I", "II", "III", "IV", "V"];

impl fmt::Display for GlyphValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GlyphValue::Digit(d) => write!(f, "{d}"),
            GlyphValue::Separator(s) => write!(f, "S{}", ROMAN[*s as usize - 1]),
        }
    }
}

impl FromStr for GlyphValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(d) = s.parse::<u8>() {
            if d <= 9 && s.len() == 1 {
                return Ok(GlyphValue::Digit(d));
            }
        }
        if let Some(r) = s.strip_prefix('S') {
            if let Some(i) = ROMAN.iter().position(|&x| x == r) {
                return Ok(GlyphValue::Separator(i as u8 + 1));
            }
        }
        Err(Error::InvalidInput(format!("unknown CMC7 glyph '{s}'")))
    }
}

impl TryFrom<String> for GlyphValue {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GlyphValue> for String {
    fn from(v: GlyphValue) -> String {
        v.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cmc7Glyph {
    pub value: GlyphValue,
    /// Six inter-stick gaps in pitch units, each 1 or 2.
    pub gaps: [u8; 6],
    /// Nine rows of seven characters; `#` marks where stick `c` has ink in row `r`.
    pub shape: Vec<String>,
}

impl Cmc7Glyph {
    pub fn is_inked(&self, col: usize, row: usize) -> bool {
        self.shape[row].as_bytes()[col] == b'#'
    }

    /// Offset of each stick from the first, in pitch units.
    pub fn stick_offsets(&self) -> [usize; STICKS] {
        let mut out = [0; STICKS];
        for i in 1..STICKS {
            out[i] = out[i - 1] + self.gaps[i - 1] as usize;
        }
        out
    }

    pub fn span_units(&self) -> usize {
        self.gaps.iter().map(|&g| g as usize).sum()
    }

    fn validate(&self) -> Result<()> {
        let bad = |why: String| Err(Error::InvalidInput(format!("glyph {}: {why}", self.value)));
        if self.gaps.iter().any(|&g| g != 1 && g != 2) {
            return bad("gaps must be 1 or 2".into());
        }
        if self.shape.len() != SHAPE_ROWS || self.shape.iter().any(|r| r.len() != STICKS) {
            return bad(format!("shape must be {SHAPE_ROWS} rows of {STICKS} cells"));
        }
        if self.shape.iter().any(|r| r.bytes().any(|b| b != b'#' && b != b'.')) {
            return bad("shape cells must be '#' or '.'".into());
        }
        if (0..STICKS).any(|c| (0..SHAPE_ROWS).all(|r| !self.is_inked(c, r))) {
            return bad("every stick needs ink".into());
        }
        Ok(())
    }
}

/// Pixel geometry of rendered glyphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlyphGeometry {
    pub pitch_px: usize,
    pub bar_px: usize,
    pub height_px: usize,
}

impl GlyphGeometry {
    /// Stick pitch of 0.6 mm, sticks half a pitch wide, glyphs as tall as the
    /// 16 mm marking band.
    pub fn for_dpi(dpi: f64) -> Self {
        let pitch_px = ((STICK_PITCH_MM * dpi / 25.4).round() as usize).max(3);
        let bar_px = ((pitch_px as f64 / 2.0).round() as usize).max(1);
        Self { pitch_px, bar_px, height_px: nominal_band_height(dpi) }
    }

    pub fn glyph_width(&self, glyph: &Cmc7Glyph) -> usize {
        glyph.span_units() * self.pitch_px + self.bar_px
    }

    /// Distance from a character's first stick to the next character's.
    pub fn advance(&self, glyph: &Cmc7Glyph) -> usize {
        (glyph.span_units() + CHAR_GAP_UNITS) * self.pitch_px
    }

    fn row_span(&self, row: usize) -> (usize, usize) {
        let h = self.height_px as f64;
        let edge = |r: usize| (r as f64 * h / SHAPE_ROWS as f64).round() as usize;
        (edge(row), edge(row + 1))
    }
}

/// Tight mask of one glyph.
pub fn render_glyph(glyph: &Cmc7Glyph, geom: &GlyphGeometry) -> BitMask {
    let mut m = BitMask::new(geom.glyph_width(glyph), geom.height_px);
    for (c, off) in glyph.stick_offsets().into_iter().enumerate() {
        let x0 = off * geom.pitch_px;
        for r in 0..SHAPE_ROWS {
            if !glyph.is_inked(c, r) {
                continue;
            }
            let (y0, y1) = geom.row_span(r);
            for y in y0..y1 {
                for x in x0..x0 + geom.bar_px {
                    m.set(x, y, true);
                }
            }
        }
    }
    m
}

/// The 15 glyphs (digits and separators) shared by generator and recognizer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlyphTable {
    pub glyphs: Vec<Cmc7Glyph>,
}

const DIGIT_SHAPES: [[&str; SHAPE_ROWS]; 10] = [
    ["#######", "##...##", "##...##", "##...##", "##...##", "##...##", "##...##", "##...##", "#######"],
    ["..###..", ".####..", "##.##..", "...##..", "...##..", "...##..", "...##..", "...##..", "#######"],
    [".#####.", "##...##", ".....##", "....##.", "...##..", "..##...", ".##....", "##.....", "#######"],
    ["######.", ".....##", ".....##", "..####.", ".....##", ".....##", ".....##", "##...##", ".#####."],
    ["....##.", "...###.", "..####.", ".##.##.", "##..##.", "#######", "....##.", "....##.", "....##."],
    ["#######", "##.....", "##.....", "######.", ".....##", ".....##", ".....##", "##...##", ".#####."],
    ["...###.", "..##...", ".##....", "######.", "##...##", "##...##", "##...##", "##...##", ".#####."],
    ["#######", "##...##", ".....##", "....##.", "...##..", "...##..", "..##...", "..##...", "..##..."],
    [".#####.", "##...##", ".##.##.", "..###..", "...#...", "..###..", ".##.##.", "##...##", ".#####."],
    [".#####.", "##...##", "##...##", ".######", ".....##", ".....##", ".....##", "....##.", "..###.."],
];

const SEPARATOR_SHAPES: [[&str; SHAPE_ROWS]; 5] = [
    [".......", ".......", ".......", "#######", "#######", "#######", ".......", ".......", "......."],
    ["#######", "#######", "#######", "#######", "#######", ".......", ".......", ".......", "......."],
    [".......", ".......", ".......", ".......", "#######", "#######", "#######", "#######", "#######"],
    ["#######", "##...##", "##...##", "##...##", "##...##", "##...##", "##...##", "##...##", "#######"],
    ["#######", "#######", "#######", ".......", ".......", ".......", "#######", "#######", "#######"],
];

impl Default for GlyphTable {
    /// Gap patterns are the 15 ways to place two wide gaps among six, in
    /// lexicographic order: digits 0–9 take the first ten, SI–SV the rest.
    fn default() -> Self {
        let mut patterns = Vec::new();
        for i in 0..6 {
            for j in i + 1..6 {
                let mut g = [1u8; 6];
                g[i] = 2;
                g[j] = 2;
                patterns.push(g);
            }
        }
        let shape = |rows: &[&str; SHAPE_ROWS]| rows.iter().map(|r| r.to_string()).collect();
        let mut glyphs = Vec::new();
        for (d, rows) in DIGIT_SHAPES.iter().enumerate() {
            glyphs.push(Cmc7Glyph { value: GlyphValue::Digit(d as u8), gaps: patterns[d], shape: shape(rows) });
        }
        for (s, rows) in SEPARATOR_SHAPES.iter().enumerate() {
            glyphs.push(Cmc7Glyph {
                value: GlyphValue::Separator(s as u8 + 1),
                gaps: patterns[10 + s],
                shape: shape(rows),
            });
        }
        Self { glyphs }
    }
}

impl GlyphTable {
    pub fn validate(&self) -> Result<()> {
        for g in &self.glyphs {
            g.validate()?;
        }
        for (i, g) in self.glyphs.iter().enumerate() {
            for o in &self.glyphs[..i] {
                if o.value == g.value {
                    return Err(Error::InvalidInput(format!("glyph {} defined twice", g.value)));
                }
                if o.gaps == g.gaps {
                    return Err(Error::InvalidInput(format!(
                        "glyphs {} and {} share a gap pattern",
                        o.value, g.value
                    )));
                }
            }
        }
        for d in 0..10 {
            if self.get(GlyphValue::Digit(d)).is_none() {
                return Err(Error::InvalidInput(format!("glyph table lacks digit {d}")));
            }
        }
        Ok(())
    }

    pub fn get(&self, value: GlyphValue) -> Option<&Cmc7Glyph> {
        self.glyphs.iter().find(|g| g.value == value)
    }

    pub fn digit(&self, d: u8) -> &Cmc7Glyph {
        self.get(GlyphValue::Digit(d)).expect("validated table holds every digit")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("glyph table serializes")
    }

    /// SHA-256 of the canonical JSON form, used to invalidate cached references.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("glyph table serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
