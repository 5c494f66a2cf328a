//! Bank registry: code, zone template and marking-band layout per bank.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::glyphs::GlyphValue;
use crate::error::{Error, Result};
use crate::handwriting::{Zone, ZoneKind, ZoneTemplate};
use crate::raster::Rect;

pub const REGISTRY_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandField {
    Digits { name: String, count: usize },
    Separator { value: GlyphValue },
}

impl BandField {
    pub fn width(&self) -> usize {
        match self {
            BandField::Digits { count, .. } => *count,
            BandField::Separator { .. } => 1,
        }
    }
}

/// Character sequence printed in the marking band.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandLayout {
    pub fields: Vec<BandField>,
    /// 0-based character positions of the two bank-code digits.
    pub code_positions: Vec<usize>,
}

impl Default for BandLayout {
    fn default() -> Self {
        let digits = |name: &str, count| BandField::Digits { name: name.into(), count };
        let sep = |n| BandField::Separator { value: GlyphValue::Separator(n) };
        Self {
            fields: vec![
                digits("free", 4),
                sep(1),
                digits("check_number", 7),
                digits("account_nature", 1),
                digits("agency", 3),
                digits("currency", 3),
                sep(4),
                digits("bank_code", 2),
                sep(2),
            ],
            code_positions: vec![20, 21],
        }
    }
}

impl BandLayout {
    pub fn len(&self) -> usize {
        self.fields.iter().map(BandField::width).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fill the layout: digit slots take values from `digit`, except code
    /// positions which take the bank code.
    pub fn sequence(&self, code: &str, mut digit: impl FnMut() -> u8) -> Result<Vec<GlyphValue>> {
        let code: Vec<u8> = code.bytes().map(|b| b.wrapping_sub(b'0')).collect();
        if code.len() != self.code_positions.len() || code.iter().any(|&d| d > 9) {
            return Err(Error::InvalidInput(format!(
                "bank code must be {} digits",
                self.code_positions.len()
            )));
        }
        let mut out = Vec::with_capacity(self.len());
        for f in &self.fields {
            match f {
                BandField::Digits { count, .. } => {
                    for _ in 0..*count {
                        out.push(GlyphValue::Digit(digit()));
                    }
                }
                BandField::Separator { value } => out.push(*value),
            }
        }
        for (&p, &d) in self.code_positions.iter().zip(&code) {
            match out.get_mut(p) {
                Some(slot @ GlyphValue::Digit(_)) => *slot = GlyphValue::Digit(d),
                _ => return Err(Error::InvalidInput(format!("code position {p} is not a digit slot"))),
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let seq = self.sequence(&"0".repeat(self.code_positions.len()), || 0)?;
        for &p in &self.code_positions {
            if !matches!(seq.get(p), Some(GlyphValue::Digit(_))) {
                return Err(Error::InvalidInput(format!("code position {p} is not a digit slot")));
            }
        }
        if self.code_positions.is_empty() {
            return Err(Error::InvalidInput("band layout has no code positions".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankRecord {
    pub code: String,
    pub name: String,
    pub zones: ZoneTemplate,
    #[serde(default)]
    pub band_layout: BandLayout,
    /// Scanned blank template of the bank's checks, if one is on disk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub schema: u32,
    pub banks: Vec<BankRecord>,
}

type ZoneRow = (ZoneKind, (usize, usize, usize, usize));

fn record(code: &str, name: &str, zones: [ZoneRow; 5]) -> BankRecord {
    let zones = zones
        .into_iter()
        .map(|(kind, (x, y, w, h))| Zone { kind, rect: Rect::new(x, y, w, h) })
        .collect();
    BankRecord {
        code: code.into(),
        name: name.into(),
        zones: ZoneTemplate::new(150.0, zones).expect("built-in zone template is valid"),
        band_layout: BandLayout::default(),
        template: None,
    }
}

impl Default for Registry {
    /// Six Tunisian banks with zone templates measured at 150 dpi.
    fn default() -> Self {
        use ZoneKind::*;
        let banks = vec![
            record("02", "BFT", [
                (DigitalAmount, (866, 42, 175, 56)),
                (LiteralAmount, (0, 110, 1043, 83)),
                (Conductor, (0, 193, 1043, 40)),
                (Date, (266, 344, 438, 53)),
                (Signature, (723, 244, 326, 132)),
            ]),
            record("03", "BNA", [
                (DigitalAmount, (840, 30, 190, 58)),
                (LiteralAmount, (0, 112, 1010, 86)),
                (Conductor, (0, 200, 1010, 42)),
                (Date, (250, 346, 420, 48)),
                (Signature, (700, 250, 300, 130)),
            ]),
            record("04", "BS", [
                (DigitalAmount, (800, 36, 210, 56)),
                (LiteralAmount, (0, 108, 1030, 84)),
                (Conductor, (0, 195, 1030, 42)),
                (Date, (270, 342, 430, 50)),
                (Signature, (715, 246, 320, 128)),
            ]),
            record("10", "STB", [
                (DigitalAmount, (758, 22, 226, 60)),
                (LiteralAmount, (0, 116, 974, 89)),
                (Conductor, (0, 198, 974, 44)),
                (Date, (240, 347, 412, 38)),
                (Signature, (675, 249, 288, 128)),
            ]),
            record("12", "UIB", [
                (DigitalAmount, (870, 26, 170, 60)),
                (LiteralAmount, (0, 118, 1000, 86)),
                (Conductor, (0, 207, 1000, 40)),
                (Date, (230, 345, 430, 46)),
                (Signature, (690, 252, 310, 126)),
            ]),
            record("14", "BH", [
                (DigitalAmount, (780, 40, 230, 54)),
                (LiteralAmount, (0, 114, 1040, 80)),
                (Conductor, (0, 196, 1040, 44)),
                (Date, (260, 348, 420, 44)),
                (Signature, (720, 250, 300, 124)),
            ]),
        ];
        Self { schema: REGISTRY_SCHEMA, banks }
    }
}

impl Registry {
    pub fn validate(&self) -> Result<()> {
        if self.schema != REGISTRY_SCHEMA {
            return Err(Error::InvalidInput(format!("unsupported registry schema {}", self.schema)));
        }
        for (i, b) in self.banks.iter().enumerate() {
            b.zones.validate()?;
            b.band_layout.validate()?;
            if b.code.len() != b.band_layout.code_positions.len() || !b.code.bytes().all(|c| c.is_ascii_digit()) {
                return Err(Error::InvalidInput(format!("bank {}: malformed code '{}'", b.name, b.code)));
            }
            if self.banks[..i].iter().any(|o| o.code == b.code) {
                return Err(Error::InvalidInput(format!("bank code {} registered twice", b.code)));
            }
        }
        Ok(())
    }

    pub fn lookup(&self, code: &str) -> Option<&BankRecord> {
        self.banks.iter().find(|b| b.code == code)
    }

    pub fn by_name(&self, name: &str) -> Option<&BankRecord> {
        self.banks.iter().find(|b| b.name.eq_ignore_ascii_case(name))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = Self::from_json(&fs::read_to_string(path)?)?;
        // template paths are relative to the registry file
        let base = path.parent().unwrap_or(Path::new("."));
        for b in &mut r.banks {
            if let Some(t) = &mut b.template {
                if t.is_relative() {
                    *t = base.join(&*t);
                }
            }
        }
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes")
    }
}
