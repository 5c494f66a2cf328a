//! End-to-end segmentation of one check image.
//!
//! deskew → trim → band → bank code → bank lookup → color difference →
//! zone clip → bound improvement → PAW grouping.

use serde::{Deserialize, Serialize};

use crate::bankid::{extract_bank_code, lookup_bank, BandLayout, BankCodeReading, BankRecord, ReferenceSet, Registry};
use crate::error::Result;
use crate::handwriting::{
    clip_zones, extract_ink_mask, extract_zones, handwriting_color, InkColor, PawParams, ZoneExtraction,
    DEFAULT_INK_TOLERANCE, DEFAULT_NOISE_FLOOR,
};
use crate::morphology::{label_components, Connectivity};
use crate::preprocess::{
    estimate_skew, rotate, trim_rect, SkewEstimate, DEFAULT_SKEW_RANGE_DEG, DEFAULT_SKEW_STEP_DEG,
    DEFAULT_TRIM_MARGIN,
};
use crate::projection::{locate_marking_band, segment_band_characters, BandGeometry, BandParams, CharBox};
use crate::raster::{binarize_otsu, color_histogram, to_grayscale, BitMask, Raster, Rect, DEFAULT_HISTOGRAM_BITS};

/// Every tunable of the pipeline. Recorded in output sidecars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub skew_range_deg: f64,
    pub skew_step_deg: f64,
    pub trim_margin: usize,
    pub band: BandParams,
    pub histogram_bits: u8,
    pub noise_floor: u64,
    pub ink_tolerance: u8,
    pub paw: PawParams,
    /// Layout used to find the code before the bank is known.
    pub band_layout: BandLayout,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            skew_range_deg: DEFAULT_SKEW_RANGE_DEG,
            skew_step_deg: DEFAULT_SKEW_STEP_DEG,
            trim_margin: DEFAULT_TRIM_MARGIN,
            band: BandParams::default(),
            histogram_bits: DEFAULT_HISTOGRAM_BITS,
            noise_floor: DEFAULT_NOISE_FLOOR,
            ink_tolerance: DEFAULT_INK_TOLERANCE,
            paw: PawParams::default(),
            band_layout: BandLayout::default(),
        }
    }
}

/// A deskewed, trimmed check and its binarization.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub image: Raster,
    pub ink: BitMask,
    pub skew: SkewEstimate,
    /// Crop rectangle in the deskewed input.
    pub trim: Rect,
}

pub fn prepare(img: &Raster, params: &PipelineParams) -> Result<Prepared> {
    let gray = to_grayscale(img)?;
    let mask = binarize_otsu(&gray);
    let skew = estimate_skew(&mask, params.skew_range_deg, params.skew_step_deg)?;
    let (upright, mask) = if skew.angle_deg == 0.0 {
        (img.clone(), mask)
    } else {
        let up = rotate(img, -skew.angle_deg);
        let m = binarize_otsu(&to_grayscale(&up)?);
        (up, m)
    };
    let trim = trim_rect(&mask, params.trim_margin)?;
    Ok(Prepared { image: upright.crop(trim)?, ink: mask.crop(trim), skew, trim })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReading {
    pub geometry: BandGeometry,
    /// Character boxes in prepared-image coordinates.
    pub chars: Vec<CharBox>,
}

pub fn read_band(prep: &Prepared, params: &PipelineParams) -> Result<(BandReading, BitMask)> {
    let geometry = locate_marking_band(&prep.ink, prep.image.dpi(), &params.band)?;
    let band = prep.ink.crop(geometry.rows);
    let chars = segment_band_characters(&band, &params.band)?;
    let chars = chars
        .into_iter()
        .map(|c| CharBox { rect: c.rect.translate(geometry.rows.x as i64, geometry.rows.y as i64), index: c.index })
        .collect();
    Ok((BandReading { geometry, chars }, band))
}

pub fn read_code(
    band: &BitMask,
    reading: &BandReading,
    params: &PipelineParams,
    refs: &ReferenceSet,
) -> Result<BankCodeReading> {
    let (ox, oy) = (reading.geometry.rows.x as i64, reading.geometry.rows.y as i64);
    let local: Vec<CharBox> =
        reading.chars.iter().map(|c| CharBox { rect: c.rect.translate(-ox, -oy), index: c.index }).collect();
    let mut code = extract_bank_code(band, &local, &params.band_layout, refs)?;
    for b in &mut code.boxes {
        *b = b.translate(ox, oy);
    }
    Ok(code)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Handwriting {
    pub color: InkColor,
    pub zones: Vec<ZoneExtraction>,
}

/// Color difference against the blank template, then zone clipping,
/// improvement and grouping on the prepared filled check.
pub fn extract_handwriting(
    filled: &Prepared,
    template: &Raster,
    bank: &BankRecord,
    params: &PipelineParams,
) -> Result<Handwriting> {
    let hf = color_histogram(&filled.image, params.histogram_bits)?;
    let ht = color_histogram(template, params.histogram_bits)?;
    let color = handwriting_color(&hf, &ht, params.noise_floor, params.ink_tolerance)?;
    let ink = extract_ink_mask(&filled.image, &color);
    let zones = clip_zones(&ink, &bank.zones, filled.image.dpi());
    let labels = label_components(&ink, Connectivity::Eight);
    Ok(Handwriting { color, zones: extract_zones(&ink, &labels, &zones, params.paw) })
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub prepared: Prepared,
    pub band: BandReading,
    pub code: BankCodeReading,
    pub bank: BankRecord,
    pub handwriting: Handwriting,
}

/// Full pipeline. The blank template comes from `template` when given,
/// otherwise from the recognized bank's registry entry.
pub fn segment_check(
    filled: &Raster,
    template: Option<&Raster>,
    registry: &Registry,
    refs: &ReferenceSet,
    params: &PipelineParams,
) -> Result<Segmentation> {
    let prepared = prepare(filled, params)?;
    let (band, band_mask) = read_band(&prepared, params)?;
    let code = read_code(&band_mask, &band, params, refs)?;
    let bank = lookup_bank(&code.code, registry)?.clone();
    let loaded;
    let template = match template {
        Some(t) => t,
        None => {
            let path = bank.template.as_ref().ok_or_else(|| {
                crate::Error::InvalidInput(format!("bank {} has no template image; pass one explicitly", bank.name))
            })?;
            loaded = crate::io::read_image(path, filled.dpi())?;
            &loaded
        }
    };
    // Deskew and trim the template the same way so both histograms cover the same paper.
    let template = prepare(template, params)?;
    let handwriting = extract_handwriting(&prepared, &template.image, &bank, params)?;
    Ok(Segmentation { prepared, band, code, bank, handwriting })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::handwriting::ZoneKind;
    use crate::synthgen::{generate_check, GenSpec, NoiseSpec, PerZone};

    fn check(code: &str, seed: u64) -> crate::synthgen::GeneratedCheck {
        let bank = Registry::default().lookup(code).unwrap().clone();
        generate_check(&bank, &GenSpec::new(code, seed)).unwrap()
    }

    #[test]
    fn clean_check_round_trip() {
        let c = check("10", 4);
        let refs = ReferenceSet::default_set().unwrap();
        let seg = segment_check(&c.filled, Some(&c.template), &Registry::default(), &refs, &PipelineParams::default())
            .unwrap();
        assert_eq!(seg.code.code, "10");
        assert_eq!(seg.bank.name, "STB");
        assert_eq!(seg.handwriting.zones.len(), 5);
        assert_eq!(seg.band.chars.len(), 23);
        assert_eq!(seg.handwriting.color.rgb, c.gt.ink_rgb.unwrap());
    }

    #[test]
    fn blank_template_has_no_difference() {
        let c = check("02", 1);
        let refs = ReferenceSet::default_set().unwrap();
        let err = segment_check(&c.template, Some(&c.template), &Registry::default(), &refs, &PipelineParams::default())
            .unwrap_err();
        assert!(matches!(err, crate::Error::NoDifference));
    }

    #[test]
    fn band_cropped_off_is_not_found() {
        let c = check("02", 1);
        let cut = c.filled.crop(Rect::new(0, 0, c.filled.width(), c.gt.band_rect.y - 10)).unwrap();
        let err = prepare(&cut, &PipelineParams::default()).and_then(|p| read_band(&p, &PipelineParams::default()));
        assert!(matches!(err, Err(crate::Error::BandNotFound)), "{err:?}");
    }

    #[test]
    fn skewed_check_is_recovered() {
        let bank = Registry::default().lookup("04").unwrap().clone();
        let mut s = GenSpec::new("04", 3);
        s.skew_deg = 1.5;
        s.margin_px = 40;
        s.noise = NoiseSpec::NONE;
        s.overflow_prob = PerZone::uniform(0.0);
        let c = generate_check(&bank, &s).unwrap();
        let refs = ReferenceSet::default_set().unwrap();
        let seg = segment_check(&c.filled, Some(&c.template), &Registry::default(), &refs, &PipelineParams::default())
            .unwrap();
        assert!((seg.prepared.skew.angle_deg - 1.5).abs() <= 0.1);
        assert_eq!(seg.code.code, "04");
        let date = seg.handwriting.zones.iter().find(|z| z.kind == ZoneKind::Date).unwrap();
        assert!(!date.components.is_empty());
    }
}
