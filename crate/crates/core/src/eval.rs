//! Scoring the pipeline against generator ground truth.
//!
//! Each stage is scored in isolation: zone extraction uses the bank named in
//! the ground truth, so a misread code does not also count as a zone error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bankid::{ReferenceSet, Registry};
use crate::error::{Error, Result};
use crate::handwriting::ZoneKind;
use crate::io::read_image;
use crate::pipeline::{extract_handwriting, prepare, read_band, read_code, PipelineParams};
use crate::raster::{Raster, Rect};
use crate::synthgen::CheckGroundTruth;

/// A zone is correctly extracted when its rectangle holds this share of the zone's ink.
pub const ZONE_CONTAINMENT: f64 = 0.99;
/// Minimum IoU between a predicted and a true code-character box.
pub const CHAR_BOX_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rate {
    pub total: usize,
    pub correct: usize,
    pub rate: f64,
}

impl Rate {
    pub fn new(correct: usize, total: usize) -> Self {
        let rate = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        Self { total, correct, rate }
    }

    fn add(&mut self, ok: bool) {
        *self = Rate::new(self.correct + ok as usize, self.total + 1);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneRates {
    pub kind: ZoneKind,
    pub before: Rate,
    pub after: Rate,
    pub improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankRates {
    pub name: String,
    pub code: String,
    pub segmentation: Rate,
    pub recognition: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema: u32,
    pub checks: usize,
    /// Checks skipped for missing or unreadable inputs.
    pub skipped: usize,
    pub code_segmentation: Rate,
    pub code_recognition: Rate,
    pub banks: Vec<BankRates>,
    pub zones: Vec<ZoneRates>,
    pub zones_before: Rate,
    pub zones_after: Rate,
    pub improvement: f64,
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub bank_code: String,
    pub bank_name: String,
    pub segmentation_ok: bool,
    /// `None` when segmentation failed and recognition was not scored.
    pub recognition_ok: Option<bool>,
    pub recognized_code: Option<String>,
    /// `(kind, correct before improvement, correct after)`.
    pub zones: Vec<(ZoneKind, bool, bool)>,
    pub errors: Vec<String>,
}

fn segmentation_matches(chars: &[Rect], gt: &CheckGroundTruth, trim: Rect) -> bool {
    if chars.len() != gt.band_chars.len() {
        return false;
    }
    gt.code_positions.iter().all(|&p| {
        let truth = gt.band_chars[p].rect.translate(-(trim.x as i64), -(trim.y as i64));
        chars[p].iou(&truth) >= CHAR_BOX_IOU
    })
}

/// Score one check. Stage failures are recorded, not propagated.
pub fn evaluate_check(
    filled: &Raster,
    template: &Raster,
    gt: &CheckGroundTruth,
    registry: &Registry,
    refs: &ReferenceSet,
    params: &PipelineParams,
) -> CheckOutcome {
    let mut out = CheckOutcome {
        bank_code: gt.bank_code.clone(),
        bank_name: gt.bank_name.clone(),
        segmentation_ok: false,
        recognition_ok: None,
        recognized_code: None,
        zones: gt.zones.iter().map(|z| (z.kind, false, false)).collect(),
        errors: Vec::new(),
    };
    let prep = match prepare(filled, params) {
        Ok(p) => p,
        Err(e) => {
            out.errors.push(format!("prepare: {e}"));
            return out;
        }
    };

    match read_band(&prep, params) {
        Ok((reading, band)) => {
            let boxes: Vec<Rect> = reading.chars.iter().map(|c| c.rect).collect();
            out.segmentation_ok = segmentation_matches(&boxes, gt, prep.trim);
            if out.segmentation_ok {
                match read_code(&band, &reading, params, refs) {
                    Ok(code) => {
                        out.recognition_ok = Some(code.code == gt.bank_code);
                        out.recognized_code = Some(code.code);
                    }
                    Err(e) => {
                        out.recognition_ok = Some(false);
                        out.errors.push(format!("recognition: {e}"));
                    }
                }
            }
        }
        Err(e) => out.errors.push(format!("band: {e}")),
    }

    let Some(bank) = registry.lookup(&gt.bank_code) else {
        out.errors.push(format!("ground-truth bank {} not in registry", gt.bank_code));
        return out;
    };
    let template = match prepare(template, params) {
        Ok(t) => t.image,
        Err(e) => {
            out.errors.push(format!("template: {e}"));
            return out;
        }
    };
    match extract_handwriting(&prep, &template, bank, params) {
        Ok(hw) => {
            let (dx, dy) = (prep.trim.x as i64, prep.trim.y as i64);
            for slot in &mut out.zones {
                let (Some(z), Some(x)) = (gt.zone(slot.0), hw.zones.iter().find(|x| x.kind == slot.0)) else {
                    continue;
                };
                slot.1 = z.containment(&x.original_rect.translate(dx, dy)) >= ZONE_CONTAINMENT;
                slot.2 = z.containment(&x.improved_rect.translate(dx, dy)) >= ZONE_CONTAINMENT;
            }
        }
        Err(e) => out.errors.push(format!("handwriting: {e}")),
    }
    out
}

/// Aggregate outcomes. Order does not matter.
pub fn aggregate(outcomes: &[CheckOutcome], skipped: usize, registry: &Registry) -> Metrics {
    let mut seg = Rate::default();
    let mut rec = Rate::default();
    let mut banks: Vec<BankRates> = Vec::new();
    let mut zones: Vec<ZoneRates> = ZoneKind::ALL
        .iter()
        .map(|&kind| ZoneRates { kind, before: Rate::default(), after: Rate::default(), improvement: 0.0 })
        .collect();
    for o in outcomes {
        let idx = match banks.iter().position(|b| b.code == o.bank_code) {
            Some(i) => i,
            None => {
                banks.push(BankRates {
                    name: o.bank_name.clone(),
                    code: o.bank_code.clone(),
                    segmentation: Rate::default(),
                    recognition: Rate::default(),
                });
                banks.len() - 1
            }
        };
        seg.add(o.segmentation_ok);
        banks[idx].segmentation.add(o.segmentation_ok);
        if let Some(ok) = o.recognition_ok {
            rec.add(ok);
            banks[idx].recognition.add(ok);
        }
        for &(kind, before, after) in &o.zones {
            let z = zones.iter_mut().find(|z| z.kind == kind).expect("all kinds listed");
            z.before.add(before);
            z.after.add(after);
        }
    }
    // registry order for stable tables
    banks.sort_by_key(|b| registry.banks.iter().position(|r| r.code == b.code).unwrap_or(usize::MAX));
    let mut before = Rate::default();
    let mut after = Rate::default();
    for z in &mut zones {
        z.improvement = z.after.rate - z.before.rate;
        before = Rate::new(before.correct + z.before.correct, before.total + z.before.total);
        after = Rate::new(after.correct + z.after.correct, after.total + z.after.total);
    }
    Metrics {
        schema: 1,
        checks: outcomes.len(),
        skipped,
        code_segmentation: seg,
        code_recognition: rec,
        banks,
        zones,
        zones_before: before,
        zones_after: after,
        improvement: after.rate - before.rate,
    }
}

/// Directories `corpus/<bank>/<seed>` holding a `gt.json`, sorted.
pub fn corpus_checks(corpus: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if !corpus.is_dir() {
        return Err(Error::InvalidInput(format!("{} is not a directory", corpus.display())));
    }
    for bank in fs::read_dir(corpus)? {
        let bank = bank?.path();
        if !bank.is_dir() {
            continue;
        }
        for check in fs::read_dir(&bank)? {
            let check = check?.path();
            if check.is_dir() {
                out.push(check);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn load_check(dir: &Path) -> Result<(Raster, Raster, CheckGroundTruth)> {
    let gt: CheckGroundTruth = serde_json::from_str(&fs::read_to_string(dir.join("gt.json"))?)?;
    let filled = read_image(&dir.join("filled.png"), gt.dpi)?;
    let template = read_image(&dir.join("template.png"), gt.dpi)?;
    Ok((filled, template, gt))
}

/// Evaluate every check of a corpus written by the generator. Checks whose
/// files are missing or unreadable are skipped and reported.
pub fn evaluate_corpus(
    corpus: &Path,
    registry: &Registry,
    refs: &ReferenceSet,
    params: &PipelineParams,
) -> Result<(Metrics, Vec<String>)> {
    let dirs = corpus_checks(corpus)?;
    let results: Vec<std::result::Result<CheckOutcome, String>> = dirs
        .par_iter()
        .map(|d| {
            let (filled, template, gt) = load_check(d).map_err(|e| format!("{}: {e}", d.display()))?;
            Ok(evaluate_check(&filled, &template, &gt, registry, refs, params))
        })
        .collect();
    let mut outcomes = Vec::new();
    let mut warnings = Vec::new();
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(w) => warnings.push(format!("skipped {w}")),
        }
    }
    let skipped = warnings.len();
    Ok((aggregate(&outcomes, skipped, registry), warnings))
}

fn pct(r: &Rate) -> String {
    format!("{:.3}", r.rate)
}

/// Aligned text tables: code segmentation and recognition per bank, then
/// zone extraction before and after improvement.
pub fn render_tables(m: &Metrics) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Code segmentation and recognition");
    let _ = writeln!(s, "{:<8} {:>6} {:>9} {:>8} {:>9} {:>8}", "bank", "checks", "seg ok", "seg", "rec ok", "rec");
    for b in &m.banks {
        let _ = writeln!(
            s,
            "{:<8} {:>6} {:>9} {:>8} {:>9} {:>8}",
            b.name,
            b.segmentation.total,
            b.segmentation.correct,
            pct(&b.segmentation),
            b.recognition.correct,
            pct(&b.recognition)
        );
    }
    let _ = writeln!(
        s,
        "{:<8} {:>6} {:>9} {:>8} {:>9} {:>8}",
        "total",
        m.code_segmentation.total,
        m.code_segmentation.correct,
        pct(&m.code_segmentation),
        m.code_recognition.correct,
        pct(&m.code_recognition)
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "Zone extraction");
    let _ = writeln!(s, "{:<16} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8}", "zone", "zones", "before", "rate", "after", "rate", "gain");
    let row = |s: &mut String, name: &str, b: &Rate, a: &Rate, gain: f64| {
        let _ = writeln!(
            s,
            "{:<16} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8.3}",
            name,
            b.total,
            b.correct,
            pct(b),
            a.correct,
            pct(a),
            gain
        );
    };
    for z in &m.zones {
        row(&mut s, z.kind.name(), &z.before, &z.after, z.improvement);
    }
    row(&mut s, "total", &m.zones_before, &m.zones_after, m.improvement);
    if m.skipped > 0 {
        let _ = writeln!(s, "\n{} check(s) skipped", m.skipped);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(code: &str, seg: bool, rec: Option<bool>, before: bool, after: bool) -> CheckOutcome {
        CheckOutcome {
            bank_code: code.into(),
            bank_name: code.into(),
            segmentation_ok: seg,
            recognition_ok: rec,
            recognized_code: None,
            zones: ZoneKind::ALL.iter().map(|&k| (k, before, after)).collect(),
            errors: vec![],
        }
    }

    #[test]
    fn rates_are_exact_ratios() {
        let r = Rate::new(2, 3);
        assert_eq!(r.rate, 2.0 / 3.0);
        assert_eq!(Rate::new(0, 0).rate, 0.0);
    }

    #[test]
    fn aggregation_is_order_independent() {
        let reg = Registry::default();
        let mut v = vec![
            outcome("02", true, Some(true), true, true),
            outcome("10", false, None, false, true),
            outcome("02", true, Some(false), true, true),
        ];
        let a = aggregate(&v, 0, &reg);
        v.reverse();
        let b = aggregate(&v, 0, &reg);
        assert_eq!(a, b);
        assert_eq!(a.code_segmentation, Rate::new(2, 3));
        assert_eq!(a.code_recognition, Rate::new(1, 2));
        assert_eq!(a.zones_before, Rate::new(10, 15));
        assert_eq!(a.zones_after, Rate::new(15, 15));
        assert_eq!(a.banks[0].code, "02");
    }

    #[test]
    fn empty_corpus_gives_zero_totals() {
        let dir = tempfile::tempdir().unwrap();
        let refs = ReferenceSet::default_set().unwrap();
        let (m, warnings) =
            evaluate_corpus(dir.path(), &Registry::default(), &refs, &PipelineParams::default()).unwrap();
        assert_eq!(m.checks, 0);
        assert_eq!(m.code_segmentation.total, 0);
        assert!(warnings.is_empty());
        assert!(render_tables(&m).contains("total"));
    }

    #[test]
    fn tables_and_json_agree() {
        let m = aggregate(&[outcome("04", true, Some(true), false, true)], 0, &Registry::default());
        let json: Metrics = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(json, m);
        let t = render_tables(&m);
        assert!(t.contains(&format!("{:.3}", json.zones_before.rate)));
        assert!(t.contains(&format!("{:.3}", json.zones_after.rate)));
    }
}
