//! Synthetic blank templates and filled checks with ground truth.
//!
//! A check is rendered at the bank's zone-template resolution scaled to the
//! requested dpi: a light background, dark-gray printed rules, labels and a
//! bank-name block, and the CMC7 marking band along the bottom edge. Filling
//! draws stroke-like handwriting in each zone as right-to-left clusters of
//! connected polylines (PAWs) with detached diacritic dots, then applies
//! skew, scanner noise and speckle.
//!
//! Every check draws from one ChaCha stream seeded by `seed`, split into
//! fixed substreams so that adding a zone never perturbs another.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bankid::{render_glyph, BankRecord, GlyphGeometry, GlyphTable, GlyphValue, Registry};
use crate::error::{Error, Result};
use crate::handwriting::ZoneKind;
use crate::io::write_png;
use crate::preprocess::rotate;
use crate::projection::nominal_band_height;
use crate::raster::{BitMask, Raster, Rect};

pub const GT_SCHEMA: u32 = 1;
pub const BACKGROUND_RGB: [u8; 3] = [244, 244, 236];
pub const PRINT_RGB: [u8; 3] = [64, 64, 64];
pub const BAND_RGB: [u8; 3] = [36, 36, 36];
pub const SPECKLE_RGB: [u8; 3] = [72, 72, 72];
/// Pen colors, each at the center of a 5-bit histogram bin.
pub const INK_PALETTE: [[u8; 3]; 4] = [[36, 60, 164], [28, 36, 116], [20, 92, 180], [132, 28, 36]];
pub const DEFAULT_SIGMA: f64 = 2.5;
pub const DEFAULT_SPECKLE: f64 = 5e-7;
pub const DEFAULT_CHECKS_PER_BANK: usize = 20;

// frame of a check at the 150 dpi template resolution
const FRAME_W: f64 = 1050.0;
const BODY_H: f64 = 440.0;
const BORDER: usize = 2;

// substreams
const STREAM_TEMPLATE: u64 = 0;
const STREAM_SCAN: u64 = 1;
const STREAM_FILL_NOISE: u64 = 2;
const STREAM_SPECKLE: u64 = 3;
const STREAM_ZONE_BASE: u64 = 16;

/// One value per zone kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerZone<T> {
    pub digital_amount: T,
    pub literal_amount: T,
    pub conductor: T,
    pub date: T,
    pub signature: T,
}

impl<T: Copy> PerZone<T> {
    pub fn get(&self, kind: ZoneKind) -> T {
        match kind {
            ZoneKind::DigitalAmount => self.digital_amount,
            ZoneKind::LiteralAmount => self.literal_amount,
            ZoneKind::Conductor => self.conductor,
            ZoneKind::Date => self.date,
            ZoneKind::Signature => self.signature,
        }
    }

    pub fn uniform(v: T) -> Self {
        Self { digital_amount: v, literal_amount: v, conductor: v, date: v, signature: v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Gaussian standard deviation per channel, in gray levels.
    pub sigma: f64,
    /// Expected speckle blobs per pixel.
    pub speckle_density: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec { sigma: 0.0, speckle_density: 0.0 };
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { sigma: DEFAULT_SIGMA, speckle_density: DEFAULT_SPECKLE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub bank_code: String,
    pub dpi: f64,
    pub seed: u64,
    pub noise: NoiseSpec,
    pub skew_deg: f64,
    pub ink_rgb: [u8; 3],
    pub overflow_prob: PerZone<f64>,
    /// Inclusive range of PAW clusters drawn per zone.
    pub paw_count_range: PerZone<(usize, usize)>,
    /// White border added around the check, room for rotation.
    pub margin_px: usize,
}

impl GenSpec {
    pub fn new(bank_code: &str, seed: u64) -> Self {
        Self {
            bank_code: bank_code.to_string(),
            dpi: 200.0,
            seed,
            noise: NoiseSpec::default(),
            skew_deg: 0.0,
            ink_rgb: INK_PALETTE[0],
            overflow_prob: PerZone {
                digital_amount: 0.0,
                literal_amount: 0.06,
                conductor: 0.06,
                date: 0.0,
                signature: 0.11,
            },
            paw_count_range: PerZone {
                digital_amount: (3, 6),
                literal_amount: (5, 10),
                conductor: (3, 7),
                date: (3, 6),
                signature: (1, 2),
            },
            margin_px: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.dpi.is_finite() && (100.0..=600.0).contains(&self.dpi)) {
            return bad(format!("dpi {} outside 100..=600", self.dpi));
        }
        if !(self.noise.sigma >= 0.0 && self.noise.sigma.is_finite()) {
            return bad("noise sigma must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.noise.speckle_density) {
            return bad("speckle density must be in [0, 1]".into());
        }
        if !(self.skew_deg.abs() <= 5.0) {
            return bad(format!("skew {} exceeds 5 degrees", self.skew_deg));
        }
        for k in ZoneKind::ALL {
            let p = self.overflow_prob.get(k);
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("overflow probability for {k} must be in [0, 1]"));
            }
            let (lo, hi) = self.paw_count_range.get(k);
            if lo == 0 || lo > hi {
                return bad(format!("PAW count range for {k} must satisfy 1 <= min <= max"));
            }
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream);
        r
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtChar {
    pub rect: Rect,
    pub value: GlyphValue,
}

/// Ink of one zone as row runs `[y, x0, len]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtZone {
    pub kind: ZoneKind,
    pub template_rect: Rect,
    pub ink_bbox: Option<Rect>,
    pub paw_count: usize,
    pub overflowed: bool,
    pub ink: Vec<[usize; 3]>,
}

impl GtZone {
    pub fn ink_pixels(&self) -> usize {
        self.ink.iter().map(|r| r[2]).sum()
    }

    pub fn ink_mask(&self, width: usize, height: usize) -> BitMask {
        let mut m = BitMask::new(width, height);
        for &[y, x0, len] in &self.ink {
            for x in x0..x0 + len {
                m.set(x, y, true);
            }
        }
        m
    }

    /// Fraction of this zone's ink inside `rect` (1 when there is no ink).
    pub fn containment(&self, rect: &Rect) -> f64 {
        let total = self.ink_pixels();
        if total == 0 {
            return 1.0;
        }
        let inside: usize = self
            .ink
            .iter()
            .filter(|r| r[0] >= rect.y && r[0] < rect.bottom())
            .map(|&[_, x0, len]| {
                let lo = x0.max(rect.x);
                let hi = (x0 + len).min(rect.right());
                hi.saturating_sub(lo)
            })
            .sum();
        inside as f64 / total as f64
    }
}

/// Everything known about a generated check. Coordinates are in the
/// unrotated output frame, so they line up with the image after deskewing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckGroundTruth {
    pub schema: u32,
    pub bank_code: String,
    pub bank_name: String,
    pub seed: u64,
    pub dpi: f64,
    pub width: usize,
    pub height: usize,
    pub skew_deg: f64,
    pub band_rect: Rect,
    pub band_chars: Vec<GtChar>,
    pub code_positions: Vec<usize>,
    pub ink_rgb: Option<[u8; 3]>,
    pub zones: Vec<GtZone>,
}

impl CheckGroundTruth {
    pub fn zone(&self, kind: ZoneKind) -> Option<&GtZone> {
        self.zones.iter().find(|z| z.kind == kind)
    }

    pub fn code_digits(&self) -> String {
        self.code_positions.iter().map(|&p| self.band_chars[p].value.to_string()).collect()
    }
}

/// Frame layout derived from dpi and margin.
struct Frame {
    scale: f64,
    margin: usize,
    width: usize,
    height: usize,
    band_top: usize,
    nominal: usize,
}

impl Frame {
    fn new(dpi: f64, margin: usize) -> Self {
        let scale = dpi / 150.0;
        let nominal = nominal_band_height(dpi);
        let inner_w = (FRAME_W * scale).round() as usize;
        let inner_h = (BODY_H * scale).round() as usize + nominal + BORDER;
        Self {
            scale,
            margin,
            width: inner_w + 2 * margin,
            height: inner_h + 2 * margin,
            band_top: margin + inner_h - BORDER - nominal,
            nominal,
        }
    }

    fn px(&self, v: f64) -> usize {
        (v * self.scale).round() as usize
    }

    fn zone_rect(&self, r: Rect) -> Rect {
        let s = self.scale;
        let x0 = (r.x as f64 * s).round() as usize;
        let y0 = (r.y as f64 * s).round() as usize;
        let x1 = (r.right() as f64 * s).round() as usize;
        let y1 = (r.bottom() as f64 * s).round() as usize;
        let inner_w = self.width - 2 * self.margin;
        let inner_h = self.height - 2 * self.margin;
        Rect::new(x0, y0, x1.min(inner_w) - x0, y1.min(inner_h) - y0).translate(self.margin as i64, self.margin as i64)
    }

    /// Bottom row (exclusive) that handwriting may reach.
    fn writable_bottom(&self) -> usize {
        self.band_top - (0.3 * self.nominal as f64).ceil() as usize
    }
}

fn fill_rect(img: &mut Raster, r: Rect, rgb: [u8; 3]) {
    let r = r.clamp_to(img.width(), img.height());
    for y in r.y..r.bottom() {
        for x in r.x..r.right() {
            img.set_rgb(x, y, rgb);
        }
    }
}

/// Text-like run of small blocks with word gaps.
fn draw_fake_text(img: &mut Raster, rng: &mut ChaCha8Rng, x: usize, y: usize, w: usize, h: usize) {
    let mut cx = x;
    let letter_w = (h * 2 / 3).max(2);
    while cx + letter_w <= x + w {
        let lh = rng.random_range(h / 2..=h);
        fill_rect(img, Rect::new(cx, y + h - lh, letter_w, lh), PRINT_RGB);
        cx += letter_w + 1 + if rng.random_bool(0.2) { letter_w } else { 0 };
    }
}

/// Clean rendering of the bank's blank check.
pub fn generate_template(bank: &BankRecord, spec: &GenSpec) -> Result<(Raster, CheckGroundTruth)> {
    spec.validate()?;
    if bank.code != spec.bank_code {
        return Err(Error::UnknownBank(spec.bank_code.clone()));
    }
    let table = GlyphTable::default();
    let f = Frame::new(spec.dpi, spec.margin_px);
    let mut rng = spec.rng(STREAM_TEMPLATE);
    let mut img = Raster::filled_rgb(f.width, f.height, [255, 255, 255], spec.dpi);
    let m = f.margin;
    let inner = Rect::new(m, m, f.width - 2 * m, f.height - 2 * m);
    fill_rect(&mut img, inner, BACKGROUND_RGB);

    // border rules stop above the band so trimming keeps the full frame
    let rule_bottom = f.writable_bottom();
    fill_rect(&mut img, Rect::new(m + BORDER, m + BORDER, inner.w - 2 * BORDER, 1), PRINT_RGB);
    fill_rect(&mut img, Rect::new(m + BORDER, m + BORDER, 1, rule_bottom - m - BORDER), PRINT_RGB);
    fill_rect(&mut img, Rect::new(inner.right() - 1 - BORDER, m + BORDER, 1, rule_bottom - m - BORDER), PRINT_RGB);

    // bank name block
    draw_fake_text(&mut img, &mut rng, m + f.px(24.0), m + f.px(14.0), f.px(240.0), f.px(18.0));

    // printed label and rule per zone
    for z in &bank.zones.zones {
        let r = f.zone_rect(z.rect);
        let lh = f.px(7.0);
        draw_fake_text(&mut img, &mut rng, r.x + f.px(6.0), r.y + f.px(3.0), f.px(60.0).min(r.w / 3), lh);
        if r.bottom() < rule_bottom {
            fill_rect(&mut img, Rect::new(r.x, r.bottom() - 1, r.w, 1), PRINT_RGB);
        }
    }

    // marking band
    let geom = GlyphGeometry::for_dpi(spec.dpi);
    let layout = &bank.band_layout;
    let values = layout.sequence(&bank.code, || rng.random_range(0..10u8))?;
    let glyphs: Vec<_> = values
        .iter()
        .map(|&v| table.get(v).ok_or_else(|| Error::InvalidInput(format!("no glyph for {v}"))))
        .collect::<Result<_>>()?;
    let (last, rest) = glyphs.split_last().expect("layout is not empty");
    let total = rest.iter().map(|g| geom.advance(g)).sum::<usize>() + geom.glyph_width(last);
    if total + 2 * BORDER > inner.w {
        return Err(Error::InvalidInput("marking band does not fit the frame".into()));
    }
    let mut x = m + (inner.w - total) / 2;
    let mut band_chars = Vec::with_capacity(values.len());
    for (g, &v) in glyphs.iter().zip(&values) {
        let gm = render_glyph(g, &geom);
        for (gx, gy) in gm.iter_ink() {
            img.set_rgb(x + gx, f.band_top + gy, BAND_RGB);
        }
        let bb = gm.ink_bbox().expect("glyphs have ink");
        band_chars.push(GtChar { rect: bb.translate(x as i64, f.band_top as i64), value: v });
        x += geom.advance(g);
    }
    let band_rect = Rect::new(m, f.band_top, inner.w, f.nominal);

    let zones = bank
        .zones
        .zones
        .iter()
        .map(|z| GtZone {
            kind: z.kind,
            template_rect: f.zone_rect(z.rect),
            ink_bbox: None,
            paw_count: 0,
            overflowed: false,
            ink: Vec::new(),
        })
        .collect();
    let gt = CheckGroundTruth {
        schema: GT_SCHEMA,
        bank_code: bank.code.clone(),
        bank_name: bank.name.clone(),
        seed: spec.seed,
        dpi: spec.dpi,
        width: f.width,
        height: f.height,
        skew_deg: 0.0,
        band_rect,
        band_chars,
        code_positions: layout.code_positions.clone(),
        ink_rgb: None,
        zones,
    };
    Ok((img, gt))
}

fn add_noise(img: &mut Raster, sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    for p in img.pixels_mut() {
        let v = *p as f64 + normal.sample(rng);
        *p = v.round().clamp(0.0, 255.0) as u8;
    }
}

fn add_speckle(img: &mut Raster, density: f64, rng: &mut ChaCha8Rng) {
    let expected = density * (img.width() * img.height()) as f64;
    if expected <= 0.0 {
        return;
    }
    let n = Poisson::new(expected).expect("positive rate").sample(rng) as usize;
    for _ in 0..n {
        let s = rng.random_range(1..=2);
        let x = rng.random_range(0..img.width());
        let y = rng.random_range(0..img.height());
        fill_rect(img, Rect::new(x, y, s, s), SPECKLE_RGB);
    }
}

/// A scan of the blank template: scanner noise only.
pub fn scan_blank(template: &Raster, spec: &GenSpec) -> Raster {
    let mut img = template.clone();
    add_noise(&mut img, spec.noise.sigma, &mut spec.rng(STREAM_SCAN));
    img
}

/// Square brush stroke from `a` to `b`.
fn stroke(mask: &mut BitMask, a: (f64, f64), b: (f64, f64), t: usize) {
    let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    let steps = (len * 2.0).ceil().max(1.0) as usize;
    let half = (t as f64 - 1.0) / 2.0;
    for i in 0..=steps {
        let u = i as f64 / steps as f64;
        let cx = a.0 + (b.0 - a.0) * u;
        let cy = a.1 + (b.1 - a.1) * u;
        let x0 = (cx - half).round() as i64;
        let y0 = (cy - half).round() as i64;
        for y in y0..y0 + t as i64 {
            for x in x0..x0 + t as i64 {
                if x >= 0 && y >= 0 && (x as usize) < mask.width() && (y as usize) < mask.height() {
                    mask.set(x as usize, y as usize, true);
                }
            }
        }
    }
}

fn polyline(mask: &mut BitMask, pts: &[(f64, f64)], t: usize) {
    for w in pts.windows(2) {
        stroke(mask, w[0], w[1], t);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Edge {
    Left,
    Right,
    Top,
    Bottom,
}

struct ZoneInk {
    mask: BitMask,
    paws: usize,
    overflowed: bool,
}

/// Draw one zone's handwriting: PAW clusters laid out right to left.
fn write_zone(
    f: &Frame,
    rect: Rect,
    kind: ZoneKind,
    spec: &GenSpec,
    rng: &mut ChaCha8Rng,
) -> ZoneInk {
    let t = f.px(2.0).max(2);
    let mut mask = BitMask::new(f.width, f.height);
    let inset = t + 3;
    let dot_room = t + 3;
    let (lo, hi) = spec.paw_count_range.get(kind);
    let want = rng.random_range(lo..=hi);

    let top = (rect.y + inset + dot_room) as f64;
    let bottom = (rect.bottom() - inset - dot_room) as f64;
    let left = (rect.x + inset) as f64;
    let mut right = (rect.right() - inset) as f64;
    let body_h = (bottom - top).max(t as f64 + 2.0);
    let min_gap = 10.0 + t as f64;

    let (slot_lo, slot_hi) = match kind {
        ZoneKind::Signature => (0.35, 0.8),
        _ => (0.4, 1.4),
    };
    let mut vertices: Vec<(f64, f64)> = Vec::new();
    let mut paws = 0;
    while paws < want {
        let slot_w = (body_h * rng.random_range(slot_lo..slot_hi)).max(2.0 * t as f64);
        let slot_w = match kind {
            ZoneKind::Signature => ((rect.w as f64 - 2.0 * inset as f64) / want as f64 - min_gap).max(slot_w),
            _ => slot_w,
        };
        let x1 = right;
        let x0 = x1 - slot_w;
        if x0 < left {
            break;
        }
        // connected polyline inside the slot; vertices are brush centers
        let half = t as f64 / 2.0;
        let n = rng.random_range(3..=7);
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let u = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                let x = x1 - half - u * (slot_w - t as f64) + rng.random_range(-0.15..0.15) * slot_w;
                let y = rng.random_range(top + half..=bottom - half);
                (x.clamp(x0 + half, x1 - half), y)
            })
            .collect();
        polyline(&mut mask, &pts, t);
        vertices.extend_from_slice(&pts);

        // a diacritic dot 1 or 2 rows clear of the body
        if rng.random_bool(0.35) {
            let body = mask.restrict(Rect::from_corners(x0.floor() as usize, rect.y, x1.ceil() as usize - 1, rect.bottom() - 1));
            if let Some(bb) = body.ink_bbox() {
                let gap = rng.random_range(1..=2);
                let above = rng.random_bool(0.5);
                // anchor over an ink pixel on the body's extreme row
                let row = if above { bb.y } else { bb.bottom() - 1 };
                let cols: Vec<usize> = (bb.x..bb.right()).filter(|&x| body.get(x, row)).collect();
                let dx = cols[rng.random_range(0..cols.len())].saturating_sub(t / 2);
                let y = if above { bb.y.checked_sub(gap + t) } else { Some(bb.bottom() + gap) };
                if let Some(y) = y.filter(|&y| y > rect.y && y + t < rect.bottom()) {
                    for yy in y..y + t {
                        for xx in dx..dx + t {
                            mask.set(xx, yy, true);
                        }
                    }
                }
            }
        }
        paws += 1;
        right = x0 - rng.random_range(min_gap..min_gap + 2.0 * t as f64 + 6.0);
    }

    let mut overflowed = false;
    if rng.random_bool(spec.overflow_prob.get(kind)) {
        overflowed = overflow(f, rect, &mut mask, &vertices, t, rng);
    }
    ZoneInk { mask, paws, overflowed }
}

/// Extend the ink past one zone edge with room by 5–20 px, with enough
/// outside ink (2% of the zone) that the template rect alone misses it.
fn overflow(
    f: &Frame,
    rect: Rect,
    mask: &mut BitMask,
    vertices: &[(f64, f64)],
    t: usize,
    rng: &mut ChaCha8Rng,
) -> bool {
    if vertices.is_empty() {
        return false;
    }
    let depth = rng.random_range(5..=20) as f64;
    let lim_l = (f.margin + BORDER + 2) as f64;
    let lim_r = (f.width - f.margin - BORDER - 3) as f64;
    let lim_t = (f.margin + BORDER + 2) as f64;
    let lim_b = f.writable_bottom() as f64;
    let room = |e: Edge| match e {
        Edge::Left => rect.x as f64 - lim_l,
        Edge::Right => lim_r - rect.right() as f64,
        Edge::Top => rect.y as f64 - lim_t,
        Edge::Bottom => lim_b - rect.bottom() as f64,
    };
    let edges: Vec<Edge> = [Edge::Bottom, Edge::Right, Edge::Top, Edge::Left]
        .into_iter()
        .filter(|&e| room(e) >= depth + t as f64)
        .collect();
    if edges.is_empty() {
        return false;
    }
    let edge = edges[rng.random_range(0..edges.len())];
    // start from the vertex closest to that edge so the overflow stays attached
    let key = |p: &(f64, f64)| match edge {
        Edge::Left => p.0,
        Edge::Right => -p.0,
        Edge::Top => p.1,
        Edge::Bottom => -p.1,
    };
    let start = *vertices.iter().min_by(|a, b| key(a).total_cmp(&key(b))).expect("non-empty");
    let half = t as f64 / 2.0;
    let out_lo = 2.0 + half;
    let out_hi = depth - half;
    // outside point at offset `o` past the edge, at position `s` along it
    let at = |s: f64, o: f64| match edge {
        Edge::Left => (rect.x as f64 - o, s),
        Edge::Right => (rect.right() as f64 - 1.0 + o, s),
        Edge::Top => (s, rect.y as f64 - o),
        Edge::Bottom => (s, rect.bottom() as f64 - 1.0 + o),
    };
    let (along_lo, along_hi) = match edge {
        Edge::Left | Edge::Right => (rect.y as f64 + half, rect.bottom() as f64 - 1.0 - half),
        Edge::Top | Edge::Bottom => (rect.x as f64 + half, rect.right() as f64 - 1.0 - half),
    };
    let mut s = match edge {
        Edge::Left | Edge::Right => start.1,
        Edge::Top | Edge::Bottom => start.0,
    };
    let mut pts = vec![start, at(s, out_hi)];
    let mut dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let outside = |mask: &BitMask| mask.count() - mask.restrict(rect).count();
    polyline(mask, &pts, t);
    for _ in 0..400 {
        if outside(mask) as f64 >= 0.02 * mask.count() as f64 {
            break;
        }
        let step = rng.random_range(4.0..10.0);
        if s + dir * step > along_hi || s + dir * step < along_lo {
            dir = -dir;
        }
        s = (s + dir * step).clamp(along_lo, along_hi);
        let o = rng.random_range(out_lo.min(out_hi)..=out_hi);
        let p = at(s, o);
        stroke(mask, *pts.last().expect("non-empty"), p, t);
        pts.push(p);
    }
    true
}

/// Fill a template with handwriting, then skew and add scanner noise.
pub fn fill_check(template: &Raster, gt: &CheckGroundTruth, spec: &GenSpec) -> Result<(Raster, CheckGroundTruth)> {
    spec.validate()?;
    if (template.width(), template.height()) != (gt.width, gt.height) {
        return Err(Error::InvalidInput("template and ground truth sizes differ".into()));
    }
    let f = Frame::new(spec.dpi, spec.margin_px);
    let inks: Vec<ZoneInk> = gt
        .zones
        .iter()
        .map(|z| {
            let idx = ZoneKind::ALL.iter().position(|&k| k == z.kind).expect("known kind") as u64;
            let mut rng = spec.rng(STREAM_ZONE_BASE + idx);
            write_zone(&f, z.template_rect, z.kind, spec, &mut rng)
        })
        .collect();

    let mut img = template.clone();
    let mut out = gt.clone();
    for (z, ink) in out.zones.iter_mut().zip(&inks) {
        for (x, y) in ink.mask.iter_ink() {
            img.set_rgb(x, y, spec.ink_rgb);
        }
        z.ink = runs(&ink.mask);
        z.ink_bbox = ink.mask.ink_bbox();
        z.paw_count = ink.paws;
        z.overflowed = ink.overflowed;
    }
    out.skew_deg = spec.skew_deg;
    out.ink_rgb = Some(spec.ink_rgb);

    let mut img = rotate(&img, spec.skew_deg);
    add_noise(&mut img, spec.noise.sigma, &mut spec.rng(STREAM_FILL_NOISE));
    add_speckle(&mut img, spec.noise.speckle_density, &mut spec.rng(STREAM_SPECKLE));
    Ok((img, out))
}

fn runs(mask: &BitMask) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for y in 0..mask.height() {
        let mut x = 0;
        while x < mask.width() {
            if mask.get(x, y) {
                let x0 = x;
                while x < mask.width() && mask.get(x, y) {
                    x += 1;
                }
                out.push([y, x0, x - x0]);
            } else {
                x += 1;
            }
        }
    }
    out
}

/// Generated check with its template scan.
pub struct GeneratedCheck {
    pub template: Raster,
    pub filled: Raster,
    pub gt: CheckGroundTruth,
}

pub fn generate_check(bank: &BankRecord, spec: &GenSpec) -> Result<GeneratedCheck> {
    let (clean, gt) = generate_template(bank, spec)?;
    let (filled, gt) = fill_check(&clean, &gt, spec)?;
    Ok(GeneratedCheck { template: scan_blank(&clean, spec), filled, gt })
}

/// Options for writing a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    /// Bank names or codes; empty means every registered bank.
    pub banks: Vec<String>,
    pub count: usize,
    pub base_seed: u64,
    pub dpi: f64,
    pub noise: NoiseSpec,
    pub skew_deg: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            banks: Vec::new(),
            count: DEFAULT_CHECKS_PER_BANK,
            base_seed: 1,
            dpi: 200.0,
            noise: NoiseSpec::default(),
            skew_deg: 0.0,
        }
    }
}

impl CorpusSpec {
    pub fn select<'a>(&self, registry: &'a Registry) -> Result<Vec<&'a BankRecord>> {
        if self.banks.is_empty() {
            return Ok(registry.banks.iter().collect());
        }
        self.banks
            .iter()
            .map(|b| {
                registry.by_name(b).or_else(|| registry.lookup(b)).ok_or_else(|| Error::UnknownBank(b.clone()))
            })
            .collect()
    }

    /// Per-check specs. Seeds run from `base_seed` across the whole corpus,
    /// so no two checks share one. Pen color is drawn from the palette.
    pub fn check_specs(&self, registry: &Registry) -> Result<Vec<(BankRecord, GenSpec)>> {
        let mut out = Vec::new();
        for (b, bank) in self.select(registry)?.into_iter().enumerate() {
            for i in 0..self.count {
                let seed = self.base_seed.wrapping_add((b * self.count + i) as u64);
                let mut spec = GenSpec::new(&bank.code, seed);
                spec.dpi = self.dpi;
                spec.noise = self.noise;
                spec.skew_deg = self.skew_deg;
                let mut pick = spec.rng(STREAM_TEMPLATE + 4);
                spec.ink_rgb = INK_PALETTE[pick.random_range(0..INK_PALETTE.len())];
                spec.validate()?;
                out.push((bank.clone(), spec));
            }
        }
        Ok(out)
    }
}

/// Write `out_dir/<bank>/<seed>/{template.png, filled.png, gt.json}`.
/// Returns the number of checks written per bank name.
pub fn write_corpus(out_dir: &Path, registry: &Registry, corpus: &CorpusSpec) -> Result<Vec<(String, usize)>> {
    let specs = corpus.check_specs(registry)?;
    specs.par_iter().try_for_each(|(bank, spec)| -> Result<()> {
        let c = generate_check(bank, spec)?;
        let dir = out_dir.join(&bank.name).join(spec.seed.to_string());
        fs::create_dir_all(&dir)?;
        write_png(&dir.join("template.png"), &c.template)?;
        write_png(&dir.join("filled.png"), &c.filled)?;
        fs::write(dir.join("gt.json"), serde_json::to_string(&c.gt)?)?;
        Ok(())
    })?;
    let mut counts: Vec<(String, usize)> = Vec::new();
    for (bank, _) in &specs {
        match counts.iter_mut().find(|(n, _)| n == &bank.name) {
            Some((_, c)) => *c += 1,
            None => counts.push((bank.name.clone(), 1)),
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::{label_components, Connectivity};

    fn bank(code: &str) -> BankRecord {
        Registry::default().lookup(code).unwrap().clone()
    }

    fn clean_spec(code: &str, seed: u64) -> GenSpec {
        let mut s = GenSpec::new(code, seed);
        s.noise = NoiseSpec::NONE;
        s.overflow_prob = PerZone::uniform(0.0);
        s
    }

    #[test]
    fn generation_is_deterministic() {
        let b = bank("10");
        let s = GenSpec::new("10", 42);
        let a = generate_check(&b, &s).unwrap();
        let c = generate_check(&b, &s).unwrap();
        assert_eq!(a.filled, c.filled);
        assert_eq!(a.template, c.template);
        assert_eq!(a.gt, c.gt);
    }

    #[test]
    fn band_height_and_code_digits() {
        for dpi in [150.0, 200.0, 300.0] {
            let mut s = clean_spec("02", 3);
            s.dpi = dpi;
            let (_, gt) = generate_template(&bank("02"), &s).unwrap();
            assert_eq!(gt.band_rect.h, nominal_band_height(dpi));
            assert_eq!(gt.code_digits(), "02");
            assert_eq!(gt.band_chars.len(), 23);
            for c in &gt.band_chars {
                assert!(gt.band_rect.contains_rect(&c.rect));
            }
        }
    }

    #[test]
    fn band_chars_match_the_glyph_table() {
        let s = clean_spec("14", 8);
        let (img, gt) = generate_template(&bank("14"), &s).unwrap();
        let table = GlyphTable::default();
        let geom = GlyphGeometry::for_dpi(s.dpi);
        for c in &gt.band_chars {
            let want = render_glyph(table.get(c.value).unwrap(), &geom);
            let bb = want.ink_bbox().unwrap();
            let x0 = c.rect.x - bb.x;
            let y0 = c.rect.y - bb.y;
            for (x, y) in want.iter_ink() {
                assert_eq!(img.rgb(x0 + x, y0 + y), BAND_RGB);
            }
        }
    }

    #[test]
    fn mismatched_bank_is_rejected() {
        assert!(matches!(generate_template(&bank("02"), &GenSpec::new("10", 1)), Err(Error::UnknownBank(_))));
    }

    #[test]
    fn without_overflow_ink_stays_in_its_zone() {
        for seed in 0..6 {
            let s = clean_spec("04", seed);
            let c = generate_check(&bank("04"), &s).unwrap();
            for z in &c.gt.zones {
                assert!(z.ink_pixels() > 0);
                assert_eq!(z.containment(&z.template_rect), 1.0, "{} seed {seed}", z.kind);
                assert!(!z.overflowed);
            }
        }
    }

    #[test]
    fn overflow_puts_ink_past_one_edge() {
        let mut s = clean_spec("02", 5);
        s.overflow_prob = PerZone::uniform(0.0);
        s.overflow_prob.signature = 1.0;
        let c = generate_check(&bank("02"), &s).unwrap();
        let z = c.gt.zone(ZoneKind::Signature).unwrap();
        assert!(z.overflowed);
        assert!(z.containment(&z.template_rect) < 0.99);
        let bb = z.ink_bbox.unwrap();
        let past = [
            z.template_rect.x.saturating_sub(bb.x),
            bb.right().saturating_sub(z.template_rect.right()),
            z.template_rect.y.saturating_sub(bb.y),
            bb.bottom().saturating_sub(z.template_rect.bottom()),
        ];
        let max = *past.iter().max().unwrap();
        assert!((5..=20).contains(&max), "{past:?}");
        // overflow is attached to the body
        let m = z.ink_mask(c.gt.width, c.gt.height);
        let lm = label_components(&m, Connectivity::Eight);
        let outside = m.iter_ink().find(|&(x, y)| !z.template_rect.contains(x, y)).unwrap();
        let l = lm.label(outside.0, outside.1);
        assert!(z.template_rect.intersect(&lm.bbox(l).unwrap()).is_some());
    }

    #[test]
    fn paws_are_separated_and_dots_are_close() {
        let s = clean_spec("12", 11);
        let c = generate_check(&bank("12"), &s).unwrap();
        for z in &c.gt.zones {
            let m = z.ink_mask(c.gt.width, c.gt.height);
            let groups = crate::handwriting::group_paws(&m, z.template_rect, 3, 1);
            assert_eq!(groups.len(), z.paw_count, "{}", z.kind);
        }
    }

    #[test]
    fn filled_ink_has_the_pen_color() {
        let mut s = clean_spec("03", 2);
        s.ink_rgb = INK_PALETTE[1];
        let c = generate_check(&bank("03"), &s).unwrap();
        let z = &c.gt.zones[0];
        let [y, x, _] = z.ink[0];
        assert_eq!(c.filled.rgb(x, y), INK_PALETTE[1]);
        assert_eq!(c.gt.ink_rgb, Some(INK_PALETTE[1]));
    }

    #[test]
    fn gt_json_round_trip() {
        let c = generate_check(&bank("10"), &GenSpec::new("10", 9)).unwrap();
        let text = serde_json::to_string(&c.gt).unwrap();
        let back: CheckGroundTruth = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c.gt);
    }

    #[test]
    fn spec_validation() {
        let mut s = GenSpec::new("02", 1);
        s.skew_deg = 6.0;
        assert!(s.validate().is_err());
        let mut s = GenSpec::new("02", 1);
        s.overflow_prob.date = 1.5;
        assert!(s.validate().is_err());
        let mut s = GenSpec::new("02", 1);
        s.noise.sigma = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn default_corpus_has_120_checks() {
        let specs = CorpusSpec::default().check_specs(&Registry::default()).unwrap();
        assert_eq!(specs.len(), 120);
        let one = CorpusSpec { banks: vec!["STB".into()], count: 5, ..Default::default() };
        assert_eq!(one.check_specs(&Registry::default()).unwrap().len(), 5);
        let bad = CorpusSpec { banks: vec!["XYZ".into()], ..Default::default() };
        assert!(matches!(bad.check_specs(&Registry::default()), Err(Error::UnknownBank(_))));
    }
}
