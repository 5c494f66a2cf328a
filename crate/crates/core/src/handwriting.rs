//! Handwriting separation by histogram difference, zone clipping, zone-limit
//! improvement and grouping of word pieces (PAWs).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{dilate, label_components, Connectivity, LabelMap, StructuringElement};
use crate::raster::{BitMask, ColorHistogram, Raster, Rect};

/// Bins whose positive difference does not exceed this many pixels are noise.
pub const DEFAULT_NOISE_FLOOR: u64 = 10;
/// ±1 quantization step at 5 bits per channel.
pub const DEFAULT_INK_TOLERANCE: u8 = 8;
pub const DEFAULT_PAW_H_LEVEL: usize = 3;
pub const DEFAULT_PAW_V_LEVEL: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneKind {
    DigitalAmount,
    LiteralAmount,
    Conductor,
    Date,
    Signature,
}

impl ZoneKind {
    pub const ALL: [ZoneKind; 5] = [
        ZoneKind::DigitalAmount,
        ZoneKind::LiteralAmount,
        ZoneKind::Conductor,
        ZoneKind::Date,
        ZoneKind::Signature,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ZoneKind::DigitalAmount => "digital_amount",
            ZoneKind::LiteralAmount => "literal_amount",
            ZoneKind::Conductor => "conductor",
            ZoneKind::Date => "date",
            ZoneKind::Signature => "signature",
        }
    }
}

impl fmt::Display for ZoneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ZoneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ZoneKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown zone kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    pub kind: ZoneKind,
    pub rect: Rect,
}

/// Named zone rectangles of one bank, in pixels at `template_dpi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneTemplate {
    pub template_dpi: f64,
    pub zones: Vec<Zone>,
}

impl ZoneTemplate {
    pub fn new(template_dpi: f64, zones: Vec<Zone>) -> Result<Self> {
        let t = Self { template_dpi, zones };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.template_dpi.is_finite() && self.template_dpi > 0.0) {
            return Err(Error::InvalidInput("template_dpi must be positive".into()));
        }
        for (i, z) in self.zones.iter().enumerate() {
            if z.rect.is_empty() {
                return Err(Error::InvalidInput(format!("zone {} is empty", z.kind)));
            }
            if self.zones[..i].iter().any(|o| o.kind == z.kind) {
                return Err(Error::InvalidInput(format!("zone {} defined twice", z.kind)));
            }
        }
        Ok(())
    }

    pub fn get(&self, kind: ZoneKind) -> Option<Rect> {
        self.zones.iter().find(|z| z.kind == kind).map(|z| z.rect)
    }

    /// Zone rectangles scaled to `dpi` and clamped to a `width`×`height` frame.
    pub fn scaled(&self, dpi: f64, width: usize, height: usize) -> Vec<Zone> {
        let s = dpi / self.template_dpi;
        let sc = |v: usize| (v as f64 * s).round() as usize;
        self.zones
            .iter()
            .map(|z| {
                let (x0, y0) = (sc(z.rect.x), sc(z.rect.y));
                let (x1, y1) = (sc(z.rect.right()), sc(z.rect.bottom()));
                let rect = Rect::new(x0, y0, x1.saturating_sub(x0), y1.saturating_sub(y0));
                Zone { kind: z.kind, rect: rect.clamp_to(width, height) }
            })
            .collect()
    }
}

/// Handwriting color: a quantized bin center and a per-channel band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InkColor {
    pub rgb: [u8; 3],
    pub tolerance: [u8; 3],
}

fn luma_f(rgb: [u8; 3]) -> f64 {
    0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64
}

/// The bin that gained the most pixels between the blank and the filled check.
///
/// Bins that lost pixels are ignored. Ties go to the darker bin, then the
/// lower bin index.
pub fn handwriting_color(
    filled: &ColorHistogram,
    template: &ColorHistogram,
    noise_floor: u64,
    tolerance: u8,
) -> Result<InkColor> {
    if filled.bits_per_channel != template.bits_per_channel {
        return Err(Error::InvalidInput(format!(
            "histogram depths differ: {} vs {}",
            filled.bits_per_channel, template.bits_per_channel
        )));
    }
    let mut best: Option<(u64, u32)> = None;
    for (&bin, &count) in &filled.counts {
        let diff = count.saturating_sub(template.count(bin));
        if diff <= noise_floor {
            continue;
        }
        best = match best {
            None => Some((diff, bin)),
            Some((d, _)) if diff > d => Some((diff, bin)),
            Some((d, b))
                if diff == d && luma_f(filled.bin_center(bin)) < luma_f(filled.bin_center(b)) =>
            {
                Some((diff, bin))
            }
            keep => keep,
        };
    }
    let (_, bin) = best.ok_or(Error::NoDifference)?;
    Ok(InkColor { rgb: filled.bin_center(bin), tolerance: [tolerance; 3] })
}

/// Band-pass filter: keep pixels whose every channel lies within tolerance
/// of the ink color.
pub fn extract_ink_mask(img: &Raster, color: &InkColor) -> BitMask {
    BitMask::from_fn(img.width(), img.height(), |x, y| {
        let p = img.rgb(x, y);
        (0..3).all(|c| p[c].abs_diff(color.rgb[c]) <= color.tolerance[c])
    })
}

/// Zone rectangles of `template` in the coordinates of `mask`, which must be
/// the deskewed, trimmed check scanned at `image_dpi`.
pub fn clip_zones(mask: &BitMask, template: &ZoneTemplate, image_dpi: f64) -> Vec<Zone> {
    template.scaled(image_dpi, mask.width(), mask.height())
}

/// Move each edge of `rect` outward while a component lying on that edge
/// continues beyond it. Growth stops at the frame.
pub fn improve_zone_bounds(labels: &LabelMap, rect: Rect) -> Rect {
    let (fw, fh) = (labels.width(), labels.height());
    let mut r = rect.clamp_to(fw, fh);
    if r.is_empty() {
        return r;
    }
    let crosses = |x: usize, y: usize, beyond: &dyn Fn(&Rect) -> bool| {
        let l = labels.label(x, y);
        l != 0 && beyond(&labels.bbox(l).expect("label exists"))
    };
    loop {
        let mut grew = false;
        let y = r.y;
        if y > 0 && (r.x..r.right()).any(|x| crosses(x, y, &|b| b.y < y)) {
            r = Rect::new(r.x, y - 1, r.w, r.h + 1);
            grew = true;
        }
        let y = r.bottom() - 1;
        if r.bottom() < fh && (r.x..r.right()).any(|x| crosses(x, y, &|b| b.bottom() > y + 1)) {
            r.h += 1;
            grew = true;
        }
        let x = r.x;
        if x > 0 && (r.y..r.bottom()).any(|y| crosses(x, y, &|b| b.x < x)) {
            r = Rect::new(x - 1, r.y, r.w + 1, r.h);
            grew = true;
        }
        let x = r.right() - 1;
        if r.right() < fw && (r.y..r.bottom()).any(|y| crosses(x, y, &|b| b.right() > x + 1)) {
            r.w += 1;
            grew = true;
        }
        if !grew {
            return r;
        }
    }
}

/// One group of ink after PAW bridging.
#[derive(Debug, Clone, PartialEq)]
pub struct PawGroup {
    /// Bounding box in image coordinates.
    pub rect: Rect,
    /// Original (undilated) ink of the group, cropped to `rect`.
    pub clip: BitMask,
    pub pixels: usize,
}

/// Group the zone's ink into PAWs by dilating with a horizontal segment of
/// `h_level`, then a vertical one of `v_level`, and labeling the result.
/// Groups are returned right to left, then top to bottom.
pub fn group_paws(mask: &BitMask, rect: Rect, h_level: usize, v_level: usize) -> Vec<PawGroup> {
    let rect = rect.clamp_to(mask.width(), mask.height());
    if rect.is_empty() {
        return Vec::new();
    }
    let zone = mask.crop(rect);
    let mut bridged = zone.clone();
    if h_level > 0 {
        bridged = dilate(&bridged, &StructuringElement::horizontal(h_level));
    }
    if v_level > 0 {
        bridged = dilate(&bridged, &StructuringElement::vertical(v_level));
    }
    let lm = label_components(&bridged, Connectivity::Eight);
    let mut members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); lm.count()];
    for (x, y) in zone.iter_ink() {
        members[lm.label(x, y) as usize - 1].push((x, y));
    }
    let mut groups: Vec<PawGroup> = members
        .into_iter()
        .filter(|m| !m.is_empty())
        .map(|m| {
            let x0 = m.iter().map(|p| p.0).min().unwrap();
            let x1 = m.iter().map(|p| p.0).max().unwrap();
            let y0 = m.iter().map(|p| p.1).min().unwrap();
            let y1 = m.iter().map(|p| p.1).max().unwrap();
            let local = Rect::from_corners(x0, y0, x1, y1);
            let mut clip = BitMask::new(local.w, local.h);
            for &(x, y) in &m {
                clip.set(x - x0, y - y0, true);
            }
            PawGroup { rect: local.translate(rect.x as i64, rect.y as i64), clip, pixels: m.len() }
        })
        .collect();
    groups.sort_by_key(|g| (std::cmp::Reverse(g.rect.right()), g.rect.y, g.rect.x));
    groups
}

/// Zone of each component (indexed by label − 1): the zone holding most of
/// its pixels. Ties go to the larger bounding-box overlap, then to the
/// earlier zone. Components touching no zone map to `None`.
pub fn assign_components_to_zones(labels: &LabelMap, zones: &[Zone]) -> Vec<Option<ZoneKind>> {
    let mut overlap: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); labels.count()];
    for (zi, z) in zones.iter().enumerate() {
        let r = z.rect.clamp_to(labels.width(), labels.height());
        for y in r.y..r.bottom() {
            for x in r.x..r.right() {
                let l = labels.label(x, y);
                if l != 0 {
                    *overlap[l as usize - 1].entry(zi).or_default() += 1;
                }
            }
        }
    }
    overlap
        .iter()
        .enumerate()
        .map(|(i, counts)| {
            let bbox = labels.boxes()[i];
            let area = |zi: usize| bbox.intersect(&zones[zi].rect).map_or(0, |r| r.area());
            counts
                .iter()
                .max_by(|(za, ca), (zb, cb)| {
                    ca.cmp(cb).then(area(**za).cmp(&area(**zb))).then(zb.cmp(za))
                })
                .map(|(&zi, _)| zones[zi].kind)
        })
        .collect()
}

/// One zone after clipping, improvement and PAW grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneExtraction {
    pub kind: ZoneKind,
    pub original_rect: Rect,
    pub improved_rect: Rect,
    pub components: Vec<PawGroup>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PawParams {
    pub h_level: usize,
    pub v_level: usize,
}

impl Default for PawParams {
    fn default() -> Self {
        Self { h_level: DEFAULT_PAW_H_LEVEL, v_level: DEFAULT_PAW_V_LEVEL }
    }
}

/// Improve and group every zone. Zones are independent and processed in parallel.
pub fn extract_zones(ink: &BitMask, labels: &LabelMap, zones: &[Zone], paw: PawParams) -> Vec<ZoneExtraction> {
    use rayon::prelude::*;
    zones
        .par_iter()
        .map(|z| {
            let improved = improve_zone_bounds(labels, z.rect);
            ZoneExtraction {
                kind: z.kind,
                original_rect: z.rect,
                improved_rect: improved,
                components: group_paws(ink, improved, paw.h_level, paw.v_level),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::color_histogram;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blank(w: usize, h: usize) -> Raster {
        Raster::filled_rgb(w, h, [244, 244, 236], 200.0)
    }

    fn paint(img: &mut Raster, n: usize, rgb: [u8; 3], row: usize) {
        for i in 0..n {
            img.set_rgb(i % img.width(), row + i / img.width(), rgb);
        }
    }

    #[test]
    fn identical_histograms_have_no_ink() {
        let h = color_histogram(&blank(40, 40), 5).unwrap();
        assert!(matches!(handwriting_color(&h, &h, 10, 8), Err(Error::NoDifference)));
    }

    #[test]
    fn blue_strokes_are_found() {
        let t = blank(100, 50);
        let mut f = t.clone();
        paint(&mut f, 500, [36, 60, 164], 0);
        let c = handwriting_color(
            &color_histogram(&f, 5).unwrap(),
            &color_histogram(&t, 5).unwrap(),
            10,
            8,
        )
        .unwrap();
        assert_eq!(c.rgb, [36, 60, 164]);
        assert_eq!(c.tolerance, [8; 3]);
    }

    #[test]
    fn largest_peak_wins_over_smudge() {
        let t = blank(100, 50);
        let mut f = t.clone();
        paint(&mut f, 500, [36, 60, 164], 0);
        paint(&mut f, 60, [200, 30, 30], 20);
        let c = handwriting_color(
            &color_histogram(&f, 5).unwrap(),
            &color_histogram(&t, 5).unwrap(),
            10,
            8,
        )
        .unwrap();
        assert_eq!(c.rgb, [36, 60, 164]);
    }

    #[test]
    fn ties_go_to_the_darker_bin() {
        let t = blank(100, 50);
        let mut f = t.clone();
        paint(&mut f, 100, [220, 220, 220], 0);
        paint(&mut f, 100, [20, 20, 20], 10);
        let c = handwriting_color(
            &color_histogram(&f, 5).unwrap(),
            &color_histogram(&t, 5).unwrap(),
            10,
            8,
        )
        .unwrap();
        assert_eq!(c.rgb, [20, 20, 20]);
    }

    #[test]
    fn zero_tolerance_keeps_exact_color() {
        let mut img = blank(6, 6);
        img.set_rgb(1, 2, [36, 60, 164]);
        img.set_rgb(4, 4, [37, 60, 164]);
        let m = extract_ink_mask(&img, &InkColor { rgb: [36, 60, 164], tolerance: [0; 3] });
        assert_eq!(m.iter_ink().collect::<Vec<_>>(), vec![(1, 2)]);
    }

    #[test]
    fn ink_mask_matches_per_pixel_band_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pixels: Vec<u8> = (0..24 * 24 * 3).map(|_| rng.random()).collect();
        let img = Raster::from_raw(24, 24, crate::raster::Channels::Rgb8, pixels, 200.0).unwrap();
        let color = InkColor { rgb: [120, 60, 200], tolerance: [40, 50, 60] };
        let m = extract_ink_mask(&img, &color);
        for y in 0..24 {
            for x in 0..24 {
                let p = img.rgb(x, y);
                let inside = (p[0] as i32 - 120).abs() <= 40
                    && (p[1] as i32 - 60).abs() <= 50
                    && (p[2] as i32 - 200).abs() <= 60;
                assert_eq!(m.get(x, y), inside);
            }
        }
    }

    fn template() -> ZoneTemplate {
        ZoneTemplate::new(
            150.0,
            vec![
                Zone { kind: ZoneKind::DigitalAmount, rect: Rect::new(758, 22, 226, 60) },
                Zone { kind: ZoneKind::Date, rect: Rect::new(240, 347, 412, 38) },
            ],
        )
        .unwrap()
    }

    #[test]
    fn clip_at_template_dpi_is_verbatim() {
        let zones = clip_zones(&BitMask::new(1050, 536), &template(), 150.0);
        assert_eq!(zones[0].rect, Rect::new(758, 22, 226, 60));
        assert_eq!(zones[1].rect, Rect::new(240, 347, 412, 38));
    }

    #[test]
    fn clip_scales_and_clamps() {
        let zones = clip_zones(&BitMask::new(1400, 500), &template(), 300.0);
        assert_eq!(zones[0].rect, Rect::new(1400, 44, 0, 120));
        assert_eq!(zones[1].rect, Rect::new(480, 500, 824, 0));
    }

    #[test]
    fn duplicate_zone_kinds_are_rejected() {
        let z = Zone { kind: ZoneKind::Date, rect: Rect::new(0, 0, 5, 5) };
        assert!(ZoneTemplate::new(150.0, vec![z, z]).is_err());
    }

    fn labels_of(m: &BitMask) -> LabelMap {
        label_components(m, Connectivity::Eight)
    }

    #[test]
    fn improvement_leaves_clean_zone_alone() {
        let m = BitMask::from_fn(40, 30, |x, y| (12..18).contains(&x) && (10..14).contains(&y));
        let r = Rect::new(10, 8, 12, 10);
        assert_eq!(improve_zone_bounds(&labels_of(&m), r), r);
    }

    #[test]
    fn improvement_follows_straddling_stroke() {
        // stroke from x=15 to x=29 crosses the right edge (last column 20) by 9 px
        let m = BitMask::from_fn(60, 30, |x, y| (15..30).contains(&x) && (11..13).contains(&y));
        let r = Rect::new(10, 8, 11, 10);
        let out = improve_zone_bounds(&labels_of(&m), r);
        assert_eq!(out, Rect::new(10, 8, 20, 10));
    }

    #[test]
    fn improvement_stops_at_the_frame() {
        let m = BitMask::from_fn(30, 20, |x, y| x >= 5 && y == 10);
        let out = improve_zone_bounds(&labels_of(&m), Rect::new(2, 5, 10, 10));
        assert_eq!(out, Rect::new(2, 5, 28, 10));
    }

    #[test]
    fn improvement_is_monotone_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let m = BitMask::from_fn(40, 40, |_, _| rng.random_bool(0.2));
            let lm = labels_of(&m);
            let r = Rect::new(rng.random_range(0..30), rng.random_range(0..30), 5, 6);
            let once = improve_zone_bounds(&lm, r);
            assert!(once.contains_rect(&r));
            assert_eq!(improve_zone_bounds(&lm, once), once);
        }
    }

    #[test]
    fn empty_zone_has_no_groups() {
        assert!(group_paws(&BitMask::new(20, 20), Rect::new(2, 2, 10, 10), 3, 1).is_empty());
    }

    #[test]
    fn separated_strokes_stay_apart() {
        // three strokes 8 px apart horizontally (> 2*3+1), rows far apart vertically
        let m = BitMask::from_fn(60, 20, |x, y| {
            y == 5 && ((2..10).contains(&x) || (18..26).contains(&x) || (34..42).contains(&x))
        });
        let g = group_paws(&m, m.frame(), 3, 1);
        assert_eq!(g.len(), 3);
        // right to left
        assert!(g[0].rect.x > g[1].rect.x && g[1].rect.x > g[2].rect.x);
        assert_eq!(g.iter().map(|g| g.pixels).sum::<usize>(), m.count());
    }

    #[test]
    fn close_strokes_merge() {
        let m = BitMask::from_fn(30, 10, |x, y| y == 4 && ((2..8).contains(&x) || (10..16).contains(&x)));
        assert_eq!(group_paws(&m, m.frame(), 3, 1).len(), 1);
    }

    #[test]
    fn dot_above_body_joins_with_vertical_level() {
        let m = BitMask::from_fn(30, 12, |x, y| (y == 8 && (3..20).contains(&x)) || (y == 6 && x == 10));
        assert_eq!(group_paws(&m, m.frame(), 3, 0).len(), 2);
        assert_eq!(group_paws(&m, m.frame(), 3, 1).len(), 1);
    }

    #[test]
    fn group_count_is_monotone_in_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = BitMask::from_fn(50, 30, |_, _| rng.random_bool(0.05));
        let mut last = usize::MAX;
        for h in 0..6 {
            let n = group_paws(&m, m.frame(), h, 1).len();
            assert!(n <= last);
            last = n;
        }
        let mut last = usize::MAX;
        for v in 0..6 {
            let n = group_paws(&m, m.frame(), 2, v).len();
            assert!(n <= last);
            last = n;
        }
    }

    #[test]
    fn components_go_to_majority_zone() {
        // 10-pixel bar: 7 pixels in zone A (x<7), 3 in zone B
        let m = BitMask::from_fn(20, 5, |x, y| y == 2 && x < 10);
        let lm = labels_of(&m);
        let zones = [
            Zone { kind: ZoneKind::LiteralAmount, rect: Rect::new(0, 0, 7, 5) },
            Zone { kind: ZoneKind::Conductor, rect: Rect::new(7, 0, 13, 5) },
        ];
        assert_eq!(assign_components_to_zones(&lm, &zones), vec![Some(ZoneKind::LiteralAmount)]);
    }

    #[test]
    fn components_outside_every_zone_are_unassigned() {
        let m = BitMask::from_fn(20, 20, |x, y| x == 15 && y == 15);
        let zones = [Zone { kind: ZoneKind::Date, rect: Rect::new(0, 0, 5, 5) }];
        assert_eq!(assign_components_to_zones(&labels_of(&m), &zones), vec![None]);
    }

    #[test]
    fn zone_kind_names_round_trip() {
        for k in ZoneKind::ALL {
            assert_eq!(k.name().parse::<ZoneKind>().unwrap(), k);
        }
    }
}
