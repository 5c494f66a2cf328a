//! Binary dilation with segment/square structuring elements, connected
//! component labeling, and ultimate dilation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BitMask, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeShape {
    HorizontalSegment,
    VerticalSegment,
    Square,
}

/// Centered, symmetric structuring element. Level `k` spans `2k+1` pixels
/// along its axis (both axes for a square).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuringElement {
    pub shape: SeShape,
    pub level: usize,
}

impl StructuringElement {
    pub fn new(shape: SeShape, level: usize) -> Result<Self> {
        if level == 0 {
            return Err(Error::InvalidInput("structuring element level must be >= 1".into()));
        }
        Ok(Self { shape, level })
    }

    pub fn horizontal(level: usize) -> Self {
        Self::new(SeShape::HorizontalSegment, level).expect("level >= 1")
    }

    pub fn vertical(level: usize) -> Self {
        Self::new(SeShape::VerticalSegment, level).expect("level >= 1")
    }

    pub fn square(level: usize) -> Self {
        Self::new(SeShape::Square, level).expect("level >= 1")
    }

    /// Footprint offsets `(dx, dy)` relative to the origin.
    pub fn offsets(&self) -> Vec<(i64, i64)> {
        let k = self.level as i64;
        match self.shape {
            SeShape::HorizontalSegment => (-k..=k).map(|d| (d, 0)).collect(),
            SeShape::VerticalSegment => (-k..=k).map(|d| (0, d)).collect(),
            SeShape::Square => {
                (-k..=k).flat_map(|dy| (-k..=k).map(move |dx| (dx, dy))).collect()
            }
        }
    }
}

fn dilate_rows(mask: &BitMask, k: usize) -> BitMask {
    let (w, h) = (mask.width(), mask.height());
    let mut out = BitMask::new(w, h);
    let mut prefix = vec![0u32; w + 1];
    for y in 0..h {
        for x in 0..w {
            prefix[x + 1] = prefix[x] + mask.get(x, y) as u32;
        }
        for x in 0..w {
            let lo = x.saturating_sub(k);
            let hi = (x + k + 1).min(w);
            if prefix[hi] > prefix[lo] {
                out.set(x, y, true);
            }
        }
    }
    out
}

fn dilate_cols(mask: &BitMask, k: usize) -> BitMask {
    let (w, h) = (mask.width(), mask.height());
    let mut out = BitMask::new(w, h);
    let mut prefix = vec![0u32; h + 1];
    for x in 0..w {
        for y in 0..h {
            prefix[y + 1] = prefix[y] + mask.get(x, y) as u32;
        }
        for y in 0..h {
            let lo = y.saturating_sub(k);
            let hi = (y + k + 1).min(h);
            if prefix[hi] > prefix[lo] {
                out.set(x, y, true);
            }
        }
    }
    out
}

/// Minkowski sum of the ink with the element. Pixels beyond the frame are
/// neither read nor written.
pub fn dilate(mask: &BitMask, se: &StructuringElement) -> BitMask {
    match se.shape {
        SeShape::HorizontalSegment => dilate_rows(mask, se.level),
        SeShape::VerticalSegment => dilate_cols(mask, se.level),
        SeShape::Square => dilate_cols(&dilate_rows(mask, se.level), se.level),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

/// Connected components of a mask. Label 0 is background; labels run
/// `1..=count` in raster-scan order of first encounter.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    boxes: Vec<Rect>,
    sizes: Vec<usize>,
}

impl LabelMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn count(&self) -> usize {
        self.boxes.len()
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn contains(&self, label: u32) -> bool {
        label >= 1 && (label as usize) <= self.boxes.len()
    }

    /// Tight bounding box of a component.
    pub fn bbox(&self, label: u32) -> Option<Rect> {
        self.contains(label).then(|| self.boxes[label as usize - 1])
    }

    pub fn size(&self, label: u32) -> Option<usize> {
        self.contains(label).then(|| self.sizes[label as usize - 1])
    }

    pub fn boxes(&self) -> &[Rect] {
        &self.boxes
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Label of the component with the most pixels; ties go to the lower label.
    pub fn largest(&self) -> Option<u32> {
        self.sizes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i as u32 + 1)
    }

    pub fn component_mask(&self, label: u32) -> BitMask {
        BitMask::from_fn(self.width, self.height, |x, y| self.label(x, y) == label)
    }
}

fn find(parent: &mut [u32], mut a: u32) -> u32 {
    while parent[a as usize] != a {
        parent[a as usize] = parent[parent[a as usize] as usize];
        a = parent[a as usize];
    }
    a
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // keep the smaller provisional label as root so first-encounter order survives
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Two-pass union-find labeling.
pub fn label_components(mask: &BitMask, connectivity: Connectivity) -> LabelMap {
    let (w, h) = (mask.width(), mask.height());
    let mut provisional = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];

    let neighbors: &[(i64, i64)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (0, -1)],
        Connectivity::Eight => &[(-1, 0), (-1, -1), (0, -1), (1, -1)],
    };

    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut current = 0u32;
            for &(dx, dy) in neighbors {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx as usize >= w {
                    continue;
                }
                let l = provisional[ny as usize * w + nx as usize];
                if l == 0 {
                    continue;
                }
                if current == 0 {
                    current = l;
                } else if current != l {
                    union(&mut parent, current, l);
                }
            }
            if current == 0 {
                current = parent.len() as u32;
                parent.push(current);
            }
            provisional[y * w + x] = current;
        }
    }

    // resolve roots, renumber in order of first raster encounter
    let mut final_of_root = vec![0u32; parent.len()];
    let mut labels = vec![0u32; w * h];
    let mut boxes: Vec<Rect> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    let mut extents: Vec<(usize, usize, usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let p = provisional[y * w + x];
            if p == 0 {
                continue;
            }
            let root = find(&mut parent, p) as usize;
            if final_of_root[root] == 0 {
                extents.push((x, y, x, y));
                sizes.push(0);
                final_of_root[root] = extents.len() as u32;
            }
            let l = final_of_root[root];
            labels[y * w + x] = l;
            let e = &mut extents[l as usize - 1];
            e.0 = e.0.min(x);
            e.1 = e.1.min(y);
            e.2 = e.2.max(x);
            e.3 = e.3.max(y);
            sizes[l as usize - 1] += 1;
        }
    }
    boxes.extend(extents.into_iter().map(|(x0, y0, x1, y1)| Rect::from_corners(x0, y0, x1, y1)));
    LabelMap { width: w, height: h, labels, boxes, sizes }
}

pub fn count_components(mask: &BitMask) -> usize {
    label_components(mask, Connectivity::Eight).count()
}

/// Dilate repeatedly until the mask is a single 8-connected component or the
/// component count stops decreasing.
///
/// Returns the final mask and the number of dilations applied. Reaching
/// `max_iter` with more than one component left is `DidNotConverge`.
pub fn ultimate_dilate(
    mask: &BitMask,
    se: &StructuringElement,
    max_iter: usize,
) -> Result<(BitMask, usize)> {
    if max_iter == 0 {
        return Err(Error::InvalidInput("max_iter must be >= 1".into()));
    }
    let mut current = mask.clone();
    let mut count = count_components(&current);
    if count <= 1 {
        return Ok((current, 0));
    }
    for iter in 1..=max_iter {
        let next = dilate(&current, se);
        let next_count = count_components(&next);
        if next_count <= 1 {
            return Ok((next, iter));
        }
        if next_count >= count {
            // stalled before the budget ran out
            if iter < max_iter {
                return Ok((current, iter - 1));
            }
            return Err(Error::DidNotConverge { iterations: iter, components: next_count });
        }
        current = next;
        count = next_count;
    }
    Err(Error::DidNotConverge { iterations: max_iter, components: count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mask(w: usize, h: usize, density: f64, rng: &mut impl Rng) -> BitMask {
        BitMask::from_fn(w, h, |_, _| rng.random_bool(density))
    }

    fn brute_dilate(mask: &BitMask, se: &StructuringElement) -> BitMask {
        let offsets = se.offsets();
        BitMask::from_fn(mask.width(), mask.height(), |x, y| {
            offsets.iter().any(|&(dx, dy)| mask.get_signed(x as i64 - dx, y as i64 - dy))
        })
    }

    #[test]
    fn dilate_empty_is_empty() {
        let m = BitMask::new(5, 4);
        assert!(dilate(&m, &StructuringElement::square(2)).is_empty());
    }

    #[test]
    fn dilate_single_pixel_horizontal() {
        let mut m = BitMask::new(5, 3);
        m.set(2, 1, true);
        let d = dilate(&m, &StructuringElement::horizontal(1));
        assert_eq!(d, BitMask::from_ascii(&[".....", ".###.", "....."]));
    }

    #[test]
    fn dilate_clamps_at_border() {
        let mut m = BitMask::new(4, 1);
        m.set(0, 0, true);
        let d = dilate(&m, &StructuringElement::horizontal(2));
        assert_eq!(d, BitMask::from_ascii(&["###."]));
    }

    #[test]
    fn dilate_matches_minkowski_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..60 {
            let m = random_mask(12, 12, rng.random_range(0.02..0.3), &mut rng);
            for shape in [SeShape::HorizontalSegment, SeShape::VerticalSegment, SeShape::Square] {
                let se = StructuringElement::new(shape, rng.random_range(1..4)).unwrap();
                assert_eq!(dilate(&m, &se), brute_dilate(&m, &se));
            }
        }
    }

    #[test]
    fn zero_level_rejected() {
        assert!(StructuringElement::new(SeShape::Square, 0).is_err());
    }

    #[test]
    fn labels_empty() {
        assert_eq!(label_components(&BitMask::new(4, 4), Connectivity::Eight).count(), 0);
    }

    #[test]
    fn diagonal_pixels_depend_on_connectivity() {
        let m = BitMask::from_ascii(&["#.", ".#"]);
        assert_eq!(label_components(&m, Connectivity::Eight).count(), 1);
        assert_eq!(label_components(&m, Connectivity::Four).count(), 2);
    }

    #[test]
    fn labels_follow_first_encounter_order() {
        let m = BitMask::from_ascii(&["..#.#", "#....", "#...#"]);
        let lm = label_components(&m, Connectivity::Eight);
        assert_eq!(lm.count(), 4);
        assert_eq!(lm.label(2, 0), 1);
        assert_eq!(lm.label(4, 0), 2);
        assert_eq!(lm.label(0, 1), 3);
        assert_eq!(lm.label(4, 2), 4);
        assert_eq!(lm.bbox(3), Some(Rect::new(0, 1, 1, 2)));
        assert_eq!(lm.size(3), Some(2));
    }

    #[test]
    fn u_shape_merges_late() {
        // two arms meet only at the bottom row
        let m = BitMask::from_ascii(&["#...#", "#...#", "#####"]);
        let lm = label_components(&m, Connectivity::Four);
        assert_eq!(lm.count(), 1);
        assert_eq!(lm.label(4, 0), 1);
    }

    #[test]
    fn ultimate_dilate_single_component_untouched() {
        let m = BitMask::from_ascii(&[".##.", ".##."]);
        let (out, iters) = ultimate_dilate(&m, &StructuringElement::horizontal(1), 5).unwrap();
        assert_eq!(out, m);
        assert_eq!(iters, 0);
    }

    #[test]
    fn ultimate_dilate_joins_bars() {
        let m = BitMask::from_ascii(&["#..#....#", "#..#....#"]);
        let (out, iters) = ultimate_dilate(&m, &StructuringElement::horizontal(1), 10).unwrap();
        assert_eq!(count_components(&out), 1);
        assert_eq!(iters, 2);
    }

    #[test]
    fn ultimate_dilate_budget_exhausted() {
        // bars merge on the first pass, the wide gap survives the second
        let m = BitMask::from_ascii(&["#.#.#.......#"]);
        let err = ultimate_dilate(&m, &StructuringElement::horizontal(1), 2).unwrap_err();
        assert!(matches!(err, Error::DidNotConverge { iterations: 2, components: 2 }));
    }

    #[test]
    fn ultimate_dilate_stalls_early() {
        // a vertical gap never closes under horizontal dilation
        let m = BitMask::from_ascii(&["#....", ".....", "#...."]);
        let (out, iters) = ultimate_dilate(&m, &StructuringElement::horizontal(1), 5).unwrap();
        assert_eq!(iters, 0);
        assert_eq!(out, m);
    }

    proptest::proptest! {
        #[test]
        fn prop_dilation_is_extensive_and_monotone(seed in 0u64..10_000, level in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_mask(10, 9, 0.15, &mut rng);
            let extra = random_mask(10, 9, 0.1, &mut rng);
            let b = BitMask::from_fn(10, 9, |x, y| a.get(x, y) || extra.get(x, y));
            for se in [StructuringElement::horizontal(level), StructuringElement::vertical(level), StructuringElement::square(level)] {
                let da = dilate(&a, &se);
                proptest::prop_assert!(a.is_subset_of(&da));
                proptest::prop_assert!(da.is_subset_of(&dilate(&b, &se)));
            }
        }

        #[test]
        fn prop_collinear_segments_compose(seed in 0u64..10_000, la in 1usize..4, lb in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_mask(14, 8, 0.1, &mut rng);
            let h = dilate(&dilate(&m, &StructuringElement::horizontal(la)), &StructuringElement::horizontal(lb));
            proptest::prop_assert_eq!(h, dilate(&m, &StructuringElement::horizontal(la + lb)));
            let v = dilate(&dilate(&m, &StructuringElement::vertical(la)), &StructuringElement::vertical(lb));
            proptest::prop_assert_eq!(v, dilate(&m, &StructuringElement::vertical(la + lb)));
        }

        #[test]
        fn prop_component_sizes_sum_to_ink(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_mask(15, 11, 0.35, &mut rng);
            let lm = label_components(&m, Connectivity::Eight);
            proptest::prop_assert_eq!(lm.sizes().iter().sum::<usize>(), m.count());
            proptest::prop_assert_eq!(&lm, &label_components(&m, Connectivity::Eight));
        }

        #[test]
        fn prop_ultimate_dilation_count_non_increasing(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_mask(16, 6, 0.08, &mut rng);
            let se = StructuringElement::horizontal(1);
            let mut prev = count_components(&m);
            let mut cur = m.clone();
            for _ in 0..6 {
                cur = dilate(&cur, &se);
                let c = count_components(&cur);
                proptest::prop_assert!(c <= prev);
                prev = c;
            }
        }
    }
}
