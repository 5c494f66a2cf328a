//! Outer-boundary tracing and elliptic Fourier descriptors.
//!
//! A closed contour of K samples is treated as two periodic sequences x(k),
//! y(k). Harmonic n is described by four coefficients: the cosine and sine
//! projections of x (a_n, b_n) and of y (c_n, d_n). Synthesis is
//! `x(k) = A0 + Σ a_n cos(2πnk/K) + b_n sin(2πnk/K)`, and the same for y with
//! C0, c_n, d_n.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::LabelMap;
use crate::raster::BitMask;

/// Harmonic count used by the recognition pipeline.
pub const DEFAULT_HARMONICS: usize = 30;

/// Neighbor offsets in counterclockwise screen order (rows grow downward).
const DIRS: [(i64, i64); 8] = [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)];

fn dir_index(dx: i64, dy: i64) -> usize {
    DIRS.iter().position(|&d| d == (dx, dy)).expect("offset is a unit neighbor step")
}

/// Closed outer boundary, counterclockwise on screen. Consecutive points are
/// 8-adjacent and the last point is 8-adjacent to the first. Pixels on thin
/// parts may appear more than once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContourChain {
    pub points: Vec<(usize, usize)>,
}

impl ContourChain {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_f64(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(|&(x, y)| [x as f64, y as f64]).collect()
    }
}

/// Moore-neighbor trace of one labeled component, starting at its topmost,
/// then leftmost pixel.
pub fn trace_contour(mask: &BitMask, component: u32, labels: &LabelMap) -> Result<ContourChain> {
    let bbox = labels.bbox(component).ok_or(Error::UnknownLabel(component))?;
    if (mask.width(), mask.height()) != (labels.width(), labels.height()) {
        return Err(Error::InvalidInput("mask and label map sizes differ".into()));
    }
    let (w, h) = (labels.width() as i64, labels.height() as i64);
    let inside = |x: i64, y: i64| {
        x >= 0 && y >= 0 && x < w && y < h && labels.label(x as usize, y as usize) == component
    };
    let y0 = bbox.y;
    let x0 = (bbox.x..bbox.right())
        .find(|&x| labels.label(x, y0) == component)
        .expect("bbox top row holds a pixel of the component");
    let start = (x0 as i64, y0 as i64);

    // Everything west of and above the start pixel is outside the component,
    // so the west neighbor is a valid initial backtrack.
    let step = |p: (i64, i64), back: usize| -> Option<((i64, i64), usize)> {
        for i in 0..8 {
            let d = (back + i) % 8;
            let q = (p.0 + DIRS[d].0, p.1 + DIRS[d].1);
            if inside(q.0, q.1) {
                let prev = (back + i + 7) % 8;
                let b = (p.0 + DIRS[prev].0, p.1 + DIRS[prev].1);
                return Some((q, dir_index(b.0 - q.0, b.1 - q.1)));
            }
        }
        None
    };

    let mut points = vec![(start.0 as usize, start.1 as usize)];
    let Some(first) = step(start, 4) else {
        return Ok(ContourChain { points });
    };
    let (mut cur, mut back) = first;
    // Upper bound on the walk length: each pixel can be entered from at most
    // 8 directions.
    let limit = 8 * labels.size(component).unwrap_or(1) + 8;
    loop {
        if cur == start {
            let (next, _) = step(cur, back).expect("start has an inside neighbor");
            if next == first.0 {
                break;
            }
        }
        points.push((cur.0 as usize, cur.1 as usize));
        if points.len() > limit {
            break;
        }
        let (next, nb) = step(cur, back).expect("boundary pixel has an inside neighbor");
        cur = next;
        back = nb;
    }
    Ok(ContourChain { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfdSet {
    pub a0: f64,
    pub c0: f64,
    /// `[a_n, b_n, c_n, d_n]` for n = 1..=N.
    pub harmonics: Vec<[f64; 4]>,
    pub normalized: bool,
}

impl EfdSet {
    pub fn order(&self) -> usize {
        self.harmonics.len()
    }
}

/// Equal-weight discrete Fourier analysis of a closed contour.
pub fn compute_efd(points: &[[f64; 2]], n: usize) -> Result<EfdSet> {
    let k = points.len();
    if n == 0 {
        return Err(Error::InvalidInput("harmonic count must be at least 1".into()));
    }
    if k < 2 * n + 1 {
        return Err(Error::TooFewPoints { points: k, needed: 2 * n + 1 });
    }
    let kf = k as f64;
    let a0 = points.iter().map(|p| p[0]).sum::<f64>() / kf;
    let c0 = points.iter().map(|p| p[1]).sum::<f64>() / kf;
    // cos/sin tables for the base frequency; harmonic n uses index (n*i) mod K.
    let table: Vec<(f64, f64)> = (0..k).map(|i| (2.0 * PI * i as f64 / kf).sin_cos()).collect();
    let harmonics = (1..=n)
        .map(|h| {
            let mut acc = [0.0; 4];
            for (i, p) in points.iter().enumerate() {
                let (s, c) = table[(h * i) % k];
                acc[0] += p[0] * c;
                acc[1] += p[0] * s;
                acc[2] += p[1] * c;
                acc[3] += p[1] * s;
            }
            acc.map(|v| 2.0 * v / kf)
        })
        .collect();
    Ok(EfdSet { a0, c0, harmonics, normalized: false })
}

pub fn compute_chain_efd(chain: &ContourChain, n: usize) -> Result<EfdSet> {
    compute_efd(&chain.to_f64(), n)
}

/// Remove position, start point, orientation and size.
///
/// The start point moves to the end of the first-harmonic semi-major axis,
/// which is then rotated onto +x and scaled to length 1. That leaves a_1 = 1,
/// b_1 = c_1 = 0. Two start points satisfy this (half a period apart); they
/// differ only by the sign of every even harmonic, so the branch is fixed by
/// making the largest-magnitude even-harmonic coefficient positive.
pub fn normalize_efd(efd: &EfdSet) -> Result<EfdSet> {
    let [a1, b1, c1, d1] = *efd.harmonics.first().ok_or(Error::DegenerateShape)?;
    let mag = (a1 * a1 + b1 * b1 + c1 * c1 + d1 * d1).sqrt();
    if !(mag > 1e-12) {
        return Err(Error::DegenerateShape);
    }
    let theta = 0.5 * (2.0 * (a1 * b1 + c1 * d1)).atan2(a1 * a1 + c1 * c1 - b1 * b1 - d1 * d1);
    let shifted: Vec<[f64; 4]> = efd
        .harmonics
        .iter()
        .enumerate()
        .map(|(i, &[a, b, c, d])| {
            let (s, co) = ((i + 1) as f64 * theta).sin_cos();
            [a * co + b * s, -a * s + b * co, c * co + d * s, -c * s + d * co]
        })
        .collect();
    let [a1s, _, c1s, _] = shifted[0];
    let semi_major = (a1s * a1s + c1s * c1s).sqrt();
    if !(semi_major > 1e-12) {
        return Err(Error::DegenerateShape);
    }
    let psi = c1s.atan2(a1s);
    let (s, co) = psi.sin_cos();
    let mut harmonics: Vec<[f64; 4]> = shifted
        .iter()
        .map(|&[a, b, c, d]| {
            [
                (co * a + s * c) / semi_major,
                (co * b + s * d) / semi_major,
                (-s * a + co * c) / semi_major,
                (-s * b + co * d) / semi_major,
            ]
        })
        .collect();

    let mut pivot = 0.0f64;
    for h in harmonics.iter().skip(1).step_by(2) {
        for &v in h {
            if v.abs() > pivot.abs() {
                pivot = v;
            }
        }
    }
    if pivot < 0.0 {
        for h in harmonics.iter_mut().skip(1).step_by(2) {
            *h = h.map(|v| -v);
        }
    }
    Ok(EfdSet { a0: 0.0, c0: 0.0, harmonics, normalized: true })
}

/// Evaluate the synthesis formula truncated to `n_harmonics` at `samples`
/// equally spaced positions.
pub fn reconstruct(efd: &EfdSet, n_harmonics: usize, samples: usize) -> Result<Vec<[f64; 2]>> {
    if n_harmonics == 0 || n_harmonics > efd.order() {
        return Err(Error::InvalidInput(format!(
            "harmonic count {n_harmonics} outside 1..={}",
            efd.order()
        )));
    }
    if samples < 3 {
        return Err(Error::InvalidInput("need at least 3 samples".into()));
    }
    let sf = samples as f64;
    Ok((0..samples)
        .map(|k| {
            let mut p = [efd.a0, efd.c0];
            for (i, &[a, b, c, d]) in efd.harmonics.iter().take(n_harmonics).enumerate() {
                let (s, co) = (2.0 * PI * (i + 1) as f64 * k as f64 / sf).sin_cos();
                p[0] += a * co + b * s;
                p[1] += c * co + d * s;
            }
            p
        })
        .collect())
}

/// Normalized squared-difference dissimilarity between two descriptor sets.
///
/// `Σ (a_cd−a_rf)² + … ÷ Σ (a_cd² + a_rf² + …)` over all harmonics; 0 for
/// identical sets, symmetric, and at most 2.
pub fn efd_distance(cd: &EfdSet, rf: &EfdSet) -> Result<f64> {
    if !cd.normalized || !rf.normalized {
        return Err(Error::NotNormalized);
    }
    if cd.order() != rf.order() {
        return Err(Error::MismatchedOrder(cd.order(), rf.order()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, q) in cd.harmonics.iter().zip(&rf.harmonics) {
        for i in 0..4 {
            num += (p[i] - q[i]).powi(2);
            den += p[i] * p[i] + q[i] * q[i];
        }
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

/// Largest distance from a point of either set to the nearest point of the other.
pub fn hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    fn directed(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
        a.iter()
            .map(|p| {
                b.iter()
                    .map(|q| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
            .sqrt()
    }
    directed(a, b).max(directed(b, a))
}

/// Mean squared point-to-point deviation between two equally long sequences.
pub fn mean_squared_deviation(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sum::<f64>()
        / a.len() as f64
}

/// Full descriptor of the normalized outer contour of `label`.
pub fn describe_component(mask: &BitMask, label: u32, labels: &LabelMap, n: usize) -> Result<EfdSet> {
    let chain = trace_contour(mask, label, labels)?;
    normalize_efd(&compute_chain_efd(&chain, n)?)
}
