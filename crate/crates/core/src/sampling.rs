//! Space-filling machinery: the 2-D Sobol sequence used to seed the prior and
//! the centered-discrepancy measure used to penalize sample clumping.

use crate::domain::{Point2, Workspace};
use crate::{Error, Result};

/// Points in the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSampleSet {
    points: Vec<[f64; 2]>,
}

impl UnitSampleSet {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        for p in &points {
            if !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1]) {
                return Err(Error::Numerical(format!(
                    "unit sample ({}, {}) outside [0,1]^2",
                    p[0], p[1]
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

const SOBOL_BITS: u32 = 32;

/// Direction vectors (32-bit fixed point) for the first two Sobol dimensions:
/// the van der Corput radical inverse and the dimension generated by the
/// primitive polynomial x + 1 with initial direction number m1 = 1.
fn direction_vectors() -> [[u32; SOBOL_BITS as usize]; 2] {
    let mut radical = [0u32; SOBOL_BITS as usize];
    let mut poly = [0u32; SOBOL_BITS as usize];
    let mut m: u32 = 1;
    for (j, (r, p)) in radical.iter_mut().zip(poly.iter_mut()).enumerate() {
        *r = 1u32 << (31 - j);
        *p = m << (31 - j);
        m = (m << 1) ^ m;
    }
    [radical, poly]
}

/// First `n` points of the 2-D Sobol sequence in Gray-code order.
///
/// Index 0 of the raw sequence is the origin; it is skipped by default so the
/// prior never presses the workspace corner.
pub fn sobol_2d(n: usize, skip_origin: bool) -> UnitSampleSet {
    let v = direction_vectors();
    let mut state = [0u32; 2];
    let mut points = Vec::with_capacity(n);
    if !skip_origin {
        points.push([0.0, 0.0]);
    }
    let scale = 1.0 / (1u64 << SOBOL_BITS) as f64;
    let mut index: u64 = 0;
    while points.len() < n {
        index += 1;
        let bit = index.trailing_zeros() as usize;
        state[0] ^= v[0][bit];
        state[1] ^= v[1][bit];
        points.push([state[0] as f64 * scale, state[1] as f64 * scale]);
    }
    UnitSampleSet { points }
}

fn cd_one_point_term(p: &[f64; 2]) -> f64 {
    let mut prod = 1.0;
    for &x in p {
        let a = (x - 0.5).abs();
        prod *= 1.0 + 0.5 * a - 0.5 * a * a;
    }
    prod
}

fn cd_pair_term(p: &[f64; 2], q: &[f64; 2]) -> f64 {
    let mut prod = 1.0;
    for k in 0..2 {
        let a = (p[k] - 0.5).abs();
        let b = (q[k] - 0.5).abs();
        prod *= 1.0 + 0.5 * a + 0.5 * b - 0.5 * (p[k] - q[k]).abs();
    }
    prod
}

/// Centered L2 discrepancy of a point set over the unit square, by the
/// closed form. Lower is more uniform.
pub fn centered_discrepancy(points: &UnitSampleSet) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let n = points.len() as f64;
    let mut single = 0.0;
    let mut pair = 0.0;
    for p in points.points() {
        single += cd_one_point_term(p);
        for q in points.points() {
            pair += cd_pair_term(p, q);
        }
    }
    let cd2 = (13.0 / 12.0f64).powi(2) - 2.0 / n * single + pair / (n * n);
    Ok(cd2.max(0.0).sqrt())
}

/// Running sums that let the discrepancy of `X U {candidate}` be evaluated in
/// O(|X|) per candidate.
#[derive(Debug, Clone)]
pub struct CdAccumulator {
    points: Vec<[f64; 2]>,
    single_sum: f64,
    pair_sum: f64,
}

impl CdAccumulator {
    pub fn new(points: &[[f64; 2]]) -> Self {
        let mut single_sum = 0.0;
        let mut pair_sum = 0.0;
        for p in points {
            single_sum += cd_one_point_term(p);
            for q in points {
                pair_sum += cd_pair_term(p, q);
            }
        }
        Self {
            points: points.to_vec(),
            single_sum,
            pair_sum,
        }
    }

    /// Discrepancy of the accumulated set plus one extra point.
    pub fn discrepancy_with(&self, extra: [f64; 2]) -> f64 {
        let n = (self.points.len() + 1) as f64;
        let single = self.single_sum + cd_one_point_term(&extra);
        let mut cross = 0.0;
        for p in &self.points {
            cross += cd_pair_term(p, &extra);
        }
        let pair = self.pair_sum + 2.0 * cross + cd_pair_term(&extra, &extra);
        let cd2 = (13.0 / 12.0f64).powi(2) - 2.0 / n * single + pair / (n * n);
        cd2.max(0.0).sqrt()
    }
}

/// Scale unit-square samples onto the workspace.
pub fn to_workspace(points: &UnitSampleSet, workspace: &Workspace) -> Vec<Point2> {
    points
        .points()
        .iter()
        .map(|p| Point2::new(p[0] * workspace.width_mm, p[1] * workspace.height_mm))
        .collect()
}

/// Normalize workspace points back onto the unit square.
pub fn normalize(points: &[Point2], workspace: &Workspace) -> Vec<[f64; 2]> {
    points
        .iter()
        .map(|p| {
            [
                (p.x / workspace.width_mm).clamp(0.0, 1.0),
                (p.y / workspace.height_mm).clamp(0.0, 1.0),
            ]
        })
        .collect()
}
