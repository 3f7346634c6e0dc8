//! Next-press selection: the exploration policy trades predictive
//! uncertainty against the centered discrepancy of the sample set, the
//! mapping policy trades presence probability against the same discrepancy,
//! and a seeded random policy provides the benchmark baseline.
//!
//! Both objectives are scalarized as a normalized weighted sum and minimized
//! over a fixed candidate lattice; ties break lexicographically by (y, x) so
//! every policy is a pure function of its inputs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

use crate::domain::{Point2, Workspace};
use crate::sampling::{normalize, CdAccumulator};
use crate::{Error, Result};

pub const DEFAULT_CANDIDATE_PITCH_MM: f64 = 2.5;

/// Which objective drives the next sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Exploration,
    Mapping,
    Random,
}

#[derive(Debug, Clone)]
pub struct AcquisitionConfig {
    /// Weight of the model term against the discrepancy term, in [0, 1].
    pub lambda_weight: f64,
    pub phase: Phase,
    pub rng_seed: u64,
    /// Candidates closer than this to a previous press are skipped by the
    /// scored policies; a press this close to an old one re-reads mostly
    /// already-covered area. Zero keeps only the exact-repeat exclusion.
    pub min_press_spacing_mm: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            lambda_weight: 0.5,
            phase: Phase::Exploration,
            rng_seed: 0,
            min_press_spacing_mm: 0.0,
        }
    }
}

/// Fixed lattice of candidate press locations covering the workspace.
#[derive(Debug, Clone)]
pub struct CandidateGrid {
    points: Vec<Point2>,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl CandidateGrid {
    pub fn new(workspace: &Workspace, pitch_mm: f64) -> Self {
        let count_along = |extent: f64| ((extent / pitch_mm) + 1e-9).floor() as usize + 1;
        let xs: Vec<f64> = (0..count_along(workspace.width_mm))
            .map(|i| i as f64 * pitch_mm)
            .collect();
        let ys: Vec<f64> = (0..count_along(workspace.height_mm))
            .map(|i| i as f64 * pitch_mm)
            .collect();
        let mut points = Vec::with_capacity(xs.len() * ys.len());
        for &y in &ys {
            for &x in &xs {
                points.push(Point2::new(x, y));
            }
        }
        Self { points, xs, ys }
    }

    /// Candidates in scan order: y outer, x inner, both ascending.
    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn history_set(history: &[Point2]) -> HashSet<(u64, u64)> {
    history
        .iter()
        .map(|p| (p.x.to_bits(), p.y.to_bits()))
        .collect()
}

/// Minimize `lambda * model_term + (1 - lambda) * cd_norm` over the
/// candidates that have not been pressed yet, scanning in (y, x) order so
/// ties break deterministically.
///
/// Both objective terms are normalized to [0, 1] per selection step: the
/// model term by its caller, the discrepancy term min-max over the
/// candidates here. Without this the discrepancy differences (a few 1e-2)
/// cannot counter a probability plateau and the mapping phase crawls around
/// a single cluster one grid cell at a time. Normalization is monotone, so
/// the pure limits at lambda 0 and 1 are unchanged.
///
/// Exact repeats are excluded outright rather than discrepancy-penalized:
/// re-pressing a location is information-free here (the noise stream is
/// keyed by location and fusion is idempotent).
fn argmin_scalarized(
    grid: &CandidateGrid,
    history: &[Point2],
    workspace: &Workspace,
    lambda: f64,
    spacing_mm: f64,
    model_term: impl Fn(usize) -> f64,
) -> Result<Point2> {
    let pressed = history_set(history);
    let spacing2 = spacing_mm * spacing_mm;
    let cd = CdAccumulator::new(&normalize(history, workspace));
    let mut entries: Vec<(Point2, f64, f64)> = Vec::with_capacity(grid.len());
    let mut cd_min = f64::INFINITY;
    let mut cd_max = f64::NEG_INFINITY;
    for (i, &p) in grid.points().iter().enumerate() {
        if pressed.contains(&(p.x.to_bits(), p.y.to_bits())) {
            continue;
        }
        if spacing_mm > 0.0 && history.iter().any(|h| h.dist2(&p) < spacing2) {
            continue;
        }
        let unit = [
            (p.x / workspace.width_mm).clamp(0.0, 1.0),
            (p.y / workspace.height_mm).clamp(0.0, 1.0),
        ];
        let d = cd.discrepancy_with(unit);
        cd_min = cd_min.min(d);
        cd_max = cd_max.max(d);
        entries.push((p, model_term(i), d));
    }
    let cd_span = cd_max - cd_min;
    let mut best: Option<(f64, Point2)> = None;
    for &(p, model, d) in &entries {
        let cd_norm = if cd_span > 0.0 { (d - cd_min) / cd_span } else { 0.0 };
        let s = lambda * model + (1.0 - lambda) * cd_norm;
        if best.map(|(b, _)| s < b).unwrap_or(true) {
            best = Some((s, p));
        }
    }
    best.map(|(_, p)| p).ok_or(Error::GridExhausted)
}

/// Exploration objective: minimize
/// `lambda (1 - var/var_max) + (1 - lambda) CD(X U {x})`,
/// i.e. prefer high predictive variance while keeping the sample set
/// space-filling. `sigma2` holds the predictive variance per candidate.
pub fn next_sample_exploration(
    sigma2: &[f64],
    history: &[Point2],
    grid: &CandidateGrid,
    workspace: &Workspace,
    config: &AcquisitionConfig,
) -> Result<Point2> {
    assert_eq!(sigma2.len(), grid.len(), "one variance per candidate");
    let var_max = sigma2.iter().cloned().fold(0.0f64, f64::max);
    argmin_scalarized(
        grid,
        history,
        workspace,
        config.lambda_weight,
        config.min_press_spacing_mm,
        |i| {
            if var_max > 0.0 {
                1.0 - sigma2[i] / var_max
            } else {
                0.0
            }
        },
    )
}

/// Mapping objective: minimize
/// `lambda (1 - p) + (1 - lambda) CD(X U {x})`,
/// i.e. prefer high presence probability while avoiding clumped samples.
pub fn next_sample_mapping(
    prob: &[f64],
    history: &[Point2],
    grid: &CandidateGrid,
    workspace: &Workspace,
    config: &AcquisitionConfig,
) -> Result<Point2> {
    assert_eq!(prob.len(), grid.len(), "one probability per candidate");
    argmin_scalarized(
        grid,
        history,
        workspace,
        config.lambda_weight,
        config.min_press_spacing_mm,
        |i| 1.0 - prob[i],
    )
}

/// Uniform draw over the candidate cells that have not been pressed yet.
pub fn next_sample_random(
    grid: &CandidateGrid,
    history: &[Point2],
    rng: &mut ChaCha8Rng,
) -> Result<Point2> {
    let sampled = history_set(history);
    let remaining: Vec<Point2> = grid
        .points()
        .iter()
        .copied()
        .filter(|p| !sampled.contains(&(p.x.to_bits(), p.y.to_bits())))
        .collect();
    if remaining.is_empty() {
        return Err(Error::GridExhausted);
    }
    Ok(remaining[rng.gen_range(0..remaining.len())])
}
