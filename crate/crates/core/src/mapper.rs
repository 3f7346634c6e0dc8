//! Height-grid fusion of press point clouds and the evaluation metrics:
//! cross-entropy of the presence map, mean squared error of the
//! reconstructed topography, and uncertainty statistics.

use crate::domain::{GroundTruth, Grid2, Point2, Workspace};
use crate::gp::ProbabilityField;
use crate::tactile::PointCloud;
use crate::{Error, Result};

/// Reconstructed topography on the evaluation raster. Cells keep the largest
/// height seen so far; `observed` marks every cell a footprint has covered,
/// deformed or not.
#[derive(Debug, Clone)]
pub struct HeightGrid {
    pub cells: Grid2<f64>,
    pub observed: Grid2<bool>,
}

impl HeightGrid {
    pub fn new(workspace: &Workspace, pitch_mm: f64) -> Self {
        Self {
            cells: Grid2::filled(workspace, pitch_mm, 0.0),
            observed: Grid2::filled(workspace, pitch_mm, false),
        }
    }

    /// Max-fuse one press into the grid. Every cell whose center lies under
    /// the press footprint is marked observed even at zero deformation.
    pub fn fuse(&mut self, cloud: &PointCloud) {
        for p in &cloud.points {
            if let Some((ix, iy)) = self.cells.cell_of(Point2::new(p[0], p[1])) {
                if p[2] > *self.cells.get(ix, iy) {
                    self.cells.set(ix, iy, p[2]);
                }
                self.observed.set(ix, iy, true);
            }
        }
        let half = cloud.footprint_mm / 2.0;
        let pitch = self.cells.pitch_mm();
        let lo_ix = ((cloud.center.x - half) / pitch - 0.5).ceil().max(0.0) as usize;
        let lo_iy = ((cloud.center.y - half) / pitch - 0.5).ceil().max(0.0) as usize;
        for iy in lo_iy..self.cells.ny() {
            if (iy as f64 + 0.5) * pitch > cloud.center.y + half {
                break;
            }
            for ix in lo_ix..self.cells.nx() {
                if (ix as f64 + 0.5) * pitch > cloud.center.x + half {
                    break;
                }
                self.observed.set(ix, iy, true);
            }
        }
    }
}

/// Metrics snapshot taken after one press.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub samples_after_prior: usize,
    pub ce_loss: f64,
    pub mse_loss: f64,
    pub max_sigma2: f64,
    pub mean_sigma2: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bp = s - a;
    let ap = s - bp;
    (s, (a - ap) + (b - bp))
}

/// Mean of a stream with an error-free running sum and a corrected final
/// division, so constant streams average to exactly their value regardless
/// of length.
fn compensated_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut n = 0u64;
    for v in values {
        let (s, e) = two_sum(sum, v);
        sum = s;
        comp += e;
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    let n_f = n as f64;
    let q = sum / n_f;
    let prod = q * n_f;
    let prod_err = q.mul_add(n_f, -prod);
    let residual = ((sum - prod) - prod_err) + comp;
    q + residual / n_f
}

const PROB_CLAMP: f64 = 1e-12;

/// Cross-entropy of the presence map against the occupancy raster, with the
/// probabilities clamped away from 0 and 1.
pub fn cross_entropy(field: &ProbabilityField, truth: &GroundTruth) -> Result<f64> {
    if !field.prob.same_dims(&truth.occupancy) {
        return Err(Error::RasterMismatch(
            field.prob.nx(),
            field.prob.ny(),
            truth.occupancy.nx(),
            truth.occupancy.ny(),
        ));
    }
    let terms = field
        .prob
        .values()
        .iter()
        .zip(truth.occupancy.values().iter())
        .map(|(&p, &occupied)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if occupied {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        });
    Ok(compensated_mean(terms))
}

/// Mean squared error between the reconstructed and true height rasters.
pub fn mse(grid: &HeightGrid, truth: &GroundTruth) -> Result<f64> {
    if !grid.cells.same_dims(&truth.height) {
        return Err(Error::RasterMismatch(
            grid.cells.nx(),
            grid.cells.ny(),
            truth.height.nx(),
            truth.height.ny(),
        ));
    }
    let terms = grid
        .cells
        .values()
        .iter()
        .zip(truth.height.values().iter())
        .map(|(&z_rec, &z)| (z - z_rec) * (z - z_rec));
    Ok(compensated_mean(terms))
}

/// Maximum and mean of the predictive-variance raster.
pub fn uncertainty_stats(field: &ProbabilityField) -> (f64, f64) {
    let max = field
        .variance
        .values()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let mean = compensated_mean(field.variance.values().iter().cloned());
    (max, mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ground_truth, BeadLayout, Label, TrainingSet};
    use crate::gp::{fit_laplace, probability_field, KernelParams};
    use crate::sensor::{press, SensorConfig};
    use crate::tactile::{threshold, to_point_cloud, ProcConfig};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_workspace() -> Workspace {
        Workspace {
            width_mm: 40.0,
            height_mm: 30.0,
        }
    }

    fn uniform_field(ws: &Workspace, pitch: f64, p: f64, var: f64) -> ProbabilityField {
        ProbabilityField {
            prob: Grid2::filled(ws, pitch, p),
            variance: Grid2::filled(ws, pitch, var),
        }
    }

    #[test]
    fn fuse_is_idempotent() {
        let ws = small_workspace();
        let mut grid = HeightGrid::new(&ws, 0.5);
        let cloud = PointCloud {
            points: vec![[10.0, 10.0, 2.0], [12.0, 9.5, 1.7]],
            center: Point2::new(11.0, 10.0),
            footprint_mm: 8.0,
        };
        grid.fuse(&cloud);
        let once = grid.clone();
        grid.fuse(&cloud);
        assert_eq!(once.cells, grid.cells);
        assert_eq!(once.observed, grid.observed);
    }

    #[test]
    fn empty_cloud_still_marks_footprint_observed() {
        let ws = small_workspace();
        let mut grid = HeightGrid::new(&ws, 0.5);
        let cloud = PointCloud {
            points: vec![],
            center: Point2::new(20.0, 15.0),
            footprint_mm: 10.0,
        };
        grid.fuse(&cloud);
        let (ix, iy) = grid.observed.cell_of(Point2::new(20.0, 15.0)).unwrap();
        assert!(*grid.observed.get(ix, iy));
        // Footprint corner cells observed, cells outside untouched.
        let (cx, cy) = grid.observed.cell_of(Point2::new(15.3, 10.3)).unwrap();
        assert!(*grid.observed.get(cx, cy));
        let (ox, oy) = grid.observed.cell_of(Point2::new(5.0, 5.0)).unwrap();
        assert!(!*grid.observed.get(ox, oy));
        assert!(grid.cells.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn overlapping_presses_keep_larger_height() {
        let ws = Workspace::default();
        let sensor = SensorConfig {
            noise_sigma_mm: 0.0,
            ..SensorConfig::default()
        };
        let proc = ProcConfig::default();
        let bead = Point2::new(150.0, 45.0);
        let layout = BeadLayout {
            bead_centers: vec![bead],
            ..BeadLayout::empty()
        };
        // One press centered on the bead, one offset: the offset press sees
        // the same bead at the same world heights, so max-fusion of both
        // equals the cellwise max of individual fusions.
        let a = to_point_cloud(&threshold(
            &press(&layout, &ws, &sensor, bead).unwrap(),
            &proc,
        ));
        let b = to_point_cloud(&threshold(
            &press(&layout, &ws, &sensor, Point2::new(152.0, 46.0)).unwrap(),
            &proc,
        ));
        let mut fused_both = HeightGrid::new(&ws, 0.5);
        fused_both.fuse(&a);
        fused_both.fuse(&b);
        let mut only_a = HeightGrid::new(&ws, 0.5);
        only_a.fuse(&a);
        let mut only_b = HeightGrid::new(&ws, 0.5);
        only_b.fuse(&b);
        for i in 0..fused_both.cells.len() {
            let expect = only_a.cells.values()[i].max(only_b.cells.values()[i]);
            assert_eq!(fused_both.cells.values()[i], expect);
        }
    }

    #[test]
    fn uniform_ignorance_costs_ln_two_exactly() {
        let ws = Workspace::default();
        let layout = crate::domain::generate_layout(1, 2, 20, &ws).unwrap();
        let truth = ground_truth(&layout, &ws, 0.5);
        let field = uniform_field(&ws, 0.5, 0.5, 1.0);
        let ce = cross_entropy(&field, &truth).unwrap();
        assert_eq!(ce, std::f64::consts::LN_2);
    }

    #[test]
    fn perfect_prediction_costs_nothing() {
        let ws = small_workspace();
        let layout = BeadLayout {
            bead_centers: vec![Point2::new(20.0, 15.0)],
            ..BeadLayout::empty()
        };
        let truth = ground_truth(&layout, &ws, 0.5);
        let mut field = uniform_field(&ws, 0.5, 0.0, 1.0);
        for (p, &occ) in field
            .prob
            .values_mut()
            .iter_mut()
            .zip(truth.occupancy.values().iter())
        {
            *p = if occ { 1.0 } else { 0.0 };
        }
        let ce = cross_entropy(&field, &truth).unwrap();
        assert!(ce.abs() < 1e-9, "ce = {ce}");
    }

    #[test]
    fn raster_mismatch_is_an_error() {
        let ws = small_workspace();
        let truth = ground_truth(&BeadLayout::empty(), &ws, 0.5);
        let field = uniform_field(&ws, 1.0, 0.5, 1.0);
        assert!(matches!(
            cross_entropy(&field, &truth),
            Err(Error::RasterMismatch(..))
        ));
    }

    #[test]
    fn mse_examples() {
        let ws = small_workspace();
        // z_rec == z -> 0.
        let layout = BeadLayout {
            bead_centers: vec![Point2::new(20.0, 15.0)],
            ..BeadLayout::empty()
        };
        let truth = ground_truth(&layout, &ws, 0.5);
        let mut grid = HeightGrid::new(&ws, 0.5);
        grid.cells
            .values_mut()
            .copy_from_slice(truth.height.values());
        assert_eq!(mse(&grid, &truth).unwrap(), 0.0);

        // Hand arithmetic: truth [1, 2] vs reconstruction [0, 0].
        let tiny = Workspace {
            width_mm: 2.0,
            height_mm: 1.0,
        };
        let mut t = ground_truth(&BeadLayout::empty(), &tiny, 1.0);
        t.height.set(0, 0, 1.0);
        t.height.set(1, 0, 2.0);
        let empty = HeightGrid::new(&tiny, 1.0);
        assert_eq!(mse(&empty, &t).unwrap(), 2.5);

        // Empty vs empty -> 0.
        let t0 = ground_truth(&BeadLayout::empty(), &tiny, 1.0);
        assert_eq!(mse(&HeightGrid::new(&tiny, 1.0), &t0).unwrap(), 0.0);
    }

    #[test]
    fn uncertainty_stats_examples() {
        let ws = small_workspace();
        let field = uniform_field(&ws, 0.5, 0.5, 3.25);
        let (max, mean) = uncertainty_stats(&field);
        assert_eq!(max, 3.25);
        assert_eq!(mean, 3.25);

        // Untrained prior far from data reverts to the prior variance.
        let mut train = TrainingSet::new();
        train.push(Point2::new(0.25, 0.25), Label::Absent);
        let params = KernelParams::default();
        let state = fit_laplace(&train, &params).unwrap();
        let field = probability_field(&state, &train, &params, &Workspace::default(), 2.5).unwrap();
        let (max, mean) = uncertainty_stats(&field);
        assert!((max - 225.0).abs() < 1.0);
        assert!((mean - 225.0).abs() < 5.0);
        assert!(max >= mean);
    }

    #[test]
    fn compensated_mean_handles_constant_streams() {
        for n in [1usize, 3, 7, 108_600, 217_201] {
            let m = compensated_mean(std::iter::repeat_n(std::f64::consts::LN_2, n));
            assert_eq!(m, std::f64::consts::LN_2, "n = {n}");
        }
        assert_eq!(compensated_mean(std::iter::empty()), 0.0);
    }

    proptest! {
        #[test]
        fn fuse_never_decreases_cells(seed in 0u64..200) {
            let ws = small_workspace();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut grid = HeightGrid::new(&ws, 0.5);
            let mut previous = grid.cells.clone();
            for _ in 0..5 {
                let n = rng.gen_range(0..30);
                let cloud = PointCloud {
                    points: (0..n)
                        .map(|_| [
                            rng.gen_range(0.0..40.0),
                            rng.gen_range(0.0..30.0),
                            rng.gen_range(0.0..5.0),
                        ])
                        .collect(),
                    center: Point2::new(rng.gen_range(0.0..40.0), rng.gen_range(0.0..30.0)),
                    footprint_mm: 6.0,
                };
                grid.fuse(&cloud);
                for (new, old) in grid.cells.values().iter().zip(previous.values().iter()) {
                    prop_assert!(new >= old);
                }
                previous = grid.cells.clone();
            }
        }

        #[test]
        fn max_uncertainty_dominates_mean(seed in 0u64..200) {
            let ws = small_workspace();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut field = uniform_field(&ws, 2.5, 0.5, 0.0);
            for v in field.variance.values_mut() {
                *v = rng.gen_range(0.0..225.0);
            }
            let (max, mean) = uncertainty_stats(&field);
            prop_assert!(max >= mean);
        }
    }
}
