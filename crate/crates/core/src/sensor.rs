//! Virtual optical tactile sensor: renders the deformation depth image a
//! press over the buried beads would produce.
//!
//! The forward model replaces the physical gel and foam with a spherical-cap
//! height field scaled by a plunge ratio and a single attenuation factor,
//! plus seeded Gaussian pixel noise. The method only thresholds and ranks
//! depths, so no mechanics are inverted anywhere downstream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::{BeadLayout, Point2, Workspace};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    /// Side of the square sensing area, mm.
    pub footprint_mm: f64,
    /// Pixels per side; 128 is desk scale, 640 matches the real sensor.
    pub resolution_px: usize,
    /// How far the sensor plunges below the foam surface, mm.
    pub plunge_depth_mm: f64,
    /// Foam sheet thickness, mm (half an inch).
    pub foam_thickness_mm: f64,
    /// Multiplicative softening of the bead profile, in (0, 1].
    pub attenuation: f64,
    /// Std of the per-pixel Gaussian noise, mm.
    pub noise_sigma_mm: f64,
    /// Base seed of the per-press noise stream.
    pub noise_seed: u64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            footprint_mm: 25.6,
            resolution_px: 128,
            plunge_depth_mm: 12.0,
            foam_thickness_mm: 12.7,
            attenuation: 0.8,
            noise_sigma_mm: 0.05,
            noise_seed: 0,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution_px < 2
            || self.footprint_mm <= 0.0
            || self.attenuation <= 0.0
            || self.attenuation > 1.0
            || self.noise_sigma_mm < 0.0
        {
            return Err(Error::Numerical("invalid sensor configuration".into()));
        }
        Ok(())
    }

    pub fn mm_per_px(&self) -> f64 {
        self.footprint_mm / self.resolution_px as f64
    }

    /// Fraction of the bead profile transmitted through the foam.
    pub fn plunge_ratio(&self) -> f64 {
        (self.plunge_depth_mm / self.foam_thickness_mm).min(1.0)
    }
}

/// Per-pixel deformation field (mm, clamped at zero) from one press.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pixels: Vec<f64>,
    resolution_px: usize,
    pub center: Point2,
    pub mm_per_px: f64,
}

impl DepthImage {
    pub fn zeros(resolution_px: usize, center: Point2, mm_per_px: f64) -> Self {
        Self {
            pixels: vec![0.0; resolution_px * resolution_px],
            resolution_px,
            center,
            mm_per_px,
        }
    }

    pub fn resolution_px(&self) -> usize {
        self.resolution_px
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.resolution_px + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.pixels[row * self.resolution_px + col] = v;
    }

    /// World point of a (possibly fractional) pixel coordinate. Pixel
    /// `(row, col)` sits at `center + (col - res/2, row - res/2) * mm_per_px`.
    pub fn world_point(&self, col: f64, row: f64) -> Point2 {
        let half = self.resolution_px as f64 / 2.0;
        Point2::new(
            self.center.x + (col - half) * self.mm_per_px,
            self.center.y + (row - half) * self.mm_per_px,
        )
    }

    pub fn footprint_mm(&self) -> f64 {
        self.resolution_px as f64 * self.mm_per_px
    }

    /// 16-bit PGM at 0.01 mm per count, for debugging.
    pub fn save_pgm<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        crate::pgm::write_pgm16(
            path,
            self.resolution_px,
            self.resolution_px,
            self.pixels.iter().map(|&v| (v / 0.01).round().clamp(0.0, 65535.0) as u16),
            "depth image, 0.01 mm per count",
        )
    }
}

/// All-zero image with the geometry of a real press: what the sensor reports
/// when nothing deforms it.
pub fn undeformed_reference(config: &SensorConfig) -> DepthImage {
    DepthImage::zeros(
        config.resolution_px,
        Point2::new(0.0, 0.0),
        config.mm_per_px(),
    )
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The noise stream is keyed by (seed, press location) so press ordering and
/// concurrency never change a press's pixels.
fn press_noise_key(seed: u64, location: Point2) -> u64 {
    let a = splitmix64(seed ^ location.x.to_bits());
    splitmix64(a ^ location.y.to_bits())
}

/// Noise-free bead deformation at a world point: spherical-cap profile scaled
/// by the plunge ratio, maximum over beads.
fn bead_profile(w: Point2, beads: &[Point2], radius: f64, plunge_ratio: f64) -> f64 {
    let r2 = radius * radius;
    let mut best = 0.0f64;
    for b in beads {
        let d2 = w.dist2(b);
        if d2 < r2 {
            let h = 2.0 * (r2 - d2).sqrt();
            if h > best {
                best = h;
            }
        }
    }
    best * plunge_ratio
}

/// Press the sensor at `location` and render the resulting depth image.
///
/// The footprint may overhang the workspace edge; overhanging pixels simply
/// see no beads. Deterministic in (config, location).
pub fn press(
    layout: &BeadLayout,
    workspace: &Workspace,
    config: &SensorConfig,
    location: Point2,
) -> Result<DepthImage> {
    config.validate()?;
    if !workspace.contains(location) {
        return Err(Error::OutsideWorkspace(location.x, location.y));
    }
    let res = config.resolution_px;
    let mut image = DepthImage::zeros(res, location, config.mm_per_px());
    let plunge_ratio = config.plunge_ratio();

    // Only beads that can reach the footprint matter.
    let reach = config.footprint_mm / 2.0 * std::f64::consts::SQRT_2 + layout.bead_radius_mm;
    let nearby: Vec<Point2> = layout
        .bead_centers
        .iter()
        .copied()
        .filter(|b| b.dist2(&location) <= reach * reach)
        .collect();

    let mut noise = if config.noise_sigma_mm > 0.0 {
        let rng = ChaCha8Rng::seed_from_u64(press_noise_key(config.noise_seed, location));
        let dist = Normal::new(0.0, config.noise_sigma_mm)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        Some((rng, dist))
    } else {
        None
    };

    for row in 0..res {
        for col in 0..res {
            let w = image.world_point(col as f64, row as f64);
            let mut v = config.attenuation
                * bead_profile(w, &nearby, layout.bead_radius_mm, plunge_ratio);
            if let Some((rng, dist)) = noise.as_mut() {
                v += dist.sample(rng);
            }
            image.set(row, col, v.max(0.0));
        }
    }
    Ok(image)
}
