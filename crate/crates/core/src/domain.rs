//! Core geometric and experimental data types shared by every module:
//! the planar workspace, bead layouts on the hole grid, rasters, training
//! data and exact ground truth.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// A point in the workspace frame, millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        self.dist2(other).sqrt()
    }
}

/// Presence class of a training point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Absent,
    Present,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Absent => 0.0,
            Label::Present => 1.0,
        }
    }
}

/// Rectangular planar workspace, origin at one corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workspace {
    pub width_mm: f64,
    pub height_mm: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            width_mm: 300.0,
            height_mm: 90.4,
        }
    }
}

impl Workspace {
    pub fn new(width_mm: f64, height_mm: f64) -> Result<Self> {
        if width_mm <= 0.0 || height_mm <= 0.0 {
            return Err(Error::Layout(format!(
                "workspace extents must be positive, got {width_mm} x {height_mm}"
            )));
        }
        Ok(Self {
            width_mm,
            height_mm,
        })
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.x <= self.width_mm && p.y >= 0.0 && p.y <= self.height_mm
    }

    /// True when `p` stays at least `margin` away from every edge.
    pub fn contains_inset(&self, p: Point2, margin: f64) -> bool {
        p.x >= margin
            && p.x <= self.width_mm - margin
            && p.y >= margin
            && p.y <= self.height_mm - margin
    }
}

/// A scalar (or boolean) raster over the workspace. Cell `(ix, iy)` covers
/// `[ix*pitch, (ix+1)*pitch] x [iy*pitch, (iy+1)*pitch]`; values are sampled
/// at cell centers. Row-major storage, `iy` outer.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2<T> {
    nx: usize,
    ny: usize,
    pitch_mm: f64,
    data: Vec<T>,
}

/// Raster dimensions for a workspace at the given pitch. Rounding keeps every
/// cell center inside the workspace.
pub fn raster_dims(workspace: &Workspace, pitch_mm: f64) -> (usize, usize) {
    let nx = (workspace.width_mm / pitch_mm).round().max(1.0) as usize;
    let ny = (workspace.height_mm / pitch_mm).round().max(1.0) as usize;
    (nx, ny)
}

impl<T: Clone> Grid2<T> {
    pub fn filled(workspace: &Workspace, pitch_mm: f64, value: T) -> Self {
        let (nx, ny) = raster_dims(workspace, pitch_mm);
        Self {
            nx,
            ny,
            pitch_mm,
            data: vec![value; nx * ny],
        }
    }

    pub fn from_dims(nx: usize, ny: usize, pitch_mm: f64, value: T) -> Self {
        Self {
            nx,
            ny,
            pitch_mm,
            data: vec![value; nx * ny],
        }
    }
}

impl<T> Grid2<T> {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn pitch_mm(&self) -> f64 {
        self.pitch_mm
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, ix: usize, iy: usize) -> &T {
        &self.data[iy * self.nx + ix]
    }

    pub fn set(&mut self, ix: usize, iy: usize, value: T) {
        self.data[iy * self.nx + ix] = value;
    }

    /// World coordinates of the center of cell `(ix, iy)`.
    pub fn cell_center(&self, ix: usize, iy: usize) -> Point2 {
        Point2::new(
            (ix as f64 + 0.5) * self.pitch_mm,
            (iy as f64 + 0.5) * self.pitch_mm,
        )
    }

    /// Cell containing the world point, or `None` outside the raster.
    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        if p.x < 0.0 || p.y < 0.0 {
            return None;
        }
        let ix = (p.x / self.pitch_mm).floor() as usize;
        let iy = (p.y / self.pitch_mm).floor() as usize;
        // Points on the far boundary belong to the last cell.
        let ix = ix.min(self.nx.saturating_sub(1));
        let iy = iy.min(self.ny.saturating_sub(1));
        if (p.x / self.pitch_mm) > self.nx as f64 || (p.y / self.pitch_mm) > self.ny as f64 {
            return None;
        }
        Some((ix, iy))
    }

    pub fn same_dims<U>(&self, other: &Grid2<U>) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }
}

impl Grid2<f64> {
    /// Comma-separated raster, one row of cells per line (iy ascending).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for iy in 0..self.ny {
            let row: Vec<String> = (0..self.nx)
                .map(|ix| format!("{}", self.get(ix, iy)))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, pitch_mm: f64) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|tok| tok.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| {
                Error::Parse(format!("csv raster line {}", lineno + 1), e.to_string())
            })?;
            rows.push(row);
        }
        let ny = rows.len();
        if ny == 0 {
            return Err(Error::Parse("csv raster".into(), "no rows".into()));
        }
        let nx = rows[0].len();
        if rows.iter().any(|r| r.len() != nx) {
            return Err(Error::Parse("csv raster".into(), "ragged rows".into()));
        }
        Ok(Self {
            nx,
            ny,
            pitch_mm,
            data: rows.into_iter().flatten().collect(),
        })
    }
}

/// Ground-truth positions of the buried beads.
#[derive(Debug, Clone, PartialEq)]
pub struct BeadLayout {
    pub bead_centers: Vec<Point2>,
    pub bead_radius_mm: f64,
    pub grid_pitch_mm: f64,
}

pub const DEFAULT_BEAD_RADIUS_MM: f64 = 3.0;
pub const DEFAULT_GRID_PITCH_MM: f64 = 8.5;

/// Clearance kept between the hole grid and the workspace edge; two bead
/// radii reproduces the 10 x 34 hole array on the default workspace.
const GRID_EDGE_MARGIN_MM: f64 = 6.0;

impl BeadLayout {
    pub fn empty() -> Self {
        Self {
            bead_centers: Vec::new(),
            bead_radius_mm: DEFAULT_BEAD_RADIUS_MM,
            grid_pitch_mm: DEFAULT_GRID_PITCH_MM,
        }
    }

    /// Line-oriented text: a `radius_mm <v>` header, then one `x_mm y_mm`
    /// pair per line. `#` starts a comment.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "# bead layout, positions in mm")?;
        writeln!(file, "radius_mm {}", self.bead_radius_mm)?;
        for c in &self.bead_centers {
            writeln!(file, "{} {}", c.x, c.y)?;
        }
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let name = path.as_ref().display().to_string();
        let file = std::fs::File::open(&path)?;
        let mut layout = BeadLayout::empty();
        let mut saw_radius = false;
        for line in BufReader::new(file).lines() {
            let line = line?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks[0] == "radius_mm" {
                if toks.len() != 2 {
                    return Err(Error::Parse(name, "malformed radius_mm header".into()));
                }
                layout.bead_radius_mm = toks[1]
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| Error::Parse(name.clone(), e.to_string()))?;
                saw_radius = true;
            } else {
                if toks.len() != 2 {
                    return Err(Error::Parse(name, format!("expected `x y`, got `{line}`")));
                }
                let x: f64 = toks[0]
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| Error::Parse(name.clone(), e.to_string()))?;
                let y: f64 = toks[1]
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| Error::Parse(name.clone(), e.to_string()))?;
                layout.bead_centers.push(Point2::new(x, y));
            }
        }
        if !saw_radius {
            return Err(Error::Parse(name, "missing radius_mm header".into()));
        }
        Ok(layout)
    }
}

/// The hole grid the beads snap to: `cols x rows` positions at `pitch`
/// spacing, centered in the workspace with a fixed edge clearance.
#[derive(Debug, Clone, Copy)]
pub struct HoleGrid {
    pub origin: Point2,
    pub pitch_mm: f64,
    pub cols: usize,
    pub rows: usize,
}

impl HoleGrid {
    pub fn for_workspace(workspace: &Workspace, pitch_mm: f64) -> Result<Self> {
        let usable_w = workspace.width_mm - 2.0 * GRID_EDGE_MARGIN_MM;
        let usable_h = workspace.height_mm - 2.0 * GRID_EDGE_MARGIN_MM;
        if usable_w < 0.0 || usable_h < 0.0 {
            return Err(Error::Layout(
                "workspace too small for the hole grid".into(),
            ));
        }
        let cols = (usable_w / pitch_mm).floor() as usize + 1;
        let rows = (usable_h / pitch_mm).floor() as usize + 1;
        let origin = Point2::new(
            (workspace.width_mm - (cols - 1) as f64 * pitch_mm) / 2.0,
            (workspace.height_mm - (rows - 1) as f64 * pitch_mm) / 2.0,
        );
        Ok(Self {
            origin,
            pitch_mm,
            cols,
            rows,
        })
    }

    pub fn position(&self, col: usize, row: usize) -> Point2 {
        Point2::new(
            self.origin.x + col as f64 * self.pitch_mm,
            self.origin.y + row as f64 * self.pitch_mm,
        )
    }
}

/// Labeled training data for the classifier. Duplicate locations are allowed;
/// the kernel jitter keeps the system solvable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub points: Vec<Point2>,
    pub labels: Vec<Label>,
}

impl TrainingSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, point: Point2, label: Label) {
        self.points.push(point);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.contains(&Label::Present) && self.labels.contains(&Label::Absent)
    }
}

/// One press and what was extracted from it.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub location: Point2,
    pub depth_image: crate::sensor::DepthImage,
    pub extracted_labels: Vec<(Point2, Label)>,
}

/// Exact occupancy and height rasters derived from a layout.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub occupancy: Grid2<bool>,
    pub height: Grid2<f64>,
}

/// Noise-free bead surface height at horizontal distance `d` from a center:
/// the cap profile clipped to the hemisphere apex.
pub fn bead_height(d2: f64, radius: f64) -> f64 {
    let cap = 2.0 * (radius * radius - d2).max(0.0).sqrt();
    cap.min(radius)
}

/// Rasterize occupancy and the bead height field at `pitch_mm` density.
pub fn ground_truth(layout: &BeadLayout, workspace: &Workspace, pitch_mm: f64) -> GroundTruth {
    assert!(pitch_mm > 0.0, "raster pitch must be positive");
    let mut occupancy = Grid2::filled(workspace, pitch_mm, false);
    let mut height = Grid2::filled(workspace, pitch_mm, 0.0f64);
    let r = layout.bead_radius_mm;
    let r2 = r * r;
    for iy in 0..occupancy.ny() {
        for ix in 0..occupancy.nx() {
            let c = occupancy.cell_center(ix, iy);
            let mut best = f64::INFINITY;
            for b in &layout.bead_centers {
                let d2 = c.dist2(b);
                if d2 < best {
                    best = d2;
                }
            }
            if best <= r2 {
                occupancy.set(ix, iy, true);
                height.set(ix, iy, bead_height(best, r));
            }
        }
    }
    GroundTruth { occupancy, height }
}

/// Grow `n_clusters` contiguous blobs of beads on the hole grid.
///
/// Each cluster starts from a random free grid cell and grows 4-connected,
/// one cell at a time, picking uniformly from the current frontier. Cells
/// 8-adjacent to a previous cluster are off limits so the blobs stay
/// visually and topologically distinct. Deterministic for a fixed seed.
pub fn generate_layout(
    seed: u64,
    n_clusters: usize,
    beads_per_cluster: usize,
    workspace: &Workspace,
) -> Result<BeadLayout> {
    if n_clusters == 0 || beads_per_cluster == 0 {
        return Err(Error::Layout(
            "need at least one cluster and one bead per cluster".into(),
        ));
    }
    let grid = HoleGrid::for_workspace(workspace, DEFAULT_GRID_PITCH_MM)?;
    let total = n_clusters * beads_per_cluster;
    if total > grid.cols * grid.rows {
        return Err(Error::Layout(format!(
            "{total} beads do not fit on a {} x {} hole grid",
            grid.cols, grid.rows
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // occupied[cluster cells]; blocked additionally covers the 8-neighborhood
    // of finished clusters.
    let mut occupied = vec![false; grid.cols * grid.rows];
    let mut blocked = vec![false; grid.cols * grid.rows];
    let idx = |c: usize, r: usize| r * grid.cols + c;

    let mut centers: Vec<Point2> = Vec::with_capacity(total);
    for _ in 0..n_clusters {
        let mut placed = false;
        'attempt: for _ in 0..200 {
            let free: Vec<(usize, usize)> = (0..grid.rows)
                .flat_map(|r| (0..grid.cols).map(move |c| (c, r)))
                .filter(|&(c, r)| !blocked[idx(c, r)])
                .collect();
            if free.is_empty() {
                break;
            }
            let start = free[rng.gen_range(0..free.len())];
            let mut blob: Vec<(usize, usize)> = vec![start];
            let mut in_blob = vec![false; grid.cols * grid.rows];
            in_blob[idx(start.0, start.1)] = true;
            let mut frontier: Vec<(usize, usize)> = Vec::new();
            let extend_frontier = |cell: (usize, usize),
                                       frontier: &mut Vec<(usize, usize)>,
                                       in_blob: &[bool]| {
                let (c, r) = cell;
                let mut push = |cc: i64, rr: i64| {
                    if cc >= 0 && rr >= 0 && (cc as usize) < grid.cols && (rr as usize) < grid.rows
                    {
                        let (cc, rr) = (cc as usize, rr as usize);
                        if !blocked[idx(cc, rr)]
                            && !in_blob[idx(cc, rr)]
                            && !frontier.contains(&(cc, rr))
                        {
                            frontier.push((cc, rr));
                        }
                    }
                };
                push(c as i64 - 1, r as i64);
                push(c as i64 + 1, r as i64);
                push(c as i64, r as i64 - 1);
                push(c as i64, r as i64 + 1);
            };
            extend_frontier(start, &mut frontier, &in_blob);
            while blob.len() < beads_per_cluster {
                if frontier.is_empty() {
                    continue 'attempt;
                }
                let pick = rng.gen_range(0..frontier.len());
                let cell = frontier.swap_remove(pick);
                in_blob[idx(cell.0, cell.1)] = true;
                blob.push(cell);
                extend_frontier(cell, &mut frontier, &in_blob);
            }
            // Commit the blob and block its 8-neighborhood for later clusters.
            for &(c, r) in &blob {
                occupied[idx(c, r)] = true;
                centers.push(grid.position(c, r));
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (cc, rr) = (c as i64 + dc, r as i64 + dr);
                        if cc >= 0
                            && rr >= 0
                            && (cc as usize) < grid.cols
                            && (rr as usize) < grid.rows
                        {
                            blocked[idx(cc as usize, rr as usize)] = true;
                        }
                    }
                }
            }
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Layout(format!(
                "could not place a {beads_per_cluster}-bead cluster after 200 attempts"
            )));
        }
    }

    Ok(BeadLayout {
        bead_centers: centers,
        bead_radius_mm: DEFAULT_BEAD_RADIUS_MM,
        grid_pitch_mm: DEFAULT_GRID_PITCH_MM,
    })
}
