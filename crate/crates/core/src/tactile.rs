//! Depth-image processing: threshold the deformation field, extract
//! deformation clusters, and turn each press into labeled training points
//! plus a thresholded point cloud for the mapping phase.
//!
//! Clusters are maximal 8-connected components of above-threshold pixels;
//! each carries the convex hull of its pixel set and the hull-vertex-mean
//! centroid. On binary masks this identifies the same clusters an
//! edge-detector-plus-contours pipeline would.

use std::io::Write;
use std::path::Path;

use crate::domain::{Label, Point2, SampleRecord};
use crate::sensor::DepthImage;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ProcConfig {
    /// Deformations at or below this threshold are treated as sensor noise.
    pub epsilon_mm: f64,
    /// Components smaller than this are dropped as stray pixels.
    pub min_cluster_px: usize,
}

impl Default for ProcConfig {
    fn default() -> Self {
        Self {
            epsilon_mm: 1.55,
            min_cluster_px: 8,
        }
    }
}

/// One deformation cluster in pixel coordinates (x = column, y = row).
#[derive(Debug, Clone)]
pub struct ContourCluster {
    pub hull_vertices: Vec<[f64; 2]>,
    pub centroid_px: [f64; 2],
    pub pixel_count: usize,
}

/// World-frame training points extracted from one press.
#[derive(Debug, Clone)]
pub struct LabeledPoints {
    pub points: Vec<Point2>,
    pub labels: Vec<Label>,
}

/// Thresholded press data destined for the height grid; keeps the press
/// geometry so fusion can mark the whole footprint observed.
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub center: Point2,
    pub footprint_mm: f64,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// One `x y z` row per point.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for p in &self.points {
            writeln!(out, "{} {} {}", p[0], p[1], p[2])?;
        }
        Ok(())
    }
}

/// Zero out pixels whose deformation does not exceed the noise threshold.
pub fn threshold(image: &DepthImage, config: &ProcConfig) -> DepthImage {
    let mut out = image.clone();
    for v in out.pixels_mut() {
        if v.abs() <= config.epsilon_mm {
            *v = 0.0;
        }
    }
    out
}

/// Convex hull of a point set by the monotone chain, vertices in
/// counter-clockwise order with collinear points dropped. Degenerate inputs
/// (one point, collinear points) return the extreme points.
fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let n = pts.len();
    if n <= 2 {
        return pts;
    }
    let cross = |o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * n);
    for p in pts.iter() {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    let lower_len = hull.len() + 1;
    for p in pts.iter().rev() {
        while hull.len() >= lower_len
            && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}

fn hull_vertex_mean(hull: &[[f64; 2]]) -> [f64; 2] {
    let n = hull.len() as f64;
    let mut c = [0.0, 0.0];
    for v in hull {
        c[0] += v[0];
        c[1] += v[1];
    }
    [c[0] / n, c[1] / n]
}

/// Extract the 8-connected deformation clusters of an already-thresholded
/// image. Components below `min_cluster_px` pixels are ignored.
pub fn extract_clusters(image: &DepthImage, config: &ProcConfig) -> Vec<ContourCluster> {
    let res = image.resolution_px();
    let mut visited = vec![false; res * res];
    let mut clusters = Vec::new();
    for start in 0..res * res {
        if visited[start] || image.pixels()[start] == 0.0 {
            continue;
        }
        let mut component: Vec<[f64; 2]> = Vec::new();
        let mut stack = vec![start];
        visited[start] = true;
        while let Some(i) = stack.pop() {
            let (row, col) = (i / res, i % res);
            component.push([col as f64, row as f64]);
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (row as i64 + dr, col as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= res as i64 || nc >= res as i64 {
                        continue;
                    }
                    let j = nr as usize * res + nc as usize;
                    if !visited[j] && image.pixels()[j] != 0.0 {
                        visited[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if component.len() < config.min_cluster_px {
            continue;
        }
        let pixel_count = component.len();
        let hull = convex_hull(component);
        let centroid_px = hull_vertex_mean(&hull);
        clusters.push(ContourCluster {
            hull_vertices: hull,
            centroid_px,
            pixel_count,
        });
    }
    clusters
}

/// Training points from one press: one presence point per cluster centroid,
/// or a single absence point at the press center when nothing deformed.
/// Accepts raw or pre-thresholded images (thresholding is idempotent).
pub fn labels_from_sample(image: &DepthImage, config: &ProcConfig) -> LabeledPoints {
    let thresholded = threshold(image, config);
    let clusters = extract_clusters(&thresholded, config);
    if clusters.is_empty() {
        return LabeledPoints {
            points: vec![image.center],
            labels: vec![Label::Absent],
        };
    }
    let mut points = Vec::with_capacity(clusters.len());
    let mut labels = Vec::with_capacity(clusters.len());
    for c in &clusters {
        points.push(image.world_point(c.centroid_px[0], c.centroid_px[1]));
        labels.push(Label::Present);
    }
    LabeledPoints { points, labels }
}

/// Bundle one press with the training points extracted from it.
pub fn sample_record(image: &DepthImage, config: &ProcConfig) -> SampleRecord {
    let labeled = labels_from_sample(image, config);
    SampleRecord {
        location: image.center,
        extracted_labels: labeled
            .points
            .into_iter()
            .zip(labeled.labels)
            .collect(),
        depth_image: image.clone(),
    }
}

/// One world-frame point per nonzero pixel of a thresholded image.
pub fn to_point_cloud(image: &DepthImage) -> PointCloud {
    let res = image.resolution_px();
    let mut points = Vec::new();
    for row in 0..res {
        for col in 0..res {
            let v = image.get(row, col);
            if v != 0.0 {
                let w = image.world_point(col as f64, row as f64);
                points.push([w.x, w.y, v]);
            }
        }
    }
    PointCloud {
        points,
        center: image.center,
        footprint_mm: image.footprint_mm(),
    }
}
