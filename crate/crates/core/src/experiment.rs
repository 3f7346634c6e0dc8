//! Experiment runner: executes the two-phase exploration/mapping loop under
//! the proposed and random policies, records per-sample metrics, and
//! aggregates policy comparisons across layouts.
//!
//! Runs are deterministic per seed. Independent (layout, policy) runs execute
//! in parallel; each run is internally sequential because the active loop is.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::acquisition::{
    next_sample_exploration, next_sample_mapping, next_sample_random, AcquisitionConfig,
    CandidateGrid, Phase,
};
use crate::domain::{
    generate_layout, ground_truth, BeadLayout, GroundTruth, Label, Point2, TrainingSet, Workspace,
};
use crate::gp::{
    fit_laplace, optimize_hyperparams, predict_grid, probability_field, KernelParams,
    LaplaceState, Prediction, ProbabilityField,
};
use crate::mapper::{cross_entropy, mse, uncertainty_stats, HeightGrid, MetricsRow};
use crate::sampling::{sobol_2d, to_workspace};
use crate::sensor::{press, splitmix64, SensorConfig};
use crate::tactile::{labels_from_sample, threshold, to_point_cloud, ProcConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    Proposed,
    Random,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Proposed => "proposed",
            Policy::Random => "random",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Policy::Proposed),
            "random" => Ok(Policy::Random),
            other => Err(Error::Parse(
                "policy".into(),
                format!("unknown policy `{other}` (expected proposed|random)"),
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub enum LayoutSource {
    /// Procedurally generated per run seed.
    Generated {
        n_clusters: usize,
        beads_per_cluster: usize,
    },
    /// A fixed layout file shared by every run.
    File(PathBuf),
}

impl Default for LayoutSource {
    fn default() -> Self {
        LayoutSource::Generated {
            n_clusters: 3,
            beads_per_cluster: 34,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub workspace: Workspace,
    pub sensor: SensorConfig,
    pub proc: ProcConfig,
    pub kernel_init: KernelParams,
    pub lambda_weight: f64,
    pub candidate_pitch_mm: f64,
    pub eval_pitch_mm: f64,
    pub n_prior: usize,
    pub n_explore: usize,
    pub n_map: usize,
    pub policies: Vec<Policy>,
    pub seeds: Vec<u64>,
    pub layout: LayoutSource,
    /// Hyperparameter refit cadence after the prior, per phase.
    pub refit_every_explore: usize,
    pub refit_every_map: usize,
    /// Presses whose extracted points duplicate an existing same-label point
    /// within this radius add nothing to the training set. Zero disables.
    pub dedup_radius_mm: f64,
    /// Presence detections from one press are single-linkage merged at this
    /// distance into one training point per contiguous deformation group,
    /// emulating the merged mound a foam layer forms over neighboring beads.
    /// Zero disables.
    pub label_merge_mm: f64,
    /// Scored policies skip candidates closer than this to a previous press.
    pub min_press_spacing_mm: f64,
    /// Optional CE threshold that ends the exploration phase early.
    pub ce_switch_threshold: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            workspace: Workspace::default(),
            sensor: SensorConfig::default(),
            proc: ProcConfig::default(),
            kernel_init: KernelParams::default(),
            lambda_weight: 0.5,
            candidate_pitch_mm: 2.5,
            eval_pitch_mm: 0.5,
            n_prior: 8,
            n_explore: 16,
            n_map: 128,
            policies: vec![Policy::Proposed, Policy::Random],
            seeds: (1..=10).collect(),
            layout: LayoutSource::default(),
            refit_every_explore: 8,
            refit_every_map: 32,
            dedup_radius_mm: 2.0,
            label_merge_mm: 1.5 * crate::domain::DEFAULT_GRID_PITCH_MM,
            // 40% of the footprint: a closer re-press reads mostly
            // already-covered area.
            min_press_spacing_mm: 10.0,
            ce_switch_threshold: None,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_prior == 0 {
            return Err(Error::Parse(
                "config".into(),
                "n_prior must be at least 1".into(),
            ));
        }
        if self.policies.is_empty() || self.seeds.is_empty() {
            return Err(Error::Parse(
                "config".into(),
                "need at least one policy and one seed".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.lambda_weight) {
            return Err(Error::Parse(
                "config".into(),
                "lambda_weight must lie in [0, 1]".into(),
            ));
        }
        self.sensor.validate()
    }
}

/// Metric curve of one (policy, seed) run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub policy: Policy,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub presses: usize,
    pub final_params: KernelParams,
    pub training_size: usize,
    /// True when every Laplace fit in the run converged within its budget.
    pub fits_converged: bool,
}

/// Cached classifier state; refit only when the training set or the
/// hyperparameters actually changed, which keeps repeated presses over
/// already-known beads cheap without altering any result.
struct ModelCache {
    train_len: usize,
    params: KernelParams,
    state: LaplaceState,
    field: ProbabilityField,
    candidates: Prediction,
}

impl ModelCache {
    fn compute(
        train: &TrainingSet,
        params: KernelParams,
        workspace: &Workspace,
        eval_pitch_mm: f64,
        grid: &CandidateGrid,
    ) -> Result<Self> {
        let state = fit_laplace(train, &params)?;
        let field = probability_field(&state, train, &params, workspace, eval_pitch_mm)?;
        let candidates = predict_grid(&state, train, &params, grid.xs(), grid.ys())?;
        Ok(Self {
            train_len: train.len(),
            params,
            state,
            field,
            candidates,
        })
    }

    fn ensure(
        &mut self,
        train: &TrainingSet,
        params: KernelParams,
        workspace: &Workspace,
        eval_pitch_mm: f64,
        grid: &CandidateGrid,
    ) -> Result<()> {
        if self.train_len != train.len() || self.params != params {
            *self = Self::compute(train, params, workspace, eval_pitch_mm, grid)?;
        }
        Ok(())
    }
}

fn add_deduplicated(train: &mut TrainingSet, points: &[Point2], labels: &[Label], radius: f64) {
    let r2 = radius * radius;
    for (p, l) in points.iter().zip(labels.iter()) {
        let duplicate = radius > 0.0
            && train
                .points
                .iter()
                .zip(train.labels.iter())
                .any(|(q, m)| m == l && p.dist2(q) <= r2);
        if !duplicate {
            train.push(*p, *l);
        }
    }
}

/// Single-linkage merge of one press's presence detections: detections whose
/// chain of neighbors stays within `linkage` collapse to their mean, one
/// training point per contiguous group. Absence labels pass through.
fn consolidate_presence(points: &[Point2], labels: &[Label], linkage: f64) -> (Vec<Point2>, Vec<Label>) {
    if linkage <= 0.0 {
        return (points.to_vec(), labels.to_vec());
    }
    let present: Vec<Point2> = points
        .iter()
        .zip(labels.iter())
        .filter(|(_, l)| **l == Label::Present)
        .map(|(p, _)| *p)
        .collect();
    let mut out_points: Vec<Point2> = points
        .iter()
        .zip(labels.iter())
        .filter(|(_, l)| **l == Label::Absent)
        .map(|(p, _)| *p)
        .collect();
    let mut out_labels = vec![Label::Absent; out_points.len()];

    let l2 = linkage * linkage;
    let mut assigned = vec![false; present.len()];
    for start in 0..present.len() {
        if assigned[start] {
            continue;
        }
        let mut group = vec![start];
        assigned[start] = true;
        let mut cursor = 0;
        while cursor < group.len() {
            let anchor = present[group[cursor]];
            for (j, q) in present.iter().enumerate() {
                if !assigned[j] && anchor.dist2(q) <= l2 {
                    assigned[j] = true;
                    group.push(j);
                }
            }
            cursor += 1;
        }
        let n = group.len() as f64;
        let cx = group.iter().map(|&i| present[i].x).sum::<f64>() / n;
        let cy = group.iter().map(|&i| present[i].y).sum::<f64>() / n;
        out_points.push(Point2::new(cx, cy));
        out_labels.push(Label::Present);
    }
    (out_points, out_labels)
}

fn layout_for_seed(cfg: &ExperimentConfig, seed: u64) -> Result<BeadLayout> {
    match &cfg.layout {
        LayoutSource::Generated {
            n_clusters,
            beads_per_cluster,
        } => generate_layout(seed, *n_clusters, *beads_per_cluster, &cfg.workspace),
        LayoutSource::File(path) => BeadLayout::load(path),
    }
}

struct RunState<'a> {
    cfg: &'a ExperimentConfig,
    layout: BeadLayout,
    truth: GroundTruth,
    sensor: SensorConfig,
    grid: CandidateGrid,
    rng: ChaCha8Rng,
    train: TrainingSet,
    history: Vec<Point2>,
    height: HeightGrid,
    presses: usize,
}

impl<'a> RunState<'a> {
    fn press_and_ingest(&mut self, location: Point2) -> Result<()> {
        let image = press(&self.layout, &self.cfg.workspace, &self.sensor, location)?;
        let thresholded = threshold(&image, &self.cfg.proc);
        let labeled = labels_from_sample(&thresholded, &self.cfg.proc);
        let (points, labels) =
            consolidate_presence(&labeled.points, &labeled.labels, self.cfg.label_merge_mm);
        add_deduplicated(&mut self.train, &points, &labels, self.cfg.dedup_radius_mm);
        self.height.fuse(&to_point_cloud(&thresholded));
        self.history.push(location);
        self.presses += 1;
        Ok(())
    }

    fn metrics_row(&self, samples_after_prior: usize, model: &ModelCache) -> Result<MetricsRow> {
        let ce_loss = cross_entropy(&model.field, &self.truth)?;
        let mse_loss = mse(&self.height, &self.truth)?;
        let (max_sigma2, mean_sigma2) = uncertainty_stats(&model.field);
        Ok(MetricsRow {
            samples_after_prior,
            ce_loss,
            mse_loss,
            max_sigma2,
            mean_sigma2,
        })
    }
}

fn execute_run(cfg: &ExperimentConfig, policy: Policy, seed: u64) -> Result<RunResult> {
    let layout = layout_for_seed(cfg, seed)?;
    let truth = ground_truth(&layout, &cfg.workspace, cfg.eval_pitch_mm);
    let mut sensor = cfg.sensor.clone();
    sensor.noise_seed = splitmix64(cfg.sensor.noise_seed ^ splitmix64(seed));
    let grid = CandidateGrid::new(&cfg.workspace, cfg.candidate_pitch_mm);
    let acq = AcquisitionConfig {
        lambda_weight: cfg.lambda_weight,
        phase: Phase::Exploration,
        rng_seed: seed,
        min_press_spacing_mm: cfg.min_press_spacing_mm,
    };

    let mut run = RunState {
        cfg,
        layout,
        truth,
        sensor,
        grid,
        rng: ChaCha8Rng::seed_from_u64(splitmix64(seed).wrapping_add(0x52414E44)),
        train: TrainingSet::new(),
        history: Vec::new(),
        height: HeightGrid::new(&cfg.workspace, cfg.eval_pitch_mm),
        presses: 0,
    };

    // Prior phase.
    let prior_locations: Vec<Point2> = match policy {
        Policy::Proposed => to_workspace(&sobol_2d(cfg.n_prior, true), &cfg.workspace),
        Policy::Random => {
            let mut picks = Vec::with_capacity(cfg.n_prior);
            let mut seen: Vec<Point2> = Vec::new();
            for _ in 0..cfg.n_prior {
                let p = next_sample_random(&run.grid, &seen, &mut run.rng)?;
                seen.push(p);
                picks.push(p);
            }
            picks
        }
    };
    for loc in prior_locations {
        run.press_and_ingest(loc)?;
    }

    let mut params = optimize_hyperparams(&run.train, cfg.kernel_init);
    let mut last_refit_len = run.train.len();
    let mut model = ModelCache::compute(
        &run.train,
        params,
        &cfg.workspace,
        cfg.eval_pitch_mm,
        &run.grid,
    )?;
    let mut fits_converged = model.state.converged;

    let mut rows = Vec::with_capacity(1 + cfg.n_explore + cfg.n_map);
    rows.push(run.metrics_row(0, &model)?);

    // Exploration phase, then mapping phase; refits are skipped when the
    // training set has not changed since the previous refit.
    let refit = |run: &RunState,
                 params: &mut KernelParams,
                 last_refit_len: &mut usize| {
        if run.train.len() != *last_refit_len {
            *params = optimize_hyperparams(&run.train, *params);
            *last_refit_len = run.train.len();
        }
    };

    let mut exploration_presses = 0usize;
    for i in 1..=cfg.n_explore {
        if let Some(threshold_ce) = cfg.ce_switch_threshold {
            if rows.last().map(|r| r.ce_loss <= threshold_ce).unwrap_or(false) {
                break;
            }
        }
        let pick = match policy {
            Policy::Proposed => next_sample_exploration(
                &model.candidates.variance,
                &run.history,
                &run.grid,
                &cfg.workspace,
                &acq,
            )?,
            Policy::Random => next_sample_random(&run.grid, &run.history, &mut run.rng)?,
        };
        run.press_and_ingest(pick)?;
        exploration_presses += 1;
        if i % cfg.refit_every_explore == 0 {
            refit(&run, &mut params, &mut last_refit_len);
        }
        model.ensure(
            &run.train,
            params,
            &cfg.workspace,
            cfg.eval_pitch_mm,
            &run.grid,
        )?;
        fits_converged &= model.state.converged;
        rows.push(run.metrics_row(exploration_presses, &model)?);
    }

    for j in 1..=cfg.n_map {
        let pick = match policy {
            Policy::Proposed => next_sample_mapping(
                &model.candidates.probability,
                &run.history,
                &run.grid,
                &cfg.workspace,
                &acq,
            )?,
            Policy::Random => next_sample_random(&run.grid, &run.history, &mut run.rng)?,
        };
        run.press_and_ingest(pick)?;
        if j % cfg.refit_every_map == 0 {
            refit(&run, &mut params, &mut last_refit_len);
        }
        model.ensure(
            &run.train,
            params,
            &cfg.workspace,
            cfg.eval_pitch_mm,
            &run.grid,
        )?;
        fits_converged &= model.state.converged;
        rows.push(run.metrics_row(exploration_presses + j, &model)?);
    }

    if let Some(dir) = &cfg.out_dir {
        write_run_artifacts(cfg, policy, seed, &run, &model, &rows, dir)?;
    }

    Ok(RunResult {
        policy,
        seed,
        rows,
        presses: run.presses,
        final_params: params,
        training_size: run.train.len(),
        fits_converged,
    })
}

fn write_run_artifacts(
    cfg: &ExperimentConfig,
    policy: Policy,
    seed: u64,
    run: &RunState,
    model: &ModelCache,
    rows: &[MetricsRow],
    dir: &std::path::Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let tag = format!("{}_{}", policy.name(), seed);
    std::fs::write(
        dir.join(format!("metrics_{tag}.csv")),
        metrics_csv_for(policy, seed, rows),
    )?;
    crate::pgm::render_grid(&model.field.prob, 0.0, 1.0, dir.join(format!("prob_{tag}.pgm")))?;
    let var_hi = cfg.kernel_init.amplitude * cfg.kernel_init.amplitude;
    crate::pgm::render_grid(
        &model.field.variance,
        0.0,
        var_hi.max(1.0),
        dir.join(format!("variance_{tag}.pgm")),
    )?;
    crate::pgm::render_grid(
        &run.height.cells,
        0.0,
        6.0,
        dir.join(format!("height_{tag}.pgm")),
    )?;
    Ok(())
}

fn metrics_csv_for(policy: Policy, seed: u64, rows: &[MetricsRow]) -> String {
    let mut out = String::from("policy,seed,sample_index,ce,mse,max_var,mean_var\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            policy.name(),
            seed,
            r.samples_after_prior,
            r.ce_loss,
            r.mse_loss,
            r.max_sigma2,
            r.mean_sigma2
        ));
    }
    out
}

/// Combined CSV over every run, in (seed, policy) order.
pub fn metrics_csv(results: &[RunResult]) -> String {
    let mut out = String::from("policy,seed,sample_index,ce,mse,max_var,mean_var\n");
    for res in results {
        for r in &res.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                res.policy.name(),
                res.seed,
                r.samples_after_prior,
                r.ce_loss,
                r.mse_loss,
                r.max_sigma2,
                r.mean_sigma2
            ));
        }
    }
    out
}

/// Run every configured (seed, policy) pair. Runs execute in parallel and
/// results come back in configuration order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunResult>> {
    cfg.validate()?;
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        // Per-seed artifacts written up front; runs only write files tagged
        // with their own (policy, seed) pair, so parallel runs never collide.
        for &seed in &cfg.seeds {
            let layout = layout_for_seed(cfg, seed)?;
            layout.save(dir.join(format!("layout_{seed}.txt")))?;
            let truth = ground_truth(&layout, &cfg.workspace, cfg.eval_pitch_mm);
            crate::pgm::render_grid(
                &truth.height,
                0.0,
                6.0,
                dir.join(format!("truth_height_{seed}.pgm")),
            )?;
        }
    }
    let jobs: Vec<(u64, Policy)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.policies.iter().map(move |&p| (s, p)))
        .collect();
    jobs.par_iter()
        .map(|&(seed, policy)| execute_run(cfg, policy, seed))
        .collect()
}

/// Per-sample-index mean and standard deviation of a policy's metric curves.
#[derive(Debug, Clone)]
pub struct PolicySummary {
    pub policy: Policy,
    pub runs: usize,
    pub ce_mean: Vec<f64>,
    pub ce_std: Vec<f64>,
    pub mse_mean: Vec<f64>,
    pub mse_std: Vec<f64>,
    pub max_var_mean: Vec<f64>,
    pub mean_var_mean: Vec<f64>,
}

/// Cross-policy comparison over matching sample indices.
#[derive(Debug, Clone)]
pub struct PolicyComparison {
    pub sample_indices: Vec<usize>,
    pub summaries: Vec<PolicySummary>,
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregate metric curves per policy. Every run must share the same row
/// count (the same sample schedule).
pub fn compare_policies(results: &[RunResult]) -> Result<PolicyComparison> {
    if results.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let rows = results[0].rows.len();
    if results.iter().any(|r| r.rows.len() != rows) {
        return Err(Error::Numerical(
            "runs have mismatched metric curve lengths".into(),
        ));
    }
    let sample_indices: Vec<usize> = results[0]
        .rows
        .iter()
        .map(|r| r.samples_after_prior)
        .collect();
    let mut policies: Vec<Policy> = Vec::new();
    for r in results {
        if !policies.contains(&r.policy) {
            policies.push(r.policy);
        }
    }
    let mut summaries = Vec::new();
    for policy in policies {
        let runs: Vec<&RunResult> = results.iter().filter(|r| r.policy == policy).collect();
        let mut summary = PolicySummary {
            policy,
            runs: runs.len(),
            ce_mean: Vec::with_capacity(rows),
            ce_std: Vec::with_capacity(rows),
            mse_mean: Vec::with_capacity(rows),
            mse_std: Vec::with_capacity(rows),
            max_var_mean: Vec::with_capacity(rows),
            mean_var_mean: Vec::with_capacity(rows),
        };
        for i in 0..rows {
            let ce: Vec<f64> = runs.iter().map(|r| r.rows[i].ce_loss).collect();
            let mse_vals: Vec<f64> = runs.iter().map(|r| r.rows[i].mse_loss).collect();
            let max_var: Vec<f64> = runs.iter().map(|r| r.rows[i].max_sigma2).collect();
            let mean_var: Vec<f64> = runs.iter().map(|r| r.rows[i].mean_sigma2).collect();
            let (cm, cs) = mean_and_std(&ce);
            let (mm, ms) = mean_and_std(&mse_vals);
            summary.ce_mean.push(cm);
            summary.ce_std.push(cs);
            summary.mse_mean.push(mm);
            summary.mse_std.push(ms);
            summary.max_var_mean.push(mean_and_std(&max_var).0);
            summary.mean_var_mean.push(mean_and_std(&mean_var).0);
        }
        summaries.push(summary);
    }
    Ok(PolicyComparison {
        sample_indices,
        summaries,
    })
}

impl PolicyComparison {
    pub fn summary_for(&self, policy: Policy) -> Option<&PolicySummary> {
        self.summaries.iter().find(|s| s.policy == policy)
    }

    /// Summary CSV: one row per sample index, per-policy mean/std columns and
    /// proposed-minus-random deltas when both policies are present.
    pub fn to_csv(&self) -> String {
        let mut header = String::from("sample_index");
        for s in &self.summaries {
            let p = s.policy.name();
            header.push_str(&format!(
                ",{p}_ce_mean,{p}_ce_std,{p}_mse_mean,{p}_mse_std,{p}_max_var_mean,{p}_mean_var_mean"
            ));
        }
        let both = self.summary_for(Policy::Proposed).is_some()
            && self.summary_for(Policy::Random).is_some();
        if both {
            header.push_str(",delta_ce_mean,delta_mse_mean");
        }
        header.push('\n');
        let mut out = header;
        for (i, idx) in self.sample_indices.iter().enumerate() {
            out.push_str(&format!("{idx}"));
            for s in &self.summaries {
                out.push_str(&format!(
                    ",{},{},{},{},{},{}",
                    s.ce_mean[i],
                    s.ce_std[i],
                    s.mse_mean[i],
                    s.mse_std[i],
                    s.max_var_mean[i],
                    s.mean_var_mean[i]
                ));
            }
            if both {
                let p = self.summary_for(Policy::Proposed).unwrap();
                let r = self.summary_for(Policy::Random).unwrap();
                out.push_str(&format!(
                    ",{},{}",
                    p.ce_mean[i] - r.ce_mean[i],
                    p.mse_mean[i] - r.mse_mean[i]
                ));
            }
            out.push('\n');
        }
        out
    }
}
