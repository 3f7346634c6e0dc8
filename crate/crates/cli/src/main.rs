//! Command-line benchmark runner: generate bead layouts, run single
//! experiments, reproduce the full policy comparison, and render saved
//! rasters as PGM heat maps.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tactile_map::domain::{generate_layout, Grid2, Workspace};
use tactile_map::experiment::{
    compare_policies, metrics_csv, run_experiment, ExperimentConfig, LayoutSource, Policy,
};

#[derive(Parser)]
#[command(
    name = "tactile-map",
    about = "Active tactile exploration and mapping of buried objects",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a bead layout file.
    Generate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        clusters: usize,
        #[arg(long, default_value_t = 34)]
        beads: usize,
        #[arg(long, default_value_t = 300.0)]
        width: f64,
        #[arg(long, default_value_t = 90.4)]
        height: f64,
        /// Output layout file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment (any subset of policies and seeds).
    Run(RunArgs),
    /// Full benchmark: both policies over a set of generated layouts, with a
    /// summary comparison.
    Bench(BenchArgs),
    /// Render a CSV raster as a 16-bit PGM heat map.
    Render {
        /// Input raster (comma-separated rows).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Value mapped to black.
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        /// Value mapped to white.
        #[arg(long, default_value_t = 1.0)]
        hi: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Layout seeds, comma separated (one run per seed and policy).
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// proposed, random, or both.
    #[arg(long)]
    policy: Option<String>,
    /// Fixed layout file instead of generated layouts.
    #[arg(long)]
    layout_file: Option<PathBuf>,
    #[arg(long)]
    n_prior: Option<usize>,
    #[arg(long)]
    n_explore: Option<usize>,
    #[arg(long)]
    n_map: Option<usize>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    beads: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Switch to mapping as soon as CE drops to this value.
    #[arg(long)]
    ce_switch: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Number of generated layouts (seeds 1..=N).
    #[arg(long, default_value_t = 10)]
    layouts: usize,
    #[arg(long, default_value_t = 8)]
    n_prior: usize,
    #[arg(long, default_value_t = 16)]
    n_explore: usize,
    #[arg(long, default_value_t = 128)]
    n_map: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_policies(spec: &str) -> Result<Vec<Policy>> {
    match spec {
        "both" => Ok(vec![Policy::Proposed, Policy::Random]),
        other => other
            .split(',')
            .map(|s| s.trim().parse::<Policy>().map_err(anyhow::Error::from))
            .collect(),
    }
}

/// Flat `key value` / `key = value` config lines; `#` starts a comment.
fn apply_config_file(cfg: &mut ExperimentConfig, path: &PathBuf) -> Result<()> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut clusters = None;
    let mut beads = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cleaned = line.replacen('=', " ", 1);
        let mut toks = cleaned.split_whitespace();
        let key = toks.next().unwrap_or("");
        let value = toks.collect::<Vec<_>>().join(" ");
        if value.is_empty() {
            bail!("{}:{}: missing value for `{key}`", path.display(), lineno + 1);
        }
        let fail = |e: String| anyhow::anyhow!("{}:{}: {e}", path.display(), lineno + 1);
        macro_rules! num {
            () => {
                value.parse().map_err(|e| fail(format!("{e}")))?
            };
        }
        match key {
            "width_mm" => cfg.workspace.width_mm = num!(),
            "height_mm" => cfg.workspace.height_mm = num!(),
            "footprint_mm" => cfg.sensor.footprint_mm = num!(),
            "resolution_px" => cfg.sensor.resolution_px = num!(),
            "plunge_depth_mm" => cfg.sensor.plunge_depth_mm = num!(),
            "foam_thickness_mm" => cfg.sensor.foam_thickness_mm = num!(),
            "attenuation" => cfg.sensor.attenuation = num!(),
            "noise_sigma_mm" => cfg.sensor.noise_sigma_mm = num!(),
            "noise_seed" => cfg.sensor.noise_seed = num!(),
            "epsilon_mm" => cfg.proc.epsilon_mm = num!(),
            "min_cluster_px" => cfg.proc.min_cluster_px = num!(),
            "length_scale" => cfg.kernel_init.length_scale = num!(),
            "amplitude" => cfg.kernel_init.amplitude = num!(),
            "lambda_weight" => cfg.lambda_weight = num!(),
            "candidate_pitch_mm" => cfg.candidate_pitch_mm = num!(),
            "eval_pitch_mm" => cfg.eval_pitch_mm = num!(),
            "n_prior" => cfg.n_prior = num!(),
            "n_explore" => cfg.n_explore = num!(),
            "n_map" => cfg.n_map = num!(),
            "refit_every_explore" => cfg.refit_every_explore = num!(),
            "refit_every_map" => cfg.refit_every_map = num!(),
            "dedup_radius_mm" => cfg.dedup_radius_mm = num!(),
            "ce_switch_threshold" => cfg.ce_switch_threshold = Some(num!()),
            "policies" => cfg.policies = parse_policies(&value)?,
            "seeds" => {
                cfg.seeds = value
                    .split(',')
                    .map(|s| s.trim().parse::<u64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| fail(format!("{e}")))?;
            }
            "layout_file" => cfg.layout = LayoutSource::File(PathBuf::from(&value)),
            "n_clusters" => clusters = Some(num!()),
            "beads_per_cluster" => beads = Some(num!()),
            "out_dir" => cfg.out_dir = Some(PathBuf::from(&value)),
            other => bail!(
                "{}:{}: unknown config key `{other}`",
                path.display(),
                lineno + 1
            ),
        }
    }
    if clusters.is_some() || beads.is_some() {
        if let LayoutSource::Generated {
            n_clusters,
            beads_per_cluster,
        } = &mut cfg.layout
        {
            if let Some(c) = clusters {
                *n_clusters = c;
            }
            if let Some(b) = beads {
                *beads_per_cluster = b;
            }
        }
    }
    Ok(())
}

fn build_run_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig {
        seeds: vec![1],
        policies: vec![Policy::Proposed],
        ..ExperimentConfig::default()
    };
    if let Some(path) = &args.config {
        apply_config_file(&mut cfg, path)?;
    }
    if !args.seeds.is_empty() {
        cfg.seeds = args.seeds.clone();
    }
    if let Some(p) = &args.policy {
        cfg.policies = parse_policies(p)?;
    }
    if let Some(f) = &args.layout_file {
        cfg.layout = LayoutSource::File(f.clone());
    }
    if let Some(v) = args.n_prior {
        cfg.n_prior = v;
    }
    if let Some(v) = args.n_explore {
        cfg.n_explore = v;
    }
    if let Some(v) = args.n_map {
        cfg.n_map = v;
    }
    if args.clusters.is_some() || args.beads.is_some() {
        if let LayoutSource::Generated {
            n_clusters,
            beads_per_cluster,
        } = &mut cfg.layout
        {
            if let Some(c) = args.clusters {
                *n_clusters = c;
            }
            if let Some(b) = args.beads {
                *beads_per_cluster = b;
            }
        }
    }
    if let Some(v) = args.lambda {
        cfg.lambda_weight = v;
    }
    if let Some(v) = args.noise_seed {
        cfg.sensor.noise_seed = v;
    }
    if let Some(v) = args.ce_switch {
        cfg.ce_switch_threshold = Some(v);
    }
    if let Some(d) = &args.out_dir {
        cfg.out_dir = Some(d.clone());
    }
    Ok(cfg)
}

fn print_comparison(results: &[tactile_map::experiment::RunResult]) -> Result<()> {
    let cmp = compare_policies(results)?;
    let proposed = cmp.summary_for(Policy::Proposed);
    let random = cmp.summary_for(Policy::Random);
    println!("sample  policy     ce_mean  ce_std   mse_mean mse_std");
    let checkpoints: Vec<usize> = cmp
        .sample_indices
        .iter()
        .copied()
        .filter(|&i| i == 0 || i == 8 || i == 16 || (i > 16 && (i - 16) % 32 == 0))
        .collect();
    for s in &cmp.summaries {
        for (pos, &idx) in cmp.sample_indices.iter().enumerate() {
            if !checkpoints.contains(&idx) {
                continue;
            }
            println!(
                "{idx:>6}  {:<9}  {:<7.4}  {:<7.4}  {:<8.5} {:<7.5}",
                s.policy.name(),
                s.ce_mean[pos],
                s.ce_std[pos],
                s.mse_mean[pos],
                s.mse_std[pos]
            );
        }
    }
    if let (Some(p), Some(r)) = (proposed, random) {
        if let Some(pos) = cmp.sample_indices.iter().position(|&i| i == 16) {
            println!(
                "delta at 16 samples: ce {:+.4}, mse {:+.5} (proposed - random)",
                p.ce_mean[pos] - r.ce_mean[pos],
                p.mse_mean[pos] - r.mse_mean[pos]
            );
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate {
            seed,
            clusters,
            beads,
            width,
            height,
            out,
        } => {
            let ws = Workspace::new(width, height)?;
            let layout = generate_layout(seed, clusters, beads, &ws)?;
            layout.save(&out)?;
            println!(
                "wrote {} beads in {clusters} clusters to {}",
                layout.bead_centers.len(),
                out.display()
            );
        }
        Command::Run(args) => {
            let cfg = build_run_config(&args)?;
            let results = run_experiment(&cfg)?;
            for r in &results {
                let last = r.rows.last().expect("at least the prior row");
                println!(
                    "{} seed {}: {} presses, {} training points, final ce {:.4}, mse {:.5}, theta [{:.1}, {:.1}]",
                    r.policy.name(),
                    r.seed,
                    r.presses,
                    r.training_size,
                    last.ce_loss,
                    last.mse_loss,
                    r.final_params.length_scale,
                    r.final_params.amplitude
                );
            }
            if let Some(dir) = &cfg.out_dir {
                std::fs::write(dir.join("metrics.csv"), metrics_csv(&results))?;
                println!("artifacts in {}", dir.display());
            }
            if results.iter().map(|r| r.policy).collect::<std::collections::HashSet<_>>().len() > 1
            {
                print_comparison(&results)?;
            }
        }
        Command::Bench(args) => {
            let cfg = ExperimentConfig {
                n_prior: args.n_prior,
                n_explore: args.n_explore,
                n_map: args.n_map,
                seeds: (1..=args.layouts as u64).collect(),
                policies: vec![Policy::Proposed, Policy::Random],
                out_dir: Some(args.out_dir.clone()),
                ..ExperimentConfig::default()
            };
            let started = std::time::Instant::now();
            let results = run_experiment(&cfg)?;
            std::fs::write(args.out_dir.join("metrics.csv"), metrics_csv(&results))?;
            let cmp = compare_policies(&results)?;
            std::fs::write(args.out_dir.join("summary.csv"), cmp.to_csv())?;
            print_comparison(&results)?;
            println!(
                "{} runs in {:.1} s; artifacts in {}",
                results.len(),
                started.elapsed().as_secs_f64(),
                args.out_dir.display()
            );
        }
        Command::Render {
            input,
            output,
            lo,
            hi,
        } => {
            let text = std::fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let grid = Grid2::from_csv(&text, 1.0)?;
            tactile_map::pgm::render_grid(&grid, lo, hi, &output)?;
            println!(
                "rendered {}x{} raster to {}",
                grid.nx(),
                grid.ny(),
                output.display()
            );
        }
    }
    Ok(())
}
