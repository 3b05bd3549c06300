//! Command-line front end. Every command writes its reports and a `manifest.json`
//! into `--out`; reruns with the same inputs and `--seed` are byte-identical.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::channel_est::CovarianceOptions;
use crate::error::{Error, Result};
use crate::eval::{absorption_rmse, support_metrics};
use crate::io::{read_scene, read_wav, write_csv, write_json, write_wav, MetricRow, SceneConfig};
use crate::pipeline::{
    band_bins, coherence_sweep, estimate_absorption_covariance, estimate_geometry, match_sources, score_separation,
    separate_localized, simulate_scene, ArrayLayout, GeometryConfig,
};
use crate::recovery::{Solver, SolverConfig};
use crate::scene::{build_grid, Point, RoomSpec, Surface};
use crate::stft::{analyze_multi, StftConfig};

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "roomsparse", version, about = "Blind room characterization and sparse source recovery")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Scene description (JSON).
    #[arg(long, global = true)]
    pub scene: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Overrides the scene's grid spacing in metres.
    #[arg(long, global = true)]
    pub grid_spacing: Option<f64>,
    /// Overrides the scene's image order.
    #[arg(long, global = true)]
    pub max_order: Option<i32>,
    #[arg(long, global = true, default_value = "omp", value_parser = ["iht", "omp", "l1l2"])]
    pub solver: String,
    /// `plain`, `block[:b]` or `harmonic[:K]`; defaults to one block over all bins.
    #[arg(long, global = true)]
    pub structure: Option<String>,
    /// Constraint radius: relative for `l1l2`, absolute for the covariance fit.
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Analysis band as `lo_hz:hi_hz:count`.
    #[arg(long, global = true, default_value = "300:3000:24")]
    pub bins: String,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Simulate the scene: multichannel mixture, dry sources, ground truth.
    Simulate,
    /// Blind shoebox estimation from the recordings.
    EstimateGeometry {
        #[command(flatten)]
        input: InputArgs,
        /// Source search region: array bounding box grown by this much (metres).
        #[arg(long, default_value_t = 2.0)]
        region_margin: f64,
    },
    /// Per-surface reflection coefficients by covariance fitting.
    EstimateAbsorption {
        #[command(flatten)]
        input: InputArgs,
        /// Geometry report whose dims replace the scene room.
        #[arg(long)]
        geometry: Option<PathBuf>,
        /// One covariance per group shared by all bins.
        #[arg(long)]
        shared: bool,
    },
    /// Localize, build the channel and inverse filter.
    Separate {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Mutual coherence of compact versus random arrays.
    Coherence {
        #[arg(long, default_value_t = 8)]
        mics: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1000.0)]
        freq: f64,
    },
    /// Metrics of earlier reports against a simulation's ground truth.
    Evaluate {
        /// Output directory of `simulate`.
        #[arg(long)]
        truth: PathBuf,
        /// Directory holding the reports to score.
        #[arg(long)]
        results: PathBuf,
    },
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Multichannel recording; simulated from the scene and seed when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    config_hash: String,
    version: String,
    outputs: Vec<String>,
    warnings: Vec<String>,
}

struct Context {
    global: GlobalArgs,
    warnings: Vec<String>,
    outputs: Vec<String>,
}

impl Context {
    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.global.out.join(name)
    }

    fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    fn scene(&self) -> Result<SceneConfig> {
        let path = self
            .global
            .scene
            .as_ref()
            .ok_or_else(|| Error::Argument("--scene is required for this command".into()))?;
        let mut s = read_scene(path)?;
        if let Some(g) = self.global.grid_spacing {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::Argument(format!("--grid-spacing must be positive, got {g}")));
            }
            s.grid.spacing = g;
        }
        if let Some(o) = self.global.max_order {
            if !(0..=20).contains(&o) {
                return Err(Error::Argument(format!("--max-order must be in 0..=20, got {o}")));
            }
            s.max_order = o;
        }
        Ok(s)
    }

    fn scene_id(&self) -> String {
        self.global
            .scene
            .as_ref()
            .and_then(|p| p.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scene".into())
    }

    fn bins(&self, stft: &StftConfig) -> Result<Vec<usize>> {
        let parts: Vec<&str> = self.global.bins.split(':').collect();
        let bad = || Error::Argument(format!("--bins expects lo:hi:count, got '{}'", self.global.bins));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].parse().map_err(|_| bad())?;
        let count: usize = parts[2].parse().map_err(|_| bad())?;
        band_bins(stft, lo, hi, count)
    }

    fn solver(&self, n_bins: usize, n_active: usize) -> Result<SolverConfig> {
        let solver: Solver = self.global.solver.parse()?;
        let mut cfg = SolverConfig {
            solver,
            structure: self.global.structure.clone().unwrap_or_else(|| format!("block:{}", n_bins.max(1))),
            n_active,
            ..SolverConfig::default()
        };
        if let Some(e) = self.global.eps {
            cfg.eps_rel = e;
        }
        Ok(cfg)
    }

    /// Recordings from `--input`, or the seeded simulation with its dry signals.
    fn recordings(&mut self, scene: &SceneConfig, input: &InputArgs) -> Result<(Vec<Vec<f64>>, Option<Vec<Vec<f64>>>)> {
        match &input.input {
            Some(p) => {
                let (ch, fs) = read_wav(p)?;
                if (fs - scene.sample_rate).abs() > 1e-9 {
                    return Err(Error::Argument(format!(
                        "{} has sample rate {fs}, scene expects {}",
                        p.display(),
                        scene.sample_rate
                    )));
                }
                if ch.len() != scene.array.len() {
                    return Err(Error::Argument(format!(
                        "{} has {} channels for {} microphones",
                        p.display(),
                        ch.len(),
                        scene.array.len()
                    )));
                }
                Ok((ch, None))
            }
            None => {
                let sim = simulate_scene(scene, self.global.seed)?;
                Ok((sim.simulation.recordings, Some(sim.dry)))
            }
        }
    }
}

fn config_hash(command: &Command, global: &GlobalArgs, scene: Option<&SceneConfig>) -> Result<String> {
    let doc = json!({
        "command": serde_json::to_value(command)?,
        "global": serde_json::to_value(global)?,
        "scene": scene.map(|s| s.to_json()),
    });
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&doc)?)))
}

fn points(ps: &[Point]) -> Vec<[f64; 3]> {
    ps.iter().map(|p| [p.x, p.y, p.z]).collect()
}

fn cmd_simulate(ctx: &mut Context) -> Result<Option<SceneConfig>> {
    let scene = ctx.scene()?;
    let sim = simulate_scene(&scene, ctx.global.seed)?;
    write_wav(&ctx.path("mixture.wav"), &sim.simulation.recordings, scene.sample_rate)?;
    let len = sim.dry.iter().map(|d| d.len()).max().unwrap_or(0);
    let dry: Vec<Vec<f64>> = sim
        .dry
        .iter()
        .map(|d| {
            let mut v = d.clone();
            v.resize(len, 0.0);
            v
        })
        .collect();
    write_wav(&ctx.path("sources.wav"), &dry, scene.sample_rate)?;
    #[derive(Serialize)]
    struct TapRow {
        source: usize,
        mic: usize,
        tap: usize,
        value: f64,
    }
    let mut taps = Vec::new();
    for (n, per_mic) in sim.simulation.rirs.iter().enumerate() {
        for (m, rir) in per_mic.iter().enumerate() {
            for (k, &v) in rir.taps.iter().enumerate() {
                if v != 0.0 {
                    taps.push(TapRow { source: n, mic: m, tap: k, value: v });
                }
            }
        }
    }
    write_csv(&ctx.path("rirs.csv"), &taps)?;
    let truth = json!({
        "scene": scene.to_json(),
        "seed": ctx.global.seed,
        "sources": points(&scene.sources.iter().map(|s| s.position).collect::<Vec<_>>()),
    });
    write_json(&ctx.path("truth.json"), &truth)?;
    Ok(Some(scene))
}

fn cmd_estimate_geometry(ctx: &mut Context, input: &InputArgs, region_margin: f64) -> Result<Option<SceneConfig>> {
    let scene = ctx.scene()?;
    if !(region_margin.is_finite() && region_margin >= 0.0) {
        return Err(Error::Argument(format!("--region-margin must be nonnegative, got {region_margin}")));
    }
    let (rec, _) = ctx.recordings(&scene, input)?;
    let stft = StftConfig::pipeline_default(scene.sample_rate)?;
    let x = analyze_multi(&rec, &stft)?;
    let bins = ctx.bins(&stft)?;
    let pos = scene.array.positions();
    let lo = |f: fn(&Point) -> f64| pos.iter().map(f).fold(f64::INFINITY, f64::min);
    let hi = |f: fn(&Point) -> f64| pos.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let region = [
        (lo(|p| p.x) - region_margin).max(0.0),
        (lo(|p| p.y) - region_margin).max(0.0),
        hi(|p| p.x) + region_margin,
        hi(|p| p.y) + region_margin,
    ];
    let mut cfg = GeometryConfig::new(scene.sources.len(), region, scene.grid.height, bins);
    cfg.spacing = scene.grid.spacing;
    cfg.sound_speed = scene.room.sound_speed();
    let run = estimate_geometry(&x, &scene.array, &cfg)?;
    if !run.estimate.unresolved_axes.is_empty() {
        ctx.warn(format!("axes {:?} are not determined by the observed images", run.estimate.unresolved_axes));
    }
    ctx.warnings.extend(run.localization.warnings.iter().cloned());
    write_json(
        &ctx.path("geometry.json"),
        &json!({
            "dims": run.estimate.dims,
            "origin": run.estimate.origin,
            "fit_residual": run.estimate.fit_residual,
            "unresolved_axes": run.estimate.unresolved_axes,
            "sources": run.sources,
            "clusters": run.estimate.clusters,
        }),
    )?;
    #[derive(Serialize)]
    struct CandRow {
        x: f64,
        y: f64,
        z: f64,
        energy: f64,
        cluster: i64,
    }
    let mut label = vec![-1i64; run.localization.candidates.len()];
    for (k, c) in run.clustering.clusters.iter().enumerate() {
        for &i in c {
            label[i] = k as i64;
        }
    }
    let rows: Vec<CandRow> = run
        .localization
        .candidates
        .iter()
        .zip(&label)
        .map(|(c, &l)| CandRow {
            x: c.position[0],
            y: c.position[1],
            z: c.position[2],
            energy: c.energy,
            cluster: l,
        })
        .collect();
    write_csv(&ctx.path("image_candidates.csv"), &rows)?;
    Ok(Some(scene))
}

fn read_geometry(path: &Path) -> Result<[f64; 3]> {
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let dims = doc
        .get("dims")
        .and_then(|d| serde_json::from_value::<[f64; 3]>(d.clone()).ok())
        .ok_or_else(|| Error::Schema {
            path: "$.dims".into(),
            message: format!("{} holds no dims triple", path.display()),
        })?;
    Ok(dims)
}

fn cmd_estimate_absorption(
    ctx: &mut Context,
    input: &InputArgs,
    geometry: Option<&Path>,
    shared: bool,
) -> Result<Option<SceneConfig>> {
    let scene = ctx.scene()?;
    let room = match geometry {
        Some(p) => RoomSpec::shoebox(read_geometry(p)?, 1.0)?.with_sound_speed(scene.room.sound_speed())?,
        None => scene.room.clone(),
    };
    let (rec, _) = ctx.recordings(&scene, input)?;
    let stft = StftConfig::pipeline_default(scene.sample_rate)?;
    let x = analyze_multi(&rec, &stft)?;
    let bins = ctx.bins(&stft)?;
    let grid = build_grid(&room, scene.grid.spacing, scene.grid.height, scene.grid.margin)?;
    let opts = CovarianceOptions {
        eps: ctx.global.eps,
        shared,
        ..CovarianceOptions::default()
    };
    let (profile, rec) = estimate_absorption_covariance(
        &x,
        &scene.array,
        &room,
        &grid,
        scene.max_order.max(1),
        &bins,
        Some(scene.sources.len()),
        &opts,
        !shared,
    )?;
    if !rec.converged {
        ctx.warn(format!("covariance fit stopped after {} iterations", rec.iterations));
    }
    let broadband = profile.broadband();
    let surfaces: serde_json::Map<String, Value> = Surface::ALL
        .iter()
        .zip(broadband)
        .map(|(s, v)| (s.name().to_string(), json!(v)))
        .collect();
    write_json(
        &ctx.path("absorption.json"),
        &json!({
            "reflection": surfaces,
            "groups": profile.groups,
            "sources": points(&profile.groups.iter().map(|&g| grid.cells()[g]).collect::<Vec<_>>()),
            "residual": rec.residual,
            "eps": rec.eps,
            "iterations": rec.iterations,
            "converged": rec.converged,
        }),
    )?;
    #[derive(Serialize)]
    struct BinRow<'a> {
        freq_hz: f64,
        surface: &'a str,
        reflection: f64,
    }
    let rows: Vec<BinRow> = profile
        .bins_hz
        .iter()
        .zip(&profile.coefficients)
        .flat_map(|(&f, c)| {
            Surface::ALL.iter().zip(c).map(move |(s, &v)| BinRow {
                freq_hz: f,
                surface: s.name(),
                reflection: v,
            })
        })
        .collect();
    write_csv(&ctx.path("absorption_bins.csv"), &rows)?;
    Ok(Some(scene))
}

fn cmd_separate(ctx: &mut Context, input: &InputArgs) -> Result<Option<SceneConfig>> {
    let scene = ctx.scene()?;
    let (rec, dry) = ctx.recordings(&scene, input)?;
    let stft = StftConfig::pipeline_default(scene.sample_rate)?;
    let bins = ctx.bins(&stft)?;
    let grid = build_grid(&scene.room, scene.grid.spacing, scene.grid.height, scene.grid.margin)?;
    let solver = ctx.solver(bins.len(), scene.sources.len())?;
    let run = separate_localized(
        &rec,
        &stft,
        &scene.array,
        &scene.room,
        &grid,
        scene.max_order,
        &bins,
        &solver,
        scene.sources.len(),
    )?;
    let ill = run.diagnostics.iter().filter(|d| d.degenerate).count();
    if ill > 0 {
        ctx.warn(format!("{ill} bins had a rank-deficient channel"));
    }
    let len = rec.first().map(|r| r.len()).unwrap_or(0);
    let out: Vec<Vec<f64>> = run
        .signals
        .iter()
        .map(|s| {
            let mut v = s[..s.len().min(len)].to_vec();
            v.resize(len, 0.0);
            v
        })
        .collect();
    write_wav(&ctx.path("separated.wav"), &out, scene.sample_rate)?;
    write_json(
        &ctx.path("separation.json"),
        &json!({
            "cells": run.localization.cells.iter().map(|c| c.cell).collect::<Vec<_>>(),
            "sources": points(&run.positions),
        }),
    )?;
    match dry {
        Some(dry) => {
            let truth: Vec<Point> = scene.sources.iter().map(|s| s.position).collect();
            let assign = match_sources(&run.positions, &truth);
            let scores = score_separation(&out, &assign, &dry, &rec, &scene.array, &truth)?;
            let id = ctx.scene_id();
            let rows: Vec<MetricRow> = scores
                .iter()
                .flat_map(|s| {
                    [
                        MetricRow {
                            scene: id.clone(),
                            metric: format!("sir_db_source{}", s.source),
                            value: s.sir_db,
                        },
                        MetricRow {
                            scene: id.clone(),
                            metric: format!("baseline_sir_db_source{}", s.source),
                            value: s.baseline_sir_db,
                        },
                    ]
                })
                .collect();
            write_csv(&ctx.path("sir.csv"), &rows)?;
        }
        None => ctx.warn("no dry signals for an external recording; SIR rows skipped"),
    }
    Ok(Some(scene))
}

fn cmd_coherence(ctx: &mut Context, mics: usize, trials: usize, freq: f64) -> Result<Option<SceneConfig>> {
    let scene = ctx.scene()?;
    if trials == 0 {
        return Err(Error::Argument("--trials must be at least 1".into()));
    }
    let grid = build_grid(&scene.room, scene.grid.spacing, scene.grid.height, scene.grid.margin)?;
    let rows = coherence_sweep(&scene.room, &grid, freq, mics, scene.max_order, trials, ctx.global.seed)?;
    write_csv(&ctx.path("coherence.csv"), &rows)?;
    let mean = |l: ArrayLayout| {
        let v: Vec<f64> = rows.iter().filter(|r| r.layout == l).map(|r| r.mu).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let wins = rows.chunks(2).filter(|p| p[0].mu > p[1].mu).count();
    write_json(
        &ctx.path("coherence.json"),
        &json!({
            "cells": grid.len(),
            "mics": mics,
            "freq_hz": freq,
            "mean_mu_compact": mean(ArrayLayout::Compact),
            "mean_mu_random": mean(ArrayLayout::Random),
            "compact_above_random": wins,
            "trials": trials,
        }),
    )?;
    Ok(Some(scene))
}

fn cmd_evaluate(ctx: &mut Context, truth_dir: &Path, results: &Path) -> Result<Option<SceneConfig>> {
    let truth_doc: Value = serde_json::from_str(&std::fs::read_to_string(truth_dir.join("truth.json"))?)?;
    let scene_doc = truth_doc.get("scene").ok_or_else(|| Error::Schema {
        path: "$.scene".into(),
        message: "truth.json holds no scene".into(),
    })?;
    let scene = crate::io::parse_scene(scene_doc, truth_dir)?;
    let id = ctx.scene_id();
    let mut rows = Vec::new();
    let mut push = |metric: &str, value: f64| {
        rows.push(MetricRow {
            scene: id.clone(),
            metric: metric.to_string(),
            value,
        })
    };
    let truth_pos: Vec<Point> = scene.sources.iter().map(|s| s.position).collect();
    let geo = results.join("geometry.json");
    if geo.exists() {
        let dims = read_geometry(&geo)?;
        let d = scene.room.dims();
        for (a, name) in ["x", "y", "z"].iter().enumerate() {
            push(&format!("dims_error_{name}"), (dims[a] - d[a]).abs());
        }
    } else {
        ctx.warn("geometry.json missing; geometry metrics skipped");
    }
    let abs = results.join("absorption.json");
    if abs.exists() {
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(&abs)?)?;
        let est: Vec<f64> = Surface::ALL
            .iter()
            .map(|s| doc["reflection"][s.name()].as_f64().unwrap_or(f64::NAN))
            .collect();
        let truth: Vec<f64> = Surface::ALL.iter().map(|&s| scene.room.reflection(s, None)).collect();
        push("absorption_rmse", absorption_rmse(&est, &truth)?);
        if let Ok(src) = serde_json::from_value::<Vec<[f64; 3]>>(doc["sources"].clone()) {
            let m = support_metrics(&src.into_iter().map(Point::from).collect::<Vec<_>>(), &truth_pos, scene.grid.spacing)?;
            push("absorption_hit_rate", m.hit_rate);
        }
    } else {
        ctx.warn("absorption.json missing; absorption metrics skipped");
    }
    let sep = results.join("separated.wav");
    let sep_json = results.join("separation.json");
    let dry_path = truth_dir.join("sources.wav");
    let mix_path = truth_dir.join("mixture.wav");
    if sep.exists() && sep_json.exists() && dry_path.exists() && mix_path.exists() {
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(&sep_json)?)?;
        let est_pos: Vec<Point> = serde_json::from_value::<Vec<[f64; 3]>>(doc["sources"].clone())?
            .into_iter()
            .map(Point::from)
            .collect();
        let m = support_metrics(&est_pos, &truth_pos, scene.grid.spacing)?;
        push("localization_hit_rate", m.hit_rate);
        if let Some(e) = m.mean_error {
            push("localization_error_m", e);
        }
        let (est, _) = read_wav(&sep)?;
        let (dry, _) = read_wav(&dry_path)?;
        let (mix, _) = read_wav(&mix_path)?;
        let assign = match_sources(&est_pos, &truth_pos);
        for s in score_separation(&est, &assign, &dry, &mix, &scene.array, &truth_pos)? {
            push(&format!("sir_db_source{}", s.source), s.sir_db);
            push(&format!("baseline_sir_db_source{}", s.source), s.baseline_sir_db);
        }
    } else {
        ctx.warn("separation outputs or ground-truth audio missing; SIR metrics skipped");
    }
    write_csv(&ctx.path("metrics.csv"), &rows)?;
    write_json(&ctx.path("metrics.json"), &rows)?;
    Ok(Some(scene))
}

/// Runs one parsed invocation; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let mut ctx = Context {
        global: cli.global.clone(),
        warnings: Vec::new(),
        outputs: Vec::new(),
    };
    match execute(&mut ctx, &cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}

fn execute(ctx: &mut Context, command: &Command) -> Result<()> {
    std::fs::create_dir_all(&ctx.global.out)?;
    let (name, scene) = match command {
        Command::Simulate => ("simulate", cmd_simulate(ctx)?),
        Command::EstimateGeometry { input, region_margin } => {
            ("estimate-geometry", cmd_estimate_geometry(ctx, input, *region_margin)?)
        }
        Command::EstimateAbsorption {
            input,
            geometry,
            shared,
        } => (
            "estimate-absorption",
            cmd_estimate_absorption(ctx, input, geometry.as_deref(), *shared)?,
        ),
        Command::Separate { input } => ("separate", cmd_separate(ctx, input)?),
        Command::Coherence { mics, trials, freq } => ("coherence", cmd_coherence(ctx, *mics, *trials, *freq)?),
        Command::Evaluate { truth, results } => ("evaluate", cmd_evaluate(ctx, truth, results)?),
    };
    let manifest = Manifest {
        command: name,
        seed: ctx.global.seed,
        config_hash: config_hash(command, &ctx.global, scene.as_ref())?,
        version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: ctx.outputs.clone(),
        warnings: ctx.warnings.clone(),
    };
    write_json(&ctx.global.out.join("manifest.json"), &manifest)?;
    Ok(())
}

/// Parses `args` (program name first) and runs; clap usage errors exit with [`EXIT_VALIDATION`].
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            code
        }
    }
}
