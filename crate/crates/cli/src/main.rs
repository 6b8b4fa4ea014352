//! `birthrisk`: generate synthetic data, run experiment grids, cross-validate
//! hyperparameters, and render report tables.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod config;
mod render;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use birthrisk::experiments::{
    run_grid, run_importance, run_race_models, write_grid_reports, ExperimentSpec, ReportBody, ReportFile,
};
use birthrisk::ingest::{apply_imputer, encode, fit_imputer, select_features};
use birthrisk::model::ModelSpec;
use birthrisk::sampling::{grid_search, resample, stratified_kfold, SampleRatio};
use birthrisk::synth::{generate, preset, write_outputs, Manifest};
use clap::{Parser, Subcommand, ValueEnum};

use config::{unknown_preset, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser)]
#[command(name = "birthrisk", version, about = "Mortality-risk classification experiments on birth records")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs the sequential reference path.
    #[arg(long, global = true, env = "BIRTHRISK_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark: data CSV, oracle sidecar, manifest.
    Synth {
        #[arg(long)]
        preset: String,
        /// Row count override.
        #[arg(long)]
        n: Option<usize>,
        #[arg(short, long = "output-dir", env = "BIRTHRISK_OUTPUT_DIR", default_value = "data")]
        output_dir: PathBuf,
        #[arg(long)]
        dry_run: bool,
    },
    /// Run the experiment grid of a configuration file.
    Run(RunArgs),
    /// Cross-validate the hyperparameter grid of a configuration file.
    Cv(RunArgs),
    /// Render a report file or run directory as a table.
    Report {
        kind: ReportKind,
        /// A `.report` file or a run directory.
        path: PathBuf,
        /// Rows shown by the importance view.
        #[arg(long, default_value_t = 20)]
        top: usize,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Validate a configuration file and print the resolved grid size.
    CheckConfig { config: PathBuf },
}

#[derive(clap::Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(short, long, env = "BIRTHRISK_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    /// Print the resolved work and write nothing.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    Strata,
    Cause,
    Race,
    Importance,
    Grid,
    Cv,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Table,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            let msg = match &e {
                CliError::Usage(m) | CliError::Runtime(m) => m,
            };
            eprintln!("error: {msg}");
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Synth { preset, n, output_dir, dry_run } => {
            init_threads(cli.threads, None)?;
            cmd_synth(&preset, n, cli.seed.unwrap_or(0), &output_dir, dry_run)
        }
        Command::Run(args) => {
            let cfg = resolve(&args, cli.seed)?;
            init_threads(cli.threads, cfg.threads)?;
            cmd_run(&cfg, &out_dir(&args, &cfg), args.dry_run)
        }
        Command::Cv(args) => {
            let cfg = resolve(&args, cli.seed)?;
            init_threads(cli.threads, cfg.threads)?;
            cmd_cv(&cfg, &out_dir(&args, &cfg), args.dry_run)
        }
        Command::Report { kind, path, top, format } => cmd_report(kind, &path, top, format),
        Command::CheckConfig { config } => {
            let cfg = RunConfig::load(&config)?;
            let cells = if cfg.grid.is_some() { cfg.grid_specs()?.len() } else { 0 };
            let points = if cfg.cv.is_some() { cfg.cv_points()?.len() } else { 0 };
            println!("{}: ok ({cells} grid cells, {points} cv points, run id {})", config.display(), cfg.run_id());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn init_threads(flag: Option<usize>, config: Option<usize>) -> Result<(), CliError> {
    let n = flag.or(config).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if n == 0 {
        return Err(CliError::Usage("thread count must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(runtime)
}

/// Loads the configuration with command-line overrides applied.
fn resolve(args: &RunArgs, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    if let Some(id) = &args.run_id {
        cfg.run_id = Some(id.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(args: &RunArgs, cfg: &RunConfig) -> PathBuf {
    let base = args.output_dir.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| "results".into());
    base.join(cfg.run_id())
}

fn cmd_synth(name: &str, n: Option<usize>, seed: u64, dir: &Path, dry_run: bool) -> Result<ExitCode, CliError> {
    let p = preset(name).map_err(|_| unknown_preset(name))?;
    let n = n.unwrap_or(p.n);
    let stem = format!("{name}-seed{seed}");
    if dry_run {
        println!("would write {n} records to {}/{stem}.{{csv,oracle.csv,manifest.json}}", dir.display());
        return Ok(ExitCode::SUCCESS);
    }
    let ds = generate(n, &p.config, seed).map_err(runtime)?;
    let manifest = Manifest::new(&ds, &p.config, seed, Some(&p));
    let files = write_outputs(&ds, &manifest, dir, &stem).map_err(runtime)?;
    for f in [&files.data, &files.oracle, &files.manifest] {
        println!("{}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn write_report(report: &ReportFile, path: &Path) -> Result<(), CliError> {
    report.write(path).map_err(runtime)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_run(cfg: &RunConfig, dir: &Path, dry_run: bool) -> Result<ExitCode, CliError> {
    let specs = cfg.grid_specs()?;
    let grid_cfg = cfg.grid.as_ref().expect("grid_specs checked");
    if dry_run {
        println!("run {} -> {}", cfg.run_id(), dir.display());
        for s in &specs {
            println!("{}  {}", s.hash(), s.describe());
        }
        return Ok(ExitCode::SUCCESS);
    }
    let (train, test) = cfg.data.load()?;
    let start = Instant::now();
    let grid = run_grid(&specs, &train, &test).map_err(runtime)?;
    write_grid_reports(&grid, dir).map_err(runtime)?;
    print!("{}", render::grid(&grid.cells));

    let mut timings = BTreeMap::new();
    for c in &grid.cells {
        if let Some(r) = &c.result {
            timings.insert(c.spec.hash(), r.wall_time_secs);
        }
    }
    let best = best_cell(&grid.cells);
    if grid_cfg.race_models {
        if let Some(b) = best {
            let spec = &grid.cells[b].spec;
            let groups = run_race_models(spec, &train, &test, grid_cfg.race_min_minority).map_err(runtime)?;
            write_report(&ReportFile::new(Some(spec), ReportBody::Race { groups }), &dir.join("race.report"))?;
        }
    }
    if grid_cfg.importance {
        let model = grid_cfg.models.iter().find(|m| matches!(m, ModelSpec::Gbt(_))).expect("validated");
        let spec = ExperimentSpec {
            model: model.with_seed(cfg.seeds[0]),
            subset: birthrisk::ingest::FeatureSubset::All,
            ratio: SampleRatio::Natural,
            seed: cfg.seeds[0],
            train_years: cfg.data.train_years.clone(),
            test_year: cfg.data.test_year,
            race: None,
            threshold: cfg.threshold,
        };
        let importance = run_importance(&spec, &train).map_err(runtime)?;
        write_report(&ReportFile::new(Some(&spec), ReportBody::Importance { importance }), &dir.join("importance.report"))?;
    }
    let timing_file = serde_json::json!({ "total_secs": start.elapsed().as_secs_f64(), "cells": timings });
    let path = dir.join("timings.json");
    std::fs::write(&path, serde_json::to_string_pretty(&timing_file).expect("json") + "\n").map_err(runtime)?;

    let ok = grid.cells.iter().filter(|c| c.result.is_some()).count();
    println!("{ok}/{} cells succeeded; reports in {}", grid.cells.len(), dir.display());
    Ok(if ok > 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

/// Highest AUC, then highest recall, earliest on ties.
fn best_cell(cells: &[birthrisk::experiments::CellOutcome]) -> Option<usize> {
    let key = |i: usize| cells[i].result.as_ref().map(|r| (r.report.auc, r.report.recall));
    let mut best: Option<usize> = None;
    for i in 0..cells.len() {
        if let Some(k) = key(i) {
            if best.is_none_or(|b| k > key(b).expect("best has a result")) {
                best = Some(i);
            }
        }
    }
    best
}

fn cmd_cv(cfg: &RunConfig, dir: &Path, dry_run: bool) -> Result<ExitCode, CliError> {
    let points = cfg.cv_points()?;
    let cv = cfg.cv.as_ref().expect("cv_points checked");
    let seed = cfg.seeds[0];
    if dry_run {
        println!("cv {} ({}-fold, {} {}, seed {seed}) -> {}", cfg.run_id(), cv.k, cv.subset, cv.ratio, dir.display());
        for (g, p) in points.iter().enumerate() {
            println!("{g}  {}", serde_json::to_string(p).expect("spec serializes"));
        }
        return Ok(ExitCode::SUCCESS);
    }
    let (train, _) = cfg.data.load()?;
    let imputer = fit_imputer(&train).map_err(runtime)?;
    let (m, y) = encode(&apply_imputer(&train, &imputer).map_err(runtime)?).map_err(runtime)?;
    let m = select_features(&m, cv.subset).map_err(runtime)?;
    let (m, y) = resample(&m, &y, cv.ratio, seed).map_err(runtime)?;
    let plan = stratified_kfold(&y, cv.k, seed).map_err(runtime)?;
    let search = grid_search(&points, &m, &y, &plan, cfg.threshold, seed).map_err(runtime)?;
    print!("{}", render::cv(&search));
    std::fs::create_dir_all(dir).map_err(runtime)?;
    let body = ReportBody::Cv { subset: cv.subset, ratio: cv.ratio, k: cv.k, search };
    write_report(&ReportFile::new(None, body), &dir.join("cv.report"))?;
    Ok(ExitCode::SUCCESS)
}

fn read(path: &Path) -> Result<ReportFile, CliError> {
    ReportFile::read(path).map_err(runtime)
}

/// The report a view reads: the file itself, or the natural file of a run
/// directory (the best cell for the strata views).
fn locate(kind: ReportKind, path: &Path) -> Result<ReportFile, CliError> {
    if !path.is_dir() {
        return read(path);
    }
    let named = |f: &str| read(&path.join(f));
    match kind {
        ReportKind::Race => named("race.report"),
        ReportKind::Importance => named("importance.report"),
        ReportKind::Cv => named("cv.report"),
        ReportKind::Grid => named("summary.report"),
        ReportKind::Strata | ReportKind::Cause => {
            let ReportBody::Summary { best, cells } = named("summary.report")?.body else {
                return Err(runtime("summary.report does not hold a summary"));
            };
            let top = best
                .iter()
                .reduce(|a, b| if (b.auc, b.recall) > (a.auc, a.recall) { b } else { a })
                .ok_or_else(|| runtime("no grid cell succeeded"))?;
            named(&format!("{}.report", cells[top.cell]))
        }
    }
}

fn json(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn cmd_report(kind: ReportKind, path: &Path, top: usize, format: Format) -> Result<ExitCode, CliError> {
    let report = locate(kind, path)?;
    let as_json = format == Format::Json;
    let mismatch = || runtime(format!("{} does not hold this kind of report", path.display()));
    let out = match (kind, &report.body) {
        (ReportKind::Strata, ReportBody::Binary { result }) => {
            let rows = result.report.mortality_strata.as_ref().ok_or_else(mismatch)?;
            if as_json { json(rows) } else { render::strata(rows) }
        }
        (ReportKind::Cause, ReportBody::Binary { result }) => {
            let t = result.report.cause_strata.as_ref().ok_or_else(mismatch)?;
            if as_json { json(t) } else { render::cause(t) }
        }
        (ReportKind::Race, ReportBody::Race { groups }) => {
            if as_json { json(groups) } else { render::race(groups) }
        }
        (ReportKind::Importance, ReportBody::Importance { importance }) => {
            if as_json { json(&importance.top(top)) } else { render::importance(importance, top) }
        }
        (ReportKind::Grid, ReportBody::Summary { cells, .. }) => {
            let dir = path.parent().unwrap_or(Path::new("."));
            let dir = if path.is_dir() { path } else { dir };
            let mut outcomes = Vec::with_capacity(cells.len());
            for h in cells {
                let r = read(&dir.join(format!("{h}.report")))?;
                let spec = r.spec.ok_or_else(mismatch)?;
                let (result, failure) = match r.body {
                    ReportBody::Binary { result } => (Some(result), None),
                    ReportBody::Failed { reason } => (None, Some(reason)),
                    _ => return Err(mismatch()),
                };
                outcomes.push(birthrisk::experiments::CellOutcome { spec, result, failure });
            }
            if as_json { json(&outcomes) } else { render::grid(&outcomes) }
        }
        (ReportKind::Cv, ReportBody::Cv { search, .. }) => {
            if as_json { json(search) } else { render::cv(search) }
        }
        _ => return Err(mismatch()),
    };
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}
