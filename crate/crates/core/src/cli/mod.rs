//! Command-line front end.
//!
//! Every configuration key can come from a `key = value` file given with
//! `--config` and be overridden by a flag of the same name. Each command
//! writes its outputs plus `run_metadata.json` into the output directory.

pub mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Arg, ArgAction, ArgMatches, Command};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::{load_dataset, load_raster, write_raster, Dataset, RasterGrid};
use crate::design::{expand_terms, write_drop_log, DesignMatrix};
use crate::ensemble::{
    run_pipeline, selection_frequency, subset_size_histogram, sweep, write_frequency_csv,
    write_histogram_csv, write_summary_csv, PipelineRun,
};
use crate::error::{Error, ErrorClass, Result};
use crate::realign::{realign_dataset, RealignedTable};
use crate::spatial::{build_pixel_rows, predict_full_cover, residuals, spatial_ensemble, summarize_stack};

pub use config::{RawConfig, RunConfig, KEYS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Config => EXIT_CONFIG,
        ErrorClass::Data => EXIT_DATA,
        ErrorClass::Numeric => EXIT_NUMERIC,
    }
}

fn command() -> Command {
    let mut cmd = Command::new("covinterp")
        .about("Covariate-assisted spatial interpolation with LASSO model averaging")
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("key = value configuration file"),
        )
        .arg(
            Arg::new("threads")
                .long("threads")
                .global(true)
                .value_name("N")
                .value_parser(clap::value_parser!(usize))
                .help("worker threads (default: available parallelism)"),
        );
    for k in KEYS {
        cmd = cmd.arg(
            Arg::new(k.name)
                .long(k.name)
                .global(true)
                .value_name("VALUE")
                .action(ArgAction::Set)
                .help(k.help),
        );
    }
    cmd.subcommands([
        Command::new("realign").about("Realign covariates onto blocks around each observation"),
        Command::new("expand").about("Expand and correlation-filter the design"),
        Command::new("select").about("Run the split ensemble and write selection reports"),
        Command::new("sweep").about("Tabulate ensemble summaries over training sizes and thresholds"),
        Command::new("predict").about("Produce prediction and uncertainty rasters"),
    ])
}

fn resolve_config(m: &ArgMatches) -> Result<RunConfig> {
    let mut raw = RawConfig::defaults();
    if let Some(path) = m.get_one::<String>("config") {
        raw.load_file(Path::new(path))?;
    }
    for k in KEYS {
        if let Some(v) = m.get_one::<String>(k.name) {
            raw.set(k.name, v).map_err(|e| Error::Config(vec![e]))?;
        }
    }
    RunConfig::from_raw(&raw)
}

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (name, _) = matches.subcommand().expect("subcommand required");
    let result = resolve_config(&matches).and_then(|cfg| {
        let threads = matches.get_one::<usize>("threads").copied().unwrap_or(0);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(vec![format!("threads: {e}")]))?;
        pool.install(|| dispatch(name, &cfg))
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn dispatch(name: &str, cfg: &RunConfig) -> Result<()> {
    match name {
        "realign" => cmd_realign(cfg),
        "expand" => cmd_expand(cfg),
        "select" => cmd_select(cfg),
        "sweep" => cmd_sweep(cfg),
        "predict" => cmd_predict(cfg),
        other => Err(Error::Config(vec![format!("unknown command `{other}`")])),
    }
}

#[derive(Serialize)]
struct StageTime {
    stage: String,
    seconds: f64,
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    config_hash: &'a str,
    seed: Option<u64>,
    outputs: Vec<String>,
    stages: Vec<StageTime>,
}

/// Output bookkeeping for one command.
struct Run<'a> {
    cfg: &'a RunConfig,
    command: &'static str,
    outputs: Vec<String>,
    stages: Vec<StageTime>,
    clock: Instant,
}

impl<'a> Run<'a> {
    fn start(cfg: &'a RunConfig, command: &'static str) -> Result<Self> {
        std::fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
        Ok(Self {
            cfg,
            command,
            outputs: Vec::new(),
            stages: Vec::new(),
            clock: Instant::now(),
        })
    }

    fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.stages.push(StageTime {
            stage: name.to_string(),
            seconds: (now - self.clock).as_secs_f64(),
        });
        log::info!("{}: {name} done", self.command);
        self.clock = now;
    }

    fn path(&mut self, file: &str) -> PathBuf {
        self.outputs.push(file.to_string());
        self.cfg.output.join(file)
    }

    fn finish(self) -> Result<()> {
        let meta = Metadata {
            command: self.command,
            config_hash: &self.cfg.hash,
            seed: self.cfg.seed,
            outputs: self.outputs,
            stages: self.stages,
        };
        let path = self.cfg.output.join("run_metadata.json");
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn load(cfg: &RunConfig) -> Result<Dataset> {
    load_dataset(&cfg.manifest, cfg.response.as_deref())
}

fn expanded(cfg: &RunConfig, ds: &Dataset, table: &RealignedTable) -> Result<DesignMatrix> {
    expand_terms(
        &table.values,
        &table.names,
        &ds.priority_ranks(),
        cfg.max_order,
        cfg.pairwise,
    )
}

fn leading(table: &RealignedTable, y: &[f64]) -> Vec<(&'static str, Vec<f64>)> {
    vec![
        ("easting", table.locations.iter().map(|p| p.easting).collect()),
        ("northing", table.locations.iter().map(|p| p.northing).collect()),
        ("response", y.to_vec()),
    ]
}

pub fn cmd_realign(cfg: &RunConfig) -> Result<()> {
    let mut run = Run::start(cfg, "realign")?;
    let ds = load(cfg)?;
    run.stage("load");
    let table = realign_dataset(&ds, &cfg.realign)?;
    table.write_csv(&run.path("realigned.csv"), &ds.response_values())?;
    run.stage("realign");
    run.finish()
}

pub fn cmd_expand(cfg: &RunConfig) -> Result<()> {
    let mut run = Run::start(cfg, "expand")?;
    let seed = cfg.seed.unwrap_or(0);
    let ds = load(cfg)?;
    let table = realign_dataset(&ds, &cfg.realign)?;
    run.stage("realign");
    let full = expanded(cfg, &ds, &table)?;
    let (filtered, drops) = crate::design::prefilter_mccm(
        &full,
        cfg.mccm,
        crate::ensemble::derive_seed(seed, crate::ensemble::STREAM_MCCM),
    )?;
    let y = ds.response_values();
    filtered.write_csv(&run.path("design.csv"), &leading(&table, &y))?;
    write_drop_log(&run.path("drop_log.csv"), &drops)?;
    run.stage("expand");
    run.finish()
}

fn covariate_stage(cfg: &RunConfig, run: &mut Run<'_>) -> Result<(Dataset, RealignedTable, PipelineRun)> {
    let seed = cfg.require_seed()?;
    let ds = load(cfg)?;
    let table = realign_dataset(&ds, &cfg.realign)?;
    run.stage("realign");
    let full = expanded(cfg, &ds, &table)?;
    let y = ds.response_values();
    let pipeline = run_pipeline(&full, &y, cfg.mccm, &cfg.cv, seed)?;
    run.stage("covariate ensemble");
    Ok((ds, table, pipeline))
}

fn write_selection_reports(run: &mut Run<'_>, p: &PipelineRun, prefix: &str) -> Result<()> {
    p.ensemble.write_report(&run.path(&format!("{prefix}ensemble_report.csv")))?;
    let labels = p.design.labels();
    let freq = selection_frequency(&p.ensemble, labels.len(), false);
    write_frequency_csv(&run.path(&format!("{prefix}frequency.csv")), &freq, &labels)?;
    write_histogram_csv(
        &run.path(&format!("{prefix}size_histogram.csv")),
        &subset_size_histogram(&p.ensemble),
    )
}

pub fn cmd_select(cfg: &RunConfig) -> Result<()> {
    let mut run = Run::start(cfg, "select")?;
    let (_, _, p) = covariate_stage(cfg, &mut run)?;
    write_selection_reports(&mut run, &p, "")?;
    write_summary_csv(&run.path("vsepe_summary.csv"), std::slice::from_ref(&p.row), false)?;
    write_drop_log(&run.path("drop_log.csv"), &p.drops)?;
    run.stage("reports");
    run.finish()
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let mut run = Run::start(cfg, "sweep")?;
    let seed = cfg.require_seed()?;
    let ds = load(cfg)?;
    let table = realign_dataset(&ds, &cfg.realign)?;
    run.stage("realign");
    let full = expanded(cfg, &ds, &table)?;
    let configs: Vec<(usize, f64)> = cfg
        .sweep_train_sizes
        .iter()
        .flat_map(|&t| cfg.sweep_mccm.iter().map(move |&m| (t, m)))
        .collect();
    let rows = sweep(&full, &ds.response_values(), &configs, &cfg.cv, seed)?;
    run.stage("sweep");
    write_summary_csv(&run.path("sweep.csv"), &rows, true)?;
    run.finish()
}

fn template_grid(cfg: &RunConfig, ds: &Dataset) -> Result<RasterGrid> {
    match &cfg.template {
        Some(path) => {
            let path = if path.is_relative() && !path.exists() {
                cfg.manifest.parent().unwrap_or(Path::new(".")).join(path)
            } else {
                path.clone()
            };
            load_raster(path)
        }
        None => ds
            .raster_covariates
            .first()
            .map(|r| r.grid.clone())
            .ok_or_else(|| {
                Error::Config(vec![
                    "template: required when the manifest has no raster covariate".into(),
                ])
            }),
    }
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<()> {
    let mut run = Run::start(cfg, "predict")?;
    let seed = cfg.require_seed()?;
    let (ds, table, cov) = covariate_stage(cfg, &mut run)?;
    let y = ds.response_values();

    let r = residuals(&cov.ensemble, &cov.design.values, &y)?;
    let spat = spatial_ensemble(&table.locations, &r, &cov.splits, &cfg.spatial, seed)?;
    run.stage("spatial ensemble");

    let grid = template_grid(cfg, &ds)?;
    let pixels = build_pixel_rows(&ds, &grid, &cfg.realign)?;
    let cov_rows = DesignMatrix::from_terms(cov.design.columns.clone(), &pixels.values).values;
    let centers: Vec<_> = pixels.pixels.iter().map(|&k| pixels.centers[k]).collect();
    let spat_rows: DMatrix<f64> = spat.design_at(&centers);
    run.stage("pixel rows");

    let stack = predict_full_cover(
        &cov.ensemble,
        &spat.ensemble,
        &cov_rows,
        &spat_rows,
        grid,
        pixels.pixels.clone(),
        cfg.pairing,
    )?;
    let out = summarize_stack(&stack, cfg.central)?;
    run.stage("prediction");

    write_raster(run.path("prediction.asc"), &out.prediction)?;
    write_raster(run.path("uncertainty.asc"), &out.uncertainty)?;
    write_selection_reports(&mut run, &cov, "")?;
    spat.ensemble.write_report(&run.path("spatial_ensemble_report.csv"))?;
    if cfg.dump_members {
        stack.write_members_csv(&run.path("members.csv"))?;
    }
    if !pixels.failures.is_empty() {
        log::warn!("{} pixels left as nodata", pixels.failures.len());
    }
    run.stage("write");
    run.finish()
}
