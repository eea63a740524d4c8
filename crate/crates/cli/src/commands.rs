//! Command-line surface. Defaults follow the Riffgat settings: 10 min
//! panels and half-day correlation windows.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;
use windcorr_core::cleaning::{clean_power, ShutdownFill};
use windcorr_core::correlation::eigen;
use windcorr_core::io::{
    read_layout, read_matrix, read_panel, read_toml, write_labels, write_labels_to, write_layout,
    write_panel, write_panel_to,
};
use windcorr_core::simulator::simulate;
use windcorr_core::{
    DirectionBins, FarmLayout, LayoutConfig, Observable, SimulationSpec, Thresholds, WindowSpec,
};

use crate::export::{export_heatmap_data, write_heatmap_csv, write_ppm};
use crate::manifest::{FileHash, Manifest};
use crate::output::{StagedDir, StagedFiles};
use crate::pipeline::{run_pipeline, RunConfig, RunOptions};
use crate::stages::{
    bin_matrices, ingest_raw, parse_duration, read_matrices, reorder, window_mode, write_bins,
    write_eigen, write_matrices, CleanRule, ModeName,
};

#[derive(Debug, Parser)]
#[command(
    name = "windcorr",
    version,
    about = "Correlation analysis of wind-farm SCADA data"
)]
pub struct Cli {
    /// Configuration file (simulation config for `simulate`, run config for `run`)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed override for simulated data
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a raw long-format export into a panel
    Ingest(IngestArgs),
    /// Label missing power cells and fill them
    Classify(ClassifyArgs),
    /// Sliding-window correlation matrices
    Corr(CorrArgs),
    /// Eigenvalues and eigenvectors of one matrix
    Eigen(EigenArgs),
    /// Average matrices by wind-direction sector
    Binavg(BinavgArgs),
    /// Generate synthetic SCADA panels with ground truth
    Simulate(SimulateArgs),
    /// Heatmap export of a matrix
    Report(ReportArgs),
    /// Run the whole pipeline from a run config
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FillArg {
    Zero,
    LastValue,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, default_value = "power")]
    pub observable: Observable,
    /// Target time step
    #[arg(long, default_value = "10m")]
    pub step: String,
    #[arg(long, value_enum, default_value = "riffgat")]
    pub clean: CleanRule,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON report of cleaning counts
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Reorder turbines to this layout
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Layout TOML (default: layout path with .toml extension)
    #[arg(long)]
    pub farm_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub power: PathBuf,
    #[arg(long)]
    pub wind: PathBuf,
    /// TOML overriding any of the default thresholds
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[arg(long)]
    pub labels_out: PathBuf,
    #[arg(long)]
    pub filled_out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "last-value")]
    pub shutdown_fill: FillArg,
}

#[derive(Debug, Args)]
pub struct CorrArgs {
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long, default_value = "12h")]
    pub window: String,
    /// Window stride (required: overlapping and disjoint windows are both common)
    #[arg(long)]
    pub stride: String,
    #[arg(long, value_enum, default_value = "raw")]
    pub mode: ModeName,
    /// Singular values removed in reduced mode (1-based)
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub drop: Vec<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EigenArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BinavgArgs {
    /// Directory written by `corr`
    #[arg(long)]
    pub mats: PathBuf,
    #[arg(long)]
    pub wind_dir: PathBuf,
    #[arg(long)]
    pub wind_speed: Option<PathBuf>,
    #[arg(long)]
    pub layout: Option<PathBuf>,
    #[arg(long)]
    pub farm_config: Option<PathBuf>,
    /// Centre of the first sector in degrees, or `auto` for the layout's
    /// row-orthogonal bearing
    #[arg(long, default_value = "auto")]
    pub center0: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// Long-format CSV `row,col,value`
    #[arg(long)]
    pub out: PathBuf,
    /// Optional PPM bitmap
    #[arg(long)]
    pub ppm: Option<PathBuf>,
    /// Pixels per matrix cell
    #[arg(long, default_value_t = 16)]
    pub scale: usize,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub force: bool,
}

fn load_layout(csv: &Path, config: Option<&Path>) -> Result<FarmLayout> {
    let conf = config
        .map(Path::to_path_buf)
        .unwrap_or_else(|| csv.with_extension("toml"));
    let lc: LayoutConfig =
        read_toml(&conf).with_context(|| format!("reading {}", conf.display()))?;
    read_layout(csv, &lc).with_context(|| format!("reading {}", csv.display()))
}

fn panel(path: &Path, obs: Observable) -> Result<windcorr_core::SignalPanel> {
    read_panel(path, obs).with_context(|| format!("reading {}", path.display()))
}

/// Stages the sidecar `<first output>.manifest.json` and commits everything.
fn commit_with_manifest(
    mut files: StagedFiles,
    mut manifest: Manifest,
    anchor: &Path,
) -> Result<()> {
    manifest.outputs = files
        .hashes()?
        .into_iter()
        .map(|(path, sha256)| FileHash { path, sha256 })
        .collect();
    let text = manifest.to_json()?;
    let mut name = anchor.as_os_str().to_owned();
    name.push(".manifest.json");
    files.write(Path::new(&name), |w| Ok(w.write_all(text.as_bytes())?))?;
    files.commit()
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let step = parse_duration(&a.step)?;
    let (mut panel, report) = ingest_raw(&a.input, a.observable, step, a.clean)?;
    if let Some(l) = &a.layout {
        panel = reorder(
            &panel,
            &load_layout(l, a.farm_config.as_deref())?.turbine_ids,
        )?;
    }
    info!(
        "{} turbines × {} steps, {} missing",
        panel.n_turbines(),
        panel.n_steps(),
        panel.missing_count()
    );
    let mut m = Manifest::new(
        "ingest",
        json!({"observable": a.observable, "step_s": step, "clean": a.clean}),
    );
    m.add_input(&a.input)?;
    let mut files = StagedFiles::new();
    files.write(&a.out, |w| Ok(write_panel_to(&panel, w)?))?;
    if let Some(r) = &a.report {
        let text = serde_json::to_string_pretty(&report)? + "\n";
        files.write(r, |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    commit_with_manifest(files, m, &a.out)
}

pub fn classify(a: &ClassifyArgs) -> Result<()> {
    let power = panel(&a.power, Observable::ActivePower)?;
    let wind = panel(&a.wind, Observable::WindSpeed)?;
    let th: Thresholds = match &a.thresholds {
        Some(p) => read_toml(p).with_context(|| format!("reading {}", p.display()))?,
        None => Thresholds::default(),
    };
    let fill = match a.shutdown_fill {
        FillArg::Zero => ShutdownFill::Zero,
        FillArg::LastValue => ShutdownFill::LastValue,
    };
    let c = clean_power(&power, &wind, &th, fill)?;
    let r = &c.report;
    info!(
        "missing {} = failure {} + shutdown {} + unassigned {} ({} overrides)",
        r.missing_raw,
        r.classified_failure,
        r.classified_shutdown,
        r.unassigned,
        r.failure_overrides
    );
    let mut m = Manifest::new("classify", json!({"thresholds": th, "shutdown_fill": fill}));
    m.add_input(&a.power)?;
    m.add_input(&a.wind)?;
    if let Some(p) = &a.thresholds {
        m.add_input(p)?;
    }
    let mut files = StagedFiles::new();
    files.write(&a.labels_out, |w| Ok(write_labels_to(&c.labels, w)?))?;
    files.write(&a.filled_out, |w| Ok(write_panel_to(&c.filled, w)?))?;
    if let Some(p) = &a.report {
        let text = serde_json::to_string_pretty(&c.report)? + "\n";
        files.write(p, |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    commit_with_manifest(files, m, &a.labels_out)
}

pub fn corr(a: &CorrArgs) -> Result<()> {
    let p = read_panel(&a.panel, Observable::ActivePower)
        .with_context(|| format!("reading {}", a.panel.display()))?;
    let spec = WindowSpec::new(parse_duration(&a.window)?, parse_duration(&a.stride)?);
    let mode = window_mode(a.mode, &a.drop);
    let outcomes = windcorr_core::correlation::sliding_correlations(&p, spec, &mode)?;
    let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    info!("{} windows, {failed} placeholders", outcomes.len());
    let staged = StagedDir::new(&a.out_dir, a.force)?;
    write_matrices(
        staged.path(),
        &outcomes,
        spec,
        p.step,
        &mode,
        &p.turbine_ids,
    )?;
    let mut m = Manifest::new(
        "corr",
        json!({"window_s": spec.length, "stride_s": spec.stride, "mode": mode}),
    );
    m.add_input(&a.panel)?;
    m.finish(staged.path())?;
    staged.commit()?;
    Ok(())
}

pub fn eigen_cmd(a: &EigenArgs) -> Result<()> {
    let (ids, m) = read_matrix(&a.matrix)?;
    let e = eigen(&m)?;
    let mut manifest = Manifest::new("eigen", json!({}));
    manifest.add_input(&a.matrix)?;
    let mut files = StagedFiles::new();
    files.write(&a.out, |w| write_eigen(&ids, &e, w))?;
    commit_with_manifest(files, manifest, &a.out)
}

fn parse_center0(s: &str) -> Result<Option<f64>> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| anyhow!("--center0 must be `auto` or degrees, got `{s}`"))?;
    if !v.is_finite() {
        bail!("--center0 must be finite");
    }
    Ok(Some(v))
}

pub fn binavg(a: &BinavgArgs) -> Result<()> {
    let layout = a
        .layout
        .as_deref()
        .map(|l| load_layout(l, a.farm_config.as_deref()))
        .transpose()?;
    let bins = match (parse_center0(&a.center0)?, &layout) {
        (Some(c), _) => DirectionBins::new(c),
        (None, Some(l)) => DirectionBins::for_layout(l),
        (None, None) => bail!("--center0 auto needs --layout"),
    };
    let matrices = read_matrices(&a.mats)?;
    let mut wd = panel(&a.wind_dir, Observable::WindDirection)?;
    let mut ws = a
        .wind_speed
        .as_deref()
        .map(|p| panel(p, Observable::WindSpeed))
        .transpose()?;
    if let Some(first) = matrices.first() {
        wd = reorder(&wd, &first.ids).context("wind direction panel")?;
        ws = ws
            .map(|p| reorder(&p, &first.ids).context("wind speed panel"))
            .transpose()?;
    }
    let binned = bin_matrices(matrices, &wd, ws.as_ref(), bins)?;
    info!(
        "{} windows binned, {} excluded",
        binned.assigned(),
        binned.excluded
    );
    let staged = StagedDir::new(&a.out, a.force)?;
    write_bins(staged.path(), &binned)?;
    let mut m = Manifest::new("binavg", json!({"center0_deg": bins.center0}));
    m.add_input(&a.mats.join(crate::stages::INDEX_NAME))?;
    m.add_input(&a.wind_dir)?;
    if let Some(p) = &a.wind_speed {
        m.add_input(p)?;
    }
    if let Some(p) = &a.layout {
        m.add_input(p)?;
    }
    m.finish(staged.path())?;
    staged.commit()?;
    Ok(())
}

pub fn simulate_cmd(config: Option<&Path>, seed: Option<u64>, a: &SimulateArgs) -> Result<()> {
    let path = config.ok_or_else(|| anyhow!("simulate needs --config <simulation TOML>"))?;
    let spec: SimulationSpec =
        read_toml(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = spec.into_config(path.parent().unwrap_or(Path::new("")))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = simulate(&cfg)?;
    let staged = StagedDir::new(&a.out_dir, a.force)?;
    let dir = staged.path();
    write_panel(&out.power, &dir.join("power.csv"))?;
    write_panel(&out.wind_speed, &dir.join("wind_speed.csv"))?;
    write_panel(&out.wind_direction, &dir.join("wind_direction.csv"))?;
    write_labels(&out.truth, &dir.join("truth_labels.csv"))?;
    write_layout(
        &cfg.layout,
        &dir.join("layout.csv"),
        &dir.join("layout.toml"),
    )?;
    let mut m = Manifest::new("simulate", json!({"seed": cfg.seed}));
    m.add_input(path)?;
    m.finish(dir)?;
    staged.commit()?;
    Ok(())
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let (ids, m) = read_matrix(&a.matrix)?;
    let cells = export_heatmap_data(&ids, &m);
    let mut manifest = Manifest::new("report", json!({"scale": a.scale}));
    manifest.add_input(&a.matrix)?;
    let mut files = StagedFiles::new();
    files.write(&a.out, |w| write_heatmap_csv(&cells, w))?;
    if let Some(p) = &a.ppm {
        files.write(p, |w| write_ppm(&m, a.scale, w))?;
    }
    commit_with_manifest(files, manifest, &a.out)
}

pub fn run_cmd(config: Option<&Path>, seed: Option<u64>, a: &RunArgs) -> Result<()> {
    let path = config.ok_or_else(|| anyhow!("run needs --config <run TOML>"))?;
    let (cfg, base) = RunConfig::load(path)?;
    let s = run_pipeline(
        &cfg,
        &base,
        &RunOptions {
            force: a.force,
            seed,
        },
    )?;
    info!(
        "{} windows ({} placeholders) written to {}",
        s.windows,
        s.placeholders,
        s.output_dir.display()
    );
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Classify(a) => classify(a),
        Command::Corr(a) => corr(a),
        Command::Eigen(a) => eigen_cmd(a),
        Command::Binavg(a) => binavg(a),
        Command::Simulate(a) => simulate_cmd(config, cli.seed, a),
        Command::Report(a) => report(a),
        Command::Run(a) => run_cmd(config, cli.seed, a),
    }
}
