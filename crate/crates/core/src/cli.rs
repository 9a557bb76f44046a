//! The `mrcast` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::curate::{curate, CurationPolicy};
use crate::dataops::{Split, SplitFractions};
use crate::decode::{decode_batch, ForecastBundle};
use crate::dedup::{deduplicate, DedupConfig, DedupItem};
use crate::error::{Error, Result};
use crate::eval::{aggregate, evaluate_horizons, naive_forecast, seasonal_naive_forecast, AggregationMode, MetricReport};
use crate::io::{
    load_checkpoint, read_forecasts, read_series_jsonl, read_shard, shard::manifest_path, write_forecasts, write_series_jsonl, write_shard,
    ForecastRecord, ShardManifest,
};
use crate::manifest::{sha256_hex, RunManifest};
use crate::model::{ModelConfig, ModelParams, Variant};
use crate::plot::render_window_svg;
use crate::series::MultiResWindow;
use crate::synth::{generate_corpus, SynthConfig};
use crate::train::{train, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "mrcast", version, about = "Multiresolution time-series forecasting pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus as series JSONL.
    Synth(SynthArgs),
    /// Cut, split, filter and rebalance windows into a shard.
    Curate(CurateArgs),
    /// SimHash-cluster the training windows of a shard and equalize cluster sizes.
    Dedup(DedupArgs),
    /// Train a model and keep the checkpoint with the lowest validation loss.
    Train(TrainArgs),
    /// Decode forecasts for the windows of a shard.
    Forecast(ForecastArgs),
    /// Score forecasts against a baseline.
    Evaluate(EvaluateArgs),
    /// Render a window (and optionally its forecast) as SVG.
    Plot(PlotArgs),
    /// Train and score all four context-fusion variants on one shard.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    count: usize,
    #[arg(long)]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    sawtooth_fraction: f64,
    #[arg(long, default_value_t = 5)]
    max_kernels: usize,
}

#[derive(Args, Debug)]
struct CurateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Curation policy JSON; defaults apply when omitted.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value = "0.8,0.1,0.1")]
    splits: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct DedupArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = crate::dedup::DEFAULT_BITS)]
    bits: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: PathBuf,
    /// Worker shards for hashing; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    shards: usize,
    /// Cluster-size target; defaults to the median size of the larger half of clusters.
    #[arg(long)]
    target: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// A shard file or a directory of `.bin` shards.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
    All,
}

impl SplitArg {
    fn matches(self, split: Option<Split>) -> bool {
        match self {
            SplitArg::All => true,
            SplitArg::Train => split == Some(Split::Train),
            SplitArg::Validation => split == Some(Split::Validation),
            SplitArg::Test => split == Some(Split::Test),
        }
    }
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Decode steps; defaults to enough output patches to cover the horizon.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaselineArg {
    Naive,
    SeasonalNaive,
}

impl BaselineArg {
    fn name(self) -> &'static str {
        match self {
            BaselineArg::Naive => "naive",
            BaselineArg::SeasonalNaive => "seasonal-naive",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    #[value(name = "A", alias = "a")]
    A,
    #[value(name = "B", alias = "b")]
    B,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    forecasts: PathBuf,
    #[arg(long)]
    windows: PathBuf,
    #[arg(long, value_enum, default_value = "naive")]
    baseline: BaselineArg,
    #[arg(long, default_value_t = 1)]
    season: usize,
    #[arg(long, value_enum, default_value = "A")]
    mode: ModeArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long)]
    windows: PathBuf,
    /// Window id; defaults to the first window.
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    forecasts: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    season: usize,
}

/// Model and optimizer settings read by `train` and `ablate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct TrainSpec {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn require_file(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{} does not exist", path.display())))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    require_file(path)?;
    serde_json::from_slice(&std::fs::read(path)?).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn run_manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("run.json")
    } else {
        let mut name = out.as_os_str().to_owned();
        name.push(".run.json");
        PathBuf::from(name)
    }
}

fn finish_manifest(mut manifest: RunManifest, out: &Path, started: Instant) -> Result<()> {
    manifest.finish(started.elapsed().as_secs_f64())?;
    manifest.write(&run_manifest_path(out))
}

fn parse_splits(s: &str) -> Result<SplitFractions> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidArgument(format!("--splits expects three comma-separated numbers, got `{s}`")))?;
    match parts[..] {
        [a, b, c] => SplitFractions::new(a, b, c),
        _ => Err(Error::InvalidArgument(format!("--splits expects three values, got {}", parts.len()))),
    }
}

fn shard_files(data: &Path) -> Result<Vec<PathBuf>> {
    require_file(data)?;
    if data.is_file() {
        return Ok(vec![data.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(data)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!("no .bin shards in {}", data.display())));
    }
    Ok(files)
}

fn load_windows(data: &Path) -> Result<Vec<(MultiResWindow, Option<Split>)>> {
    let mut out = Vec::new();
    for f in shard_files(data)? {
        out.extend(read_shard(&f)?);
    }
    Ok(out)
}

fn split_of(windows: &[(MultiResWindow, Option<Split>)], split: Split) -> Vec<MultiResWindow> {
    windows.iter().filter(|(_, s)| *s == Some(split)).map(|(w, _)| w.clone()).collect()
}

fn shard_manifest(windows: &[MultiResWindow], splits: &[Option<Split>], policy_hash: String, seed: u64) -> ShardManifest {
    let count = |s: Split| splits.iter().filter(|l| **l == Some(s)).count();
    let first = windows.first();
    ShardManifest {
        format_version: 1,
        windows: windows.len(),
        train: count(Split::Train),
        validation: count(Split::Validation),
        test: count(Split::Test),
        unassigned: splits.iter().filter(|l| l.is_none()).count(),
        context_len: first.map_or(0, |w| w.context_len()),
        horizon_len: first.map_or(0, |w| w.horizon_len()),
        ratio: first.map_or(0, |w| w.ratio),
        policy_hash,
        seed,
    }
}

fn write_shard_with_manifest(path: &Path, windows: &[MultiResWindow], splits: &[Option<Split>], policy_hash: String, seed: u64) -> Result<()> {
    write_shard(path, windows, splits)?;
    let manifest = shard_manifest(windows, splits, policy_hash, seed);
    std::fs::write(manifest_path(path), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let started = Instant::now();
    let config = SynthConfig { count: a.count, length: a.length, seed: a.seed, sawtooth_fraction: a.sawtooth_fraction, max_kernels: a.max_kernels };
    let corpus = generate_corpus(&config)?;
    write_series_jsonl(&a.out, &corpus)?;
    let mut m = RunManifest::new("synth");
    m.arg("count", a.count).arg("length", a.length).arg("out", a.out.display()).arg("sawtooth_fraction", a.sawtooth_fraction).arg("max_kernels", a.max_kernels);
    m.seed("seed", a.seed).output(&a.out)?;
    finish_manifest(m, &a.out, started)
}

fn cmd_curate(a: &CurateArgs) -> Result<()> {
    let started = Instant::now();
    require_file(&a.input)?;
    let policy: CurationPolicy = match &a.policy {
        Some(p) => read_json(p)?,
        None => CurationPolicy::default(),
    };
    let fractions = parse_splits(&a.splits)?;
    let series = read_series_jsonl(&a.input)?;
    let curated = curate(&series, &policy, a.stride, fractions, a.seed)?;
    log::info!("curation summary: {}", serde_json::to_string(&curated.summary)?);
    let policy_hash = sha256_hex(&serde_json::to_vec(&policy)?);
    write_shard_with_manifest(&a.out, &curated.windows, &curated.splits, policy_hash, a.seed)?;
    let mut m = RunManifest::new("curate");
    m.arg("in", a.input.display()).arg("out", a.out.display()).arg("stride", a.stride).arg("splits", &a.splits);
    m.seed("seed", a.seed).config("policy", &policy)?.input(&a.input)?.output(&a.out)?.output(&manifest_path(&a.out))?;
    finish_manifest(m, &a.out, started)
}

fn cmd_dedup(a: &DedupArgs) -> Result<()> {
    let started = Instant::now();
    require_file(&a.input)?;
    let windows = read_shard(&a.input)?;
    let train_idx: Vec<usize> = (0..windows.len()).filter(|&i| windows[i].1 == Some(Split::Train)).collect();
    let items: Vec<DedupItem> = train_idx.iter().map(|&i| DedupItem::from_window(&windows[i].0)).collect();
    let config = DedupConfig { bits: a.bits, target: a.target, ..Default::default() };
    let (kept, report) = deduplicate(&items, &config, a.seed, a.shards.max(1))?;
    let mut keep = vec![true; windows.len()];
    for &i in &train_idx {
        keep[i] = false;
    }
    for k in kept {
        keep[train_idx[k]] = true;
    }
    let (out_windows, out_splits): (Vec<_>, Vec<_>) = windows.into_iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p).unzip();
    let input_manifest: Option<ShardManifest> = std::fs::read(manifest_path(&a.input)).ok().and_then(|b| serde_json::from_slice(&b).ok());
    let policy_hash = input_manifest.map(|m| m.policy_hash).unwrap_or_default();
    write_shard_with_manifest(&a.out, &out_windows, &out_splits, policy_hash, a.seed)?;
    std::fs::write(&a.report, serde_json::to_vec_pretty(&report)?)?;
    let mut m = RunManifest::new("dedup");
    m.arg("in", a.input.display()).arg("out", a.out.display()).arg("bits", a.bits).arg("report", a.report.display());
    if let Some(t) = a.target {
        m.arg("target", t);
    }
    m.seed("seed", a.seed).config("dedup", &config)?.input(&a.input)?.output(&a.out)?.output(&a.report)?;
    finish_manifest(m, &a.out, started)
}

fn check_geometry(config: &ModelConfig, windows: &[MultiResWindow]) -> Result<()> {
    if let Some(w) = windows.iter().find(|w| w.context_len() != config.context_len) {
        return Err(Error::Shape(format!("window {} has context length {}, model expects {}", w.meta.id, w.context_len(), config.context_len)));
    }
    Ok(())
}

fn load_spec(path: &Path, seed: Option<u64>) -> Result<TrainSpec> {
    let mut spec: TrainSpec = read_json(path)?;
    if let Some(s) = seed {
        spec.train.seed = s;
    }
    spec.model.validate()?;
    spec.train.validate()?;
    Ok(spec)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let started = Instant::now();
    let spec = load_spec(&a.config, a.seed)?;
    let windows = load_windows(&a.data)?;
    let (train_set, validation) = (split_of(&windows, Split::Train), split_of(&windows, Split::Validation));
    check_geometry(&spec.model, &train_set)?;
    check_geometry(&spec.model, &validation)?;
    if a.out.join("run.json").exists() {
        std::fs::remove_file(a.out.join("run.json"))?;
    }
    std::fs::create_dir_all(&a.out)?;
    let init = ModelParams::init(&spec.model, spec.train.seed);
    let outcome = train(&train_set, &validation, init, &spec.model, &spec.train, Some(&a.out))?;
    std::fs::write(a.out.join("history.json"), serde_json::to_vec_pretty(&outcome.history)?)?;
    log::info!("selected epoch {} of {}", outcome.best_epoch, outcome.history.len());
    let mut m = RunManifest::new("train");
    m.arg("data", a.data.display()).arg("out", a.out.display()).arg("config", a.config.display());
    m.seed("seed", spec.train.seed).config("train_spec", &spec)?;
    for f in shard_files(&a.data)? {
        m.input(&f)?;
    }
    m.output(&a.out)?;
    finish_manifest(m, &a.out, started)
}

fn forecast_windows(params: &ModelParams, config: &ModelConfig, windows: &[MultiResWindow], steps: Option<usize>) -> Result<Vec<ForecastBundle>> {
    check_geometry(config, windows)?;
    let horizon = windows.iter().map(|w| w.horizon_len()).max().unwrap_or(config.output_patch_len);
    let steps = steps.unwrap_or_else(|| horizon.div_ceil(config.output_patch_len).max(1));
    decode_batch(windows, params, config, steps)
}

fn cmd_forecast(a: &ForecastArgs) -> Result<()> {
    let started = Instant::now();
    require_file(&a.ckpt)?;
    require_file(&a.input)?;
    let ck = load_checkpoint(&a.ckpt)?;
    let windows: Vec<MultiResWindow> = read_shard(&a.input)?.into_iter().filter(|(_, s)| a.split.matches(*s)).map(|(w, _)| w).collect();
    let bundles = forecast_windows(&ck.params, &ck.config, &windows, a.steps)?;
    let records: Vec<ForecastRecord> = windows.iter().zip(&bundles).map(|(w, b)| ForecastRecord::from_bundle(w.meta.id.clone(), b)).collect();
    write_forecasts(&a.out, &records)?;
    let mut m = RunManifest::new("forecast");
    m.arg("ckpt", a.ckpt.display()).arg("in", a.input.display()).arg("out", a.out.display()).arg("split", format!("{:?}", a.split));
    if let Some(s) = a.steps {
        m.arg("steps", s);
    }
    m.input(&a.ckpt)?.input(&a.input)?.output(&a.out)?;
    finish_manifest(m, &a.out, started)
}

fn baseline_bundles(windows: &[MultiResWindow], baseline: BaselineArg, season: usize, levels: &[f64]) -> Result<Vec<ForecastBundle>> {
    windows
        .iter()
        .map(|w| match baseline {
            BaselineArg::Naive => naive_forecast(w, w.horizon_len(), levels),
            BaselineArg::SeasonalNaive => seasonal_naive_forecast(w, season, w.horizon_len(), levels),
        })
        .collect()
}

fn score(forecasts: &[ForecastBundle], windows: &[MultiResWindow], baseline: BaselineArg, season: usize, mode: AggregationMode) -> Result<MetricReport> {
    let levels = forecasts.first().map(|f| f.levels.clone()).unwrap_or_else(crate::model::default_quantiles);
    let model = evaluate_horizons(forecasts, windows, season)?;
    let base = evaluate_horizons(&baseline_bundles(windows, baseline, season, &levels)?, windows, season)?;
    aggregate(&model, &base, mode, baseline.name())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let started = Instant::now();
    require_file(&a.forecasts)?;
    require_file(&a.windows)?;
    let records = read_forecasts(&a.forecasts)?;
    let by_id: BTreeMap<String, MultiResWindow> = read_shard(&a.windows)?.into_iter().map(|(w, _)| (w.meta.id.clone(), w)).collect();
    let mut windows = Vec::with_capacity(records.len());
    let mut bundles = Vec::with_capacity(records.len());
    for r in &records {
        let w = by_id.get(&r.id).ok_or_else(|| Error::Format(format!("forecast `{}` has no matching window", r.id)))?;
        windows.push(w.clone());
        bundles.push(r.to_bundle()?);
    }
    let mode = match a.mode {
        ModeArg::A => AggregationMode::ArithmeticNormalized,
        ModeArg::B => AggregationMode::ShiftedGeometric,
    };
    let report = score(&bundles, &windows, a.baseline, a.season, mode)?;
    std::fs::write(&a.out, serde_json::to_vec_pretty(&report)?)?;
    let mut m = RunManifest::new("evaluate");
    m.arg("forecasts", a.forecasts.display()).arg("windows", a.windows.display()).arg("baseline", a.baseline.name());
    m.arg("season", a.season).arg("mode", format!("{:?}", a.mode)).arg("out", a.out.display());
    m.input(&a.forecasts)?.input(&a.windows)?.output(&a.out)?;
    finish_manifest(m, &a.out, started)
}

fn cmd_plot(a: &PlotArgs) -> Result<()> {
    require_file(&a.windows)?;
    let windows = read_shard(&a.windows)?;
    let (window, _) = match &a.id {
        Some(id) => windows.iter().find(|(w, _)| &w.meta.id == id).ok_or_else(|| Error::InvalidArgument(format!("no window with id `{id}`")))?,
        None => windows.first().ok_or_else(|| Error::InvalidArgument("shard holds no windows".into()))?,
    };
    let forecast = match &a.forecasts {
        Some(p) => {
            require_file(p)?;
            read_forecasts(p)?.into_iter().find(|r| r.id == window.meta.id).map(|r| r.to_bundle()).transpose()?
        }
        None => None,
    };
    std::fs::write(&a.out, render_window_svg(window, forecast.as_ref()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub best_epoch: Option<usize>,
    pub validation_loss: Option<f64>,
    pub normalized: BTreeMap<String, Option<f64>>,
    pub raw: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub baseline: String,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_text(&self) -> String {
        let cols = ["mae", "mase", "smape", "msis", "crps"];
        let mut s = format!("{:<16}", "variant");
        for c in cols {
            s.push_str(&format!("{c:>10}"));
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("{:<16}", r.name));
            for c in cols {
                match r.normalized.get(c).copied().flatten() {
                    Some(v) => s.push_str(&format!("{v:>10.4}")),
                    None => s.push_str(&format!("{:>10}", "-")),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Trains every variant on the same data and seed, then scores each on the
/// test split against the naive baseline. The last row is the baseline itself.
pub fn run_ablation(windows: &[(MultiResWindow, Option<Split>)], spec: &TrainSpec, steps: Option<usize>, season: usize) -> Result<AblationTable> {
    let (train_set, validation, test) = (split_of(windows, Split::Train), split_of(windows, Split::Validation), split_of(windows, Split::Test));
    if test.is_empty() {
        return Err(Error::InsufficientSplit("ablation needs test windows".into()));
    }
    check_geometry(&spec.model, &train_set)?;
    let mut rows = Vec::new();
    let mut baseline_report = None;
    for variant in Variant::ALL {
        let config = ModelConfig { variant, ..spec.model.clone() };
        let init = ModelParams::init(&config, spec.train.seed);
        let outcome = train(&train_set, &validation, init, &config, &spec.train, None)?;
        let forecasts = forecast_windows(&outcome.best, &config, &test, steps)?;
        let report = score(&forecasts, &test, BaselineArg::Naive, season, AggregationMode::ArithmeticNormalized)?;
        rows.push(AblationRow {
            name: variant.name().to_string(),
            best_epoch: Some(outcome.best_epoch),
            validation_loss: Some(outcome.history[outcome.best_epoch].validation_loss),
            normalized: report.normalized.clone(),
            raw: report.model_raw.clone(),
        });
        baseline_report.get_or_insert(report);
    }
    let base = baseline_report.expect("four variants ran");
    rows.push(AblationRow {
        name: "naive".into(),
        best_epoch: None,
        validation_loss: None,
        normalized: base.baseline_raw.iter().map(|(k, v)| (k.clone(), v.map(|_| 1.0))).collect(),
        raw: base.baseline_raw.clone(),
    });
    Ok(AblationTable { baseline: "naive".into(), rows })
}

fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let started = Instant::now();
    let spec = load_spec(&a.config, a.seed)?;
    let windows = load_windows(&a.data)?;
    let table = run_ablation(&windows, &spec, a.steps, a.season)?;
    print!("{}", table.to_text());
    std::fs::write(&a.out, serde_json::to_vec_pretty(&table)?)?;
    let mut m = RunManifest::new("ablate");
    m.arg("data", a.data.display()).arg("config", a.config.display()).arg("out", a.out.display()).arg("season", a.season);
    m.seed("seed", spec.train.seed).config("train_spec", &spec)?.output(&a.out)?;
    finish_manifest(m, &a.out, started)
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Curate(a) => cmd_curate(a),
        Command::Dedup(a) => cmd_dedup(a),
        Command::Train(a) => cmd_train(a),
        Command::Forecast(a) => cmd_forecast(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Ablate(a) => cmd_ablate(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
