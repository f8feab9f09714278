//! Subcommand implementations. Each writes its artifacts plus one manifest
//! into the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use nof1_core::data::{load_dataset, save_dataset, DataFormat, Dataset, PairKey};
use nof1_core::generator::{fingerprint, generate, load_ground_truth, save_ground_truth};
use nof1_core::harness::{
    contraction_trace, evaluate_single, monte_carlo, sensitivity_sweep, sweep_markdown,
    write_replicates_csv, write_sweep_csv, write_trace_csv, ExperimentReport, SweepBase,
    SweepPoint,
};
use nof1_core::scoring::build_insights;
use nof1_core::tier::{fit_pair, run_engine};
use serde::Serialize;

use crate::config::{load_generator_config, load_run_config};
use crate::manifest::RunManifest;

/// Tracks files written below an output directory.
struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, rel: &str) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.written.push(rel.to_string());
        Ok(path)
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.path(rel)?, text)?;
        Ok(())
    }

    fn text(&mut self, rel: &str, text: &str) -> anyhow::Result<()> {
        fs::write(self.path(rel)?, text)?;
        Ok(())
    }

    fn create(&mut self, rel: &str) -> anyhow::Result<BufWriter<fs::File>> {
        Ok(BufWriter::new(fs::File::create(self.path(rel)?)?))
    }

    /// Checks every recorded file exists, then writes the manifest.
    fn finish(
        mut self,
        command: &str,
        config_fingerprint: String,
        seed: u64,
        started: Instant,
    ) -> anyhow::Result<()> {
        self.written.sort();
        for rel in &self.written {
            if !self.dir.join(rel).is_file() {
                bail!("expected output {rel} was not written");
            }
        }
        RunManifest {
            command: command.to_string(),
            config_fingerprint,
            master_seed: seed,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: self.written,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        }
        .write(&self.dir)
    }
}

pub struct GenerateArgs {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub format: DataFormat,
}

pub fn cmd_generate(args: &GenerateArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let mut config = load_generator_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let (dataset, truth) = generate(&config)?;
    let mut out = Outputs::new(&args.out)?;
    let data_name = format!("dataset.{}", args.format.extension());
    save_dataset(&dataset, out.path(&data_name)?, args.format)?;
    save_ground_truth(&truth, out.path("ground_truth.json")?)?;
    out.json("generator_config.json", &config)?;
    out.finish("generate", config.fingerprint(), config.seed, started)
}

pub struct ReplayArgs {
    pub data: PathBuf,
    pub format: Option<DataFormat>,
    pub config: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub pairs: Vec<String>,
    pub milestones: Vec<u32>,
    pub out: PathBuf,
}

fn infer_format(path: &Path) -> anyhow::Result<DataFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => Ok(ext.parse()?),
        None => bail!(
            "cannot infer the format of {}; pass --format",
            path.display()
        ),
    }
}

fn parse_pair(text: &str) -> anyhow::Result<PairKey> {
    let (factor, outcome) = text
        .split_once(':')
        .with_context(|| format!("pair '{text}' must look like factor:outcome"))?;
    Ok(PairKey::new(factor, outcome)?)
}

/// Pairs from `--pairs`, else the ground-truth manifest, else every
/// factor/outcome combination.
fn replay_pairs(args: &ReplayArgs, dataset: &Dataset) -> anyhow::Result<Vec<PairKey>> {
    let pairs = if !args.pairs.is_empty() {
        args.pairs
            .iter()
            .map(|p| parse_pair(p))
            .collect::<anyhow::Result<_>>()?
    } else {
        let sibling = args.data.with_file_name("ground_truth.json");
        let truth_path = args
            .truth
            .clone()
            .or_else(|| sibling.is_file().then_some(sibling));
        match truth_path {
            Some(p) => load_ground_truth(&p)?.all_pairs(),
            None => {
                let s = dataset.schema();
                s.vitals
                    .iter()
                    .flat_map(|v| {
                        s.factors
                            .iter()
                            .map(move |f| PairKey::new(f.as_str(), v.as_str()))
                    })
                    .collect::<Result<_, _>>()?
            }
        }
    };
    for p in &pairs {
        if !dataset.schema().contains_pair(p) {
            bail!("pair {p} does not match the dataset schema");
        }
    }
    Ok(pairs)
}

pub fn cmd_replay(args: &ReplayArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let config = load_run_config(args.config.as_deref())?;
    let format = match args.format {
        Some(f) => f,
        None => infer_format(&args.data)?,
    };
    let dataset = load_dataset(&args.data, format)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let pairs = replay_pairs(args, &dataset)?;
    let timelines = run_engine(&dataset, &pairs, &config.prior, &config.engine)?;
    let valences = config.valence_map()?;
    let span = dataset.span();

    let mut out = Outputs::new(&args.out)?;
    let mut snapshots = BTreeMap::new();
    for (pair, timeline) in &timelines {
        let stem = pair.file_stem();
        timeline.write_csv(out.create(&format!("timelines/{stem}.csv"))?)?;
        write_trace_csv(
            &contraction_trace(timeline),
            out.create(&format!("traces/{stem}.csv"))?,
        )?;
        snapshots.insert(
            stem,
            fit_pair(&dataset, pair, span, &config.prior, config.engine.model)?.state,
        );
    }
    out.json(&format!("posteriors_day{span}.json"), &snapshots)?;
    let mut milestones: Vec<u32> = args
        .milestones
        .iter()
        .copied()
        .filter(|&d| d >= 1 && d <= span)
        .collect();
    milestones.sort_unstable();
    milestones.dedup();
    for day in milestones {
        let insights = build_insights(
            &timelines,
            &dataset,
            &valences,
            &config.prior,
            config.engine.model,
            day,
        )?;
        out.json(&format!("insights_day{day}.json"), &insights)?;
    }
    let seed = dataset.meta().seed.unwrap_or(0);
    out.finish("replay", fingerprint(&config), seed, started)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentMode {
    Single,
    MonteCarlo,
    Sweep,
}

pub struct ExperimentArgs {
    pub mode: ExperimentMode,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n_datasets: Option<usize>,
    pub grid: Vec<String>,
    pub out: PathBuf,
}

fn parse_grid(specs: &[String]) -> anyhow::Result<BTreeMap<String, Vec<f64>>> {
    let mut grid = BTreeMap::new();
    for spec in specs {
        let (name, values) = spec
            .split_once('=')
            .with_context(|| format!("grid entry '{spec}' must look like name=v1,v2"))?;
        let values = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .with_context(|| format!("bad grid value '{v}'"))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        grid.insert(name.trim().to_string(), values);
    }
    Ok(grid)
}

pub fn cmd_experiment(args: &ExperimentArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let mut config = load_run_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.generator.seed = seed;
    }
    let seed = config.generator.seed;
    let mut out = Outputs::new(&args.out)?;
    let command = match args.mode {
        ExperimentMode::Single => {
            let (dataset, truth) = generate(&config.generator)?;
            let report = evaluate_single(
                &dataset,
                &truth,
                &config.engine,
                &config.prior,
                &config.harness,
            )?;
            write_report(&mut out, &report)?;
            "experiment single"
        }
        ExperimentMode::MonteCarlo => {
            let n = args.n_datasets.unwrap_or(config.n_datasets);
            let report = monte_carlo(
                n,
                &config.generator,
                &config.variation,
                &config.engine,
                &config.prior,
                &config.harness,
                seed,
            )?;
            write_report(&mut out, &report)?;
            let mc = report
                .mc_summary
                .as_ref()
                .expect("Monte Carlo report has a summary");
            write_replicates_csv(&mc.replicates, out.create("replicates.csv")?)?;
            "experiment montecarlo"
        }
        ExperimentMode::Sweep => {
            if !args.grid.is_empty() {
                config.sweep.grid = parse_grid(&args.grid)?;
            }
            if let Some(n) = args.n_datasets {
                config.sweep.n_datasets = n;
            }
            let base = SweepBase {
                generator: config.generator.clone(),
                variation: config.variation,
                engine: config.engine.clone(),
                prior: config.prior,
                options: config.harness.clone(),
                n_datasets: config.sweep.n_datasets,
                master_seed: seed,
            };
            let points = sensitivity_sweep(&config.sweep.grid, &base)?;
            write_sweep_csv(&points, out.create("sweep.csv")?)?;
            out.json("sweep.json", &points)?;
            out.text("sweep.md", &sweep_markdown(&points))?;
            "experiment sweep"
        }
    };
    out.finish(command, fingerprint(&config), seed, started)
}

fn write_report(out: &mut Outputs, report: &ExperimentReport) -> anyhow::Result<()> {
    out.json("report.json", report)?;
    out.text("report.md", &report.to_markdown())
}

/// Renders a saved `report.json` or `sweep.json` as Markdown.
pub fn cmd_report(input: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let markdown = if let Ok(report) = serde_json::from_str::<ExperimentReport>(&text) {
        report.to_markdown()
    } else {
        let points: Vec<SweepPoint> = serde_json::from_str(&text).with_context(|| {
            format!(
                "{} is neither an experiment report nor a sweep",
                input.display()
            )
        })?;
        sweep_markdown(&points)
    };
    match out {
        Some(path) => fs::write(path, markdown)?,
        None => print!("{markdown}"),
    }
    Ok(())
}
