mod args;

use anyhow::{anyhow, Context};
use args::{Cli, Command, EvalArgs, ServiceArgs, StageArgs};
use cgvm_core::dataset::{dataset_stats, load_dataset, validate, write_stats_csv, Dataset};
use cgvm_core::metrics::brisque::SvrModel;
use cgvm_core::metrics::computational::FormulaMode;
use cgvm_core::metrics::element::IouOptions;
use cgvm_core::metrics::semantic::{EmbeddingProvider, FileStore, RemoteService};
use cgvm_core::net::{HttpClient, HttpConfig};
use cgvm_core::pipeline::clients::{
    RemoteDetector, RemoteImageService, RemoteTextService, StoredDetections, StoredImages, StoredSummaries,
};
use cgvm_core::pipeline::eval::{merge_reports, read_report, EvalInputs};
use cgvm_core::pipeline::stages::{run_detect, run_generate, run_summarize, StageReport};
use cgvm_core::pipeline::{evaluate_run, write_report, Detector, EvalConfig, EvalReport, Generator, MetricFamily, RunConfig, RunRecord, Summarizer};
use clap::Parser;
use std::process::ExitCode;

/// Exit status contract: 0 success, 1 configuration or validation error,
/// 2 partial failure.
enum Outcome {
    Success,
    Partial,
}

struct ConfigError(anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for ConfigError {
    fn from(e: E) -> Self {
        ConfigError(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(ConfigError(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome, ConfigError> {
    match cli.command {
        Command::Validate { dataset } => match validate(&dataset) {
            Ok(d) => {
                println!("{}: {} samples, valid", dataset.display(), d.samples.len());
                Ok(Outcome::Success)
            }
            Err(errors) => {
                for e in &errors {
                    eprintln!("{e}");
                }
                Err(anyhow!("{}: {} problem(s) found", dataset.display(), errors.len()).into())
            }
        },
        Command::Stats { dataset, out } => {
            let d = load_dataset(&dataset)?;
            let report = dataset_stats(&d);
            for p in write_stats_csv(&report, &out)? {
                println!("wrote {}", p.display());
            }
            Ok(Outcome::Success)
        }
        Command::Summarize(a) => stage(cli.offline, a, StageKind::Summarize),
        Command::Generate(a) => stage(cli.offline, a, StageKind::Generate),
        Command::Detect(a) => stage(cli.offline, a, StageKind::Detect),
        Command::Eval(a) => eval(cli.offline, a),
        Command::Report { reports, out, grid } => {
            let loaded = reports.iter().map(read_report).collect::<Result<Vec<_>, _>>()?;
            let mut merged = merge_reports(loaded)?;
            if merged.snapshot.eval.grid != grid {
                merged.snapshot.eval.grid = grid;
                merged = EvalReport::from_rows(merged.snapshot, merged.rows, merged.errors)?;
            }
            write_report(&merged, &out)?;
            print_table(&merged);
            Ok(if merged.has_errors() { Outcome::Partial } else { Outcome::Success })
        }
    }
}

fn check_offline(offline: bool, services: &ServiceArgs) -> Result<(), ConfigError> {
    let set = services.configured();
    if offline && !set.is_empty() {
        return Err(anyhow!("--offline contradicts configured service endpoint(s): {}", set.join(", ")).into());
    }
    Ok(())
}

fn http() -> HttpClient {
    HttpClient::new(HttpConfig::default())
}

#[derive(Clone, Copy)]
enum StageKind {
    Summarize,
    Generate,
    Detect,
}

fn stage(offline: bool, a: StageArgs, kind: StageKind) -> Result<Outcome, ConfigError> {
    check_offline(offline, &a.services)?;
    let dataset = load_dataset(&a.dataset)?;
    let layout = a.run.layout();
    let s = &a.services;
    let summarizer: Box<dyn Summarizer> = match &s.llm_url {
        Some(url) => Box::new(RemoteTextService::new(url, s.llm_key.clone(), &s.llm_model, http())),
        None => Box::new(StoredSummaries),
    };
    let generator: Box<dyn Generator> = match &s.t2i_url {
        Some(url) => Box::new(RemoteImageService::new(url, s.t2i_key.clone(), http(), layout.clone())),
        None => Box::new(StoredImages::new(layout.clone())),
    };
    let detector: Box<dyn Detector> = match &s.det_url {
        Some(url) => Box::new(RemoteDetector::new(url, http(), layout.clone(), a.side)),
        None => Box::new(StoredDetections::new(layout.clone())),
    };
    let config = RunConfig {
        summarizer: summarizer.spec(),
        generator: generator.spec(),
        detector: detector.spec(),
        image_width: a.width,
        image_height: a.height,
        seed: a.seed,
        detection_side: a.side,
    };
    let mut record = RunRecord::open_or_create(&layout, &dataset, &config)?;
    let jobs = a.run.jobs;
    let report = match kind {
        StageKind::Summarize => run_summarize(&dataset, &layout, &mut record, summarizer.as_ref(), jobs)?,
        StageKind::Generate => run_generate(&dataset, &layout, &mut record, generator.as_ref(), jobs)?,
        StageKind::Detect => run_detect(&dataset, &layout, &mut record, detector.as_ref(), jobs)?,
    };
    Ok(print_stage(&report))
}

fn print_stage(r: &StageReport) -> Outcome {
    println!("{:?}: {} produced, {} reused, {} failed", r.stage, r.produced, r.reused, r.failures.len());
    for f in &r.failures {
        eprintln!("  {} hop {}: {}", f.sample_id, f.hop, f.error);
    }
    if r.failures.is_empty() {
        Outcome::Success
    } else {
        Outcome::Partial
    }
}

fn eval(offline: bool, a: EvalArgs) -> Result<Outcome, ConfigError> {
    check_offline(offline, &a.services)?;
    let metrics = MetricFamily::parse_list(&a.metrics).map_err(|e| anyhow!(e))?;
    let config = EvalConfig {
        metrics,
        side: a.side,
        grid: a.grid,
        ssim_window: a.ssim_window.into(),
        uqi_mode: a.uqi_mode.into(),
        iou: IouOptions { matching: a.iou_matching.into(), averaging: a.iou_averaging.into() },
        detection_threshold: a.det_threshold,
        formulas: if a.literal_paper_formulas { FormulaMode::LiteralPaper } else { FormulaMode::Standard },
        jobs: a.run.jobs,
    };
    config.validate()?;
    let dataset: Dataset = load_dataset(&a.dataset)?;
    let layout = a.run.layout();

    let brisque = if config.metrics.contains(&MetricFamily::Brisque) {
        Some(SvrModel::resolve(a.brisque_model.as_deref())?)
    } else {
        None
    };
    let provider: Option<Box<dyn EmbeddingProvider>> = if !config.metrics.contains(&MetricFamily::Clip) {
        None
    } else if let Some(path) = &a.embeddings {
        Some(Box::new(FileStore::open(path, None).with_context(|| format!("embedding store {}", path.display()))?))
    } else if let Some(url) = &a.services.embed_url {
        Some(Box::new(RemoteService::new(url, a.services.embed_token.clone(), http())))
    } else {
        log::warn!("no embedding store given; clip_score will be missing for every hop");
        None
    };
    let inputs = EvalInputs { brisque_model: brisque.as_ref(), embeddings: provider.as_deref() };

    let report = evaluate_run(&dataset, &layout, &config, inputs)?;
    let out = a.out.unwrap_or_else(|| layout.dir().join("report"));
    write_report(&report, &out)?;
    print_table(&report);
    println!("report written to {}", out.display());
    if report.has_errors() {
        eprintln!("{} metric error(s); see {}", report.errors.len(), out.join("errors.json").display());
        Ok(Outcome::Partial)
    } else {
        Ok(Outcome::Success)
    }
}

fn print_table(r: &EvalReport) {
    println!("{:<16} {:>12} {:>12} {:>12} {:>6} {:>9}", "metric", "mean", "std", "max", "n", "excluded");
    for row in &r.corpus.rows {
        println!(
            "{:<16} {:>12.6} {:>12.6} {:>12.6} {:>6} {:>9}",
            row.metric,
            row.mean,
            row.std,
            row.max,
            row.n,
            row.excluded_infinite + row.excluded_undefined
        );
    }
    for s in &r.corpus.skipped {
        println!("{:<16} {:>12} {:>12} {:>12} {:>6} {:>9}", s.metric, "-", "-", "-", 0, s.excluded_infinite + s.excluded_undefined);
    }
}
