use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use groundkit::dataset::{
    self, assign_splits, clean_many, dataset_stats, keyword_filter, CaptionCleaner, HttpCleaner, KeywordFilter,
    MockCleaner, RetryPolicy,
};
use groundkit::refine::{raw_regions, StageCounts};
use groundkit::{evaluate, refine, AnnotationRecord};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CleanerKind, Config};
use crate::run_manifest::Recorder;
use crate::{BuildDatasetArgs, Cli, CliError, Command, EvaluateArgs, RefineArgs, ServeArgs, StatsArgs};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const REGIONS_FILE: &str = "regions.jsonl";
pub const RAW_REGIONS_FILE: &str = "raw_regions.jsonl";
pub const REFINE_SUMMARY_FILE: &str = "refine_summary.json";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";
pub const EVAL_TABLE_FILE: &str = "eval_table.txt";
pub const STATS_JSON_FILE: &str = "stats.json";
pub const STATS_TEXT_FILE: &str = "stats.txt";

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = Config::load(cli.config.as_deref())?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let jobs = pool.current_num_threads();
    let cfg_path = cli.config.as_deref();
    pool.install(|| match cli.command {
        Command::BuildDataset(args) => build_dataset(config, args, jobs, cfg_path),
        Command::Refine(args) => refine_cmd(config, args, cfg_path),
        Command::Evaluate(args) => evaluate_cmd(config, args, cfg_path),
        Command::Stats(args) => stats_cmd(args),
        Command::Serve(args) => serve_cmd(args),
    })
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn create_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    write_text(path, &(text + "\n"))
}

fn with_config<'a>(mut inputs: Vec<&'a Path>, cfg_path: Option<&'a Path>) -> Vec<&'a Path> {
    inputs.extend(cfg_path);
    inputs
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

/// Lowercased keywords, one per line; blank lines and `#` comments skipped.
pub fn read_keywords(path: &Path) -> Result<BTreeSet<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read keywords file {}: {e}", path.display())))?;
    let keywords: BTreeSet<String> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect();
    if keywords.is_empty() {
        return Err(CliError::Usage(format!("keywords file {} is empty", path.display())));
    }
    Ok(keywords)
}

fn build_dataset(
    mut cfg: Config,
    args: BuildDatasetArgs,
    jobs: usize,
    cfg_path: Option<&Path>,
) -> Result<(), CliError> {
    let keywords = read_keywords(&args.keywords)?;
    if let Some(seed) = args.seed {
        cfg.split.seed = seed;
    }
    for (flag, slot) in [
        (args.train, &mut cfg.split.train),
        (args.val, &mut cfg.split.val),
        (args.test, &mut cfg.split.test),
    ] {
        if let Some(v) = flag {
            *slot = v;
        }
    }
    if let Some(c) = args.cleaner {
        cfg.dataset.cleaner = c;
    }
    cfg.split.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let cleaner: Option<Box<dyn CaptionCleaner>> = match cfg.dataset.cleaner {
        CleanerKind::None => None,
        CleanerKind::Mock => {
            let patterns: Vec<String> = dataset::clean::DEFAULT_BOILERPLATE
                .iter()
                .map(|s| s.to_string())
                .chain(cfg.dataset.mock_patterns.iter().cloned())
                .collect();
            Some(Box::new(
                MockCleaner::new(&patterns).map_err(|e| CliError::Usage(e.to_string()))?,
            ))
        }
        CleanerKind::Http => Some(Box::new(
            HttpCleaner::from_config(&cfg.dataset.http).map_err(|e| CliError::Usage(e.to_string()))?,
        )),
    };

    let recorder = Recorder::start(
        "build-dataset",
        &cfg,
        &with_config(vec![&args.raw, &args.keywords], cfg_path),
    );
    let raw = dataset::load_raw_metadata(&args.raw, args.images.as_deref()).map_err(data_err)?;
    print_warnings(&raw.warnings);
    let total = raw.records.len();
    let filter = KeywordFilter {
        keywords,
        joiner: cfg.dataset.joiner.clone(),
    };
    let mut entries = keyword_filter(raw.records, &filter);

    if let Some(client) = &cleaner {
        let retry = match cfg.dataset.cleaner {
            CleanerKind::Http => cfg.dataset.http.retry,
            _ => RetryPolicy::default(),
        };
        let in_flight = match cfg.dataset.cleaner {
            CleanerKind::Http => cfg.dataset.http.max_in_flight,
            _ => jobs,
        };
        let positions: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].caption.is_some()).collect();
        let captions: Vec<String> = positions.iter().map(|&i| entries[i].caption.clone().unwrap()).collect();
        for (i, outcome) in positions
            .into_iter()
            .zip(clean_many(&captions, client.as_ref(), &retry, in_flight))
        {
            let outcome = outcome.map_err(data_err)?;
            if let Some(w) = &outcome.warning {
                eprintln!("warning: {}: {w}", entries[i].image_id);
            }
            entries[i].caption = Some(outcome.text);
        }
    }

    let entries = assign_splits(entries, &cfg.split).map_err(data_err)?;
    create_out_dir(&args.out)?;
    let out = args.out.join(MANIFEST_FILE);
    dataset::save_manifest(&out, &entries).map_err(data_err)?;
    recorder.finish(&args.out, std::slice::from_ref(&out))?;

    let mut per_split: BTreeMap<String, usize> = BTreeMap::new();
    for e in &entries {
        *per_split.entry(e.split.to_string()).or_default() += 1;
    }
    let splits: Vec<String> = per_split.iter().map(|(s, n)| format!("{s} {n}")).collect();
    println!(
        "kept {} of {total} entries ({}) -> {}",
        entries.len(),
        splits.join(", "),
        out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct RefineSummary {
    images: usize,
    totals: StageCounts,
    per_image: BTreeMap<String, StageCounts>,
}

fn refine_cmd(mut cfg: Config, args: RefineArgs, cfg_path: Option<&Path>) -> Result<(), CliError> {
    if let Some(t) = args.text_threshold {
        cfg.refine.text_threshold = t;
    }
    if let Some(t) = args.box_threshold {
        cfg.refine.box_threshold = t;
    }
    cfg.refine.validate()?;
    let recorder = Recorder::start("refine", &cfg.refine, &with_config(vec![&args.proposals], cfg_path));

    let loaded = match dataset::load_proposals(&args.proposals) {
        Ok(l) => l,
        Err(first @ groundkit::Error::Schema { .. }) => {
            let all = dataset::check_proposals(&args.proposals).unwrap_or_else(|_| vec![first]);
            let lines: Vec<String> = all.iter().map(|e| format!("  {e}")).collect();
            return Err(CliError::Data(format!(
                "{} schema error(s):\n{}",
                all.len(),
                lines.join("\n")
            )));
        }
        Err(e) => return Err(data_err(e)),
    };
    print_warnings(&loaded.warnings);

    let refined: Vec<(String, String, groundkit::refine::Refined)> = loaded
        .records
        .par_iter()
        .map(|set| refine(set, &cfg.refine).map(|r| (set.image_id.clone(), set.prompt.text().to_string(), r)))
        .collect::<Result<_, _>>()
        .map_err(data_err)?;
    let mut refined = refined;
    refined.sort_by(|a, b| a.0.cmp(&b.0));

    let mut totals = StageCounts::default();
    let mut per_image = BTreeMap::new();
    let mut records = Vec::with_capacity(refined.len());
    for (id, prompt, r) in refined {
        totals.accumulate(&r.counts);
        per_image.insert(id.clone(), r.counts);
        records.push(AnnotationRecord::new(id, prompt, r.regions));
    }

    create_out_dir(&args.out)?;
    let regions_path = args.out.join(REGIONS_FILE);
    dataset::save_regions(&regions_path, &records).map_err(data_err)?;
    let summary_path = args.out.join(REFINE_SUMMARY_FILE);
    write_json(
        &summary_path,
        &RefineSummary {
            images: records.len(),
            totals: totals.clone(),
            per_image,
        },
    )?;
    let mut outputs = vec![regions_path.clone(), summary_path];

    if args.raw_baseline {
        let mut raw: Vec<AnnotationRecord> = loaded
            .records
            .par_iter()
            .map(|set| {
                raw_regions(set, &cfg.refine).map(|r| AnnotationRecord::new(set.image_id.clone(), set.prompt.text(), r))
            })
            .collect::<Result<_, _>>()
            .map_err(data_err)?;
        raw.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        let raw_path = args.out.join(RAW_REGIONS_FILE);
        dataset::save_regions(&raw_path, &raw).map_err(data_err)?;
        outputs.push(raw_path);
    }
    recorder.finish(&args.out, &outputs)?;

    println!("images               {}", records.len());
    println!("proposals in         {}", totals.input);
    println!("  below box thresh   {}", totals.below_box_threshold);
    println!("  no phrase group    {}", totals.no_phrase_group);
    println!("  stoplist           {}", totals.stoplist);
    println!("  identical boxes    {}", totals.identical_boxes);
    println!("  containment        {}", totals.containment);
    println!("regions out          {}  -> {}", totals.output, regions_path.display());
    Ok(())
}

fn evaluate_cmd(mut cfg: Config, args: EvaluateArgs, cfg_path: Option<&Path>) -> Result<(), CliError> {
    let policy = &mut cfg.eval.match_policy;
    if let Some(m) = args.match_mode {
        policy.mode = m;
    }
    if let Some(t) = args.fuzzy_threshold {
        policy.fuzzy_threshold = t;
    }
    if let Some(t) = args.iou_single {
        cfg.eval.iou_threshold_single = t;
    }
    if let Some(m) = args.recall_mode {
        cfg.eval.recall_mode = m;
    }
    cfg.eval.validate()?;
    let recorder = Recorder::start(
        "evaluate",
        &cfg.eval,
        &with_config(vec![&args.gt, &args.pred], cfg_path),
    );
    let gt = dataset::load_regions(&args.gt).map_err(data_err)?;
    let pred = dataset::load_regions(&args.pred).map_err(data_err)?;
    print_warnings(&gt.warnings);
    print_warnings(&pred.warnings);
    let report = evaluate(&gt.records, &pred.records, &cfg.eval).map_err(data_err)?;
    if !report.images_without_gt.is_empty() {
        eprintln!(
            "note: {} image(s) without ground truth excluded from averages",
            report.images_without_gt.len()
        );
    }

    create_out_dir(&args.out)?;
    let json_path = args.out.join(EVAL_REPORT_FILE);
    write_json(&json_path, &report)?;
    let table = report.to_table();
    let table_path = args.out.join(EVAL_TABLE_FILE);
    write_text(&table_path, &table)?;
    recorder.finish(&args.out, &[json_path, table_path])?;
    print!("{table}");
    Ok(())
}

fn stats_cmd(args: StatsArgs) -> Result<(), CliError> {
    let mut inputs: Vec<&Path> = vec![&args.regions];
    if let Some(m) = &args.manifest {
        inputs.push(m);
    }
    let recorder = Recorder::start("stats", &serde_json::json!({}), &inputs);
    let regions = dataset::load_regions(&args.regions).map_err(data_err)?;
    print_warnings(&regions.warnings);
    let manifest = match &args.manifest {
        Some(p) => {
            let m = dataset::load_manifest(p).map_err(data_err)?;
            print_warnings(&m.warnings);
            Some(m.records)
        }
        None => None,
    };
    let stats = dataset_stats(manifest.as_deref(), &regions.records);
    let text = stats.to_text();
    print!("{text}");
    if let Some(out) = &args.out {
        create_out_dir(out)?;
        let json_path = out.join(STATS_JSON_FILE);
        let text_path = out.join(STATS_TEXT_FILE);
        write_json(&json_path, &stats)?;
        write_text(&text_path, &text)?;
        recorder.finish(out, &[json_path, text_path])?;
    }
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}

fn serve_cmd(args: ServeArgs) -> Result<(), CliError> {
    use groundkit_service::Store;

    let manifest = match &args.manifest {
        Some(p) => Some(dataset::load_manifest(p).map_err(data_err)?.records),
        None => None,
    };
    let records = match &args.import {
        Some(p) => dataset::load_regions(p).map_err(data_err)?.records,
        None => Vec::new(),
    };
    if args.import.is_some() || manifest.is_some() {
        let added = Store::import(&args.data, &records, manifest.as_deref()).map_err(data_err)?;
        eprintln!("imported {added} new record(s)");
    }
    let store = Arc::new(Store::open(&args.data, args.images.as_deref()).map_err(data_err)?);

    let rt = tokio::runtime::Runtime::new().map_err(data_err)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .map_err(|e| CliError::Data(format!("cannot bind {}:{}: {e}", args.host, args.port)))?;
        let addr = listener.local_addr().map_err(data_err)?;
        println!("listening on http://{addr}");
        use std::io::Write;
        let _ = std::io::stdout().flush();
        groundkit_service::serve(listener, store, shutdown_signal())
            .await
            .map_err(data_err)
    })
}
