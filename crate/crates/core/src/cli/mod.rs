//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code.

mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

pub use config::{CollapseConfig, ConsistencyConfig, DataSource, RunConfig};

use crate::diagnostics::{
    collapse_curve, consistency_shift, permutation_quantile, random_fixture, star_fixture, LinearStack,
};
use crate::error::{Error, Result};
use crate::graph::{build_graph, HeteroGraph};
use crate::rdb::{compute_imbalance_stats, load_database, validate_referential_integrity, RelationalDatabase};
use crate::synthgen::{describe, generate};
use crate::tensor::{Rng, Tensor};
use crate::train::{MetricsReport, RelMoss, Split, Task, TrainConfig, TrainOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

const OUTPUTS: &str = "\
Every run writes into its output directory (`out_dir` in the config, or
--out-dir for `ingest`; eval and diagnose use a subdirectory of it) and
always leaves a `run.json` there:
  {schema_version, command, argv, config, seed, crate_version,
   started_unix, wall_time_s, status: ok|config_error|runtime_error, error}

Per command:
  synth-data   manifest.json, <table>.csv, labels.csv, provenance.json
  ingest       ingest.json (tables, row counts, per-link dangling/null FK
               counts, relations and edge counts)
  train        model.json (checkpoint), history.json (per-epoch loss,
               gate means, validation metrics), metrics.csv,
               metrics_test.json
  eval         eval/metrics_<split>.json, eval/metrics.csv,
               eval/predictions.csv (entity_id,label,logit,probability)
  diagnose collapse     collapse/collapse.csv, collapse/summary.json
  diagnose consistency  consistency/consistency.csv, consistency/summary.json
  ablate       ablation.csv (variant,b_acc,g_mean), ablation.json

Metrics JSON holds {epoch, split, tp, fn, tn, fp, b_acc, g_mean, loss_cls,
loss_syn}; metrics.csv has the same columns, one row per report.

Dumps (train): --dump-graph writes graph.jsonl (one relation per line with
its edge list), --dump-gates writes gates.csv (epoch,relation,mean_gate),
--dump-synth writes synth.csv (epoch,anchor,partner,lambda,distance,
signature) for the synthetic samples of the final epoch.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
Diagnostics report PASS/FAIL on stdout; a FAIL does not change the exit code.
Relative paths in a config file are resolved against its directory.";

#[derive(Debug, Parser)]
#[command(name = "relmoss", version, about = "Imbalanced entity classification on relational databases")]
#[command(after_long_help = OUTPUTS)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic star-schema database with a planted minority pattern.
    SynthData { config: PathBuf },
    /// Load a database, check referential integrity and summarise the graph.
    Ingest {
        manifest: PathBuf,
        /// Directory holding the table files; defaults to the manifest's.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, default_value = "relmoss-ingest")]
        out_dir: PathBuf,
        #[arg(long)]
        dump_graph: bool,
    },
    /// Train a model and report test metrics.
    Train {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        dumps: Dumps,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        config: PathBuf,
        checkpoint: PathBuf,
        #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
        split: String,
    },
    /// Structural diagnostics.
    Diagnose {
        #[command(subcommand)]
        what: Diagnose,
    },
    /// Train the full model and three ablations; write test B-Acc and G-Mean.
    Ablate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum Diagnose {
    /// Minority-signal decay on the star fixture and the per-layer bound on random fixtures.
    Collapse { config: PathBuf },
    /// Energy distance between true and synthetic minority signatures.
    Consistency { config: PathBuf, checkpoint: PathBuf },
}

#[derive(Debug, Clone, Copy, Default, Args)]
pub struct Dumps {
    #[arg(long)]
    pub dump_graph: bool,
    #[arg(long)]
    pub dump_gates: bool,
    #[arg(long)]
    pub dump_synth: bool,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    schema_version: u32,
    command: &'a str,
    argv: Vec<String>,
    config: Value,
    seed: Option<u64>,
    crate_version: &'static str,
    started_unix: u64,
    wall_time_s: f64,
    status: &'static str,
    error: Option<String>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let argv = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    execute(cli.command, argv)
}

/// A prepared command: where it writes, what it records, and the work.
struct Prepared {
    name: &'static str,
    out_dir: PathBuf,
    config: Value,
    seed: Option<u64>,
    body: Box<dyn FnOnce(&Path) -> Result<()>>,
}

fn execute(command: Command, argv: Vec<String>) -> i32 {
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let prepared = match prepare(command) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let result = std::fs::create_dir_all(&prepared.out_dir)
        .map_err(|e| Error::io(&prepared.out_dir, e))
        .and_then(|_| (prepared.body)(&prepared.out_dir));
    let (status, error) = match &result {
        Ok(()) => ("ok", None),
        Err(e) if exit_code(e) == EXIT_CONFIG => ("config_error", Some(e.to_string())),
        Err(e) => ("runtime_error", Some(e.to_string())),
    };
    let record = RunRecord {
        schema_version: 1,
        command: prepared.name,
        argv,
        config: prepared.config,
        seed: prepared.seed,
        crate_version: env!("CARGO_PKG_VERSION"),
        started_unix,
        wall_time_s: started.elapsed().as_secs_f64(),
        status,
        error,
    };
    if std::fs::create_dir_all(&prepared.out_dir).is_ok() {
        if let Err(e) = write_json(&prepared.out_dir.join("run.json"), &record) {
            eprintln!("error: could not write run.json: {e}");
        }
    }
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn prepare(command: Command) -> Result<Prepared> {
    Ok(match command {
        Command::SynthData { config } => {
            let cfg = RunConfig::load(&config)?;
            let synth = cfg.synth.clone().unwrap_or_default();
            synth.validate()?;
            Prepared {
                name: "synth-data",
                out_dir: cfg.out_dir.clone(),
                config: serde_json::to_value(&cfg)?,
                seed: Some(synth.seed),
                body: Box::new(move |out| {
                    let ds = generate(&synth)?;
                    ds.write(out)?;
                    println!("{}", describe(&synth));
                    Ok(())
                }),
            }
        }
        Command::Ingest {
            manifest,
            data_dir,
            out_dir,
            dump_graph,
        } => {
            if !manifest.is_file() {
                return Err(Error::Config(format!("{} does not exist", manifest.display())));
            }
            let data_dir = data_dir.unwrap_or_else(|| parent_dir(&manifest));
            Prepared {
                name: "ingest",
                out_dir,
                config: json!({ "manifest": manifest, "data_dir": data_dir, "dump_graph": dump_graph }),
                seed: None,
                body: Box::new(move |out| ingest(&manifest, &data_dir, out, dump_graph)),
            }
        }
        Command::Train { config, seed, dumps } => {
            let cfg = load_data_config(&config, seed)?;
            data_command("train", cfg, None, move |cfg, out| train(cfg, out, dumps))?
        }
        Command::Eval {
            config,
            checkpoint,
            split,
        } => {
            let cfg = load_data_config(&config, None)?;
            let split = Split::parse(&split)?;
            data_command("eval", cfg, Some("eval"), move |cfg, out| eval(cfg, &checkpoint, split, out))?
        }
        Command::Ablate { config, seed } => {
            let cfg = load_data_config(&config, seed)?;
            data_command("ablate", cfg, None, ablate)?
        }
        Command::Diagnose {
            what: Diagnose::Collapse { config },
        } => {
            let cfg = RunConfig::load(&config)?;
            cfg.validate_collapse()?;
            Prepared {
                name: "diagnose collapse",
                out_dir: cfg.out_dir.join("collapse"),
                config: serde_json::to_value(&cfg)?,
                seed: Some(cfg.collapse.seed),
                body: Box::new(move |out| diagnose_collapse(&cfg.collapse, out)),
            }
        }
        Command::Diagnose {
            what: Diagnose::Consistency { config, checkpoint },
        } => {
            let cfg = load_data_config(&config, None)?;
            cfg.validate_consistency()?;
            data_command("diagnose consistency", cfg, Some("consistency"), move |cfg, out| {
                diagnose_consistency(cfg, &checkpoint, out)
            })?
        }
    })
}

fn load_data_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    cfg.validate_data()?;
    Ok(cfg)
}

fn data_command<F>(name: &'static str, cfg: RunConfig, subdir: Option<&str>, f: F) -> Result<Prepared>
where
    F: FnOnce(&RunConfig, &Path) -> Result<()> + 'static,
{
    Ok(Prepared {
        name,
        out_dir: match subdir {
            Some(d) => cfg.out_dir.join(d),
            None => cfg.out_dir.clone(),
        },
        config: serde_json::to_value(&cfg)?,
        seed: Some(cfg.train.seed),
        body: Box::new(move |out| f(&cfg, out)),
    })
}

fn parent_dir(p: &Path) -> PathBuf {
    p.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Database, graph and labelled task of a run.
pub struct Loaded {
    pub db: RelationalDatabase,
    pub graph: HeteroGraph,
    pub task: Task,
}

/// Reads or generates the database named by the config.
pub fn load_data(cfg: &RunConfig) -> Result<Loaded> {
    let (db, task) = match (&cfg.data, &cfg.synth) {
        (Some(d), _) => {
            let dir = d.data_dir.clone().unwrap_or_else(|| parent_dir(&d.manifest));
            let db = load_database(&d.manifest, &dir)?;
            let task = Task::load(&db, &d.target_table, &d.labels)?;
            (db, task)
        }
        (None, Some(s)) => {
            let ds = generate(s)?;
            (ds.db, ds.task)
        }
        (None, None) => return Err(Error::Config("one of `data` or `synth` is required".into())),
    };
    let stats = compute_imbalance_stats(&task.labels)?;
    log::info!(
        "{} labelled entities: {} positive, {} negative, ratio {:.2}",
        task.len(),
        stats.n_pos,
        stats.n_neg,
        stats.imbalance_ratio
    );
    let graph = build_graph(&db);
    Ok(Loaded { db, graph, task })
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_metrics_csv(path: &Path, reports: &[&MetricsReport]) -> Result<()> {
    write_rows(path, &MetricsReport::CSV_HEADER, reports.iter().map(|r| r.csv_record()))
}

fn ingest(manifest: &Path, data_dir: &Path, out: &Path, dump_graph: bool) -> Result<()> {
    let db = load_database(manifest, data_dir)?;
    let integrity = validate_referential_integrity(&db);
    let graph = build_graph(&db);
    let tables: Vec<Value> = db
        .schemas()
        .iter()
        .enumerate()
        .map(|(t, s)| json!({ "name": s.name, "rows": db.num_rows(t), "columns": s.columns.len() }))
        .collect();
    let relations: Vec<Value> = (0..graph.num_relations())
        .map(|r| json!({ "rel_id": r, "name": graph.relation_name(r), "edges": graph.num_edges(r) }))
        .collect();
    let report = json!({
        "tables": tables,
        "total_rows": db.total_rows(),
        "parse_warnings": db.parse_warnings(),
        "links": integrity,
        "relations": relations,
    });
    write_json(&out.join("ingest.json"), &report)?;
    for (t, s) in db.schemas().iter().enumerate() {
        println!("table {:<24} {:>9} rows", s.name, db.num_rows(t));
    }
    for (name, l) in &integrity.links {
        println!("link  {name:<40} dangling {:>6}  null {:>6}", l.dangling, l.null);
    }
    println!(
        "{} relations, {} parse warnings",
        graph.num_relations(),
        db.parse_warnings()
    );
    if dump_graph {
        graph.dump_jsonl(&out.join("graph.jsonl"))?;
    }
    Ok(())
}

/// Trains one model from the config's training settings.
pub fn train_model(data: &Loaded, config: TrainConfig) -> Result<(RelMoss, TrainOutcome)> {
    let mut m = RelMoss::new(&data.db, &data.graph, &data.task, config)?;
    let outcome = m.fit(&data.graph, &data.task)?;
    Ok((m, outcome))
}

fn train(cfg: &RunConfig, out: &Path, dumps: Dumps) -> Result<()> {
    let data = load_data(cfg)?;
    if dumps.dump_graph {
        data.graph.dump_jsonl(&out.join("graph.jsonl"))?;
    }
    let (m, outcome) = train_model(&data, cfg.train.clone())?;
    m.save(&data.graph, &out.join("model.json"))?;
    write_json(&out.join("history.json"), &outcome)?;
    let test = m.evaluate(&data.graph, &data.task, Split::Test, m.epoch())?;
    write_json(&out.join("metrics_test.json"), &test)?;
    let mut reports: Vec<&MetricsReport> = outcome.history.iter().filter_map(|h| h.val.as_ref()).collect();
    reports.push(&test);
    write_metrics_csv(&out.join("metrics.csv"), &reports)?;
    if dumps.dump_gates {
        let graph = &data.graph;
        let rows = outcome.history.iter().flat_map(|h| {
            h.gate_means
                .iter()
                .enumerate()
                .filter_map(move |(r, g)| g.map(|g| [h.epoch.to_string(), graph.relation_name(r), g.to_string()]))
        });
        write_rows(&out.join("gates.csv"), &["epoch", "relation", "mean_gate"], rows)?;
    }
    if dumps.dump_synth {
        let rows = outcome.synth_log.iter().map(|s| {
            [
                s.epoch.to_string(),
                data.db.primary_key(data.task.table, s.anchor).to_string(),
                data.db.primary_key(data.task.table, s.partner).to_string(),
                s.lambda.to_string(),
                s.distance.to_string(),
                join_floats(&s.signature),
            ]
        });
        write_rows(
            &out.join("synth.csv"),
            &["epoch", "anchor", "partner", "lambda", "distance", "signature"],
            rows,
        )?;
    }
    println!(
        "test (epoch {}): b_acc {:.4} g_mean {:.4} tpr {:.4} tnr {:.4}",
        test.epoch,
        test.b_acc,
        test.g_mean,
        test.tpr(),
        test.tnr()
    );
    Ok(())
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn eval(cfg: &RunConfig, checkpoint: &Path, split: Split, out: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    let m = RelMoss::load(&data.db, &data.graph, checkpoint)?;
    let pred = m.predict(&data.graph, &data.task, split)?;
    let report = pred.report(m.epoch(), split);
    let dir = out;
    write_json(&dir.join(format!("metrics_{}.json", split.as_str())), &report)?;
    write_metrics_csv(&dir.join("metrics.csv"), &[&report])?;
    let rows = (0..pred.rows.len()).map(|i| {
        [
            data.db.primary_key(data.task.table, pred.rows[i]).to_string(),
            pred.labels[i].to_string(),
            pred.logits[i].to_string(),
            pred.probabilities[i].to_string(),
        ]
    });
    write_rows(
        &dir.join("predictions.csv"),
        &["entity_id", "label", "logit", "probability"],
        rows,
    )?;
    println!(
        "{} (epoch {}): b_acc {:.4} g_mean {:.4}",
        split.as_str(),
        report.epoch,
        report.b_acc,
        report.g_mean
    );
    Ok(())
}

/// The four ablation variants: name and config.
pub fn ablation_variants(base: &TrainConfig) -> Vec<(&'static str, TrainConfig)> {
    vec![
        ("full", base.clone()),
        (
            "disable_gate",
            TrainConfig {
                disable_gate: true,
                ..base.clone()
            },
        ),
        (
            "disable_syn",
            TrainConfig {
                disable_syn: true,
                ..base.clone()
            },
        ),
        (
            "omega0",
            TrainConfig {
                omega: 0.0,
                ..base.clone()
            },
        ),
    ]
}

fn ablate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    let mut rows = Vec::new();
    let mut reports = serde_json::Map::new();
    for (name, tc) in ablation_variants(&cfg.train) {
        let (m, _) = train_model(&data, tc)?;
        let r = m.evaluate(&data.graph, &data.task, Split::Test, m.epoch())?;
        println!("{name:<13} b_acc {:.4} g_mean {:.4}", r.b_acc, r.g_mean);
        rows.push([name.to_string(), r.b_acc.to_string(), r.g_mean.to_string()]);
        reports.insert(name.to_string(), serde_json::to_value(&r)?);
    }
    write_rows(&out.join("ablation.csv"), &["variant", "b_acc", "g_mean"], rows)?;
    write_json(&out.join("ablation.json"), &reports)
}

#[derive(Clone, Debug, Serialize)]
pub struct CollapseSummary {
    pub star_expected: Vec<f64>,
    pub star_observed: Vec<f64>,
    pub star_max_error: f64,
    pub star_pass: bool,
    pub random_fixtures: usize,
    pub random_violations: usize,
    pub bound_pass: bool,
}

/// Star-fixture decay and the per-layer bound over random fixtures.
pub fn collapse_suite(c: &CollapseConfig) -> Result<(CollapseSummary, Vec<[String; 6]>)> {
    let mut rows = Vec::new();
    let (g, mask) = star_fixture(c.star_minorities, c.majors_per_minor)?;
    let stack = LinearStack {
        w_self: None,
        w_rel: vec![(0, Tensor::scalar(1.0))],
    };
    let x0 = Tensor::column(mask.iter().map(|&m| u8::from(m) as f64).collect());
    let curve = collapse_curve(&g, &mask, &stack, &x0, c.layers, 0)?
        .ok_or_else(|| Error::Graph("star probe has a single-class neighbourhood".into()))?;
    let pi = 1.0 / (1 + c.majors_per_minor) as f64;
    let expected: Vec<f64> = (0..=c.layers).map(|l| pi.powi(l as i32) * curve.pooled[0]).collect();
    let star_max_error = curve
        .pooled
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    for l in 0..=c.layers {
        rows.push(curve_row("star", l, curve.pooled[l], curve.attributed[l], curve.bound[l], Some(expected[l])));
    }
    let mut rng = Rng::new(c.seed);
    let mut violations = 0;
    for k in 0..c.random_fixtures {
        let mut frng = rng.fork(k as u64);
        let (g, mask) = random_fixture(c.random_nodes, c.random_relations, c.random_max_degree, &mut frng)?;
        let d = c.random_dim;
        let mut mat = |s: f64| Tensor::from_vec(d, d, (0..d * d).map(|_| s * frng.normal()).collect());
        let stack = LinearStack {
            w_self: Some(mat(0.5)?),
            w_rel: (0..c.random_relations)
                .map(|r| Ok((2 * r, mat(0.7)?)))
                .collect::<Result<_>>()?,
        };
        let x0 = Tensor::from_vec(
            c.random_nodes,
            d,
            (0..c.random_nodes * d).map(|_| frng.normal()).collect(),
        )?;
        let probe = frng.below(c.random_nodes);
        let Some(curve) = collapse_curve(&g, &mask, &stack, &x0, c.layers, probe)? else {
            continue;
        };
        if !curve.bound_holds() {
            violations += 1;
        }
        for l in 0..=c.layers {
            rows.push(curve_row(&format!("random{k}"), l, curve.pooled[l], curve.attributed[l], curve.bound[l], None));
        }
    }
    let summary = CollapseSummary {
        star_pass: star_max_error <= 1e-9,
        star_expected: expected,
        star_observed: curve.pooled,
        star_max_error,
        random_fixtures: c.random_fixtures,
        random_violations: violations,
        bound_pass: violations == 0,
    };
    Ok((summary, rows))
}

fn curve_row(
    fixture: &str,
    layer: usize,
    pooled: f64,
    attributed: Option<f64>,
    bound: Option<f64>,
    expected: Option<f64>,
) -> [String; 6] {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    [
        fixture.to_string(),
        layer.to_string(),
        pooled.to_string(),
        opt(attributed),
        opt(bound),
        opt(expected),
    ]
}

fn pass(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}

fn diagnose_collapse(c: &CollapseConfig, out: &Path) -> Result<()> {
    let (summary, rows) = collapse_suite(c)?;
    let dir = out;
    write_rows(
        &dir.join("collapse.csv"),
        &["fixture", "layer", "pooled", "attributed", "bound", "expected"],
        rows,
    )?;
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "{} star decay: max |observed - expected| = {:.3e}",
        pass(summary.star_pass),
        summary.star_max_error
    );
    println!(
        "{} layer bound: {} violations over {} random fixtures",
        pass(summary.bound_pass),
        summary.random_violations,
        summary.random_fixtures
    );
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsistencySummary {
    pub omega: f64,
    pub shift: f64,
    pub baseline_omega: f64,
    pub baseline_shift: f64,
    pub n_true: usize,
    pub n_synthetic: usize,
    pub permutation_q95: Option<f64>,
    pub pass: bool,
}

/// Shift between training-minority signatures and synthetic signatures
/// probed at the model's ω and at the baseline ω.
pub fn consistency_probe(data: &Loaded, m: &RelMoss, c: &ConsistencyConfig) -> Result<ConsistencySummary> {
    let truth: Vec<Vec<f64>> = data
        .task
        .indices(Split::Train)
        .into_iter()
        .filter(|&i| data.task.labels[i] == m.model.minority_label)
        .map(|i| m.signatures().row(data.task.rows[i]).to_vec())
        .collect();
    let omega = m.config().omega;
    let probe = |w: f64| -> Result<Vec<Vec<f64>>> {
        Ok(m.probe_synthesis(&data.graph, &data.task, w, c.per_anchor, c.seed)?
            .into_iter()
            .map(|r| r.signature)
            .collect())
    };
    let synth = probe(omega)?;
    let base = probe(c.baseline_omega)?;
    let shift = consistency_shift(&truth, &synth)?;
    let baseline_shift = consistency_shift(&truth, &base)?;
    let permutation_q95 = if c.permutations > 0 {
        let mut rng = Rng::new(c.seed);
        Some(permutation_quantile(&truth, &synth, c.permutations, 0.95, &mut rng)?.1)
    } else {
        None
    };
    Ok(ConsistencySummary {
        omega,
        shift,
        baseline_omega: c.baseline_omega,
        baseline_shift,
        n_true: truth.len(),
        n_synthetic: synth.len(),
        permutation_q95,
        pass: shift < baseline_shift,
    })
}

fn diagnose_consistency(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    let m = RelMoss::load(&data.db, &data.graph, checkpoint)?;
    let s = consistency_probe(&data, &m, &cfg.consistency)?;
    let dir = out;
    write_rows(
        &dir.join("consistency.csv"),
        &["omega", "shift", "n_true", "n_synthetic"],
        [
            [s.omega.to_string(), s.shift.to_string(), s.n_true.to_string(), s.n_synthetic.to_string()],
            [
                s.baseline_omega.to_string(),
                s.baseline_shift.to_string(),
                s.n_true.to_string(),
                s.n_synthetic.to_string(),
            ],
        ],
    )?;
    write_json(&dir.join("summary.json"), &s)?;
    println!(
        "{} consistency shift: {:.6} at omega {} vs {:.6} at omega {}",
        pass(s.pass),
        s.shift,
        s.omega,
        s.baseline_shift,
        s.baseline_omega
    );
    Ok(())
}
