//! The four subcommands. Each returns its in-memory results as well as
//! writing its files, so callers can inspect outcomes without re-parsing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lsp_core::baselines::{dp_perturb, k_anonymize, Value};
use lsp_core::data::{
    load_delimited, load_idx, load_model, save_model, split_normalize, synth_two_domain_with, tag_second_domain,
    Dataset, SynthConfig,
};
use lsp_core::eval::{
    evaluate_release, latency_bench, ClassifierConfig, EvalOptions, LatencyReport, LatencyRow, MetricsReport,
    MlpClassifier, Release, Stage,
};
use lsp_core::model::{init_model, LspModel, ModelSpec};
use lsp_core::numerics::Tensor;
use lsp_core::rng::{component, derive_seed};
use lsp_core::training::{train, EpochStats};

use crate::config::{DataSource, Method, RunConfig};
use crate::error::CliError;
use crate::record::{float, opt_float, parse_all, render_all, Record, NA};

pub const MODEL_FILE: &str = "model.lspm";
pub const HISTORY_FILE: &str = "history.tsv";
pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_KV: &str = "report.kv";
pub const COMPARE_TEXT: &str = "compare.txt";
pub const COMPARE_KV: &str = "compare.kv";
pub const BENCH_TEXT: &str = "bench.txt";
pub const BENCH_KV: &str = "bench.kv";

/// Field order of a `metrics` record after `record=metrics`.
pub const METRICS_FIELDS: &[&str] = &[
    "method",
    "accuracy",
    "f1",
    "auc_roc",
    "avg_precision",
    "privacy_protection",
    "attacker_accuracy_raw",
    "attacker_accuracy_obf",
    "chance",
    "mse",
    "psnr_db",
    "ssim",
    "dp_diff",
    "eo_diff",
    "released_train_rows",
    "released_test_rows",
];

/// Field order of a `latency` record after `record=latency`.
pub const LATENCY_FIELDS: &[&str] = &["stage", "batch_size", "mean_ms", "std_ms", "n"];

pub const HISTORY_COLUMNS: &str = "epoch\trecon_loss\tdisc_loss\tsens_loss\tdisc_accuracy";

pub fn load_dataset(config: &RunConfig) -> Result<Dataset, CliError> {
    let ds = match &config.data {
        DataSource::Synthetic {
            n_per_class,
            n_features,
        } => synth_two_domain_with(SynthConfig {
            n_per_class: *n_per_class,
            n_features: *n_features,
            seed: config.seed,
        })?,
        DataSource::Delimited { path, schema } => load_delimited(path, schema)?,
        DataSource::Idx { images, labels } => tag_second_domain(load_idx(images, labels)?)?,
    };
    ds.validate()?;
    Ok(ds)
}

/// Normalized `(train, test)` split of the configured dataset, plus the
/// fingerprint of the full dataset.
pub fn load_split(config: &RunConfig) -> Result<(Dataset, Dataset, u64), CliError> {
    let ds = load_dataset(config)?;
    let fp = ds.fingerprint();
    let (train, test, _) = split_normalize(&ds, config.train_fraction, config.seed)?;
    Ok((train, test, fp))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn meta(config: &RunConfig, kind: &str) -> Record {
    Record::new("meta")
        .with("output", kind)
        .with("experiment", &config.experiment)
        .with("config_fingerprint", config.fingerprint())
        .with("seed", config.seed)
}

pub struct TrainOutcome {
    pub model: LspModel,
    pub history: Vec<EpochStats>,
    pub model_path: PathBuf,
    pub history_path: PathBuf,
}

pub fn render_history(config: &RunConfig, history: &[EpochStats]) -> String {
    let mut out = format!(
        "# experiment={} config_fingerprint={} seed={}\n{HISTORY_COLUMNS}\n",
        config.experiment,
        config.fingerprint(),
        config.seed
    );
    for h in history {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            h.epoch + 1,
            float(h.recon_loss),
            float(h.disc_loss),
            float(h.sens_loss),
            float(h.disc_train_accuracy)
        );
    }
    out
}

pub fn model_spec(config: &RunConfig, train: &Dataset) -> ModelSpec {
    ModelSpec {
        encoder_hidden: config.model.encoder_hidden.clone(),
        decoder_hidden: config.model.decoder_hidden.clone(),
        disc_hidden: config.model.disc_hidden.clone(),
        ..ModelSpec::new(
            train.n_features(),
            config.train.z_s_dim,
            config.train.z_ns_dim,
            train.n_sensitive_classes(),
        )
    }
}

/// Trains an LSP model on the training split; writes the model, the
/// per-epoch history and any scheduled checkpoints to `out`.
pub fn cmd_train(config: &RunConfig, out: &Path) -> Result<TrainOutcome, CliError> {
    if config.method != Method::Lsp {
        return Err(CliError::Config(format!(
            "train needs method = lsp, got {}",
            config.method
        )));
    }
    let (train_set, _, _) = load_split(config)?;
    create_dir(out)?;
    let model = init_model(&model_spec(config, &train_set), config.seed)?;
    let (model, history) = train(model, &train_set, &config.train, Some(out))?;
    let model_path = out.join(MODEL_FILE);
    save_model(&model, &model_path)?;
    let history_path = out.join(HISTORY_FILE);
    write_file(&history_path, &render_history(config, &history))?;
    Ok(TrainOutcome {
        model,
        history,
        model_path,
        history_path,
    })
}

fn to_rows(x: &Tensor) -> Vec<Vec<Value>> {
    (0..x.rows())
        .map(|i| x.row(i).iter().map(|&v| Value::Num(v)).collect())
        .collect()
}

fn anonymize(config: &RunConfig, x: &Tensor) -> Result<(Tensor, Vec<usize>), CliError> {
    let qi: Vec<usize> = config
        .kanon
        .quasi_ids
        .clone()
        .unwrap_or_else(|| (0..x.cols()).collect());
    let table = k_anonymize(&to_rows(x), &qi, config.kanon.k)?;
    if table.rows.is_empty() {
        return Err(CliError::Data(format!(
            "k-anonymity with k = {} suppressed all {} rows",
            config.kanon.k,
            x.rows()
        )));
    }
    let released = Tensor::from_rows(&table.to_numeric()?).map_err(|e| CliError::Numerical(e.to_string()))?;
    Ok((released, table.source_rows))
}

fn resolve_model(model_path: Option<&Path>, out: &Path) -> Result<LspModel, CliError> {
    let path = model_path.map_or_else(|| out.join(MODEL_FILE), Path::to_path_buf);
    Ok(load_model(&path)?)
}

fn check_model_fits(model: &LspModel, train: &Dataset) -> Result<(), CliError> {
    if model.spec.input_dim != train.n_features() {
        return Err(CliError::Config(format!(
            "model expects {} features, dataset has {}",
            model.spec.input_dim,
            train.n_features()
        )));
    }
    Ok(())
}

/// Releases both splits under the configured method. LSP needs a model.
pub fn release(
    config: &RunConfig,
    train: &Dataset,
    test: &Dataset,
    model: Option<&LspModel>,
) -> Result<Release, CliError> {
    let all = |n: usize| (0..n).collect::<Vec<_>>();
    Ok(match config.method {
        Method::Raw => Release::raw(train, test),
        Method::Lsp => {
            let model = model.ok_or_else(|| CliError::Config("lsp evaluation needs a model".into()))?;
            check_model_fits(model, train)?;
            let test_code = model.encode(&test.x)?;
            Release {
                train_x: model.encode(&train.x)?.z_ns,
                train_rows: all(train.len()),
                test_reconstruction: Some(model.decode(&test_code)?),
                test_x: test_code.z_ns,
                test_rows: all(test.len()),
            }
        }
        Method::KAnonymity => {
            let (train_x, train_rows) = anonymize(config, &train.x)?;
            let (test_x, test_rows) = anonymize(config, &test.x)?;
            Release {
                train_x,
                train_rows,
                test_reconstruction: Some(test_x.clone()),
                test_x,
                test_rows,
            }
        }
        Method::Dp => {
            let test_x = dp_perturb(&test.x, &config.dp, derive_seed(config.seed, component::DP_TEST))?;
            Release {
                train_x: dp_perturb(&train.x, &config.dp, derive_seed(config.seed, component::DP_TRAIN))?,
                train_rows: all(train.len()),
                test_reconstruction: Some(test_x.clone()),
                test_x,
                test_rows: all(test.len()),
            }
        }
    })
}

pub fn metrics_record(method: Method, report: &MetricsReport, release: &Release) -> Record {
    let fid = report.fidelity;
    let fair = report.fairness;
    Record::new("metrics")
        .with("method", method)
        .with("accuracy", float(report.utility.accuracy))
        .with("f1", float(report.utility.f1))
        .with("auc_roc", float(report.utility.auc_roc))
        .with("avg_precision", float(report.utility.avg_precision))
        .with("privacy_protection", float(report.privacy_protection))
        .with("attacker_accuracy_raw", float(report.attacker_accuracy_raw))
        .with("attacker_accuracy_obf", float(report.attacker_accuracy_obf))
        .with("chance", float(report.chance))
        .with("mse", opt_float(fid.map(|f| f.mse)))
        .with("psnr_db", opt_float(fid.map(|f| f.psnr_db)))
        .with("ssim", opt_float(fid.map(|f| f.ssim)))
        .with("dp_diff", opt_float(fair.map(|f| f.dp_diff)))
        .with("eo_diff", opt_float(fair.and_then(|f| f.eo_diff)))
        .with("released_train_rows", release.train_rows.len())
        .with("released_test_rows", release.test_rows.len())
}

fn latency_record(row: &LatencyRow) -> Record {
    Record::new("latency")
        .with("stage", row.stage)
        .with("batch_size", row.batch_size)
        .with("mean_ms", float(row.mean_ms))
        .with("std_ms", float(row.std_ms))
        .with("n", row.n())
}

pub struct EvalOutcome {
    pub report: MetricsReport,
    pub records: Vec<Record>,
    pub dataset_fingerprint: u64,
    pub text_path: PathBuf,
    pub kv_path: PathBuf,
}

fn downstream_on_release(config: &RunConfig, train: &Dataset, release: &Release) -> Result<MlpClassifier, CliError> {
    let y: Vec<usize> = release.train_rows.iter().map(|&i| train.y_util[i]).collect();
    Ok(MlpClassifier::fit(
        &release.train_x,
        &y,
        train.n_utility_classes(),
        &ClassifierConfig::default(),
        derive_seed(config.seed, component::DOWNSTREAM),
    )?)
}

fn bench(config: &RunConfig, model: &LspModel, downstream: &MlpClassifier) -> Result<LatencyReport, CliError> {
    Ok(latency_bench(
        model,
        &config.bench.batch_sizes,
        config.bench.repetitions,
        Some(downstream),
        true,
        config.seed,
    )?)
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| NA.to_string(), |v| format!("{v:.prec$}"))
}

fn render_report_text(config: &RunConfig, fp: u64, r: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "experiment          {}", config.experiment);
    let _ = writeln!(out, "method              {}", config.method);
    let _ = writeln!(out, "seed                {}", config.seed);
    let _ = writeln!(out, "config fingerprint  {}", config.fingerprint());
    let _ = writeln!(out, "dataset fingerprint {fp:016x}");
    let _ = writeln!(out);
    let _ = writeln!(out, "utility accuracy    {:.4}", r.utility.accuracy);
    let _ = writeln!(out, "utility f1          {:.4}", r.utility.f1);
    let _ = writeln!(out, "utility auc_roc     {:.4}", r.utility.auc_roc);
    let _ = writeln!(out, "utility avg prec    {:.4}", r.utility.avg_precision);
    let _ = writeln!(out, "privacy protection  {:.4}", r.privacy_protection);
    let _ = writeln!(out, "attacker (raw)      {:.4}", r.attacker_accuracy_raw);
    let _ = writeln!(out, "attacker (released) {:.4}", r.attacker_accuracy_obf);
    let _ = writeln!(out, "chance              {:.4}", r.chance);
    if let Some(f) = r.fidelity {
        let _ = writeln!(out, "mse                 {:.6}", f.mse);
        let _ = writeln!(out, "psnr (dB)           {:.3}", f.psnr_db);
        let _ = writeln!(out, "ssim                {:.4}", f.ssim);
    }
    if let Some(f) = r.fairness {
        let _ = writeln!(out, "dp_diff             {:.4}", f.dp_diff);
        let _ = writeln!(out, "eo_diff             {}", fmt_opt(f.eo_diff, 4));
    }
    if !r.latency.is_empty() {
        let _ = writeln!(out);
        out.push_str(&latency_table(&r.latency));
    }
    out
}

fn latency_table(rows: &[LatencyRow]) -> String {
    let mut out = format!(
        "{:<8} {:>6} {:>12} {:>12} {:>4}\n",
        "stage", "batch", "mean_ms", "std_ms", "n"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<8} {:>6} {:>12.4} {:>12.4} {:>4}",
            r.stage.name(),
            r.batch_size,
            r.mean_ms,
            r.std_ms,
            r.n()
        );
    }
    out
}

/// Releases the configured split, trains the fixed downstream classifier
/// and attacker, and writes `report.txt` and `report.kv`.
pub fn cmd_eval(config: &RunConfig, model_path: Option<&Path>, out: &Path) -> Result<EvalOutcome, CliError> {
    if config.eval.latency && config.method != Method::Lsp {
        return Err(CliError::Config(format!(
            "eval.latency applies to lsp only, method is {}",
            config.method
        )));
    }
    let (train_set, test_set, fp) = load_split(config)?;
    let model = match config.method {
        Method::Lsp => Some(resolve_model(model_path, out)?),
        _ => None,
    };
    let rel = release(config, &train_set, &test_set, model.as_ref())?;
    let options = EvalOptions {
        classifier: ClassifierConfig::default(),
        fidelity: config.eval.fidelity,
        fairness: config.eval.fairness,
        seed: config.seed,
    };
    let mut report = evaluate_release(&train_set, &test_set, &rel, &options)?;
    let mut warnings = Vec::new();
    if let (true, Some(model)) = (config.eval.latency, &model) {
        let downstream = downstream_on_release(config, &train_set, &rel)?;
        let lat = bench(config, model, &downstream)?;
        warnings = lat.warnings;
        report.latency = lat.rows;
    }
    report.validate()?;

    let mut records = vec![meta(config, "report")
        .with("method", config.method)
        .with("dataset_fingerprint", format!("{fp:016x}"))];
    records.push(metrics_record(config.method, &report, &rel));
    records.extend(report.latency.iter().map(latency_record));
    records.extend(warnings.iter().map(|w| Record::new("warning").with("message", w)));

    create_dir(out)?;
    let text_path = out.join(REPORT_TEXT);
    let kv_path = out.join(REPORT_KV);
    write_file(&text_path, &render_report_text(config, fp, &report))?;
    write_file(&kv_path, &render_all(&records))?;
    Ok(EvalOutcome {
        report,
        records,
        dataset_fingerprint: fp,
        text_path,
        kv_path,
    })
}

pub struct CompareOutcome {
    /// One `metrics` record per input report, in input order.
    pub rows: Vec<Record>,
    pub table: String,
    pub text_path: PathBuf,
    pub kv_path: PathBuf,
}

fn read_report(path: &Path) -> Result<(Record, Record), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let records = parse_all(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let find = |kind: &str| {
        records
            .iter()
            .find(|r| r.kind() == kind)
            .cloned()
            .ok_or_else(|| CliError::Data(format!("{}: no `{kind}` record", path.display())))
    };
    Ok((find("meta")?, find("metrics")?))
}

/// Renders `rows` as an aligned table with the `metrics` field order.
pub fn render_table(rows: &[Record]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            METRICS_FIELDS
                .iter()
                .map(|&k| {
                    let v = r.get(k).unwrap_or(NA);
                    match v.parse::<f64>() {
                        Ok(x) if v.contains('.') || v.contains('e') || v == "inf" => format!("{x:.4}"),
                        _ => v.to_string(),
                    }
                })
                .collect()
        })
        .collect();
    let widths: Vec<usize> = METRICS_FIELDS
        .iter()
        .enumerate()
        .map(|(j, h)| cells.iter().map(|c| c[j].len()).chain([h.len()]).max().unwrap_or(0))
        .collect();
    let line = |vals: Vec<&str>| {
        vals.iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (v, w))| if j == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(METRICS_FIELDS.to_vec());
    out.push('\n');
    for c in &cells {
        out.push_str(&line(c.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

/// Joins completed eval reports (`compare.reports`) into one table. All
/// reports must share dataset fingerprint and seed.
pub fn cmd_compare(config: &RunConfig, out: &Path) -> Result<CompareOutcome, CliError> {
    if config.compare_reports.len() < 2 {
        return Err(CliError::Config(format!(
            "compare.reports must list at least 2 report files, got {}",
            config.compare_reports.len()
        )));
    }
    let mut metas = Vec::new();
    let mut rows = Vec::new();
    for path in &config.compare_reports {
        let (m, r) = read_report(path)?;
        metas.push((path, m));
        rows.push(r);
    }
    let (first_path, first) = &metas[0];
    let fp = first.require("dataset_fingerprint")?.to_string();
    let seed = first.require("seed")?.to_string();
    for (path, m) in &metas[1..] {
        for (key, expected) in [("dataset_fingerprint", &fp), ("seed", &seed)] {
            let got = m.require(key)?;
            if got != expected {
                return Err(CliError::Comparability(format!(
                    "{key} {got} in {} differs from {expected} in {}",
                    path.display(),
                    first_path.display()
                )));
            }
        }
    }

    let table = render_table(&rows);
    let mut records = vec![meta(config, "compare")
        .with("dataset_fingerprint", &fp)
        .with("runs", rows.len())];
    records.extend(rows.iter().cloned());

    create_dir(out)?;
    let text_path = out.join(COMPARE_TEXT);
    let kv_path = out.join(COMPARE_KV);
    write_file(&text_path, &format!("dataset fingerprint {fp}, seed {seed}\n\n{table}"))?;
    write_file(&kv_path, &render_all(&records))?;
    Ok(CompareOutcome {
        rows,
        table,
        text_path,
        kv_path,
    })
}

pub struct BenchOutcome {
    pub latency: LatencyReport,
    pub encode_r_squared: Option<f64>,
    pub warnings: Vec<String>,
    pub records: Vec<Record>,
    pub text_path: PathBuf,
    pub kv_path: PathBuf,
}

/// Times encode, process (fixed downstream classifier on the released
/// slice) and decode at each configured batch size.
pub fn cmd_bench(config: &RunConfig, model_path: Option<&Path>, out: &Path) -> Result<BenchOutcome, CliError> {
    let model = resolve_model(model_path, out)?;
    let (train_set, test_set, fp) = load_split(config)?;
    check_model_fits(&model, &train_set)?;
    let lsp = RunConfig {
        method: Method::Lsp,
        ..config.clone()
    };
    let rel = release(&lsp, &train_set, &test_set, Some(&model))?;
    let downstream = downstream_on_release(config, &train_set, &rel)?;
    let latency = bench(config, &model, &downstream)?;

    let mut warnings = Vec::new();
    if config.bench.hardware.is_none() {
        warnings.push("no hardware description given (bench.hardware)".to_string());
    }
    warnings.extend(latency.warnings.iter().cloned());
    let fits: Vec<(Stage, Option<f64>)> = [Stage::Encode, Stage::Process, Stage::Decode]
        .into_iter()
        .map(|s| (s, latency.linear_fit(s).map(|f| f.r_squared)))
        .collect();
    let encode_r_squared = fits[0].1;

    let mut records = vec![meta(config, "bench")
        .with("dataset_fingerprint", format!("{fp:016x}"))
        .with("hardware", config.bench.hardware.as_deref().unwrap_or(NA))
        .with("repetitions", config.bench.repetitions)
        .with("timer_resolution_ns", float(latency.timer_resolution_ns))];
    records.extend(latency.rows.iter().map(latency_record));
    for (stage, r2) in &fits {
        records.push(
            Record::new("fit")
                .with("stage", stage)
                .with("r_squared", opt_float(*r2)),
        );
    }
    records.extend(warnings.iter().map(|w| Record::new("warning").with("message", w)));

    let mut text = format!(
        "{}\nhardware: {}\nrepetitions: {}, timer resolution: {} ns\n\n",
        latency.header,
        config.bench.hardware.as_deref().unwrap_or("unspecified"),
        config.bench.repetitions,
        latency.timer_resolution_ns
    );
    text.push_str(&latency_table(&latency.rows));
    text.push('\n');
    for (stage, r2) in &fits {
        let _ = writeln!(text, "linear fit R² ({stage} vs batch size): {}", fmt_opt(*r2, 4));
    }
    for w in &warnings {
        let _ = writeln!(text, "warning: {w}");
    }

    create_dir(out)?;
    let text_path = out.join(BENCH_TEXT);
    let kv_path = out.join(BENCH_KV);
    write_file(&text_path, &text)?;
    write_file(&kv_path, &render_all(&records))?;
    Ok(BenchOutcome {
        latency,
        encode_r_squared,
        warnings,
        records,
        text_path,
        kv_path,
    })
}
