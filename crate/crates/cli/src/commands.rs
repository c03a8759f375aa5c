use crate::config::{Overrides, RunConfig};
use crate::data::{check_records, read_file, read_splits};
use crate::error::{CliError, CliResult};
use crate::modelfile;
use crate::report::{EvalFile, Trace};
use gamed_core::synthdata::SPLIT_NAMES;
use gamed_core::train::EpochRow;
use gamed_core::{
    evaluate_report, generate, run_ablation, train, write_jsonl, AblationRow, AblationVariant, GamedModel, Metrics,
};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const METRICS_HEADER: [&str; 8] = ["epoch", "split", "module", "loss", "acc", "p", "r", "f1"];

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serialises");
    text.push('\n');
    write_file(path, text)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn summary(m: &Metrics) -> String {
    format!("Acc {:.4}  P {:.4}  R {:.4}  F1 {:.4}", m.accuracy, m.precision, m.recall, m.f1)
}

#[derive(Serialize)]
struct ManifestFile {
    split: &'static str,
    file: String,
    records: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    spec: &'a gamed_core::GenSpec,
    files: Vec<ManifestFile>,
}

pub fn gen_data(spec: Option<&Path>, overrides: &Overrides) -> CliResult<()> {
    let cfg = RunConfig::load(spec, overrides)?;
    let out = cfg.out_dir()?;
    let splits = generate(&cfg.data)?;
    create_dir(out)?;
    let mut files = Vec::new();
    for (name, records) in SPLIT_NAMES.into_iter().zip([&splits.train, &splits.val, &splits.test]) {
        let file = format!("{name}.jsonl");
        let path = out.join(&file);
        write_jsonl(records, &path)?;
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        files.push(ManifestFile {
            split: name,
            file,
            records: records.len(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        println!("{name}: {} records -> {}", records.len(), path.display());
    }
    write_json(
        &out.join("manifest.json"),
        &Manifest {
            seed: cfg.seed,
            spec: &cfg.data,
            files,
        },
    )
}

fn metric_cells(m: &Metrics) -> [String; 4] {
    [m.accuracy, m.precision, m.recall, m.f1].map(|v| v.to_string())
}

pub fn metrics_csv(rows: &[EpochRow]) -> Vec<u8> {
    csv_bytes(
        &METRICS_HEADER,
        rows.iter().map(|r| {
            let mut cells = vec![r.epoch.to_string(), r.split.clone(), r.module.clone(), r.loss.to_string()];
            cells.extend(metric_cells(&r.metrics));
            cells
        }),
    )
}

#[derive(Serialize)]
struct SplitSummary {
    loss: f64,
    full: Metrics,
    veto: Metrics,
    mix: Metrics,
    modules: BTreeMap<String, Metrics>,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    seed: u64,
    config_hash: String,
    parameters: usize,
    epochs: usize,
    use_veto: bool,
    train_loss: &'a [f64],
    config: &'a RunConfig,
    test: SplitSummary,
}

pub fn train_cmd(config: Option<&Path>, data: &Path, overrides: &Overrides) -> CliResult<()> {
    let cfg = RunConfig::load(config, overrides)?;
    let out = cfg.out_dir()?.to_path_buf();
    let splits = read_splits(data)?;
    for (name, records) in SPLIT_NAMES.into_iter().zip([&splits.train, &splits.val, &splits.test]) {
        check_records(records, &cfg.model.encoder, name)?;
    }
    create_dir(&out)?;
    let mut model = GamedModel::<f32>::new(cfg.model.clone(), cfg.seed)?;
    let log = train(&mut model, &splits.train, &splits.val, &cfg.train)?;
    for r in log.rows.iter().filter(|r| r.module == "full") {
        println!("epoch {:>3} {:<5} loss {:.4}  {}", r.epoch, r.split, r.loss, summary(&r.metrics));
    }
    let report = evaluate_report(&model, &splits.test, cfg.train.consistency_weight)?;
    let use_veto = !cfg.model.ablation.disable_veto;
    let test = SplitSummary {
        loss: report.loss,
        full: report.full(use_veto),
        veto: report.veto,
        mix: report.mix,
        modules: report.modules.iter().map(|h| (h.module.to_string(), h.metrics)).collect(),
    };
    println!("test  {}", summary(&test.full));

    write_file(&out.join("metrics.csv"), metrics_csv(&log.rows))?;
    modelfile::save(&out.join("model.bin"), &model, &cfg.train)?;
    let stored = modelfile::StoredConfig {
        model: model.config.clone(),
        train: cfg.train.clone(),
    };
    write_json(
        &out.join("run.json"),
        &RunSummary {
            seed: cfg.seed,
            config_hash: stored.hash_hex(),
            parameters: model.params.numel(),
            epochs: cfg.train.epochs,
            use_veto,
            train_loss: &log.train_loss,
            config: &cfg,
            test,
        },
    )
}

/// `--out`, else the directory holding the model file.
fn report_dir(out: Option<&Path>, model: &Path) -> PathBuf {
    out.map(Path::to_path_buf).unwrap_or_else(|| {
        model
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    })
}

pub fn eval_cmd(model_path: &Path, data: &Path, no_veto: bool, out: Option<&Path>) -> CliResult<()> {
    let (model, stored) = modelfile::load(model_path)?;
    let records = read_file(data)?;
    check_records(&records, &model.config.encoder, &data.display().to_string())?;
    let report = evaluate_report(&model, &records, stored.train.consistency_weight).map_err(|e| CliError::data(data.display(), e))?;
    let use_veto = !(no_veto || model.config.ablation.disable_veto);
    let file = EvalFile::new(model_path, data, use_veto, &report);
    println!("{}", summary(&file.metrics));
    let dir = report_dir(out, model_path);
    create_dir(&dir)?;
    write_json(&dir.join("eval.json"), &file)
}

/// Keeps ids usable as file names.
fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn explain_cmd(model_path: &Path, data: &Path, id: &str, out: Option<&Path>) -> CliResult<()> {
    let (model, _) = modelfile::load(model_path)?;
    let records = read_file(data)?;
    let record = records
        .iter()
        .find(|r| r.id == id)
        .ok_or_else(|| CliError::Lookup(format!("no record with id `{id}` in {}", data.display())))?;
    check_records(std::slice::from_ref(record), &model.config.encoder, &data.display().to_string())?;
    let outputs = model.predict(record).map_err(|e| CliError::data(format!("record `{id}`"), e))?;
    let trace = Trace::new(record, &model.config, &outputs.vote);
    for line in trace.summary_lines() {
        println!("{line}");
    }
    let dir = report_dir(out, model_path);
    create_dir(&dir)?;
    write_json(&dir.join(format!("trace-{}.json", file_safe(id))), &trace)
}

pub fn parse_grid(grid: &str) -> CliResult<Vec<AblationVariant>> {
    let mut variants = Vec::new();
    for entry in grid.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let v = AblationVariant::parse(entry)?;
        if variants.iter().any(|w: &AblationVariant| w.name == v.name) {
            return Err(CliError::config("grid", format!("`{entry}` listed twice")));
        }
        variants.push(v);
    }
    if variants.is_empty() {
        return Err(CliError::config("grid", "names no variants"));
    }
    Ok(variants)
}

/// Rows by accuracy, best first; ties keep grid order.
pub fn sort_rows(rows: &mut [AblationRow]) {
    rows.sort_by(|a, b| b.metrics.accuracy.total_cmp(&a.metrics.accuracy));
}

pub fn ablate_cmd(config: Option<&Path>, data: &Path, grid: &str, overrides: &Overrides) -> CliResult<()> {
    let cfg = RunConfig::load(config, overrides)?;
    let out = cfg.out_dir()?.to_path_buf();
    let variants = parse_grid(grid)?;
    let splits = read_splits(data)?;
    for (name, records) in SPLIT_NAMES.into_iter().zip([&splits.train, &splits.val, &splits.test]) {
        check_records(records, &cfg.model.encoder, name)?;
    }
    create_dir(&out)?;
    let mut rows = run_ablation(&cfg.model, &cfg.train, &variants, &splits.train, &splits.val, &splits.test)?;
    sort_rows(&mut rows);
    for r in &rows {
        println!("{:<24} {}", r.variant, summary(&r.metrics));
    }
    let bytes = csv_bytes(
        &["variant", "acc", "p", "r", "f1"],
        rows.iter().map(|r| {
            let mut cells = vec![r.variant.clone()];
            cells.extend(metric_cells(&r.metrics));
            cells
        }),
    );
    write_file(&out.join("ablation.csv"), bytes)
}
