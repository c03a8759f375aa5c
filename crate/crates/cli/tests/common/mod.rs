#![allow(dead_code)]

use gamed_cli::modelfile;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

#[allow(unused_imports)]
pub use gamed_cli::report::{EVAL_SCHEMA, TRACE_SCHEMA};

pub fn gamed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gamed")).args(args).output().expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

pub const SMALL_CONFIG: &str = "\
seed = 4

[data]
n_train = 48
n_val = 16
n_test = 16
grid = 16

[model.encoder]
grid = 16

[train]
epochs = 1
batch_size = 16
";

pub fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.toml");
    fs::write(&p, SMALL_CONFIG).unwrap();
    p
}

/// Generated data and a model trained on it, under one directory.
pub struct Fixture {
    pub config: PathBuf,
    pub data: PathBuf,
    pub run: PathBuf,
}

impl Fixture {
    pub fn new(dir: &Path, epochs: usize) -> Self {
        let config = small_config(dir);
        let data = dir.join("data");
        let run = dir.join("run");
        let o = gamed(&["gen-data", "--spec", s(&config), "--out", s(&data)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let e = epochs.to_string();
        let o = gamed(&["train", "--config", s(&config), "--data", s(&data), "--out", s(&run), "--epochs", &e]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        Self { config, data, run }
    }

    pub fn model(&self) -> PathBuf {
        self.run.join("model.bin")
    }
}

pub fn copy_data(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for f in ["train.jsonl", "val.jsonl", "test.jsonl"] {
        fs::copy(from.join(f), to.join(f)).unwrap();
    }
}

pub fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))).unwrap()
}

/// Violations of `schema` by `doc`, empty when it validates.
pub fn schema_errors(schema: &str, doc: &serde_json::Value) -> Vec<String> {
    let schema: serde_json::Value = serde_json::from_str(schema).unwrap();
    let v = jsonschema::validator_for(&schema).expect("schema compiles");
    v.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path)).collect()
}

pub fn assert_valid(schema: &str, doc: &serde_json::Value) {
    let errs = schema_errors(schema, doc);
    assert!(errs.is_empty(), "{errs:?}");
}

/// First record on which every module's confidence lies strictly between the thresholds.
pub fn all_mid_record(model: &Path, data: &Path) -> Option<String> {
    let (model, _) = modelfile::load(model).unwrap();
    let t = model.config.thresholds;
    gamed_core::read_jsonl(data).unwrap().into_iter().find_map(|r| {
        let out = model.predict(&r).unwrap();
        out.vote
            .trace
            .steps
            .iter()
            .all(|st| t.low < st.p && st.p < t.high)
            .then_some(r.id)
    })
}
