//! One JSON object per line; gzip when the path ends in `.gz`.

use crate::error::{GamedError, Result};
use crate::record::NewsRecord;
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const REQUIRED: [&str; 4] = ["id", "text", "image", "label"];
const IMAGE_REQUIRED: [&str; 3] = ["height", "width", "data"];

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GamedError + '_ {
    move |source| GamedError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_jsonl(records: &[NewsRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out: Box<dyn Write> = if is_gz(path) {
        Box::new(GzEncoder::new(BufWriter::new(file), Compression::default()))
    } else {
        Box::new(BufWriter::new(file))
    };
    for r in records {
        let line = serde_json::to_string(r).expect("records serialise");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))?;
    Ok(())
}

/// Parses one line (1-based `line` for error messages).
pub fn parse_record(text: &str, line: usize) -> Result<NewsRecord> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| GamedError::MalformedLine {
        line,
        reason: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| GamedError::MalformedLine {
        line,
        reason: "expected a JSON object".into(),
    })?;
    if let Some(key) = REQUIRED.into_iter().find(|k| !obj.contains_key(*k)) {
        return Err(GamedError::MissingKey { line, key });
    }
    if let Some(image) = obj["image"].as_object() {
        if let Some(key) = IMAGE_REQUIRED.into_iter().find(|k| !image.contains_key(*k)) {
            return Err(GamedError::MissingKey { line, key });
        }
    }
    let record: NewsRecord = serde_json::from_value(value).map_err(|e| GamedError::MalformedLine {
        line,
        reason: e.to_string(),
    })?;
    let bad = |reason: String| GamedError::MalformedLine { line, reason };
    if record.image.height * record.image.width != record.image.data.len() {
        return Err(bad(format!(
            "image data has {} values for {}x{}",
            record.image.data.len(),
            record.image.height,
            record.image.width
        )));
    }
    if record.label > 1 {
        return Err(bad(format!("label {} is not 0 or 1", record.label)));
    }
    if record.consistency.is_some_and(|c| c > 1) {
        return Err(bad("consistency is not 0 or 1".into()));
    }
    Ok(record)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<NewsRecord>> {
    let file = File::open(path).map_err(io_err(path))?;
    let reader: Box<dyn Read> = if is_gz(path) {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    let mut records = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_record(&line, i + 1)?);
    }
    Ok(records)
}
