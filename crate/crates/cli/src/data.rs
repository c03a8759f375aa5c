use crate::error::{CliError, CliResult};
use gamed_core::encoders::{check_image, EncoderConfig};
use gamed_core::synthdata::SPLIT_NAMES;
use gamed_core::{read_jsonl, GamedError, NewsRecord, Splits};
use std::collections::HashSet;
use std::path::{Path, PathBuf};

/// `<dir>/<split>.jsonl`, or its `.gz` sibling.
pub fn split_path(dir: &Path, split: &str) -> CliResult<PathBuf> {
    let plain = dir.join(format!("{split}.jsonl"));
    let gz = dir.join(format!("{split}.jsonl.gz"));
    [plain, gz]
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| CliError::Data(format!("{}: no {split}.jsonl or {split}.jsonl.gz", dir.display())))
}

pub fn read_file(path: &Path) -> CliResult<Vec<NewsRecord>> {
    read_jsonl(path).map_err(|e| CliError::data(path.display(), e))
}

pub fn read_splits(dir: &Path) -> CliResult<Splits> {
    if !dir.is_dir() {
        return Err(CliError::Data(format!("{} is not a directory", dir.display())));
    }
    let mut parts = SPLIT_NAMES
        .iter()
        .map(|s| {
            let records = read_file(&split_path(dir, s)?)?;
            if records.is_empty() {
                return Err(CliError::Data(format!("{s} split in {} is empty", dir.display())));
            }
            Ok(records)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let test = parts.pop().expect("three splits");
    let val = parts.pop().expect("three splits");
    let train = parts.pop().expect("three splits");
    Ok(Splits { train, val, test })
}

/// Checks that every record fits the model before any training starts.
pub fn check_records(records: &[NewsRecord], enc: &EncoderConfig, source: &str) -> CliResult<()> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(CliError::Data(format!("{source}: duplicate id `{}`", r.id)));
        }
        let fail = |e: GamedError| CliError::Data(format!("{source}: record `{}`: {e}", r.id));
        check_image(&r.image, enc).map_err(fail)?;
        if let Some(&id) = r.text.iter().find(|&&t| t as usize >= enc.vocab) {
            return Err(fail(GamedError::OutOfVocabulary { id, vocab: enc.vocab }));
        }
    }
    Ok(())
}
