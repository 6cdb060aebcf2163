use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{validate_qa, DatasetBuild, LedgerEntry, QADataset, QAItem};

/// `<stem>.summary.json` next to the dataset file.
pub fn summary_path(dataset: &Path) -> PathBuf {
    sibling(dataset, "summary.json")
}

/// `<stem>.rejections.jsonl` next to the dataset file.
pub fn ledger_path(dataset: &Path) -> PathBuf {
    sibling(dataset, "rejections.jsonl")
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> std::io::Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_dataset_jsonl(path: &Path, dataset: &QADataset) -> std::io::Result<()> {
    jsonl(path, &dataset.items)
}

pub fn write_ledger_jsonl(path: &Path, ledger: &[LedgerEntry]) -> std::io::Result<()> {
    jsonl(path, ledger)
}

/// Dataset JSONL plus summary sidecar plus rejection ledger.
pub fn write_dataset(path: &Path, build: &DatasetBuild) -> std::io::Result<()> {
    write_dataset_jsonl(path, &build.dataset)?;
    let summary = serde_json::to_string_pretty(&build.dataset.summary)?;
    std::fs::write(summary_path(path), summary + "\n")?;
    write_ledger_jsonl(&ledger_path(path), &build.ledger)
}

pub fn read_dataset_jsonl(path: &Path) -> std::io::Result<QADataset> {
    let invalid = |m: String| std::io::Error::new(std::io::ErrorKind::InvalidData, m);
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut items = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: QAItem = serde_json::from_str(&line).map_err(|e| invalid(format!("line {}: {e}", n + 1)))?;
        let again = validate_qa(&item.to_raw(), &item.provenance)
            .map_err(|e| invalid(format!("line {}: item {} fails validation: {e}", n + 1, item.id)))?;
        if (QAItem { id: item.id.clone(), ..again }) != item {
            return Err(invalid(format!("line {}: item {} is not in normalized form", n + 1, item.id)));
        }
        items.push(item);
    }
    QADataset::new(items).map_err(invalid)
}
