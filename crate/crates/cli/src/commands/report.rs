//! Collects CSV tables from earlier runs into one Markdown summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::CliError;

/// Tables listed first, in this order; other CSV files follow alphabetically.
const KNOWN: [&str; 7] = [
    "conversion.csv",
    "infer.csv",
    "mi_comparison.csv",
    "sim.csv",
    "train_summary.csv",
    "equiv.csv",
    "loss_curve.csv",
];

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "csv") {
            files.push(path);
        }
    }
    let rank = |p: &PathBuf| {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        (KNOWN.iter().position(|k| *k == name).unwrap_or(KNOWN.len()), name.to_owned())
    };
    files.sort_by_key(rank);
    Ok(files)
}

fn render_table(path: &Path, md: &mut String) -> Result<(), CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| CliError::Io(e.to_string()))?.clone();
    let name = path.file_stem().and_then(|n| n.to_str()).unwrap_or("table");
    let _ = writeln!(md, "## {name}\n");
    let _ = writeln!(md, "| {} |", headers.iter().collect::<Vec<_>>().join(" | "));
    let _ = writeln!(md, "|{}", "---|".repeat(headers.len()));
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let _ = writeln!(md, "| {} |", rec.iter().collect::<Vec<_>>().join(" | "));
    }
    md.push('\n');
    Ok(())
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let dir = cfg.report.dir.clone().unwrap_or_else(|| out.to_path_buf());
    let files = csv_files(&dir)?;
    let mut md = String::from("# SpikePack results\n\n");
    if files.is_empty() {
        md.push_str("| table | rows |\n|---|---|\n\nNo result tables found.\n");
    }
    for f in &files {
        render_table(f, &mut md)?;
    }
    let path = out.join("summary.md");
    std::fs::write(&path, &md)?;
    println!("wrote {} ({} tables)", path.display(), files.len());
    Ok(())
}
