//! Readers for the comparison CSV and JSON input files.

use std::fmt;
use std::path::Path;

use anyhow::Context;
use dynorm_core::reward::{Candidate, ComparisonRecord};

/// Rows of a comparison file that could not be read, by 1-based line number.
#[derive(Debug)]
pub struct BadRows(pub Vec<(u64, String)>);

impl fmt::Display for BadRows {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.0.iter().map(|(l, _)| l.to_string()).collect();
        write!(f, "malformed rows at lines {}", lines.join(", "))?;
        for (line, why) in &self.0 {
            write!(f, "\n  line {line}: {why}")?;
        }
        Ok(())
    }
}

impl std::error::Error for BadRows {}

/// Reads `context_id,chosen_id,rejected_id[,weight]` rows. A first row
/// starting with `context_id` is taken as a header.
pub fn read_comparisons(path: &Path) -> anyhow::Result<Vec<ComparisonRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut records = Vec::new();
    let mut bad = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                bad.push((line, e.to_string()));
                continue;
            }
        };
        let line = row.position().map_or(i as u64 + 1, |p| p.line());
        if i == 0 && row.get(0) == Some("context_id") {
            continue;
        }
        match parse_row(&row) {
            Ok(r) => records.push(r),
            Err(why) => bad.push((line, why)),
        }
    }
    if !bad.is_empty() {
        return Err(BadRows(bad).into());
    }
    if records.is_empty() {
        anyhow::bail!("{} contains no comparisons", path.display());
    }
    Ok(records)
}

fn parse_row(row: &csv::StringRecord) -> Result<ComparisonRecord, String> {
    if !(3..=4).contains(&row.len()) {
        return Err(format!("expected 3 or 4 fields, found {}", row.len()));
    }
    let (ctx, chosen, rejected) = (&row[0], &row[1], &row[2]);
    if ctx.is_empty() || chosen.is_empty() || rejected.is_empty() {
        return Err("empty id".into());
    }
    if chosen == rejected {
        return Err(format!("`{chosen}` compared with itself"));
    }
    let mut record = ComparisonRecord::new(ctx, chosen, rejected);
    if let Some(w) = row.get(3) {
        let w: f64 = w
            .parse()
            .map_err(|_| format!("weight `{w}` is not a number"))?;
        if !(w.is_finite() && w >= 0.0) {
            return Err(format!("weight {w} must be finite and non-negative"));
        }
        record = record.weighted(w);
    }
    Ok(record)
}

pub fn read_candidates(path: &Path) -> anyhow::Result<Vec<Candidate>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let cands: Vec<Candidate> = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a candidate array", path.display()))?;
    Ok(cands)
}
