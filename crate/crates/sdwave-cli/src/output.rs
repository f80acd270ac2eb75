// SPDX-License-Identifier: Apache-2.0

//! Artifact writing: one directory per suite, replaced atomically, plus
//! run-level summaries.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Value};
use sdwave_core::{Bound, Check, SuiteReport, Table};

/// Header of the plain-text summaries.
const SUMMARY_HEADER: &str = "name\tmeasured\tthreshold\tstatus";

/// One summary line: name, measured value, threshold and status.
pub fn summary_line(c: &Check) -> String {
    format!(
        "{}\t{:.6e}\t{}\t{}",
        c.name,
        c.measured,
        c.bound,
        if c.passed { "PASS" } else { "FAIL" }
    )
}

fn summary_text<'a>(checks: impl IntoIterator<Item = &'a Check>) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for c in checks {
        s.push_str(&summary_line(c));
        s.push('\n');
    }
    s
}

fn bound_json(b: &Bound) -> Value {
    match *b {
        Bound::AtMost(t) => json!({ "kind": "at_most", "threshold": t }),
        Bound::AtLeast(t) => json!({ "kind": "at_least", "threshold": t }),
        Bound::Within(lo, hi) => json!({ "kind": "within", "low": lo, "high": hi }),
    }
}

/// JSON record of a suite report.
pub fn report_json(r: &SuiteReport) -> Value {
    let checks: Vec<Value> = r
        .checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "measured": c.measured,
                "bound": bound_json(&c.bound),
                "passed": c.passed,
                "note": c.note,
            })
        })
        .collect();
    json!({ "suite": r.suite.name(), "passed": r.passed(), "checks": checks })
}

fn write_table(dir: &Path, table: &Table) -> Result<()> {
    let path = dir.join(format!("{}.csv", table.name));
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `text` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Writes the tables and summaries of one suite to `out/<suite>`. The files
/// are assembled in a temporary directory that replaces any previous
/// output in a single rename.
pub fn write_suite(out: &Path, report: &SuiteReport, run_info: &Value) -> Result<()> {
    let staging = tempfile::Builder::new()
        .prefix(".staging-")
        .tempdir_in(out)
        .with_context(|| format!("cannot create a staging directory in {}", out.display()))?;
    for t in &report.tables {
        write_table(staging.path(), t)?;
    }
    fs::write(staging.path().join("summary.txt"), summary_text(&report.checks))?;
    let mut record = report_json(report);
    record["run"] = run_info.clone();
    fs::write(
        staging.path().join("summary.json"),
        serde_json::to_string_pretty(&record)? + "\n",
    )?;

    let target = out.join(report.suite.name());
    // The previous output moves into a directory that is deleted on drop.
    let _retired = if target.exists() {
        let retired = tempfile::Builder::new().prefix(".retired-").tempdir_in(out)?;
        fs::rename(&target, retired.path().join("old"))
            .with_context(|| format!("cannot replace {}", target.display()))?;
        Some(retired)
    } else {
        None
    };
    let staged = staging.keep();
    fs::rename(&staged, &target).with_context(|| format!("cannot write {}", target.display()))?;
    Ok(())
}

/// Writes `summary.txt` and `summary.json` for the whole run.
pub fn write_run_summary(out: &Path, reports: &[SuiteReport], run_info: &Value) -> Result<()> {
    write_atomic(
        &out.join("summary.txt"),
        &summary_text(reports.iter().flat_map(|r| &r.checks)),
    )?;
    let record = json!({
        "run": run_info,
        "passed": reports.iter().all(|r| r.passed()),
        "suites": reports.iter().map(report_json).collect::<Vec<_>>(),
    });
    write_atomic(&out.join("summary.json"), &(serde_json::to_string_pretty(&record)? + "\n"))
}
