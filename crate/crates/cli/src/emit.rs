//! Report files: `report.json`, CSV tables and `summary.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::Value;

use vlasov_carleman::DistributionMatrix;

use crate::config::{Format, OutputConfig};
use crate::run::{cell, num, Outcome, Table};

/// The report as written, with timings unless `canonical`.
pub fn report_json(outcome: &Outcome, canonical: bool) -> Value {
    let mut report = outcome.report.clone();
    if !canonical {
        let timings: serde_json::Map<String, Value> =
            outcome.timings.iter().map(|(k, v)| (k.clone(), num(*v))).collect();
        report.insert("timings".into(), Value::Object(timings));
    }
    Value::Object(report)
}

fn write_matrix(path: &Path, f: &DistributionMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("emit: cannot create {}", path.display()))?;
    for i in 1..=f.nx() {
        w.write_record(f.row(i).iter().map(|&x| cell(x))).with_context(|| format!("emit: {}", path.display()))?;
    }
    w.flush().with_context(|| format!("emit: {}", path.display()))?;
    Ok(())
}

fn write_table(path: &Path, t: &Table) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("emit: cannot create {}", path.display()))?;
    w.write_record(&t.header).with_context(|| format!("emit: {}", path.display()))?;
    for r in &t.rows {
        w.write_record(r).with_context(|| format!("emit: {}", path.display()))?;
    }
    w.flush().with_context(|| format!("emit: {}", path.display()))?;
    Ok(())
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Human-readable digest of the headline fields.
pub fn summary_text(report: &Value) -> String {
    let mut s = String::new();
    s.push_str(&format!("mode     {}\n", scalar(&report["mode"])));
    s.push_str(&format!("verdict  {}\n", scalar(&report["verdict"])));
    s.push_str(&format!("feasible {}\n\n", scalar(&report["feasible"])));
    let rows = [
        ("mu(F1)", &report["mu"]),
        ("|F2|", &report["norms"]["F2"]),
        ("|F1|", &report["norms"]["F1"]),
        ("|F0|", &report["norms"]["F0"]),
        ("|u_in|", &report["norms"]["u_in"]),
        ("R", &report["R"]),
        ("gamma", &report["gamma"]),
        ("N_C", &report["N_C"]),
        ("k", &report["k"]),
        ("Omega", &report["Omega"]),
        ("m", &report["m"]),
        ("tau", &report["tau"]),
        ("d_A", &report["d_A"]),
        ("s", &report["s"]),
        ("s_A", &report["s_A"]),
        ("kappa_L bound", &report["kappaL_bound"]),
    ];
    for (name, v) in rows {
        if !v.is_null() {
            s.push_str(&format!("{name:<14} {}\n", scalar(v)));
        }
    }
    for section in ["feasibility", "comparison", "reference", "evolve"] {
        if let Some(obj) = report[section].as_object() {
            s.push_str(&format!("\n[{section}]\n"));
            for (k, v) in obj {
                if !v.is_object() {
                    s.push_str(&format!("{k:<20} {}\n", scalar(v)));
                }
            }
        }
    }
    s
}

/// Writes every requested artifact and returns the paths, in write order.
pub fn emit(outcome: &Outcome, out: &OutputConfig, canonical: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&out.dir).with_context(|| format!("emit: cannot create {}", out.dir.display()))?;
    let mut written = Vec::new();
    let report = report_json(outcome, canonical);
    if out.formats.contains(&Format::Json) {
        let path = out.dir.join("report.json");
        let text = serde_json::to_string_pretty(&report).context("emit: report")? + "\n";
        fs::write(&path, text).with_context(|| format!("emit: {}", path.display()))?;
        written.push(path);
    }
    if out.formats.contains(&Format::Csv) {
        let a = &outcome.artifacts;
        for (name, f) in [("f_T.csv", &a.f_carleman), ("f_T_reference.csv", &a.f_reference)] {
            if let Some(f) = f {
                let path = out.dir.join(name);
                write_matrix(&path, f)?;
                written.push(path);
            }
        }
        for t in &a.tables {
            let path = out.dir.join(format!("{}.csv", t.name));
            write_table(&path, t)?;
            written.push(path);
        }
    }
    if out.formats.contains(&Format::Txt) {
        let path = out.dir.join("summary.txt");
        fs::write(&path, summary_text(&report)).with_context(|| format!("emit: {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}
