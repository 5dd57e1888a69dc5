//! CSV tables, JSON summaries and run manifests.
//!
//! Numbers are written in shortest round-trip form and optional values as
//! empty cells (CSV) or `null` (JSON), so identical inputs give identical
//! bytes.

use std::path::Path;

use fpsi_core::constants::{ConstantKind, ConstantTable, Constants};
use fpsi_core::monitor::{CertificateReport, CertificateRow};
use fpsi_core::verify::{ConvergenceTable, FieldErrors, InterfaceResiduals};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Table { path: String, message: String },
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), OutputError> {
    let err = |source| OutputError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    std::fs::write(path, text).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub const CERTIFICATE_COLUMNS: [&str; 32] = [
    "step",
    "t",
    "ke_f",
    "ke_s",
    "elastic",
    "div_elastic",
    "storage",
    "diss_f",
    "diss_p",
    "diss_beta",
    "C1_t",
    "lhs_mb1",
    "rhs_mb1",
    "dumbound_lhs",
    "dumbound_rhs",
    "flags",
    "margin_mb1",
    "margin_dumbound",
    "margin_uniqueness",
    "margin_mb2_rooted",
    "margin_mb2_squared",
    "margin_pf",
    "uniqueness_rhs",
    "mb2_lhs",
    "mb2_rhs_rooted",
    "mb2_rhs_squared",
    "pf_lhs",
    "pf_rhs",
    "pf_rhs_apriori_rooted",
    "pf_rhs_apriori_squared",
    "identity_defect",
    "energy",
];

fn certificate_row(r: &CertificateRow) -> Vec<String> {
    vec![
        r.step.to_string(),
        num(r.t),
        num(r.ke_f),
        num(r.ke_s),
        num(r.elastic),
        num(r.div_elastic),
        num(r.storage),
        num(r.diss_f),
        num(r.diss_p),
        num(r.diss_beta),
        num(r.c1_t),
        num(r.lhs_mb1),
        num(r.rhs_mb1),
        num(r.dumbound_lhs),
        num(r.dumbound_rhs),
        r.flags.to_string(),
        num(r.margin_mb1()),
        num(r.margin_dumbound()),
        num(r.margin_uniqueness()),
        opt(r.margin_mb2_rooted()),
        opt(r.margin_mb2_squared()),
        opt(r.margin_pf()),
        num(r.uniqueness_rhs),
        opt(r.mb2.map(|m| m.lhs)),
        opt(r.mb2.map(|m| m.rhs_rooted)),
        opt(r.mb2.map(|m| m.rhs_squared)),
        opt(r.pf.map(|p| p.lhs)),
        opt(r.pf.map(|p| p.rhs)),
        opt(r.pf.map(|p| p.rhs_apriori_rooted)),
        opt(r.pf.map(|p| p.rhs_apriori_squared)),
        num(r.identity_defect),
        num(r.energy()),
    ]
}

pub fn write_certificate_csv(report: &CertificateReport, path: &Path) -> Result<(), OutputError> {
    let header: Vec<String> = CERTIFICATE_COLUMNS.iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = report.rows.iter().map(certificate_row).collect();
    write_csv(path, &header, &rows)
}

pub fn summary_json(report: &CertificateReport, data_scale: f64) -> Value {
    let f = &report.flags;
    let m = &report.margins;
    json!({
        "label": report.label,
        "status": report.status(),
        "regime": report.regime(),
        "mesh_level": report.mesh_level,
        "scheme": report.scheme.as_str(),
        "t_final": report.t_final,
        "data_scale": data_scale,
        "small_data_ok": f.small_data_ok,
        "small_data_lhs": report.small_data.lhs,
        "small_data_rhs": report.small_data.rhs,
        "small_data_margin": report.small_data.margin,
        "s_star": report.s_star,
        "flags": {
            "small_data_ok": f.small_data_ok,
            "mainbound1_ok": f.mainbound1_ok,
            "dumbound_ok": f.dumbound_ok,
            "mainbound2_rooted_ok": f.mainbound2_rooted_ok,
            "mainbound2_squared_ok": f.mainbound2_squared_ok,
            "mainbound2_ok": f.mainbound2_ok(),
            "pfbound_ok": f.pfbound_ok,
            "uniqueness_ok": f.uniqueness_ok,
            "integrator_consistent": f.integrator_consistent,
        },
        "margins": {
            "small_data": m.small_data,
            "mainbound1": m.mainbound1,
            "dumbound": m.dumbound,
            "mainbound2_rooted": m.mainbound2_rooted,
            "mainbound2_squared": m.mainbound2_squared,
            "pfbound": m.pfbound,
            "uniqueness": m.uniqueness,
        },
        "identity": {
            "max_defect": report.identity.max_defect,
            "tol": report.identity.tol,
            "ok": report.identity.ok,
        },
        "gronwall": {
            "b": report.gronwall.b,
            "c": report.gronwall.c,
            "premise_ok": report.gronwall.premise_ok,
            "conclusion_ok": report.gronwall.conclusion_ok,
            "premise_margin": report.gronwall.premise_margin,
            "conclusion_margin": report.gronwall.conclusion_margin,
            "implication_holds": report.gronwall.implication_holds(),
        },
    })
}

/// Every global flag is green (evaluated derivative bounds included).
pub fn all_flags_ok(report: &CertificateReport) -> bool {
    let f = &report.flags;
    f.integrator_consistent
        && f.small_data_ok
        && f.mainbound1_ok
        && f.dumbound_ok
        && f.uniqueness_ok
        && f.mainbound2_ok() != Some(false)
        && f.pfbound_ok != Some(false)
}

pub fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

pub const CONSTANT_COLUMNS: [&str; 6] = ["kind", "value", "mesh_level", "dofs", "prev_value", "rel_change"];

/// `labels[i]` names refinement level `i` of the table's history.
pub fn write_constant_table(table: &ConstantTable, labels: &[String], path: &Path) -> Result<(), OutputError> {
    let header: Vec<String> = CONSTANT_COLUMNS.iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|e| {
            let fin = e.finest();
            let prev = e.previous().map(|p| p.value);
            let label = labels.get(fin.level).cloned().unwrap_or_else(|| fin.level.to_string());
            vec![
                e.kind.as_str().to_string(),
                num(fin.value),
                label,
                fin.dofs.to_string(),
                opt(prev),
                opt(prev.map(|p| (fin.value - p) / p)),
            ]
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Constants and the mesh level they were computed on, from a table
/// written by [`write_constant_table`].
pub fn read_constant_table(path: &Path) -> Result<(Constants, String), OutputError> {
    let p = path.display().to_string();
    let table_err = |message: String| OutputError::Table {
        path: p.clone(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|source| OutputError::Csv {
        path: p.clone(),
        source,
    })?;
    let headers = r
        .headers()
        .map_err(|source| OutputError::Csv {
            path: p.clone(),
            source,
        })?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| table_err(format!("missing column '{name}'")))
    };
    let (ik, iv, il) = (col("kind")?, col("value")?, col("mesh_level")?);
    let mut c = Constants::default();
    let mut seen = Vec::new();
    let mut level = String::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|source| OutputError::Csv {
            path: p.clone(),
            source,
        })?;
        let row = i + 2;
        let kind = ConstantKind::parse(&rec[ik])
            .ok_or_else(|| table_err(format!("row {row}: unknown kind '{}'", &rec[ik])))?;
        let value: f64 = rec[iv]
            .parse()
            .map_err(|_| table_err(format!("row {row}: invalid value '{}'", &rec[iv])))?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(table_err(format!("row {row}: {} must be positive", kind.as_str())));
        }
        c.set(kind, value);
        seen.push(kind);
        level = rec[il].to_string();
    }
    if let Some(k) = ConstantKind::ALL.iter().find(|k| !seen.contains(k)) {
        return Err(table_err(format!("missing kind '{}'", k.as_str())));
    }
    Ok((c, level))
}

pub fn convergence_header() -> Vec<String> {
    let mut h: Vec<String> = ["level", "h", "dt"].iter().map(|s| s.to_string()).collect();
    h.extend(FieldErrors::NAMES.iter().map(|s| s.to_string()));
    h.extend(FieldErrors::NAMES.iter().map(|s| format!("rate_{}", &s[2..])));
    h.extend(InterfaceResiduals::NAMES.iter().map(|s| format!("iface_{s}")));
    h
}

pub fn convergence_rows(table: &ConvergenceTable) -> Vec<Vec<String>> {
    let rates = table.rates();
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = vec![r.level.to_string(), num(r.h), num(r.dt)];
            row.extend(r.errors.as_array().iter().map(|v| num(*v)));
            match i.checked_sub(1).map(|k| rates[k]) {
                Some(rt) => row.extend(rt.iter().map(|v| num(*v))),
                None => row.extend(std::iter::repeat(String::new()).take(6)),
            }
            row.extend(r.interface.as_array().iter().map(|v| num(*v)));
            row
        })
        .collect()
}

pub fn write_convergence_csv(table: &ConvergenceTable, path: &Path) -> Result<(), OutputError> {
    write_csv(path, &convergence_header(), &convergence_rows(table))
}

/// Human-readable convergence summary.
pub fn convergence_summary(table: &ConvergenceTable, expected: [f64; 6]) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    writeln!(s, "case {}", table.case.as_str()).unwrap();
    write!(s, "{:>6} {:>10}", "level", "dt").unwrap();
    for n in FieldErrors::NAMES {
        write!(s, " {n:>11}").unwrap();
    }
    writeln!(s).unwrap();
    for r in &table.rows {
        write!(s, "{:>6} {:>10.3e}", r.level, r.dt).unwrap();
        for e in r.errors.as_array() {
            write!(s, " {e:>11.3e}").unwrap();
        }
        writeln!(s).unwrap();
    }
    for (i, rt) in table.rates().iter().enumerate() {
        write!(s, "rates {:>2}->{:<3}      ", table.rows[i].level, table.rows[i + 1].level).unwrap();
        for r in rt {
            write!(s, " {r:>11.3}").unwrap();
        }
        writeln!(s).unwrap();
    }
    write!(s, "expected          ").unwrap();
    for r in expected {
        write!(s, " {r:>11.1}").unwrap();
    }
    writeln!(s).unwrap();
    if let Some((level, msg)) = &table.failure {
        writeln!(s, "level {level} failed: {msg}").unwrap();
    }
    s
}
