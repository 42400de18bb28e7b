use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Float formatted with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Comparison the value was held to, e.g. `<= 1e-10`.
    pub criterion: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub name: String,
    pub kind: String,
    pub seed: u64,
    pub values: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub table: Option<Table>,
    #[serde(skip)]
    pub ledger: Vec<transinfo::simulate::LedgerRow>,
    #[serde(skip)]
    pub samples: Option<Vec<Vec<f64>>>,
}

impl Report {
    pub fn new(name: &str, kind: &str, seed: u64) -> Self {
        Report {
            name: name.to_string(),
            kind: kind.to_string(),
            seed,
            values: BTreeMap::new(),
            checks: Vec::new(),
            table: None,
            ledger: Vec::new(),
            samples: None,
        }
    }

    pub fn value(&mut self, key: &str, v: f64) {
        self.values.insert(key.to_string(), Value::String(fmt17(v)));
    }

    pub fn put<T: Serialize>(&mut self, key: &str, v: T) {
        self.values.insert(key.to_string(), serde_json::to_value(v).expect("serializable"));
    }

    /// `value <= limit`.
    pub fn at_most(&mut self, name: &str, value: f64, limit: f64) {
        self.checks.push(Check {
            name: name.to_string(),
            value,
            criterion: format!("<= {}", fmt17(limit)),
            pass: value <= limit,
        });
    }

    /// `value >= limit`.
    pub fn at_least(&mut self, name: &str, value: f64, limit: f64) {
        self.checks.push(Check {
            name: name.to_string(),
            value,
            criterion: format!(">= {}", fmt17(limit)),
            pass: value >= limit,
        });
    }

    pub fn flag(&mut self, name: &str, ok: bool) {
        self.checks.push(Check {
            name: name.to_string(),
            value: if ok { 1.0 } else { 0.0 },
            criterion: "true".to_string(),
            pass: ok,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut json = serde_json::to_value(self)?;
        // checks carry raw floats; print them at full precision too
        if let Some(checks) = json.get_mut("checks").and_then(Value::as_array_mut) {
            for (c, src) in checks.iter_mut().zip(&self.checks) {
                c["value"] = Value::String(fmt17(src.value));
            }
        }
        let path = dir.join(format!("{}.json", self.name));
        fs::write(&path, serde_json::to_string_pretty(&json)? + "\n").with_context(|| format!("writing {}", path.display()))?;
        if let Some(t) = &self.table {
            let path = dir.join(format!("{}.csv", self.name));
            let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
            w.write_record(&t.header)?;
            for row in &t.rows {
                w.write_record(row.iter().map(|v| fmt17(*v)))?;
            }
            w.flush()?;
        }
        if let Some(samples) = &self.samples {
            let path = dir.join(format!("{}_samples.csv", self.name));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["radius_index", "path", "time_average"])?;
            for (i, s) in samples.iter().enumerate() {
                for (k, v) in s.iter().enumerate() {
                    w.write_record([i.to_string(), k.to_string(), fmt17(*v)])?;
                }
            }
            w.flush()?;
        }
        Ok(())
    }
}

pub fn write_ledger(dir: &Path, reports: &[Report]) -> Result<()> {
    let rows: Vec<_> = reports.iter().flat_map(|r| r.ledger.iter()).collect();
    if rows.is_empty() {
        return Ok(());
    }
    let mut w = csv::Writer::from_path(dir.join("ledger.csv"))?;
    w.write_record(["model", "u", "t", "r", "n_paths", "p_hat", "ci_low", "ci_high", "bound", "verdict", "seed"])?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.u.clone(),
            fmt17(r.t),
            fmt17(r.r),
            r.n_paths.to_string(),
            fmt17(r.p_hat),
            fmt17(r.ci_low),
            fmt17(r.ci_high),
            fmt17(r.bound),
            r.verdict.clone(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Failure {
    pub experiment: String,
    pub check: String,
    pub value: String,
    pub criterion: String,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub status: &'static str,
    pub experiments: usize,
    pub checks: usize,
    pub failed: Vec<Failure>,
}

pub fn summarize(reports: &[Report]) -> Summary {
    let failed: Vec<Failure> = reports
        .iter()
        .flat_map(|r| {
            r.checks.iter().filter(|c| !c.pass).map(|c| Failure {
                experiment: r.name.clone(),
                check: c.name.clone(),
                value: fmt17(c.value),
                criterion: c.criterion.clone(),
            })
        })
        .collect();
    Summary {
        status: if failed.is_empty() { "pass" } else { "fail" },
        experiments: reports.len(),
        checks: reports.iter().map(|r| r.checks.len()).sum(),
        failed,
    }
}
