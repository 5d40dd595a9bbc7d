//! Machine-readable reports and their text rendering.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::scenario::{emit_scenario, Scenario};

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(title: &str, columns: &[&str]) -> Self {
        Table {
            title: title.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(render_cell).collect())
            .collect();
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|c| {
                cells
                    .iter()
                    .map(|r| r[c].len())
                    .chain([self.columns[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |row: &[String]| {
            row.iter()
                .zip(&widths)
                .map(|(s, &w)| format!("{s:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = format!("  {}\n", self.title);
        out.push_str(&format!("    {}\n", line(&self.columns)));
        for r in &cells {
            out.push_str(&format!("    {}\n", line(r)));
        }
        out
    }
}

fn render_cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub tables: Vec<Table>,
    pub witnesses: Vec<Value>,
    pub millis: u64,
}

impl SuiteReport {
    pub fn new(name: &str) -> Self {
        SuiteReport {
            name: name.to_string(),
            status: Status::Pass,
            reason: None,
            tables: Vec::new(),
            witnesses: Vec::new(),
            millis: 0,
        }
    }

    pub fn skipped(name: &str, reason: String) -> Self {
        SuiteReport {
            status: Status::Skipped,
            reason: Some(reason),
            ..SuiteReport::new(name)
        }
    }

    /// Marks the suite failed unless `ok`, recording `witness` on failure.
    pub fn require(&mut self, ok: bool, witness: impl FnOnce() -> Value) {
        if !ok {
            self.status = Status::Fail;
            self.witnesses.push(witness());
        }
    }

    pub fn render(&self) -> String {
        let status = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        let mut out = format!("[{status}] {}", self.name);
        if let Some(r) = &self.reason {
            out.push_str(&format!(" ({r})"));
        }
        if self.millis > 0 {
            out.push_str(&format!(" {} ms", self.millis));
        }
        out.push('\n');
        for t in &self.tables {
            out.push_str(&t.render());
        }
        for w in &self.witnesses {
            out.push_str(&format!("  witness: {w}\n"));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub scenario_hash: String,
    pub suites: Vec<SuiteReport>,
}

impl Report {
    pub fn new(scenario: Option<&Scenario>, suites: Vec<SuiteReport>) -> Self {
        Report {
            version: REPORT_VERSION,
            scenario_hash: scenario.map(scenario_hash).unwrap_or_default(),
            suites,
        }
    }

    /// 1 if any suite failed, else 3 if any was skipped, else 0.
    pub fn exit_code(&self) -> i32 {
        if self.suites.iter().any(|s| s.status == Status::Fail) {
            1
        } else if self.suites.iter().any(|s| s.status == Status::Skipped) {
            3
        } else {
            0
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn render(&self) -> String {
        self.suites.iter().map(SuiteReport::render).collect()
    }
}

/// SHA-256 of the canonical scenario serialization.
pub fn scenario_hash(s: &Scenario) -> String {
    hex::encode(Sha256::digest(emit_scenario(s).as_bytes()))
}
