//! Sweep reports. The CSV body is a pure function of the config; timing and
//! version information live only in the JSON metadata.

use std::io::Write;

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use crate::config::ExperimentKind;
use crate::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
    Missing,
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        // seeds are 64-bit; keep them exact as text once they leave i64
        i64::try_from(v).map(Value::Int).unwrap_or_else(|_| Value::Text(v.to_string()))
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl<T: Into<Value>> From<Option<T>> for Value {
    fn from(v: Option<T>) -> Self {
        v.map_or(Value::Missing, Into::into)
    }
}

impl Value {
    fn to_csv(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Float(v) => crate::io::fmt_f64(*v),
            Value::Text(s) => s.clone(),
            Value::Bool(b) => b.to_string(),
            Value::Missing => String::new(),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Value::Int(v) => s.serialize_i64(*v),
            Value::Float(v) if v.is_finite() => s.serialize_f64(*v),
            Value::Float(v) => s.serialize_str(&v.to_string()),
            Value::Text(t) => s.serialize_str(t),
            Value::Bool(b) => s.serialize_bool(*b),
            Value::Missing => s.serialize_none(),
        }
    }
}

/// One row of a sweep, fields in header order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record(Vec<(&'static str, Value)>);

impl Record {
    pub fn new() -> Self {
        Record(Vec::new())
    }

    pub fn with(mut self, key: &'static str, value: impl Into<Value>) -> Self {
        self.0.push((key, value.into()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }

    pub fn keys(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.0.iter().map(|(k, _)| *k)
    }

    pub fn passed(&self) -> bool {
        matches!(self.get("pass"), Some(Value::Bool(true)))
    }
}

impl Serialize for Record {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

/// Fixed CSV header for each experiment kind.
pub fn csv_header(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::ShallowVerify => &[
            "cell", "cell_seed", "n", "d0", "trials", "failed_trials", "d1_median", "d1_max", "width_capped",
            "delta_median", "delta_prime_median", "lambda_median", "lambda_min_min", "lambda_min_median",
            "lambda_min_max", "c_low", "c_up", "heldout_trials", "heldout_violations", "violation_cp_lower",
            "rayleigh_ok", "pass",
        ],
        ExperimentKind::DeepVerify => &[
            "cell", "cell_seed", "n", "d0", "depth", "widths", "trials", "failed_trials", "delta_median",
            "lambda_median", "lambda_min_min", "lambda_min_median", "lambda_min_max", "c_low", "c_up",
            "feature_in_band", "backprop_in_band", "feature_cp_upper", "backprop_cp_upper", "pass",
        ],
        ExperimentKind::KernelConvergence => &[
            "cell", "cell_seed", "d0", "n", "d1", "trials", "failed_trials", "k1_err_median", "k2_err_median",
            "k1_slope", "k2_slope", "mc_samples", "mc_entries", "mc_failures", "pass",
        ],
        ExperimentKind::SeparationScaling => &[
            "cell", "cell_seed", "d0", "n", "trials", "delta_median", "delta_prime_median", "slope",
            "expected_slope", "pass",
        ],
        ExperimentKind::FunkHeckeAudit => &[
            "cell", "d", "activation", "r_max", "max_abs_err", "parity_exact", "mercer_sup_r200",
            "mercer_monotone", "pass",
        ],
        ExperimentKind::GramGuarantee => &[
            "cell", "cell_seed", "d0", "n", "delta_target", "trials", "failed_trials", "case_id_max",
            "truncation_max", "sv_ratio_min", "gershgorin_ok", "offdiag_const", "pass",
        ],
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub version: &'static str,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_secs: f64,
    pub finished_unix_secs: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub passed: bool,
    pub metadata: Metadata,
    pub rows: Vec<Record>,
}

impl SweepReport {
    pub fn new(kind: ExperimentKind, metadata: Metadata, rows: Vec<Record>) -> Self {
        let passed = !rows.is_empty() && rows.iter().all(Record::passed);
        SweepReport { schema_version: SCHEMA_VERSION, kind, passed, metadata, rows }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let header = csv_header(self.kind);
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header)?;
        for (i, row) in self.rows.iter().enumerate() {
            if !row.keys().eq(header.iter().copied()) {
                return Err(HarnessError::format("report row", format!("row {i} does not match the {} header", self.kind)));
            }
            out.write_record(row.0.iter().map(|(_, v)| v.to_csv()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> Metadata {
        Metadata { version: "0", seed: 1, threads: 1, wall_time_secs: 0.5, finished_unix_secs: 0 }
    }

    fn row(pass: bool) -> Record {
        Record::new()
            .with("cell", 0usize)
            .with("d", 3usize)
            .with("activation", "scaled_relu")
            .with("r_max", 30usize)
            .with("max_abs_err", 1e-13)
            .with("parity_exact", true)
            .with("mercer_sup_r200", None::<f64>)
            .with("mercer_monotone", true)
            .with("pass", pass)
    }

    #[test]
    fn csv_has_fixed_header_and_no_metadata() {
        let rep = SweepReport::new(ExperimentKind::FunkHeckeAudit, meta(), vec![row(true)]);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "cell,d,activation,r_max,max_abs_err,parity_exact,mercer_sup_r200,mercer_monotone,pass\n\
             0,3,scaled_relu,30,1e-13,true,,true,true\n"
        );
        assert!(rep.passed);
    }

    #[test]
    fn json_carries_schema_version_and_order() {
        let rep = SweepReport::new(ExperimentKind::FunkHeckeAudit, meta(), vec![row(false)]);
        let mut buf = Vec::new();
        rep.write_json(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"schema_version\": 1"));
        assert!(text.find("\"max_abs_err\"").unwrap() < text.find("\"parity_exact\"").unwrap());
        assert!(!rep.passed);
    }

    #[test]
    fn mismatched_row_rejected() {
        let rep = SweepReport::new(ExperimentKind::GramGuarantee, meta(), vec![row(true)]);
        assert!(rep.write_csv(Vec::new()).is_err());
    }
}
