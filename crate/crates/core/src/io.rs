//! Data ingestion, run configuration and report serialization.
//!
//! Formats:
//! * data: UTF-8 CSV in long format with the exact header `group,value`;
//! * config: strict JSON, unknown keys are errors;
//! * report: JSON, `schema_version` `"1"`, floats written with 17
//!   significant digits so every `f64` round-trips exactly.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::calibration::CalibrationResult;
use crate::checks::{ProtocolConfig, StageDiscrepancies};
use crate::discrepancy::{Discrepancy, Space};
use crate::error::{Error, Result};
use crate::model::{
    validate_dataset, CheckReport, Decision, GroupedDataset, HyperPrior, PValueResult, Stage,
    StageRecord, StageStatus, DEFAULT_ALPHA,
};

pub const SCHEMA_VERSION: &str = "1";
pub const CSV_HEADER: [&str; 2] = ["group", "value"];

pub fn load_dataset_csv(path: impl AsRef<Path>) -> Result<GroupedDataset> {
    parse_dataset_csv(std::fs::File::open(path)?)
}

pub fn parse_dataset_csv<R: Read>(reader: R) -> Result<GroupedDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    match records.next() {
        Some(Ok(header)) if header.iter().eq(CSV_HEADER) => {}
        Some(Err(e)) => {
            return Err(Error::BadRow {
                line: 1,
                reason: e.to_string(),
            })
        }
        _ => return Err(Error::MissingHeader),
    }
    let mut pairs = Vec::new();
    let mut last_line: HashMap<String, usize> = HashMap::new();
    for record in records {
        let record = record.map_err(|e| Error::BadRow {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(Error::BadRow {
                line,
                reason: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let group = record[0].to_owned();
        let value: f64 = record[1].trim().parse().map_err(|_| Error::BadRow {
            line,
            reason: format!("`{}` is not a decimal number", &record[1]),
        })?;
        if !value.is_finite() {
            return Err(Error::AtLine {
                line,
                source: Box::new(Error::NonFiniteValue { group, value }),
            });
        }
        last_line.insert(group.clone(), line);
        pairs.push((group, value));
    }
    validate_dataset(&pairs).map_err(|e| match e {
        Error::UnbalancedData { ref group, .. } => Error::AtLine {
            line: last_line[group],
            source: Box::new(e),
        },
        other => other,
    })
}

/// Long-format CSV that [`parse_dataset_csv`] reads back unchanged.
pub fn write_dataset_csv<W: Write>(data: &GroupedDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(to_io)?;
    for (group, value) in data.to_pairs() {
        w.write_record([group.as_str(), &value.to_string()])
            .map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Discrepancy names per protocol stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscrepancyNames {
    pub model: String,
    pub pi2: String,
    pub pi1: String,
}

impl Default for DiscrepancyNames {
    fn default() -> Self {
        Self {
            model: "chisq_total".into(),
            pi2: "skew".into(),
            pi1: "mahalanobis_mv".into(),
        }
    }
}

impl DiscrepancyNames {
    pub fn resolve(&self) -> Result<StageDiscrepancies> {
        let get = |name: &str, space: Space| {
            let d = Discrepancy::builtin(name)?;
            d.expect_space(space)?;
            Ok::<_, Error>(d)
        };
        Ok(StageDiscrepancies {
            model: get(&self.model, Space::Residuals)?,
            pi2: get(&self.pi2, Space::Means)?,
            pi1: get(&self.pi1, Space::Hyper)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sigma2: f64,
    pub alpha: f64,
    pub n_draws: usize,
    pub seed: u64,
    pub discrepancies: DiscrepancyNames,
    pub hyperprior: HyperPrior,
    /// Set from the command line; not part of the JSON file.
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn protocol_config(&self) -> Result<ProtocolConfig> {
        Ok(ProtocolConfig {
            alpha: self.alpha,
            n_draws: self.n_draws,
            seed: self.seed,
            discrepancies: self.discrepancies.resolve()?,
        })
    }
}

pub fn load_config_json(path: impl AsRef<Path>) -> Result<RunConfig> {
    parse_config_json(&std::fs::read_to_string(path)?)
}

fn reject_unknown(obj: &Map<String, Value>, allowed: &[&str], prefix: &str) -> Result<()> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::UnknownKey(format!("{prefix}{k}"))),
        None => Ok(()),
    }
}

fn number(obj: &Map<String, Value>, key: &str, prefix: &str) -> Result<Option<f64>> {
    obj.get(key)
        .map(|v| {
            v.as_f64().ok_or_else(|| Error::TypeMismatch {
                key: format!("{prefix}{key}"),
                expected: "number",
            })
        })
        .transpose()
}

fn integer(obj: &Map<String, Value>, key: &str) -> Result<Option<u64>> {
    obj.get(key)
        .map(|v| {
            v.as_u64().ok_or_else(|| Error::TypeMismatch {
                key: key.to_owned(),
                expected: "nonnegative integer",
            })
        })
        .transpose()
}

pub fn parse_config_json(text: &str) -> Result<RunConfig> {
    let root: Value = serde_json::from_str(text)?;
    let obj = root.as_object().ok_or(Error::TypeMismatch {
        key: "<root>".into(),
        expected: "object",
    })?;
    reject_unknown(
        obj,
        &[
            "sigma2",
            "alpha",
            "n_draws",
            "seed",
            "discrepancies",
            "hyperprior",
        ],
        "",
    )?;

    let sigma2 = number(obj, "sigma2", "")?.ok_or(Error::MissingRequired("sigma2".into()))?;
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::invalid(
            "sigma2",
            format!("must be positive, got {sigma2}"),
        ));
    }
    let alpha = number(obj, "alpha", "")?.unwrap_or(DEFAULT_ALPHA);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(
            "alpha",
            format!("must lie in (0, 1), got {alpha}"),
        ));
    }
    let n_draws = integer(obj, "n_draws")?.unwrap_or(10_000);
    if n_draws == 0 {
        return Err(Error::invalid("n_draws", "must be at least 1"));
    }
    let seed = integer(obj, "seed")?.unwrap_or(1);

    let mut discrepancies = DiscrepancyNames::default();
    if let Some(v) = obj.get("discrepancies") {
        let d = v.as_object().ok_or(Error::TypeMismatch {
            key: "discrepancies".into(),
            expected: "object",
        })?;
        reject_unknown(d, &["model", "pi2", "pi1"], "discrepancies.")?;
        for (key, slot) in [
            ("model", &mut discrepancies.model),
            ("pi2", &mut discrepancies.pi2),
            ("pi1", &mut discrepancies.pi1),
        ] {
            if let Some(v) = d.get(key) {
                *slot = v
                    .as_str()
                    .ok_or_else(|| Error::TypeMismatch {
                        key: format!("discrepancies.{key}"),
                        expected: "string",
                    })?
                    .to_owned();
            }
        }
        discrepancies.resolve()?;
    }

    let hp = obj
        .get("hyperprior")
        .ok_or_else(|| Error::MissingRequired("hyperprior".into()))?;
    let hp = hp.as_object().ok_or(Error::TypeMismatch {
        key: "hyperprior".into(),
        expected: "object",
    })?;
    let kind = hp
        .get("type")
        .ok_or_else(|| Error::MissingRequired("hyperprior.type".into()))?
        .as_str()
        .ok_or(Error::TypeMismatch {
            key: "hyperprior.type".into(),
            expected: "string",
        })?;
    let hyperprior = match kind {
        "improper_flat" => {
            reject_unknown(hp, &["type"], "hyperprior.")?;
            HyperPrior::ImproperFlat
        }
        "normal_inv_gamma" => {
            reject_unknown(hp, &["type", "m0", "s0sq", "a0", "b0"], "hyperprior.")?;
            let get = |key: &'static str, missing: &'static str| {
                number(hp, key, "hyperprior.")?
                    .ok_or_else(|| Error::MissingRequired(missing.into()))
            };
            HyperPrior::normal_inv_gamma(
                get("m0", "hyperprior.m0")?,
                get("s0sq", "hyperprior.s0sq")?,
                get("a0", "hyperprior.a0")?,
                get("b0", "hyperprior.b0")?,
            )?
        }
        other => {
            return Err(Error::invalid(
                "hyperprior.type",
                format!("`{other}` is not one of improper_flat, normal_inv_gamma"),
            ))
        }
    };

    Ok(RunConfig {
        sigma2,
        alpha,
        n_draws: n_draws as usize,
        seed,
        discrepancies,
        hyperprior,
        output: None,
    })
}

/// 17 significant digits; `null` for non-finite values.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

fn string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn opt<T>(v: Option<T>, f: impl FnOnce(T) -> String) -> String {
    v.map_or_else(|| "null".into(), f)
}

pub fn report_to_json(report: &CheckReport) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"schema_version\": {},", string(SCHEMA_VERSION));
    let _ = writeln!(
        out,
        "  \"data_summary\": {{\"I\": {}, \"n\": {}}},",
        report.groups, report.per_group
    );
    out.push_str("  \"stages\": [\n");
    for (i, s) in report.stages.iter().enumerate() {
        let r = s.result.as_ref();
        let fields = [
            ("stage", string(s.stage.name())),
            ("status", string(s.status.name())),
            ("p_value", opt(r, |r| num(r.p))),
            ("n_draws", opt(r, |r| r.n_draws.to_string())),
            ("seed", s.seed.to_string()),
            ("discrepancy", string(&s.discrepancy)),
            ("observed_h", opt(r, |r| num(r.observed_h))),
            ("mc_stderr", opt(r, |r| num(r.mc_stderr))),
            ("decision", string(s.decision.name())),
            ("alpha", num(s.alpha)),
            ("degenerate", opt(r, |r| r.degenerate.to_string())),
            ("note", opt(s.note.as_deref(), string)),
        ];
        out.push_str("    {\n");
        for (j, (key, value)) in fields.iter().enumerate() {
            let comma = if j + 1 < fields.len() { "," } else { "" };
            let _ = writeln!(out, "      \"{key}\": {value}{comma}");
        }
        out.push_str(if i + 1 < report.stages.len() {
            "    },\n"
        } else {
            "    }\n"
        });
    }
    out.push_str("  ],\n");
    let _ = writeln!(out, "  \"inference_ready\": {}", report.inference_ready);
    out.push_str("}\n");
    out
}

pub fn write_report_json(report: &CheckReport, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, report_to_json(report))?;
    Ok(())
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::MissingRequired(key.to_owned()))
}

fn mismatch(key: &str, expected: &'static str) -> Error {
    Error::TypeMismatch {
        key: key.to_owned(),
        expected,
    }
}

/// Parses a report written by [`report_to_json`].
pub fn parse_report_json(text: &str) -> Result<CheckReport> {
    let root: Value = serde_json::from_str(text)?;
    let obj = root
        .as_object()
        .ok_or_else(|| mismatch("<root>", "object"))?;
    if field(obj, "schema_version")?.as_str() != Some(SCHEMA_VERSION) {
        return Err(Error::invalid(
            "schema_version",
            "unsupported schema version",
        ));
    }
    let summary = field(obj, "data_summary")?
        .as_object()
        .ok_or_else(|| mismatch("data_summary", "object"))?;
    let uint = |o: &Map<String, Value>, k: &str| {
        field(o, k)?.as_u64().ok_or_else(|| mismatch(k, "integer"))
    };
    let groups = uint(summary, "I")? as usize;
    let per_group = uint(summary, "n")? as usize;
    let mut stages = Vec::new();
    for s in field(obj, "stages")?
        .as_array()
        .ok_or_else(|| mismatch("stages", "array"))?
    {
        let s = s
            .as_object()
            .ok_or_else(|| mismatch("stages[]", "object"))?;
        let text = |k: &str| field(s, k)?.as_str().ok_or_else(|| mismatch(k, "string"));
        let float = |k: &str| field(s, k)?.as_f64().ok_or_else(|| mismatch(k, "number"));
        let stage = Stage::parse(text("stage")?).ok_or_else(|| mismatch("stage", "stage name"))?;
        let status =
            StageStatus::parse(text("status")?).ok_or_else(|| mismatch("status", "status name"))?;
        let decision = Decision::parse(text("decision")?)
            .ok_or_else(|| mismatch("decision", "decision name"))?;
        let discrepancy = text("discrepancy")?.to_owned();
        let seed = uint(s, "seed")?;
        let result = if field(s, "p_value")?.is_null() {
            None
        } else {
            Some(PValueResult {
                p: float("p_value")?,
                n_draws: uint(s, "n_draws")? as usize,
                seed,
                mc_stderr: float("mc_stderr")?,
                discrepancy: discrepancy.clone(),
                observed_h: float("observed_h")?,
                degenerate: s
                    .get("degenerate")
                    .and_then(Value::as_bool)
                    .unwrap_or(false),
            })
        };
        stages.push(StageRecord {
            stage,
            status,
            result,
            alpha: float("alpha")?,
            decision,
            discrepancy,
            seed,
            note: s.get("note").and_then(Value::as_str).map(str::to_owned),
        });
    }
    let inference_ready = field(obj, "inference_ready")?
        .as_bool()
        .ok_or_else(|| mismatch("inference_ready", "boolean"))?;
    Ok(CheckReport {
        groups,
        per_group,
        stages,
        inference_ready,
    })
}

pub fn calibration_to_json(result: &CalibrationResult) -> String {
    let pvalues: Vec<String> = result.pvalues.iter().map(|&p| num(p)).collect();
    format!(
        "{{\n  \"stage\": {},\n  \"M\": {},\n  \"N_inner\": {},\n  \"ks_distance\": {},\n  \"ks_pvalue\": {},\n  \"pvalues\": [{}]\n}}\n",
        string(result.stage.name()),
        result.datasets,
        result.n_inner,
        num(result.ks_distance),
        num(result.ks_pvalue),
        pvalues.join(", ")
    )
}
