use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{FitSummary, MeasurementRecord, ModelWeights};
use crate::binding::{Binding, GroupConfig};
use crate::error::{Error, Result};
use crate::props::{key_index, schema, SCHEMA_VERSION};

/// Runs dropped from the front of every raw-run series before taking the
/// minimum.
pub const WARMUP_RUNS: usize = 4;

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    kernel: String,
    binding: String,
    group_config: String,
    time_s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRow {
    kernel: String,
    binding: String,
    group_config: String,
    run_index: u32,
    time_s: f64,
}

/// One repetition of a timed case.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRun {
    pub record: MeasurementRecord,
    pub run_index: u32,
}

/// Reads a measurement CSV. A `run_index` column marks a raw-runs file,
/// which is reduced with [`reduce_raw_runs`].
pub fn read_measurements(r: impl Read) -> Result<Vec<MeasurementRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let raw = rdr.headers()?.iter().any(|h| h == "run_index");
    if raw {
        let runs = rdr
            .deserialize::<RawRow>()
            .map(|row| {
                let row = row?;
                Ok(RawRun {
                    record: record(row.kernel, &row.binding, &row.group_config, row.time_s)?,
                    run_index: row.run_index,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        reduce_raw_runs(&runs)
    } else {
        rdr.deserialize::<Row>()
            .map(|row| {
                let row = row?;
                record(row.kernel, &row.binding, &row.group_config, row.time_s)
            })
            .collect()
    }
}

fn record(kernel: String, binding: &str, group: &str, time_s: f64) -> Result<MeasurementRecord> {
    if !(time_s > 0.0 && time_s.is_finite()) {
        return Err(Error::NonPositiveTime(format!(
            "`{kernel}` at `{binding}` has time {time_s}"
        )));
    }
    Ok(MeasurementRecord {
        kernel,
        binding: binding.parse()?,
        group: group.parse()?,
        time_s,
    })
}

/// Per case, in order of first appearance: sorts the runs by index, drops
/// the first [`WARMUP_RUNS`] and keeps the minimum time of the rest.
pub fn reduce_raw_runs(runs: &[RawRun]) -> Result<Vec<MeasurementRecord>> {
    let mut order: Vec<(String, Binding, GroupConfig)> = Vec::new();
    let mut groups: HashMap<(String, Binding, GroupConfig), Vec<(u32, f64)>> = HashMap::new();
    for run in runs {
        let r = &run.record;
        let key = (r.kernel.clone(), r.binding.clone(), r.group);
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push((run.run_index, r.time_s));
    }
    order
        .into_iter()
        .map(|key| {
            let mut series = groups.remove(&key).unwrap();
            series.sort_by_key(|(i, _)| *i);
            let time_s = series
                .iter()
                .skip(WARMUP_RUNS)
                .map(|(_, t)| *t)
                .min_by(f64::total_cmp)
                .ok_or_else(|| {
                    Error::Format(format!(
                        "`{}` at `{}` has {} runs; more than {WARMUP_RUNS} are needed",
                        key.0,
                        key.1,
                        series.len()
                    ))
                })?;
            Ok(MeasurementRecord {
                kernel: key.0,
                binding: key.1,
                group: key.2,
                time_s,
            })
        })
        .collect()
}

pub fn write_measurements(w: impl Write, records: &[MeasurementRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(Row {
            kernel: r.kernel.clone(),
            binding: r.binding.to_string(),
            group_config: r.group.to_string(),
            time_s: r.time_s,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

impl ModelWeights {
    pub fn to_json(&self) -> Value {
        let mut weights = Map::new();
        let mut covered = Map::new();
        for (i, key) in schema().iter().enumerate() {
            weights.insert(key.clone(), json!(self.weights[i]));
            covered.insert(key.clone(), json!(self.covered[i]));
        }
        let mut out = Map::new();
        out.insert("device".into(), json!(self.device));
        out.insert("schema_version".into(), json!(self.schema_version));
        out.insert("weights".into(), Value::Object(weights));
        out.insert("covered".into(), Value::Object(covered));
        if let Some(f) = &self.fit {
            out.insert(
                "fit".into(),
                json!({"objective": f.objective, "n_cases": f.n_cases}),
            );
        }
        Value::Object(out)
    }

    /// Parses a weights file. Files written for another schema version are
    /// rejected with `E_SCHEMA_MISMATCH`.
    pub fn from_json(v: &Value) -> Result<Self> {
        let field = |name: &str| {
            v.get(name)
                .ok_or_else(|| Error::Format(format!("weights file lacks `{name}`")))
        };
        let version = field("schema_version")?
            .as_str()
            .ok_or_else(|| Error::Format("`schema_version` must be a string".into()))?;
        if version != SCHEMA_VERSION {
            return Err(Error::SchemaMismatch {
                expected: SCHEMA_VERSION.to_string(),
                found: version.to_string(),
            });
        }
        let device = field("device")?.as_str().unwrap_or_default().to_string();
        let n = schema().len();
        let mut weights = vec![0.0; n];
        let mut covered = vec![false; n];
        let entries = |name: &str| -> Result<Vec<(usize, Value)>> {
            let obj = field(name)?
                .as_object()
                .ok_or_else(|| Error::Format(format!("`{name}` must be an object")))?;
            obj.iter()
                .map(|(k, v)| {
                    key_index(k)
                        .map(|i| (i, v.clone()))
                        .ok_or_else(|| Error::SchemaMismatch {
                            expected: SCHEMA_VERSION.to_string(),
                            found: format!("{version} (unknown property `{k}`)"),
                        })
                })
                .collect()
        };
        for (i, w) in entries("weights")? {
            weights[i] = w.as_f64().ok_or_else(|| {
                Error::Format(format!("weight of `{}` is not a number", schema()[i]))
            })?;
        }
        match v.get("covered") {
            Some(_) => {
                for (i, c) in entries("covered")? {
                    covered[i] = c.as_bool().unwrap_or(false);
                }
            }
            None => covered.iter_mut().for_each(|c| *c = true),
        }
        let fit = v.get("fit").and_then(|f| {
            Some(FitSummary {
                objective: f.get("objective")?.as_f64()?,
                n_cases: f.get("n_cases")?.as_u64()? as usize,
            })
        });
        Ok(ModelWeights {
            device,
            schema_version: version.to_string(),
            weights,
            covered,
            fit,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_runs_drop_warmup_then_take_minimum() {
        let mut csv = String::from("kernel,binding,group_config,run_index,time_s\n");
        for i in 0..30 {
            // run 2 is a fast outlier inside the warm-up window
            let t = if i == 2 {
                0.5
            } else {
                2.0 + (i % 7) as f64 * 0.1
            };
            csv.push_str(&format!("copy,n=1024,256,{i},{t}\n"));
        }
        let recs = read_measurements(csv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].time_s, 2.0);
        assert_eq!(recs[0].binding.get("n"), Some(1024));
    }

    #[test]
    fn too_few_runs() {
        let csv = "kernel,binding,group_config,run_index,time_s\nk,n=1,16,0,1.0\n";
        assert!(read_measurements(csv.as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![MeasurementRecord {
            kernel: "matmul".into(),
            binding: "n=64;m=32".parse().unwrap(),
            group: GroupConfig(16, 16),
            time_s: 1.25e-5,
        }];
        let mut buf = Vec::new();
        write_measurements(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("kernel,binding,group_config,time_s\n"));
        assert_eq!(read_measurements(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn weights_json_round_trip() {
        let mut w = ModelWeights::from_pairs("R9Fury", &[("launch.const", 1.29e-4)]).unwrap();
        w.covered[0] = false;
        let back = ModelWeights::from_json(&w.to_json()).unwrap();
        assert_eq!(back, w);
        let mut v = w.to_json();
        v["schema_version"] = json!("0");
        assert_eq!(
            ModelWeights::from_json(&v).unwrap_err().code(),
            "E_SCHEMA_MISMATCH"
        );
    }
}
