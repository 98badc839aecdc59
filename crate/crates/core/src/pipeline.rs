//! Measurement records to fitted weights to error reports, over a suite.
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::{
    build_design_matrix, fit_weights, geometric_mean, geometric_mean_error, predict, DesignMatrix,
    FitReport, MeasurementRecord, ModelWeights,
};
use crate::props::{extract_properties_with, PropertyVector};
use crate::suite::Suite;

/// Bound properties of the kernel a record timed.
pub fn record_properties(suite: &Suite, r: &MeasurementRecord, cap: u64) -> Result<PropertyVector> {
    let k = suite.instantiate(&r.kernel, r.group)?;
    extract_properties_with(&k, Some(&r.binding), cap)
}

pub fn design_matrix(
    suite: &Suite,
    records: &[MeasurementRecord],
    cap: u64,
) -> Result<DesignMatrix> {
    let rows = records
        .iter()
        .map(|r| Ok((record_properties(suite, r, cap)?, r.time_s)))
        .collect::<Result<Vec<_>>>()?;
    build_design_matrix(&rows)
}

pub fn fit_records(
    suite: &Suite,
    records: &[MeasurementRecord],
    device: &str,
    cap: u64,
) -> Result<(ModelWeights, FitReport, DesignMatrix)> {
    let dm = design_matrix(suite, records, cap)?;
    let (w, report) = fit_weights(&dm, device)?;
    Ok((w, report, dm))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelError {
    pub kernel: String,
    pub cases: usize,
    pub geomean: f64,
}

/// Per-kernel geometric-mean relative errors and their geometric mean.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub kernels: Vec<KernelError>,
    pub cross_kernel: f64,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn to_json(&self) -> Value {
        json!({
            "kernels": self.kernels.iter().map(|k| json!({
                "kernel": k.kernel, "cases": k.cases, "geomean_error": k.geomean,
            })).collect::<Vec<_>>(),
            "cross_kernel_geomean_error": self.cross_kernel,
            "warnings": self.warnings,
        })
    }
}

/// Predicts every record and summarizes relative errors per kernel, in order
/// of first appearance.
pub fn evaluate_records(
    suite: &Suite,
    weights: &ModelWeights,
    records: &[MeasurementRecord],
    cap: u64,
) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::Empty("no test records".into()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut pairs: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut warnings = Vec::new();
    for r in records {
        let p = predict(weights, &record_properties(suite, r, cap)?)?;
        for w in p.warnings {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        let i = match order.iter().position(|k| *k == r.kernel) {
            Some(i) => i,
            None => {
                order.push(r.kernel.clone());
                pairs.push(Vec::new());
                order.len() - 1
            }
        };
        pairs[i].push((p.seconds, r.time_s));
    }
    let kernels = order
        .into_iter()
        .zip(&pairs)
        .map(|(kernel, p)| {
            Ok(KernelError {
                kernel,
                cases: p.len(),
                geomean: geometric_mean_error(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cross_kernel = geometric_mean(&kernels.iter().map(|k| k.geomean).collect::<Vec<_>>())?;
    Ok(EvalReport {
        kernels,
        cross_kernel,
        warnings,
    })
}
