//! Linear run-time model `T ≈ Σ αᵢ pᵢ`: fitting and prediction.
mod io;

use nalgebra::{DMatrix, DVector};

pub use io::{read_measurements, reduce_raw_runs, write_measurements, RawRun};

use crate::binding::{Binding, GroupConfig};
use crate::error::{Error, Result};
use crate::props::{schema, PropertyVector, SCHEMA_VERSION};

/// One timed kernel execution.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub kernel: String,
    pub binding: Binding,
    pub group: GroupConfig,
    pub time_s: f64,
}

/// Per-device weights in seconds per unit of each property.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub device: String,
    pub schema_version: String,
    pub weights: Vec<f64>,
    /// False where no fitting case exercised the property; such weights are 0.
    pub covered: Vec<bool>,
    pub fit: Option<FitSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSummary {
    pub objective: f64,
    pub n_cases: usize,
}

impl ModelWeights {
    /// Weights given by key; every other property gets 0 and every property
    /// counts as covered.
    pub fn from_pairs(device: &str, pairs: &[(&str, f64)]) -> Result<Self> {
        let mut weights = vec![0.0; schema().len()];
        for (key, w) in pairs {
            let i = crate::props::key_index(key)
                .ok_or_else(|| Error::Format(format!("unknown property `{key}`")))?;
            weights[i] = *w;
        }
        Ok(ModelWeights {
            device: device.to_string(),
            schema_version: SCHEMA_VERSION.to_string(),
            weights,
            covered: vec![true; schema().len()],
            fit: None,
        })
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        crate::props::key_index(key).map(|i| self.weights[i])
    }

    fn check_schema(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION || self.weights.len() != schema().len() {
            return Err(Error::SchemaMismatch {
                expected: SCHEMA_VERSION.to_string(),
                found: self.schema_version.clone(),
            });
        }
        Ok(())
    }
}

/// Rows `p / T` of the fitting problem; the target is all ones.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub rows: DMatrix<f64>,
    pub covered: Vec<bool>,
}

pub fn build_design_matrix(cases: &[(PropertyVector, f64)]) -> Result<DesignMatrix> {
    if cases.is_empty() {
        return Err(Error::Empty("no fitting cases".into()));
    }
    let n = schema().len();
    let mut rows = DMatrix::zeros(cases.len(), n);
    for (j, (pv, t)) in cases.iter().enumerate() {
        if !(*t > 0.0 && t.is_finite()) {
            return Err(Error::NonPositiveTime(format!(
                "case {j} (`{}`) has time {t}",
                pv.kernel
            )));
        }
        for (i, p) in pv.to_f64()?.into_iter().enumerate() {
            rows[(j, i)] = p / t;
        }
    }
    let covered = (0..n)
        .map(|i| rows.column(i).iter().any(|v| *v != 0.0))
        .collect();
    Ok(DesignMatrix { rows, covered })
}

/// `Σ_j (1 − row_j · α)²`.
pub fn objective(dm: &DesignMatrix, weights: &[f64]) -> f64 {
    let alpha = DVector::from_column_slice(weights);
    let pred = &dm.rows * alpha;
    pred.iter().map(|p| (1.0 - p) * (1.0 - p)).sum()
}

/// Effect on [`objective`] of scaling one weight by `1 + rel`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveChange {
    /// `Σ_j a_j (a_j − 2 r_j)` with `a_j = rel·α_i·X_ji` and residuals `r_j`,
    /// which avoids cancelling two nearly equal sums.
    pub change: f64,
    /// Bound on the rounding error of `change`: residuals are only known to
    /// within `eps · Σ_i |X_ji α_i|` each.
    pub resolution: f64,
}

pub fn objective_change(dm: &DesignMatrix, weights: &[f64], i: usize, rel: f64) -> ObjectiveChange {
    let step = rel * weights[i];
    let mut out = ObjectiveChange {
        change: 0.0,
        resolution: 0.0,
    };
    for (j, row) in dm.rows.row_iter().enumerate() {
        let (mut pred, mut mag) = (0.0, 0.0);
        for (x, w) in row.iter().zip(weights) {
            pred += x * w;
            mag += (x * w).abs();
        }
        let (a, r) = (step * dm.rows[(j, i)], 1.0 - pred);
        out.change += a * (a - 2.0 * r);
        out.resolution += 4.0 * a.abs() * (1.0 + mag) * f64::EPSILON;
    }
    out
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub objective: f64,
    /// `1 − predicted/measured` per case.
    pub residuals: Vec<f64>,
    pub rank: usize,
    /// Ratio of the largest to the smallest retained singular value of the
    /// column-equilibrated matrix.
    pub condition: f64,
    /// Properties no case exercised.
    pub uncovered: Vec<String>,
}

/// Iterative-refinement passes applied to the least-squares solution.
const REFINEMENT_STEPS: usize = 2;

/// Least-squares weights over the covered columns. Columns are scaled to unit
/// norm before a thresholded SVD, so a rank-deficient problem resolves to the
/// minimum-norm solution in the scaled coordinates.
pub fn fit_weights(dm: &DesignMatrix, device: &str) -> Result<(ModelWeights, FitReport)> {
    let cols: Vec<usize> = (0..dm.covered.len()).filter(|i| dm.covered[*i]).collect();
    if cols.is_empty() {
        return Err(Error::Empty("every property column is zero".into()));
    }
    let m = dm.rows.nrows();
    let mut a = DMatrix::zeros(m, cols.len());
    let mut scale = Vec::with_capacity(cols.len());
    for (c, &i) in cols.iter().enumerate() {
        let col = dm.rows.column(i);
        let norm = col.norm();
        scale.push(norm);
        a.set_column(c, &(col / norm));
    }
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * (m.max(cols.len()) as f64) * f64::EPSILON;
    let kept: Vec<f64> = svd
        .singular_values
        .iter()
        .copied()
        .filter(|s| *s > tol)
        .collect();
    let rank = kept.len();
    let condition = max_sv / kept.iter().copied().fold(f64::INFINITY, f64::min);
    let ones = DVector::from_element(m, 1.0);
    let solve = |b: &DVector<f64>| {
        svd.solve(b, tol)
            .map_err(|e| Error::Format(format!("least-squares solve failed: {e}")))
    };
    let mut y = solve(&ones)?;
    for _ in 0..REFINEMENT_STEPS {
        let r = &ones - &a * &y;
        y += solve(&r)?;
    }

    let mut weights = vec![0.0; dm.covered.len()];
    for (c, &i) in cols.iter().enumerate() {
        weights[i] = y[c] / scale[c];
    }
    let obj = objective(dm, &weights);
    let zero = m as f64;
    if obj > zero {
        return Err(Error::Format(format!(
            "fit objective {obj} exceeds that of the zero model {zero}"
        )));
    }
    let pred = &dm.rows * DVector::from_column_slice(&weights);
    let report = FitReport {
        objective: obj,
        residuals: pred.iter().map(|p| 1.0 - p).collect(),
        rank,
        condition,
        uncovered: schema()
            .iter()
            .zip(&dm.covered)
            .filter(|(_, c)| !**c)
            .map(|(k, _)| k.clone())
            .collect(),
    };
    let mw = ModelWeights {
        device: device.to_string(),
        schema_version: SCHEMA_VERSION.to_string(),
        weights,
        covered: dm.covered.clone(),
        fit: Some(FitSummary {
            objective: obj,
            n_cases: m,
        }),
    };
    Ok((mw, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub seconds: f64,
    /// Nonzero `αᵢ pᵢ` terms in schema order.
    pub breakdown: Vec<(String, f64)>,
    /// Properties the kernel exercises but the fit never saw.
    pub warnings: Vec<String>,
}

/// Inner product of the weights with a bound property vector.
pub fn predict(weights: &ModelWeights, pv: &PropertyVector) -> Result<Prediction> {
    weights.check_schema()?;
    let p = pv.to_f64()?;
    let mut seconds = 0.0;
    let mut breakdown = Vec::new();
    let mut warnings = Vec::new();
    for (i, key) in schema().iter().enumerate() {
        if p[i] == 0.0 {
            continue;
        }
        if !weights.covered[i] {
            warnings.push(format!(
                "`{key}` = {} was not covered by the fit; its weight is 0",
                p[i]
            ));
        }
        let c = weights.weights[i] * p[i];
        if c != 0.0 {
            seconds += c;
            breakdown.push((key.clone(), c));
        }
    }
    Ok(Prediction {
        seconds,
        breakdown,
        warnings,
    })
}

/// Relative errors below this floor count as the floor, keeping the
/// geometric mean defined for exact predictions.
pub const ERROR_FLOOR: f64 = 1e-12;

/// Geometric mean over `(predicted, actual)` pairs of `|pred − actual| / actual`.
pub fn geometric_mean_error(pairs: &[(f64, f64)]) -> Result<f64> {
    let errors = pairs
        .iter()
        .map(|(pred, actual)| {
            if *actual > 0.0 {
                Ok((pred - actual).abs() / actual)
            } else {
                Err(Error::NonPositiveTime(format!("actual time {actual}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    geometric_mean(&errors)
}

/// Geometric mean of already computed relative errors, floored at
/// [`ERROR_FLOOR`].
pub fn geometric_mean(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Empty("no errors to average".into()));
    }
    let log_sum: f64 = errors.iter().map(|e| e.max(ERROR_FLOOR).ln()).sum();
    Ok((log_sum / errors.len() as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pv(values: &[(&str, u64)]) -> PropertyVector {
        let mut counts = vec![0u64; schema().len()];
        for (k, v) in values {
            counts[crate::props::key_index(k).unwrap()] = *v;
        }
        PropertyVector::from_counts("t", Binding::new(), &counts)
    }

    #[test]
    fn design_rows_divide_by_time() {
        let dm =
            build_design_matrix(&[(pv(&[("flop.f32.mul", 2), ("launch.const", 1)]), 2.0)]).unwrap();
        let i = crate::props::key_index("flop.f32.mul").unwrap();
        assert_eq!(dm.rows[(0, i)], 1.0);
        assert_eq!(dm.rows[(0, schema().len() - 1)], 0.5);
        assert_eq!(dm.covered.iter().filter(|c| **c).count(), 2);
        let err = build_design_matrix(&[(pv(&[]), 0.0)]).unwrap_err();
        assert_eq!(err.code(), "E_NONPOSITIVE_TIME");
    }

    #[test]
    fn identity_system() {
        let cases = [
            (pv(&[("flop.f32.mul", 1)]), 1.0),
            (pv(&[("flop.f32.div", 1)]), 1.0),
        ];
        let dm = build_design_matrix(&cases).unwrap();
        let (w, r) = fit_weights(&dm, "d").unwrap();
        assert_relative_eq!(w.get("flop.f32.mul").unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(w.get("flop.f32.div").unwrap(), 1.0, epsilon = 1e-12);
        assert!(r.objective < 1e-20);
        assert_eq!(r.rank, 2);
    }

    #[test]
    fn duplicate_columns_split_evenly() {
        let cases = [
            (pv(&[("flop.f32.mul", 4), ("flop.f32.div", 4)]), 2.0),
            (pv(&[("flop.f32.mul", 8), ("flop.f32.div", 8)]), 4.0),
        ];
        let dm = build_design_matrix(&cases).unwrap();
        let (w, r) = fit_weights(&dm, "d").unwrap();
        assert_eq!(r.rank, 1);
        let (a, b) = (
            w.get("flop.f32.mul").unwrap(),
            w.get("flop.f32.div").unwrap(),
        );
        assert_relative_eq!(a, b, epsilon = 1e-15);
        assert_relative_eq!(4.0 * a + 4.0 * b, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn prediction_breakdown() {
        let w = ModelWeights::from_pairs(
            "d",
            &[("launch.const", 1.29e-4), ("launch.groups", 3.75e-9)],
        )
        .unwrap();
        let p = predict(&w, &pv(&[("launch.const", 1), ("launch.groups", 1024)])).unwrap();
        assert_relative_eq!(p.seconds, 1.3284e-4, max_relative = 1e-12);
        assert_eq!(p.breakdown.len(), 2);
        let only_const = predict(&w, &pv(&[("launch.const", 1)])).unwrap();
        assert_eq!(only_const.seconds, 1.29e-4);

        let mut stale = w.clone();
        stale.schema_version = "0".into();
        assert_eq!(
            predict(&stale, &pv(&[])).unwrap_err().code(),
            "E_SCHEMA_MISMATCH"
        );
    }

    #[test]
    fn geomean() {
        assert_relative_eq!(
            geometric_mean_error(&[(1.1, 1.0)]).unwrap(),
            0.1,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            geometric_mean_error(&[(1.1, 1.0), (0.9, 1.0)]).unwrap(),
            0.1,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            geometric_mean_error(&[(1.0, 1.0)]).unwrap(),
            ERROR_FLOOR,
            max_relative = 1e-12
        );
        assert!(geometric_mean_error(&[(1.0, 0.0)]).is_err());
    }
}
