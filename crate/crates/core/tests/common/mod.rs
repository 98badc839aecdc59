#![allow(dead_code)]
use kernelcost::model::{objective_change, DesignMatrix, MeasurementRecord, ModelWeights};
use kernelcost::pipeline::{evaluate_records, fit_records};
use kernelcost::props::{
    evaluate_properties, extract_properties, schema, PropertyVector, DEFAULT_CAP,
};
use kernelcost::sim::{enumerate_points, run_campaign, SimDevice};
use kernelcost::suite::{statement_instances, Role, Suite};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TEST_KERNELS: [&str; 4] = ["finite_diff", "skinny_matmul", "convolution", "nbody"];

pub fn mismatches(a: &PropertyVector, b: &PropertyVector) -> Vec<String> {
    schema()
        .iter()
        .filter(|k| a.count(k) != b.count(k))
        .map(|k| format!("{k}: {:?} vs {:?}", a.count(k), b.count(k)))
        .collect()
}

/// Bound extraction against enumeration at `per_kernel` random bindings of
/// every bundled kernel. Returns the number of comparisons.
pub fn oracle_sweep(suite: &Suite, per_kernel: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n = 0;
    for k in suite.kernels() {
        let samples = suite
            .oracle_samples(&k.id, per_kernel, DEFAULT_CAP, &mut rng)
            .map_err(|e| e.to_string())?;
        for (group, b) in samples {
            let ir = suite.instantiate(&k.id, group).map_err(|e| e.to_string())?;
            let tally =
                enumerate_points(&ir, &b, DEFAULT_CAP).map_err(|e| format!("{} {b}: {e}", k.id))?;
            let pv = extract_properties(&ir, Some(&b)).map_err(|e| format!("{} {b}: {e}", k.id))?;
            let bad = mismatches(&pv, &tally.properties);
            if !bad.is_empty() {
                return Err(format!("{} group {group} at {b}: {bad:?}", k.id));
            }
            n += 1;
        }
    }
    Ok(n)
}

/// Symbolic counts evaluated at `per_kernel` bindings against enumeration,
/// for every kernel whose statements all count symbolically. Returns
/// (kernels checked, comparisons).
pub fn symbolic_sweep(
    suite: &Suite,
    per_kernel: usize,
    seed: u64,
) -> Result<(usize, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut kernels, mut n) = (0, 0);
    for k in suite.kernels() {
        let samples = suite
            .oracle_samples(&k.id, per_kernel, DEFAULT_CAP, &mut rng)
            .map_err(|e| e.to_string())?;
        let mut checked = false;
        for (group, b) in samples {
            let ir = suite.instantiate(&k.id, group).map_err(|e| e.to_string())?;
            let Some(points) = statement_instances(&ir, &b) else {
                continue;
            };
            let tally = enumerate_points(&ir, &b, DEFAULT_CAP).map_err(|e| e.to_string())?;
            if points != tally.points {
                return Err(format!(
                    "{} at {b}: {points} symbolic points, {} enumerated",
                    k.id, tally.points
                ));
            }
            if let Ok(pv) = extract_properties(&ir, None) {
                let bound = evaluate_properties(&ir, &pv, &b).map_err(|e| e.to_string())?;
                let bad = mismatches(&bound, &tally.properties);
                if !bad.is_empty() {
                    return Err(format!("{} group {group} at {b}: {bad:?}", k.id));
                }
            }
            checked = true;
            n += 1;
        }
        kernels += checked as usize;
    }
    Ok((kernels, n))
}

pub fn simulate(
    suite: &Suite,
    dev: &SimDevice,
    profile: &str,
    role: Role,
) -> Vec<MeasurementRecord> {
    let cases = suite.cases(role, profile).unwrap();
    let (records, errors) = run_campaign(dev, suite, &cases, |_, _| {});
    assert!(
        errors.is_empty(),
        "{:?}",
        errors
            .iter()
            .map(|e| e.error.to_string())
            .collect::<Vec<_>>()
    );
    records
}

pub fn fit(
    suite: &Suite,
    records: &[MeasurementRecord],
    profile: &str,
) -> (ModelWeights, f64, DesignMatrix) {
    let (w, report, dm) = fit_records(suite, records, profile, DEFAULT_CAP).unwrap();
    (w, report.objective, dm)
}

pub struct Recovery {
    pub worst_relative: f64,
    /// Largest `|α_i| · max_j X_ji` over covered properties whose true weight is 0.
    pub worst_zero_share: f64,
    pub objective: f64,
    pub covered: usize,
}

pub fn noiseless_recovery(suite: &Suite, profile: &str) -> Recovery {
    let dev = SimDevice::r9_fury();
    let records = simulate(suite, &dev, profile, Role::Measurement);
    let (w, objective, dm) = fit(suite, &records, profile);
    let mut r = Recovery {
        worst_relative: 0.0,
        worst_zero_share: 0.0,
        objective,
        covered: 0,
    };
    for i in 0..schema().len() {
        if !dm.covered[i] {
            continue;
        }
        r.covered += 1;
        let truth = dev.weights[i];
        if truth != 0.0 {
            r.worst_relative = r.worst_relative.max(((w.weights[i] - truth) / truth).abs());
        } else {
            let share =
                dm.rows.column(i).iter().fold(0.0f64, |m, x| m.max(x.abs())) * w.weights[i].abs();
            r.worst_zero_share = r.worst_zero_share.max(share);
        }
    }
    r
}

/// Cross-kernel geometric-mean error on the test kernels after fitting on
/// noisy measurements.
pub fn noisy_cross_kernel(suite: &Suite, profile: &str, sigma: f64, seed: u64) -> f64 {
    let dev = SimDevice::r9_fury().noisy(sigma, seed);
    let records = simulate(suite, &dev, profile, Role::Measurement);
    let (w, _, _) = fit(suite, &records, profile);
    let tests = simulate(suite, &dev, profile, Role::Test);
    let report = evaluate_records(suite, &w, &tests, DEFAULT_CAP).unwrap();
    assert!(report.warnings.is_empty(), "{:?}", report.warnings);
    assert_eq!(report.kernels.len(), TEST_KERNELS.len());
    report.cross_kernel
}

pub struct Perturbation {
    /// Smallest objective change over all ±1% single-weight perturbations.
    pub worst_change: f64,
    /// Perturbations that decreased the objective by more than rounding.
    pub violations: usize,
    /// Perturbations whose change was negative but within rounding.
    pub within_rounding: usize,
    pub tried: usize,
}

pub fn perturbations(dm: &DesignMatrix, w: &ModelWeights) -> Perturbation {
    let mut p = Perturbation {
        worst_change: f64::INFINITY,
        violations: 0,
        within_rounding: 0,
        tried: 0,
    };
    for i in 0..w.weights.len() {
        if !dm.covered[i] {
            continue;
        }
        for rel in [0.01, -0.01] {
            let c = objective_change(dm, &w.weights, i, rel);
            p.tried += 1;
            p.worst_change = p.worst_change.min(c.change);
            if c.change < -c.resolution {
                p.violations += 1;
            } else if c.change < 0.0 {
                p.within_rounding += 1;
            }
        }
    }
    p
}
