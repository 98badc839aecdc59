//! Synthetic device: exhaustive enumeration oracle and a timing backend that
//! realizes the linear model exactly, with optional log-normal noise.
mod enumerate;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub use enumerate::{enumerate_points, EnumTally};

use crate::binding::{Binding, GroupConfig};
use crate::error::{Error, Result};
use crate::ir::KernelIR;
use crate::model::MeasurementRecord;
use crate::props::{extract_properties, key_index, schema, CONST};
use crate::suite::{Suite, SuiteCase};

/// Property weights of the AMD Radeon R9 Fury, seconds per unit.
pub const R9_FURY_WEIGHTS: &[(&str, f64)] = &[
    ("flop.f32.addsub", 6.81e-13),
    ("flop.f32.mul", 5.68e-13),
    ("flop.f32.pow", 3.91e-13),
    ("flop.f32.special", 1.61e-12),
    ("mem.local.load", -1.76e-12),
    ("mem.global.load.s32.1/1", 8.27e-12),
    ("mem.global.load.s32.2/2", 9.82e-13),
    ("mem.global.load.s32.1/3", 2.89e-11),
    ("mem.global.load.s32.3/3", 9.30e-13),
    ("mem.global.load.s32.4/>4", 2.67e-12),
    ("mem.global.store.s32.1/1", 6.52e-12),
    ("mem.global.store.s32.4/>4", 3.55e-10),
    ("mem.minls.s32.1/1", -6.63e-12),
    ("sync.barrier", 4.26e-11),
    ("launch.groups", 3.75e-09),
    ("launch.const", 1.29e-04),
];

/// A simulated GPU: hidden weights plus a multiplicative noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDevice {
    pub name: String,
    /// Standard deviation of the log-normal noise factor.
    pub sigma: f64,
    pub seed: u64,
    /// Ground-truth weights in schema order.
    pub weights: Vec<f64>,
}

impl SimDevice {
    /// The R9 Fury weights, noiseless.
    pub fn r9_fury() -> Self {
        Self::with_weights("R9Fury", R9_FURY_WEIGHTS).expect("table keys are in the schema")
    }

    pub fn with_weights(name: &str, pairs: &[(&str, f64)]) -> Result<Self> {
        let mut weights = vec![0.0; schema().len()];
        for (key, w) in pairs {
            let i =
                key_index(key).ok_or_else(|| Error::Format(format!("unknown property `{key}`")))?;
            weights[i] = *w;
        }
        let dev = SimDevice {
            name: name.to_string(),
            sigma: 0.0,
            seed: 0,
            weights,
        };
        dev.check()?;
        Ok(dev)
    }

    pub fn noisy(mut self, sigma: f64, seed: u64) -> Self {
        self.sigma = sigma;
        self.seed = seed;
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Format(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        if !(self.weights[key_index(CONST).unwrap()] > 0.0) {
            return Err(Error::Format(format!(
                "device `{}` needs a positive `{CONST}` weight",
                self.name
            )));
        }
        Ok(())
    }

    pub fn weight(&self, key: &str) -> Option<f64> {
        key_index(key).map(|i| self.weights[i])
    }

    /// Parses `{name, sigma, seed, weights: {key: float}}`; missing weights are 0.
    pub fn from_json(v: &Value) -> Result<Self> {
        let name = v
            .get("name")
            .and_then(Value::as_str)
            .unwrap_or("sim")
            .to_string();
        let sigma = v.get("sigma").map_or(Some(0.0), Value::as_f64);
        let seed = v.get("seed").map_or(Some(0), Value::as_u64);
        let (Some(sigma), Some(seed)) = (sigma, seed) else {
            return Err(Error::Format(
                "`sigma` must be a number and `seed` a nonnegative integer".into(),
            ));
        };
        let obj = v
            .get("weights")
            .and_then(Value::as_object)
            .ok_or_else(|| Error::Format("device file needs a `weights` object".into()))?;
        let pairs = obj
            .iter()
            .map(|(k, w)| {
                w.as_f64()
                    .map(|w| (k.as_str(), w))
                    .ok_or_else(|| Error::Format(format!("weight of `{k}` is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        let dev = Self::with_weights(&name, &pairs)?.noisy(sigma, seed);
        dev.check()?;
        Ok(dev)
    }

    pub fn to_json(&self) -> Value {
        let weights: Map<String, Value> = schema()
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w != 0.0)
            .map(|(k, w)| (k.clone(), json!(w)))
            .collect();
        json!({"name": self.name, "sigma": self.sigma, "seed": self.seed, "weights": weights})
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&serde_json::from_str(&text)?)
    }

    /// Noise draw for one case, keyed so it is independent of call order.
    fn noise(&self, kernel: &str, binding: &Binding, group: GroupConfig) -> f64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for part in [kernel.to_string(), binding.to_string(), group.to_string()] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(h.finalize().into());
        rng.sample(StandardNormal)
    }
}

/// Noiseless model time `Σ α*ᵢ pᵢ` of an instantiated kernel at a binding.
pub fn model_time(dev: &SimDevice, k: &KernelIR, binding: &Binding) -> Result<f64> {
    let p = extract_properties(k, Some(binding))?.to_f64()?;
    Ok(p.iter().zip(&dev.weights).map(|(p, w)| p * w).sum())
}

/// Simulated run time of `k` (already instantiated for `group`) at `binding`.
pub fn simulate_time(
    dev: &SimDevice,
    k: &KernelIR,
    binding: &Binding,
    group: GroupConfig,
) -> Result<f64> {
    let t = model_time(dev, k, binding)?;
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(format!(
            "`{}` at `{binding}` with group {group} has model time {t:e}",
            k.name
        )));
    }
    if dev.sigma == 0.0 {
        return Ok(t);
    }
    Ok(t * (dev.sigma * dev.noise(&k.name, binding, group)).exp())
}

/// A case that failed to simulate.
#[derive(Debug)]
pub struct CaseError {
    pub case: SuiteCase,
    pub error: Error,
}

/// Simulates every case in order. Failures are collected rather than fatal.
pub fn run_campaign(
    dev: &SimDevice,
    suite: &Suite,
    cases: &[SuiteCase],
    mut progress: impl FnMut(usize, usize),
) -> (Vec<MeasurementRecord>, Vec<CaseError>) {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let timed = suite
            .instantiate(&case.kernel, case.group)
            .and_then(|k| simulate_time(dev, &k, &case.binding, case.group));
        match timed {
            Ok(time_s) => records.push(MeasurementRecord {
                kernel: case.kernel.clone(),
                binding: case.binding.clone(),
                group: case.group,
                time_s,
            }),
            Err(error) => errors.push(CaseError {
                case: case.clone(),
                error,
            }),
        }
        progress(i + 1, cases.len());
    }
    (records, errors)
}
