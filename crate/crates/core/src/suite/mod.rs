//! Bundled measurement and test kernels with their case matrices.
use std::collections::BTreeMap;
use std::path::Path;

use num_traits::ToPrimitive;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::binding::{Binding, GroupConfig};
use crate::error::{Error, Result};
use crate::ir::{parse_kernel_with, KernelIR};
use crate::props::check_binding;
use crate::symcount::{count_points, stmt_domain, Facts};

/// Environment variable naming a directory that replaces the bundled suite.
pub const SUITE_DIR_ENV: &str = "KERNELCOST_SUITE_DIR";
pub const MANIFEST: &str = "manifest.json";
pub const DEFAULT_PROFILE: &str = "R9Fury";

const BUNDLED_MANIFEST: &str = include_str!("../../kernels/v1/manifest.json");

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../kernels/v1/", $name)))),*]
    };
}

const BUNDLED_SOURCES: &[(&str, &str)] = bundled![
    "add4.knl",
    "arith_addsub.knl",
    "arith_div.knl",
    "arith_mul.knl",
    "arith_pow.knl",
    "arith_rsqrt.knl",
    "convolution.knl",
    "copy.knl",
    "empty.knl",
    "finite_diff.knl",
    "index_store.knl",
    "matmul_naive.knl",
    "matmul_tiled.knl",
    "nbody.knl",
    "skinny_matmul.knl",
    "stride2_filled.knl",
    "stride3_filled.knl",
    "transpose_prefetch.knl",
    "transpose_strided_read.knl",
    "transpose_strided_write.knl",
    "vscale_add_s1.knl",
    "vscale_add_s2.knl",
    "vscale_add_s3.knl",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Measurement,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum GroupSpec {
    /// The same configurations on every profile.
    Fixed(Vec<String>),
    /// A named group-size set per profile.
    PerProfile(BTreeMap<String, String>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Step {
    Int(i64),
    Const(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamRange {
    min: i64,
    max: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step: Option<Step>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OracleSpec {
    params: BTreeMap<String, ParamRange>,
    groups: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KernelSpec {
    id: String,
    file: String,
    role: Role,
    groups: GroupSpec,
    cases: Vec<String>,
    oracle: OracleSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    profiles: Vec<String>,
    group_sets: BTreeMap<String, Vec<String>>,
    kernels: Vec<KernelSpec>,
}

/// One kernel of the suite with its source text.
#[derive(Debug, Clone)]
pub struct SuiteKernel {
    pub id: String,
    pub role: Role,
    pub source: String,
    pub cases: Vec<Binding>,
    spec: KernelSpec,
}

/// One (kernel, group configuration, binding) to time.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCase {
    pub kernel: String,
    pub role: Role,
    pub group: GroupConfig,
    pub binding: Binding,
}

#[derive(Debug, Clone)]
pub struct Suite {
    manifest: Manifest,
    kernels: Vec<SuiteKernel>,
}

impl Suite {
    /// The suite compiled into the library.
    pub fn bundled() -> Self {
        Self::from_parts(BUNDLED_MANIFEST, |file| {
            BUNDLED_SOURCES
                .iter()
                .find(|(name, _)| *name == file)
                .map(|(_, src)| src.to_string())
                .ok_or_else(|| Error::Format(format!("bundled kernel `{file}` is missing")))
        })
        .expect("bundled suite is well formed")
    }

    pub fn from_dir(dir: &Path) -> Result<Self> {
        let manifest = std::fs::read_to_string(dir.join(MANIFEST))?;
        Self::from_parts(&manifest, |file| {
            Ok(std::fs::read_to_string(dir.join(file))?)
        })
    }

    /// The directory named by `KERNELCOST_SUITE_DIR` if set, else the bundled suite.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(SUITE_DIR_ENV) {
            Some(dir) => Self::from_dir(Path::new(&dir)),
            None => Ok(Self::bundled()),
        }
    }

    fn from_parts(manifest: &str, mut read: impl FnMut(&str) -> Result<String>) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(manifest)?;
        let kernels = manifest
            .kernels
            .iter()
            .map(|spec| {
                Ok(SuiteKernel {
                    id: spec.id.clone(),
                    role: spec.role,
                    source: read(&spec.file)?,
                    cases: spec
                        .cases
                        .iter()
                        .map(|c| c.parse())
                        .collect::<Result<_>>()?,
                    spec: spec.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Suite { manifest, kernels })
    }

    /// File names and contents of the manifest and every kernel source.
    pub fn files(&self) -> Vec<(String, String)> {
        let manifest =
            serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n";
        let mut files = vec![(MANIFEST.to_string(), manifest)];
        files.extend(
            self.kernels
                .iter()
                .map(|k| (k.spec.file.clone(), k.source.clone())),
        );
        files
    }

    /// Writes [`Suite::files`] into `dir`.
    pub fn emit(&self, dir: &Path, force: bool) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let files = self.files();
        let paths: Vec<_> = files.iter().map(|(f, _)| dir.join(f)).collect();
        if !force {
            if let Some(p) = paths.iter().find(|p| p.exists()) {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::AlreadyExists,
                    format!("{} exists; pass --force to overwrite", p.display()),
                )));
            }
        }
        for (path, (_, text)) in paths.iter().zip(&files) {
            std::fs::write(path, text)?;
        }
        Ok(paths)
    }

    pub fn profiles(&self) -> &[String] {
        &self.manifest.profiles
    }

    pub fn group_set(&self, name: &str) -> Option<Vec<GroupConfig>> {
        let set = self.manifest.group_sets.get(name)?;
        set.iter().map(|g| g.parse().ok()).collect()
    }

    pub fn kernels(&self) -> &[SuiteKernel] {
        &self.kernels
    }

    pub fn kernel(&self, id: &str) -> Result<&SuiteKernel> {
        self.kernels
            .iter()
            .find(|k| k.id == id)
            .ok_or_else(|| Error::UnknownKernel(id.to_string()))
    }

    /// Parses a kernel with its group-size constants set to `group`.
    pub fn instantiate(&self, id: &str, group: GroupConfig) -> Result<KernelIR> {
        let k = self.kernel(id)?;
        parse_kernel_with(&k.source, &group.overrides())
    }

    /// Group configurations a kernel runs with on a device profile.
    pub fn groups_for(&self, id: &str, profile: &str) -> Result<Vec<GroupConfig>> {
        let k = self.kernel(id)?;
        let names: Vec<String> = match &k.spec.groups {
            GroupSpec::Fixed(v) => v.clone(),
            GroupSpec::PerProfile(m) => {
                let set = m.get(profile).ok_or_else(|| {
                    Error::Format(format!(
                        "kernel `{id}` has no groups for profile `{profile}`"
                    ))
                })?;
                self.manifest
                    .group_sets
                    .get(set)
                    .cloned()
                    .ok_or_else(|| Error::Format(format!("unknown group-size set `{set}`")))?
            }
        };
        names.iter().map(|g| g.parse()).collect()
    }

    /// Case matrix of one role on a profile. Cases cycle through the
    /// kernel's group configurations.
    pub fn cases(&self, role: Role, profile: &str) -> Result<Vec<SuiteCase>> {
        let mut out = Vec::new();
        for k in self.kernels.iter().filter(|k| k.role == role) {
            let groups = self.groups_for(&k.id, profile)?;
            for (i, b) in k.cases.iter().enumerate() {
                out.push(SuiteCase {
                    kernel: k.id.clone(),
                    role,
                    group: groups[i % groups.len()],
                    binding: b.clone(),
                });
            }
        }
        Ok(out)
    }

    pub fn measurement_cases(&self, profile: &str) -> Result<Vec<SuiteCase>> {
        self.cases(Role::Measurement, profile)
    }

    pub fn test_cases(&self, profile: &str) -> Result<Vec<SuiteCase>> {
        self.cases(Role::Test, profile)
    }

    /// Random admissible (group, binding) pairs for a kernel whose statement
    /// instances stay within `cap`.
    pub fn oracle_samples(
        &self,
        id: &str,
        count: usize,
        cap: u64,
        rng: &mut impl Rng,
    ) -> Result<Vec<(GroupConfig, Binding)>> {
        let spec = &self.kernel(id)?.spec.oracle;
        let groups: Vec<GroupConfig> = spec
            .groups
            .iter()
            .map(|g| g.parse())
            .collect::<Result<_>>()?;
        let mut out = Vec::new();
        let mut tries = 0;
        while out.len() < count {
            tries += 1;
            if tries > 10_000 * count.max(1) {
                return Err(Error::Empty(format!(
                    "no admissible oracle bindings found for `{id}`"
                )));
            }
            let group = groups[rng.random_range(0..groups.len())];
            let k = self.instantiate(id, group)?;
            let mut b = Binding::new();
            for (name, r) in &spec.params {
                let step = match &r.step {
                    None => 1,
                    Some(Step::Int(s)) => *s,
                    Some(Step::Const(c)) => k
                        .consts
                        .iter()
                        .find(|d| &d.name == c)
                        .map(|d| d.value)
                        .ok_or_else(|| Error::Format(format!("`{id}` has no constant `{c}`")))?,
                };
                let (lo, hi) = ((r.min + step - 1) / step, r.max / step);
                if lo > hi {
                    continue;
                }
                b.set(name, step * rng.random_range(lo..=hi));
            }
            if check_binding(&k, &b).is_err() {
                continue;
            }
            match statement_instances(&k, &b) {
                Some(n) if n > cap => continue,
                _ => out.push((group, b)),
            }
        }
        Ok(out)
    }
}

/// Total statement instances at a binding when every leaf counts
/// symbolically; `None` otherwise.
pub fn statement_instances(k: &KernelIR, binding: &Binding) -> Option<u64> {
    let facts = Facts::from_kernel(k);
    let mut total = 0u64;
    for leaf in k.leaves() {
        let c = count_points(&stmt_domain(k, &leaf), &facts).ok()?;
        let v = c.eval_i64(&|p| binding.get(p))?;
        total = total.checked_add(v.to_u64()?)?;
    }
    Some(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_kernels_parse_for_every_group() {
        let s = Suite::bundled();
        for k in s.kernels() {
            for p in s.profiles() {
                for g in s.groups_for(&k.id, p).unwrap() {
                    let ir = s.instantiate(&k.id, g).unwrap();
                    assert_eq!(ir.name, k.id);
                }
            }
        }
    }

    #[test]
    fn case_counts() {
        let s = Suite::bundled();
        assert_eq!(s.measurement_cases(DEFAULT_PROFILE).unwrap().len(), 130);
        assert_eq!(s.test_cases(DEFAULT_PROFILE).unwrap().len(), 16);
        assert_eq!(s.kernel("empty").unwrap().cases.len(), 6);
        assert_eq!(
            s.group_set("1-D Small").unwrap(),
            [
                GroupConfig::one_d(192),
                GroupConfig::one_d(224),
                GroupConfig::one_d(256)
            ]
        );
    }
}
