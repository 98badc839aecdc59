//! Kernel properties: the per-kernel counts a run-time model is linear in.
mod ops;
mod schema;

use std::collections::HashMap;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use serde_json::{json, Map, Value};

pub use ops::{flop_keys, FlopKind};
pub use schema::{
    key_index, quantize, schema, AccessClass, Direction, SizeCategory, StrideClass, BARRIER,
    CLASSES, CONST, FLOP_KINDS, GROUPS, LOCAL_LOAD, SCHEMA_VERSION, SIZES,
};

use crate::binding::Binding;
use crate::error::{Error, Result};
use crate::ir::{infer_types, ArrayAccess, KernelIR, Space, TypeMap};
use crate::symcount::{
    access_footprint, count_points, fill_footprint, lane_stride, lane_stride_at, stmt_domain,
    CountExpr, Facts, Footprint,
};

/// Default limit on enumerated statement instances.
pub const DEFAULT_CAP: u64 = 1_000_000;

/// Property values indexed by [`schema`], symbolic or bound to a binding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyVector {
    pub kernel: String,
    pub binding: Option<Binding>,
    values: Vec<CountExpr>,
}

impl PropertyVector {
    pub fn zeros(kernel: &str, binding: Option<Binding>) -> Self {
        PropertyVector {
            kernel: kernel.to_string(),
            binding,
            values: vec![CountExpr::zero(); schema().len()],
        }
    }

    /// A bound vector from exact counts in schema order.
    pub fn from_counts(kernel: &str, binding: Binding, counts: &[u64]) -> Self {
        assert_eq!(counts.len(), schema().len());
        PropertyVector {
            kernel: kernel.to_string(),
            binding: Some(binding),
            values: counts
                .iter()
                .map(|c| CountExpr::from_bigint(BigInt::from(*c)))
                .collect(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&CountExpr> {
        key_index(key).map(|i| &self.values[i])
    }

    pub fn values(&self) -> &[CountExpr] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &CountExpr)> {
        schema().iter().map(String::as_str).zip(&self.values)
    }

    fn add(&mut self, key: &str, v: &CountExpr) {
        let i = schema::idx(key);
        self.values[i] = self.values[i].add(v);
    }

    /// True when every entry is an integer constant.
    pub fn is_bound(&self) -> bool {
        self.values.iter().all(|v| v.as_integer().is_some())
    }

    /// Exact value of a key in a bound vector.
    pub fn count(&self, key: &str) -> Option<u64> {
        self.get(key)?.as_integer()?.to_u64()
    }

    /// Bound values as floats, in schema order.
    pub fn to_f64(&self) -> Result<Vec<f64>> {
        self.values
            .iter()
            .zip(schema())
            .map(|(v, key)| {
                v.as_integer().and_then(|i| i.to_f64()).ok_or_else(|| {
                    Error::NeedsBinding(format!("`{key}` of `{}` is symbolic: {v}", self.kernel))
                })
            })
            .collect()
    }

    /// JSON property report.
    pub fn to_report(&self) -> Value {
        let mut props = Map::new();
        for (key, v) in self.iter() {
            let value = match v.as_integer() {
                Some(i) => match i.to_u64() {
                    Some(u) => json!(u),
                    None => json!(i.to_string()),
                },
                None => json!(v.to_prefix()),
            };
            props.insert(key.to_string(), value);
        }
        let mut out = Map::new();
        out.insert("schema_version".into(), json!(SCHEMA_VERSION));
        out.insert("kernel".into(), json!(self.kernel));
        if let Some(b) = &self.binding {
            out.insert(
                "binding".into(),
                serde_json::to_value(b).expect("bindings serialize"),
            );
        }
        out.insert("properties".into(), Value::Object(props));
        Value::Object(out)
    }
}

/// Checks that a binding gives every parameter a value and satisfies every
/// assumption of the kernel.
pub fn check_binding(k: &KernelIR, binding: &Binding) -> Result<()> {
    for p in k.param_names() {
        match binding.get(p) {
            None => return Err(Error::UnboundParam(p.to_string())),
            Some(v) if v < 0 => {
                return Err(Error::AssumptionViolated {
                    constraint: format!("{p} >= 0"),
                    binding: binding.to_string(),
                })
            }
            Some(_) => {}
        }
    }
    let lookup = |p: &str| binding.get(p);
    for a in &k.assumptions {
        if a.holds(&lookup) != Some(true) {
            return Err(Error::AssumptionViolated {
                constraint: a.to_string(),
                binding: binding.to_string(),
            });
        }
    }
    Ok(())
}

fn eval_at(v: &CountExpr, binding: &Binding) -> Result<BigInt> {
    v.eval_i64(&|p| binding.get(p)).ok_or_else(|| {
        match v.vars().into_iter().find(|p| binding.get(p).is_none()) {
            Some(p) => Error::UnboundParam(p),
            None => Error::Format(format!("count `{v}` is not an integer at `{binding}`")),
        }
    })
}

fn eval_u64(v: &CountExpr, binding: &Binding) -> Result<u64> {
    let i = eval_at(v, binding)?;
    if i.is_negative() {
        return Err(Error::Format(format!(
            "count `{v}` is negative at `{binding}`"
        )));
    }
    i.to_u64()
        .ok_or_else(|| Error::Overflow(format!("count `{v}` at `{binding}`")))
}

/// Evaluates every entry at `binding`. Bound vectors are returned unchanged
/// apart from the recorded binding.
pub fn evaluate_properties(
    k: &KernelIR,
    pv: &PropertyVector,
    binding: &Binding,
) -> Result<PropertyVector> {
    check_binding(k, binding)?;
    let values = pv
        .values
        .iter()
        .map(|v| eval_at(v, binding).map(CountExpr::from_bigint))
        .collect::<Result<_>>()?;
    Ok(PropertyVector {
        kernel: pv.kernel.clone(),
        binding: Some(binding.clone()),
        values,
    })
}

/// Property vector of a kernel: symbolic without a binding, exact integers
/// with one.
pub fn extract_properties(k: &KernelIR, binding: Option<&Binding>) -> Result<PropertyVector> {
    extract_properties_with(k, binding, DEFAULT_CAP)
}

/// [`extract_properties`] with a limit on the statement instances enumerated
/// where symbolic counting falls back.
pub fn extract_properties_with(
    k: &KernelIR,
    binding: Option<&Binding>,
    cap: u64,
) -> Result<PropertyVector> {
    if let Some(b) = binding {
        check_binding(k, b)?;
    }
    let mut ex = Extractor {
        k,
        facts: Facts::from_kernel(k),
        types: infer_types(k)?,
        binding,
        cap,
        footprints: HashMap::new(),
    };
    let pv = ex.run()?;
    match binding {
        Some(b) => evaluate_properties(k, &pv, b),
        None => Ok(pv),
    }
}

/// Class of one global access. Without a binding the utilization ratio must
/// be decidable symbolically, else `E_NEEDS_BINDING`.
pub fn classify_access(
    k: &KernelIR,
    access: &ArrayAccess,
    direction: Direction,
    binding: Option<&Binding>,
) -> Result<AccessClass> {
    let mut ex = Extractor {
        k,
        facts: Facts::from_kernel(k),
        types: TypeMap::default(),
        binding,
        cap: DEFAULT_CAP,
        footprints: HashMap::new(),
    };
    ex.classify(access, direction)
}

struct Extractor<'a> {
    k: &'a KernelIR,
    facts: Facts,
    types: TypeMap,
    binding: Option<&'a Binding>,
    cap: u64,
    footprints: HashMap<String, Footprint>,
}

impl Extractor<'_> {
    fn run(&mut self) -> Result<PropertyVector> {
        let k = self.k;
        let mut pv = PropertyVector::zeros(&k.name, None);
        for leaf in k.leaves() {
            let domain = stmt_domain(k, &leaf);
            let count = match count_points(&domain, &self.facts) {
                Ok(c) => c,
                Err(Error::NeedsFallback(why)) => match self.binding {
                    Some(b) => CountExpr::from_int(domain.count_at(b, self.cap)? as i64),
                    None => return Err(Error::NeedsBinding(why)),
                },
                Err(e) => return Err(e),
            };
            let Some(assign) = leaf.as_assign() else {
                pv.add(BARRIER, &count);
                continue;
            };
            for key in flop_keys(&assign.rhs, self.types.for_leaf(leaf.ordinal)) {
                pv.add(&key, &count);
            }
            let loads = assign
                .rhs
                .accesses()
                .into_iter()
                .map(|a| (a, Direction::Load));
            for (acc, dir) in loads.chain([(&assign.lhs, Direction::Store)]) {
                let space = k.array(&acc.array).map(|a| a.space);
                match (space, dir) {
                    (Some(Space::Global), _) => {
                        let class = self.classify(acc, dir)?;
                        pv.add(&class.key(), &count);
                    }
                    (Some(Space::Local), Direction::Load) => pv.add(LOCAL_LOAD, &count),
                    _ => {}
                }
            }
        }

        let mut groups = CountExpr::one();
        for ax in k.group_axes() {
            groups = groups.mul(&CountExpr::from_affine(&ax.extent));
        }
        pv.add(GROUPS, &self.facts.simplify(&groups));
        pv.add(CONST, &CountExpr::one());

        for size in SIZES {
            for class in CLASSES {
                let l = pv
                    .get(&format!("mem.global.load.{size}.{class}"))
                    .unwrap()
                    .clone();
                let s = pv
                    .get(&format!("mem.global.store.{size}.{class}"))
                    .unwrap()
                    .clone();
                let m = self.facts.simplify(&CountExpr::min_of(vec![l, s]));
                pv.add(&format!("mem.minls.{size}.{class}"), &m);
            }
        }
        Ok(pv)
    }

    fn footprint(&mut self, array: &str) -> Result<&Footprint> {
        if !self.footprints.contains_key(array) {
            let f = access_footprint(self.k, &self.facts, array, self.binding, self.cap)?;
            self.footprints.insert(array.to_string(), f);
        }
        Ok(&self.footprints[array])
    }

    fn classify(&mut self, acc: &ArrayAccess, direction: Direction) -> Result<AccessClass> {
        let decl = self
            .k
            .array(&acc.array)
            .ok_or_else(|| Error::Format(format!("array `{}` is not declared", acc.array)))?;
        let size = SizeCategory::of(decl.dtype);
        let stride = match self.binding {
            Some(b) => {
                let s = lane_stride_at(self.k, acc, b)?;
                if s <= 1 {
                    quantize(s, 0, 0)
                } else {
                    let f = self.footprint(&acc.array)?;
                    let (n, fill) = (f.size().clone(), fill_footprint(f));
                    quantize(s, eval_u64(&n, b)?, eval_u64(&fill, b)?)
                }
            }
            None => self.classify_symbolic(acc)?,
        };
        Ok(AccessClass {
            direction,
            size,
            stride,
        })
    }

    fn classify_symbolic(&mut self, acc: &ArrayAccess) -> Result<StrideClass> {
        let s = lane_stride(self.k, acc);
        let undecided =
            |what: &str| Error::NeedsBinding(format!("stride class of `{acc}`: {what}"));
        let (s, qmax, denom) = match s.as_integer().and_then(|c| c.abs().to_u64()) {
            Some(c) if c <= 1 => return Ok(quantize(c, 0, 0)),
            Some(c) => (
                CountExpr::from_int(c as i64),
                c.min(4),
                (c <= 4).then_some(c as u8),
            ),
            None => {
                let s = if self.facts.nonneg(&s, &[]) {
                    s
                } else if self.facts.nonneg(&s.neg(), &[]) {
                    s.neg()
                } else {
                    return Err(undecided(
                        "the sign of the stride depends on the parameters",
                    ));
                };
                if !self.facts.ge(&s, &CountExpr::from_int(5), &[]) {
                    return Err(undecided("the stride is not provably above 4"));
                }
                (s, 4, None)
            }
        };
        let facts = self.facts.clone();
        let f = self.footprint(&acc.array)?;
        let (n, fill) = (f.size().clone(), fill_footprint(f));
        let sn = s.mul(&n);
        for q in 1..=qmax {
            let above =
                q == 1 || facts.nonneg(&sn.sub(&fill.scale_int(q as i64 - 1)).add_int(-1), &[]);
            let below = q == qmax || facts.nonneg(&fill.scale_int(q as i64).sub(&sn), &[]);
            if above && below {
                return Ok(StrideClass::Fraction { q: q as u8, denom });
            }
        }
        Err(undecided(
            "the utilization ratio is not decidable symbolically",
        ))
    }
}
