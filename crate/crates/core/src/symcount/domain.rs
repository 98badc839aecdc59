use std::collections::HashMap;

use crate::binding::Binding;
use crate::error::{Error, Result};
use crate::ir::{Affine, AxisRole, KernelIR, Leaf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRole {
    Group(u8),
    Local(u8),
    Loop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainVar {
    pub name: String,
    pub role: VarRole,
    pub lower: Affine,
    /// Exclusive.
    pub upper: Affine,
}

/// The iteration domain of one statement: group axes, local axes and the
/// enclosing loops, in that order, plus guard constraints `g ≥ 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StmtDomain {
    pub line: usize,
    pub vars: Vec<DomainVar>,
    pub guards: Vec<Affine>,
}

pub fn stmt_domain(k: &KernelIR, leaf: &Leaf<'_>) -> StmtDomain {
    let mut vars = Vec::new();
    for ax in k.group_axes().into_iter().chain(k.local_axes()) {
        let role = match ax.role {
            AxisRole::Group(i) => VarRole::Group(i),
            AxisRole::Local(i) => VarRole::Local(i),
        };
        vars.push(DomainVar {
            name: ax.name.clone(),
            role,
            lower: Affine::constant(0),
            upper: ax.extent.clone(),
        });
    }
    for l in &leaf.loops {
        vars.push(DomainVar {
            name: l.var.clone(),
            role: VarRole::Loop,
            lower: l.lower.clone(),
            upper: l.upper.clone(),
        });
    }
    let guards = leaf.guards.iter().flat_map(|c| c.to_nonneg()).collect();
    StmtDomain {
        line: leaf.stmt.line(),
        vars,
        guards,
    }
}

/// Affine form over a slot-indexed environment.
struct Slotted {
    constant: i64,
    terms: Vec<(usize, i64)>,
    divs: Vec<(i64, Slotted, i64)>,
}

impl Slotted {
    fn new(a: &Affine, slots: &HashMap<&str, usize>) -> Result<Slotted> {
        let terms = a
            .terms
            .iter()
            .map(|(v, c)| {
                slots
                    .get(v.as_str())
                    .map(|s| (*s, *c))
                    .ok_or_else(|| Error::UnboundParam(v.clone()))
            })
            .collect::<Result<_>>()?;
        let divs = a
            .divs
            .iter()
            .map(|d| Ok((d.coeff, Slotted::new(&d.num, slots)?, d.den)))
            .collect::<Result<_>>()?;
        Ok(Slotted {
            constant: a.constant,
            terms,
            divs,
        })
    }

    fn eval(&self, env: &[i64]) -> i64 {
        let mut acc = self.constant;
        for (s, c) in &self.terms {
            acc += c * env[*s];
        }
        for (c, num, den) in &self.divs {
            acc += c * num.eval(env).div_euclid(*den);
        }
        acc
    }
}

impl StmtDomain {
    pub fn var_names(&self) -> Vec<&str> {
        self.vars.iter().map(|v| v.name.as_str()).collect()
    }

    /// Calls `f` on every integer point (values in `vars` order) at the given
    /// parameter binding. Fails once more than `cap` points are visited.
    pub fn for_each_point(
        &self,
        binding: &Binding,
        cap: u64,
        mut f: impl FnMut(&[i64]),
    ) -> Result<u64> {
        let nparams = binding.len();
        let mut slots: HashMap<&str, usize> = HashMap::new();
        let mut env = vec![0i64; nparams + self.vars.len()];
        for (i, (name, value)) in binding.iter().enumerate() {
            slots.insert(name, i);
            env[i] = value;
        }
        for (i, v) in self.vars.iter().enumerate() {
            slots.insert(&v.name, nparams + i);
        }
        let bounds = self
            .vars
            .iter()
            .map(|v| {
                Ok((
                    Slotted::new(&v.lower, &slots)?,
                    Slotted::new(&v.upper, &slots)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let guards = self
            .guards
            .iter()
            .map(|g| Slotted::new(g, &slots))
            .collect::<Result<Vec<_>>>()?;
        // Guards are checked at the depth of their innermost variable.
        let mut guard_depth: Vec<Vec<usize>> = vec![Vec::new(); self.vars.len() + 1];
        for (gi, g) in self.guards.iter().enumerate() {
            let depth = self
                .vars
                .iter()
                .rposition(|v| g.mentions(&v.name))
                .map(|p| p + 1)
                .unwrap_or(0);
            guard_depth[depth].push(gi);
        }
        let mut visited = 0u64;
        let ctx = Walk {
            bounds: &bounds,
            guards: &guards,
            guard_depth: &guard_depth,
            base: nparams,
            cap,
            line: self.line,
        };
        ctx.walk(0, &mut env, &mut visited, &mut f)?;
        Ok(visited)
    }

    /// Number of integer points at a binding, by enumeration.
    pub fn count_at(&self, binding: &Binding, cap: u64) -> Result<u64> {
        self.for_each_point(binding, cap, |_| {})
    }
}

struct Walk<'a> {
    bounds: &'a [(Slotted, Slotted)],
    guards: &'a [Slotted],
    guard_depth: &'a [Vec<usize>],
    base: usize,
    cap: u64,
    line: usize,
}

impl Walk<'_> {
    fn walk(
        &self,
        depth: usize,
        env: &mut Vec<i64>,
        visited: &mut u64,
        f: &mut impl FnMut(&[i64]),
    ) -> Result<()> {
        if self.guard_depth[depth]
            .iter()
            .any(|g| self.guards[*g].eval(env) < 0)
        {
            return Ok(());
        }
        if depth == self.bounds.len() {
            *visited += 1;
            if *visited > self.cap {
                return Err(Error::CapExceeded {
                    cap: self.cap,
                    line: self.line,
                });
            }
            f(&env[self.base..]);
            return Ok(());
        }
        let (lo, hi) = &self.bounds[depth];
        let (lo, hi) = (lo.eval(env), hi.eval(env));
        for v in lo..hi {
            env[self.base + depth] = v;
            self.walk(depth + 1, env, visited, f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_kernel;

    #[test]
    fn copy_kernel_domain() {
        let src = "kernel copy\nparam n\nassume n >= 1\narray a : f32[n] global row_major in\narray out : f32[n] global row_major out\naxis g0 = group(0) extent (n + 255) / 256\naxis l0 = local(0) extent 256\nguard 256*g0 + l0 < n\n  out[256*g0 + l0] = a[256*g0 + l0]\nend\n";
        let k = parse_kernel(src).unwrap();
        let leaves = k.leaves();
        let d = stmt_domain(&k, &leaves[0]);
        assert_eq!(d.var_names(), ["g0", "l0"]);
        assert_eq!(d.vars[0].upper.to_string(), "(n + 255) / 256");
        assert_eq!(d.guards.len(), 1);
        let b = Binding::new().with("n", 1000);
        assert_eq!(d.count_at(&b, 1_000_000).unwrap(), 1000);
        assert!(matches!(
            d.count_at(&b, 999),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn statement_without_axes_has_one_point() {
        let k =
            parse_kernel("kernel k\narray a : f32[1] global row_major out\na[0] = 1\n").unwrap();
        let leaves = k.leaves();
        let d = stmt_domain(&k, &leaves[0]);
        assert!(d.vars.is_empty());
        assert_eq!(d.count_at(&Binding::new(), 10).unwrap(), 1);
    }
}
