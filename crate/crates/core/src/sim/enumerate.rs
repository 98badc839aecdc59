use std::collections::{HashMap, HashSet};

use crate::binding::Binding;
use crate::error::{Error, Result};
use crate::ir::{Affine, ArrayAccess, KernelIR, Space, Stmt};
use crate::props::{
    check_binding, flop_keys, key_index, quantize, schema, AccessClass, Direction, PropertyVector,
    SizeCategory, BARRIER, CLASSES, CONST, GROUPS, LOCAL_LOAD, SIZES,
};
use crate::symcount::{cell_counts, lane_stride_at};

/// Property counts obtained by executing every statement instance.
#[derive(Debug, Clone)]
pub struct EnumTally {
    pub properties: PropertyVector,
    /// Statement instances visited.
    pub points: u64,
}

/// Affine form compiled against an environment of slots.
#[derive(Debug)]
struct Lin {
    constant: i64,
    terms: Vec<(usize, i64)>,
    divs: Vec<(i64, Lin, i64)>,
}

impl Lin {
    fn eval(&self, env: &[i64]) -> i64 {
        let mut v = self.constant;
        for &(s, c) in &self.terms {
            v += c * env[s];
        }
        for (c, num, den) in &self.divs {
            v += c * num.eval(env).div_euclid(*den);
        }
        v
    }
}

#[derive(Debug)]
enum Node {
    Loop {
        slot: usize,
        lo: Lin,
        hi: Lin,
        body: Vec<Node>,
    },
    Guard {
        conds: Vec<Lin>,
        body: Vec<Node>,
    },
    Leaf {
        ordinal: usize,
    },
}

struct Compiler<'a> {
    scope: Vec<(String, usize)>,
    nslots: usize,
    leaf_index: &'a mut Vec<Vec<Lin>>,
    leaf_cells: &'a [Vec<Vec<Affine>>],
}

impl Compiler<'_> {
    fn lin(&self, a: &Affine) -> Result<Lin> {
        let slot = |v: &str| {
            self.scope
                .iter()
                .rev()
                .find(|(n, _)| n == v)
                .map(|(_, s)| *s)
                .ok_or_else(|| Error::UnboundParam(v.to_string()))
        };
        Ok(Lin {
            constant: a.constant,
            terms: a
                .terms
                .iter()
                .map(|(v, c)| Ok((slot(v)?, *c)))
                .collect::<Result<_>>()?,
            divs: a
                .divs
                .iter()
                .map(|d| Ok((d.coeff, self.lin(&d.num)?, d.den)))
                .collect::<Result<_>>()?,
        })
    }

    fn body(&mut self, stmts: &[Stmt]) -> Result<Vec<Node>> {
        stmts.iter().map(|s| self.stmt(s)).collect()
    }

    fn stmt(&mut self, s: &Stmt) -> Result<Node> {
        Ok(match s {
            Stmt::Loop(l) => {
                let (lo, hi) = (self.lin(&l.lower)?, self.lin(&l.upper)?);
                let slot = self.nslots;
                self.nslots += 1;
                self.scope.push((l.var.clone(), slot));
                let body = self.body(&l.body)?;
                self.scope.pop();
                Node::Loop { slot, lo, hi, body }
            }
            Stmt::Guard(g) => {
                let conds = g
                    .conds
                    .iter()
                    .flat_map(|c| c.to_nonneg())
                    .map(|a| self.lin(&a))
                    .collect::<Result<_>>()?;
                Node::Guard {
                    conds,
                    body: self.body(&g.body)?,
                }
            }
            Stmt::Assign(_) | Stmt::Barrier { .. } => {
                let ordinal = self.leaf_index.len();
                let mut cells = Vec::new();
                for index in &self.leaf_cells[ordinal] {
                    for a in index {
                        cells.push(self.lin(a)?);
                    }
                }
                self.leaf_index.push(cells);
                Node::Leaf { ordinal }
            }
        })
    }
}

struct Run<'a> {
    leaf_index: &'a [Vec<Lin>],
    /// Per leaf: (array slot in `cells`, rank) of every recorded access.
    leaf_targets: &'a [Vec<(usize, usize)>],
    counts: Vec<u64>,
    cells: Vec<HashSet<Vec<i64>>>,
    scratch: Vec<i64>,
    visited: u64,
    cap: u64,
    lines: &'a [usize],
}

impl Run<'_> {
    fn exec(&mut self, nodes: &[Node], env: &mut Vec<i64>) -> Result<()> {
        for n in nodes {
            match n {
                Node::Loop { slot, lo, hi, body } => {
                    let (lo, hi) = (lo.eval(env), hi.eval(env));
                    for v in lo..hi {
                        env[*slot] = v;
                        self.exec(body, env)?;
                    }
                }
                Node::Guard { conds, body } => {
                    if conds.iter().all(|c| c.eval(env) >= 0) {
                        self.exec(body, env)?;
                    }
                }
                Node::Leaf { ordinal } => {
                    self.visited += 1;
                    if self.visited > self.cap {
                        return Err(Error::CapExceeded {
                            cap: self.cap,
                            line: self.lines[*ordinal],
                        });
                    }
                    self.counts[*ordinal] += 1;
                    let mut at = 0;
                    for &(array, rank) in &self.leaf_targets[*ordinal] {
                        self.scratch.clear();
                        for lin in &self.leaf_index[*ordinal][at..at + rank] {
                            self.scratch.push(lin.eval(env));
                        }
                        at += rank;
                        if !self.cells[array].contains(self.scratch.as_slice()) {
                            self.cells[array].insert(self.scratch.clone());
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Executes every statement instance of `k` at `binding` and tallies the
/// same properties [`crate::props::extract_properties`] derives symbolically.
/// Fails with `E_CAP_EXCEEDED` past `cap` statement instances.
pub fn enumerate_points(k: &KernelIR, binding: &Binding, cap: u64) -> Result<EnumTally> {
    check_binding(k, binding)?;
    let types = crate::ir::infer_types(k)?;
    let leaves = k.leaves();

    // Accesses per leaf, loads then the store.
    let accesses: Vec<Vec<(&ArrayAccess, Direction)>> = leaves
        .iter()
        .map(|l| match l.as_assign() {
            Some(a) => {
                let mut v: Vec<_> = a
                    .rhs
                    .accesses()
                    .into_iter()
                    .map(|x| (x, Direction::Load))
                    .collect();
                v.push((&a.lhs, Direction::Store));
                v
            }
            None => Vec::new(),
        })
        .collect();

    // Global arrays with a strided access need their cell sets.
    let mut strides: Vec<Vec<u64>> = Vec::new();
    let mut tracked: Vec<String> = Vec::new();
    for accs in &accesses {
        let mut row = Vec::new();
        for (acc, _) in accs {
            let global = k.array(&acc.array).map(|a| a.space) == Some(Space::Global);
            let s = if global {
                lane_stride_at(k, acc, binding)?
            } else {
                0
            };
            if global && s >= 2 && !tracked.contains(&acc.array) {
                tracked.push(acc.array.clone());
            }
            row.push(s);
        }
        strides.push(row);
    }
    let slot_of: HashMap<&str, usize> = tracked
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();
    let mut leaf_cells: Vec<Vec<Vec<Affine>>> = Vec::new();
    let mut leaf_targets: Vec<Vec<(usize, usize)>> = Vec::new();
    for accs in &accesses {
        let mut idx = Vec::new();
        let mut targets = Vec::new();
        for (acc, _) in accs {
            if let Some(&slot) = slot_of.get(acc.array.as_str()) {
                idx.push(acc.index.clone());
                targets.push((slot, acc.index.len()));
            }
        }
        leaf_cells.push(idx);
        leaf_targets.push(targets);
    }

    // Slots: parameters, then axes, then one per loop statement.
    let mut scope: Vec<(String, usize)> = Vec::new();
    let mut env = Vec::new();
    for (name, v) in binding.iter() {
        scope.push((name.to_string(), env.len()));
        env.push(v);
    }
    let axes: Vec<_> = k.group_axes().into_iter().chain(k.local_axes()).collect();
    let axis_base = env.len();
    for ax in &axes {
        scope.push((ax.name.clone(), env.len()));
        env.push(0);
    }
    let mut leaf_index = Vec::new();
    let mut compiler = Compiler {
        nslots: env.len(),
        scope,
        leaf_index: &mut leaf_index,
        leaf_cells: &leaf_cells,
    };
    let program = compiler.body(&k.body)?;
    let extents = axes
        .iter()
        .map(|a| compiler.lin(&a.extent).map(|l| l.eval(&env).max(0)))
        .collect::<Result<Vec<i64>>>()?;
    env.resize(compiler.nslots, 0);

    let lines: Vec<usize> = leaves.iter().map(|l| l.stmt.line()).collect();
    let mut run = Run {
        leaf_index: &leaf_index,
        leaf_targets: &leaf_targets,
        counts: vec![0; leaves.len()],
        cells: vec![HashSet::new(); tracked.len()],
        scratch: Vec::new(),
        visited: 0,
        cap,
        lines: &lines,
    };
    if !leaves.is_empty() && extents.iter().all(|e| *e > 0) {
        // Odometer over every (group, local) tuple.
        let mut tuple = vec![0i64; axes.len()];
        'outer: loop {
            env[axis_base..axis_base + axes.len()].copy_from_slice(&tuple);
            run.exec(&program, &mut env)?;
            let mut d = axes.len();
            loop {
                if d == 0 {
                    break 'outer;
                }
                d -= 1;
                tuple[d] += 1;
                if tuple[d] < extents[d] {
                    break;
                }
                tuple[d] = 0;
            }
        }
    }

    let mut counts = vec![0u64; schema().len()];
    let mut bump = |key: &str, v: u64| counts[key_index(key).unwrap()] += v;
    for (leaf, accs) in leaves.iter().zip(&accesses) {
        let n = run.counts[leaf.ordinal];
        let Some(assign) = leaf.as_assign() else {
            bump(BARRIER, n);
            continue;
        };
        for key in flop_keys(&assign.rhs, types.for_leaf(leaf.ordinal)) {
            bump(&key, n);
        }
        for ((acc, dir), s) in accs.iter().zip(&strides[leaf.ordinal]) {
            let decl = k.array(&acc.array).expect("validated kernel");
            match (decl.space, dir) {
                (Space::Global, _) => {
                    let stride = if *s >= 2 {
                        let (size, fill) =
                            cell_counts(&run.cells[slot_of[acc.array.as_str()]], decl.fast_axis());
                        quantize(*s, size, fill)
                    } else {
                        quantize(*s, 0, 0)
                    };
                    let class = AccessClass {
                        direction: *dir,
                        size: SizeCategory::of(decl.dtype),
                        stride,
                    };
                    bump(&class.key(), n);
                }
                (Space::Local, Direction::Load) => bump(LOCAL_LOAD, n),
                _ => {}
            }
        }
    }
    let groups: u64 = k
        .group_axes()
        .iter()
        .map(|g| extents[axes.iter().position(|a| a.name == g.name).unwrap()] as u64)
        .product();
    bump(GROUPS, groups);
    bump(CONST, 1);
    for size in SIZES {
        for class in CLASSES {
            let l = counts[key_index(&format!("mem.global.load.{size}.{class}")).unwrap()];
            let s = counts[key_index(&format!("mem.global.store.{size}.{class}")).unwrap()];
            counts[key_index(&format!("mem.minls.{size}.{class}")).unwrap()] = l.min(s);
        }
    }
    Ok(EnumTally {
        properties: PropertyVector::from_counts(&k.name, binding.clone(), &counts),
        points: run.visited,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_kernel;

    #[test]
    fn triangle_points() {
        let k = parse_kernel(
            "kernel tri\nparam n\narray a : f32[n] global row_major out\nloop i = 0 .. n\nloop j = 0 .. i + 1\na[i] = 1\nend\nend\n",
        )
        .unwrap();
        let t = enumerate_points(&k, &Binding::new().with("n", 7), 1000).unwrap();
        assert_eq!(t.points, 28);
        assert_eq!(t.properties.count("mem.global.store.s32.uniform"), Some(28));
    }

    #[test]
    fn copy_cap() {
        let src = "kernel copy\nparam n\nassume n >= 1\narray a : f32[n] global row_major in\narray out : f32[n] global row_major out\naxis g0 = group(0) extent (n + 255) / 256\naxis l0 = local(0) extent 256\nguard 256*g0 + l0 < n\nout[256*g0 + l0] = a[256*g0 + l0]\nend\n";
        let k = parse_kernel(src).unwrap();
        let t = enumerate_points(&k, &Binding::new().with("n", 1000), 1_000_000).unwrap();
        assert_eq!(t.properties.count("mem.global.load.s32.1/1"), Some(1000));
        assert_eq!(t.properties.count("mem.minls.s32.1/1"), Some(1000));
        assert_eq!(t.properties.count("launch.groups"), Some(4));
        let err = enumerate_points(&k, &Binding::new().with("n", 1 << 20), 1_000_000).unwrap_err();
        assert_eq!(err.code(), "E_CAP_EXCEEDED");
    }
}
