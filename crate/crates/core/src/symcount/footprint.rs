use std::collections::{BTreeSet, HashMap, HashSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use super::count::normalize;
use super::domain::stmt_domain;
use super::poly::CountExpr;
use super::prover::{Facts, Range};
use crate::binding::Binding;
use crate::error::{Error, Result};
use crate::ir::{ArrayAccess, KernelIR};

/// Image of one array axis under an access: the arithmetic progression
/// `min, min + step, …` with `count` terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisImage {
    pub min: CountExpr,
    pub step: BigInt,
    pub count: CountExpr,
}

impl AxisImage {
    /// Number of integers between the first and last term, inclusive.
    pub fn span(&self) -> CountExpr {
        self.count
            .add_int(-1)
            .scale(&BigRational::from_integer(self.step.clone()))
            .add_int(1)
    }
}

/// The set of cells an array's accesses touch.
#[derive(Debug, Clone)]
pub struct Footprint {
    pub array: String,
    /// Axis that varies fastest in memory.
    pub fast_axis: usize,
    /// Per-axis images when the footprint is a product of progressions;
    /// absent when it was computed cell by cell at a binding.
    pub axes: Option<Vec<AxisImage>>,
    size: CountExpr,
    filled: CountExpr,
}

impl Footprint {
    /// Number of distinct cells, `|F|`.
    pub fn size(&self) -> &CountExpr {
        &self.size
    }
}

/// The footprint with the fast-axis image replaced by the whole interval
/// between its extremes: distinct other-axis tuples × fast-axis span.
pub fn fill_footprint(f: &Footprint) -> CountExpr {
    f.filled.clone()
}

/// Signed coefficient of the `local(0)` variable in the linearized element
/// address of an access (terms under a floor division are not counted).
pub fn lane_stride(k: &KernelIR, access: &ArrayAccess) -> CountExpr {
    let (Some(lane), Some(arr)) = (k.lane_axis(), k.array(&access.array)) else {
        return CountExpr::zero();
    };
    let mut total = CountExpr::zero();
    for (idx, mults) in access.index.iter().zip(arr.address_multipliers()) {
        let c = idx.coeff(&lane.name);
        if c == 0 {
            continue;
        }
        let mut term = CountExpr::from_int(c);
        for m in mults {
            term = term.mul(&CountExpr::from_affine(m));
        }
        total = total.add(&term);
    }
    total
}

/// `|lane_stride|` at a binding.
pub fn lane_stride_at(k: &KernelIR, access: &ArrayAccess, binding: &Binding) -> Result<u64> {
    let s = lane_stride(k, access);
    let v = s.eval_i64(&|p| binding.get(p)).ok_or_else(|| {
        Error::UnboundParam(
            s.vars()
                .into_iter()
                .find(|p| binding.get(p).is_none())
                .unwrap_or_default(),
        )
    })?;
    v.abs()
        .to_u64()
        .ok_or_else(|| Error::Overflow(format!("lane stride of `{}`", access)))
}

/// Symbolic per-axis images of one access, if its domain and index allow it.
fn access_images(
    k: &KernelIR,
    facts: &Facts,
    ordinal: usize,
    access: &ArrayAccess,
) -> Option<Vec<AxisImage>> {
    let leaves = k.leaves();
    let domain = stmt_domain(k, &leaves[ordinal]);
    let norm = normalize(&domain, facts, &access.index).ok()?;
    if norm.empty {
        return None;
    }
    // Every index value must be hit, so no range may be empty anywhere.
    for (pos, r) in norm.ranges.iter().enumerate() {
        if !facts.ge(&r.hi, &r.lo.add_int(1), &norm.ranges[..pos]) {
            return None;
        }
    }
    let names: Vec<&str> = norm.ranges.iter().map(|r| r.var.as_str()).collect();
    let ranges: HashMap<&str, &Range> = norm.ranges.iter().map(|r| (r.var.as_str(), r)).collect();
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::new();
    for idx in &access.index {
        let mut idx = idx.clone();
        for m in &norm.merges {
            idx = m.apply(&idx);
        }
        let e = facts.simplify(&CountExpr::from_affine(&idx));
        let mut offset = e.clone();
        // (|c|, c, lo, hi)
        let mut terms: Vec<(BigInt, BigInt, CountExpr, CountExpr)> = Vec::new();
        for v in names.iter().filter(|v| e.mentions(v)) {
            if e.mentions_in_atom(v) || !used.insert(v.to_string()) {
                return None;
            }
            let cs = e.coefficients_in(v);
            let c = match (cs.len(), cs.get(1).and_then(|c| c.as_integer())) {
                (2, Some(c)) => c,
                _ => return None,
            };
            let r = ranges[v];
            if names.iter().any(|n| r.lo.mentions(n) || r.hi.mentions(n)) {
                return None;
            }
            offset = offset.sub(&CountExpr::var(v).scale(&BigRational::from_integer(c.clone())));
            terms.push((c.abs(), c, r.lo.clone(), r.hi.clone()));
        }
        if names.iter().any(|n| offset.mentions(n)) {
            return None;
        }
        terms.sort_by(|a, b| a.0.cmp(&b.0));
        let step = terms.iter().fold(BigInt::zero(), |g, t| g.gcd(&t.0));
        let step = if step.is_zero() {
            BigInt::from(1)
        } else {
            step
        };
        let mut reach = CountExpr::from_bigint(step.clone());
        let mut min = offset;
        let mut span = CountExpr::zero();
        for (abs, c, lo, hi) in &terms {
            let len_minus_one = hi.sub(lo).add_int(-1);
            if !facts.ge(&reach, &CountExpr::from_bigint(abs.clone()), &[]) {
                return None;
            }
            let contrib = len_minus_one.scale(&BigRational::from_integer(abs.clone()));
            reach = reach.add(&contrib);
            span = span.add(&contrib);
            let at = if c.is_positive() {
                lo.clone()
            } else {
                hi.add_int(-1)
            };
            min = min.add(&at.scale(&BigRational::from_integer(c.clone())));
        }
        let count = span
            .scale(&BigRational::from_integer(step.clone()).recip())
            .add_int(1);
        out.push(AxisImage {
            min: facts.simplify(&min),
            step,
            count: facts.simplify(&count),
        });
    }
    Some(out)
}

fn product_footprint(array: &str, fast_axis: usize, axes: Vec<AxisImage>) -> Footprint {
    let mut size = CountExpr::one();
    let mut filled = CountExpr::one();
    for (d, ax) in axes.iter().enumerate() {
        size = size.mul(&ax.count);
        filled = filled.mul(&if d == fast_axis {
            ax.span()
        } else {
            ax.count.clone()
        });
    }
    Footprint {
        array: array.to_string(),
        fast_axis,
        axes: Some(axes),
        size,
        filled,
    }
}

/// Footprint of all accesses to `array` (loads and stores, every statement).
///
/// Symbolic when every access has the same product-of-progressions image;
/// otherwise the union is materialized at `binding`, visiting at most `cap`
/// cells or domain points per access.
pub fn access_footprint(
    k: &KernelIR,
    facts: &Facts,
    array: &str,
    binding: Option<&Binding>,
    cap: u64,
) -> Result<Footprint> {
    let decl = k
        .array(array)
        .ok_or_else(|| Error::Format(format!("array `{array}` is not declared")))?;
    let fast_axis = decl.fast_axis();
    let accesses = k.accesses_to(array);
    let images: Vec<Option<Vec<AxisImage>>> = accesses
        .iter()
        .map(|(ord, acc, _)| access_images(k, facts, *ord, acc))
        .collect();
    if accesses.is_empty() {
        return Ok(Footprint {
            array: array.to_string(),
            fast_axis,
            axes: None,
            size: CountExpr::zero(),
            filled: CountExpr::zero(),
        });
    }
    if let Some(Some(first)) = images.first() {
        if images.iter().all(|im| im.as_ref() == Some(first)) {
            return Ok(product_footprint(array, fast_axis, first.clone()));
        }
    }
    let Some(binding) = binding else {
        return Err(Error::NeedsBinding(format!(
            "footprint of `{array}` is a union of differently shaped accesses"
        )));
    };

    let leaves = k.leaves();
    if images.iter().all(Option::is_some) {
        let mut boxes = Vec::new();
        for im in images.iter().flatten() {
            let mut b = Vec::new();
            for ax in im {
                let step = ax
                    .step
                    .to_i64()
                    .ok_or_else(|| Error::Overflow("footprint step".into()))?;
                b.push(Prog::new(
                    eval_i64(&ax.min, binding)?,
                    step,
                    eval_i64(&ax.count, binding)?,
                ));
            }
            if b.iter().all(|p| p.count > 0) {
                boxes.push(b);
            }
        }
        if let Some((size, filled)) = union_counts(&boxes, fast_axis) {
            return Ok(Footprint {
                array: array.to_string(),
                fast_axis,
                axes: None,
                size: CountExpr::from_bigint(size.into()),
                filled: CountExpr::from_bigint(filled.into()),
            });
        }
    }

    let mut cells: HashSet<Vec<i64>> = HashSet::new();
    let lookup = |p: &str| binding.get(p);
    for ((ord, acc, _), image) in accesses.iter().zip(&images) {
        match image {
            Some(axes) => {
                let mut progs = Vec::new();
                let mut total: u128 = 1;
                for ax in axes {
                    let min = eval_i64(&ax.min, binding)?;
                    let count = eval_i64(&ax.count, binding)?.max(0);
                    let step = ax
                        .step
                        .to_i64()
                        .ok_or_else(|| Error::Overflow("footprint step".into()))?;
                    total *= count as u128;
                    progs.push((min, step, count));
                }
                if total > cap as u128 {
                    return Err(Error::CapExceeded {
                        cap,
                        line: leaves[*ord].stmt.line(),
                    });
                }
                let mut cur = vec![0i64; progs.len()];
                insert_product(&progs, 0, &mut cur, &mut cells);
            }
            None => {
                let domain = stmt_domain(k, &leaves[*ord]);
                let names: Vec<String> = domain.vars.iter().map(|v| v.name.clone()).collect();
                domain.for_each_point(binding, cap, |pt| {
                    let env = |v: &str| {
                        names
                            .iter()
                            .position(|n| n == v)
                            .map(|i| pt[i])
                            .or_else(|| lookup(v))
                    };
                    let cell: Vec<i64> = acc
                        .index
                        .iter()
                        .map(|a| a.eval(&env).unwrap_or(0))
                        .collect();
                    cells.insert(cell);
                })?;
            }
        }
    }
    let (size, filled) = cell_counts(&cells, fast_axis);
    Ok(Footprint {
        array: array.to_string(),
        fast_axis,
        axes: None,
        size: CountExpr::from_int(size as i64),
        filled: CountExpr::from_int(filled as i64),
    })
}

/// Numeric arithmetic progression with `count >= 1` terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Prog {
    min: i128,
    step: i128,
    count: i128,
}

impl Prog {
    fn new(min: i64, step: i64, count: i64) -> Self {
        let (min, step, count) = (min as i128, step as i128, count.max(0) as i128);
        if step < 0 {
            return Prog {
                min: min + step * (count - 1),
                step: -step,
                count,
            };
        }
        Prog {
            min,
            step: if count <= 1 { 1 } else { step.max(1) },
            count,
        }
    }

    fn max(&self) -> i128 {
        self.min + self.step * (self.count - 1)
    }

    fn intersect(&self, o: &Prog) -> Option<Prog> {
        let (lo, hi) = (self.min.max(o.min), self.max().min(o.max()));
        if lo > hi {
            return None;
        }
        // x ≡ self.min (mod s), x ≡ o.min (mod t)
        let (s, t) = (self.step, o.step);
        let g = s.gcd(&t);
        let diff = o.min - self.min;
        if diff % g != 0 {
            return None;
        }
        let l = s / g * t;
        let (tg, sg) = (t / g, (s / g).rem_euclid(t / g));
        let inv = mod_inverse(sg, tg);
        let x0 = self.min + s * ((diff / g).rem_euclid(tg) * inv).rem_euclid(tg.max(1));
        let first = x0 - (x0 - lo).div_euclid(l) * l;
        (first <= hi).then(|| Prog {
            min: first,
            step: l,
            count: (hi - first) / l + 1,
        })
    }
}

fn mod_inverse(a: i128, m: i128) -> i128 {
    if m <= 1 {
        return 0;
    }
    let e = a.extended_gcd(&m);
    e.x.rem_euclid(m)
}

/// Inclusion–exclusion terms allowed before falling back to cell sets.
const UNION_TERM_BUDGET: u64 = 1 << 20;

/// Cells in a union of boxes of progressions, or `None` past the term budget.
fn union_size(boxes: &[Vec<Prog>]) -> Option<i128> {
    fn rec(
        boxes: &[Vec<Prog>],
        start: usize,
        cur: &[Prog],
        sign: i128,
        total: &mut i128,
        terms: &mut u64,
    ) -> bool {
        for i in start..boxes.len() {
            let Some(next): Option<Vec<Prog>> = cur
                .iter()
                .zip(&boxes[i])
                .map(|(a, b)| a.intersect(b))
                .collect()
            else {
                continue;
            };
            *terms += 1;
            if *terms > UNION_TERM_BUDGET {
                return false;
            }
            *total += sign * next.iter().map(|p| p.count).product::<i128>();
            if !rec(boxes, i + 1, &next, -sign, total, terms) {
                return false;
            }
        }
        true
    }
    let mut total = 0;
    let mut terms = 0;
    for (i, b) in boxes.iter().enumerate() {
        total += b.iter().map(|p| p.count).product::<i128>();
        terms += 1;
        if !rec(boxes, i + 1, b, -1, &mut total, &mut terms) {
            return None;
        }
    }
    Some(total)
}

/// `(|F|, fill)` of a union of nonempty boxes.
fn union_counts(boxes: &[Vec<Prog>], fast_axis: usize) -> Option<(u64, u64)> {
    if boxes.is_empty() {
        return Some((0, 0));
    }
    let size = union_size(boxes)?;
    let rest: Vec<Vec<Prog>> = boxes
        .iter()
        .map(|b| {
            b.iter()
                .enumerate()
                .filter(|(d, _)| *d != fast_axis)
                .map(|(_, p)| *p)
                .collect()
        })
        .collect();
    let others = union_size(&rest)?;
    let fast = |b: &Vec<Prog>| b.get(fast_axis).map_or((0, 0), |p| (p.min, p.max()));
    let lo = boxes.iter().map(|b| fast(b).0).min()?;
    let hi = boxes.iter().map(|b| fast(b).1).max()?;
    Some((
        size.try_into().ok()?,
        (others * (hi - lo + 1)).try_into().ok()?,
    ))
}

fn eval_i64(e: &CountExpr, binding: &Binding) -> Result<i64> {
    e.eval_i64(&|p| binding.get(p))
        .and_then(|v| v.to_i64())
        .ok_or_else(|| {
            Error::UnboundParam(
                e.vars()
                    .into_iter()
                    .find(|p| binding.get(p).is_none())
                    .unwrap_or_default(),
            )
        })
}

fn insert_product(
    progs: &[(i64, i64, i64)],
    d: usize,
    cur: &mut Vec<i64>,
    out: &mut HashSet<Vec<i64>>,
) {
    if d == progs.len() {
        out.insert(cur.clone());
        return;
    }
    let (min, step, count) = progs[d];
    for t in 0..count {
        cur[d] = min + step * t;
        insert_product(progs, d + 1, cur, out);
    }
}

/// `(|F|, fill)` of a materialized cell set: fill is the number of distinct
/// non-fast-axis tuples times the global fast-axis span.
pub fn cell_counts(cells: &HashSet<Vec<i64>>, fast_axis: usize) -> (u64, u64) {
    if cells.is_empty() {
        return (0, 0);
    }
    let mut others: HashSet<Vec<i64>> = HashSet::new();
    let (mut lo, mut hi) = (i64::MAX, i64::MIN);
    for c in cells {
        let x = c.get(fast_axis).copied().unwrap_or(0);
        lo = lo.min(x);
        hi = hi.max(x);
        let mut rest = c.clone();
        if fast_axis < rest.len() {
            rest.remove(fast_axis);
        }
        others.insert(rest);
    }
    (
        cells.len() as u64,
        others.len() as u64 * (hi - lo + 1) as u64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_kernel;

    const HEAD: &str = "kernel k\nparam n\nassume n >= 1\narray a : f32[4*n + 4] global row_major in\narray out : f32[n] global row_major out\n";

    fn kernel(body: &str) -> KernelIR {
        parse_kernel(&format!("{HEAD}{body}")).unwrap()
    }

    fn at(e: &CountExpr, n: i64) -> i64 {
        e.eval_i64(&|_| Some(n)).unwrap().to_i64().unwrap()
    }

    #[test]
    fn strided_image_and_fill() {
        let k = kernel("loop i = 0 .. n\nout[i] = a[2*i]\nend\n");
        let f = access_footprint(&k, &Facts::from_kernel(&k), "a", None, 1_000_000).unwrap();
        assert_eq!(f.size(), &CountExpr::var("n"));
        assert_eq!(at(&fill_footprint(&f), 10), 19);
        let ax = &f.axes.as_ref().unwrap()[0];
        assert_eq!(ax.step, BigInt::from(2));

        let k = kernel("loop i = 0 .. n\nout[i] = a[3*i]\nend\n");
        let f = access_footprint(&k, &Facts::from_kernel(&k), "a", None, 1_000_000).unwrap();
        assert_eq!(at(&fill_footprint(&f), 10), 28);
    }

    #[test]
    fn gapped_sum_is_not_a_progression() {
        // 4i + 6j over 2x2 hits {0, 4, 6, 10}, not every even cell.
        let k = kernel("loop i = 0 .. 2\nloop j = 0 .. 2\nout[i] = a[4*i + 6*j]\nend\nend\n");
        let facts = Facts::from_kernel(&k);
        assert!(access_footprint(&k, &facts, "a", None, 1_000_000).is_err());
        let f = access_footprint(
            &k,
            &facts,
            "a",
            Some(&Binding::new().with("n", 3)),
            1_000_000,
        )
        .unwrap();
        assert_eq!(f.size(), &CountExpr::from_int(4));
        assert_eq!(fill_footprint(&f), CountExpr::from_int(11));
    }

    #[test]
    fn dense_image_fills_to_itself() {
        let k = kernel("loop i = 0 .. n\nout[i] = a[i + 1]\nend\n");
        let f = access_footprint(&k, &Facts::from_kernel(&k), "a", None, 1_000_000).unwrap();
        assert_eq!(f.size(), &fill_footprint(&f));
    }

    #[test]
    fn differing_images_need_binding() {
        let k = kernel("loop i = 0 .. n\nout[i] = a[i] + a[i + 1]\nend\n");
        let facts = Facts::from_kernel(&k);
        let err = access_footprint(&k, &facts, "a", None, 1_000_000).unwrap_err();
        assert_eq!(err.code(), "E_NEEDS_BINDING");
        let f = access_footprint(
            &k,
            &facts,
            "a",
            Some(&Binding::new().with("n", 10)),
            1_000_000,
        )
        .unwrap();
        assert_eq!(f.size(), &CountExpr::from_int(11));
    }

    #[test]
    fn progression_intersections() {
        let p = |a, s, c| Prog::new(a, s, c);
        assert_eq!(
            p(0, 4, 10).intersect(&p(2, 6, 10)),
            Some(Prog {
                min: 8,
                step: 12,
                count: 3
            })
        );
        assert_eq!(p(0, 2, 10).intersect(&p(1, 2, 10)), None);
        assert_eq!(
            p(5, 3, 1).intersect(&p(0, 1, 9)),
            Some(Prog {
                min: 5,
                step: 1,
                count: 1
            })
        );
        assert_eq!(
            p(9, -3, 4).intersect(&p(0, 3, 2)),
            Some(Prog {
                min: 0,
                step: 3,
                count: 2
            })
        );
        // {0..9} ∪ {5..14 step 3} ∪ {1, 3, 5}
        let boxes = vec![vec![p(0, 1, 10)], vec![p(5, 3, 4)], vec![p(1, 2, 3)]];
        assert_eq!(union_size(&boxes), Some(12));
    }

    #[test]
    fn lane_stride_is_layout_aware() {
        let src = "kernel k\nparam n, m\nassume n >= 1 and m >= 1\narray a : f32[n, m] global row_major in\narray b : f32[n, m] global column_major in\narray c : f32[1] global row_major in\narray o : f32[n] global row_major out\naxis g0 = group(0) extent n\naxis l0 = local(0) extent 1\nloop j = 0 .. m\no[g0] = a[j, l0] + a[l0, j] + b[j, l0] + c[0]\nend\n";
        let k = parse_kernel(src).unwrap();
        let leaves = k.leaves();
        let rhs = &leaves[0].as_assign().unwrap().rhs;
        let acc = rhs.accesses();
        assert_eq!(lane_stride(&k, acc[0]), CountExpr::from_int(1));
        assert_eq!(lane_stride(&k, acc[1]), CountExpr::var("m"));
        assert_eq!(lane_stride(&k, acc[2]), CountExpr::var("n"));
        assert_eq!(lane_stride(&k, acc[3]), CountExpr::zero());
        let b = Binding::new().with("n", 7).with("m", 9);
        assert_eq!(lane_stride_at(&k, acc[1], &b).unwrap(), 9);
    }
}
