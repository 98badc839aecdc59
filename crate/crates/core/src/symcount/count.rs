use num_traits::Signed;

use super::domain::{StmtDomain, VarRole};
use super::faulhaber::sum_over;
use super::poly::CountExpr;
use super::prover::{Facts, Range};
use crate::error::{Error, Result};
use crate::ir::Affine;

/// A group axis and a local axis fused into one variable `L·g + l`, which
/// keeps the local axis' name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Merge {
    pub group: String,
    pub local: String,
    pub local_extent: i64,
}

impl Merge {
    /// Rewrites an affine form that mentions the pair only as `c·(L·g + l)`.
    pub fn apply(&self, a: &Affine) -> Affine {
        a.substitute(&self.group, &Affine::constant(0))
    }

    fn compatible(&self, a: &Affine) -> bool {
        let in_div = a
            .divs
            .iter()
            .any(|d| d.num.mentions(&self.group) || d.num.mentions(&self.local));
        !in_div && a.coeff(&self.group) == self.local_extent * a.coeff(&self.local)
    }
}

/// A statement domain with guards folded into rectangular-or-triangular
/// bounds and provably nonempty ranges.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub ranges: Vec<Range>,
    pub merges: Vec<Merge>,
    /// Set when a parameter-only guard is provably false.
    pub empty: bool,
}

fn fallback(d: &StmtDomain, why: impl std::fmt::Display) -> Error {
    Error::NeedsFallback(format!("statement at line {}: {why}", d.line))
}

/// Folds guards into bounds. Group/local pairs are fused only when every
/// guard and every `observer` expression uses them in the fused form.
pub fn normalize(d: &StmtDomain, facts: &Facts, observers: &[Affine]) -> Result<Normalized> {
    let mut vars: Vec<(String, VarRole, Affine, Affine)> = d
        .vars
        .iter()
        .map(|v| (v.name.clone(), v.role, v.lower.clone(), v.upper.clone()))
        .collect();
    let mut guards = d.guards.clone();
    let mut observers = observers.to_vec();
    let mut merges = Vec::new();

    let locals: Vec<(String, i64)> = vars
        .iter()
        .filter(|v| matches!(v.1, VarRole::Local(_)) && v.2.as_constant() == Some(0))
        .filter_map(|v| v.3.as_constant().map(|l| (v.0.clone(), l)))
        .collect();
    for (local, extent) in locals {
        let candidates: Vec<String> = vars
            .iter()
            .filter(|v| matches!(v.1, VarRole::Group(_)) && v.2.as_constant() == Some(0))
            .map(|v| v.0.clone())
            .collect();
        for group in candidates {
            let m = Merge {
                group: group.clone(),
                local: local.clone(),
                local_extent: extent,
            };
            let mentioned = guards
                .iter()
                .any(|g| g.mentions(&group) || g.mentions(&local));
            let bounds_free = vars.iter().all(|v| {
                !(v.2.mentions(&group)
                    || v.2.mentions(&local)
                    || v.3.mentions(&group)
                    || v.3.mentions(&local))
            });
            if mentioned && bounds_free && guards.iter().chain(&observers).all(|a| m.compatible(a))
            {
                let gpos = vars.iter().position(|v| v.0 == group).unwrap();
                let g_extent = vars[gpos].3.clone();
                vars.remove(gpos);
                let lpos = vars.iter().position(|v| v.0 == local).unwrap();
                vars[lpos].3 = g_extent.scale(extent);
                guards = guards.iter().map(|g| m.apply(g)).collect();
                observers = observers.iter().map(|g| m.apply(g)).collect();
                merges.push(m);
                break;
            }
        }
    }

    let mut ranges: Vec<Range> = vars
        .iter()
        .map(|(name, _, lo, hi)| Range {
            var: name.clone(),
            lo: facts.simplify(&CountExpr::from_affine(lo)),
            hi: facts.simplify(&CountExpr::from_affine(hi)),
        })
        .collect();
    let names: Vec<String> = ranges.iter().map(|r| r.var.clone()).collect();
    let mentions_domain = |e: &CountExpr| names.iter().any(|n| e.mentions(n));

    for g in &guards {
        let e = facts.simplify(&CountExpr::from_affine(g));
        if facts.nonneg(&e, &ranges) {
            continue;
        }
        let Some(pos) = ranges.iter().rposition(|r| e.mentions(&r.var)) else {
            if facts.nonneg(&e.neg().add_int(-1), &[]) {
                return Ok(Normalized {
                    ranges,
                    merges,
                    empty: true,
                });
            }
            return Err(fallback(
                d,
                format_args!("guard `{g} >= 0` depends only on parameters and is not decidable"),
            ));
        };
        let var = ranges[pos].var.clone();
        if e.mentions_in_atom(&var) {
            return Err(fallback(
                d,
                format_args!("guard `{g} >= 0` uses `{var}` inside a division"),
            ));
        }
        let cs = e.coefficients_in(&var);
        let a = match (cs.len(), cs.get(1).and_then(|c| c.as_integer())) {
            (2, Some(a)) => a,
            _ => {
                return Err(fallback(
                    d,
                    format_args!("guard `{g} >= 0` is not linear in `{var}`"),
                ))
            }
        };
        let r = &cs[0];
        let (cand, is_lower) = if a.is_positive() {
            (CountExpr::floordiv(r, a).neg(), true)
        } else {
            (CountExpr::floordiv(r, -a).add_int(1), false)
        };
        let cand = facts.simplify(&cand);
        if names.iter().any(|n| cand.mentions_in_atom(n)) {
            return Err(fallback(
                d,
                format_args!("guard `{g} >= 0` folds to a non-polynomial bound"),
            ));
        }
        let outer = &ranges[..pos];
        let old = if is_lower {
            &ranges[pos].lo
        } else {
            &ranges[pos].hi
        };
        let (tighter_new, tighter_old) = if is_lower {
            (facts.ge(&cand, old, outer), facts.ge(old, &cand, outer))
        } else {
            (facts.ge(old, &cand, outer), facts.ge(&cand, old, outer))
        };
        let combined = if tighter_old {
            old.clone()
        } else if tighter_new {
            cand
        } else if !mentions_domain(&cand) && !mentions_domain(old) {
            let pair = vec![old.clone(), cand];
            if is_lower {
                CountExpr::max_of(pair)
            } else {
                CountExpr::min_of(pair)
            }
        } else {
            return Err(fallback(
                d,
                format_args!("cannot decide which bound of `{var}` is tighter after folding guard `{g} >= 0`"),
            ));
        };
        if is_lower {
            ranges[pos].lo = combined;
        } else {
            ranges[pos].hi = combined;
        }
    }

    for pos in 0..ranges.len() {
        let (lo, hi) = (ranges[pos].lo.clone(), ranges[pos].hi.clone());
        let outer = &ranges[..pos];
        if facts.ge(&hi, &lo, outer) {
            continue;
        }
        if facts.ge(&lo, &hi, outer) {
            return Ok(Normalized {
                ranges,
                merges,
                empty: true,
            });
        }
        if mentions_domain(&lo) || mentions_domain(&hi) {
            return Err(fallback(
                d,
                format_args!(
                    "range of `{}` may be empty for some outer iterations",
                    ranges[pos].var
                ),
            ));
        }
        ranges[pos].hi = CountExpr::max_of(vec![lo, hi]);
    }

    Ok(Normalized {
        ranges,
        merges,
        empty: false,
    })
}

/// Parametric number of integer points in a statement domain.
pub fn count_points(d: &StmtDomain, facts: &Facts) -> Result<CountExpr> {
    let n = normalize(d, facts, &[])?;
    if n.empty {
        return Ok(CountExpr::zero());
    }
    let mut f = CountExpr::one();
    for r in n.ranges.iter().rev() {
        f = sum_over(&f, &r.var, &r.lo, &r.hi).ok_or_else(|| {
            fallback(
                d,
                format_args!(
                    "bounds of an inner variable depend on `{}` non-polynomially",
                    r.var
                ),
            )
        })?;
    }
    Ok(facts.simplify(&f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binding::Binding;
    use crate::ir::parse_kernel;
    use crate::symcount::stmt_domain;
    use num_bigint::BigInt;

    fn first_domain(src: &str) -> (StmtDomain, Facts) {
        let k = parse_kernel(src).unwrap();
        let leaves = k.leaves();
        (stmt_domain(&k, &leaves[0]), Facts::from_kernel(&k))
    }

    fn check(src: &str, values: &[(&str, i64)], expect_text: Option<&str>) {
        let (d, facts) = first_domain(src);
        let c = count_points(&d, &facts).unwrap();
        if let Some(t) = expect_text {
            assert_eq!(c.to_prefix(), t);
        }
        let mut b = Binding::new();
        for (k, v) in values {
            b.set(k, *v);
        }
        let got = c.eval_i64(&|p| b.get(p)).unwrap();
        assert_eq!(
            got,
            BigInt::from(d.count_at(&b, 10_000_000).unwrap()),
            "{c} at {b}"
        );
    }

    const ARR: &str = "array a : f32[n] global row_major out\n";

    #[test]
    fn single_loop() {
        let src =
            format!("kernel k\nparam n\nassume n >= 1\n{ARR}loop i = 0 .. n\na[i] = 1\nend\n");
        check(&src, &[("n", 7)], Some("n"));
    }

    #[test]
    fn triangle() {
        let src = format!("kernel k\nparam n\nassume n >= 1\n{ARR}loop i = 0 .. n\nloop j = 0 .. i + 1\na[i] = 1\nend\nend\n");
        for n in 1..=10 {
            check(&src, &[("n", n)], Some("(+ (* 1/2 n) (* 1/2 n n))"));
        }
    }

    #[test]
    fn copy_with_divisibility_folds_guard() {
        let src = format!(
            "kernel k\nparam n\nassume n >= 256 and n % 256 == 0\n{ARR}axis g0 = group(0) extent n / 256\naxis l0 = local(0) extent 256\nguard 256*g0 + l0 < n\na[256*g0 + l0] = 1\nend\n"
        );
        for n in [256, 512, 1024] {
            check(&src, &[("n", n)], Some("n"));
        }
    }

    #[test]
    fn copy_with_ceil_extent() {
        let src = format!(
            "kernel k\nparam n\nassume n >= 1\n{ARR}axis g0 = group(0) extent (n + 191) / 192\naxis l0 = local(0) extent 192\nguard 192*g0 + l0 < n\na[192*g0 + l0] = 1\nend\n"
        );
        for n in [1, 191, 192, 193, 1000] {
            check(&src, &[("n", n)], Some("n"));
        }
    }

    #[test]
    fn local_guard_folds() {
        let src = format!(
            "kernel k\nparam n\nassume n >= 16 and n % 16 == 0\n{ARR}axis g0 = group(0) extent n / 16\naxis l0 = local(0) extent 16\naxis l1 = local(1) extent 16\nguard l1 == 0\na[l0] = 1\nend\n"
        );
        check(&src, &[("n", 64)], Some("n"));
    }

    #[test]
    fn coefficient_guard_uses_floordiv() {
        let src = format!("kernel k\nparam n\nassume n >= 1\n{ARR}loop i = 0 .. n\nguard 3*i < n - 1\na[i] = 1\nend\nend\n");
        for n in 1..20 {
            check(&src, &[("n", n)], None);
        }
    }

    #[test]
    fn undecidable_parameter_guard_falls_back() {
        let src = format!("kernel k\nparam n, m\nassume n >= 1\n{ARR}loop i = 0 .. n\nguard m < 5\na[i] = 1\nend\nend\n");
        let (d, facts) = first_domain(&src);
        assert_eq!(
            count_points(&d, &facts).unwrap_err().code(),
            "E_NEEDS_FALLBACK"
        );
    }

    #[test]
    fn possibly_empty_range_uses_max() {
        let src = format!("kernel k\nparam n\n{ARR}loop i = 5 .. n\na[i] = 1\nend\n");
        for n in 0..10 {
            check(&src, &[("n", n)], None);
        }
    }
}
