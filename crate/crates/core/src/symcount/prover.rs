use std::cell::Cell;
use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use super::poly::{CountExpr, Symbol};
use crate::ir::{Assumption, KernelIR};

/// Single-parameter facts extracted from a kernel's assumptions. Parameters
/// are always nonnegative.
#[derive(Debug, Clone, Default)]
pub struct Facts {
    lower: BTreeMap<String, BigInt>,
    /// `p ≡ r (mod m)` as `(m, r)`.
    modulus: BTreeMap<String, (BigInt, BigInt)>,
}

/// A domain variable ranging over `[lo, hi)`.
#[derive(Debug, Clone)]
pub struct Range {
    pub var: String,
    pub lo: CountExpr,
    pub hi: CountExpr,
}

const BUDGET: u32 = 20_000;

impl Facts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_kernel(k: &KernelIR) -> Self {
        let mut f = Facts::new();
        for a in &k.assumptions {
            match a {
                Assumption::Cmp(c) => {
                    for e in c.to_nonneg() {
                        f.add_nonneg(&e);
                    }
                }
                Assumption::Mod {
                    expr,
                    modulus,
                    remainder,
                } => {
                    if expr.terms.len() == 1 && expr.divs.is_empty() {
                        let (p, c) = expr.terms.iter().next().unwrap();
                        // c·p + k ≡ r (mod m) pins p mod m when c = ±1.
                        if c.abs() == 1 {
                            let r = (remainder - expr.constant) * c;
                            f.add_modulus(p, *modulus, r.rem_euclid(*modulus));
                        }
                    }
                }
            }
        }
        f
    }

    fn add_nonneg(&mut self, e: &crate::ir::Affine) {
        if e.terms.len() != 1 || !e.divs.is_empty() {
            return;
        }
        let (p, c) = e.terms.iter().next().unwrap();
        if *c > 0 {
            // c·p + k ≥ 0  →  p ≥ ceil(-k / c)
            let lb = BigInt::from(-e.constant).div_ceil(&BigInt::from(*c));
            self.set_lower(p, lb);
        }
    }

    pub fn set_lower(&mut self, p: &str, lb: BigInt) {
        let entry = self.lower.entry(p.to_string()).or_insert_with(BigInt::zero);
        if lb > *entry {
            *entry = lb;
        }
    }

    pub fn add_modulus(&mut self, p: &str, m: i64, r: i64) {
        let (m, r) = (BigInt::from(m), BigInt::from(r));
        match self.modulus.get(p) {
            Some((m0, r0)) => {
                // Combine only when one modulus divides the other consistently.
                if m.is_multiple_of(m0) && r.mod_floor(m0) == *r0 {
                    self.modulus.insert(p.to_string(), (m, r));
                }
            }
            None => {
                self.modulus.insert(p.to_string(), (m, r));
            }
        }
    }

    pub fn lower_bound(&self, p: &str) -> BigInt {
        self.lower.get(p).cloned().unwrap_or_else(BigInt::zero)
    }

    /// Smallest admissible value of `p` and its step, `p = base + step·t`.
    fn lattice(&self, p: &str) -> (BigInt, BigInt) {
        let lb = self.lower_bound(p);
        match self.modulus.get(p) {
            Some((m, r)) => {
                let shift = (r - &lb).mod_floor(m);
                (lb + shift, m.clone())
            }
            None => (lb, BigInt::from(1)),
        }
    }

    /// Proves `e ≥ 0` for every admissible parameter value and every point of
    /// the given ranges (outermost first).
    pub fn nonneg(&self, e: &CountExpr, ranges: &[Range]) -> bool {
        let budget = Cell::new(BUDGET);
        self.nonneg_inner(e, ranges, &budget)
    }

    /// Proves `a ≥ b`.
    pub fn ge(&self, a: &CountExpr, b: &CountExpr, ranges: &[Range]) -> bool {
        self.nonneg(&a.sub(b), ranges)
    }

    fn nonneg_inner(&self, e: &CountExpr, ranges: &[Range], budget: &Cell<u32>) -> bool {
        if budget.get() == 0 {
            return false;
        }
        budget.set(budget.get() - 1);
        if let Some(c) = e.as_constant() {
            return !c.is_negative();
        }
        if let Some(atom) = e.atoms().into_iter().next() {
            return self.eliminate_atom(e, &atom, ranges, budget);
        }
        if let Some(pos) = ranges.iter().rposition(|r| e.mentions(&r.var)) {
            let r = &ranges[pos];
            let cs = e.coefficients_in(&r.var);
            if cs.len() != 2 {
                return false;
            }
            let outer = &ranges[..pos];
            let at = if self.nonneg_inner(&cs[1], outer, budget) {
                r.lo.clone()
            } else if self.nonneg_inner(&cs[1].neg(), outer, budget) {
                r.hi.add_int(-1)
            } else {
                return false;
            };
            return self.nonneg_inner(&e.substitute(&r.var, &at), ranges, budget);
        }
        self.nonneg_params(e)
    }

    fn eliminate_atom(
        &self,
        e: &CountExpr,
        atom: &Symbol,
        ranges: &[Range],
        budget: &Cell<u32>,
    ) -> bool {
        let cs = e.coefficients_of(atom);
        if cs.len() != 2 {
            return false;
        }
        let (rest, k) = (&cs[0], &cs[1]);
        let increasing = if self.nonneg_inner(k, ranges, budget) {
            true
        } else if self.nonneg_inner(&k.neg(), ranges, budget) {
            false
        } else {
            return false;
        };
        let with = |v: &CountExpr| rest.add(&k.mul(v));
        // `all`: every candidate must succeed; otherwise any one suffices.
        let (cands, all): (Vec<CountExpr>, bool) = match atom {
            Symbol::FloorDiv(p, d) => {
                let dr = BigRational::from_integer(d.clone());
                let v = if increasing {
                    p.add(&CountExpr::from_bigint(BigInt::from(1) - d))
                        .scale(&dr.recip())
                } else {
                    p.scale(&dr.recip())
                };
                (vec![v], true)
            }
            Symbol::Min(args) => (args.clone(), increasing),
            Symbol::Max(args) => (args.clone(), !increasing),
            Symbol::Var(_) => unreachable!(),
        };
        if all {
            cands
                .iter()
                .all(|c| self.nonneg_inner(&with(c), ranges, budget))
        } else {
            cands
                .iter()
                .any(|c| self.nonneg_inner(&with(c), ranges, budget))
        }
    }

    fn nonneg_params(&self, e: &CountExpr) -> bool {
        let mut shifted = e.clone();
        for p in e.vars() {
            let (base, step) = self.lattice(&p);
            let t = CountExpr::var(&p)
                .scale(&BigRational::from_integer(step))
                .add(&CountExpr::from_bigint(base));
            shifted = shifted.substitute(&p, &t);
        }
        let ok = shifted.terms().all(|(_, c)| !c.is_negative());
        ok
    }

    /// Folds floor divisions that are exact under the divisibility facts and
    /// min/max atoms whose order is provable.
    pub fn simplify(&self, e: &CountExpr) -> CountExpr {
        e.map_atoms(&|atom| match atom {
            Symbol::FloorDiv(p, d) => self.simplify_floordiv(p, d),
            Symbol::Min(args) => self.prune(args, true),
            Symbol::Max(args) => self.prune(args, false),
            Symbol::Var(_) => CountExpr::symbol(atom.clone()),
        })
    }

    fn simplify_floordiv(&self, p: &CountExpr, d: &BigInt) -> CountExpr {
        if p.has_atoms() || !p.has_integer_coefficients() {
            return CountExpr::floordiv(p, d.clone());
        }
        // Rewrite each constrained parameter as base + step·t and check that
        // the non-constant part becomes an exact multiple of d.
        let mut lattice_form = p.clone();
        for v in p.vars() {
            let (base, step) = match self.modulus.get(&v) {
                Some((m, r)) => (r.clone(), m.clone()),
                None => (BigInt::zero(), BigInt::from(1)),
            };
            let t = CountExpr::var(&v)
                .scale(&BigRational::from_integer(step))
                .add(&CountExpr::from_bigint(base));
            lattice_form = lattice_form.substitute(&v, &t);
        }
        let c0 = lattice_form.constant_term();
        let exact = c0.is_integer()
            && lattice_form
                .terms()
                .filter(|(m, _)| !m.is_one())
                .all(|(_, c)| c.is_integer() && c.to_integer().is_multiple_of(d));
        if !exact {
            return CountExpr::floordiv(p, d.clone());
        }
        let c0 = c0.to_integer();
        let dr = BigRational::from_integer(d.clone());
        p.sub(&CountExpr::from_bigint(c0.clone()))
            .scale(&dr.recip())
            .add(&CountExpr::from_bigint(c0.div_floor(d)))
    }

    fn prune(&self, args: &[CountExpr], is_min: bool) -> CountExpr {
        let mut keep: Vec<CountExpr> = Vec::new();
        for (i, a) in args.iter().enumerate() {
            let dominated = args.iter().enumerate().any(|(j, b)| {
                j != i && {
                    // For min, `a` is redundant if some b ≤ a (ties broken by index).
                    let (lo, hi) = if is_min { (b, a) } else { (a, b) };
                    self.ge(hi, lo, &[]) && (j < i || !self.ge(lo, hi, &[]))
                }
            });
            if !dominated {
                keep.push(a.clone());
            }
        }
        if is_min {
            CountExpr::min_of(keep)
        } else {
            CountExpr::max_of(keep)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_unvalidated;

    fn facts(assume: &str) -> Facts {
        let src = format!("kernel k\nparam n, m\nassume {assume}\n");
        Facts::from_kernel(&parse_unvalidated(&src, &[]).unwrap())
    }

    fn n() -> CountExpr {
        CountExpr::var("n")
    }

    #[test]
    fn parameter_shift() {
        let f = facts("n >= 16");
        // n^3 - 3n^2 - 1 >= 0 for n >= 16
        let e = n().pow(3).sub(&n().pow(2).scale_int(3)).add_int(-1);
        assert!(f.nonneg(&e, &[]));
        assert!(!facts("n >= 1").nonneg(&e, &[]));
    }

    #[test]
    fn floordiv_bounds() {
        let f = facts("n >= 1");
        let up = CountExpr::floordiv(&n().add_int(255), 256.into()).scale_int(256);
        assert!(f.ge(&up, &n(), &[]));
        assert!(!f.ge(&n(), &up, &[]));
        let down = CountExpr::floordiv(&n(), 256.into()).scale_int(256);
        assert!(f.ge(&n(), &down, &[]));
    }

    #[test]
    fn divisibility_simplifies() {
        let f = facts("n % 256 == 0");
        let e = f.simplify(&CountExpr::floordiv(&n().add_int(255), 256.into()));
        assert_eq!(e, n().scale(&BigRational::new(1.into(), 256.into())));
        let f = facts("n >= 1");
        let e = f.simplify(&CountExpr::floordiv(&n().add_int(255), 256.into()));
        assert!(e.has_atoms());
    }

    #[test]
    fn domain_variables() {
        let f = facts("n >= 1");
        let ranges = [Range {
            var: "i".into(),
            lo: CountExpr::zero(),
            hi: n(),
        }];
        // n - 1 - i >= 0 for i in [0, n)
        assert!(f.nonneg(&n().add_int(-1).sub(&CountExpr::var("i")), &ranges));
        assert!(!f.nonneg(&n().add_int(-2).sub(&CountExpr::var("i")), &ranges));
    }

    #[test]
    fn min_max_atoms() {
        let f = facts("n >= 1 and m >= 1");
        let mn = CountExpr::min_of(vec![n(), CountExpr::var("m")]);
        assert!(f.ge(&n(), &mn, &[]));
        assert!(!f.ge(&mn, &n(), &[]));
        let pruned =
            facts("n >= 300").simplify(&CountExpr::min_of(vec![n(), CountExpr::from_int(256)]));
        assert_eq!(pruned, CountExpr::from_int(256));
    }
}
