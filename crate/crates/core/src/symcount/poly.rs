use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::ir::Affine;

/// An opaque factor of a monomial.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Var(String),
    /// `⌊e / d⌋` with `d > 0`.
    FloorDiv(Box<CountExpr>, BigInt),
    Min(Vec<CountExpr>),
    Max(Vec<CountExpr>),
}

impl Symbol {
    pub fn is_atom(&self) -> bool {
        !matches!(self, Symbol::Var(_))
    }

    fn mentions(&self, var: &str) -> bool {
        match self {
            Symbol::Var(v) => v == var,
            Symbol::FloorDiv(e, _) => e.mentions(var),
            Symbol::Min(args) | Symbol::Max(args) => args.iter().any(|a| a.mentions(var)),
        }
    }

    fn vars_into(&self, out: &mut BTreeSet<String>) {
        match self {
            Symbol::Var(v) => {
                out.insert(v.clone());
            }
            Symbol::FloorDiv(e, _) => e.vars_into(out),
            Symbol::Min(args) | Symbol::Max(args) => args.iter().for_each(|a| a.vars_into(out)),
        }
    }

    fn eval(&self, lookup: &dyn Fn(&str) -> Option<BigInt>) -> Option<BigRational> {
        Some(match self {
            Symbol::Var(v) => BigRational::from_integer(lookup(v)?),
            Symbol::FloorDiv(e, d) => {
                let x = e.eval(lookup)?;
                BigRational::from_integer(
                    (x / BigRational::from_integer(d.clone()))
                        .floor()
                        .to_integer(),
                )
            }
            Symbol::Min(args) => {
                let vals = args
                    .iter()
                    .map(|a| a.eval(lookup))
                    .collect::<Option<Vec<_>>>()?;
                vals.into_iter().min()?
            }
            Symbol::Max(args) => {
                let vals = args
                    .iter()
                    .map(|a| a.eval(lookup))
                    .collect::<Option<Vec<_>>>()?;
                vals.into_iter().max()?
            }
        })
    }

    fn substitute(&self, var: &str, value: &CountExpr) -> CountExpr {
        match self {
            Symbol::Var(v) if v == var => value.clone(),
            Symbol::Var(_) => CountExpr::symbol(self.clone()),
            Symbol::FloorDiv(e, d) => CountExpr::floordiv(&e.substitute(var, value), d.clone()),
            Symbol::Min(args) => {
                CountExpr::min_of(args.iter().map(|a| a.substitute(var, value)).collect())
            }
            Symbol::Max(args) => {
                CountExpr::max_of(args.iter().map(|a| a.substitute(var, value)).collect())
            }
        }
    }
}

/// A product of symbols with positive exponents, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Monomial(Vec<(Symbol, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn factors(&self) -> &[(Symbol, u32)] {
        &self.0
    }

    fn of(sym: Symbol) -> Self {
        Monomial(vec![(sym, 1)])
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut map: BTreeMap<Symbol, u32> = self.0.iter().cloned().collect();
        for (s, e) in &other.0 {
            *map.entry(s.clone()).or_insert(0) += e;
        }
        Monomial(map.into_iter().collect())
    }

    fn exponent_of(&self, sym: &Symbol) -> u32 {
        self.0
            .iter()
            .find(|(s, _)| s == sym)
            .map(|(_, e)| *e)
            .unwrap_or(0)
    }

    fn without(&self, sym: &Symbol) -> Monomial {
        Monomial(self.0.iter().filter(|(s, _)| s != sym).cloned().collect())
    }
}

/// A parametric count: a polynomial with exact rational coefficients over
/// parameters and floor-division, min and max atoms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct CountExpr {
    terms: BTreeMap<Monomial, BigRational>,
}

fn rat(i: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(i))
}

impl CountExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    pub fn from_int(c: i64) -> Self {
        Self::constant(rat(c))
    }

    pub fn from_bigint(c: BigInt) -> Self {
        Self::constant(BigRational::from_integer(c))
    }

    pub fn constant(c: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Monomial::one(), c);
        }
        CountExpr { terms }
    }

    pub fn var(name: &str) -> Self {
        Self::symbol(Symbol::Var(name.to_string()))
    }

    pub fn symbol(sym: Symbol) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(Monomial::of(sym), BigRational::one());
        CountExpr { terms }
    }

    pub fn from_affine(a: &Affine) -> Self {
        let mut out = Self::from_int(a.constant);
        for (v, c) in &a.terms {
            out = out.add(&Self::var(v).scale_int(*c));
        }
        for d in &a.divs {
            let inner = Self::floordiv(&Self::from_affine(&d.num), BigInt::from(d.den));
            out = out.add(&inner.scale_int(d.coeff));
        }
        out
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => self.terms.get(&Monomial::one()).cloned(),
            _ => None,
        }
    }

    pub fn as_integer(&self) -> Option<BigInt> {
        self.as_constant()
            .filter(|c| c.is_integer())
            .map(|c| c.to_integer())
    }

    pub fn constant_term(&self) -> BigRational {
        self.terms
            .get(&Monomial::one())
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    /// True if every coefficient is an integer.
    pub fn has_integer_coefficients(&self) -> bool {
        self.terms.values().all(|c| c.is_integer())
    }

    fn insert(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let remove = {
            let slot = self
                .terms
                .entry(m.clone())
                .or_insert_with(BigRational::zero);
            *slot += c;
            slot.is_zero()
        };
        if remove {
            self.terms.remove(&m);
        }
    }

    pub fn add(&self, other: &CountExpr) -> CountExpr {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.insert(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &CountExpr) -> CountExpr {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> CountExpr {
        self.scale(&-BigRational::one())
    }

    pub fn add_int(&self, c: i64) -> CountExpr {
        self.add(&Self::from_int(c))
    }

    pub fn scale(&self, k: &BigRational) -> CountExpr {
        if k.is_zero() {
            return Self::zero();
        }
        CountExpr {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * k)).collect(),
        }
    }

    pub fn scale_int(&self, k: i64) -> CountExpr {
        self.scale(&rat(k))
    }

    pub fn mul(&self, other: &CountExpr) -> CountExpr {
        let mut out = CountExpr::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.insert(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> CountExpr {
        let mut out = Self::one();
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    /// `⌊e / d⌋`, folded when `e` is constant or an exact integer multiple
    /// of `d` plus a constant.
    pub fn floordiv(e: &CountExpr, d: BigInt) -> CountExpr {
        assert!(d.is_positive(), "floor division by non-positive constant");
        if d.is_one() {
            return e.clone();
        }
        if let Some(c) = e.as_constant() {
            return Self::constant(BigRational::from_integer(
                (c / BigRational::from_integer(d)).floor().to_integer(),
            ));
        }
        let c0 = e.constant_term();
        let rest = e.sub(&Self::constant(c0.clone()));
        let divisible = rest
            .terms
            .values()
            .all(|c| c.is_integer() && c.to_integer().is_multiple_of(&d));
        if divisible && c0.is_integer() {
            let dr = BigRational::from_integer(d.clone());
            let q = c0.to_integer().div_floor(&d);
            return rest.scale(&dr.recip()).add(&Self::from_bigint(q));
        }
        Self::symbol(Symbol::FloorDiv(Box::new(e.clone()), d))
    }

    /// Symbolic minimum; folds constants and duplicates.
    pub fn min_of(args: Vec<CountExpr>) -> CountExpr {
        Self::extremum(args, true)
    }

    pub fn max_of(args: Vec<CountExpr>) -> CountExpr {
        Self::extremum(args, false)
    }

    fn extremum(args: Vec<CountExpr>, is_min: bool) -> CountExpr {
        let mut flat: BTreeSet<CountExpr> = BTreeSet::new();
        for a in args {
            let nested = a.terms.len() == 1
                && a.terms.iter().next().is_some_and(|(m, c)| {
                    c.is_one()
                        && m.0.len() == 1
                        && m.0[0].1 == 1
                        && matches!(
                            (&m.0[0].0, is_min),
                            (Symbol::Min(_), true) | (Symbol::Max(_), false)
                        )
                });
            if nested {
                let (m, _) = a.terms.iter().next().unwrap();
                match &m.0[0].0 {
                    Symbol::Min(inner) | Symbol::Max(inner) => flat.extend(inner.iter().cloned()),
                    Symbol::Var(_) | Symbol::FloorDiv(..) => unreachable!(),
                }
            } else {
                flat.insert(a);
            }
        }
        let (consts, mut rest): (Vec<CountExpr>, Vec<CountExpr>) =
            flat.into_iter().partition(|a| a.as_constant().is_some());
        let folded = consts
            .into_iter()
            .map(|c| c.as_constant().unwrap())
            .reduce(|a, b| if is_min { a.min(b) } else { a.max(b) });
        if let Some(c) = folded {
            rest.push(Self::constant(c));
        }
        rest.sort();
        match rest.len() {
            0 => panic!("min/max of no arguments"),
            1 => rest.pop().unwrap(),
            _ if is_min => Self::symbol(Symbol::Min(rest)),
            _ => Self::symbol(Symbol::Max(rest)),
        }
    }

    pub fn mentions(&self, var: &str) -> bool {
        self.terms
            .keys()
            .any(|m| m.0.iter().any(|(s, _)| s.mentions(var)))
    }

    /// True if `var` occurs inside a floor-division, min or max atom.
    pub fn mentions_in_atom(&self, var: &str) -> bool {
        self.terms
            .keys()
            .any(|m| m.0.iter().any(|(s, _)| s.is_atom() && s.mentions(var)))
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.vars_into(&mut out);
        out
    }

    fn vars_into(&self, out: &mut BTreeSet<String>) {
        for m in self.terms.keys() {
            for (s, _) in &m.0 {
                s.vars_into(out);
            }
        }
    }

    /// Distinct atoms appearing directly as factors.
    pub fn atoms(&self) -> Vec<Symbol> {
        let mut out: BTreeSet<Symbol> = BTreeSet::new();
        for m in self.terms.keys() {
            for (s, _) in &m.0 {
                if s.is_atom() {
                    out.insert(s.clone());
                }
            }
        }
        out.into_iter().collect()
    }

    pub fn has_atoms(&self) -> bool {
        self.terms
            .keys()
            .any(|m| m.0.iter().any(|(s, _)| s.is_atom()))
    }

    /// Highest exponent of `sym` among the terms.
    pub fn degree_of(&self, sym: &Symbol) -> u32 {
        self.terms
            .keys()
            .map(|m| m.exponent_of(sym))
            .max()
            .unwrap_or(0)
    }

    pub fn degree_in(&self, var: &str) -> u32 {
        self.degree_of(&Symbol::Var(var.to_string()))
    }

    /// Coefficients `c_k` with `self = Σ c_k · sym^k`.
    pub fn coefficients_of(&self, sym: &Symbol) -> Vec<CountExpr> {
        let deg = self.degree_of(sym) as usize;
        let mut out = vec![CountExpr::zero(); deg + 1];
        for (m, c) in &self.terms {
            let k = m.exponent_of(sym) as usize;
            out[k].insert(m.without(sym), c.clone());
        }
        out
    }

    pub fn coefficients_in(&self, var: &str) -> Vec<CountExpr> {
        self.coefficients_of(&Symbol::Var(var.to_string()))
    }

    /// Replaces a variable everywhere, including inside atoms.
    pub fn substitute(&self, var: &str, value: &CountExpr) -> CountExpr {
        if !self.mentions(var) {
            return self.clone();
        }
        let mut out = CountExpr::zero();
        for (m, c) in &self.terms {
            let mut term = CountExpr::constant(c.clone());
            for (s, e) in &m.0 {
                term = term.mul(&s.substitute(var, value).pow(*e));
            }
            out = out.add(&term);
        }
        out
    }

    /// Replaces one atom (as a whole factor) by an expression.
    pub fn replace_symbol(&self, sym: &Symbol, value: &CountExpr) -> CountExpr {
        let mut out = CountExpr::zero();
        for (m, c) in &self.terms {
            let k = m.exponent_of(sym);
            let rest = CountExpr {
                terms: [(m.without(sym), c.clone())].into_iter().collect(),
            };
            out = out.add(&rest.mul(&value.pow(k)));
        }
        out
    }

    /// Rewrites every atom bottom-up with `f`.
    pub fn map_atoms(&self, f: &dyn Fn(&Symbol) -> CountExpr) -> CountExpr {
        let mut out = CountExpr::zero();
        for (m, c) in &self.terms {
            let mut term = CountExpr::constant(c.clone());
            for (s, e) in &m.0 {
                let factor = match s {
                    Symbol::Var(_) => CountExpr::symbol(s.clone()),
                    Symbol::FloorDiv(inner, d) => {
                        f(&Symbol::FloorDiv(Box::new(inner.map_atoms(f)), d.clone()))
                    }
                    Symbol::Min(args) => {
                        f(&Symbol::Min(args.iter().map(|a| a.map_atoms(f)).collect()))
                    }
                    Symbol::Max(args) => {
                        f(&Symbol::Max(args.iter().map(|a| a.map_atoms(f)).collect()))
                    }
                };
                term = term.mul(&factor.pow(*e));
            }
            out = out.add(&term);
        }
        out
    }

    /// Exact value; `None` if some variable is unbound.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<BigInt>) -> Option<BigRational> {
        let mut acc = BigRational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (s, e) in &m.0 {
                let v = s.eval(lookup)?;
                for _ in 0..*e {
                    t *= &v;
                }
            }
            acc += t;
        }
        Some(acc)
    }

    /// Evaluates with `i64` bindings, requiring an integer result.
    pub fn eval_i64(&self, lookup: &dyn Fn(&str) -> Option<i64>) -> Option<BigInt> {
        let v = self.eval(&|name| lookup(name).map(BigInt::from))?;
        v.is_integer().then(|| v.to_integer())
    }

    fn write_prefix(&self, out: &mut String) {
        let parts: Vec<String> = self.terms.iter().map(|(m, c)| term_prefix(m, c)).collect();
        match parts.len() {
            0 => out.push('0'),
            1 => out.push_str(&parts[0]),
            _ => {
                out.push_str("(+ ");
                out.push_str(&parts.join(" "));
                out.push(')');
            }
        }
    }

    /// Canonical prefix-notation text, e.g. `(+ (* 1/2 n n) (* 1/2 n))`.
    pub fn to_prefix(&self) -> String {
        let mut s = String::new();
        self.write_prefix(&mut s);
        s
    }
}

fn rational_text(c: &BigRational) -> String {
    if c.is_integer() {
        c.to_integer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

fn symbol_prefix(s: &Symbol) -> String {
    match s {
        Symbol::Var(v) => v.clone(),
        Symbol::FloorDiv(e, d) => format!("(floordiv {} {d})", e.to_prefix()),
        Symbol::Min(args) => format!(
            "(min {})",
            args.iter()
                .map(|a| a.to_prefix())
                .collect::<Vec<_>>()
                .join(" ")
        ),
        Symbol::Max(args) => format!(
            "(max {})",
            args.iter()
                .map(|a| a.to_prefix())
                .collect::<Vec<_>>()
                .join(" ")
        ),
    }
}

fn term_prefix(m: &Monomial, c: &BigRational) -> String {
    if m.is_one() {
        return rational_text(c);
    }
    let mut factors = Vec::new();
    if !c.is_one() {
        factors.push(rational_text(c));
    }
    for (s, e) in &m.0 {
        let t = symbol_prefix(s);
        for _ in 0..*e {
            factors.push(t.clone());
        }
    }
    if factors.len() == 1 {
        factors.pop().unwrap()
    } else {
        format!("(* {})", factors.join(" "))
    }
}

impl fmt::Display for CountExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_prefix())
    }
}

impl From<i64> for CountExpr {
    fn from(c: i64) -> Self {
        CountExpr::from_int(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n() -> CountExpr {
        CountExpr::var("n")
    }

    fn at(e: &CountExpr, n: i64) -> BigRational {
        e.eval(&|v| (v == "n").then(|| BigInt::from(n))).unwrap()
    }

    #[test]
    fn canonical_prefix_form() {
        let tri = n()
            .mul(&n().add_int(1))
            .scale(&BigRational::new(1.into(), 2.into()));
        assert_eq!(tri.to_prefix(), "(+ (* 1/2 n) (* 1/2 n n))");
        assert_eq!(at(&tri, 4), rat(10));
        assert_eq!(CountExpr::zero().to_prefix(), "0");
        let fd = CountExpr::floordiv(&n().add_int(255), 256.into());
        assert_eq!(fd.to_prefix(), "(floordiv (+ 255 n) 256)");
        assert_eq!(at(&fd, 257), rat(2));
    }

    #[test]
    fn floordiv_folds_exact_multiples() {
        let e = CountExpr::floordiv(&n().scale_int(512).add_int(3), 256.into());
        assert_eq!(e, n().scale_int(2));
        assert_eq!(
            CountExpr::floordiv(&CountExpr::from_int(-7), 2.into()),
            CountExpr::from_int(-4)
        );
    }

    #[test]
    fn min_max_fold() {
        let m = CountExpr::min_of(vec![
            n(),
            CountExpr::from_int(3),
            CountExpr::from_int(5),
            n(),
        ]);
        assert_eq!(m.to_prefix(), "(min 3 n)");
        assert_eq!(at(&m, 10), rat(3));
        assert_eq!(at(&m, 1), rat(1));
        let nested = CountExpr::min_of(vec![m.clone(), CountExpr::from_int(2)]);
        assert_eq!(nested.to_prefix(), "(min 2 n)");
        assert_eq!(CountExpr::max_of(vec![n(), n()]), n());
    }

    #[test]
    fn substitution_and_coefficients() {
        let e = CountExpr::var("i")
            .pow(2)
            .mul(&n())
            .add(&CountExpr::var("i"));
        let cs = e.coefficients_in("i");
        assert_eq!(cs.len(), 3);
        assert_eq!(cs[2], n());
        let s = e.substitute("i", &n());
        assert_eq!(s, n().pow(3).add(&n()));
        let fd = CountExpr::floordiv(&CountExpr::var("i"), 4.into());
        assert!(fd.mentions_in_atom("i"));
        assert_eq!(
            fd.substitute("i", &CountExpr::from_int(9)),
            CountExpr::from_int(2)
        );
    }
}
