use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// A quasi-affine integer expression: `constant + Σ coeff·var + Σ coeff·⌊num/den⌋`.
///
/// Floor-division terms are kept only when the numerator is not constant;
/// constant numerators are folded on construction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Affine {
    pub constant: i64,
    pub terms: BTreeMap<String, i64>,
    pub divs: Vec<FloorDiv>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FloorDiv {
    pub coeff: i64,
    pub num: Affine,
    pub den: i64,
}

impl Affine {
    pub fn constant(c: i64) -> Self {
        Affine {
            constant: c,
            ..Default::default()
        }
    }

    pub fn var(name: &str) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(name.to_string(), 1);
        Affine {
            constant: 0,
            terms,
            divs: Vec::new(),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty() && self.divs.is_empty()
    }

    pub fn as_constant(&self) -> Option<i64> {
        self.is_constant().then_some(self.constant)
    }

    /// Coefficient of a plain variable term (variables under a floor division
    /// are not reported here).
    pub fn coeff(&self, var: &str) -> i64 {
        self.terms.get(var).copied().unwrap_or(0)
    }

    /// Every variable mentioned, including inside floor divisions.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self.terms.keys().cloned().collect();
        for d in &self.divs {
            out.extend(d.num.vars());
        }
        out
    }

    pub fn mentions(&self, var: &str) -> bool {
        self.terms.contains_key(var) || self.divs.iter().any(|d| d.num.mentions(var))
    }

    pub fn add(&self, other: &Affine) -> Affine {
        let mut out = self.clone();
        out.constant += other.constant;
        for (v, c) in &other.terms {
            *out.terms.entry(v.clone()).or_insert(0) += c;
        }
        out.divs.extend(other.divs.iter().cloned());
        out.normalized()
    }

    pub fn sub(&self, other: &Affine) -> Affine {
        self.add(&other.scale(-1))
    }

    pub fn add_const(&self, c: i64) -> Affine {
        let mut out = self.clone();
        out.constant += c;
        out
    }

    pub fn scale(&self, k: i64) -> Affine {
        if k == 0 {
            return Affine::default();
        }
        Affine {
            constant: self.constant * k,
            terms: self.terms.iter().map(|(v, c)| (v.clone(), c * k)).collect(),
            divs: self
                .divs
                .iter()
                .map(|d| FloorDiv {
                    coeff: d.coeff * k,
                    ..d.clone()
                })
                .collect(),
        }
    }

    /// `⌊self / den⌋` for a positive constant `den`.
    pub fn floor_div(&self, den: i64) -> Affine {
        assert!(den > 0, "floor division by non-positive constant");
        if den == 1 {
            return self.clone();
        }
        if let Some(c) = self.as_constant() {
            return Affine::constant(c.div_euclid(den));
        }
        Affine {
            constant: 0,
            terms: BTreeMap::new(),
            divs: vec![FloorDiv {
                coeff: 1,
                num: self.clone(),
                den,
            }],
        }
    }

    /// Replaces a variable by an affine expression.
    pub fn substitute(&self, var: &str, value: &Affine) -> Affine {
        let mut out = Affine {
            constant: self.constant,
            terms: BTreeMap::new(),
            divs: Vec::new(),
        };
        for (v, c) in &self.terms {
            if v == var {
                out = out.add(&value.scale(*c));
            } else {
                *out.terms.entry(v.clone()).or_insert(0) += c;
            }
        }
        for d in &self.divs {
            let num = d.num.substitute(var, value);
            out = out.add(&num.floor_div(d.den).scale(d.coeff));
        }
        out.normalized()
    }

    /// Evaluates with the given variable lookup; `None` if a variable is unbound.
    pub fn eval(&self, lookup: &impl Fn(&str) -> Option<i64>) -> Option<i64> {
        let mut acc = self.constant;
        for (v, c) in &self.terms {
            acc += c * lookup(v)?;
        }
        for d in &self.divs {
            acc += d.coeff * d.num.eval(lookup)?.div_euclid(d.den);
        }
        Some(acc)
    }

    fn normalized(mut self) -> Affine {
        self.terms.retain(|_, c| *c != 0);
        let mut merged: Vec<FloorDiv> = Vec::new();
        for d in self.divs.drain(..) {
            if let Some(c) = d.num.as_constant() {
                self.constant += d.coeff * c.div_euclid(d.den);
                continue;
            }
            match merged.iter_mut().find(|m| m.num == d.num && m.den == d.den) {
                Some(m) => m.coeff += d.coeff,
                None => merged.push(d),
            }
        }
        merged.retain(|d| d.coeff != 0);
        merged.sort();
        self.divs = merged;
        self
    }
}

impl From<i64> for Affine {
    fn from(c: i64) -> Self {
        Affine::constant(c)
    }
}

impl fmt::Display for Affine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<(i64, String)> = Vec::new();
        for (v, c) in &self.terms {
            parts.push((*c, v.clone()));
        }
        for d in &self.divs {
            parts.push((d.coeff, format!("({}) / {}", d.num, d.den)));
        }
        if parts.is_empty() {
            return write!(f, "{}", self.constant);
        }
        for (i, (c, body)) in parts.iter().enumerate() {
            let mag = c.abs();
            let term = if mag == 1 {
                body.clone()
            } else if body.starts_with('(') {
                format!("{mag}*({body})")
            } else {
                format!("{mag}*{body}")
            };
            match (i, *c < 0) {
                (0, true) => write!(f, "-{term}")?,
                (0, false) => write!(f, "{term}")?,
                (_, true) => write!(f, " - {term}")?,
                (_, false) => write!(f, " + {term}")?,
            }
        }
        match self.constant {
            0 => Ok(()),
            c if c < 0 => write!(f, " - {}", -c),
            c => write!(f, " + {c}"),
        }
    }
}
