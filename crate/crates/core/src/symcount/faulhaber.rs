use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::poly::{CountExpr, Symbol};

fn binomial(n: usize, k: usize) -> BigInt {
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// Coefficients (ascending powers of `x`) of `S_k(x) = Σ_{v=0}^{x-1} v^k`.
pub fn power_sum_coefficients(k: usize) -> Vec<BigRational> {
    let mut table: Vec<Vec<BigRational>> = Vec::with_capacity(k + 1);
    for j in 0..=k {
        // (x)^{j+1} = Σ_{i=0}^{j} C(j+1, i) S_i(x), so
        // S_j = (x^{j+1} - Σ_{i<j} C(j+1, i) S_i) / (j+1).
        let mut s = vec![BigRational::zero(); j + 2];
        s[j + 1] = BigRational::one();
        for (i, si) in table.iter().enumerate() {
            let c = BigRational::from_integer(binomial(j + 1, i));
            for (p, coef) in si.iter().enumerate() {
                s[p] -= &c * coef;
            }
        }
        let div = BigRational::from_integer(BigInt::from(j + 1));
        for coef in s.iter_mut() {
            *coef /= &div;
        }
        table.push(s);
    }
    table.pop().unwrap()
}

fn power_sum(k: usize, x: &CountExpr) -> CountExpr {
    let mut out = CountExpr::zero();
    let mut xp = CountExpr::one();
    for c in power_sum_coefficients(k) {
        out = out.add(&xp.scale(&c));
        xp = xp.mul(x);
    }
    out
}

/// `Σ_{var=lo}^{hi-1} f`, for `f` polynomial in `var` (the variable must not
/// occur inside atoms). Correct whenever `hi ≥ lo`.
pub fn sum_over(f: &CountExpr, var: &str, lo: &CountExpr, hi: &CountExpr) -> Option<CountExpr> {
    if f.mentions_in_atom(var) || lo.mentions(var) || hi.mentions(var) {
        return None;
    }
    let coeffs = f.coefficients_of(&Symbol::Var(var.to_string()));
    let mut out = CountExpr::zero();
    for (k, c) in coeffs.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let s = power_sum(k, hi).sub(&power_sum(k, lo));
        out = out.add(&c.mul(&s));
    }
    Some(out)
}
