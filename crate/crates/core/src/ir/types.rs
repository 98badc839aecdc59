use super::{Dtype, Expr, Func, KernelIR};
use crate::error::{Error, Result};

/// Inferred dtypes of every right-hand-side node, per leaf ordinal, in
/// pre-order. Barrier leaves map to an empty list.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TypeMap {
    pub leaves: Vec<Vec<Dtype>>,
}

impl TypeMap {
    pub fn for_leaf(&self, ordinal: usize) -> &[Dtype] {
        &self.leaves[ordinal]
    }
}

pub fn infer_types(k: &KernelIR) -> Result<TypeMap> {
    let mut leaves = Vec::new();
    for leaf in k.leaves() {
        let Some(assign) = leaf.as_assign() else {
            leaves.push(Vec::new());
            continue;
        };
        let mut out = Vec::new();
        let rhs = infer(k, &assign.rhs, None, &mut out);
        let lhs = k.array(&assign.lhs.array).map(|a| a.dtype).ok_or_else(|| {
            Error::Format(format!("array `{}` is not declared", assign.lhs.array))
        })?;
        if rhs > lhs {
            return Err(Error::TypeConflict {
                line: assign.line,
                array: assign.lhs.array.clone(),
                lhs,
                rhs,
            });
        }
        leaves.push(out);
    }
    Ok(TypeMap { leaves })
}

/// Type of a node without recording it, used to look at siblings.
fn peek(k: &KernelIR, e: &Expr) -> Option<Dtype> {
    let mut scratch = Vec::new();
    match e {
        Expr::Lit { .. } => None,
        _ => Some(infer(k, e, None, &mut scratch)),
    }
}

fn literal_type(int: bool, siblings: Option<Dtype>) -> Dtype {
    match siblings {
        Some(Dtype::I32) if int => Dtype::I32,
        Some(t) if t.is_float() => t,
        _ => Dtype::F32,
    }
}

fn infer(k: &KernelIR, e: &Expr, siblings: Option<Dtype>, out: &mut Vec<Dtype>) -> Dtype {
    let slot = out.len();
    out.push(Dtype::F32);
    let t = match e {
        Expr::Lit { int, .. } => literal_type(*int, siblings),
        Expr::Var(_) => Dtype::I32,
        Expr::Access(a) => k.array(&a.array).map(|d| d.dtype).unwrap_or(Dtype::F32),
        Expr::Neg(inner) => infer(k, inner, siblings, out),
        Expr::Bin(_, a, b) => {
            let ta = infer(k, a, peek(k, b), out);
            let tb = infer(k, b, (!matches!(**a, Expr::Lit { .. })).then_some(ta), out);
            ta.promote(tb)
        }
        Expr::Call(f, args) => {
            let sib: Option<Dtype> = args.iter().filter_map(|a| peek(k, a)).max();
            let widest = args
                .iter()
                .map(|a| infer(k, a, sib, out))
                .max()
                .unwrap_or(Dtype::F32);
            match f {
                Func::CastF32 => Dtype::F32,
                Func::CastF64 => Dtype::F64,
                _ => widest.promote(Dtype::F32),
            }
        }
    };
    out[slot] = t;
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_kernel;

    const HEAD: &str = "kernel k\nparam n\narray a32 : f32[n] global row_major in\narray b64 : f64[n] global row_major in\narray o32 : f32[n] global row_major out\narray o64 : f64[n] global row_major out\narray oi : i32[n] global row_major out\nloop i = 0 .. n\n";

    fn types(stmt: &str) -> Result<Vec<Dtype>> {
        let k = parse_kernel(&format!("{HEAD}{stmt}\nend\n")).unwrap();
        infer_types(&k).map(|m| m.leaves[0].clone())
    }

    #[test]
    fn literal_adopts_float_sibling() {
        assert_eq!(
            types("o32[i] = 2*a32[i]").unwrap(),
            [Dtype::F32, Dtype::F32, Dtype::F32]
        );
        assert_eq!(
            types("o64[i] = 2.0*b64[i]").unwrap(),
            [Dtype::F64, Dtype::F64, Dtype::F64]
        );
        assert_eq!(
            types("o64[i] = b64[i] + 1").unwrap(),
            [Dtype::F64, Dtype::F64, Dtype::F64]
        );
    }

    #[test]
    fn promotion() {
        assert_eq!(types("o64[i] = a32[i] + b64[i]").unwrap()[0], Dtype::F64);
        assert_eq!(types("o32[i] = a32[i] * i").unwrap()[0], Dtype::F32);
        assert_eq!(
            types("oi[i] = i + 1").unwrap(),
            [Dtype::I32, Dtype::I32, Dtype::I32]
        );
        assert_eq!(types("o32[i] = 1").unwrap(), [Dtype::F32]);
    }

    #[test]
    fn narrowing_needs_cast() {
        let err = types("o32[i] = b64[i]").unwrap_err();
        assert_eq!(err.code(), "E_TYPE_CONFLICT");
        assert_eq!(
            types("o32[i] = f32(b64[i])").unwrap(),
            [Dtype::F32, Dtype::F64]
        );
        assert!(types("oi[i] = a32[i]").is_err());
    }

    #[test]
    fn special_functions_are_float() {
        assert_eq!(
            types("o32[i] = rsqrt(i)").unwrap(),
            [Dtype::F32, Dtype::I32]
        );
        assert_eq!(
            types("o64[i] = pow(b64[i], 2)").unwrap(),
            [Dtype::F64, Dtype::F64, Dtype::F64]
        );
    }
}
