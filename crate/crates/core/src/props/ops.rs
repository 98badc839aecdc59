use crate::ir::{BinOp, Dtype, Expr, Func};

/// Floating-point operation kinds, in schema order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlopKind {
    AddSub,
    Mul,
    Div,
    Pow,
    Special,
}

impl FlopKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FlopKind::AddSub => "addsub",
            FlopKind::Mul => "mul",
            FlopKind::Div => "div",
            FlopKind::Pow => "pow",
            FlopKind::Special => "special",
        }
    }

    fn of(e: &Expr) -> Option<FlopKind> {
        Some(match e {
            Expr::Neg(_) | Expr::Bin(BinOp::Add | BinOp::Sub, ..) => FlopKind::AddSub,
            Expr::Bin(BinOp::Mul, ..) => FlopKind::Mul,
            Expr::Bin(BinOp::Div, ..) => FlopKind::Div,
            Expr::Bin(BinOp::Pow, ..) | Expr::Call(Func::Pow, _) => FlopKind::Pow,
            Expr::Call(Func::Rsqrt | Func::Sqrt | Func::Exp | Func::Sin | Func::Cos, _) => {
                FlopKind::Special
            }
            _ => return None,
        })
    }
}

/// Schema keys of the floating-point operations one evaluation of `rhs`
/// performs, given the node dtypes in pre-order. Integer arithmetic and
/// casts are not counted.
pub fn flop_keys(rhs: &Expr, types: &[Dtype]) -> Vec<String> {
    let mut out = Vec::new();
    let mut i = 0;
    rhs.walk(&mut |e| {
        let t = types[i];
        i += 1;
        if let Some(kind) = FlopKind::of(e) {
            if t.is_float() {
                out.push(format!("flop.{}.{}", t.as_str(), kind.as_str()));
            }
        }
    });
    out
}
