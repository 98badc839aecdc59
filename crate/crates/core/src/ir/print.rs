use std::fmt::Write;

use super::{AxisRole, BinOp, Expr, Intent, KernelIR, Layout, Space, Stmt};

/// Renders a kernel back to source form; parsing the output yields the same
/// kernel up to line numbers.
pub fn print_kernel(k: &KernelIR) -> String {
    let mut out = String::new();
    writeln!(out, "kernel {}", k.name).unwrap();
    if !k.params.is_empty() {
        let names: Vec<&str> = k.param_names().collect();
        writeln!(out, "param {}", names.join(", ")).unwrap();
    }
    for c in &k.consts {
        writeln!(out, "const {} = {}", c.name, c.value).unwrap();
    }
    for a in &k.assumptions {
        writeln!(out, "assume {a}").unwrap();
    }
    for a in &k.arrays {
        let shape: Vec<String> = a.shape.iter().map(|s| s.to_string()).collect();
        let space = match a.space {
            Space::Global => "global",
            Space::Local => "local",
            Space::Private => "private",
        };
        let layout = match a.layout {
            Layout::RowMajor => "row_major",
            Layout::ColumnMajor => "column_major",
        };
        let intent = match a.intent {
            Intent::In => "in",
            Intent::Out => "out",
            Intent::InOut => "inout",
            Intent::Temp => "temp",
        };
        writeln!(
            out,
            "array {} : {}[{}] {space} {layout} {intent}",
            a.name,
            a.dtype,
            shape.join(", ")
        )
        .unwrap();
    }
    for ax in &k.axes {
        let role = match ax.role {
            AxisRole::Group(i) => format!("group({i})"),
            AxisRole::Local(i) => format!("local({i})"),
        };
        writeln!(out, "axis {} = {role} extent {}", ax.name, ax.extent).unwrap();
    }
    print_body(&k.body, 0, &mut out);
    out
}

fn print_body(body: &[Stmt], depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    for s in body {
        match s {
            Stmt::Loop(l) => {
                writeln!(out, "{pad}loop {} = {} .. {}", l.var, l.lower, l.upper).unwrap();
                print_body(&l.body, depth + 1, out);
                writeln!(out, "{pad}end").unwrap();
            }
            Stmt::Guard(g) => {
                let conds: Vec<String> = g.conds.iter().map(|c| c.to_string()).collect();
                writeln!(out, "{pad}guard {}", conds.join(" and ")).unwrap();
                print_body(&g.body, depth + 1, out);
                writeln!(out, "{pad}end").unwrap();
            }
            Stmt::Assign(a) => {
                writeln!(out, "{pad}{} = {}", a.lhs, expr_to_string(&a.rhs)).unwrap();
            }
            Stmt::Barrier { .. } => writeln!(out, "{pad}barrier").unwrap(),
        }
    }
}

// Precedence levels: 1 sum, 2 product, 3 unary, 4 primary.
fn level(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Bin(BinOp::Pow, ..) | Expr::Neg(_) => 3,
        Expr::Lit { value, .. } if *value < 0.0 => 3,
        _ => 4,
    }
}

fn at_least(e: &Expr, min: u8) -> String {
    let s = expr_to_string(e);
    if level(e) >= min {
        s
    } else {
        format!("({s})")
    }
}

pub(crate) fn expr_to_string(e: &Expr) -> String {
    match e {
        Expr::Lit { value, int: true } => format!("{}", *value as i64),
        Expr::Lit { value, int: false } => format!("{value:?}"),
        Expr::Var(v) => v.clone(),
        Expr::Neg(inner) => format!("-{}", at_least(inner, 3)),
        Expr::Bin(BinOp::Pow, a, b) => format!("{}**{}", at_least(a, 4), at_least(b, 3)),
        Expr::Bin(op @ (BinOp::Mul | BinOp::Div), a, b) => {
            format!("{} {} {}", at_least(a, 2), op.symbol(), at_least(b, 3))
        }
        Expr::Bin(op, a, b) => format!("{} {} {}", at_least(a, 1), op.symbol(), at_least(b, 2)),
        Expr::Call(f, args) => {
            let args: Vec<String> = args.iter().map(expr_to_string).collect();
            format!("{}({})", f.name(), args.join(", "))
        }
        Expr::Access(a) => a.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_unvalidated;

    fn strip_lines(src: &str) -> String {
        let k = parse_unvalidated(src, &[]).unwrap();
        print_kernel(&k)
    }

    #[test]
    fn print_parse_fixpoint() {
        let src = "\
kernel k
param n, m
const gs0 = 16
assume n >= 1 and n % 16 == 0
assume (2*m + 1) % 4 == 3
array a : f32[n, m] global column_major in
array t : f32[2, 16] local row_major temp
array out : f64[n] global row_major out
axis g0 = group(0) extent n / gs0
axis l0 = local(0) extent gs0
loop i = 0 .. (m + 3) / 4
  guard 16*g0 + l0 < n and i >= 1
    t[0, l0] = -a[16*g0 + l0, i]**2 * (3 - a[0, i]) / 2.5e-3
    barrier
    out[16*g0 + l0] = f64(rsqrt(t[0, l0])) - -1.0 + pow(t[1, l0], 3)
  end
end
";
        let once = strip_lines(src);
        let twice = strip_lines(&once);
        assert_eq!(once, twice);
        let a = parse_unvalidated(src, &[]).unwrap();
        let b = parse_unvalidated(&once, &[]).unwrap();
        assert_eq!(a.assumptions, b.assumptions);
        assert_eq!(
            a.arrays.iter().map(|x| &x.shape).collect::<Vec<_>>(),
            b.arrays.iter().map(|x| &x.shape).collect::<Vec<_>>()
        );
        let la: Vec<_> = a
            .leaves()
            .iter()
            .filter_map(|l| l.as_assign().map(|x| x.rhs.clone()))
            .collect();
        let lb: Vec<_> = b
            .leaves()
            .iter()
            .filter_map(|l| l.as_assign().map(|x| x.rhs.clone()))
            .collect();
        assert_eq!(la, lb);
    }
}
