//! Kernel intermediate representation: a small polyhedral loop language with
//! work-group axes, affine guards, array assignments and barriers.

mod affine;
mod parse;
mod print;
mod types;
mod validate;

use std::fmt;

pub use affine::{Affine, FloorDiv};
pub use parse::{parse_kernel, parse_kernel_with, parse_unvalidated, ParseError, ParseErrorKind};
pub use print::print_kernel;
pub use types::{infer_types, TypeMap};
pub use validate::{validate, DiagCode, Diagnostic};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    I32,
    F32,
    F64,
}

impl Dtype {
    pub fn is_float(self) -> bool {
        matches!(self, Dtype::F32 | Dtype::F64)
    }

    /// Size in bytes of one array cell.
    pub fn size_bytes(self) -> u32 {
        match self {
            Dtype::I32 | Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    /// Common type of two operands.
    pub fn promote(self, other: Dtype) -> Dtype {
        self.max(other)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::I32 => "i32",
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Space {
    Global,
    Local,
    /// Per-work-item scratch (registers); never counted as memory traffic.
    Private,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    RowMajor,
    ColumnMajor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Intent {
    In,
    Out,
    InOut,
    Temp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamDecl {
    pub name: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstDecl {
    pub name: String,
    pub value: i64,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayDecl {
    pub name: String,
    pub dtype: Dtype,
    pub shape: Vec<Affine>,
    pub space: Space,
    pub layout: Layout,
    pub intent: Intent,
    pub line: usize,
}

impl ArrayDecl {
    /// Index of the array axis that varies fastest in memory.
    pub fn fast_axis(&self) -> usize {
        match self.layout {
            Layout::RowMajor => self.shape.len().saturating_sub(1),
            Layout::ColumnMajor => 0,
        }
    }

    /// Per-axis multipliers of the linearized element address.
    pub fn address_multipliers(&self) -> Vec<Vec<&Affine>> {
        let rank = self.shape.len();
        (0..rank)
            .map(|d| match self.layout {
                Layout::RowMajor => self.shape[d + 1..].iter().collect(),
                Layout::ColumnMajor => self.shape[..d].iter().collect(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AxisRole {
    Group(u8),
    Local(u8),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisDecl {
    pub name: String,
    pub role: AxisRole,
    pub extent: Affine,
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Ge,
    Gt,
    Le,
    Lt,
    Eq,
}

impl CmpOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
            CmpOp::Eq => "==",
        }
    }
}

/// `lhs op rhs` over affine expressions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cmp {
    pub lhs: Affine,
    pub op: CmpOp,
    pub rhs: Affine,
}

impl Cmp {
    /// The comparison as a conjunction of `expr >= 0` constraints.
    pub fn to_nonneg(&self) -> Vec<Affine> {
        let d = self.lhs.sub(&self.rhs);
        match self.op {
            CmpOp::Ge => vec![d],
            CmpOp::Gt => vec![d.add_const(-1)],
            CmpOp::Le => vec![d.scale(-1)],
            CmpOp::Lt => vec![d.scale(-1).add_const(-1)],
            CmpOp::Eq => vec![d.clone(), d.scale(-1)],
        }
    }

    pub fn holds(&self, lookup: &impl Fn(&str) -> Option<i64>) -> Option<bool> {
        let l = self.lhs.eval(lookup)?;
        let r = self.rhs.eval(lookup)?;
        Some(match self.op {
            CmpOp::Ge => l >= r,
            CmpOp::Gt => l > r,
            CmpOp::Le => l <= r,
            CmpOp::Lt => l < r,
            CmpOp::Eq => l == r,
        })
    }
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op.as_str(), self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Assumption {
    Cmp(Cmp),
    /// `expr % modulus == remainder`
    Mod {
        expr: Affine,
        modulus: i64,
        remainder: i64,
    },
}

impl Assumption {
    pub fn holds(&self, lookup: &impl Fn(&str) -> Option<i64>) -> Option<bool> {
        match self {
            Assumption::Cmp(c) => c.holds(lookup),
            Assumption::Mod {
                expr,
                modulus,
                remainder,
            } => Some(expr.eval(lookup)?.rem_euclid(*modulus) == *remainder),
        }
    }

    pub fn vars(&self) -> std::collections::BTreeSet<String> {
        match self {
            Assumption::Cmp(c) => {
                let mut v = c.lhs.vars();
                v.extend(c.rhs.vars());
                v
            }
            Assumption::Mod { expr, .. } => expr.vars(),
        }
    }
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assumption::Cmp(c) => write!(f, "{c}"),
            Assumption::Mod {
                expr,
                modulus,
                remainder,
            } => {
                if expr.is_constant()
                    || (expr.terms.len() == 1
                        && expr.divs.is_empty()
                        && expr.constant == 0
                        && expr.terms.values().all(|c| *c == 1))
                {
                    write!(f, "{expr} % {modulus} == {remainder}")
                } else {
                    write!(f, "({expr}) % {modulus} == {remainder}")
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "**",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Rsqrt,
    Sqrt,
    Exp,
    Sin,
    Cos,
    Pow,
    /// Explicit conversions; never counted as arithmetic.
    CastF32,
    CastF64,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "rsqrt" => Func::Rsqrt,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "pow" => Func::Pow,
            "f32" => Func::CastF32,
            "f64" => Func::CastF64,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Rsqrt => "rsqrt",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Pow => "pow",
            Func::CastF32 => "f32",
            Func::CastF64 => "f64",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Pow => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArrayAccess {
    pub array: String,
    pub index: Vec<Affine>,
}

impl fmt::Display for ArrayAccess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let idx: Vec<String> = self.index.iter().map(|a| a.to_string()).collect();
        write!(f, "{}[{}]", self.array, idx.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// Numeric literal; `int` records whether it was written without a
    /// fractional part or exponent.
    Lit {
        value: f64,
        int: bool,
    },
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
    Access(ArrayAccess),
}

impl Expr {
    /// Children in evaluation (and pre-order numbering) order.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Lit { .. } | Expr::Var(_) | Expr::Access(_) => Vec::new(),
            Expr::Neg(e) => vec![e],
            Expr::Bin(_, a, b) => vec![a, b],
            Expr::Call(_, args) => args.iter().collect(),
        }
    }

    /// Visits nodes in pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    pub fn accesses(&self) -> Vec<&ArrayAccess> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Access(a) = e {
                out.push(a);
            }
        });
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loop {
    pub var: String,
    pub lower: Affine,
    /// Exclusive.
    pub upper: Affine,
    pub body: Vec<Stmt>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Guard {
    pub conds: Vec<Cmp>,
    pub body: Vec<Stmt>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assign {
    pub lhs: ArrayAccess,
    pub rhs: Expr,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Loop(Loop),
    Guard(Guard),
    Assign(Assign),
    Barrier { line: usize },
}

impl Stmt {
    pub fn line(&self) -> usize {
        match self {
            Stmt::Loop(l) => l.line,
            Stmt::Guard(g) => g.line,
            Stmt::Assign(a) => a.line,
            Stmt::Barrier { line } => *line,
        }
    }
}

/// An assignment or barrier together with everything enclosing it.
#[derive(Debug, Clone)]
pub struct Leaf<'a> {
    /// Position among all leaves in program order.
    pub ordinal: usize,
    pub stmt: &'a Stmt,
    /// Enclosing loops, outermost first.
    pub loops: Vec<&'a Loop>,
    /// Enclosing guard conditions, outermost first.
    pub guards: Vec<&'a Cmp>,
}

impl<'a> Leaf<'a> {
    pub fn as_assign(&self) -> Option<&'a Assign> {
        match self.stmt {
            Stmt::Assign(a) => Some(a),
            _ => None,
        }
    }

    pub fn is_barrier(&self) -> bool {
        matches!(self.stmt, Stmt::Barrier { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelIR {
    pub name: String,
    pub params: Vec<ParamDecl>,
    pub consts: Vec<ConstDecl>,
    pub assumptions: Vec<Assumption>,
    pub arrays: Vec<ArrayDecl>,
    pub axes: Vec<AxisDecl>,
    pub body: Vec<Stmt>,
}

impl KernelIR {
    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn is_param(&self, name: &str) -> bool {
        self.params.iter().any(|p| p.name == name)
    }

    pub fn array(&self, name: &str) -> Option<&ArrayDecl> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn axis(&self, name: &str) -> Option<&AxisDecl> {
        self.axes.iter().find(|a| a.name == name)
    }

    /// Group axes ordered by axis index.
    pub fn group_axes(&self) -> Vec<&AxisDecl> {
        let mut v: Vec<&AxisDecl> = self
            .axes
            .iter()
            .filter(|a| matches!(a.role, AxisRole::Group(_)))
            .collect();
        v.sort_by_key(|a| a.role);
        v
    }

    /// Local axes ordered by axis index.
    pub fn local_axes(&self) -> Vec<&AxisDecl> {
        let mut v: Vec<&AxisDecl> = self
            .axes
            .iter()
            .filter(|a| matches!(a.role, AxisRole::Local(_)))
            .collect();
        v.sort_by_key(|a| a.role);
        v
    }

    /// The SIMD-lane axis, `local(0)`.
    pub fn lane_axis(&self) -> Option<&AxisDecl> {
        self.axes.iter().find(|a| a.role == AxisRole::Local(0))
    }

    /// Product of the local extents, if all are constant.
    pub fn group_size(&self) -> Option<i64> {
        self.local_axes()
            .iter()
            .map(|a| a.extent.as_constant())
            .product::<Option<i64>>()
    }

    pub fn leaves(&self) -> Vec<Leaf<'_>> {
        fn go<'a>(
            body: &'a [Stmt],
            loops: &mut Vec<&'a Loop>,
            guards: &mut Vec<&'a Cmp>,
            out: &mut Vec<Leaf<'a>>,
        ) {
            for s in body {
                match s {
                    Stmt::Loop(l) => {
                        loops.push(l);
                        go(&l.body, loops, guards, out);
                        loops.pop();
                    }
                    Stmt::Guard(g) => {
                        let n = guards.len();
                        guards.extend(g.conds.iter());
                        go(&g.body, loops, guards, out);
                        guards.truncate(n);
                    }
                    Stmt::Assign(_) | Stmt::Barrier { .. } => out.push(Leaf {
                        ordinal: out.len(),
                        stmt: s,
                        loops: loops.clone(),
                        guards: guards.clone(),
                    }),
                }
            }
        }
        let mut out = Vec::new();
        go(&self.body, &mut Vec::new(), &mut Vec::new(), &mut out);
        out
    }

    pub fn count_barriers(&self) -> usize {
        self.leaves().iter().filter(|l| l.is_barrier()).count()
    }

    /// Every global-array access as `(leaf ordinal, access, is_store)`.
    pub fn accesses_to(&self, array: &str) -> Vec<(usize, &ArrayAccess, bool)> {
        let mut out = Vec::new();
        for leaf in self.leaves() {
            if let Some(a) = leaf.as_assign() {
                for acc in a.rhs.accesses() {
                    if acc.array == array {
                        out.push((leaf.ordinal, acc, false));
                    }
                }
                if a.lhs.array == array {
                    out.push((leaf.ordinal, &a.lhs, true));
                }
            }
        }
        out
    }
}
