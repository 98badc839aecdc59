//! Line-oriented kernel source parser.
//!
//! ```text
//! kernel <name>
//! param <id> [, <id>...]
//! const <id> = <int>
//! assume <cmp> [and <cmp>...]
//! array <id> : <dtype>[<affine>,...] <global|local|private> <row_major|column_major> <in|out|inout|temp>
//! axis <id> = group(<k>) extent <affine> | local(<k>) extent <int>
//! loop <id> = <affine> .. <affine>
//! guard <cmp> [and <cmp>...]
//! <array>[<affine>,...] = <expr>
//! barrier
//! end
//! ```

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use super::{
    Affine, ArrayAccess, ArrayDecl, Assign, Assumption, AxisDecl, AxisRole, BinOp, Cmp, CmpOp,
    ConstDecl, Dtype, Expr, Func, Guard, Intent, KernelIR, Layout, Loop, ParamDecl, Space, Stmt,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    NonAffine,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let code = match self.kind {
            ParseErrorKind::Syntax => "E_SYNTAX",
            ParseErrorKind::NonAffine => "E_NON_AFFINE",
        };
        write!(f, "{code}: {}:{}: {}", self.line, self.col, self.message)
    }
}

/// Parses and validates a kernel.
pub fn parse_kernel(source: &str) -> Result<KernelIR> {
    parse_kernel_with(source, &[])
}

/// Parses and validates a kernel, replacing the values of named `const`
/// declarations.
pub fn parse_kernel_with(source: &str, overrides: &[(String, i64)]) -> Result<KernelIR> {
    let k = parse_unvalidated(source, overrides)?;
    let diagnostics = super::validate(&k);
    if diagnostics.is_empty() {
        Ok(k)
    } else {
        Err(Error::Invalid {
            kernel: k.name.clone(),
            diagnostics,
        })
    }
}

/// Parses without running structural validation.
pub fn parse_unvalidated(
    source: &str,
    overrides: &[(String, i64)],
) -> Result<KernelIR, ParseError> {
    let mut p = Parser {
        overrides: overrides.iter().cloned().collect(),
        consts: HashMap::new(),
        kernel: KernelIR {
            name: String::new(),
            params: Vec::new(),
            consts: Vec::new(),
            assumptions: Vec::new(),
            arrays: Vec::new(),
            axes: Vec::new(),
            body: Vec::new(),
        },
        stack: Vec::new(),
        seen_kernel: false,
    };
    for (i, raw) in source.lines().enumerate() {
        let line_no = i + 1;
        let text = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        if text.trim().is_empty() {
            continue;
        }
        let toks = lex(text, line_no)?;
        p.line(Cursor::new(toks, line_no, text.len() + 1))?;
    }
    if let Some(open) = p.stack.last() {
        return Err(ParseError {
            kind: ParseErrorKind::Syntax,
            line: open.line(),
            col: 1,
            message: "block is never closed with `end`".into(),
        });
    }
    if !p.seen_kernel {
        return Err(ParseError {
            kind: ParseErrorKind::Syntax,
            line: 1,
            col: 1,
            message: "missing `kernel <name>` header".into(),
        });
    }
    Ok(p.kernel)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Sym(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::Float(x) => write!(f, "`{x}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
        }
    }
}

const SYMBOLS: [&str; 20] = [
    "**", "..", "==", ">=", "<=", "+", "-", "*", "/", "%", "(", ")", "[", "]", ",", "=", ">", "<",
    ":", ";",
];

fn lex(text: &str, line: usize) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
            {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), col));
            continue;
        }
        if c.is_ascii_digit()
            || (c == '.' && i + 1 < bytes.len() && (bytes[i + 1] as char).is_ascii_digit())
        {
            let start = i;
            let mut is_float = false;
            while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' && !(i + 1 < bytes.len() && bytes[i + 1] == b'.')
            {
                is_float = true;
                i += 1;
                while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    is_float = true;
                    i = j;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s = &text[start..i];
            let tok = if is_float {
                Tok::Float(
                    s.parse()
                        .map_err(|_| syntax(line, col, format!("bad number `{s}`")))?,
                )
            } else {
                Tok::Int(
                    s.parse()
                        .map_err(|_| syntax(line, col, format!("integer `{s}` out of range")))?,
                )
            };
            out.push((tok, col));
            continue;
        }
        match SYMBOLS.iter().find(|s| text[i..].starts_with(**s)) {
            Some(s) => {
                out.push((Tok::Sym(s), col));
                i += s.len();
            }
            None => return Err(syntax(line, col, format!("unexpected character `{c}`"))),
        }
    }
    Ok(out)
}

fn syntax(line: usize, col: usize, message: String) -> ParseError {
    ParseError {
        kind: ParseErrorKind::Syntax,
        line,
        col,
        message,
    }
}

struct Cursor {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    eol_col: usize,
}

impl Cursor {
    fn new(toks: Vec<(Tok, usize)>, line: usize, eol_col: usize) -> Self {
        Cursor {
            toks,
            pos: 0,
            line,
            eol_col,
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|(_, c)| *c)
            .unwrap_or(self.eol_col)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        syntax(self.line, self.col(), message.into())
    }

    fn non_affine(&self, col: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            kind: ParseErrorKind::NonAffine,
            line: self.line,
            col,
            message: message.into(),
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(t)) if *t == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(t)) if t == kw)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{s}`{}", self.found())))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_kw(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{kw}`{}", self.found())))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err(format!("expected identifier{}", self.found()))),
        }
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        let neg = self.eat_sym("-");
        match self.peek() {
            Some(Tok::Int(i)) => {
                let i = *i;
                self.pos += 1;
                Ok(if neg { -i } else { i })
            }
            _ => Err(self.err(format!("expected integer{}", self.found()))),
        }
    }

    fn found(&self) -> String {
        match self.peek() {
            Some(t) => format!(", found {t}"),
            None => ", found end of line".into(),
        }
    }

    fn done(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.err(format!("unexpected {t} at end of line"))),
        }
    }
}

enum Frame {
    Loop(Loop),
    Guard(Guard),
}

impl Frame {
    fn line(&self) -> usize {
        match self {
            Frame::Loop(l) => l.line,
            Frame::Guard(g) => g.line,
        }
    }

    fn body(&mut self) -> &mut Vec<Stmt> {
        match self {
            Frame::Loop(l) => &mut l.body,
            Frame::Guard(g) => &mut g.body,
        }
    }
}

struct Parser {
    overrides: HashMap<String, i64>,
    consts: HashMap<String, i64>,
    kernel: KernelIR,
    stack: Vec<Frame>,
    seen_kernel: bool,
}

const KEYWORDS: [&str; 10] = [
    "kernel", "param", "const", "assume", "array", "axis", "loop", "guard", "barrier", "end",
];

impl Parser {
    fn push_stmt(&mut self, s: Stmt) {
        match self.stack.last_mut() {
            Some(f) => f.body().push(s),
            None => self.kernel.body.push(s),
        }
    }

    fn header_only(&self, c: &Cursor, what: &str) -> Result<(), ParseError> {
        if self.stack.is_empty() {
            Ok(())
        } else {
            Err(syntax(
                c.line,
                1,
                format!("`{what}` is not allowed inside a loop or guard"),
            ))
        }
    }

    fn line(&mut self, mut c: Cursor) -> Result<(), ParseError> {
        let line = c.line;
        let kw = match c.peek() {
            Some(Tok::Ident(s))
                if KEYWORDS.contains(&s.as_str())
                    && !matches!(c.peek_at(1), Some(Tok::Sym("["))) =>
            {
                s.clone()
            }
            _ => return self.assignment(c),
        };
        c.next();
        if kw != "kernel" && !self.seen_kernel {
            return Err(syntax(
                line,
                1,
                "source must start with `kernel <name>`".into(),
            ));
        }
        match kw.as_str() {
            "kernel" => {
                if self.seen_kernel {
                    return Err(syntax(line, 1, "duplicate `kernel` header".into()));
                }
                self.kernel.name = c.ident()?;
                self.seen_kernel = true;
            }
            "param" => {
                self.header_only(&c, "param")?;
                loop {
                    let name = c.ident()?;
                    self.kernel.params.push(ParamDecl { name, line });
                    if !c.eat_sym(",") {
                        break;
                    }
                }
            }
            "const" => {
                self.header_only(&c, "const")?;
                let name = c.ident()?;
                c.expect_sym("=")?;
                let col = c.col();
                let declared = self.affine(&mut c)?;
                let value = declared
                    .as_constant()
                    .ok_or_else(|| syntax(line, col, "const value must be an integer".into()))?;
                let value = self.overrides.get(&name).copied().unwrap_or(value);
                self.consts.insert(name.clone(), value);
                self.kernel.consts.push(ConstDecl { name, value, line });
            }
            "assume" => {
                self.header_only(&c, "assume")?;
                loop {
                    let a = self.assumption(&mut c)?;
                    self.kernel.assumptions.push(a);
                    if !c.is_kw("and") {
                        break;
                    }
                    c.next();
                }
            }
            "array" => {
                self.header_only(&c, "array")?;
                let decl = self.array_decl(&mut c, line)?;
                self.kernel.arrays.push(decl);
            }
            "axis" => {
                self.header_only(&c, "axis")?;
                let name = c.ident()?;
                c.expect_sym("=")?;
                let role_kw = c.ident()?;
                c.expect_sym("(")?;
                let idx_col = c.col();
                let idx = c.int()?;
                if !(0..=255).contains(&idx) {
                    return Err(syntax(line, idx_col, "axis index out of range".into()));
                }
                c.expect_sym(")")?;
                let role = match role_kw.as_str() {
                    "group" => AxisRole::Group(idx as u8),
                    "local" => AxisRole::Local(idx as u8),
                    other => return Err(syntax(line, 1, format!("unknown axis role `{other}`"))),
                };
                c.expect_kw("extent")?;
                let extent = self.affine(&mut c)?;
                self.kernel.axes.push(AxisDecl {
                    name,
                    role,
                    extent,
                    line,
                });
            }
            "loop" => {
                let var = c.ident()?;
                c.expect_sym("=")?;
                let lower = self.affine(&mut c)?;
                c.expect_sym("..")?;
                let upper = self.affine(&mut c)?;
                c.done()?;
                self.stack.push(Frame::Loop(Loop {
                    var,
                    lower,
                    upper,
                    body: Vec::new(),
                    line,
                }));
                return Ok(());
            }
            "guard" => {
                let mut conds = Vec::new();
                loop {
                    conds.push(self.cmp(&mut c)?);
                    if !c.is_kw("and") {
                        break;
                    }
                    c.next();
                }
                c.done()?;
                self.stack.push(Frame::Guard(Guard {
                    conds,
                    body: Vec::new(),
                    line,
                }));
                return Ok(());
            }
            "barrier" => self.push_stmt(Stmt::Barrier { line }),
            "end" => {
                let frame = self
                    .stack
                    .pop()
                    .ok_or_else(|| syntax(line, 1, "`end` without an open loop or guard".into()))?;
                let stmt = match frame {
                    Frame::Loop(l) => Stmt::Loop(l),
                    Frame::Guard(g) => Stmt::Guard(g),
                };
                self.push_stmt(stmt);
            }
            _ => unreachable!(),
        }
        c.done()
    }

    fn assignment(&mut self, mut c: Cursor) -> Result<(), ParseError> {
        if !self.seen_kernel {
            return Err(syntax(
                c.line,
                1,
                "source must start with `kernel <name>`".into(),
            ));
        }
        let line = c.line;
        let array = c.ident()?;
        if !c.is_sym("[") {
            return Err(c.err(format!("expected `[` after `{array}`{}", c.found())));
        }
        let index = self.index_list(&mut c)?;
        c.expect_sym("=")?;
        let rhs = self.expr(&mut c)?;
        c.done()?;
        self.push_stmt(Stmt::Assign(Assign {
            lhs: ArrayAccess { array, index },
            rhs,
            line,
        }));
        Ok(())
    }

    fn array_decl(&mut self, c: &mut Cursor, line: usize) -> Result<ArrayDecl, ParseError> {
        let name = c.ident()?;
        c.expect_sym(":")?;
        let dtype = match c.ident()?.as_str() {
            "f32" => Dtype::F32,
            "f64" => Dtype::F64,
            "i32" => Dtype::I32,
            other => return Err(syntax(line, 1, format!("unknown dtype `{other}`"))),
        };
        let shape = self.index_list(c)?;
        let space = match c.ident()?.as_str() {
            "global" => Space::Global,
            "local" => Space::Local,
            "private" => Space::Private,
            other => return Err(syntax(line, 1, format!("unknown memory space `{other}`"))),
        };
        let layout = match c.ident()?.as_str() {
            "row_major" => Layout::RowMajor,
            "column_major" => Layout::ColumnMajor,
            other => return Err(syntax(line, 1, format!("unknown layout `{other}`"))),
        };
        let intent = match c.ident()?.as_str() {
            "in" => Intent::In,
            "out" => Intent::Out,
            "inout" => Intent::InOut,
            "temp" => Intent::Temp,
            other => return Err(syntax(line, 1, format!("unknown intent `{other}`"))),
        };
        Ok(ArrayDecl {
            name,
            dtype,
            shape,
            space,
            layout,
            intent,
            line,
        })
    }

    fn index_list(&mut self, c: &mut Cursor) -> Result<Vec<Affine>, ParseError> {
        c.expect_sym("[")?;
        let mut out = Vec::new();
        loop {
            out.push(self.affine(c)?);
            if c.eat_sym("]") {
                return Ok(out);
            }
            c.expect_sym(",")?;
        }
    }

    fn assumption(&mut self, c: &mut Cursor) -> Result<Assumption, ParseError> {
        let lhs = self.affine(c)?;
        if c.eat_sym("%") {
            let col = c.col();
            let modulus = self.affine(c)?;
            let modulus = modulus
                .as_constant()
                .filter(|m| *m > 0)
                .ok_or_else(|| syntax(c.line, col, "modulus must be a positive integer".into()))?;
            c.expect_sym("==")?;
            let col = c.col();
            let remainder = self
                .affine(c)?
                .as_constant()
                .ok_or_else(|| syntax(c.line, col, "remainder must be an integer".into()))?;
            return Ok(Assumption::Mod {
                expr: lhs,
                modulus,
                remainder: remainder.rem_euclid(modulus),
            });
        }
        let op = self.cmp_op(c)?;
        let rhs = self.affine(c)?;
        Ok(Assumption::Cmp(Cmp { lhs, op, rhs }))
    }

    fn cmp(&mut self, c: &mut Cursor) -> Result<Cmp, ParseError> {
        let lhs = self.affine(c)?;
        let op = self.cmp_op(c)?;
        let rhs = self.affine(c)?;
        Ok(Cmp { lhs, op, rhs })
    }

    fn cmp_op(&mut self, c: &mut Cursor) -> Result<CmpOp, ParseError> {
        let op = match c.peek() {
            Some(Tok::Sym(">=")) => CmpOp::Ge,
            Some(Tok::Sym(">")) => CmpOp::Gt,
            Some(Tok::Sym("<=")) => CmpOp::Le,
            Some(Tok::Sym("<")) => CmpOp::Lt,
            Some(Tok::Sym("==")) => CmpOp::Eq,
            _ => return Err(c.err(format!("expected comparison operator{}", c.found()))),
        };
        c.next();
        Ok(op)
    }

    // affine := term (('+'|'-') term)*
    fn affine(&mut self, c: &mut Cursor) -> Result<Affine, ParseError> {
        let mut acc = self.affine_term(c)?;
        loop {
            if c.eat_sym("+") {
                acc = acc.add(&self.affine_term(c)?);
            } else if c.eat_sym("-") {
                acc = acc.sub(&self.affine_term(c)?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn affine_term(&mut self, c: &mut Cursor) -> Result<Affine, ParseError> {
        let mut acc = self.affine_unary(c)?;
        loop {
            let col = c.col();
            if c.eat_sym("*") {
                let rhs = self.affine_unary(c)?;
                acc = match (acc.as_constant(), rhs.as_constant()) {
                    (Some(k), _) => rhs.scale(k),
                    (_, Some(k)) => acc.scale(k),
                    _ => {
                        return Err(
                            c.non_affine(col, "product of two non-constant terms is not affine")
                        )
                    }
                };
            } else if c.eat_sym("/") {
                let rhs = self.affine_unary(c)?;
                match rhs.as_constant() {
                    Some(d) if d > 0 => acc = acc.floor_div(d),
                    Some(_) => {
                        return Err(syntax(
                            c.line,
                            col,
                            "division by a non-positive constant".into(),
                        ))
                    }
                    None => {
                        return Err(c.non_affine(col, "division by a non-constant is not affine"))
                    }
                }
            } else if c.is_sym("**") {
                return Err(c.non_affine(col, "exponentiation is not affine"));
            } else {
                return Ok(acc);
            }
        }
    }

    fn affine_unary(&mut self, c: &mut Cursor) -> Result<Affine, ParseError> {
        if c.eat_sym("-") {
            return Ok(self.affine_unary(c)?.scale(-1));
        }
        let col = c.col();
        match c.next() {
            Some(Tok::Int(i)) => Ok(Affine::constant(i)),
            Some(Tok::Ident(name)) => {
                if c.is_sym("(") || c.is_sym("[") {
                    return Err(c.non_affine(
                        col,
                        format!(
                            "`{name}(...)`/`{name}[...]` cannot appear in an affine expression"
                        ),
                    ));
                }
                Ok(match self.consts.get(&name) {
                    Some(v) => Affine::constant(*v),
                    None => Affine::var(&name),
                })
            }
            Some(Tok::Sym("(")) => {
                let inner = self.affine(c)?;
                c.expect_sym(")")?;
                Ok(inner)
            }
            Some(Tok::Float(_)) => {
                Err(c.non_affine(col, "floating-point literal in an affine expression"))
            }
            Some(t) => Err(syntax(
                c.line,
                col,
                format!("unexpected {t} in affine expression"),
            )),
            None => Err(syntax(
                c.line,
                col,
                "unexpected end of line in affine expression".into(),
            )),
        }
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self, c: &mut Cursor) -> Result<Expr, ParseError> {
        let mut acc = self.term(c)?;
        loop {
            let op = if c.eat_sym("+") {
                BinOp::Add
            } else if c.eat_sym("-") {
                BinOp::Sub
            } else {
                return Ok(acc);
            };
            let rhs = self.term(c)?;
            acc = Expr::Bin(op, Box::new(acc), Box::new(rhs));
        }
    }

    fn term(&mut self, c: &mut Cursor) -> Result<Expr, ParseError> {
        let mut acc = self.unary(c)?;
        loop {
            let op = if c.eat_sym("*") {
                BinOp::Mul
            } else if c.eat_sym("/") {
                BinOp::Div
            } else {
                return Ok(acc);
            };
            let rhs = self.unary(c)?;
            acc = Expr::Bin(op, Box::new(acc), Box::new(rhs));
        }
    }

    fn unary(&mut self, c: &mut Cursor) -> Result<Expr, ParseError> {
        if c.eat_sym("-") {
            return Ok(Expr::Neg(Box::new(self.unary(c)?)));
        }
        let base = self.primary(c)?;
        if c.eat_sym("**") {
            let exp = self.unary(c)?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self, c: &mut Cursor) -> Result<Expr, ParseError> {
        let col = c.col();
        match c.next() {
            Some(Tok::Int(i)) => Ok(Expr::Lit {
                value: i as f64,
                int: true,
            }),
            Some(Tok::Float(x)) => Ok(Expr::Lit {
                value: x,
                int: false,
            }),
            Some(Tok::Sym("(")) => {
                let e = self.expr(c)?;
                c.expect_sym(")")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if c.is_sym("(") {
                    let func = Func::from_name(&name)
                        .ok_or_else(|| syntax(c.line, col, format!("unknown function `{name}`")))?;
                    c.next();
                    let mut args = Vec::new();
                    if !c.eat_sym(")") {
                        loop {
                            args.push(self.expr(c)?);
                            if c.eat_sym(")") {
                                break;
                            }
                            c.expect_sym(",")?;
                        }
                    }
                    if args.len() != func.arity() {
                        return Err(syntax(
                            c.line,
                            col,
                            format!(
                                "`{name}` takes {} argument(s), got {}",
                                func.arity(),
                                args.len()
                            ),
                        ));
                    }
                    Ok(Expr::Call(func, args))
                } else if c.is_sym("[") {
                    let index = self.index_list(c)?;
                    Ok(Expr::Access(ArrayAccess { array: name, index }))
                } else if let Some(v) = self.consts.get(&name) {
                    Ok(Expr::Lit {
                        value: *v as f64,
                        int: true,
                    })
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some(t) => Err(syntax(c.line, col, format!("unexpected {t} in expression"))),
            None => Err(syntax(
                c.line,
                col,
                "unexpected end of line in expression".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const COPY: &str = "\
kernel copy
param n
assume n >= 1 and n % 256 == 0
array a : f32[n] global row_major in
array out : f32[n] global row_major out
axis g0 = group(0) extent n / 256
axis l0 = local(0) extent 256
guard 256*g0 + l0 < n
  out[256*g0 + l0] = a[256*g0 + l0]
end
";

    #[test]
    fn parses_copy_kernel() {
        let k = parse_kernel(COPY).unwrap();
        assert_eq!(k.name, "copy");
        assert_eq!(k.arrays.len(), 2);
        let assigns = k
            .leaves()
            .iter()
            .filter(|l| l.as_assign().is_some())
            .count();
        assert_eq!(assigns, 1);
        assert_eq!(k.assumptions.len(), 2);
    }

    #[test]
    fn non_affine_index_is_rejected() {
        let src = COPY.replace("a[256*g0 + l0]", "a[(256*g0 + l0)*(256*g0 + l0)]");
        let err = parse_unvalidated(&src, &[]).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::NonAffine);
        assert_eq!(err.line, 9);

        let src = "kernel k\nparam n\narray a : f32[n] global row_major in\narray b : f32[n] global row_major out\nloop i = 0 .. n\n b[i] = a[i*i]\nend\n";
        let err = parse_unvalidated(src, &[]).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::NonAffine);
        assert_eq!((err.line, err.col), (6, 12));
    }

    #[test]
    fn syntax_errors_carry_location() {
        let err = parse_unvalidated("kernel k\nloop i = 0 ..\nend\n", &[]).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Syntax);
        assert_eq!(err.line, 2);
        let err = parse_unvalidated("kernel k\nparam n\nloop i = 0 .. n\n", &[]).unwrap_err();
        assert!(err.message.contains("never closed"));
        let err = parse_unvalidated("kernel k\nend\n", &[]).unwrap_err();
        assert!(err.message.contains("without an open"));
        let err = parse_unvalidated("param n\n", &[]).unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn consts_are_substituted_and_overridable() {
        let src = "kernel k\nconst gs0 = 16\nparam n\naxis g0 = group(0) extent n / gs0\naxis l0 = local(0) extent gs0\n";
        let k = parse_unvalidated(src, &[]).unwrap();
        assert_eq!(k.axes[1].extent.as_constant(), Some(16));
        let k = parse_unvalidated(src, &[("gs0".into(), 32)]).unwrap();
        assert_eq!(k.axes[1].extent.as_constant(), Some(32));
        assert_eq!(k.axes[0].extent.to_string(), "(n) / 32");
    }

    #[test]
    fn expression_precedence() {
        let src =
            "kernel k\narray a : f32[4] global row_major inout\na[0] = -a[1]**2 + 3*a[2] / 2.5\n";
        let k = parse_unvalidated(src, &[]).unwrap();
        let Stmt::Assign(asg) = &k.body[0] else {
            panic!()
        };
        let Expr::Bin(BinOp::Add, lhs, rhs) = &asg.rhs else {
            panic!("{:?}", asg.rhs)
        };
        assert!(
            matches!(**lhs, Expr::Neg(ref inner) if matches!(**inner, Expr::Bin(BinOp::Pow, _, _)))
        );
        assert!(matches!(**rhs, Expr::Bin(BinOp::Div, _, _)));
    }

    #[test]
    fn range_after_integer_is_not_a_float() {
        let toks = lex("loop i = 0..n", 1).unwrap();
        assert!(toks.iter().any(|(t, _)| *t == Tok::Sym("..")));
        assert!(toks.iter().any(|(t, _)| *t == Tok::Int(0)));
    }
}
