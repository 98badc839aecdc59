use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use super::{Affine, AxisRole, Expr, Intent, KernelIR, Space, Stmt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagCode {
    DuplicateIdent,
    UndeclaredIdent,
    OutOfScope,
    RankMismatch,
    WriteReadonly,
    LocalShapeParam,
    AxisLayout,
    LocalExtent,
    AssumeFalse,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::DuplicateIdent => "E_DUPLICATE_IDENT",
            DiagCode::UndeclaredIdent => "E_UNDECLARED_IDENT",
            DiagCode::OutOfScope => "E_OUT_OF_SCOPE",
            DiagCode::RankMismatch => "E_RANK_MISMATCH",
            DiagCode::WriteReadonly => "E_WRITE_READONLY",
            DiagCode::LocalShapeParam => "E_LOCAL_SHAPE_PARAM",
            DiagCode::AxisLayout => "E_AXIS_LAYOUT",
            DiagCode::LocalExtent => "E_LOCAL_EXTENT",
            DiagCode::AssumeFalse => "E_ASSUME_FALSE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: line {}: {}",
            self.code.as_str(),
            self.line,
            self.message
        )
    }
}

/// Structural checks; an empty result means the kernel is well formed.
pub fn validate(k: &KernelIR) -> Vec<Diagnostic> {
    let mut v = Validator {
        k,
        diags: Vec::new(),
        all_loop_vars: HashSet::new(),
    };
    v.run();
    v.diags
}

struct Validator<'a> {
    k: &'a KernelIR,
    diags: Vec<Diagnostic>,
    all_loop_vars: HashSet<&'a str>,
}

impl<'a> Validator<'a> {
    fn push(&mut self, code: DiagCode, line: usize, message: String) {
        self.diags.push(Diagnostic {
            code,
            line,
            message,
        });
    }

    fn run(&mut self) {
        let k = self.k;
        collect_loop_vars(&k.body, &mut self.all_loop_vars);

        let mut seen: HashMap<&str, usize> = HashMap::new();
        let decls = k
            .params
            .iter()
            .map(|p| (p.name.as_str(), p.line))
            .chain(k.consts.iter().map(|c| (c.name.as_str(), c.line)))
            .chain(k.arrays.iter().map(|a| (a.name.as_str(), a.line)))
            .chain(k.axes.iter().map(|a| (a.name.as_str(), a.line)));
        for (name, line) in decls {
            if let Some(first) = seen.insert(name, line) {
                self.push(
                    DiagCode::DuplicateIdent,
                    line,
                    format!("`{name}` is already declared on line {first}"),
                );
            }
        }

        let params: BTreeSet<&str> = k.param_names().collect();
        for a in &k.assumptions {
            let line = k.params.first().map(|p| p.line).unwrap_or(1);
            let vars = a.vars();
            for name in &vars {
                if !params.contains(name.as_str()) {
                    self.unknown_or_scope(name, line, "assumptions may only mention params");
                }
            }
            if vars.is_empty() && a.holds(&|_| None) == Some(false) {
                self.push(
                    DiagCode::AssumeFalse,
                    line,
                    format!("assumption `{a}` is false"),
                );
            }
        }

        for arr in &k.arrays {
            for dim in &arr.shape {
                match arr.space {
                    Space::Global => self.check_affine(
                        dim,
                        &params,
                        arr.line,
                        "array shapes may only mention params",
                    ),
                    Space::Local | Space::Private => {
                        if !dim.is_constant() {
                            self.push(
                                DiagCode::LocalShapeParam,
                                arr.line,
                                format!(
                                    "{} array `{}` has non-constant extent `{dim}`",
                                    space_name(arr.space),
                                    arr.name
                                ),
                            );
                        }
                    }
                }
            }
        }

        self.check_axes(&params);

        let mut scope: Vec<&str> = params
            .iter()
            .copied()
            .chain(k.axes.iter().map(|a| a.name.as_str()))
            .collect();
        self.check_body(&k.body, &mut scope);
    }

    fn check_axes(&mut self, params: &BTreeSet<&str>) {
        let mut seen_roles: HashMap<AxisRole, usize> = HashMap::new();
        let (mut groups, mut locals) = (0, 0);
        for ax in &self.k.axes {
            let idx = match ax.role {
                AxisRole::Group(i) => {
                    groups += 1;
                    i
                }
                AxisRole::Local(i) => {
                    locals += 1;
                    i
                }
            };
            if idx > 2 {
                self.push(
                    DiagCode::AxisLayout,
                    ax.line,
                    format!("axis index {idx} of `{}` exceeds 2", ax.name),
                );
            }
            if let Some(first) = seen_roles.insert(ax.role, ax.line) {
                self.push(
                    DiagCode::AxisLayout,
                    ax.line,
                    format!("axis role of `{}` already used on line {first}", ax.name),
                );
            }
            match ax.role {
                AxisRole::Group(_) => self.check_affine(
                    &ax.extent,
                    params,
                    ax.line,
                    "group extents may only mention params",
                ),
                AxisRole::Local(_) => match ax.extent.as_constant() {
                    Some(e) if e >= 1 => {}
                    _ => self.push(
                        DiagCode::LocalExtent,
                        ax.line,
                        format!(
                            "local axis `{}` needs a positive integer extent, got `{}`",
                            ax.name, ax.extent
                        ),
                    ),
                },
            }
        }
        if groups > 3 || locals > 3 {
            self.push(
                DiagCode::AxisLayout,
                1,
                "at most 3 group and 3 local axes are allowed".into(),
            );
        }
        if locals > 0 && self.k.lane_axis().is_none() {
            let line = self.k.local_axes()[0].line;
            self.push(
                DiagCode::AxisLayout,
                line,
                "local axes are declared but `local(0)` is missing".into(),
            );
        }
    }

    fn unknown_or_scope(&mut self, name: &str, line: usize, context: &str) {
        let declared = self.k.is_param(name)
            || self.k.axis(name).is_some()
            || self.k.array(name).is_some()
            || self.all_loop_vars.contains(name);
        if declared {
            self.push(
                DiagCode::OutOfScope,
                line,
                format!("`{name}` is not in scope here ({context})"),
            );
        } else {
            self.push(
                DiagCode::UndeclaredIdent,
                line,
                format!("`{name}` is not declared"),
            );
        }
    }

    fn check_affine<'s>(
        &mut self,
        e: &Affine,
        scope: impl IntoIterator<Item = &'s &'s str> + Clone,
        line: usize,
        context: &str,
    ) {
        for name in e.vars() {
            if !scope.clone().into_iter().any(|s| *s == name) {
                self.unknown_or_scope(&name, line, context);
            }
        }
    }

    fn check_body(&mut self, body: &'a [Stmt], scope: &mut Vec<&'a str>) {
        for s in body {
            match s {
                Stmt::Loop(l) => {
                    self.check_affine(&l.lower, scope.iter(), l.line, "loop bounds");
                    self.check_affine(&l.upper, scope.iter(), l.line, "loop bounds");
                    let clash = scope.contains(&l.var.as_str())
                        || self.k.array(&l.var).is_some()
                        || self.k.consts.iter().any(|c| c.name == l.var);
                    if clash {
                        self.push(
                            DiagCode::DuplicateIdent,
                            l.line,
                            format!("loop variable `{}` shadows an existing name", l.var),
                        );
                    }
                    scope.push(&l.var);
                    self.check_body(&l.body, scope);
                    scope.pop();
                }
                Stmt::Guard(g) => {
                    for c in &g.conds {
                        self.check_affine(&c.lhs, scope.iter(), g.line, "guard");
                        self.check_affine(&c.rhs, scope.iter(), g.line, "guard");
                    }
                    self.check_body(&g.body, scope);
                }
                Stmt::Assign(a) => {
                    self.check_access(&a.lhs, scope, a.line);
                    if let Some(arr) = self.k.array(&a.lhs.array) {
                        if arr.intent == Intent::In {
                            self.push(
                                DiagCode::WriteReadonly,
                                a.line,
                                format!(
                                    "array `{}` is declared `in` and cannot be written",
                                    arr.name
                                ),
                            );
                        }
                    }
                    let mut vars = Vec::new();
                    a.rhs.walk(&mut |e| match e {
                        Expr::Access(acc) => vars.push(Err(acc)),
                        Expr::Var(v) => vars.push(Ok(v)),
                        _ => {}
                    });
                    for item in vars {
                        match item {
                            Err(acc) => self.check_access(acc, scope, a.line),
                            Ok(v) => {
                                if !scope.contains(&v.as_str()) {
                                    self.unknown_or_scope(v, a.line, "expression");
                                }
                            }
                        }
                    }
                }
                Stmt::Barrier { .. } => {}
            }
        }
    }

    fn check_access(&mut self, acc: &super::ArrayAccess, scope: &[&str], line: usize) {
        match self.k.array(&acc.array) {
            None => self.push(
                DiagCode::UndeclaredIdent,
                line,
                format!("array `{}` is not declared", acc.array),
            ),
            Some(arr) if arr.shape.len() != acc.index.len() => self.push(
                DiagCode::RankMismatch,
                line,
                format!(
                    "`{}` has rank {} but is indexed with {} subscript(s)",
                    acc.array,
                    arr.shape.len(),
                    acc.index.len()
                ),
            ),
            Some(_) => {}
        }
        for idx in &acc.index {
            self.check_affine(idx, scope.iter(), line, "array index");
        }
    }
}

fn space_name(s: Space) -> &'static str {
    match s {
        Space::Global => "global",
        Space::Local => "local",
        Space::Private => "private",
    }
}

fn collect_loop_vars<'a>(body: &'a [Stmt], out: &mut HashSet<&'a str>) {
    for s in body {
        match s {
            Stmt::Loop(l) => {
                out.insert(&l.var);
                collect_loop_vars(&l.body, out);
            }
            Stmt::Guard(g) => collect_loop_vars(&g.body, out),
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_unvalidated;

    const HEAD: &str = "kernel k\nparam n\nassume n >= 1\narray a : f32[n] global row_major in\narray out : f32[n] global row_major out\naxis g0 = group(0) extent n\naxis l0 = local(0) extent 1\n";

    fn codes(extra: &str) -> Vec<&'static str> {
        let k = parse_unvalidated(&format!("{HEAD}{extra}"), &[]).unwrap();
        validate(&k).iter().map(|d| d.code.as_str()).collect()
    }

    #[test]
    fn valid_kernel_has_no_diagnostics() {
        assert!(codes("out[g0] = a[g0]\n").is_empty());
    }

    #[test]
    fn every_code_has_a_fixture() {
        assert_eq!(
            codes("array a : f32[n] global row_major in\n"),
            ["E_DUPLICATE_IDENT"]
        );
        assert_eq!(
            codes("loop g0 = 0 .. n\nout[g0] = a[g0]\nend\n"),
            ["E_DUPLICATE_IDENT"]
        );
        assert_eq!(codes("out[g0] = b[g0]\n"), ["E_UNDECLARED_IDENT"]);
        assert_eq!(codes("out[q] = a[g0]\n"), ["E_UNDECLARED_IDENT"]);
        assert_eq!(
            codes("loop i = 0 .. n\nend\nout[i] = a[g0]\n"),
            ["E_OUT_OF_SCOPE"]
        );
        assert_eq!(codes("out[g0, 0] = a[g0]\n"), ["E_RANK_MISMATCH"]);
        assert_eq!(codes("a[g0] = out[g0]\n"), ["E_WRITE_READONLY"]);
        assert_eq!(
            codes("array t : f32[n] local row_major temp\n"),
            ["E_LOCAL_SHAPE_PARAM"]
        );
        assert_eq!(codes("axis l9 = local(0) extent 4\n"), ["E_AXIS_LAYOUT"]);
        assert_eq!(codes("axis l1 = local(1) extent 0\n"), ["E_LOCAL_EXTENT"]);
        assert_eq!(codes("assume 16 == 32\n"), ["E_ASSUME_FALSE"]);
    }

    #[test]
    fn sibling_loops_may_reuse_a_name() {
        assert!(codes(
            "loop i = 0 .. n\nout[i] = a[i]\nend\nloop i = 0 .. n\nout[i] = a[i]\nend\n"
        )
        .is_empty());
    }

    #[test]
    fn lane_axis_required_when_local_axes_exist() {
        let src = "kernel k\naxis l1 = local(1) extent 4\n";
        let k = parse_unvalidated(src, &[]).unwrap();
        let d = validate(&k);
        assert_eq!(d[0].code, DiagCode::AxisLayout);
    }
}
