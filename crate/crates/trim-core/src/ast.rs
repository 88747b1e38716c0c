//! Abstract syntax for the small imperative heap language the trimmer works on.
//!
//! Statements form a binary `Seq` tree rather than a flat block list; the
//! parser always produces right-nested sequences and every transformation in
//! this crate preserves that shape, so statement paths stay stable and a
//! print/parse round trip is the identity on the tree.

use std::collections::BTreeSet;
use std::fmt;

pub type Ident = String;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum CmpOp {
    Eq,
    Lt,
    Gt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
        }
    }

    /// Symbol for the negated comparison, used when printing `!(a = b)` as `a != b`.
    pub fn negated_symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "!=",
            CmpOp::Lt => ">=",
            CmpOp::Gt => "<=",
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Expr {
    Var(Ident),
    Int(i64),
    Bin(ArithOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<Ident>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn bin(op: ArithOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn free_vars(&self, out: &mut BTreeSet<Ident>) {
        match self {
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Int(_) => {}
            Expr::Bin(_, a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Pred {
    Bool(bool),
    Cmp(CmpOp, Expr, Expr),
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
    Not(Box<Pred>),
}

impl Pred {
    pub fn cmp(op: CmpOp, lhs: Expr, rhs: Expr) -> Pred {
        Pred::Cmp(op, lhs, rhs)
    }

    pub fn and(lhs: Pred, rhs: Pred) -> Pred {
        Pred::And(Box::new(lhs), Box::new(rhs))
    }

    pub fn or(lhs: Pred, rhs: Pred) -> Pred {
        Pred::Or(Box::new(lhs), Box::new(rhs))
    }

    pub fn not(p: Pred) -> Pred {
        Pred::Not(Box::new(p))
    }

    /// Logical negation, collapsing double negation so desugared `else`
    /// guards stay readable.
    pub fn negated(&self) -> Pred {
        match self {
            Pred::Bool(b) => Pred::Bool(!b),
            Pred::Not(p) => (**p).clone(),
            other => Pred::not(other.clone()),
        }
    }

    pub fn free_vars(&self, out: &mut BTreeSet<Ident>) {
        match self {
            Pred::Bool(_) => {}
            Pred::Cmp(_, a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
            Pred::And(a, b) | Pred::Or(a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
            Pred::Not(p) => p.free_vars(out),
        }
    }
}

/// One edge in a statement path. Paths address a statement within a
/// procedure body relative to the `Seq`/`NondetIf` spine.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Step {
    SeqL,
    SeqR,
    Then,
    Else,
}

pub type Path = Vec<Step>;

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Stmt {
    Seq(Box<Stmt>, Box<Stmt>),
    /// `dst := src`
    Assign { dst: Ident, src: Expr },
    /// `dst := *src`
    HeapLoad { dst: Ident, src: Ident },
    /// `*dst := src`
    HeapStore { dst: Ident, src: Expr },
    /// `dst := malloc(size)`
    Malloc { dst: Ident, size: Expr },
    /// `dst := call proc(args)`; arguments are always plain variables, the
    /// parser flattens compound arguments through temporaries.
    Call {
        dst: Ident,
        proc: Ident,
        args: Vec<Ident>,
    },
    Assert(Pred),
    Assume(Pred),
    /// `if (*) { .. } else { .. }`
    NondetIf(Box<Stmt>, Box<Stmt>),
    /// `dst := nondet()`
    NondetAssign { dst: Ident },
}

impl Stmt {
    /// Right-folds a statement list into a `Seq` chain. The empty list
    /// becomes the no-op `assume true`.
    pub fn seq(stmts: Vec<Stmt>) -> Stmt {
        let mut it = stmts.into_iter().rev();
        let last = match it.next() {
            Some(s) => s,
            None => Stmt::Assume(Pred::Bool(true)),
        };
        it.fold(last, |acc, s| Stmt::Seq(Box::new(s), Box::new(acc)))
    }

    /// The statements of this sequence in execution order, seen through the
    /// `Seq` spine. A non-`Seq` statement is its own singleton.
    pub fn seq_items(&self) -> Vec<&Stmt> {
        let mut out = Vec::new();
        self.collect_items(&mut out);
        out
    }

    fn collect_items<'a>(&'a self, out: &mut Vec<&'a Stmt>) {
        match self {
            Stmt::Seq(a, b) => {
                a.collect_items(out);
                b.collect_items(out);
            }
            other => out.push(other),
        }
    }

    /// Every leaf statement in the subtree, descending through both `Seq`
    /// spines and branch arms, in textual order.
    pub fn leaves(&self) -> Vec<&Stmt> {
        let mut out = Vec::new();
        fn walk<'a>(s: &'a Stmt, out: &mut Vec<&'a Stmt>) {
            match s {
                Stmt::Seq(a, b) | Stmt::NondetIf(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                leaf => out.push(leaf),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Variables read by this statement alone (not descending into `Seq` or
    /// branch bodies).
    fn reads_here(&self, out: &mut BTreeSet<Ident>) {
        match self {
            Stmt::Seq(..) | Stmt::NondetIf(..) => {}
            Stmt::Assign { src, .. } => src.free_vars(out),
            Stmt::HeapLoad { src, .. } => {
                out.insert(src.clone());
            }
            Stmt::HeapStore { dst, src } => {
                out.insert(dst.clone());
                src.free_vars(out);
            }
            Stmt::Malloc { size, .. } => size.free_vars(out),
            Stmt::Call { args, .. } => {
                for a in args {
                    out.insert(a.clone());
                }
            }
            Stmt::Assert(p) | Stmt::Assume(p) => p.free_vars(out),
            Stmt::NondetAssign { .. } => {}
        }
    }

    /// Collects every identifier that appears anywhere in the statement.
    pub fn idents(&self, out: &mut BTreeSet<Ident>) {
        match self {
            Stmt::Seq(a, b) | Stmt::NondetIf(a, b) => {
                a.idents(out);
                b.idents(out);
            }
            Stmt::Assign { dst, src } => {
                out.insert(dst.clone());
                src.free_vars(out);
            }
            Stmt::HeapLoad { dst, src } => {
                out.insert(dst.clone());
                out.insert(src.clone());
            }
            Stmt::HeapStore { dst, src } => {
                out.insert(dst.clone());
                src.free_vars(out);
            }
            Stmt::Malloc { dst, size } => {
                out.insert(dst.clone());
                size.free_vars(out);
            }
            Stmt::Call { dst, args, .. } => {
                out.insert(dst.clone());
                for a in args {
                    out.insert(a.clone());
                }
            }
            Stmt::Assert(p) | Stmt::Assume(p) => p.free_vars(out),
            Stmt::NondetAssign { dst } => {
                out.insert(dst.clone());
            }
        }
    }

    /// Rebuilds the statement with every `Seq` spine flattened and
    /// right-folded again. Insertions can leave a `Seq` as a left child;
    /// this restores the parser's canonical shape.
    pub fn normalized(&self) -> Stmt {
        let items: Vec<Stmt> = self
            .seq_items()
            .into_iter()
            .map(|s| match s {
                Stmt::NondetIf(t, e) => {
                    Stmt::NondetIf(Box::new(t.normalized()), Box::new(e.normalized()))
                }
                other => other.clone(),
            })
            .collect();
        Stmt::seq(items)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Procedure {
    pub name: Ident,
    pub params: Vec<Ident>,
    pub ret: Ident,
    pub body: Stmt,
}

impl Procedure {
    /// All identifiers appearing in the procedure, signature included.
    pub fn idents(&self, out: &mut BTreeSet<Ident>) {
        out.insert(self.name.clone());
        for p in &self.params {
            out.insert(p.clone());
        }
        out.insert(self.ret.clone());
        self.body.idents(out);
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Program {
    pub procedures: Vec<Procedure>,
    pub entry: Ident,
}

#[derive(thiserror::Error, Clone, PartialEq, Eq, Debug)]
pub enum ValidateError {
    #[error("duplicate procedure `{0}`")]
    DuplicateProcedure(Ident),
    #[error("entry procedure `{0}` is not defined")]
    MissingEntry(Ident),
    #[error("procedure `{proc}`: call to undefined procedure `{callee}`")]
    UnknownCallee { proc: Ident, callee: Ident },
    #[error("procedure `{proc}`: call to `{callee}` passes {got} arguments, expected {want}")]
    ArityMismatch {
        proc: Ident,
        callee: Ident,
        got: usize,
        want: usize,
    },
    #[error("procedure `{proc}`: `{name}` is bound more than once in the signature")]
    DuplicateBinding { proc: Ident, name: Ident },
    #[error("procedure `{proc}`: variable `{var}` may be read before assignment")]
    UseBeforeAssign { proc: Ident, var: Ident },
}

impl Program {
    pub fn procedure(&self, name: &str) -> Option<&Procedure> {
        self.procedures.iter().find(|p| p.name == name)
    }

    pub fn entry_procedure(&self) -> Option<&Procedure> {
        self.procedure(&self.entry)
    }

    pub fn idents(&self) -> BTreeSet<Ident> {
        let mut out = BTreeSet::new();
        for p in &self.procedures {
            p.idents(&mut out);
        }
        out.insert(self.entry.clone());
        out
    }

    /// Re-points the entry procedure, refusing names that do not resolve.
    pub fn set_entry(&mut self, name: impl Into<Ident>) -> Result<(), ValidateError> {
        let name = name.into();
        if self.procedure(&name).is_none() {
            return Err(ValidateError::MissingEntry(name));
        }
        self.entry = name;
        Ok(())
    }

    /// Structural checks plus entry resolution.
    pub fn validate(&self) -> Result<(), Vec<ValidateError>> {
        let mut errs = match self.validate_structure() {
            Ok(()) => Vec::new(),
            Err(e) => e,
        };
        if self.procedure(&self.entry).is_none() {
            errs.push(ValidateError::MissingEntry(self.entry.clone()));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// Structural checks: unique procedure names, resolvable call targets,
    /// matching arities, distinct signature bindings, and definite assignment
    /// (every read is dominated by a write; parameters and the return
    /// variable count as written, the latter because it starts at 0). Entry
    /// resolution is separate so a program can be parsed before its entry
    /// point is chosen.
    pub fn validate_structure(&self) -> Result<(), Vec<ValidateError>> {
        let mut errs = Vec::new();
        let mut seen = BTreeSet::new();
        for p in &self.procedures {
            if !seen.insert(p.name.clone()) {
                errs.push(ValidateError::DuplicateProcedure(p.name.clone()));
            }
        }
        for p in &self.procedures {
            let mut bound = BTreeSet::new();
            for name in p.params.iter().chain(std::iter::once(&p.ret)) {
                if !bound.insert(name.clone()) {
                    errs.push(ValidateError::DuplicateBinding {
                        proc: p.name.clone(),
                        name: name.clone(),
                    });
                }
            }
            let mut assigned: BTreeSet<Ident> = bound;
            self.check_stmt(p, &p.body, &mut assigned, &mut errs);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    fn check_stmt(
        &self,
        proc: &Procedure,
        stmt: &Stmt,
        assigned: &mut BTreeSet<Ident>,
        errs: &mut Vec<ValidateError>,
    ) {
        let mut reads = BTreeSet::new();
        stmt.reads_here(&mut reads);
        for var in reads {
            if !assigned.contains(&var) {
                errs.push(ValidateError::UseBeforeAssign {
                    proc: proc.name.clone(),
                    var,
                });
            }
        }
        match stmt {
            Stmt::Seq(a, b) => {
                self.check_stmt(proc, a, assigned, errs);
                self.check_stmt(proc, b, assigned, errs);
            }
            Stmt::NondetIf(t, e) => {
                let mut after_then = assigned.clone();
                self.check_stmt(proc, t, &mut after_then, errs);
                let mut after_else = assigned.clone();
                self.check_stmt(proc, e, &mut after_else, errs);
                *assigned = after_then.intersection(&after_else).cloned().collect();
            }
            Stmt::Assign { dst, .. }
            | Stmt::HeapLoad { dst, .. }
            | Stmt::Malloc { dst, .. }
            | Stmt::NondetAssign { dst } => {
                assigned.insert(dst.clone());
            }
            Stmt::Call { dst, proc: callee, args } => {
                match self.procedure(callee) {
                    Some(target) => {
                        if target.params.len() != args.len() {
                            errs.push(ValidateError::ArityMismatch {
                                proc: proc.name.clone(),
                                callee: callee.clone(),
                                got: args.len(),
                                want: target.params.len(),
                            });
                        }
                    }
                    None => errs.push(ValidateError::UnknownCallee {
                        proc: proc.name.clone(),
                        callee: callee.clone(),
                    }),
                }
                assigned.insert(dst.clone());
            }
            Stmt::HeapStore { .. } | Stmt::Assert(_) | Stmt::Assume(_) => {}
        }
    }
}

impl fmt::Display for ArithOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl Expr {
    /// `min_level`: 1 additive, 2 multiplicative, 3 atom. Right operands
    /// print one level tighter so reparsing rebuilds the same tree.
    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min_level: u8) -> fmt::Result {
        match self {
            Expr::Var(v) => f.write_str(v),
            Expr::Int(n) => write!(f, "{n}"),
            Expr::Bin(op, a, b) => {
                let level = match op {
                    ArithOp::Add | ArithOp::Sub => 1,
                    ArithOp::Mul => 2,
                };
                let parens = level < min_level;
                if parens {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, level)?;
                write!(f, " {op} ")?;
                b.fmt_prec(f, level + 1)?;
                if parens {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 1)
    }
}

impl Pred {
    /// `min_level`: 1 disjunction, 2 conjunction, 3 atom.
    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min_level: u8) -> fmt::Result {
        match self {
            Pred::Bool(b) => f.write_str(if *b { "true" } else { "false" }),
            Pred::Cmp(op, a, b) => write!(f, "{a} {op} {b}"),
            Pred::Not(p) => match &**p {
                Pred::Cmp(op, a, b) => write!(f, "{a} {} {b}", op.negated_symbol()),
                other => {
                    f.write_str("!(")?;
                    other.fmt_prec(f, 1)?;
                    f.write_str(")")
                }
            },
            Pred::And(a, b) => {
                let parens = 2 < min_level;
                if parens {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, 2)?;
                f.write_str(" && ")?;
                b.fmt_prec(f, 3)?;
                if parens {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Pred::Or(a, b) => {
                let parens = 1 < min_level;
                if parens {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, 1)?;
                f.write_str(" || ")?;
                b.fmt_prec(f, 2)?;
                if parens {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Pred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_proc(body: Stmt) -> Program {
        Program {
            procedures: vec![Procedure {
                name: "main".into(),
                params: vec!["x".into()],
                ret: "r".into(),
                body,
            }],
            entry: "main".into(),
        }
    }

    #[test]
    fn seq_right_folds() {
        let s = Stmt::seq(vec![
            Stmt::NondetAssign { dst: "a".into() },
            Stmt::NondetAssign { dst: "b".into() },
            Stmt::NondetAssign { dst: "c".into() },
        ]);
        match &s {
            Stmt::Seq(a, rest) => {
                assert!(matches!(**a, Stmt::NondetAssign { .. }));
                assert!(matches!(**rest, Stmt::Seq(..)));
            }
            _ => panic!("expected Seq"),
        }
        assert_eq!(s.seq_items().len(), 3);
        assert_eq!(s.normalized(), s);
    }

    #[test]
    fn empty_seq_is_assume_true() {
        assert_eq!(Stmt::seq(vec![]), Stmt::Assume(Pred::Bool(true)));
    }

    #[test]
    fn validate_accepts_branch_assignment_intersection() {
        // Both arms assign y, so reading y afterwards is fine.
        let body = Stmt::seq(vec![
            Stmt::NondetIf(
                Box::new(Stmt::Assign {
                    dst: "y".into(),
                    src: Expr::Int(1),
                }),
                Box::new(Stmt::Assign {
                    dst: "y".into(),
                    src: Expr::Int(2),
                }),
            ),
            Stmt::Assign {
                dst: "r".into(),
                src: Expr::var("y"),
            },
        ]);
        assert!(one_proc(body).validate().is_ok());
    }

    #[test]
    fn validate_rejects_one_sided_assignment() {
        let body = Stmt::seq(vec![
            Stmt::NondetIf(
                Box::new(Stmt::Assign {
                    dst: "y".into(),
                    src: Expr::Int(1),
                }),
                Box::new(Stmt::Assume(Pred::Bool(true))),
            ),
            Stmt::Assign {
                dst: "r".into(),
                src: Expr::var("y"),
            },
        ]);
        let errs = one_proc(body).validate().unwrap_err();
        assert!(errs
            .iter()
            .any(|e| matches!(e, ValidateError::UseBeforeAssign { var, .. } if var == "y")));
    }

    #[test]
    fn validate_rejects_bad_calls() {
        let prog = Program {
            procedures: vec![Procedure {
                name: "main".into(),
                params: vec![],
                ret: "r".into(),
                body: Stmt::Call {
                    dst: "r".into(),
                    proc: "nope".into(),
                    args: vec![],
                },
            }],
            entry: "main".into(),
        };
        let errs = prog.validate().unwrap_err();
        assert!(errs
            .iter()
            .any(|e| matches!(e, ValidateError::UnknownCallee { callee, .. } if callee == "nope")));
    }

    #[test]
    fn ret_counts_as_assigned() {
        let body = Stmt::Assign {
            dst: "x".into(),
            src: Expr::var("r"),
        };
        assert!(one_proc(body).validate().is_ok());
    }
}
