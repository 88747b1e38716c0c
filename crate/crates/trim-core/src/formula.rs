//! First-order conditions over program states.
//!
//! Terms extend program expressions with `drf(t)` heap reads; formulas add
//! boolean structure, implication, and integer quantifiers. The inference
//! engine manipulates these symbolically, the interpreter evaluates them
//! against concrete states (with an explicitly bounded quantifier domain).

use crate::ast::{ArithOp, CmpOp, Expr, Ident, Pred, Program};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Integer semantics used when evaluating terms.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum IntMode {
    /// Unbounded integers; operations that overflow `i64` are reported as
    /// undefined rather than silently wrapped.
    Math,
    /// Every arithmetic operation truncates to 32 bits, like C `int`.
    Wrap32,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Term {
    Var(Ident),
    Int(i64),
    Bin(ArithOp, Box<Term>, Box<Term>),
    Drf(Box<Term>),
}

impl Term {
    pub fn var(name: impl Into<Ident>) -> Term {
        Term::Var(name.into())
    }

    pub fn bin(op: ArithOp, lhs: Term, rhs: Term) -> Term {
        Term::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn drf(t: Term) -> Term {
        Term::Drf(Box::new(t))
    }

    pub fn from_expr(e: &Expr) -> Term {
        match e {
            Expr::Var(v) => Term::Var(v.clone()),
            Expr::Int(n) => Term::Int(*n),
            Expr::Bin(op, a, b) => Term::bin(*op, Term::from_expr(a), Term::from_expr(b)),
        }
    }

    /// Back to a program expression; fails if a heap read remains.
    pub fn to_expr(&self) -> Option<Expr> {
        match self {
            Term::Var(v) => Some(Expr::Var(v.clone())),
            Term::Int(n) => Some(Expr::Int(*n)),
            Term::Bin(op, a, b) => Some(Expr::bin(*op, a.to_expr()?, b.to_expr()?)),
            Term::Drf(_) => None,
        }
    }

    pub fn free_vars(&self, out: &mut BTreeSet<Ident>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Int(_) => {}
            Term::Bin(_, a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
            Term::Drf(t) => t.free_vars(out),
        }
    }

    pub fn free_var_set(&self) -> BTreeSet<Ident> {
        let mut s = BTreeSet::new();
        self.free_vars(&mut s);
        s
    }

    pub fn mentions(&self, var: &str) -> bool {
        match self {
            Term::Var(v) => v == var,
            Term::Int(_) => false,
            Term::Bin(_, a, b) => a.mentions(var) || b.mentions(var),
            Term::Drf(t) => t.mentions(var),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) | Term::Int(_) => 1,
            Term::Bin(_, a, b) => 1 + a.size() + b.size(),
            Term::Drf(t) => 1 + t.size(),
        }
    }

    /// `t + 1`, folding constants.
    pub fn plus_one(&self) -> Term {
        match self {
            Term::Int(n) => Term::Int(n.wrapping_add(1)),
            other => Term::bin(ArithOp::Add, other.clone(), Term::Int(1)),
        }
    }

    /// `t - 1`, folding constants.
    pub fn minus_one(&self) -> Term {
        match self {
            Term::Int(n) => Term::Int(n.wrapping_sub(1)),
            other => Term::bin(ArithOp::Sub, other.clone(), Term::Int(1)),
        }
    }

    /// Number of `drf` wrappers at the root, treating the term as a memory
    /// location. `x` has depth 0, `drf(drf(x))` depth 2.
    pub fn location_depth(&self) -> usize {
        match self {
            Term::Drf(t) => 1 + t.location_depth(),
            _ => 0,
        }
    }

    /// Ordering key for the two sides of an equality: variables first,
    /// constants last, so facts print as `x = 5` and `drf(y) = 3`.
    fn eq_rank(&self) -> u8 {
        match self {
            Term::Var(_) => 0,
            Term::Drf(_) => 1,
            Term::Bin(..) => 2,
            Term::Int(_) => 3,
        }
    }

    fn eq_key(&self) -> (u8, &Term) {
        (self.eq_rank(), self)
    }

    /// Substitutes a term for a variable.
    pub fn subst_var(&self, var: &str, replacement: &Term) -> Term {
        match self {
            Term::Var(v) if v == var => replacement.clone(),
            Term::Var(_) | Term::Int(_) => self.clone(),
            Term::Bin(op, a, b) => Term::bin(
                *op,
                a.subst_var(var, replacement),
                b.subst_var(var, replacement),
            ),
            Term::Drf(t) => Term::drf(t.subst_var(var, replacement)),
        }
    }

    pub fn subst_parallel(&self, map: &BTreeMap<Ident, Term>) -> Term {
        match self {
            Term::Var(v) => map.get(v).cloned().unwrap_or_else(|| self.clone()),
            Term::Int(_) => self.clone(),
            Term::Bin(op, a, b) => Term::bin(*op, a.subst_parallel(map), b.subst_parallel(map)),
            Term::Drf(t) => Term::drf(t.subst_parallel(map)),
        }
    }

    /// Replaces occurrences of `needle` bottom-up: children are rewritten
    /// first and the rebuilt node is compared against the needle, so a store
    /// into `drf(v)` cascades correctly through `drf(drf(v))`.
    pub fn replace(&self, needle: &Term, replacement: &Term) -> Term {
        let rebuilt = match self {
            Term::Var(_) | Term::Int(_) => self.clone(),
            Term::Bin(op, a, b) => Term::bin(
                *op,
                a.replace(needle, replacement),
                b.replace(needle, replacement),
            ),
            Term::Drf(t) => Term::drf(t.replace(needle, replacement)),
        };
        if rebuilt == *needle {
            replacement.clone()
        } else {
            rebuilt
        }
    }

    /// Constant folding and unit laws. Integer folding only happens when the
    /// operands and result all fit in 32 bits, where the two integer modes
    /// agree.
    pub fn simplified(&self) -> Term {
        match self {
            Term::Var(_) | Term::Int(_) => self.clone(),
            Term::Drf(t) => Term::drf(t.simplified()),
            Term::Bin(op, a, b) => {
                let a = a.simplified();
                let b = b.simplified();
                let in_i32 = |n: i64| n >= i32::MIN as i64 && n <= i32::MAX as i64;
                if let (Term::Int(x), Term::Int(y)) = (&a, &b) {
                    let folded = match op {
                        ArithOp::Add => x.checked_add(*y),
                        ArithOp::Sub => x.checked_sub(*y),
                        ArithOp::Mul => x.checked_mul(*y),
                    };
                    if let Some(r) = folded {
                        if in_i32(*x) && in_i32(*y) && in_i32(r) {
                            return Term::Int(r);
                        }
                    }
                }
                match (op, &a, &b) {
                    (ArithOp::Add, t, Term::Int(0)) | (ArithOp::Add, Term::Int(0), t) => t.clone(),
                    (ArithOp::Sub, t, Term::Int(0)) => t.clone(),
                    (ArithOp::Mul, t, Term::Int(1)) | (ArithOp::Mul, Term::Int(1), t) => t.clone(),
                    (ArithOp::Mul, _, Term::Int(0)) | (ArithOp::Mul, Term::Int(0), _) => {
                        Term::Int(0)
                    }
                    (ArithOp::Sub, x, y) if x == y => Term::Int(0),
                    _ => Term::bin(*op, a, b),
                }
            }
        }
    }

    pub fn eval(&self, env: &EvalEnv, bound: &mut Vec<(Ident, i64)>) -> Option<i64> {
        match self {
            Term::Var(v) => bound
                .iter()
                .rev()
                .find(|(name, _)| name == v)
                .map(|(_, val)| *val)
                .or_else(|| env.vars.get(v).copied()),
            Term::Int(n) => Some(*n),
            Term::Bin(op, a, b) => {
                let x = a.eval(env, bound)?;
                let y = b.eval(env, bound)?;
                match env.mode {
                    IntMode::Math => match op {
                        ArithOp::Add => x.checked_add(y),
                        ArithOp::Sub => x.checked_sub(y),
                        ArithOp::Mul => x.checked_mul(y),
                    },
                    IntMode::Wrap32 => {
                        let (x, y) = (x as i32, y as i32);
                        let r = match op {
                            ArithOp::Add => x.wrapping_add(y),
                            ArithOp::Sub => x.wrapping_sub(y),
                            ArithOp::Mul => x.wrapping_mul(y),
                        };
                        Some(r as i64)
                    }
                }
            }
            Term::Drf(t) => {
                // Memory is a total map: unwritten cells read as 0, matching
                // the interpreter.
                let addr = t.eval(env, bound)?;
                Some(env.heap.get(&addr).copied().unwrap_or(0))
            }
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Formula {
    Bool(bool),
    Cmp(CmpOp, Term, Term),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Forall(Ident, Box<Formula>),
    Exists(Ident, Box<Formula>),
}

/// Context for evaluating a formula against a concrete state. Quantifiers
/// range over `qdom`; callers pick a domain that covers the values the
/// program can actually produce at that point.
pub struct EvalEnv<'a> {
    pub vars: &'a BTreeMap<Ident, i64>,
    pub heap: &'a BTreeMap<i64, i64>,
    pub qdom: &'a [i64],
    pub mode: IntMode,
}

impl Formula {
    pub fn tt() -> Formula {
        Formula::Bool(true)
    }

    pub fn ff() -> Formula {
        Formula::Bool(false)
    }

    pub fn cmp(op: CmpOp, lhs: Term, rhs: Term) -> Formula {
        Formula::Cmp(op, lhs, rhs)
    }

    pub fn not(p: Formula) -> Formula {
        Formula::Not(Box::new(p))
    }

    pub fn and(lhs: Formula, rhs: Formula) -> Formula {
        Formula::And(Box::new(lhs), Box::new(rhs))
    }

    pub fn or(lhs: Formula, rhs: Formula) -> Formula {
        Formula::Or(Box::new(lhs), Box::new(rhs))
    }

    pub fn implies(lhs: Formula, rhs: Formula) -> Formula {
        Formula::Implies(Box::new(lhs), Box::new(rhs))
    }

    pub fn forall(v: impl Into<Ident>, body: Formula) -> Formula {
        Formula::Forall(v.into(), Box::new(body))
    }

    pub fn exists(v: impl Into<Ident>, body: Formula) -> Formula {
        Formula::Exists(v.into(), Box::new(body))
    }

    /// Conjunction of a list; empty is `true`.
    pub fn conj(mut parts: Vec<Formula>) -> Formula {
        match parts.len() {
            0 => Formula::tt(),
            1 => parts.pop().unwrap(),
            _ => {
                let mut it = parts.into_iter();
                let first = it.next().unwrap();
                it.fold(first, Formula::and)
            }
        }
    }

    /// Disjunction of a list; empty is `false`.
    pub fn disj(mut parts: Vec<Formula>) -> Formula {
        match parts.len() {
            0 => Formula::ff(),
            1 => parts.pop().unwrap(),
            _ => {
                let mut it = parts.into_iter();
                let first = it.next().unwrap();
                it.fold(first, Formula::or)
            }
        }
    }

    /// Binds `v` under a fresh universal quantifier, renaming to keep
    /// binder names unique across the whole analysis.
    pub fn forall_binding(v: &str, body: Formula, fresh: &mut Fresh) -> Formula {
        let q = fresh.q();
        let renamed = body.subst(v, &Term::var(q.clone()), fresh);
        Formula::forall(q, renamed)
    }

    pub fn from_pred(p: &Pred) -> Formula {
        match p {
            Pred::Bool(b) => Formula::Bool(*b),
            Pred::Cmp(op, a, b) => Formula::cmp(*op, Term::from_expr(a), Term::from_expr(b)),
            Pred::And(a, b) => Formula::and(Formula::from_pred(a), Formula::from_pred(b)),
            Pred::Or(a, b) => Formula::or(Formula::from_pred(a), Formula::from_pred(b)),
            Pred::Not(p) => Formula::not(Formula::from_pred(p)),
        }
    }

    /// Back to a program predicate; fails if quantifiers or heap reads
    /// remain. Implication lowers to `!a || b`.
    pub fn to_pred(&self) -> Option<Pred> {
        match self {
            Formula::Bool(b) => Some(Pred::Bool(*b)),
            Formula::Cmp(op, a, b) => Some(Pred::Cmp(*op, a.to_expr()?, b.to_expr()?)),
            Formula::Not(p) => Some(Pred::not(p.to_pred()?)),
            Formula::And(a, b) => Some(Pred::and(a.to_pred()?, b.to_pred()?)),
            Formula::Or(a, b) => Some(Pred::or(a.to_pred()?, b.to_pred()?)),
            Formula::Implies(a, b) => Some(Pred::or(Pred::not(a.to_pred()?), b.to_pred()?)),
            Formula::Forall(..) | Formula::Exists(..) => None,
        }
    }

    pub fn free_vars(&self, out: &mut BTreeSet<Ident>) {
        match self {
            Formula::Bool(_) => {}
            Formula::Cmp(_, a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
            Formula::Not(p) => p.free_vars(out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
            Formula::Forall(v, body) | Formula::Exists(v, body) => {
                let mut inner = BTreeSet::new();
                body.free_vars(&mut inner);
                inner.remove(v);
                out.extend(inner);
            }
        }
    }

    pub fn free_var_set(&self) -> BTreeSet<Ident> {
        let mut s = BTreeSet::new();
        self.free_vars(&mut s);
        s
    }

    /// Every identifier in the formula, bound ones included.
    pub fn all_vars(&self, out: &mut BTreeSet<Ident>) {
        match self {
            Formula::Bool(_) => {}
            Formula::Cmp(_, a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
            Formula::Not(p) => p.all_vars(out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.all_vars(out);
                b.all_vars(out);
            }
            Formula::Forall(v, body) | Formula::Exists(v, body) => {
                out.insert(v.clone());
                body.all_vars(out);
            }
        }
    }

    pub fn mentions_free(&self, var: &str) -> bool {
        match self {
            Formula::Bool(_) => false,
            Formula::Cmp(_, a, b) => a.mentions(var) || b.mentions(var),
            Formula::Not(p) => p.mentions_free(var),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.mentions_free(var) || b.mentions_free(var)
            }
            Formula::Forall(v, body) | Formula::Exists(v, body) => {
                v != var && body.mentions_free(var)
            }
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Formula::Bool(_) => 1,
            Formula::Cmp(_, a, b) => 1 + a.size() + b.size(),
            Formula::Not(p) => 1 + p.size(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                1 + a.size() + b.size()
            }
            Formula::Forall(_, body) | Formula::Exists(_, body) => 1 + body.size(),
        }
    }

    /// Every term `t` such that `drf(t)` occurs somewhere in the formula,
    /// in first-occurrence order, paired with whether that occurrence
    /// mentions a quantifier-bound variable. Nested reads contribute their
    /// inner locations too.
    pub fn deref_args(&self) -> Vec<(Term, bool)> {
        fn walk_term(t: &Term, bound: &BTreeSet<Ident>, out: &mut Vec<(Term, bool)>) {
            match t {
                Term::Var(_) | Term::Int(_) => {}
                Term::Bin(_, a, b) => {
                    walk_term(a, bound, out);
                    walk_term(b, bound, out);
                }
                Term::Drf(arg) => {
                    let uses_bound = arg.free_var_set().iter().any(|v| bound.contains(v));
                    let entry = ((**arg).clone(), uses_bound);
                    if !out.contains(&entry) {
                        out.push(entry);
                    }
                    walk_term(arg, bound, out);
                }
            }
        }
        fn walk(f: &Formula, bound: &mut BTreeSet<Ident>, out: &mut Vec<(Term, bool)>) {
            match f {
                Formula::Bool(_) => {}
                Formula::Cmp(_, a, b) => {
                    walk_term(a, bound, out);
                    walk_term(b, bound, out);
                }
                Formula::Not(p) => walk(p, bound, out),
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                    walk(a, bound, out);
                    walk(b, bound, out);
                }
                Formula::Forall(v, body) | Formula::Exists(v, body) => {
                    let added = bound.insert(v.clone());
                    walk(body, bound, out);
                    if added {
                        bound.remove(v);
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut BTreeSet::new(), &mut out);
        out
    }

    /// Capture-avoiding substitution of a term for a free variable.
    pub fn subst(&self, var: &str, replacement: &Term, fresh: &mut Fresh) -> Formula {
        let mut map = BTreeMap::new();
        map.insert(var.to_string(), replacement.clone());
        self.subst_parallel(&map, fresh)
    }

    /// Simultaneous capture-avoiding substitution.
    pub fn subst_parallel(&self, map: &BTreeMap<Ident, Term>, fresh: &mut Fresh) -> Formula {
        if map.is_empty() {
            return self.clone();
        }
        match self {
            Formula::Bool(_) => self.clone(),
            Formula::Cmp(op, a, b) => {
                Formula::cmp(*op, a.subst_parallel(map), b.subst_parallel(map))
            }
            Formula::Not(p) => Formula::not(p.subst_parallel(map, fresh)),
            Formula::And(a, b) => Formula::and(
                a.subst_parallel(map, fresh),
                b.subst_parallel(map, fresh),
            ),
            Formula::Or(a, b) => Formula::or(
                a.subst_parallel(map, fresh),
                b.subst_parallel(map, fresh),
            ),
            Formula::Implies(a, b) => Formula::implies(
                a.subst_parallel(map, fresh),
                b.subst_parallel(map, fresh),
            ),
            Formula::Forall(v, body) | Formula::Exists(v, body) => {
                let is_forall = matches!(self, Formula::Forall(..));
                let mut inner: BTreeMap<Ident, Term> = map
                    .iter()
                    .filter(|(k, _)| *k != v && body.mentions_free(k))
                    .map(|(k, t)| (k.clone(), t.clone()))
                    .collect();
                if inner.is_empty() {
                    return self.clone();
                }
                let (binder, body) = if inner.values().any(|t| t.mentions(v)) {
                    let nv = fresh.q();
                    let renamed = body.subst(v, &Term::var(nv.clone()), fresh);
                    (nv, renamed)
                } else {
                    (v.clone(), (**body).clone())
                };
                inner.remove(&binder);
                let new_body = body.subst_parallel(&inner, fresh);
                if is_forall {
                    Formula::forall(binder, new_body)
                } else {
                    Formula::exists(binder, new_body)
                }
            }
        }
    }

    /// Replaces a term (typically a heap read) throughout the formula.
    /// Subtrees whose binder shadows a variable of the needle are left
    /// alone; binders capturing a variable of the replacement are renamed.
    pub fn replace_term(&self, needle: &Term, replacement: &Term, fresh: &mut Fresh) -> Formula {
        match self {
            Formula::Bool(_) => self.clone(),
            Formula::Cmp(op, a, b) => Formula::cmp(
                *op,
                a.replace(needle, replacement),
                b.replace(needle, replacement),
            ),
            Formula::Not(p) => Formula::not(p.replace_term(needle, replacement, fresh)),
            Formula::And(a, b) => Formula::and(
                a.replace_term(needle, replacement, fresh),
                b.replace_term(needle, replacement, fresh),
            ),
            Formula::Or(a, b) => Formula::or(
                a.replace_term(needle, replacement, fresh),
                b.replace_term(needle, replacement, fresh),
            ),
            Formula::Implies(a, b) => Formula::implies(
                a.replace_term(needle, replacement, fresh),
                b.replace_term(needle, replacement, fresh),
            ),
            Formula::Forall(v, body) | Formula::Exists(v, body) => {
                let is_forall = matches!(self, Formula::Forall(..));
                if needle.mentions(v) {
                    return self.clone();
                }
                let (binder, body) = if replacement.mentions(v) {
                    let nv = fresh.q();
                    let renamed = body.subst(v, &Term::var(nv.clone()), fresh);
                    (nv, renamed)
                } else {
                    (v.clone(), (**body).clone())
                };
                let new_body = body.replace_term(needle, replacement, fresh);
                if is_forall {
                    Formula::forall(binder, new_body)
                } else {
                    Formula::exists(binder, new_body)
                }
            }
        }
    }

    /// Negation pushed to the literals.
    pub fn negated_nnf(&self) -> Formula {
        match self {
            Formula::Bool(b) => Formula::Bool(!b),
            Formula::Cmp(..) => Formula::not(self.clone()),
            Formula::Not(p) => p.nnf(),
            Formula::And(a, b) => Formula::or(a.negated_nnf(), b.negated_nnf()),
            Formula::Or(a, b) => Formula::and(a.negated_nnf(), b.negated_nnf()),
            Formula::Implies(a, b) => Formula::and(a.nnf(), b.negated_nnf()),
            Formula::Forall(v, body) => Formula::exists(v.clone(), body.negated_nnf()),
            Formula::Exists(v, body) => Formula::forall(v.clone(), body.negated_nnf()),
        }
    }

    pub fn nnf(&self) -> Formula {
        match self {
            Formula::Bool(_) | Formula::Cmp(..) => self.clone(),
            Formula::Not(p) => p.negated_nnf(),
            Formula::And(a, b) => Formula::and(a.nnf(), b.nnf()),
            Formula::Or(a, b) => Formula::or(a.nnf(), b.nnf()),
            Formula::Implies(a, b) => Formula::or(a.negated_nnf(), b.nnf()),
            Formula::Forall(v, body) => Formula::forall(v.clone(), body.nnf()),
            Formula::Exists(v, body) => Formula::exists(v.clone(), body.nnf()),
        }
    }

    /// Rewrites to a smaller equivalent formula. Quantifier rules treat the
    /// integers as unbounded: `forall v. v < t` is false because some value
    /// exceeds any bound. Equalities are ordered by the term ordering so
    /// syntactically equal facts compare equal.
    pub fn simplify(&self) -> Formula {
        let mut cur = self.clone();
        for _ in 0..12 {
            let next = cur.simplify_pass();
            if next == cur {
                break;
            }
            cur = next;
        }
        cur
    }

    fn simplify_pass(&self) -> Formula {
        match self {
            Formula::Bool(_) => self.clone(),
            Formula::Cmp(op, a, b) => {
                let a = a.simplified();
                let b = b.simplified();
                if let (Term::Int(x), Term::Int(y)) = (&a, &b) {
                    return Formula::Bool(match op {
                        CmpOp::Eq => x == y,
                        CmpOp::Lt => x < y,
                        CmpOp::Gt => x > y,
                    });
                }
                if a == b {
                    return Formula::Bool(*op == CmpOp::Eq);
                }
                if *op == CmpOp::Eq && a.eq_key() > b.eq_key() {
                    Formula::cmp(CmpOp::Eq, b, a)
                } else {
                    Formula::cmp(*op, a, b)
                }
            }
            Formula::Not(p) => {
                let p = p.simplify_pass();
                match p {
                    Formula::Bool(b) => Formula::Bool(!b),
                    Formula::Not(inner) => *inner,
                    other => Formula::not(other),
                }
            }
            Formula::And(a, b) => {
                let mut items = Vec::new();
                collect_chain(a.simplify_pass(), true, &mut items);
                collect_chain(b.simplify_pass(), true, &mut items);
                rebuild_chain(items, true)
            }
            Formula::Or(a, b) => {
                let mut items = Vec::new();
                collect_chain(a.simplify_pass(), false, &mut items);
                collect_chain(b.simplify_pass(), false, &mut items);
                rebuild_chain(items, false)
            }
            Formula::Implies(a, b) => {
                let a = a.simplify_pass();
                let b = b.simplify_pass();
                match (a, b) {
                    (Formula::Bool(true), x) => x,
                    (Formula::Bool(false), _) => Formula::tt(),
                    (_, Formula::Bool(true)) => Formula::tt(),
                    (x, Formula::Bool(false)) => Formula::not(x),
                    (x, y) if x == y => Formula::tt(),
                    (x, y) => Formula::implies(x, y),
                }
            }
            Formula::Forall(v, body) => {
                let body = body.simplify_pass();
                if !body.mentions_free(v) {
                    return body;
                }
                if Self::unsat_single_bound(v, &body) {
                    return Formula::ff();
                }
                match body {
                    Formula::And(x, y) => Formula::and(
                        Formula::forall(v.clone(), *x),
                        Formula::forall(v.clone(), *y),
                    ),
                    Formula::Or(x, y) if !x.mentions_free(v) => {
                        Formula::or(*x, Formula::forall(v.clone(), *y))
                    }
                    Formula::Or(x, y) if !y.mentions_free(v) => {
                        Formula::or(Formula::forall(v.clone(), *x), *y)
                    }
                    Formula::Implies(x, y) if !x.mentions_free(v) => {
                        Formula::implies(*x, Formula::forall(v.clone(), *y))
                    }
                    other => Formula::forall(v.clone(), other),
                }
            }
            Formula::Exists(v, body) => {
                let body = body.simplify_pass();
                if !body.mentions_free(v) {
                    return body;
                }
                if Self::unsat_single_bound(v, &body) {
                    // The dual: a single comparison pinning v is satisfiable.
                    return Formula::tt();
                }
                match body {
                    Formula::Or(x, y) => Formula::or(
                        Formula::exists(v.clone(), *x),
                        Formula::exists(v.clone(), *y),
                    ),
                    Formula::And(x, y) if !x.mentions_free(v) => {
                        Formula::and(*x, Formula::exists(v.clone(), *y))
                    }
                    Formula::And(x, y) if !y.mentions_free(v) => {
                        Formula::and(Formula::exists(v.clone(), *x), *y)
                    }
                    other => Formula::exists(v.clone(), other),
                }
            }
        }
    }

    /// True when `body` is a single (possibly negated) comparison that pins
    /// `v` against a term not mentioning it: over unbounded integers no
    /// single such constraint can hold for every `v`, and each is
    /// satisfiable for some `v`.
    fn unsat_single_bound(v: &str, body: &Formula) -> bool {
        let literal = match body {
            Formula::Not(inner) => match &**inner {
                Formula::Cmp(op, a, b) => Some((op, a, b)),
                _ => None,
            },
            Formula::Cmp(op, a, b) => Some((op, a, b)),
            _ => None,
        };
        match literal {
            Some((_, a, b)) => {
                (*a == Term::var(v) && !b.mentions(v))
                    || (*b == Term::var(v) && !a.mentions(v))
            }
            None => false,
        }
    }

    /// Conjuncts of an `And`-chain (or the formula itself if not an `And`),
    /// left to right.
    pub fn conjuncts(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        fn walk<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
            match f {
                Formula::And(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn eval(&self, env: &EvalEnv, bound: &mut Vec<(Ident, i64)>) -> Option<bool> {
        match self {
            Formula::Bool(b) => Some(*b),
            Formula::Cmp(op, a, b) => {
                let x = a.eval(env, bound)?;
                let y = b.eval(env, bound)?;
                Some(match op {
                    CmpOp::Eq => x == y,
                    CmpOp::Lt => x < y,
                    CmpOp::Gt => x > y,
                })
            }
            Formula::Not(p) => p.eval(env, bound).map(|b| !b),
            Formula::And(a, b) => match (a.eval(env, bound), b.eval(env, bound)) {
                (Some(false), _) | (_, Some(false)) => Some(false),
                (Some(true), Some(true)) => Some(true),
                _ => None,
            },
            Formula::Or(a, b) => match (a.eval(env, bound), b.eval(env, bound)) {
                (Some(true), _) | (_, Some(true)) => Some(true),
                (Some(false), Some(false)) => Some(false),
                _ => None,
            },
            Formula::Implies(a, b) => match (a.eval(env, bound), b.eval(env, bound)) {
                (Some(false), _) | (_, Some(true)) => Some(true),
                (Some(true), Some(false)) => Some(false),
                _ => None,
            },
            Formula::Forall(v, body) => {
                let mut unknown = false;
                for d in env.qdom {
                    bound.push((v.clone(), *d));
                    let r = body.eval(env, bound);
                    bound.pop();
                    match r {
                        Some(false) => return Some(false),
                        None => unknown = true,
                        Some(true) => {}
                    }
                }
                if unknown {
                    None
                } else {
                    Some(true)
                }
            }
            Formula::Exists(v, body) => {
                let mut unknown = false;
                for d in env.qdom {
                    bound.push((v.clone(), *d));
                    let r = body.eval(env, bound);
                    bound.pop();
                    match r {
                        Some(true) => return Some(true),
                        None => unknown = true,
                        Some(false) => {}
                    }
                }
                if unknown {
                    None
                } else {
                    Some(false)
                }
            }
        }
    }
}

/// Generator for identifiers guaranteed not to collide with a program's
/// existing names: `_qN` for logical/nondet variables, `_tN` for lowered
/// temporaries.
/// Splits an `And`/`Or` chain (`conj` selects which) into its leaves.
fn collect_chain(f: Formula, conj: bool, out: &mut Vec<Formula>) {
    match f {
        Formula::And(a, b) if conj => {
            collect_chain(*a, conj, out);
            collect_chain(*b, conj, out);
        }
        Formula::Or(a, b) if !conj => {
            collect_chain(*a, conj, out);
            collect_chain(*b, conj, out);
        }
        other => out.push(other),
    }
}

/// Reassembles a chain after dropping units, duplicates, and short-circuiting
/// on the absorbing constant.
fn rebuild_chain(items: Vec<Formula>, conj: bool) -> Formula {
    let absorb = Formula::Bool(!conj);
    let unit = Formula::Bool(conj);
    let mut kept: Vec<Formula> = Vec::with_capacity(items.len());
    for item in items {
        if item == absorb {
            return absorb;
        }
        if item != unit && !kept.contains(&item) {
            kept.push(item);
        }
    }
    let mut it = kept.into_iter();
    match it.next() {
        None => unit,
        Some(first) => {
            if conj {
                it.fold(first, Formula::and)
            } else {
                it.fold(first, Formula::or)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Fresh {
    next_q: u64,
    next_t: u64,
}

impl Fresh {
    pub fn new() -> Fresh {
        Fresh { next_q: 0, next_t: 0 }
    }

    pub fn for_program(program: &Program) -> Fresh {
        let mut fresh = Fresh::new();
        for ident in program.idents() {
            if let Some(n) = Self::suffix(&ident, "_q") {
                fresh.next_q = fresh.next_q.max(n + 1);
            }
            if let Some(n) = Self::suffix(&ident, "_t") {
                fresh.next_t = fresh.next_t.max(n + 1);
            }
        }
        fresh
    }

    fn suffix(ident: &str, prefix: &str) -> Option<u64> {
        ident.strip_prefix(prefix)?.parse().ok()
    }

    /// Moves the counters past `ident` if it looks like a generated name.
    pub fn reserve(&mut self, ident: &str) {
        if let Some(n) = Self::suffix(ident, "_q") {
            self.next_q = self.next_q.max(n + 1);
        }
        if let Some(n) = Self::suffix(ident, "_t") {
            self.next_t = self.next_t.max(n + 1);
        }
    }

    pub fn q(&mut self) -> Ident {
        let name = format!("_q{}", self.next_q);
        self.next_q += 1;
        name
    }

    pub fn t(&mut self) -> Ident {
        let name = format!("_t{}", self.next_t);
        self.next_t += 1;
        name
    }
}

impl Default for Fresh {
    fn default() -> Self {
        Fresh::new()
    }
}

impl Term {
    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, level: u8) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Int(n) => write!(f, "{n}"),
            Term::Drf(t) => {
                f.write_str("drf(")?;
                t.fmt_prec(f, 0)?;
                f.write_str(")")
            }
            Term::Bin(op, a, b) => {
                let own = match op {
                    ArithOp::Mul => 2,
                    ArithOp::Add | ArithOp::Sub => 1,
                };
                let parens = own < level;
                if parens {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, own)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_prec(f, own + 1)?;
                if parens {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl Formula {
    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, level: u8) -> fmt::Result {
        match self {
            Formula::Bool(b) => write!(f, "{b}"),
            Formula::Cmp(op, a, b) => {
                a.fmt_prec(f, 0)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_prec(f, 0)
            }
            Formula::Not(p) => {
                if let Formula::Cmp(op, a, b) = &**p {
                    a.fmt_prec(f, 0)?;
                    write!(f, " {} ", op.negated_symbol())?;
                    b.fmt_prec(f, 0)
                } else {
                    f.write_str("!(")?;
                    p.fmt_prec(f, 0)?;
                    f.write_str(")")
                }
            }
            Formula::And(a, b) => {
                let parens = level > 3;
                if parens {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, 3)?;
                f.write_str(" && ")?;
                b.fmt_prec(f, 3)?;
                if parens {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Formula::Or(a, b) => {
                let parens = level > 2;
                if parens {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, 2)?;
                f.write_str(" || ")?;
                b.fmt_prec(f, 2)?;
                if parens {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Formula::Implies(a, b) => {
                let parens = level > 1;
                if parens {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, 2)?;
                f.write_str(" ==> ")?;
                b.fmt_prec(f, 1)?;
                if parens {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Formula::Forall(v, body) | Formula::Exists(v, body) => {
                let word = if matches!(self, Formula::Forall(..)) {
                    "forall"
                } else {
                    "exists"
                };
                let parens = level > 0;
                if parens {
                    f.write_str("(")?;
                }
                write!(f, "{word} {v}. ")?;
                body.fmt_prec(f, 0)?;
                if parens {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}
