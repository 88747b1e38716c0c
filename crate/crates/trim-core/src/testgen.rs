//! Deterministic random generators for the property suites.
//!
//! Everything is seeded SplitMix64 so failures reproduce exactly; set
//! TRIM_SEED to change the stream. The generators enforce the value
//! disciplines the oracles rely on: wp cases keep pointers on the two
//! seeded heap cells, and corpus programs keep every havocked value inside
//! the exploration domain so an existential witness is always enumerable.

use std::collections::BTreeSet;

use crate::ast::{ArithOp, CmpOp, Expr, Ident, Pred, Procedure, Program, Stmt};
use crate::formula::{Formula, Term};

#[derive(Clone, Debug)]
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Rng {
        Rng(seed)
    }

    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }

    /// Inclusive on both ends.
    pub fn range(&mut self, lo: i64, hi: i64) -> i64 {
        lo + (self.next() % (hi - lo + 1) as u64) as i64
    }

    pub fn chance(&mut self, num: u64, den: u64) -> bool {
        self.next() % den < num
    }

    pub fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        &xs[self.below(xs.len())]
    }
}

/// Seed from TRIM_SEED when set, else the given default.
pub fn seed_from_env(default: u64) -> u64 {
    match std::env::var("TRIM_SEED") {
        Ok(s) => s.trim().parse().unwrap_or(default),
        Err(_) => default,
    }
}

/// A loop-free, call-free statement plus a random postcondition, for
/// comparing the inferred condition against brute-forced weakest
/// preconditions. Scalars are `a`/`b`, pointers `p`/`q` aimed at the two
/// seeded cells; no malloc, so the logical heap and the machine heap agree
/// on every address the statement can touch.
pub fn gen_wp_case(rng: &mut Rng) -> (Stmt, Formula) {
    let heapless = rng.chance(3, 5);
    let mut gen = WpGen { rng, muls: 0, quants: 0, heapless };
    let len = gen.rng.range(1, 6) as usize;
    let stmts: Vec<Stmt> = (0..len).map(|_| gen.stmt(0)).collect();
    let post = gen.post();
    (Stmt::seq(stmts), post)
}

struct WpGen<'a> {
    rng: &'a mut Rng,
    muls: usize,
    quants: usize,
    heapless: bool,
}

const SCALARS: [&str; 2] = ["a", "b"];
const POINTERS: [&str; 2] = ["p", "q"];

impl WpGen<'_> {
    fn scalar(&mut self) -> Ident {
        self.rng.pick(&SCALARS).to_string()
    }

    fn pointer(&mut self) -> Ident {
        self.rng.pick(&POINTERS).to_string()
    }

    fn expr(&mut self, depth: usize) -> Expr {
        let leaf = depth >= 2 || self.rng.chance(1, 2);
        if leaf {
            if self.rng.chance(1, 2) {
                Expr::Var(self.scalar())
            } else {
                Expr::Int(self.rng.range(-3, 3))
            }
        } else {
            let op = if self.muls < 2 && self.rng.chance(1, 4) {
                self.muls += 1;
                ArithOp::Mul
            } else if self.rng.chance(1, 2) {
                ArithOp::Add
            } else {
                ArithOp::Sub
            };
            Expr::bin(op, self.expr(depth + 1), self.expr(depth + 1))
        }
    }

    fn cmp(&mut self) -> Pred {
        let op = *self.rng.pick(&[CmpOp::Eq, CmpOp::Lt, CmpOp::Gt]);
        let p = Pred::Cmp(op, self.expr(1), self.expr(1));
        if self.rng.chance(1, 4) {
            Pred::not(p)
        } else {
            p
        }
    }

    fn stmt(&mut self, depth: usize) -> Stmt {
        let mut roll = self.rng.below(8);
        if self.heapless && matches!(roll, 3 | 4) {
            roll = 0;
        }
        if depth >= 1 && roll == 7 {
            roll = 1;
        }
        match roll {
            0 | 1 => Stmt::Assign { dst: self.scalar(), src: self.expr(0) },
            2 => {
                if self.quants < 2 {
                    self.quants += 1;
                    Stmt::NondetAssign { dst: self.scalar() }
                } else {
                    Stmt::Assign { dst: self.scalar(), src: self.expr(0) }
                }
            }
            3 => Stmt::HeapLoad { dst: self.scalar(), src: self.pointer() },
            4 => Stmt::HeapStore { dst: self.pointer(), src: self.expr(1) },
            5 => Stmt::Assume(self.cmp()),
            6 => Stmt::Assert(self.cmp()),
            _ => Stmt::NondetIf(
                Box::new(self.stmt(depth + 1)),
                Box::new(self.stmt(depth + 1)),
            ),
        }
    }

    fn post_atom(&mut self) -> Formula {
        let term = |g: &mut WpGen| -> Term {
            match g.rng.below(4) {
                0 => Term::var(g.scalar()),
                1 => Term::Int(g.rng.range(-3, 3)),
                2 if !g.heapless => Term::drf(Term::var(g.pointer())),
                _ => Term::bin(
                    ArithOp::Add,
                    Term::var(g.scalar()),
                    Term::Int(g.rng.range(-2, 2)),
                ),
            }
        };
        let op = *self.rng.pick(&[CmpOp::Eq, CmpOp::Lt, CmpOp::Gt]);
        let a = term(self);
        let b = term(self);
        Formula::cmp(op, a, b)
    }

    fn post(&mut self) -> Formula {
        let mut f = self.post_atom();
        for _ in 0..self.rng.below(3) {
            let g = self.post_atom();
            f = if self.rng.chance(1, 2) {
                Formula::and(f, g)
            } else {
                Formula::or(f, g)
            };
        }
        if self.rng.chance(1, 5) {
            f = Formula::not(f);
        }
        f
    }
}

/// Scalar-only multi-procedure programs for the end-to-end suites: up to
/// three procedures, guarded self-recursion that always walks a parameter
/// down to zero, call arguments restricted to caller parameters so every
/// value a call can return stays in a small known range.
pub fn gen_corpus_program(rng: &mut Rng) -> Program {
    let callees = rng.below(3);
    let mut procedures = Vec::new();
    // Declaration order: callees first keeps call targets resolvable
    // without mattering semantically.
    if callees >= 2 {
        procedures.push(gen_proc(rng, "g", &[], &[], true));
    }
    if callees >= 1 {
        let callable = if callees >= 2 { vec!["g"] } else { vec![] };
        procedures.push(gen_proc(rng, "f", &callable, &[], true));
    }
    let callable: Vec<&str> = match callees {
        0 => vec![],
        1 => vec!["f"],
        _ => vec!["f", "g"],
    };
    // A callee nobody calls is dead code: its asserts never fire and no
    // mutation can surface them. Patch coverage gaps in main alone; forcing
    // a call from every procedure would multiply invocation counts and blow
    // the exploration budgets downstream.
    let covered: BTreeSet<Ident> = procedures
        .iter()
        .flat_map(|p| p.body.leaves())
        .filter_map(|s| match s {
            Stmt::Call { proc, .. } => Some(proc.clone()),
            _ => None,
        })
        .collect();
    let must_call: Vec<&str> = callable
        .iter()
        .copied()
        .filter(|t| !covered.contains(*t))
        .collect();
    procedures.push(gen_proc(rng, "main", &callable, &must_call, false));
    let program = Program { procedures, entry: "main".into() };
    debug_assert!(program.validate().is_ok(), "{program:?}");
    program
}

fn gen_proc(
    rng: &mut Rng,
    name: &str,
    callable: &[&str],
    must_call: &[&str],
    recursive_ok: bool,
) -> Procedure {
    let params: Vec<Ident> = if name == "main" {
        (0..rng.range(1, 2)).map(|i| ["a", "b"][i as usize].to_string()).collect()
    } else {
        vec!["n".to_string()]
    };
    let ret = "r".to_string();
    let mut scope = Scope::new(&params);
    let mut body: Vec<Stmt> = Vec::new();
    let mut calls = 0usize;
    let mut nondets = 0usize;
    let is_main = name == "main";

    let top = rng.range(3, 6) as usize;
    for _ in 0..top {
        body.push(gen_corpus_stmt(
            rng,
            name,
            callable,
            recursive_ok,
            &params,
            &mut scope,
            &mut calls,
            &mut nondets,
            0,
        ));
    }
    if is_main {
        // Keep at least one always-reached assertion so mutations bite and
        // failing inputs exist for the watch suite. Parameters are defined
        // from the start and never reassigned here.
        let at = rng.below(body.len() + 1);
        body.insert(at, Stmt::Assert(corpus_assert_pred(rng, &params, &params)));
    }
    for target in must_call {
        let called = body
            .iter()
            .flat_map(|s| s.leaves())
            .any(|s| matches!(s, Stmt::Call { proc, .. } if proc == target));
        if !called && !params.is_empty() {
            let arg = rng.pick(&params).clone();
            body.push(Stmt::Call {
                dst: "t".to_string(),
                proc: target.to_string(),
                args: vec![arg],
            });
        }
    }
    // Pin the return value to a constant or a parameter offset so callers
    // can always find it inside the exploration domain.
    let ret_src = if !params.is_empty() && rng.chance(1, 2) {
        let p = rng.pick(&params).clone();
        match rng.below(3) {
            0 => Expr::var(p),
            1 => Expr::bin(ArithOp::Add, Expr::var(p), Expr::Int(1)),
            _ => Expr::bin(ArithOp::Sub, Expr::var(p), Expr::Int(1)),
        }
    } else {
        Expr::Int(rng.range(-2, 2))
    };
    body.push(Stmt::Assign { dst: ret.clone(), src: ret_src });
    Procedure { name: name.into(), params, ret, body: Stmt::seq(body) }
}

#[allow(clippy::too_many_arguments)]
fn gen_corpus_stmt(
    rng: &mut Rng,
    me: &str,
    callable: &[&str],
    recursive_ok: bool,
    params: &[Ident],
    avail: &mut Vec<Ident>,
    det: &mut Vec<Ident>,
    calls: &mut usize,
    nondets: &mut usize,
    depth: usize,
) -> Stmt {
    let fresh_locals = ["t", "u", "v"];
    let roll = rng.below(10);
    match roll {
        0 | 1 | 2 => {
            let dst = fresh_locals[rng.below(3)].to_string();
            let src = corpus_expr(rng, avail);
            if !avail.contains(&dst) {
                avail.push(dst.clone());
            }
            set_det(det, &dst, expr_is_det(&src, det));
            Stmt::Assign { dst, src }
        }
        3 => {
            if *nondets >= 1 {
                return Stmt::Assume(corpus_assume_pred(rng, params, avail));
            }
            *nondets += 1;
            let dst = fresh_locals[rng.below(3)].to_string();
            if !avail.contains(&dst) {
                avail.push(dst.clone());
            }
            set_det(det, &dst, false);
            Stmt::NondetAssign { dst }
        }
        4 => Stmt::Assume(corpus_assume_pred(rng, params, avail)),
        5 => Stmt::Assert(corpus_assert_pred(rng, params, det)),
        6 | 7 if *calls < 2 && (!callable.is_empty() || recursive_ok) => {
            let first_call = *calls == 0;
            *calls += 1;
            let recurse =
                first_call && (callable.is_empty() || (recursive_ok && rng.chance(1, 3)));
            let dst = fresh_locals[rng.below(3)].to_string();
            if recurse && !params.is_empty() {
                // Bounded self-recursion, at most one site per procedure: a
                // second one makes the path tree exponential in the argument.
                // The argument strictly decreases and the guard cuts at zero.
                // Decrement a branch-local copy so the parameter keeps its
                // input value on the fall-through side; `d` never joins
                // `avail`, the call only happens on one side.
                let n = rng.pick(params).clone();
                let dec = Stmt::Assign {
                    dst: "d".to_string(),
                    src: Expr::bin(ArithOp::Sub, Expr::var(n.clone()), Expr::Int(1)),
                };
                let call = Stmt::Call { dst, proc: me.into(), args: vec!["d".to_string()] };
                let guard = Pred::Cmp(CmpOp::Gt, Expr::var(n.clone()), Expr::Int(0));
                Stmt::NondetIf(
                    Box::new(Stmt::seq(vec![Stmt::Assume(guard.clone()), dec, call])),
                    Box::new(Stmt::Assume(Pred::not(guard))),
                )
            } else if let Some(target) = (!callable.is_empty())
                .then(|| rng.pick(callable).to_string())
            {
                let arg = if params.is_empty() {
                    // Unreachable with the current shapes; keep it total.
                    return Stmt::Assume(Pred::Bool(true));
                } else {
                    rng.pick(params).clone()
                };
                if !avail.contains(&dst) {
                    avail.push(dst.clone());
                }
                // Callees pin the return to a constant or an offset of their
                // argument, so for a fixed input every surviving path sees
                // the same value here.
                set_det(det, &dst, true);
                Stmt::Call { dst, proc: target, args: vec![arg] }
            } else {
                Stmt::Assume(corpus_assume_pred(rng, params, avail))
            }
        }
        8 | 9 if depth == 0 => {
            let guard = corpus_pred(rng, avail);
            // Arms get a scratch copy: a variable first assigned inside one
            // branch is not definitely assigned after the join.
            let mut scratch_a = avail.clone();
            let mut det_a = det.clone();
            let a = gen_corpus_stmt(
                rng, me, callable, false, params, &mut scratch_a, &mut det_a, calls, nondets,
                depth + 1,
            );
            let mut scratch_b = avail.clone();
            let mut det_b = det.clone();
            let b = gen_corpus_stmt(
                rng, me, callable, false, params, &mut scratch_b, &mut det_b, calls, nondets,
                depth + 1,
            );
            // Anything written in either arm holds path-dependent values
            // after the join, even when both writes were deterministic.
            let mut written = BTreeSet::new();
            collect_writes(&a, &mut written);
            collect_writes(&b, &mut written);
            det.retain(|v| !written.contains(v));
            Stmt::NondetIf(
                Box::new(Stmt::seq(vec![Stmt::Assume(guard.clone()), a])),
                Box::new(Stmt::seq(vec![Stmt::Assume(Pred::not(guard)), b])),
            )
        }
        _ => {
            let src = corpus_expr(rng, avail);
            let dst = "t".to_string();
            if !avail.contains(&dst) {
                avail.push(dst.clone());
            }
            set_det(det, &dst, expr_is_det(&src, det));
            Stmt::Assign { dst, src }
        }
    }
}

fn expr_is_det(e: &Expr, det: &[Ident]) -> bool {
    let mut vars = BTreeSet::new();
    e.free_vars(&mut vars);
    vars.iter().all(|v| det.contains(v))
}

fn set_det(det: &mut Vec<Ident>, v: &str, is_det: bool) {
    let pos = det.iter().position(|d| d == v);
    match (pos, is_det) {
        (None, true) => det.push(v.to_string()),
        (Some(i), false) => {
            det.remove(i);
        }
        _ => {}
    }
}

fn collect_writes(s: &Stmt, out: &mut BTreeSet<Ident>) {
    for leaf in s.leaves() {
        match leaf {
            Stmt::Assign { dst, .. }
            | Stmt::HeapLoad { dst, .. }
            | Stmt::Malloc { dst, .. }
            | Stmt::Call { dst, .. }
            | Stmt::NondetAssign { dst } => {
                out.insert(dst.clone());
            }
            _ => {}
        }
    }
}

fn corpus_expr(rng: &mut Rng, avail: &[Ident]) -> Expr {
    match rng.below(4) {
        0 => Expr::Int(rng.range(-2, 2)),
        1 => Expr::var(rng.pick(avail).clone()),
        2 => Expr::bin(
            ArithOp::Add,
            Expr::var(rng.pick(avail).clone()),
            Expr::Int(rng.range(-1, 1)),
        ),
        _ => Expr::bin(
            ArithOp::Sub,
            Expr::var(rng.pick(avail).clone()),
            Expr::var(rng.pick(avail).clone()),
        ),
    }
}

fn corpus_pred(rng: &mut Rng, avail: &[Ident]) -> Pred {
    let op = *rng.pick(&[CmpOp::Eq, CmpOp::Lt, CmpOp::Gt]);
    let lhs = rng.pick(avail).clone();
    // Comparing a variable to itself is a constant and can deaden the whole
    // rest of the procedure; always pick a different right-hand side.
    let others: Vec<&Ident> = avail.iter().filter(|v| **v != lhs).collect();
    let rhs = if others.is_empty() || rng.chance(1, 2) {
        Expr::Int(rng.range(-2, 2))
    } else {
        Expr::var((*rng.pick(&others)).clone())
    };
    let p = Pred::Cmp(op, Expr::var(lhs), rhs);
    if rng.chance(1, 4) {
        Pred::not(p)
    } else {
        p
    }
}

/// Assert predicates hold on most executions under the generator's value
/// discipline, with an input-dependent minority. Programs that fail on every
/// input, whether through an always-false predicate or through some
/// nondeterministic path always finding a bad value, make single-assert
/// mutations unobservable and collapse safety conditions to false. So the
/// wide forms range over path-independent variables, and the failing forms
/// over parameters only: a deterministic local can still be constant (`t - t`,
/// a pinned call result), and a sharp predicate on a constant is uniformly
/// true or uniformly false instead of carving out a few bad inputs.
fn corpus_assert_pred(rng: &mut Rng, params: &[Ident], det: &[Ident]) -> Pred {
    if params.is_empty() || rng.chance(2, 3) {
        // Holds for every reachable value, give or take an extreme input.
        if det.is_empty() {
            return Pred::Cmp(CmpOp::Lt, Expr::Int(0), Expr::Int(1));
        }
        let v = Expr::var(rng.pick(det).clone());
        let wide = rng.range(5, 7);
        match rng.below(3) {
            0 => Pred::Cmp(CmpOp::Lt, v, Expr::Int(wide)),
            1 => Pred::Cmp(CmpOp::Gt, v, Expr::Int(-wide)),
            _ => Pred::not(Pred::Cmp(CmpOp::Eq, v, Expr::Int(wide))),
        }
    } else {
        let v = Expr::var(rng.pick(params).clone());
        if rng.chance(2, 3) {
            // Fails exactly where the parameter hits one small value.
            Pred::not(Pred::Cmp(CmpOp::Eq, v, Expr::Int(rng.range(-2, 2))))
        } else if rng.chance(1, 2) {
            // Fails on a tail of the range.
            Pred::Cmp(CmpOp::Lt, v, Expr::Int(rng.range(2, 4)))
        } else {
            Pred::Cmp(CmpOp::Gt, v, Expr::Int(-rng.range(2, 4)))
        }
    }
}

/// Straight-line assumes prune a sliver of the space: a parameter
/// disequality or a threshold most values clear. A strong assume here gates
/// everything after it for every caller, and inside a recursive procedure
/// its dead zone swallows the whole argument range as the depth walks the
/// argument down, leaving the asserts behind it unreachable. Branch guards
/// keep the unrestricted family; their arms are complementary, so one side
/// always survives.
fn corpus_assume_pred(rng: &mut Rng, params: &[Ident], avail: &[Ident]) -> Pred {
    if !params.is_empty() && rng.chance(1, 2) {
        Pred::not(Pred::Cmp(
            CmpOp::Eq,
            Expr::var(rng.pick(params).clone()),
            Expr::Int(rng.range(-2, 2)),
        ))
    } else {
        let v = Expr::var(rng.pick(avail).clone());
        let wide = rng.range(4, 6);
        if rng.chance(1, 2) {
            Pred::Cmp(CmpOp::Lt, v, Expr::Int(wide))
        } else {
            Pred::Cmp(CmpOp::Gt, v, Expr::Int(-wide))
        }
    }
}

/// Negate the predicate of one randomly chosen assert. None when the
/// program has no asserts.
pub fn negate_one_assert(program: &Program, rng: &mut Rng) -> Option<Program> {
    let mut total = 0usize;
    for p in &program.procedures {
        total += count_asserts(&p.body);
    }
    if total == 0 {
        return None;
    }
    let target = rng.below(total);
    let mut seen = 0usize;
    let mut out = program.clone();
    for p in &mut out.procedures {
        flip_assert(&mut p.body, target, &mut seen);
    }
    Some(out)
}

fn count_asserts(s: &Stmt) -> usize {
    match s {
        Stmt::Assert(_) => 1,
        Stmt::Seq(a, b) | Stmt::NondetIf(a, b) => count_asserts(a) + count_asserts(b),
        _ => 0,
    }
}

fn flip_assert(s: &mut Stmt, target: usize, seen: &mut usize) {
    match s {
        Stmt::Assert(p) => {
            if *seen == target {
                *p = Pred::not(p.clone());
            }
            *seen += 1;
        }
        Stmt::Seq(a, b) | Stmt::NondetIf(a, b) => {
            flip_assert(a, target, seen);
            flip_assert(b, target, seen);
        }
        _ => {}
    }
}

/// Random formulas over `x`, `y`, `z`, occasionally dereferencing, with
/// shallow quantifiers, for the weakening-soundness suite.
pub fn gen_formula(rng: &mut Rng) -> Formula {
    gen_formula_at(rng, 0, &mut 0)
}

fn gen_formula_at(rng: &mut Rng, depth: usize, quants: &mut usize) -> Formula {
    let leaf = depth >= 3 || rng.chance(2, 5);
    if leaf {
        return gen_atom(rng);
    }
    match rng.below(6) {
        0 => Formula::and(
            gen_formula_at(rng, depth + 1, quants),
            gen_formula_at(rng, depth + 1, quants),
        ),
        1 => Formula::or(
            gen_formula_at(rng, depth + 1, quants),
            gen_formula_at(rng, depth + 1, quants),
        ),
        2 => Formula::not(gen_formula_at(rng, depth + 1, quants)),
        3 => Formula::implies(
            gen_formula_at(rng, depth + 1, quants),
            gen_formula_at(rng, depth + 1, quants),
        ),
        _ if *quants < 2 => {
            *quants += 1;
            let v = if *quants == 1 { "q1" } else { "q2" };
            let body = gen_quant_body(rng, v, depth + 1, quants);
            if rng.chance(1, 2) {
                Formula::forall(v, body)
            } else {
                Formula::exists(v, body)
            }
        }
        _ => gen_atom(rng),
    }
}

/// Quantified variables appear in one or two literals of the form `v op t`
/// with `t` shallow and `v`-free. That keeps every witness within a couple
/// of units of a term value, so enumeration over a modest domain decides
/// the quantifier exactly.
fn gen_quant_body(rng: &mut Rng, v: &str, depth: usize, quants: &mut usize) -> Formula {
    let mut body = pin_literal(rng, v);
    if rng.chance(1, 3) {
        let second = pin_literal(rng, v);
        body = if rng.chance(1, 2) {
            Formula::and(body, second)
        } else {
            Formula::or(body, second)
        };
    }
    if rng.chance(1, 2) {
        body
    } else {
        let rest = gen_formula_at(rng, depth + 1, quants);
        if rng.chance(1, 2) {
            Formula::and(body, rest)
        } else {
            Formula::or(body, rest)
        }
    }
}

fn pin_literal(rng: &mut Rng, v: &str) -> Formula {
    let atom = Formula::cmp(
        *rng.pick(&[CmpOp::Eq, CmpOp::Lt, CmpOp::Gt]),
        Term::var(v),
        gen_term(rng, 1),
    );
    if rng.chance(1, 4) {
        Formula::not(atom)
    } else {
        atom
    }
}

fn gen_atom(rng: &mut Rng) -> Formula {
    if rng.chance(1, 12) {
        return Formula::Bool(rng.chance(1, 2));
    }
    let op = *rng.pick(&[CmpOp::Eq, CmpOp::Lt, CmpOp::Gt]);
    let a = gen_term(rng, 0);
    let b = gen_term(rng, 0);
    Formula::cmp(op, a, b)
}

fn gen_term(rng: &mut Rng, depth: usize) -> Term {
    let vars = ["x", "y", "z"];
    if depth >= 2 || rng.chance(1, 2) {
        if rng.chance(3, 20) {
            return Term::drf(Term::var(*rng.pick(&vars)));
        }
        return if rng.chance(1, 2) {
            Term::var(*rng.pick(&vars))
        } else {
            Term::Int(rng.range(-3, 3))
        };
    }
    match rng.below(3) {
        0 => Term::bin(ArithOp::Add, gen_term(rng, depth + 1), gen_term(rng, depth + 1)),
        1 => Term::bin(ArithOp::Sub, gen_term(rng, depth + 1), gen_term(rng, depth + 1)),
        _ => Term::bin(ArithOp::Mul, Term::Int(rng.range(-2, 2)), gen_term(rng, depth + 1)),
    }
}

/// Small heap programs exercising allocation, aliasing, and writes through
/// parameters, for the runtime alias and mod-set monitors.
pub fn gen_heap_program(rng: &mut Rng) -> Program {
    let mut body: Vec<Stmt> = Vec::new();
    let mut ptrs: Vec<Ident> = vec!["p0".into()];
    body.push(Stmt::Malloc { dst: "p0".into(), size: Expr::Int(rng.range(1, 2)) });
    let len = rng.range(3, 8) as usize;
    let mut scalars: Vec<Ident> = vec!["a".into()];
    for i in 0..len {
        match rng.below(6) {
            0 => {
                let dst = format!("p{}", ptrs.len());
                body.push(Stmt::Malloc { dst: dst.clone(), size: Expr::Int(rng.range(1, 2)) });
                ptrs.push(dst);
            }
            1 => {
                let dst = format!("p{}", ptrs.len());
                let src = rng.pick(&ptrs).clone();
                body.push(Stmt::Assign { dst: dst.clone(), src: Expr::var(src) });
                ptrs.push(dst);
            }
            2 => {
                let dst = rng.pick(&ptrs).clone();
                let src = if rng.chance(1, 2) {
                    Expr::Int(rng.range(-1, 1))
                } else {
                    Expr::var(rng.pick(&scalars).clone())
                };
                body.push(Stmt::HeapStore { dst, src });
            }
            3 => {
                let dst = format!("s{i}");
                body.push(Stmt::HeapLoad { dst: dst.clone(), src: rng.pick(&ptrs).clone() });
                scalars.push(dst);
            }
            4 => {
                let callee = if rng.chance(1, 2) { "w1" } else { "w2" };
                let arg = rng.pick(&ptrs).clone();
                body.push(Stmt::Call { dst: format!("c{i}"), proc: callee.into(), args: vec![arg] });
            }
            _ => {
                let dst = rng.pick(&scalars).clone();
                body.push(Stmt::Assign {
                    dst,
                    src: Expr::bin(
                        ArithOp::Add,
                        Expr::var(rng.pick(&scalars).clone()),
                        Expr::Int(rng.range(-1, 1)),
                    ),
                });
            }
        }
    }
    body.push(Stmt::Assign { dst: "r".into(), src: Expr::var(rng.pick(&scalars).clone()) });

    let w1 = Procedure {
        name: "w1".into(),
        params: vec!["x".into()],
        ret: "r".into(),
        body: Stmt::seq(vec![
            Stmt::HeapStore { dst: "x".into(), src: Expr::Int(7) },
            Stmt::Assign { dst: "r".into(), src: Expr::Int(0) },
        ]),
    };
    let w2 = Procedure {
        name: "w2".into(),
        params: vec!["x".into()],
        ret: "r".into(),
        body: Stmt::seq(vec![
            Stmt::HeapLoad { dst: "t".into(), src: "x".into() },
            Stmt::HeapStore { dst: "x".into(), src: Expr::bin(ArithOp::Add, Expr::var("t"), Expr::Int(1)) },
            Stmt::Assign { dst: "r".into(), src: Expr::var("t") },
        ]),
    };
    let main = Procedure {
        name: "main".into(),
        params: vec!["a".into()],
        ret: "r".into(),
        body: Stmt::seq(body),
    };
    let program = Program { procedures: vec![w1, w2, main], entry: "main".into() };
    debug_assert!(program.validate().is_ok(), "{program:?}");
    program
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::print::print_program;
    use std::collections::BTreeSet;

    #[test]
    fn rng_is_deterministic() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next(), b.next());
        }
        let mut c = Rng::new(43);
        assert_ne!(a.next(), c.next());
    }

    #[test]
    fn range_is_inclusive() {
        let mut rng = Rng::new(7);
        let mut seen = BTreeSet::new();
        for _ in 0..200 {
            let v = rng.range(-2, 2);
            assert!((-2..=2).contains(&v));
            seen.insert(v);
        }
        assert_eq!(seen.len(), 5);
    }

    #[test]
    fn wp_cases_stay_in_fragment() {
        let mut rng = Rng::new(1);
        for _ in 0..200 {
            let (stmt, _) = gen_wp_case(&mut rng);
            assert!(!has_call_or_malloc(&stmt));
        }
    }

    fn has_call_or_malloc(s: &Stmt) -> bool {
        match s {
            Stmt::Call { .. } | Stmt::Malloc { .. } => true,
            Stmt::Seq(a, b) | Stmt::NondetIf(a, b) => {
                has_call_or_malloc(a) || has_call_or_malloc(b)
            }
            _ => false,
        }
    }

    #[test]
    fn corpus_programs_validate_and_have_entry_asserts() {
        let mut rng = Rng::new(3);
        for _ in 0..100 {
            let p = gen_corpus_program(&mut rng);
            p.validate().unwrap_or_else(|e| panic!("{e:?}\n{}", print_program(&p)));
            let entry = p.entry_procedure().unwrap();
            assert!(count_asserts(&entry.body) >= 1);
        }
    }

    #[test]
    fn mutation_changes_exactly_one_assert() {
        let mut rng = Rng::new(9);
        let p = gen_corpus_program(&mut rng);
        let m = negate_one_assert(&p, &mut rng).unwrap();
        let a = print_program(&p);
        let b = print_program(&m);
        assert_ne!(a, b);
        let differing = a.lines().zip(b.lines()).filter(|(x, y)| x != y).count();
        assert_eq!(differing, 1);
    }

    #[test]
    fn heap_programs_validate() {
        let mut rng = Rng::new(5);
        for _ in 0..100 {
            let p = gen_heap_program(&mut rng);
            p.validate().unwrap_or_else(|e| panic!("{e:?}\n{}", print_program(&p)));
        }
    }

    #[test]
    fn formulas_have_bounded_quantifiers() {
        let mut rng = Rng::new(11);
        for _ in 0..200 {
            let f = gen_formula(&mut rng);
            assert!(quant_depth(&f) <= 2);
        }
    }

    fn quant_depth(f: &Formula) -> usize {
        match f {
            Formula::Forall(_, b) | Formula::Exists(_, b) => 1 + quant_depth(b),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                quant_depth(a).max(quant_depth(b))
            }
            Formula::Not(a) => quant_depth(a),
            _ => 0,
        }
    }
}
