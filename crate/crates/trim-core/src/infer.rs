//! Backward inference of safety conditions.
//!
//! For every statement the analysis computes a formula that is sufficient
//! for the rest of the procedure to run without an assertion failure: if the
//! condition holds before the statement, no execution from there can fail.
//! Its negation is therefore a sound trimming predicate. Procedures are
//! processed callees first; each procedure's entry condition (with the
//! return variable pinned to its initial 0) becomes a summary that call
//! sites instantiate with their actuals. Recursive groups fall back to
//! `false` summaries when the callee can reach an assertion, `true` when it
//! cannot.

use crate::alias::AliasInfo;
use crate::ast::{CmpOp, Ident, Path, Program, Step, Stmt};
use crate::formula::{Formula, Fresh, IntMode, Term};
use petgraph::graph::DiGraph;
use std::collections::BTreeMap;

#[derive(Clone, Debug)]
pub struct Inference {
    /// Per-procedure entry conditions with the return variable zeroed;
    /// free variables are a subset of the formals.
    pub summaries: BTreeMap<Ident, Formula>,
    /// Condition holding before each statement, keyed by path from the
    /// procedure body root. Inner `Seq` nodes carry the condition of their
    /// first leaf.
    pub annotations: BTreeMap<Ident, BTreeMap<Path, Formula>>,
}

/// Procedure indices in analysis order: callees before callers, declaration
/// order inside each recursive group.
pub fn analysis_order(program: &Program) -> Vec<usize> {
    let mut graph: DiGraph<(), ()> = DiGraph::new();
    let nodes: Vec<_> = program.procedures.iter().map(|_| graph.add_node(())).collect();
    let index: BTreeMap<&Ident, usize> = program
        .procedures
        .iter()
        .enumerate()
        .map(|(i, p)| (&p.name, i))
        .collect();
    for (i, p) in program.procedures.iter().enumerate() {
        for s in p.body.leaves() {
            if let Stmt::Call { proc: callee, .. } = s {
                if let Some(&j) = index.get(callee) {
                    graph.add_edge(nodes[i], nodes[j], ());
                }
            }
        }
    }
    let mut order = Vec::new();
    for scc in petgraph::algo::tarjan_scc(&graph) {
        let mut ids: Vec<usize> = scc.into_iter().map(|n| n.index()).collect();
        ids.sort_unstable();
        order.extend(ids);
    }
    order
}

pub fn infer_program(program: &Program, alias: &AliasInfo, mode: IntMode) -> Inference {
    let mut fresh = Fresh::for_program(program);
    let mut inf = Inference { summaries: BTreeMap::new(), annotations: BTreeMap::new() };
    for pi in analysis_order(program) {
        let p = &program.procedures[pi];
        let mut ctx = Ctx {
            program,
            alias,
            mode,
            summaries: &inf.summaries,
            proc: &p.name,
            fresh: &mut fresh,
            ann: BTreeMap::new(),
        };
        let mut path = Vec::new();
        let entry = ctx.infer(&p.body, Formula::tt(), &mut path);
        let ann = ctx.ann;
        let summary = entry.subst(&p.ret, &Term::Int(0), &mut fresh).simplify();
        debug_assert!(
            summary.free_var_set().iter().all(|v| p.params.contains(v)),
            "summary of {} mentions non-parameters: {}",
            p.name,
            summary
        );
        inf.summaries.insert(p.name.clone(), summary);
        inf.annotations.insert(p.name.clone(), ann);
    }
    inf
}

/// Condition before a single statement given the condition after it. Calls
/// inside `stmt` resolve against `summaries` (pass the map from a prior
/// `infer_program` run, or an empty one for call-free statements).
pub fn infer_stmt(
    program: &Program,
    alias: &AliasInfo,
    summaries: &BTreeMap<Ident, Formula>,
    mode: IntMode,
    proc: &str,
    stmt: &Stmt,
    post: Formula,
) -> Formula {
    let mut fresh = Fresh::for_program(program);
    let mut vars = std::collections::BTreeSet::new();
    post.all_vars(&mut vars);
    for v in &vars {
        fresh.reserve(v);
    }
    let mut ctx = Ctx {
        program,
        alias,
        mode,
        summaries,
        proc,
        fresh: &mut fresh,
        ann: BTreeMap::new(),
    };
    let mut path = Vec::new();
    ctx.infer(stmt, post, &mut path)
}

struct Ctx<'a> {
    program: &'a Program,
    alias: &'a AliasInfo,
    mode: IntMode,
    summaries: &'a BTreeMap<Ident, Formula>,
    proc: &'a str,
    fresh: &'a mut Fresh,
    ann: BTreeMap<Path, Formula>,
}

impl Ctx<'_> {
    /// Backward transfer: given the condition after `s`, returns the
    /// condition before it, recording it at `path`.
    fn infer(&mut self, s: &Stmt, post: Formula, path: &mut Path) -> Formula {
        let pre = match s {
            Stmt::Seq(a, b) => {
                path.push(Step::SeqR);
                let mid = self.infer(b, post, path);
                path.pop();
                path.push(Step::SeqL);
                let pre = self.infer(a, mid, path);
                path.pop();
                pre
            }
            Stmt::NondetIf(a, b) => {
                path.push(Step::Then);
                let t = self.infer(a, post.clone(), path);
                path.pop();
                path.push(Step::Else);
                let e = self.infer(b, post, path);
                path.pop();
                Formula::and(t, e).simplify()
            }
            Stmt::Assign { dst, src } => {
                let e = Term::from_expr(src);
                let mut phi = post.subst(dst, &e, self.fresh);
                if self.mode == IntMode::Wrap32 {
                    phi = Formula::conj(
                        std::iter::once(phi).chain(range_conjuncts(&e)).collect(),
                    );
                }
                phi.simplify()
            }
            Stmt::HeapLoad { dst, src } => post
                .subst(dst, &Term::drf(Term::var(src.clone())), self.fresh)
                .simplify(),
            Stmt::HeapStore { dst, src } => {
                let loc = Term::drf(Term::var(dst.clone()));
                let e = Term::from_expr(src);
                let mut phi = store_transfer(
                    &loc,
                    &e,
                    self.proc,
                    self.alias,
                    &post,
                    self.fresh,
                );
                if self.mode == IntMode::Wrap32 {
                    phi = Formula::conj(
                        std::iter::once(phi).chain(range_conjuncts(&e)).collect(),
                    );
                }
                phi.simplify()
            }
            Stmt::Malloc { dst, .. } | Stmt::NondetAssign { dst } => {
                Formula::forall(dst.clone(), post).simplify()
            }
            Stmt::Call { dst, proc: callee, args } => {
                let (locs, overflow) =
                    self.alias.call_mod_terms(self.program, callee, args);
                let havoced = havoc(&locs, post, self.proc, self.alias, self.fresh);
                let quantified = Formula::forall(dst.clone(), havoced);
                let summary = if overflow {
                    Formula::ff()
                } else {
                    self.summary_for(callee, args)
                };
                Formula::and(quantified, summary).simplify()
            }
            Stmt::Assert(p) => Formula::and(Formula::from_pred(p), post).simplify(),
            Stmt::Assume(p) => Formula::implies(Formula::from_pred(p), post).simplify(),
        };
        self.ann.insert(path.clone(), pre.clone());
        pre
    }

    /// Instantiates the callee's summary with the actuals (simultaneously,
    /// so argument swaps stay correct). An unanalyzed callee in the same
    /// recursive group contributes `false` if it can fail at all, else
    /// `true`.
    fn summary_for(&mut self, callee: &str, args: &[Ident]) -> Formula {
        match self.summaries.get(callee) {
            Some(f) => {
                let target = self.program.procedure(callee).expect("validated call");
                let map: BTreeMap<Ident, Term> = target
                    .params
                    .iter()
                    .zip(args)
                    .map(|(x, a)| (x.clone(), Term::var(a.clone())))
                    .collect();
                f.subst_parallel(&map, self.fresh)
            }
            None if self.alias.has_asserts(callee) => Formula::ff(),
            None => Formula::tt(),
        }
    }
}

/// Condition before `*loc := e` given `phi` after it: substitute `e` for the
/// stored cell, then pin every other dereference that may share the cell to
/// a different address. Dereferences of quantified addresses cannot be
/// pinned, so they collapse the condition to `false`.
fn store_transfer(
    loc: &Term,
    e: &Term,
    proc: &str,
    alias: &AliasInfo,
    phi: &Formula,
    fresh: &mut Fresh,
) -> Formula {
    let Term::Drf(addr) = loc else {
        // A scalar location behaves like an assignment of an arbitrary
        // value; callers quantify `e` as needed.
        unreachable!("stores always target dereferences");
    };
    let mut parts = vec![phi.replace_term(loc, e, fresh)];
    for (arg, bound_arg) in phi.deref_args() {
        if arg == **addr {
            continue; // occurrences of the stored cell itself got replaced
        }
        let cand = Term::drf(arg.clone());
        if bound_arg {
            // A quantified address may alias anything.
            return Formula::ff();
        }
        if !alias.may_alias_locs(proc, loc, &cand) {
            continue;
        }
        let after = arg.replace(loc, e);
        if after == **addr {
            continue; // the rewrite already folded this dereference away
        }
        parts.push(Formula::not(Formula::cmp(
            CmpOp::Eq,
            after,
            (**addr).clone(),
        )));
    }
    Formula::conj(parts)
}

/// Havocs every location a call may write: each becomes a store of a fresh
/// universally quantified value. `locs` arrives deepest-first so inner cells
/// are rewritten before the pointers that reach them.
fn havoc(
    locs: &[Term],
    phi: Formula,
    proc: &str,
    alias: &AliasInfo,
    fresh: &mut Fresh,
) -> Formula {
    let mut out = phi;
    for loc in locs {
        match loc {
            Term::Drf(_) => {
                let v = fresh.q();
                let stored =
                    store_transfer(loc, &Term::var(v.clone()), proc, alias, &out, fresh);
                out = Formula::forall(v, stored);
            }
            Term::Var(x) => {
                out = Formula::forall_binding(x, out, fresh);
            }
            _ => {}
        }
    }
    out
}

/// In 32-bit wrapping mode a substitution is only faithful while every
/// intermediate result stays in range, so each arithmetic node contributes
/// its bounds as extra conjuncts. States that would overflow are excluded
/// from the certified-safe set, which errs on the sound side.
fn range_conjuncts(e: &Term) -> Vec<Formula> {
    let mut bins = Vec::new();
    collect_bins(e, &mut bins);
    let mut out = Vec::new();
    for b in bins {
        out.push(Formula::not(Formula::cmp(
            CmpOp::Lt,
            b.clone(),
            Term::Int(i32::MIN as i64),
        )));
        out.push(Formula::not(Formula::cmp(
            CmpOp::Gt,
            b,
            Term::Int(i32::MAX as i64),
        )));
    }
    out
}

fn collect_bins(t: &Term, out: &mut Vec<Term>) {
    match t {
        Term::Bin(_, a, b) => {
            collect_bins(a, out);
            collect_bins(b, out);
            if !out.contains(t) {
                out.push(t.clone());
            }
        }
        Term::Drf(inner) => collect_bins(inner, out),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_program;

    fn run(src: &str) -> (Program, Inference) {
        let p = parse_program(src).unwrap();
        let alias = AliasInfo::analyze(&p);
        let inf = infer_program(&p, &alias, IntMode::Math);
        (p, inf)
    }

    fn eq(a: Term, b: Term) -> Formula {
        Formula::cmp(CmpOp::Eq, a, b)
    }

    fn v(name: &str) -> Term {
        Term::var(name)
    }

    #[test]
    fn assignment_substitutes_backward() {
        let (_, inf) = run("proc main(x) : r { r := x + 1; assert r > 0; }");
        assert_eq!(
            inf.summaries["main"],
            Formula::cmp(
                CmpOp::Gt,
                Term::bin(crate::ast::ArithOp::Add, v("x"), Term::Int(1)),
                Term::Int(0)
            )
        );
    }

    #[test]
    fn assume_discharges_matching_assert() {
        let (_, inf) = run("proc main(x) : r { assume x > 0; assert x > 0; r := 0; }");
        assert_eq!(inf.summaries["main"], Formula::tt());
    }

    #[test]
    fn nondet_quantifies_universally() {
        let (_, inf) = run("proc main() : r { x := nondet; assert x > 0; r := 0; }");
        // forall x. x > 0 is unsatisfiable over the integers.
        assert_eq!(inf.summaries["main"], Formula::ff());
    }

    #[test]
    fn load_introduces_dereference() {
        let (p, inf) = run("proc main(y) : t { t := *y; assert t = 3; }");
        let root = &inf.annotations["main"][&vec![] as &Path];
        assert_eq!(*root, eq(Term::drf(v("y")), Term::Int(3)));
        assert_eq!(p.procedures[0].params, vec!["y".to_string()]);
    }

    #[test]
    fn store_substitutes_and_pins_aliases() {
        // After the store, *y must already have been 3 unless x and y are
        // different cells.
        let (_, inf) = run(
            "proc main(x, y, a) : t { *x := a; t := *y; assert t = 3; }",
        );
        let ann = &inf.annotations["main"];
        let before_store = &ann[&vec![Step::SeqL] as &Path];
        assert_eq!(
            *before_store,
            Formula::and(
                eq(Term::drf(v("y")), Term::Int(3)),
                Formula::not(eq(v("x"), v("y")))
            ),
            "got {before_store}"
        );
    }

    #[test]
    fn worked_store_example_matches() {
        let src = "proc main(x, y, a) : t {
          if (*) {
            assume x = y;
            a := 3;
          } else {
            assume x != y;
            *y := 3;
          }
          *x := a;
          t := *y;
          assert t = 3;
        }";
        let (_, inf) = run(src);
        let ann = &inf.annotations["main"];
        // Before `*x := a`.
        assert_eq!(
            ann[&vec![Step::SeqR, Step::SeqL] as &Path],
            Formula::and(
                eq(Term::drf(v("y")), Term::Int(3)),
                Formula::not(eq(v("x"), v("y")))
            )
        );
        // Before `*y := 3` inside the else arm.
        assert_eq!(
            ann[&vec![Step::SeqL, Step::Else, Step::SeqR] as &Path],
            Formula::not(eq(v("x"), v("y")))
        );
        // Before `assume x != y`.
        assert_eq!(
            ann[&vec![Step::SeqL, Step::Else, Step::SeqL] as &Path],
            Formula::tt()
        );
    }

    #[test]
    fn summaries_instantiate_simultaneously() {
        let (_, inf) = run(
            "proc f(a, b) : r { assert a < b; }
             proc main(x, y) : r { r := call f(y, x); }",
        );
        assert_eq!(
            inf.summaries["main"],
            Formula::cmp(CmpOp::Lt, v("y"), v("x"))
        );
    }

    #[test]
    fn call_chains_compose() {
        let (_, inf) = run(
            "proc foo(x) : r { assert x > 10; }
             proc bar(a, x) : r { r := call foo(x); assert a < 100; }",
        );
        assert_eq!(
            inf.summaries["bar"],
            Formula::and(
                Formula::cmp(CmpOp::Lt, v("a"), Term::Int(100)),
                Formula::cmp(CmpOp::Gt, v("x"), Term::Int(10))
            )
        );
    }

    #[test]
    fn recursive_callee_with_asserts_summarizes_false() {
        let src = "proc fact(n) : r {
          r := 1;
          if (n != 0) {
            t := call fact(n - 1);
            r := n * t;
          } else {
          }
          assert n != 0 || r = 1;
        }

        proc main(m) : f {
          f := call fact(m);
        }";
        let (_, inf) = run(src);
        assert_eq!(inf.summaries["fact"], eq(v("n"), Term::Int(0)));
        assert_eq!(inf.summaries["main"], eq(v("m"), Term::Int(0)));
    }

    #[test]
    fn recursion_without_asserts_summarizes_true() {
        let src = "proc fact(n) : r {
          assume 0 <= n;
          r := 1;
          if (n != 0) {
            t := call fact(n - 1);
            r := n * t;
          } else {
          }
        }

        proc main(m) : f {
          f := call fact(m);
          assert m != 5 || f = 0;
        }";
        let (_, inf) = run(src);
        assert_eq!(inf.summaries["fact"], Formula::tt());
        assert_eq!(
            inf.summaries["main"],
            Formula::not(eq(v("m"), Term::Int(5)))
        );
    }

    #[test]
    fn havoc_erases_knowledge_of_written_cells() {
        let (_, inf) = run(
            "proc f(x) : r { *x := 0; }
             proc main(p) : s { t := *p; s := call f(p); u := *p; assert u = t; }",
        );
        // f may clobber *p, so no precondition certifies the assert.
        assert_eq!(inf.summaries["main"], Formula::ff());
    }

    #[test]
    fn wrap_mode_adds_range_conjuncts() {
        let p = parse_program("proc main(x) : r { r := x + 1; assert r > 0; }").unwrap();
        let alias = AliasInfo::analyze(&p);
        let inf = infer_program(&p, &alias, IntMode::Wrap32);
        let sum = &inf.summaries["main"];
        let conjs = sum.conjuncts();
        assert_eq!(conjs.len(), 3, "got {sum}");
    }

    #[test]
    fn single_statement_transform_matches_program_analysis() {
        let src = "proc main(x, y, a) : t { *x := a; t := *y; assert t = 3; }";
        let p = parse_program(src).unwrap();
        let alias = AliasInfo::analyze(&p);
        let inf = infer_program(&p, &alias, IntMode::Math);
        let store = Stmt::HeapStore {
            dst: "x".into(),
            src: crate::ast::Expr::Var("a".into()),
        };
        let post = eq(Term::drf(v("y")), Term::Int(3));
        let pre = infer_stmt(
            &p,
            &alias,
            &inf.summaries,
            IntMode::Math,
            "main",
            &store,
            post,
        );
        assert_eq!(pre, inf.annotations["main"][&vec![Step::SeqL] as &Path]);
    }

    #[test]
    fn summaries_only_mention_parameters() {
        let (p, inf) = run(
            "proc main(a, b) : r {
               x := a + b;
               p := malloc(2);
               *p := x;
               y := *p;
               if (*) { r := y; } else { r := call helper(y); }
               assert r >= 0;
             }
             proc helper(v) : w { w := v * v; assert w >= 0; }",
        );
        for proc in &p.procedures {
            let free = inf.summaries[&proc.name].free_var_set();
            assert!(free.iter().all(|v| proc.params.contains(v)));
        }
    }
}
