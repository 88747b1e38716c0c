//! Procedure splitting and assume insertion.
//!
//! Splitting prepares a program for modular trimming: every called procedure
//! `f` gets a twin `f__safe` with asserts demoted to assumes, and every call
//! site turns into a choice between "f runs cleanly" (the twin) and "f fails
//! inside" (the original, with an `assume false` sealing the return path).
//! Instrumentation then negates the inferred safety condition at selected
//! points of the original procedures and splices the result in as
//! executable assumes.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{Expr, Ident, Path, Pred, Procedure, Program, Step, Stmt};
use crate::engine::{trim_condition, EngineConfig};
use crate::formula::{Formula, Fresh, Term};
use crate::infer::Inference;

/// Where trimming assumes may be inserted.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Placement {
    AtEntry,
    BeforeCalls,
    BeforeConditionals,
}

impl Placement {
    pub fn all() -> BTreeSet<Placement> {
        [Placement::AtEntry, Placement::BeforeCalls, Placement::BeforeConditionals]
            .into_iter()
            .collect()
    }
}

/// A program rewritten for modular analysis, plus the bookkeeping the
/// instrumenter needs: where the encoded call sites are and which
/// procedures are the assert-free twins.
pub struct Split {
    pub program: Program,
    /// Per original procedure, the paths of the `if (*)` nodes that encode
    /// its call sites.
    pub call_sites: BTreeMap<Ident, Vec<Path>>,
    pub twins: BTreeSet<Ident>,
}

pub fn split_procedures(program: &Program) -> Split {
    let called: BTreeSet<Ident> = program
        .procedures
        .iter()
        .flat_map(|p| p.body.leaves())
        .filter_map(|s| match s {
            Stmt::Call { proc, .. } => Some(proc.clone()),
            _ => None,
        })
        .collect();

    // Twin names must not shadow anything already in the program.
    let taken = program.idents();
    let mut twin_name: BTreeMap<Ident, Ident> = BTreeMap::new();
    for name in &called {
        let mut candidate = format!("{name}__safe");
        while taken.contains(&candidate) || twin_name.values().any(|n| n == &candidate) {
            candidate.push('_');
        }
        twin_name.insert(name.clone(), candidate);
    }

    let mut procedures = Vec::new();
    let mut call_sites = BTreeMap::new();
    for p in &program.procedures {
        if let Some(twin) = twin_name.get(&p.name) {
            procedures.push(Procedure {
                name: twin.clone(),
                params: p.params.clone(),
                ret: p.ret.clone(),
                body: demote(&p.body, &twin_name),
            });
        }
        let mut sites = Vec::new();
        let mut path = Vec::new();
        let body = encode_calls(&p.body, &twin_name, &mut path, &mut sites);
        call_sites.insert(p.name.clone(), sites);
        procedures.push(Procedure {
            name: p.name.clone(),
            params: p.params.clone(),
            ret: p.ret.clone(),
            body,
        });
    }

    Split {
        program: Program { procedures, entry: program.entry.clone() },
        call_sites,
        twins: twin_name.into_values().collect(),
    }
}

/// Twin body: asserts cannot fire, and callees are committed to running
/// cleanly as well.
fn demote(s: &Stmt, twin_name: &BTreeMap<Ident, Ident>) -> Stmt {
    match s {
        Stmt::Seq(a, b) => Stmt::Seq(
            Box::new(demote(a, twin_name)),
            Box::new(demote(b, twin_name)),
        ),
        Stmt::NondetIf(a, b) => Stmt::NondetIf(
            Box::new(demote(a, twin_name)),
            Box::new(demote(b, twin_name)),
        ),
        Stmt::Assert(p) => Stmt::Assume(p.clone()),
        Stmt::Call { dst, proc, args } => Stmt::Call {
            dst: dst.clone(),
            proc: twin_name[proc].clone(),
            args: args.clone(),
        },
        leaf => leaf.clone(),
    }
}

/// Original bodies keep their asserts; each call either runs the clean twin
/// or the failing original whose return is sealed off.
fn encode_calls(
    s: &Stmt,
    twin_name: &BTreeMap<Ident, Ident>,
    path: &mut Path,
    sites: &mut Vec<Path>,
) -> Stmt {
    match s {
        Stmt::Seq(a, b) => {
            path.push(Step::SeqL);
            let a = encode_calls(a, twin_name, path, sites);
            path.pop();
            path.push(Step::SeqR);
            let b = encode_calls(b, twin_name, path, sites);
            path.pop();
            Stmt::Seq(Box::new(a), Box::new(b))
        }
        Stmt::NondetIf(a, b) => {
            path.push(Step::Then);
            let a = encode_calls(a, twin_name, path, sites);
            path.pop();
            path.push(Step::Else);
            let b = encode_calls(b, twin_name, path, sites);
            path.pop();
            Stmt::NondetIf(Box::new(a), Box::new(b))
        }
        Stmt::Call { dst, proc, args } => {
            sites.push(path.clone());
            let clean = Stmt::Call {
                dst: dst.clone(),
                proc: twin_name[proc].clone(),
                args: args.clone(),
            };
            let failing = Stmt::seq(vec![
                Stmt::Call { dst: dst.clone(), proc: proc.clone(), args: args.clone() },
                Stmt::Assume(Pred::Bool(false)),
            ]);
            Stmt::NondetIf(Box::new(clean), Box::new(failing))
        }
        leaf => leaf.clone(),
    }
}

/// A condition the trimmer asserted nothing about: any execution that later
/// fails an assert must satisfy `formula` when it passes `path` in `proc`
/// (paths refer to the split, pre-insertion program).
#[derive(Clone, Debug)]
pub struct Observation {
    pub proc: Ident,
    pub path: Path,
    pub formula: Formula,
}

#[derive(Clone, Debug)]
pub struct ReportEntry {
    pub proc: Ident,
    /// 1-based line of the assume in the printed output.
    pub line: u32,
    pub condition: String,
    pub exact: bool,
}

#[derive(Clone, Debug, Default)]
pub struct TrimReport {
    /// Inserted assume groups (a group counts once even when lowering added
    /// loads or nondet bindings around it).
    pub assumes: usize,
    /// Groups whose condition is not a constant.
    pub nontrivial: usize,
    pub entries: Vec<ReportEntry>,
}

pub struct Instrumented {
    pub program: Program,
    pub observations: Vec<Observation>,
    pub report: TrimReport,
}

/// Negates the inferred conditions of `inference` at the chosen placements
/// and splices the resulting assumes into the split program. Constant-true
/// conditions are dropped; constant-false ones (nothing downstream can
/// fail) are kept only at the entry procedure's first statement, and only
/// when `keep_trivial` is set.
pub fn instrument(
    split: &Split,
    inference: &Inference,
    engine: &EngineConfig,
    placements: &BTreeSet<Placement>,
    keep_trivial: bool,
) -> Instrumented {
    let program = &split.program;
    let mut fresh = Fresh::for_program(program);
    for per_proc in inference.annotations.values() {
        let mut vars = BTreeSet::new();
        for f in per_proc.values() {
            f.all_vars(&mut vars);
        }
        for v in &vars {
            fresh.reserve(v);
        }
    }

    let mut per_proc_ins: BTreeMap<usize, BTreeMap<Path, (usize, Vec<Stmt>)>> = BTreeMap::new();
    let mut observations = Vec::new();
    let mut meta: Vec<(Ident, String, bool)> = Vec::new();
    let mut assumes = 0usize;
    let mut nontrivial = 0usize;

    for (pi, proc) in program.procedures.iter().enumerate() {
        if split.twins.contains(&proc.name) {
            continue;
        }
        let entry_point = canonical_entry(&proc.body);
        let mut points: BTreeSet<Path> = BTreeSet::new();
        if placements.contains(&Placement::AtEntry) {
            points.insert(entry_point.clone());
        }
        if placements.contains(&Placement::BeforeCalls) {
            points.extend(split.call_sites.get(&proc.name).into_iter().flatten().cloned());
        }
        if placements.contains(&Placement::BeforeConditionals) {
            collect_conditionals(&proc.body, &mut Vec::new(), &mut points);
        }

        let annotations = match inference.annotations.get(&proc.name) {
            Some(a) => a,
            None => continue,
        };
        for path in points {
            let phi = match annotations.get(&path) {
                Some(f) => f,
                None => continue,
            };
            let cond = trim_condition(phi, engine, &mut fresh);
            match &cond.formula {
                Formula::Bool(true) => continue,
                Formula::Bool(false) => {
                    let at_root = proc.name == program.entry && path == entry_point;
                    if !(keep_trivial && at_root) {
                        continue;
                    }
                }
                _ => {}
            }

            let trivial = matches!(cond.formula, Formula::Bool(_));
            let observed = cond
                .nondet_vars
                .iter()
                .rev()
                .fold(cond.formula.clone(), |acc, q| Formula::exists(q.clone(), acc));
            observations.push(Observation {
                proc: proc.name.clone(),
                path: path.clone(),
                formula: observed,
            });

            let mut group = Vec::new();
            for q in &cond.nondet_vars {
                group.push(Stmt::NondetAssign { dst: q.clone() });
            }
            let pred = lower_condition(&cond.formula, &mut fresh, &mut group);
            group.push(Stmt::Assume(pred.clone()));

            let gid = meta.len();
            meta.push((proc.name.clone(), pred.to_string(), cond.exact));
            assumes += 1;
            if !trivial {
                nontrivial += 1;
            }
            per_proc_ins.entry(pi).or_default().insert(path, (gid, group));
        }
    }

    // Splice the groups in and track where each assume lands.
    let mut marks: BTreeMap<usize, (usize, Path)> = BTreeMap::new();
    let mut procedures = Vec::new();
    for (pi, proc) in program.procedures.iter().enumerate() {
        let body = match per_proc_ins.get_mut(&pi) {
            Some(ins) if !ins.is_empty() => {
                let mut items = Vec::new();
                to_items(&proc.body, &mut Vec::new(), ins, &mut items);
                let mut local = BTreeMap::new();
                let spliced = emit_items(items, &Vec::new(), &mut local);
                for (gid, path) in local {
                    marks.insert(gid, (pi, path));
                }
                spliced
            }
            _ => proc.body.clone(),
        };
        procedures.push(Procedure { body, ..proc.clone() });
    }
    let program = Program { procedures, entry: program.entry.clone() };

    let (_, lines) = crate::print::print_with_lines(&program);
    let mut entries = Vec::new();
    for (gid, (proc_name, condition, exact)) in meta.into_iter().enumerate() {
        let line = marks
            .get(&gid)
            .and_then(|key| lines.get(key))
            .copied()
            .unwrap_or(0);
        entries.push(ReportEntry { proc: proc_name, line, condition, exact });
    }
    entries.sort_by_key(|e| e.line);

    Instrumented {
        program,
        observations,
        report: TrimReport { assumes, nontrivial, entries },
    }
}

/// First executed statement of a body: the leftmost leaf of the `Seq` spine.
pub fn canonical_entry(body: &Stmt) -> Path {
    let mut path = Vec::new();
    let mut s = body;
    while let Stmt::Seq(a, _) = s {
        path.push(Step::SeqL);
        s = a;
    }
    path
}

fn collect_conditionals(s: &Stmt, path: &mut Path, out: &mut BTreeSet<Path>) {
    match s {
        Stmt::Seq(a, b) => {
            path.push(Step::SeqL);
            collect_conditionals(a, path, out);
            path.pop();
            path.push(Step::SeqR);
            collect_conditionals(b, path, out);
            path.pop();
        }
        Stmt::NondetIf(a, b) => {
            out.insert(path.clone());
            path.push(Step::Then);
            collect_conditionals(a, path, out);
            path.pop();
            path.push(Step::Else);
            collect_conditionals(b, path, out);
            path.pop();
        }
        _ => {}
    }
}

/// Rewrites heap reads in the condition into explicit loads so the result
/// is expressible as a program predicate. Loads go innermost-first, so a
/// nested `drf(drf(p))` becomes two temporaries.
fn lower_condition(f: &Formula, fresh: &mut Fresh, pre: &mut Vec<Stmt>) -> Pred {
    let mut f = f.clone();
    while let Some(read) = innermost_drf(&f) {
        let addr = match &read {
            Term::Drf(a) => (**a).clone(),
            _ => unreachable!(),
        };
        let src = match &addr {
            Term::Var(v) => v.clone(),
            other => {
                let tmp = fresh.t();
                pre.push(Stmt::Assign { dst: tmp.clone(), src: term_to_expr(other) });
                tmp
            }
        };
        let dst = fresh.t();
        pre.push(Stmt::HeapLoad { dst: dst.clone(), src });
        f = f.replace_term(&read, &Term::var(dst), fresh);
    }
    to_pred(&f)
}

/// Some heap read whose address is itself read-free, if any remain.
fn innermost_drf(f: &Formula) -> Option<Term> {
    fn in_term(t: &Term) -> Option<Term> {
        match t {
            Term::Var(_) | Term::Int(_) => None,
            Term::Bin(_, a, b) => in_term(a).or_else(|| in_term(b)),
            Term::Drf(a) => in_term(a).or_else(|| {
                if has_drf(a) {
                    None
                } else {
                    Some(t.clone())
                }
            }),
        }
    }
    fn has_drf(t: &Term) -> bool {
        match t {
            Term::Var(_) | Term::Int(_) => false,
            Term::Bin(_, a, b) => has_drf(a) || has_drf(b),
            Term::Drf(_) => true,
        }
    }
    match f {
        Formula::Bool(_) => None,
        Formula::Cmp(_, a, b) => in_term(a).or_else(|| in_term(b)),
        Formula::Not(p) => innermost_drf(p),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            innermost_drf(a).or_else(|| innermost_drf(b))
        }
        Formula::Forall(_, body) | Formula::Exists(_, body) => innermost_drf(body),
    }
}

fn term_to_expr(t: &Term) -> Expr {
    match t {
        Term::Var(v) => Expr::Var(v.clone()),
        Term::Int(n) => Expr::Int(*n),
        Term::Bin(op, a, b) => Expr::bin(*op, term_to_expr(a), term_to_expr(b)),
        Term::Drf(_) => panic!("heap read survived condition lowering"),
    }
}

fn to_pred(f: &Formula) -> Pred {
    match f {
        Formula::Bool(b) => Pred::Bool(*b),
        Formula::Cmp(op, a, b) => Pred::Cmp(*op, term_to_expr(a), term_to_expr(b)),
        Formula::Not(p) => Pred::not(to_pred(p)),
        Formula::And(a, b) => Pred::and(to_pred(a), to_pred(b)),
        Formula::Or(a, b) => Pred::or(to_pred(a), to_pred(b)),
        Formula::Implies(a, b) => Pred::or(Pred::not(to_pred(a)), to_pred(b)),
        Formula::Forall(..) | Formula::Exists(..) => {
            panic!("quantifier survived condition lowering")
        }
    }
}

/// A body as nested statement lists, with inserted assumes tagged so their
/// final paths can be recovered after the splice.
enum Item {
    Plain(Stmt),
    Mark(Stmt, usize),
    Branch(Vec<Item>, Vec<Item>),
}

fn to_items(
    s: &Stmt,
    path: &mut Path,
    ins: &mut BTreeMap<Path, (usize, Vec<Stmt>)>,
    out: &mut Vec<Item>,
) {
    if let Stmt::Seq(a, b) = s {
        path.push(Step::SeqL);
        to_items(a, path, ins, out);
        path.pop();
        path.push(Step::SeqR);
        to_items(b, path, ins, out);
        path.pop();
        return;
    }
    if let Some((gid, group)) = ins.remove(path.as_slice()) {
        let last = group.len() - 1;
        for (i, g) in group.into_iter().enumerate() {
            if i == last {
                out.push(Item::Mark(g, gid));
            } else {
                out.push(Item::Plain(g));
            }
        }
    }
    match s {
        Stmt::NondetIf(a, b) => {
            let mut then_items = Vec::new();
            path.push(Step::Then);
            to_items(a, path, ins, &mut then_items);
            path.pop();
            let mut else_items = Vec::new();
            path.push(Step::Else);
            to_items(b, path, ins, &mut else_items);
            path.pop();
            out.push(Item::Branch(then_items, else_items));
        }
        leaf => out.push(Item::Plain(leaf.clone())),
    }
}

fn emit_items(items: Vec<Item>, prefix: &Path, marks: &mut BTreeMap<usize, Path>) -> Stmt {
    let n = items.len();
    let mut stmts = Vec::with_capacity(n);
    for (j, item) in items.into_iter().enumerate() {
        let mut p = prefix.clone();
        p.extend(std::iter::repeat(Step::SeqR).take(j));
        if j + 1 < n {
            p.push(Step::SeqL);
        }
        let s = match item {
            Item::Plain(s) => s,
            Item::Mark(s, gid) => {
                marks.insert(gid, p.clone());
                s
            }
            Item::Branch(t, e) => {
                let mut tp = p.clone();
                tp.push(Step::Then);
                let mut ep = p.clone();
                ep.push(Step::Else);
                Stmt::NondetIf(
                    Box::new(emit_items(t, &tp, marks)),
                    Box::new(emit_items(e, &ep, marks)),
                )
            }
        };
        stmts.push(s);
    }
    Stmt::seq(stmts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alias::AliasInfo;
    use crate::formula::IntMode;
    use crate::infer::infer_program;
    use crate::parse::parse_program;
    use crate::print::print_program;

    fn pipeline(src: &str, placements: &BTreeSet<Placement>) -> (Instrumented, Split) {
        let program = parse_program(src).unwrap();
        program.validate().unwrap();
        let split = split_procedures(&program);
        split.program.validate().unwrap();
        let alias = AliasInfo::analyze(&split.program);
        let inference = infer_program(&split.program, &alias, IntMode::Math);
        let out = instrument(
            &split,
            &inference,
            &EngineConfig::default(),
            placements,
            true,
        );
        (out, split)
    }

    #[test]
    fn splitting_encodes_call_sites() {
        let src = "\
proc helper(x) : r {
  assert x > 0;
}

proc main(a) : r {
  r := call helper(a);
}
";
        let program = parse_program(src).unwrap();
        let split = split_procedures(&program);
        let names: Vec<&str> =
            split.program.procedures.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, vec!["helper__safe", "helper", "main"]);
        assert_eq!(split.call_sites["main"].len(), 1);
        assert!(split.call_sites["helper"].is_empty());
        let printed = print_program(&split.program);
        assert!(printed.contains("r := call helper__safe(a);"));
        assert!(printed.contains("assume x > 0;"));
        assert!(printed.contains("assert x > 0;"));
        split.program.validate().unwrap();
    }

    #[test]
    fn twin_calls_stay_clean() {
        let src = "\
proc inner(x) : r {
  assert x > 0;
}

proc outer(y) : r {
  r := call inner(y);
  assert r = 0;
}

proc main(a) : r {
  r := call outer(a);
}
";
        let program = parse_program(src).unwrap();
        let split = split_procedures(&program);
        let twin = split.program.procedure("outer__safe").unwrap();
        let leaves: Vec<&Stmt> = twin.body.leaves();
        // The twin calls the twin directly, with no branch and no assert.
        assert!(leaves.iter().all(|s| !matches!(s, Stmt::Assert(_))));
        assert!(!matches!(twin.body.seq_items()[0], Stmt::NondetIf(..)));
        assert!(leaves
            .iter()
            .any(|s| matches!(s, Stmt::Call { proc, .. } if proc == "inner__safe")));
        assert!(leaves
            .iter()
            .all(|s| !matches!(s, Stmt::Call { proc, .. } if proc == "inner")));
    }

    #[test]
    fn no_asserts_trims_everything_at_entry() {
        let src = "\
proc main() : r {
  r := 0;
}
";
        let (out, _) = pipeline(src, &Placement::all());
        assert_eq!(out.report.assumes, 1);
        assert_eq!(out.report.nontrivial, 0);
        let printed = print_program(&out.program);
        assert!(printed.contains("assume false;"));
    }

    #[test]
    fn trivial_false_suppressed_without_keep() {
        let src = "\
proc main() : r {
  r := 0;
}
";
        let program = parse_program(src).unwrap();
        let split = split_procedures(&program);
        let alias = AliasInfo::analyze(&split.program);
        let inference = infer_program(&split.program, &alias, IntMode::Math);
        let out = instrument(
            &split,
            &inference,
            &EngineConfig::default(),
            &Placement::all(),
            false,
        );
        assert_eq!(out.report.assumes, 0);
        assert!(!print_program(&out.program).contains("assume false;"));
    }

    #[test]
    fn entry_condition_lands_before_first_statement() {
        let src = "\
proc main(x) : r {
  r := x + 1;
  assert r > 0;
}
";
        let (out, _) = pipeline(src, &Placement::all());
        let printed = print_program(&out.program);
        let assume_at = printed.find("assume").unwrap();
        let assign_at = printed.find("r := x + 1;").unwrap();
        assert!(assume_at < assign_at);
        // not (x + 1 > 0), sugared.
        assert!(printed.contains("assume x + 1 <= 0;"), "{printed}");
        assert_eq!(out.report.assumes, 1);
        assert_eq!(out.report.nontrivial, 1);
        assert_eq!(out.report.entries[0].line, 2);
    }

    #[test]
    fn heap_conditions_lower_to_loads() {
        let src = "\
proc main(p) : r {
  r := *p;
  assert r = 3;
}
";
        let (out, _) = pipeline(src, &Placement::all());
        let printed = print_program(&out.program);
        assert!(printed.contains(":= *p;"));
        assert!(printed.contains("!= 3;"), "{printed}");
        // The load for the condition comes before the original one.
        let lowered = printed.match_indices(":= *p;").count();
        assert_eq!(lowered, 2);
    }

    #[test]
    fn observations_point_into_split_program() {
        let src = "\
proc main(x) : r {
  if (*) {
    assert x > 0;
  } else {
    r := x;
  }
}
";
        let (out, split) = pipeline(src, &Placement::all());
        assert!(!out.observations.is_empty());
        for obs in &out.observations {
            let proc = split.program.procedure(&obs.proc).unwrap();
            // Path resolves to a statement in the split program.
            let mut s = &proc.body;
            for step in &obs.path {
                s = match (step, s) {
                    (Step::SeqL, Stmt::Seq(a, _)) => a,
                    (Step::SeqR, Stmt::Seq(_, b)) => b,
                    (Step::Then, Stmt::NondetIf(a, _)) => a,
                    (Step::Else, Stmt::NondetIf(_, b)) => b,
                    _ => panic!("dangling observation path"),
                };
            }
        }
    }

    #[test]
    fn insertion_keeps_canonical_shape() {
        let src = "\
proc main(x, y) : r {
  if (*) {
    r := x;
  } else {
    r := y;
  }
  assert r > 0;
}
";
        let (out, _) = pipeline(src, &Placement::all());
        let printed = print_program(&out.program);
        let reparsed = parse_program(&printed).unwrap();
        assert_eq!(reparsed.procedures, out.program.procedures);
    }
}
