//! Reference interpreter and the checkers built on top of it.
//!
//! Execution is big-step and deterministic given a decision sequence: every
//! `if (*)`, `nondet`, and malloc'd cell consumes one decision. `run`
//! replays a fixed sequence; `explore` enumerates all sequences within the
//! configured bounds and reports anything truncated as inconclusive rather
//! than letting it pass silently. The exact-wp and equi-safety checkers are
//! small loops over `explore`, so the whole module stays an independent
//! ground truth for the analysis code.

use std::collections::{BTreeMap, BTreeSet};

use crate::alias::AliasInfo;
use crate::ast::{ArithOp, CmpOp, Expr, Ident, Path, Pred, Procedure, Program, Step, Stmt};
use crate::formula::{EvalEnv, Formula, IntMode, Term};
use crate::instrument::Observation;

pub type Valuation = BTreeMap<Ident, i64>;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Choice {
    Branch(bool),
    Value(i64),
}

/// Terminated execution tag: assert violation (the failure the trimmer
/// preserves), assume violation (a pruned path), or normal return.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Outcome {
    AssertViolation,
    AssumeViolation,
    Normal(i64),
}

impl Outcome {
    pub fn is_fail(&self) -> bool {
        matches!(self, Outcome::AssertViolation)
    }
}

/// Why a run did not terminate. Never conflated with an `Outcome`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Stop {
    StepBound,
    ForkBound,
    DecisionsExhausted,
    Overflow,
    PathBudget,
}

#[derive(thiserror::Error, Clone, PartialEq, Eq, Debug)]
#[error("decision {index}: expected a {expected} choice")]
pub struct ReplayError {
    pub index: usize,
    pub expected: &'static str,
}

#[derive(Clone, Debug)]
pub struct ExecConfig {
    /// Inclusive range nondeterministic values are drawn from.
    pub nondet_lo: i64,
    pub nondet_hi: i64,
    /// Max decisions consumed per run.
    pub fork_bound: usize,
    /// Max statements executed per run; recursion burns statements, so this
    /// also bounds call depth.
    pub step_bound: usize,
    /// Max paths (terminated or not) per exploration.
    pub max_paths: usize,
    /// First heap address malloc hands out; never 0, which is null.
    pub alloc_base: i64,
    pub int_mode: IntMode,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            nondet_lo: -3,
            nondet_hi: 3,
            fork_bound: 64,
            step_bound: 100_000,
            max_paths: 1 << 16,
            alloc_base: 1 << 20,
            int_mode: IntMode::Math,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ExecutionResult {
    pub outcome: Outcome,
    pub steps: usize,
    pub decisions: Vec<Choice>,
    /// Final entry-frame variables.
    pub vars: Valuation,
    pub heap: BTreeMap<i64, i64>,
    /// Watch evaluations recorded along the path, in visit order:
    /// (watch index, truth at that visit).
    pub observed: Vec<(usize, Option<bool>)>,
}

#[derive(Debug)]
pub enum RunResult {
    Done(ExecutionResult),
    Inconclusive(Stop),
}

#[derive(Debug, Default)]
pub struct Exploration {
    pub results: Vec<ExecutionResult>,
    pub inconclusive: usize,
    pub stops: Vec<Stop>,
    pub truncated: bool,
}

impl Exploration {
    pub fn total_paths(&self) -> usize {
        self.results.len() + self.inconclusive
    }

    pub fn has_fail(&self) -> bool {
        self.results.iter().any(|r| r.outcome.is_fail())
    }

    /// Paths that ran to completion rather than being pruned by an assume.
    pub fn completed(&self) -> usize {
        self.results
            .iter()
            .filter(|r| r.outcome != Outcome::AssumeViolation)
            .count()
    }

    pub fn returns(&self) -> BTreeSet<i64> {
        self.results
            .iter()
            .filter_map(|r| match r.outcome {
                Outcome::Normal(v) => Some(v),
                _ => None,
            })
            .collect()
    }

    pub fn has_prune(&self) -> bool {
        self.results
            .iter()
            .any(|r| r.outcome == Outcome::AssumeViolation)
    }
}

/// Runtime evidence about aliasing and procedure side effects, for checking
/// the static oracle against actual executions.
#[derive(Debug, Default)]
pub struct MonitorLog {
    /// (procedure, pointer variable, address) for every heap access.
    pub heap_ops: BTreeSet<(Ident, Ident, i64)>,
    /// Writes during a call that the callee's mod set did not predict.
    pub mod_violations: Vec<ModViolation>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ModViolation {
    pub caller: Ident,
    pub callee: Ident,
    pub addr: i64,
}

pub fn run(
    program: &Program,
    sigma: &Valuation,
    decisions: &[Choice],
    cfg: &ExecConfig,
) -> Result<RunResult, ReplayError> {
    let mut exec = Exec::new(program, cfg, decisions, false);
    match exec.run_entry(sigma) {
        Inner::Done(res) => Ok(RunResult::Done(res)),
        Inner::Stop(s) => Ok(RunResult::Inconclusive(s)),
        Inner::Malformed(e) => Err(e),
        Inner::Fork(_) => unreachable!("non-extendable run cannot fork"),
    }
}

/// Replays one decision sequence like `run` while also evaluating `watches`
/// at their program points; verdicts land in the result's `observed` list.
pub fn run_watched(
    program: &Program,
    sigma: &Valuation,
    decisions: &[Choice],
    cfg: &ExecConfig,
    watches: &[Observation],
    qdom: &[i64],
) -> Result<RunResult, ReplayError> {
    let mut map = BTreeMap::new();
    for (i, o) in watches.iter().enumerate() {
        map.insert((o.proc.clone(), o.path.clone()), i);
    }
    let mut exec = Exec::new(program, cfg, decisions, false);
    exec.watches = Some(WatchCtx { map: &map, observations: watches, qdom });
    match exec.run_entry(sigma) {
        Inner::Done(res) => Ok(RunResult::Done(res)),
        Inner::Stop(s) => Ok(RunResult::Inconclusive(s)),
        Inner::Malformed(e) => Err(e),
        Inner::Fork(_) => unreachable!("non-extendable run cannot fork"),
    }
}

pub fn explore(program: &Program, sigma: &Valuation, cfg: &ExecConfig) -> Exploration {
    explore_inner(program, sigma, cfg, None, None).0
}

/// Exploration that also evaluates the given conditions whenever execution
/// passes their program point. `qdom` bounds the quantifiers.
pub fn explore_watched(
    program: &Program,
    sigma: &Valuation,
    cfg: &ExecConfig,
    watches: &[Observation],
    qdom: &[i64],
) -> Exploration {
    explore_inner(program, sigma, cfg, Some((watches, qdom)), None).0
}

/// Exploration that records heap accesses and checks callee writes against
/// the alias oracle's mod sets.
pub fn explore_monitored(
    program: &Program,
    sigma: &Valuation,
    cfg: &ExecConfig,
    alias: &AliasInfo,
) -> (Exploration, MonitorLog) {
    explore_inner(program, sigma, cfg, None, Some(alias))
}

fn explore_inner(
    program: &Program,
    sigma: &Valuation,
    cfg: &ExecConfig,
    watch: Option<(&[Observation], &[i64])>,
    alias: Option<&AliasInfo>,
) -> (Exploration, MonitorLog) {
    let watch_index = watch.map(|(obs, qdom)| {
        let mut map = BTreeMap::new();
        for (i, o) in obs.iter().enumerate() {
            map.insert((o.proc.clone(), o.path.clone()), i);
        }
        (map, obs, qdom)
    });
    let mut log = MonitorLog::default();
    let mut out = Exploration::default();
    let mut stack: Vec<Vec<Choice>> = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        if out.total_paths() >= cfg.max_paths {
            out.truncated = true;
            let dropped = stack.len() + 1;
            out.inconclusive += dropped;
            out.stops.extend(std::iter::repeat(Stop::PathBudget).take(dropped));
            break;
        }
        let mut exec = Exec::new(program, cfg, &prefix, true);
        if let Some((map, obs, qdom)) = &watch_index {
            exec.watches = Some(WatchCtx { map, observations: obs, qdom });
        }
        if let Some(a) = alias {
            exec.monitor = Some(Monitor { alias: a, active: Vec::new(), log: &mut log });
        }
        match exec.run_entry(sigma) {
            Inner::Done(res) => out.results.push(res),
            Inner::Fork(options) => {
                for opt in options.into_iter().rev() {
                    let mut next = prefix.clone();
                    next.push(opt);
                    stack.push(next);
                }
            }
            Inner::Stop(s) => {
                out.inconclusive += 1;
                out.stops.push(s);
            }
            Inner::Malformed(_) => {
                unreachable!("explorer only extends its own prefixes")
            }
        }
    }
    (out, log)
}

enum Inner {
    Done(ExecutionResult),
    Fork(Vec<Choice>),
    Stop(Stop),
    Malformed(ReplayError),
}

enum Halt {
    Assert,
    Assume,
    Stop(Stop),
    Fork(Vec<Choice>),
    Malformed(ReplayError),
}

struct WatchCtx<'a> {
    map: &'a BTreeMap<(Ident, Path), usize>,
    observations: &'a [Observation],
    qdom: &'a [i64],
}

struct Monitor<'a> {
    alias: &'a AliasInfo,
    active: Vec<ModFrame>,
    log: &'a mut MonitorLog,
}

/// One in-flight call being checked against its static mod set.
struct ModFrame {
    caller: Ident,
    callee: Ident,
    /// Addresses the mod set names, evaluated at call time.
    allowed: BTreeSet<i64>,
    overflow: bool,
    /// Cells allocated after this point belong to the call.
    alloc_mark: i64,
}

struct Exec<'a> {
    program: &'a Program,
    cfg: &'a ExecConfig,
    decisions: &'a [Choice],
    extend: bool,
    cursor: usize,
    steps: usize,
    depth: usize,
    heap: BTreeMap<i64, i64>,
    alloc_next: i64,
    watches: Option<WatchCtx<'a>>,
    monitor: Option<Monitor<'a>>,
    observed: Vec<(usize, Option<bool>)>,
}

/// Native-stack safety margin; far above anything the step bound admits at
/// desk scale, and still inconclusive rather than a crash if reached.
const DEPTH_GUARD: usize = 2048;

impl<'a> Exec<'a> {
    fn new(
        program: &'a Program,
        cfg: &'a ExecConfig,
        decisions: &'a [Choice],
        extend: bool,
    ) -> Exec<'a> {
        Exec {
            program,
            cfg,
            decisions,
            extend,
            cursor: 0,
            steps: 0,
            depth: 0,
            heap: BTreeMap::new(),
            alloc_next: cfg.alloc_base,
            watches: None,
            monitor: None,
            observed: Vec::new(),
        }
    }

    fn run_entry(&mut self, sigma: &Valuation) -> Inner {
        let entry = self
            .program
            .entry_procedure()
            .expect("validated program has an entry procedure");
        let mut frame: Valuation = Valuation::new();
        for p in &entry.params {
            frame.insert(p.clone(), sigma.get(p).copied().unwrap_or(0));
        }
        frame.insert(entry.ret.clone(), 0);
        let halted = {
            let mut path = Vec::new();
            self.exec_stmt(&entry.body, entry, &mut frame, &mut path)
        };
        let outcome = match halted {
            Ok(()) => Outcome::Normal(frame.get(&entry.ret).copied().unwrap_or(0)),
            Err(Halt::Assert) => Outcome::AssertViolation,
            Err(Halt::Assume) => Outcome::AssumeViolation,
            Err(Halt::Stop(s)) => return Inner::Stop(s),
            Err(Halt::Fork(options)) => return Inner::Fork(options),
            Err(Halt::Malformed(e)) => return Inner::Malformed(e),
        };
        Inner::Done(ExecutionResult {
            outcome,
            steps: self.steps,
            decisions: self.decisions[..self.cursor].to_vec(),
            vars: frame,
            heap: std::mem::take(&mut self.heap),
            observed: std::mem::take(&mut self.observed),
        })
    }

    fn exec_stmt(
        &mut self,
        s: &Stmt,
        proc: &Procedure,
        frame: &mut Valuation,
        path: &mut Path,
    ) -> Result<(), Halt> {
        if let Stmt::Seq(a, b) = s {
            path.push(Step::SeqL);
            self.exec_stmt(a, proc, frame, path)?;
            path.pop();
            path.push(Step::SeqR);
            self.exec_stmt(b, proc, frame, path)?;
            path.pop();
            return Ok(());
        }

        self.steps += 1;
        if self.steps > self.cfg.step_bound {
            return Err(Halt::Stop(Stop::StepBound));
        }
        self.observe(proc, frame, path);

        match s {
            Stmt::Seq(..) => unreachable!(),
            Stmt::Assign { dst, src } => {
                let v = self.eval_expr(src, frame)?;
                frame.insert(dst.clone(), v);
            }
            Stmt::HeapLoad { dst, src } => {
                let addr = Self::var(frame, src);
                self.heap_access(proc, src, addr)?;
                let v = self.heap.get(&addr).copied().unwrap_or(0);
                frame.insert(dst.clone(), v);
            }
            Stmt::HeapStore { dst, src } => {
                let addr = Self::var(frame, dst);
                self.heap_access(proc, dst, addr)?;
                let v = self.eval_expr(src, frame)?;
                self.heap.insert(addr, v);
                if let Some(mon) = &mut self.monitor {
                    for fr in &mon.active {
                        if addr >= fr.alloc_mark || fr.overflow || fr.allowed.contains(&addr) {
                            continue;
                        }
                        mon.log.mod_violations.push(ModViolation {
                            caller: fr.caller.clone(),
                            callee: fr.callee.clone(),
                            addr,
                        });
                    }
                }
            }
            Stmt::Malloc { dst, size } => {
                let size = self.eval_expr(size, frame)?;
                let cells = size.clamp(1, 4);
                let base = self.alloc_next;
                self.alloc_next += cells;
                for i in 0..cells {
                    let v = self.decide_value()?;
                    self.heap.insert(base + i, v);
                }
                frame.insert(dst.clone(), base);
            }
            Stmt::Call { dst, proc: callee_name, args } => {
                if self.depth >= DEPTH_GUARD {
                    return Err(Halt::Stop(Stop::StepBound));
                }
                let callee = self
                    .program
                    .procedure(callee_name)
                    .expect("validated program resolves all calls");
                let mut callee_frame = Valuation::new();
                for (formal, actual) in callee.params.iter().zip(args) {
                    callee_frame.insert(formal.clone(), Self::var(frame, actual));
                }
                callee_frame.insert(callee.ret.clone(), 0);
                if let Some(mon) = &mut self.monitor {
                    let (locs, overflow) =
                        mon.alias.call_mod_terms(self.program, callee_name, args);
                    let mut allowed = BTreeSet::new();
                    let qdom: [i64; 0] = [];
                    let env = EvalEnv {
                        vars: frame,
                        heap: &self.heap,
                        qdom: &qdom,
                        mode: self.cfg.int_mode,
                    };
                    for loc in &locs {
                        if let Term::Drf(inner) = loc {
                            if let Some(addr) = inner.eval(&env, &mut Vec::new()) {
                                allowed.insert(addr);
                            }
                        }
                    }
                    mon.active.push(ModFrame {
                        caller: proc.name.clone(),
                        callee: callee_name.clone(),
                        allowed,
                        overflow,
                        alloc_mark: self.alloc_next,
                    });
                }
                self.depth += 1;
                let mut callee_path = Vec::new();
                let res = self.exec_stmt(&callee.body, callee, &mut callee_frame, &mut callee_path);
                self.depth -= 1;
                if let Some(mon) = &mut self.monitor {
                    mon.active.pop();
                }
                res?;
                let ret = callee_frame.get(&callee.ret).copied().unwrap_or(0);
                frame.insert(dst.clone(), ret);
            }
            Stmt::Assert(p) => {
                if !self.eval_pred(p, frame)? {
                    return Err(Halt::Assert);
                }
            }
            Stmt::Assume(p) => {
                if !self.eval_pred(p, frame)? {
                    return Err(Halt::Assume);
                }
            }
            Stmt::NondetIf(a, b) => {
                let choice =
                    self.decide(vec![Choice::Branch(true), Choice::Branch(false)], "branch")?;
                let take_then = matches!(choice, Choice::Branch(true));
                let (arm, step) =
                    if take_then { (a, Step::Then) } else { (b, Step::Else) };
                path.push(step);
                self.exec_stmt(arm, proc, frame, path)?;
                path.pop();
            }
            Stmt::NondetAssign { dst } => {
                let v = self.decide_value()?;
                frame.insert(dst.clone(), v);
            }
        }
        Ok(())
    }

    fn observe(&mut self, proc: &Procedure, frame: &Valuation, path: &Path) {
        let Some(w) = &self.watches else { return };
        let Some(&idx) = w.map.get(&(proc.name.clone(), path.clone())) else {
            return;
        };
        let env = EvalEnv {
            vars: frame,
            heap: &self.heap,
            qdom: w.qdom,
            mode: self.cfg.int_mode,
        };
        let truth = w.observations[idx].formula.eval(&env, &mut Vec::new());
        self.observed.push((idx, truth));
    }

    /// Null is the only invalid address; dereferencing it is a failure.
    /// Everything else reads as a defaulted cell.
    fn heap_access(&mut self, proc: &Procedure, var: &Ident, addr: i64) -> Result<(), Halt> {
        if addr == 0 {
            return Err(Halt::Assert);
        }
        if let Some(mon) = &mut self.monitor {
            mon.log.heap_ops.insert((proc.name.clone(), var.clone(), addr));
        }
        Ok(())
    }

    fn var(frame: &Valuation, name: &Ident) -> i64 {
        frame.get(name).copied().unwrap_or(0)
    }

    fn decide_value(&mut self) -> Result<i64, Halt> {
        let options = (self.cfg.nondet_lo..=self.cfg.nondet_hi)
            .map(Choice::Value)
            .collect();
        match self.decide(options, "value")? {
            Choice::Value(v) => Ok(v),
            Choice::Branch(_) => unreachable!("kind checked in decide"),
        }
    }

    fn decide(&mut self, options: Vec<Choice>, expected: &'static str) -> Result<Choice, Halt> {
        if self.cursor >= self.cfg.fork_bound {
            return Err(Halt::Stop(Stop::ForkBound));
        }
        if self.cursor == self.decisions.len() {
            if self.extend {
                return Err(Halt::Fork(options));
            }
            return Err(Halt::Stop(Stop::DecisionsExhausted));
        }
        let d = self.decisions[self.cursor];
        let matches_kind = matches!(
            (&d, &options[0]),
            (Choice::Branch(_), Choice::Branch(_)) | (Choice::Value(_), Choice::Value(_))
        );
        if !matches_kind {
            return Err(Halt::Malformed(ReplayError { index: self.cursor, expected }));
        }
        self.cursor += 1;
        Ok(d)
    }

    fn eval_expr(&self, e: &Expr, frame: &Valuation) -> Result<i64, Halt> {
        match e {
            Expr::Var(v) => Ok(Self::var(frame, v)),
            Expr::Int(n) => Ok(*n),
            Expr::Bin(op, a, b) => {
                let x = self.eval_expr(a, frame)?;
                let y = self.eval_expr(b, frame)?;
                match self.cfg.int_mode {
                    IntMode::Math => match op {
                        ArithOp::Add => x.checked_add(y),
                        ArithOp::Sub => x.checked_sub(y),
                        ArithOp::Mul => x.checked_mul(y),
                    }
                    .ok_or(Halt::Stop(Stop::Overflow)),
                    IntMode::Wrap32 => {
                        let (x, y) = (x as i32, y as i32);
                        let r = match op {
                            ArithOp::Add => x.wrapping_add(y),
                            ArithOp::Sub => x.wrapping_sub(y),
                            ArithOp::Mul => x.wrapping_mul(y),
                        };
                        Ok(r as i64)
                    }
                }
            }
        }
    }

    fn eval_pred(&self, p: &Pred, frame: &Valuation) -> Result<bool, Halt> {
        Ok(match p {
            Pred::Bool(b) => *b,
            Pred::Cmp(op, a, b) => {
                let x = self.eval_expr(a, frame)?;
                let y = self.eval_expr(b, frame)?;
                match op {
                    CmpOp::Eq => x == y,
                    CmpOp::Lt => x < y,
                    CmpOp::Gt => x > y,
                }
            }
            Pred::And(a, b) => self.eval_pred(a, frame)? && self.eval_pred(b, frame)?,
            Pred::Or(a, b) => self.eval_pred(a, frame)? || self.eval_pred(b, frame)?,
            Pred::Not(q) => !self.eval_pred(q, frame)?,
        })
    }
}

/// Whether every bounded execution of `stmt` from the given state avoids
/// assertion failure and every normal end satisfies `phi`. None when the
/// exploration was truncated or a formula could not be evaluated.
pub fn exact_wp_holds(
    stmt: &Stmt,
    phi: &Formula,
    vars: &Valuation,
    heap: &BTreeMap<i64, i64>,
    qdom: &[i64],
    cfg: &ExecConfig,
) -> Option<bool> {
    let mut idents = BTreeSet::new();
    stmt.idents(&mut idents);
    for v in phi.free_var_set() {
        idents.insert(v);
    }
    let mut ret = "_wp".to_string();
    while idents.contains(&ret) {
        ret.push('_');
    }
    let program = Program {
        procedures: vec![Procedure {
            name: "check".into(),
            params: idents.into_iter().collect(),
            ret,
            body: stmt.clone(),
        }],
        entry: "check".into(),
    };
    // Thread the initial heap through by replaying it into each run: explore
    // starts from an empty heap, so seed via the entry valuation is not
    // possible; instead run with the heap preloaded.
    let mut out = Exploration::default();
    let mut stack: Vec<Vec<Choice>> = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        if out.total_paths() >= cfg.max_paths {
            return None;
        }
        let mut exec = Exec::new(&program, cfg, &prefix, true);
        exec.heap = heap.clone();
        match exec.run_entry(vars) {
            Inner::Done(res) => out.results.push(res),
            Inner::Fork(options) => {
                for opt in options.into_iter().rev() {
                    let mut next = prefix.clone();
                    next.push(opt);
                    stack.push(next);
                }
            }
            Inner::Stop(_) => return None,
            Inner::Malformed(_) => unreachable!(),
        }
    }
    let mut all = true;
    for res in &out.results {
        match res.outcome {
            Outcome::AssertViolation => return Some(false),
            Outcome::AssumeViolation => {}
            Outcome::Normal(_) => {
                let env = EvalEnv {
                    vars: &res.vars,
                    heap: &res.heap,
                    qdom,
                    mode: cfg.int_mode,
                };
                match phi.eval(&env, &mut Vec::new()) {
                    Some(true) => {}
                    Some(false) => all = false,
                    None => return None,
                }
            }
        }
    }
    Some(all)
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Verdict {
    EquiSafe,
    Counterexample { sigma: Valuation, detail: String },
    Inconclusive { sigma: Valuation, detail: String },
}

/// Checks the trimming contract over the given entry valuations: failure
/// from exactly the same inputs; every normal return of the original is
/// matched in the trimmed program by the same return or a pruned path; and
/// pruned originals stay pruned. Counterexamples win over inconclusive
/// results, which in turn block an equi-safe verdict.
pub fn check_equi_safe(
    original: &Program,
    trimmed: &Program,
    inputs: &[Valuation],
    cfg: &ExecConfig,
) -> Verdict {
    let (Some(a), Some(b)) = (original.entry_procedure(), trimmed.entry_procedure()) else {
        return Verdict::Inconclusive {
            sigma: Valuation::new(),
            detail: "entry procedure missing".into(),
        };
    };
    if a.params != b.params {
        return Verdict::Inconclusive {
            sigma: Valuation::new(),
            detail: "entry signatures differ".into(),
        };
    }
    let mut undecided: Option<(Valuation, String)> = None;
    for sigma in inputs {
        let orig = explore(original, sigma, cfg);
        let trim = explore(trimmed, sigma, cfg);
        if orig.inconclusive > 0 || trim.inconclusive > 0 {
            undecided.get_or_insert_with(|| {
                let detail = format!(
                    "bounds hit: original {:?}, trimmed {:?}",
                    orig.stops, trim.stops
                );
                (sigma.clone(), detail)
            });
            continue;
        }
        if orig.has_fail() != trim.has_fail() {
            return Verdict::Counterexample {
                sigma: sigma.clone(),
                detail: format!(
                    "failure on original: {}, on trimmed: {}",
                    orig.has_fail(),
                    trim.has_fail()
                ),
            };
        }
        let trimmed_returns = trim.returns();
        let trimmed_prunes = trim.has_prune();
        for r in orig.returns() {
            if !trimmed_returns.contains(&r) && !trimmed_prunes {
                return Verdict::Counterexample {
                    sigma: sigma.clone(),
                    detail: format!("return {r} neither matched nor pruned"),
                };
            }
        }
        if orig.has_prune() && !trimmed_prunes {
            return Verdict::Counterexample {
                sigma: sigma.clone(),
                detail: "pruned original path has no pruned counterpart".into(),
            };
        }
    }
    match undecided {
        Some((sigma, detail)) => Verdict::Inconclusive { sigma, detail },
        None => Verdict::EquiSafe,
    }
}

/// All assignments of `lo..=hi` to the given names.
pub fn input_valuations(params: &[Ident], lo: i64, hi: i64) -> Vec<Valuation> {
    let mut out = vec![Valuation::new()];
    for p in params {
        let mut next = Vec::with_capacity(out.len() * (hi - lo + 1) as usize);
        for partial in &out {
            for v in lo..=hi {
                let mut m = partial.clone();
                m.insert(p.clone(), v);
                next.push(m);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_program;

    fn small() -> ExecConfig {
        ExecConfig {
            nondet_lo: -1,
            nondet_hi: 1,
            alloc_base: 64,
            ..ExecConfig::default()
        }
    }

    fn sigma(pairs: &[(&str, i64)]) -> Valuation {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn assume_false_prunes_immediately() {
        let p = parse_program("proc main() : r { assume false; }").unwrap();
        let out = explore(&p, &Valuation::new(), &small());
        assert_eq!(out.results.len(), 1);
        assert_eq!(out.results[0].outcome, Outcome::AssumeViolation);
    }

    #[test]
    fn both_arms_explored() {
        let p = parse_program(
            "proc main() : r { if (*) { assert true; } else { assert true; } }",
        )
        .unwrap();
        let out = explore(&p, &Valuation::new(), &small());
        assert_eq!(out.results.len(), 2);
        assert!(out.results.iter().all(|r| r.outcome == Outcome::Normal(0)));
    }

    #[test]
    fn nondet_values_enumerate_domain() {
        let p = parse_program("proc main() : r { r := nondet; assert r != 1; }").unwrap();
        let out = explore(&p, &Valuation::new(), &small());
        assert_eq!(out.results.len(), 3);
        assert_eq!(out.results.iter().filter(|r| r.outcome.is_fail()).count(), 1);
    }

    #[test]
    fn factorial_analogue_fails_only_at_five() {
        let src = "\
proc fact(n) : r {
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
}
";
        let p = parse_program(src).unwrap();
        let cfg = small();
        let five = explore(&p, &sigma(&[("m", 5)]), &cfg);
        assert!(five.has_fail());
        let four = explore(&p, &sigma(&[("m", 4)]), &cfg);
        assert!(!four.has_fail());
        assert!(four.results.iter().any(|r| r.outcome == Outcome::Normal(24)));
    }

    #[test]
    fn replaying_decisions_reproduces_outcomes() {
        let src = "\
proc main(a) : r {
  x := nondet;
  if (*) {
    r := a + x;
  } else {
    assert x < 1;
    r := x;
  }
}
";
        let p = parse_program(src).unwrap();
        let cfg = small();
        let input = sigma(&[("a", 2)]);
        let out = explore(&p, &input, &cfg);
        assert!(!out.results.is_empty());
        for res in &out.results {
            match run(&p, &input, &res.decisions, &cfg).unwrap() {
                RunResult::Done(replayed) => assert_eq!(&replayed, res),
                RunResult::Inconclusive(s) => panic!("replay stopped: {s:?}"),
            }
        }
    }

    #[test]
    fn run_reports_exhausted_and_malformed_sequences() {
        let p = parse_program("proc main() : r { if (*) { r := 1; } else { r := 2; } }")
            .unwrap();
        let cfg = small();
        match run(&p, &Valuation::new(), &[], &cfg).unwrap() {
            RunResult::Inconclusive(Stop::DecisionsExhausted) => {}
            other => panic!("expected exhaustion, got {:?}", discriminant_name(&other)),
        }
        let err = run(&p, &Valuation::new(), &[Choice::Value(3)], &cfg).unwrap_err();
        assert_eq!(err.index, 0);
    }

    fn discriminant_name(r: &RunResult) -> String {
        match r {
            RunResult::Done(res) => format!("done {:?}", res.outcome),
            RunResult::Inconclusive(s) => format!("inconclusive {s:?}"),
        }
    }

    #[test]
    fn null_dereference_is_a_failure() {
        let p = parse_program("proc main(p) : r { r := *p; }").unwrap();
        let cfg = small();
        let bad = explore(&p, &sigma(&[("p", 0)]), &cfg);
        assert!(bad.has_fail());
        let ok = explore(&p, &sigma(&[("p", 7)]), &cfg);
        assert!(!ok.has_fail());
        assert!(ok.results.iter().any(|r| r.outcome == Outcome::Normal(0)));
    }

    #[test]
    fn malloc_contents_are_decisions() {
        let p = parse_program(
            "proc main() : r { p := malloc(1); r := *p; assert r = 0; }",
        )
        .unwrap();
        let out = explore(&p, &Valuation::new(), &small());
        assert_eq!(out.results.len(), 3);
        assert_eq!(out.results.iter().filter(|r| r.outcome.is_fail()).count(), 2);
    }

    #[test]
    fn unbounded_recursion_is_inconclusive() {
        let p = parse_program("proc main(n) : r { r := call main(n); }").unwrap();
        let cfg = ExecConfig { step_bound: 500, ..small() };
        let out = explore(&p, &sigma(&[("n", 0)]), &cfg);
        assert!(out.results.is_empty());
        assert_eq!(out.inconclusive, 1);
        assert_eq!(out.stops, vec![Stop::StepBound]);
    }

    #[test]
    fn fork_bound_truncates_paths() {
        let src = "\
proc main() : r {
  a := nondet;
  b := nondet;
  c := nondet;
  r := a + b + c;
}
";
        let p = parse_program(src).unwrap();
        let cfg = ExecConfig { fork_bound: 2, ..small() };
        let out = explore(&p, &Valuation::new(), &cfg);
        assert!(out.results.is_empty());
        assert_eq!(out.inconclusive, 9);
        assert!(out.stops.iter().all(|s| *s == Stop::ForkBound));
    }

    #[test]
    fn exact_wp_matches_hand_computed_store_table() {
        // *x := a with post drf(y) = 3 holds exactly where
        // (x != y && heap[y] = 3) || (x = y && a = 3).
        let p = parse_program("proc main(x, y, a) : r { *x := a; }").unwrap();
        let body = &p.procedures[0].body;
        let phi = Formula::cmp(CmpOp::Eq, Term::drf(Term::var("y")), Term::Int(3));
        let cfg = small();
        let qdom: Vec<i64> = (-4..=4).collect();
        for x in [1i64, 2] {
            for y in [1i64, 2] {
                for a in [-1i64, 3] {
                    for cell in [0i64, 3] {
                        let vars = sigma(&[("x", x), ("y", y), ("a", a)]);
                        let heap: BTreeMap<i64, i64> =
                            [(1, 0), (2, cell)].into_iter().collect();
                        let expect = if x == y { a == 3 } else { heap[&y] == 3 };
                        let got =
                            exact_wp_holds(body, &phi, &vars, &heap, &qdom, &cfg);
                        assert_eq!(got, Some(expect), "x={x} y={y} a={a} cell={cell}");
                    }
                }
            }
        }
    }

    #[test]
    fn equi_safety_accepts_identity_and_flags_mutation() {
        let src = "\
proc main(a) : r {
  r := a + 1;
  assert r > 0;
}
";
        let p = parse_program(src).unwrap();
        let inputs = input_valuations(&["a".to_string()], -3, 3);
        let cfg = small();
        assert_eq!(check_equi_safe(&p, &p, &inputs, &cfg), Verdict::EquiSafe);

        let mutated = parse_program(
            "proc main(a) : r {\n  r := a + 1;\n  assert r <= 0;\n}\n",
        )
        .unwrap();
        match check_equi_safe(&p, &mutated, &inputs, &cfg) {
            Verdict::Counterexample { .. } => {}
            other => panic!("expected counterexample, got {other:?}"),
        }
    }

    #[test]
    fn watches_record_condition_truth_at_the_point() {
        let src = "\
proc main(x) : r {
  r := x + 1;
  assert r > 0;
}
";
        let p = parse_program(src).unwrap();
        let watch = Observation {
            proc: "main".into(),
            path: vec![Step::SeqL],
            formula: Formula::cmp(CmpOp::Gt, Term::var("x"), Term::Int(0)),
        };
        let cfg = small();
        let qdom: Vec<i64> = (-4..=4).collect();
        let good = explore_watched(&p, &sigma(&[("x", 2)]), &cfg, &[watch.clone()], &qdom);
        assert_eq!(good.results[0].observed, vec![(0, Some(true))]);
        let bad = explore_watched(&p, &sigma(&[("x", -2)]), &cfg, &[watch], &qdom);
        assert_eq!(bad.results[0].observed, vec![(0, Some(false))]);
        assert!(bad.has_fail());
    }

    #[test]
    fn monitor_collects_heap_ops_and_accepts_sound_mod_sets() {
        let src = "\
proc write(p) : r {
  *p := 5;
}

proc main() : r {
  q := malloc(1);
  r := call write(q);
  t := *q;
  assert t = 5;
}
";
        let p = parse_program(src).unwrap();
        let alias = AliasInfo::analyze(&p);
        let (out, log) = explore_monitored(&p, &Valuation::new(), &small(), &alias);
        assert!(!out.has_fail());
        assert!(log.mod_violations.is_empty(), "{:?}", log.mod_violations);
        assert!(log.heap_ops.iter().any(|(pr, v, _)| pr == "write" && v == "p"));
        assert!(log.heap_ops.iter().any(|(pr, v, _)| pr == "main" && v == "q"));
    }
}
