//! Flow-insensitive may-alias analysis and write-set summaries.
//!
//! Points-to sets are inclusion-based and field-insensitive: one abstract
//! object per `malloc` site plus a single `Unknown` region standing for
//! everything handed in from outside (entry parameters, nondeterministic
//! values, parameters of procedures nobody calls). Two variables may alias
//! when their points-to sets intersect; dereference locations may alias when
//! the objects they can denote intersect.
//!
//! The write-set summary (`ModSpec`) is value-provenance based rather than
//! object based: a store is only attributed to `drf^k(x)` when the address it
//! uses provably carries the value of that chain from formal `x`. Addresses
//! with laundered provenance (arithmetic, constants, nondet, values loaded
//! out of locally allocated cells) make the summary overflow, which callers
//! treat as "anything may have happened". Stores through locally allocated
//! cells are exempt: a caller's formula cannot denote memory that did not
//! exist when the call started.

use crate::ast::{Expr, Ident, Procedure, Program, Stmt};
use crate::formula::Term;
use petgraph::graph::DiGraph;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Obj {
    Unknown,
    Site(usize),
}

impl std::fmt::Display for Obj {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Obj::Unknown => f.write_str("unknown"),
            Obj::Site(n) => write!(f, "alloc#{n}"),
        }
    }
}

/// Locations a procedure (including its callees) may write, as dereference
/// chains over its formals. `overflow` records writes that cannot be
/// expressed that way.
#[derive(Clone, Default, Debug)]
pub struct ModSpec {
    /// (formal, chain depth): depth 1 is `drf(x)`, depth 2 `drf(drf(x))`.
    pub chains: BTreeSet<(Ident, usize)>,
    pub overflow: bool,
}

#[derive(Clone, Debug)]
pub struct AliasInfo {
    pts: BTreeMap<(Ident, Ident), BTreeSet<Obj>>,
    heap: BTreeMap<Obj, BTreeSet<Obj>>,
    mods: BTreeMap<Ident, ModSpec>,
    has_asserts: BTreeMap<Ident, bool>,
}

/// Address value provenance, used by the write-set summary.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Tag {
    /// Carries the value of `drf^depth(formal)`; depth 0 is the formal
    /// itself.
    Chain(usize, usize),
    /// Result of a local allocation.
    Fresh,
    /// Anything else: constants, arithmetic, nondet, call results, loads
    /// through fresh or unknown addresses.
    Opaque,
}

const MAX_CHAIN: usize = 2;

impl AliasInfo {
    pub fn analyze(program: &Program) -> AliasInfo {
        let mut info = AliasInfo {
            pts: BTreeMap::new(),
            heap: BTreeMap::new(),
            mods: BTreeMap::new(),
            has_asserts: BTreeMap::new(),
        };
        info.heap.entry(Obj::Unknown).or_default().insert(Obj::Unknown);
        info.seed(program);
        info.points_to_fixpoint(program);
        info.assert_reachability(program);
        info.mod_fixpoint(program);
        info
    }

    fn seed(&mut self, program: &Program) {
        let called: BTreeSet<&Ident> = program
            .procedures
            .iter()
            .flat_map(|p| p.body.leaves())
            .filter_map(|s| match s {
                Stmt::Call { proc, .. } => Some(proc),
                _ => None,
            })
            .collect();
        for p in &program.procedures {
            let external = p.name == program.entry || !called.contains(&p.name);
            if external {
                for x in &p.params {
                    self.pts_mut(&p.name, x).insert(Obj::Unknown);
                }
            }
        }
    }

    fn pts_mut(&mut self, proc: &str, var: &str) -> &mut BTreeSet<Obj> {
        self.pts.entry((proc.into(), var.into())).or_default()
    }

    pub fn pts(&self, proc: &str, var: &str) -> BTreeSet<Obj> {
        self.pts
            .get(&(proc.into(), var.into()))
            .cloned()
            .unwrap_or_default()
    }

    fn heap_of(&self, objs: &BTreeSet<Obj>) -> BTreeSet<Obj> {
        let mut out = BTreeSet::new();
        for o in objs {
            if let Some(h) = self.heap.get(o) {
                out.extend(h.iter().copied());
            }
        }
        out
    }

    /// Objects an expression's value may point at. Integers carry no
    /// provenance; arithmetic unions its operands, so offsetting a pointer
    /// keeps its region.
    fn pts_expr(&self, proc: &str, e: &Expr) -> BTreeSet<Obj> {
        match e {
            Expr::Var(v) => self.pts(proc, v),
            Expr::Int(_) => BTreeSet::new(),
            Expr::Bin(_, a, b) => {
                let mut s = self.pts_expr(proc, a);
                s.extend(self.pts_expr(proc, b));
                s
            }
        }
    }

    fn points_to_fixpoint(&mut self, program: &Program) {
        // Site ids are assigned by textual order, one per malloc statement.
        let mut changed = true;
        while changed {
            changed = false;
            let mut site = 0usize;
            for p in &program.procedures {
                for s in p.body.leaves() {
                    changed |= self.transfer(program, p, s, &mut site);
                }
            }
        }
    }

    fn transfer(
        &mut self,
        program: &Program,
        p: &Procedure,
        s: &Stmt,
        site: &mut usize,
    ) -> bool {
        let proc = &p.name;
        match s {
            Stmt::Assign { dst, src } => {
                let add = self.pts_expr(proc, src);
                self.union_into_var(proc, dst, add)
            }
            Stmt::Malloc { dst, .. } => {
                let id = Obj::Site(*site);
                *site += 1;
                self.union_into_var(proc, dst, BTreeSet::from([id]))
            }
            Stmt::NondetAssign { dst } => {
                self.union_into_var(proc, dst, BTreeSet::from([Obj::Unknown]))
            }
            Stmt::HeapLoad { dst, src } => {
                let add = self.heap_of(&self.pts(proc, src));
                self.union_into_var(proc, dst, add)
            }
            Stmt::HeapStore { dst, src } => {
                let val = self.pts_expr(proc, src);
                let mut changed = false;
                for o in self.pts(proc, dst) {
                    let cell = self.heap.entry(o).or_default();
                    let before = cell.len();
                    cell.extend(val.iter().copied());
                    changed |= cell.len() != before;
                }
                changed
            }
            Stmt::Call { dst, proc: callee, args } => {
                let mut changed = false;
                if let Some(target) = program.procedure(callee) {
                    for (formal, actual) in target.params.iter().zip(args) {
                        let add = self.pts(proc, actual);
                        changed |= self.union_into_var(callee, formal, add);
                    }
                    let ret = self.pts(callee, &target.ret);
                    changed |= self.union_into_var(proc, dst, ret);
                }
                changed
            }
            _ => false,
        }
    }

    fn union_into_var(&mut self, proc: &str, var: &str, add: BTreeSet<Obj>) -> bool {
        if add.is_empty() {
            return false;
        }
        let set = self.pts_mut(proc, var);
        let before = set.len();
        set.extend(add);
        set.len() != before
    }

    /// Objects a location term may denote as a cell: `drf(t)` denotes the
    /// cells `t` can point at. A bare variable denotes itself and no heap
    /// cell, so this is empty for non-dereference terms.
    pub fn cell_objs(&self, proc: &str, loc: &Term) -> BTreeSet<Obj> {
        match loc {
            Term::Drf(inner) => self.value_objs(proc, inner),
            _ => BTreeSet::new(),
        }
    }

    /// Objects whose address a term's value may be.
    fn value_objs(&self, proc: &str, t: &Term) -> BTreeSet<Obj> {
        match t {
            Term::Var(v) => self.pts(proc, v),
            Term::Int(_) => BTreeSet::new(),
            Term::Bin(_, a, b) => {
                let mut s = self.value_objs(proc, a);
                s.extend(self.value_objs(proc, b));
                s
            }
            Term::Drf(inner) => self.heap_of(&self.value_objs(proc, inner)),
        }
    }

    /// May two location terms denote the same mutable cell? Distinct scalar
    /// variables never share storage; dereferences share a cell when their
    /// denotable objects intersect.
    pub fn may_alias_locs(&self, proc: &str, a: &Term, b: &Term) -> bool {
        if a == b {
            return true;
        }
        match (a, b) {
            (Term::Drf(_), Term::Drf(_)) => {
                !self.cell_objs(proc, a).is_disjoint(&self.cell_objs(proc, b))
            }
            _ => false,
        }
    }

    /// May two pointer variables hold the same address?
    pub fn may_alias(&self, proc: &str, a: &str, b: &str) -> bool {
        a == b || !self.pts(proc, a).is_disjoint(&self.pts(proc, b))
    }

    fn assert_reachability(&mut self, program: &Program) {
        let mut graph: DiGraph<(), ()> = DiGraph::new();
        let idx: BTreeMap<&Ident, _> = program
            .procedures
            .iter()
            .map(|p| (&p.name, graph.add_node(())))
            .collect();
        let mut direct: BTreeMap<&Ident, bool> = BTreeMap::new();
        for p in &program.procedures {
            let mut has = false;
            for s in p.body.leaves() {
                match s {
                    Stmt::Assert(_) => has = true,
                    Stmt::Call { proc: callee, .. } => {
                        if let Some(&to) = idx.get(callee) {
                            graph.add_edge(idx[&p.name], to, ());
                        }
                    }
                    _ => {}
                }
            }
            direct.insert(&p.name, has);
        }
        for p in &program.procedures {
            let mut reach = false;
            petgraph::visit::depth_first_search(
                &graph,
                Some(idx[&p.name]),
                |ev| {
                    if let petgraph::visit::DfsEvent::Discover(n, _) = ev {
                        let name = &program.procedures[n.index()].name;
                        if direct[name] {
                            reach = true;
                        }
                    }
                    petgraph::visit::Control::<()>::Continue
                },
            );
            self.has_asserts.insert(p.name.clone(), reach);
        }
    }

    /// Does the procedure, or anything it can call, contain an assertion?
    pub fn has_asserts(&self, proc: &str) -> bool {
        self.has_asserts.get(proc).copied().unwrap_or(false)
    }

    fn mod_fixpoint(&mut self, program: &Program) {
        for p in &program.procedures {
            self.mods.insert(p.name.clone(), ModSpec::default());
        }
        let mut changed = true;
        while changed {
            changed = false;
            for p in &program.procedures {
                let next = self.mod_of_proc(program, p);
                let cur = &self.mods[&p.name];
                if next.chains != cur.chains || next.overflow != cur.overflow {
                    self.mods.insert(p.name.clone(), next);
                    changed = true;
                }
            }
        }
    }

    fn mod_of_proc(&self, program: &Program, p: &Procedure) -> ModSpec {
        let mut env: BTreeMap<Ident, BTreeSet<Tag>> = BTreeMap::new();
        for (i, x) in p.params.iter().enumerate() {
            env.insert(x.clone(), BTreeSet::from([Tag::Chain(i, 0)]));
        }
        env.insert(p.ret.clone(), BTreeSet::from([Tag::Opaque]));
        let mut spec = ModSpec::default();
        let mut dirty = false;
        self.mod_walk(program, p, &p.body, &mut env, &mut spec, &mut dirty);
        spec
    }

    /// `dirty` records whether the heap may differ from the entry state.
    /// Chain tags name pre-state cells, so a load only extends a chain
    /// while the heap is clean; afterwards the loaded pointer may have been
    /// redirected and gets the opaque tag instead.
    fn mod_walk(
        &self,
        program: &Program,
        p: &Procedure,
        s: &Stmt,
        env: &mut BTreeMap<Ident, BTreeSet<Tag>>,
        spec: &mut ModSpec,
        dirty: &mut bool,
    ) {
        match s {
            Stmt::Seq(a, b) => {
                self.mod_walk(program, p, a, env, spec, dirty);
                self.mod_walk(program, p, b, env, spec, dirty);
            }
            Stmt::NondetIf(a, b) => {
                let mut env_a = env.clone();
                let mut dirty_a = *dirty;
                self.mod_walk(program, p, a, &mut env_a, spec, &mut dirty_a);
                self.mod_walk(program, p, b, env, spec, dirty);
                for (k, v) in env_a {
                    env.entry(k).or_default().extend(v);
                }
                *dirty = *dirty || dirty_a;
            }
            Stmt::Assign { dst, src } => {
                let tags = expr_tags(env, src);
                env.insert(dst.clone(), tags);
            }
            Stmt::Malloc { dst, .. } => {
                env.insert(dst.clone(), BTreeSet::from([Tag::Fresh]));
            }
            Stmt::NondetAssign { dst } => {
                env.insert(dst.clone(), BTreeSet::from([Tag::Opaque]));
            }
            Stmt::HeapLoad { dst, src } => {
                let mut tags = BTreeSet::new();
                for t in env.get(src).into_iter().flatten() {
                    match t {
                        Tag::Chain(x, d) if d + 1 < MAX_CHAIN && !*dirty => {
                            tags.insert(Tag::Chain(*x, d + 1));
                        }
                        _ => {
                            tags.insert(Tag::Opaque);
                        }
                    }
                }
                if tags.is_empty() {
                    tags.insert(Tag::Opaque);
                }
                env.insert(dst.clone(), tags);
            }
            Stmt::HeapStore { dst, .. } => {
                for t in env.get(dst).into_iter().flatten() {
                    match t {
                        Tag::Chain(x, d) if d + 1 <= MAX_CHAIN => {
                            spec.chains.insert((p.params[*x].clone(), d + 1));
                        }
                        Tag::Fresh => {}
                        _ => spec.overflow = true,
                    }
                }
                if env.get(dst).map_or(true, |t| t.is_empty()) {
                    spec.overflow = true;
                }
                *dirty = true;
            }
            Stmt::Call { dst, proc: callee, args } => {
                if let (Some(target), Some(callee_spec)) =
                    (program.procedure(callee), self.mods.get(callee))
                {
                    if callee_spec.overflow {
                        spec.overflow = true;
                    }
                    for (xf, depth) in &callee_spec.chains {
                        let Some(i) =
                            target.params.iter().position(|x| x == xf)
                        else {
                            continue;
                        };
                        let Some(actual) = args.get(i) else { continue };
                        for t in env.get(actual).into_iter().flatten() {
                            match t {
                                Tag::Chain(y, e) if e + depth <= MAX_CHAIN => {
                                    spec.chains.insert((p.params[*y].clone(), e + depth));
                                }
                                Tag::Fresh => {}
                                _ => spec.overflow = true,
                            }
                        }
                    }
                    if callee_spec.overflow || !callee_spec.chains.is_empty() {
                        *dirty = true;
                    }
                } else {
                    *dirty = true;
                }
                env.insert(dst.clone(), BTreeSet::from([Tag::Opaque]));
            }
            Stmt::Assert(_) | Stmt::Assume(_) => {}
        }
    }

    /// Locations a call may write, as terms over the caller's actuals,
    /// deepest chains first so folding a havoc rewrites inner cells before
    /// the pointers that reach them. The flag reports a summary overflow:
    /// the callee may also write locations not listed.
    pub fn call_mod_terms(
        &self,
        program: &Program,
        callee: &str,
        args: &[Ident],
    ) -> (Vec<Term>, bool) {
        let Some(target) = program.procedure(callee) else {
            return (Vec::new(), true);
        };
        let Some(spec) = self.mods.get(callee) else {
            return (Vec::new(), true);
        };
        let mut keyed: Vec<(usize, Ident)> = Vec::new();
        for (xf, depth) in &spec.chains {
            if let Some(i) = target.params.iter().position(|x| x == xf) {
                if let Some(actual) = args.get(i) {
                    keyed.push((*depth, actual.clone()));
                }
            }
        }
        keyed.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        keyed.dedup();
        let terms = keyed
            .into_iter()
            .map(|(depth, base)| {
                let mut t = Term::var(base);
                for _ in 0..depth {
                    t = Term::drf(t);
                }
                t
            })
            .collect();
        (terms, spec.overflow)
    }

    pub fn mod_spec(&self, proc: &str) -> Option<&ModSpec> {
        self.mods.get(proc)
    }

    /// One `location -> {aliases}` line per variable, for inspection.
    pub fn dump(&self, program: &Program) -> String {
        let mut out = String::new();
        for p in &program.procedures {
            let mut vars: Vec<&Ident> = p.params.iter().collect();
            let mut body_vars = BTreeSet::new();
            p.body.idents(&mut body_vars);
            vars.extend(body_vars.iter().filter(|v| !p.params.contains(v)));
            for v in vars {
                let pts = self.pts(&p.name, v);
                if pts.is_empty() {
                    out.push_str(&format!("{}: {} -> {{{}}}\n", p.name, v, v));
                } else {
                    let loc = Term::drf(Term::var(v.clone()));
                    let mut others = Vec::new();
                    let mut all = BTreeSet::new();
                    p.body.idents(&mut all);
                    all.extend(p.params.iter().cloned());
                    all.insert(p.ret.clone());
                    for w in &all {
                        let wloc = Term::drf(Term::var(w.clone()));
                        if self.may_alias_locs(&p.name, &loc, &wloc) {
                            others.push(format!("*{w}"));
                        }
                    }
                    out.push_str(&format!(
                        "{}: *{} -> {{{}}}\n",
                        p.name,
                        v,
                        others.join(", ")
                    ));
                }
            }
        }
        out
    }
}

fn expr_tags(env: &BTreeMap<Ident, BTreeSet<Tag>>, e: &Expr) -> BTreeSet<Tag> {
    match e {
        Expr::Var(v) => env.get(v).cloned().unwrap_or_else(|| BTreeSet::from([Tag::Opaque])),
        Expr::Int(_) => BTreeSet::from([Tag::Opaque]),
        Expr::Bin(..) => BTreeSet::from([Tag::Opaque]),
    }
}
