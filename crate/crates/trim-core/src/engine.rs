//! Turns inferred safety conditions into executable trimming predicates.
//!
//! The inserted predicate is the negation of the safety condition, so every
//! rewrite here may only weaken: a weaker assume keeps more executions,
//! which preserves all failing ones. Quantifiers are removed either exactly
//! where linear reasoning allows (equality substitution and strict-bound
//! crossing over the integers), by dropping atoms the procedure cannot
//! handle, or by re-encoding the bound variables as fresh nondeterministic
//! inputs.

use crate::ast::{CmpOp, Ident};
use crate::formula::{Formula, Fresh, Term};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum QeMethod {
    /// Eliminate quantifiers, weakening where exact elimination fails.
    Full,
    /// Keep bodies intact and bind quantified variables to fresh
    /// nondeterministic program variables.
    Nondet,
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub qe: QeMethod,
    /// Cap on retained conjuncts per positive conjunction (None keeps all).
    pub max_conjuncts: Option<usize>,
    /// Literal budget for the disjunctive normal form built per eliminated
    /// quantifier; beyond it the whole condition falls back to the nondet
    /// encoding.
    pub dnf_cap: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { qe: QeMethod::Full, max_conjuncts: None, dnf_cap: 64 }
    }
}

#[derive(Clone, Debug)]
pub struct TrimCondition {
    /// Quantifier-free predicate to assume; mentions `nondet_vars`.
    pub formula: Formula,
    /// Fresh variables that must be assigned nondeterministically before
    /// the assume.
    pub nondet_vars: Vec<Ident>,
    /// Whether the condition is equivalent to the negated safety condition
    /// (as opposed to a proper weakening).
    pub exact: bool,
}

/// Builds the predicate to assume before a statement whose safety condition
/// is `phi`.
pub fn trim_condition(phi: &Formula, cfg: &EngineConfig, fresh: &mut Fresh) -> TrimCondition {
    let negated = phi.negated_nnf().simplify();
    let (formula, nondet_vars, exact) = match cfg.qe {
        QeMethod::Full => match eliminate_quantifiers(&negated, cfg.dnf_cap, fresh) {
            Ok((f, exact)) => (f, Vec::new(), exact),
            Err(CapExceeded) => {
                let (f, vars) = nondet_encode(&negated, fresh);
                (f, vars, true)
            }
        },
        QeMethod::Nondet => {
            let (f, vars) = nondet_encode(&negated, fresh);
            (f, vars, true)
        }
    };
    let formula = match cfg.max_conjuncts {
        Some(k) => bound_conjuncts(&formula, k),
        None => formula,
    };
    TrimCondition { formula: formula.simplify(), nondet_vars, exact }
}

#[derive(Debug, PartialEq, Eq)]
pub struct CapExceeded;

/// Removes every quantifier, innermost first. The result is implied by the
/// input; the flag reports whether it is in fact equivalent. Fails only when
/// some body's disjunctive normal form would exceed `cap` literals.
pub fn eliminate_quantifiers(
    f: &Formula,
    cap: usize,
    fresh: &mut Fresh,
) -> Result<(Formula, bool), CapExceeded> {
    let mut exact = true;
    let out = qe_walk(f, cap, fresh, &mut exact)?;
    Ok((out.simplify(), exact))
}

fn qe_walk(
    f: &Formula,
    cap: usize,
    fresh: &mut Fresh,
    exact: &mut bool,
) -> Result<Formula, CapExceeded> {
    Ok(match f {
        Formula::Bool(_) | Formula::Cmp(..) => f.clone(),
        Formula::Not(p) => Formula::not(qe_walk(p, cap, fresh, exact)?),
        Formula::And(a, b) => Formula::and(
            qe_walk(a, cap, fresh, exact)?,
            qe_walk(b, cap, fresh, exact)?,
        ),
        Formula::Or(a, b) => Formula::or(
            qe_walk(a, cap, fresh, exact)?,
            qe_walk(b, cap, fresh, exact)?,
        ),
        Formula::Implies(a, b) => Formula::or(
            Formula::not(qe_walk(a, cap, fresh, exact)?),
            qe_walk(b, cap, fresh, exact)?,
        ),
        Formula::Exists(v, body) => {
            let inner = qe_walk(body, cap, fresh, exact)?;
            eliminate_one(v, &inner, cap, fresh, exact)?
        }
        Formula::Forall(v, body) => {
            // Instantiating at any point is implied by the universal.
            let inner = qe_walk(body, cap, fresh, exact)?;
            if inner.mentions_free(v) {
                *exact = false;
            }
            inner.subst(v, &Term::Int(0), fresh)
        }
    })
}

/// `exists v. body` with quantifier-free `body` in negation normal form.
fn eliminate_one(
    v: &str,
    body: &Formula,
    cap: usize,
    fresh: &mut Fresh,
    exact: &mut bool,
) -> Result<Formula, CapExceeded> {
    let body = body.simplify();
    if !body.mentions_free(v) {
        return Ok(body);
    }
    // v != t keeps an exact encoding as two strict bounds.
    let split = split_disequalities(&body, v);
    let disjuncts = dnf(&split, cap)?;
    let mut out = Vec::new();
    for lits in disjuncts {
        out.push(solve_disjunct(v, lits, fresh, exact));
    }
    Ok(Formula::disj(out).simplify())
}

fn split_disequalities(f: &Formula, v: &str) -> Formula {
    match f {
        Formula::Not(p) => {
            if let Formula::Cmp(CmpOp::Eq, a, b) = &**p {
                if a.mentions(v) || b.mentions(v) {
                    return Formula::or(
                        Formula::cmp(CmpOp::Lt, a.clone(), b.clone()),
                        Formula::cmp(CmpOp::Gt, a.clone(), b.clone()),
                    );
                }
            }
            f.clone()
        }
        Formula::And(a, b) => Formula::and(
            split_disequalities(a, v),
            split_disequalities(b, v),
        ),
        Formula::Or(a, b) => Formula::or(
            split_disequalities(a, v),
            split_disequalities(b, v),
        ),
        _ => f.clone(),
    }
}

/// Disjunctive normal form as literal lists, within a total literal budget.
fn dnf(f: &Formula, cap: usize) -> Result<Vec<Vec<Formula>>, CapExceeded> {
    let out = match f {
        Formula::Or(a, b) => {
            let mut left = dnf(a, cap)?;
            left.extend(dnf(b, cap)?);
            left
        }
        Formula::And(a, b) => {
            let left = dnf(a, cap)?;
            let right = dnf(b, cap)?;
            let mut crossed = Vec::new();
            for l in &left {
                for r in &right {
                    let mut lits = l.clone();
                    lits.extend(r.iter().cloned());
                    crossed.push(lits);
                }
            }
            crossed
        }
        other => vec![vec![other.clone()]],
    };
    let total: usize = out.iter().map(Vec::len).sum();
    if total > cap {
        return Err(CapExceeded);
    }
    Ok(out)
}

/// Does `t` use `v` anywhere other than as the whole term?
fn compound_in(t: &Term, v: &str) -> bool {
    *t != Term::var(v) && t.mentions(v)
}

/// `exists v` over one conjunction of literals.
fn solve_disjunct(
    v: &str,
    lits: Vec<Formula>,
    fresh: &mut Fresh,
    exact: &mut bool,
) -> Formula {
    let mut rest: Vec<Formula> = Vec::new();
    let mut on_v: Vec<Formula> = Vec::new();
    for lit in lits {
        if lit.mentions_free(v) {
            on_v.push(lit);
        } else {
            rest.push(lit);
        }
    }
    if on_v.is_empty() {
        return Formula::conj(rest);
    }

    // An equality that names v directly resolves the variable everywhere.
    for (i, lit) in on_v.iter().enumerate() {
        if let Formula::Cmp(CmpOp::Eq, a, b) = lit {
            let witness = if *a == Term::var(v) && !b.mentions(v) {
                Some(b.clone())
            } else if *b == Term::var(v) && !a.mentions(v) {
                Some(a.clone())
            } else {
                None
            };
            if let Some(t) = witness {
                let others = on_v
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, l)| l.subst(v, &t, fresh));
                rest.extend(others);
                return Formula::conj(rest);
            }
        }
    }

    // Strict integer bounds: lower means `bound < v`, upper `v < bound`.
    let mut lowers: Vec<Term> = Vec::new();
    let mut uppers: Vec<Term> = Vec::new();
    let var = Term::var(v);
    for lit in on_v {
        let classified = match &lit {
            Formula::Cmp(_, a, b) if compound_in(a, v) || compound_in(b, v) => None,
            Formula::Cmp(CmpOp::Lt, a, b) if *a == var && !b.mentions(v) => {
                Some((false, b.clone()))
            }
            Formula::Cmp(CmpOp::Lt, a, b) if *b == var && !a.mentions(v) => {
                Some((true, a.clone()))
            }
            Formula::Cmp(CmpOp::Gt, a, b) if *a == var && !b.mentions(v) => {
                Some((true, b.clone()))
            }
            Formula::Cmp(CmpOp::Gt, a, b) if *b == var && !a.mentions(v) => {
                Some((false, a.clone()))
            }
            // Negated strict bounds shift by one over the integers.
            Formula::Not(p) => match &**p {
                Formula::Cmp(CmpOp::Lt, a, b) if *a == var && !b.mentions(v) => {
                    Some((true, b.minus_one()))
                }
                Formula::Cmp(CmpOp::Lt, a, b) if *b == var && !a.mentions(v) => {
                    Some((false, a.plus_one()))
                }
                Formula::Cmp(CmpOp::Gt, a, b) if *a == var && !b.mentions(v) => {
                    Some((false, b.plus_one()))
                }
                Formula::Cmp(CmpOp::Gt, a, b) if *b == var && !a.mentions(v) => {
                    Some((true, a.minus_one()))
                }
                _ => None,
            },
            _ => None,
        };
        match classified {
            Some((true, t)) => lowers.push(t),
            Some((false, t)) => uppers.push(t),
            None => *exact = false, // dropped: weaker, never stronger
        }
    }
    if !lowers.is_empty() && !uppers.is_empty() {
        for l in &lowers {
            for u in &uppers {
                rest.push(Formula::cmp(CmpOp::Lt, l.plus_one(), u.clone()));
            }
        }
    }
    Formula::conj(rest)
}

/// Strips quantifiers outside-in, renaming each bound variable to a fresh
/// name the caller assigns nondeterministically. Renaming keeps stripped
/// binders from capturing same-named program variables that occur free.
pub fn nondet_encode(f: &Formula, fresh: &mut Fresh) -> (Formula, Vec<Ident>) {
    let mut vars = Vec::new();
    let out = strip(f, fresh, &mut vars);
    (out, vars)
}

fn strip(f: &Formula, fresh: &mut Fresh, vars: &mut Vec<Ident>) -> Formula {
    match f {
        Formula::Forall(v, body) | Formula::Exists(v, body) => {
            let q = fresh.q();
            let renamed = body.subst(v, &Term::var(q.clone()), fresh);
            vars.push(q);
            strip(&renamed, fresh, vars)
        }
        Formula::Not(p) => Formula::not(strip(p, fresh, vars)),
        Formula::And(a, b) => {
            Formula::and(strip(a, fresh, vars), strip(b, fresh, vars))
        }
        Formula::Or(a, b) => {
            Formula::or(strip(a, fresh, vars), strip(b, fresh, vars))
        }
        Formula::Implies(a, b) => {
            Formula::implies(strip(a, fresh, vars), strip(b, fresh, vars))
        }
        other => other.clone(),
    }
}

/// Keeps at most `k` conjuncts of every conjunction whose truth the overall
/// formula depends on positively (and dually, `k` disjuncts of negative
/// disjunctions). Dropping such parts weakens the formula. Retained parts
/// are the syntactically smallest, kept in their original order.
pub fn bound_conjuncts(f: &Formula, k: usize) -> Formula {
    bound_walk(f, k, true)
}

fn bound_walk(f: &Formula, k: usize, positive: bool) -> Formula {
    match f {
        Formula::And(..) if positive => {
            let items: Vec<Formula> =
                f.conjuncts().into_iter().map(|c| bound_walk(c, k, positive)).collect();
            Formula::conj(select(items, k))
        }
        Formula::Or(..) if !positive => {
            let items: Vec<Formula> =
                disjuncts(f).into_iter().map(|c| bound_walk(c, k, positive)).collect();
            Formula::disj(select(items, k))
        }
        Formula::And(a, b) => {
            Formula::and(bound_walk(a, k, positive), bound_walk(b, k, positive))
        }
        Formula::Or(a, b) => {
            Formula::or(bound_walk(a, k, positive), bound_walk(b, k, positive))
        }
        Formula::Not(p) => Formula::not(bound_walk(p, k, !positive)),
        Formula::Implies(a, b) => Formula::implies(
            bound_walk(a, k, !positive),
            bound_walk(b, k, positive),
        ),
        Formula::Forall(v, body) => {
            Formula::forall(v.clone(), bound_walk(body, k, positive))
        }
        Formula::Exists(v, body) => {
            Formula::exists(v.clone(), bound_walk(body, k, positive))
        }
        atom => atom.clone(),
    }
}

fn disjuncts(f: &Formula) -> Vec<&Formula> {
    let mut out = Vec::new();
    fn walk<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
        match f {
            Formula::Or(a, b) => {
                walk(a, out);
                walk(b, out);
            }
            other => out.push(other),
        }
    }
    walk(f, &mut out);
    out
}

fn select(items: Vec<Formula>, k: usize) -> Vec<Formula> {
    if items.len() <= k {
        return items;
    }
    let mut ranked: Vec<(usize, usize)> = items
        .iter()
        .enumerate()
        .map(|(i, f)| (f.size(), i))
        .collect();
    ranked.sort();
    let mut keep: Vec<usize> = ranked.into_iter().take(k).map(|(_, i)| i).collect();
    keep.sort_unstable();
    let mut items = items;
    let mut out = Vec::with_capacity(k);
    for i in keep.into_iter().rev() {
        out.push(items.swap_remove(i));
    }
    out.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::EvalEnv;
    use crate::formula::IntMode;
    use std::collections::BTreeMap;

    fn v(name: &str) -> Term {
        Term::var(name)
    }

    fn eq(a: Term, b: Term) -> Formula {
        Formula::cmp(CmpOp::Eq, a, b)
    }

    fn qe(f: &Formula) -> (Formula, bool) {
        let mut fresh = Fresh::default();
        eliminate_quantifiers(f, 64, &mut fresh).unwrap()
    }

    #[test]
    fn equality_substitution_is_exact() {
        let f = Formula::exists(
            "x",
            Formula::conj(vec![
                Formula::cmp(CmpOp::Gt, v("x"), Term::Int(0)),
                Formula::cmp(CmpOp::Lt, v("x"), Term::Int(2)),
                eq(v("y"), v("x")),
            ]),
        );
        let (out, exact) = qe(&f);
        assert!(exact);
        assert_eq!(
            out,
            Formula::and(
                Formula::cmp(CmpOp::Gt, v("y"), Term::Int(0)),
                Formula::cmp(CmpOp::Lt, v("y"), Term::Int(2))
            )
        );
    }

    #[test]
    fn contradictory_witness_collapses() {
        let f = Formula::exists(
            "x",
            Formula::and(eq(v("x"), Term::Int(1)), Formula::not(eq(v("x"), Term::Int(1)))),
        );
        let (out, exact) = qe(&f);
        assert!(exact);
        assert_eq!(out, Formula::ff());
    }

    #[test]
    fn one_sided_bound_is_trivially_satisfiable() {
        let f = Formula::exists("x", Formula::cmp(CmpOp::Gt, v("y"), v("x")));
        let (out, exact) = qe(&f);
        assert!(exact);
        assert_eq!(out, Formula::tt());
    }

    #[test]
    fn crossing_strict_bounds_needs_room() {
        let f = Formula::exists(
            "x",
            Formula::and(
                Formula::cmp(CmpOp::Gt, v("x"), v("a")),
                Formula::cmp(CmpOp::Lt, v("x"), v("b")),
            ),
        );
        let (out, _) = qe(&f);
        // a + 1 < b over the integers.
        assert_eq!(
            out,
            Formula::cmp(
                CmpOp::Lt,
                Term::bin(crate::ast::ArithOp::Add, v("a"), Term::Int(1)),
                v("b")
            )
        );
    }

    #[test]
    fn compound_occurrences_weaken() {
        let f = Formula::exists(
            "x",
            Formula::and(
                Formula::cmp(
                    CmpOp::Gt,
                    Term::bin(crate::ast::ArithOp::Add, v("x"), v("x")),
                    v("y"),
                ),
                Formula::cmp(CmpOp::Gt, v("z"), Term::Int(0)),
            ),
        );
        let (out, exact) = qe(&f);
        assert!(!exact);
        assert_eq!(out, Formula::cmp(CmpOp::Gt, v("z"), Term::Int(0)));
    }

    #[test]
    fn elimination_output_is_implied() {
        // Check y > x eliminations against brute-force truth on a grid.
        let f = Formula::exists(
            "x",
            Formula::and(
                Formula::cmp(CmpOp::Gt, v("x"), Term::Int(-2)),
                Formula::cmp(CmpOp::Lt, v("x"), v("y")),
            ),
        );
        let (out, _) = qe(&f);
        let qdom: Vec<i64> = (-4..=4).collect();
        for y in -3..=3 {
            let mut vars = BTreeMap::new();
            vars.insert("y".to_string(), y);
            let heap = BTreeMap::new();
            let env = EvalEnv { vars: &vars, heap: &heap, qdom: &qdom, mode: IntMode::Math };
            let direct = f.eval(&env, &mut Vec::new());
            let elim = out.eval(&env, &mut Vec::new());
            if direct == Some(true) {
                assert_eq!(elim, Some(true), "y = {y}");
            }
        }
    }

    #[test]
    fn cap_overflow_reports() {
        // (x < a0 || x > b0) && (x < a1 || x > b1) && ... blows up
        // exponentially, and every disjunct pins x so the simplifier cannot
        // push the quantifier out of the way first.
        let mut f: Option<Formula> = None;
        for i in 0..12 {
            let name_a = format!("a{i}");
            let name_b = format!("b{i}");
            let clause = Formula::or(
                Formula::cmp(CmpOp::Lt, v("x"), v(&name_a)),
                Formula::cmp(CmpOp::Gt, v("x"), v(&name_b)),
            );
            f = Some(match f {
                None => clause,
                Some(acc) => Formula::and(acc, clause),
            });
        }
        let mut with_v = Formula::exists("x", f.unwrap());
        let mut fresh = Fresh::default();
        assert_eq!(
            eliminate_quantifiers(&with_v, 64, &mut fresh).unwrap_err(),
            CapExceeded
        );
        // The pipeline falls back to the nondet encoding.
        with_v = Formula::not(with_v);
        let cond = trim_condition(&with_v, &EngineConfig::default(), &mut fresh);
        assert!(!cond.nondet_vars.is_empty());
    }

    #[test]
    fn nondet_encoding_renames_binders() {
        let f = Formula::and(
            Formula::cmp(CmpOp::Gt, v("p"), Term::Int(0)),
            Formula::exists("p", eq(v("p"), Term::Int(1))),
        );
        let mut fresh = Fresh::default();
        let (out, vars) = nondet_encode(&f, &mut fresh);
        assert_eq!(vars.len(), 1);
        let q = &vars[0];
        assert_eq!(
            out,
            Formula::and(
                Formula::cmp(CmpOp::Gt, v("p"), Term::Int(0)),
                eq(v(q), Term::Int(1))
            )
        );
    }

    #[test]
    fn bounding_keeps_smallest_in_order() {
        let big = Formula::cmp(
            CmpOp::Gt,
            Term::bin(
                crate::ast::ArithOp::Add,
                Term::bin(crate::ast::ArithOp::Mul, v("a"), v("b")),
                v("c"),
            ),
            Term::Int(0),
        );
        let s1 = eq(v("x"), Term::Int(1));
        let s2 = eq(v("y"), Term::Int(2));
        let f = Formula::conj(vec![big.clone(), s1.clone(), s2.clone()]);
        assert_eq!(bound_conjuncts(&f, 2), Formula::and(s1.clone(), s2.clone()));
        // Under a negation the conjunction flips polarity and stays intact.
        let neg = Formula::not(f);
        assert_eq!(bound_conjuncts(&neg, 2), neg);
        // Negative-polarity disjunctions are capped instead.
        let ord = Formula::not(Formula::disj(vec![big.clone(), s1.clone(), s2.clone()]));
        assert_eq!(
            bound_conjuncts(&ord, 2),
            Formula::not(Formula::or(s1, s2))
        );
    }

    #[test]
    fn trim_condition_negates_and_simplifies() {
        let phi = Formula::not(eq(v("m"), Term::Int(5)));
        let mut fresh = Fresh::default();
        let cond = trim_condition(&phi, &EngineConfig::default(), &mut fresh);
        assert!(cond.exact);
        assert!(cond.nondet_vars.is_empty());
        assert_eq!(cond.formula, eq(v("m"), Term::Int(5)));
    }

    #[test]
    fn trim_condition_eliminates_entry_quantifier() {
        // not(forall f. (m != 5 || f = 0)) becomes m = 5 after elimination:
        // exists f. (m = 5 && f != 0) has a witness whenever m = 5.
        let phi = Formula::forall(
            "f",
            Formula::or(Formula::not(eq(v("m"), Term::Int(5))), eq(v("f"), Term::Int(0))),
        );
        let mut fresh = Fresh::default();
        let cond = trim_condition(&phi, &EngineConfig::default(), &mut fresh);
        assert_eq!(cond.formula, eq(v("m"), Term::Int(5)));
        assert!(cond.exact);
    }
}
