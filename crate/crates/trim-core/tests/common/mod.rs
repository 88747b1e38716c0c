//! Helpers shared by the integration suites: corpus loading and brute-force
//! formula checks over bounded domains.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use trim_core::{input_valuations, EvalEnv, Formula, Ident, IntMode};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../programs")
}

pub fn corpus_files() -> Vec<(String, String)> {
    let dir = corpus_dir();
    let mut out = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "imp") {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            out.push((name, std::fs::read_to_string(&path).unwrap()));
        }
    }
    out.sort();
    assert!(!out.is_empty(), "no corpus programs in {}", dir.display());
    out
}

/// Every (valuation, heap) point for the free variables of `fs`, scalars in
/// `lo..=hi`. When any formula dereferences, small heaps over addresses 0
/// and 1 are enumerated too; other cells read as 0.
pub fn points_for(
    fs: &[&Formula],
    lo: i64,
    hi: i64,
) -> Vec<(BTreeMap<Ident, i64>, BTreeMap<i64, i64>)> {
    let mut vars = std::collections::BTreeSet::new();
    for f in fs {
        f.free_vars(&mut vars);
    }
    let vars: Vec<Ident> = vars.into_iter().collect();
    let heapy = fs.iter().any(|f| !f.deref_args().is_empty());
    let mut heaps = vec![BTreeMap::new()];
    if heapy {
        heaps.push(BTreeMap::from([(0i64, 1), (1i64, -1)]));
        heaps.push(BTreeMap::from([(0i64, -2), (1i64, 2)]));
    }
    let mut out = Vec::new();
    for vals in input_valuations(&vars, lo, hi) {
        for heap in &heaps {
            out.push((vals.clone(), heap.clone()));
        }
    }
    out
}

pub fn eval_at(
    f: &Formula,
    vars: &BTreeMap<Ident, i64>,
    heap: &BTreeMap<i64, i64>,
    qdom: &[i64],
) -> Option<bool> {
    let env = EvalEnv { vars, heap, qdom, mode: IntMode::Math };
    f.eval(&env, &mut Vec::new())
}

/// Checks that `premise` implies `conclusion` at every grid point; the error
/// carries the first failing point.
pub fn implied_on_grid(
    premise: &Formula,
    conclusion: &Formula,
    lo: i64,
    hi: i64,
    qdom: &[i64],
) -> Result<(), String> {
    for (vals, heap) in points_for(&[premise, conclusion], lo, hi) {
        if eval_at(premise, &vals, &heap, qdom) == Some(true)
            && eval_at(conclusion, &vals, &heap, qdom) != Some(true)
        {
            return Err(format!(
                "({premise}) does not imply ({conclusion}) at {vals:?}, heap {heap:?}"
            ));
        }
    }
    Ok(())
}

pub fn equivalent_on_grid(
    a: &Formula,
    b: &Formula,
    lo: i64,
    hi: i64,
    qdom: &[i64],
) -> Result<(), String> {
    for (vals, heap) in points_for(&[a, b], lo, hi) {
        let va = eval_at(a, &vals, &heap, qdom);
        let vb = eval_at(b, &vals, &heap, qdom);
        if va != vb {
            return Err(format!(
                "({a}) = {va:?} but ({b}) = {vb:?} at {vals:?}, heap {heap:?}"
            ));
        }
    }
    Ok(())
}
