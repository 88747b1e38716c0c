//! End-to-end checks of the worked examples in `programs/` against
//! hand-derived expected conditions and rewritten programs.

use std::path::PathBuf;

use trim_core::{
    infer_program, parse_program, print_program, split_procedures, trim_program, AliasInfo,
    CmpOp, Formula, IntMode, Preset, Step, Term, TrimConfig,
};

fn corpus(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../programs")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn eq(a: Term, b: Term) -> Formula {
    Formula::cmp(CmpOp::Eq, a, b)
}

#[test]
fn store_example_conditions_match_hand_derivation() {
    let p = parse_program(&corpus("ex41.imp")).unwrap();
    let alias = AliasInfo::analyze(&p);
    let inf = infer_program(&p, &alias, IntMode::Math);
    let ann = &inf.annotations["main"];

    let x = Term::var("x");
    let y = Term::var("y");
    // Before `*x := a`: *y already holds 3 and the two cells differ.
    assert_eq!(
        ann[&vec![Step::SeqR, Step::SeqL]],
        Formula::and(
            eq(Term::drf(y.clone()), Term::Int(3)),
            Formula::not(eq(x.clone(), y.clone()))
        )
    );
    // Before `*y := 3` in the else arm: the cells differ.
    assert_eq!(
        ann[&vec![Step::SeqL, Step::Else, Step::SeqR]],
        Formula::not(eq(x, y))
    );
    // Before `assume x != y`: nothing is required yet.
    assert_eq!(ann[&vec![Step::SeqL, Step::Else, Step::SeqL]], Formula::tt());
}

#[test]
fn call_splitting_matches_expected_text() {
    let p = parse_program(&corpus("ex52.imp")).unwrap();
    let split = split_procedures(&p);
    assert_eq!(
        print_program(&split.program),
        include_str!("data/ex52.split.expected.imp")
    );
}

#[test]
fn interprocedural_trim_matches_expected_text() {
    let mut p = parse_program(&corpus("ex53.imp")).unwrap();
    p.set_entry("bar").unwrap();
    let trimmed = trim_program(&p, &TrimConfig::default());
    assert_eq!(
        print_program(&trimmed.program),
        include_str!("data/ex53.trimmed.expected.imp")
    );
}

#[test]
fn call_only_preset_pins_the_failing_input() {
    let p = parse_program(&corpus("fig1_dse.imp")).unwrap();
    let trimmed = trim_program(&p, &Preset::TrimL.config());
    let text = print_program(&trimmed.program);
    assert!(text.contains("assume m = 5;"), "got:\n{text}");
}

#[test]
fn recursive_example_blocks_nonfailing_entries() {
    let p = parse_program(&corpus("fig1_ai.imp")).unwrap();
    let trimmed = trim_program(&p, &TrimConfig::default());
    let text = print_program(&trimmed.program);
    assert!(
        text.contains("proc fact(n) : r {\n  assume n != 0;"),
        "got:\n{text}"
    );
    assert!(
        text.contains("proc main(m) : f {\n  assume m != 0;"),
        "got:\n{text}"
    );
}

#[test]
fn assert_free_program_is_fully_trimmed() {
    let p = parse_program(&corpus("empty.imp")).unwrap();
    let trimmed = trim_program(&p, &TrimConfig::default());
    let text = print_program(&trimmed.program);
    assert!(text.starts_with("proc main() : r {\n  assume false;"), "got:\n{text}");
    assert_eq!(trimmed.report.assumes, 1);
}
