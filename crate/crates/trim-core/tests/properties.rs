//! Randomized structural properties, driven by proptest over generator
//! seeds: printing round-trips, meaning-preserving formula rewrites, and
//! totality of the pipeline on generated programs.

mod common;

use proptest::prelude::*;
use trim_core::testgen::{gen_corpus_program, gen_formula, Rng};
use trim_core::{parse_program, print_program, trim_program, Formula, Preset};

fn qdom() -> Vec<i64> {
    (-8..=8).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_programs_print_and_reparse_identically(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let p = gen_corpus_program(&mut rng);
        let text = print_program(&p);
        let again = parse_program(&text).unwrap();
        prop_assert_eq!(&p, &again);
        prop_assert_eq!(print_program(&again), text);
    }

    #[test]
    fn simplify_preserves_meaning(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let f = gen_formula(&mut rng);
        if let Err(e) = common::equivalent_on_grid(&f, &f.simplify(), -2, 2, &qdom()) {
            return Err(TestCaseError::fail(e));
        }
    }

    #[test]
    fn negation_normal_form_preserves_meaning(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let f = gen_formula(&mut rng);
        if let Err(e) = common::equivalent_on_grid(&f, &f.nnf(), -2, 2, &qdom()) {
            return Err(TestCaseError::fail(e));
        }
        let neg = f.negated_nnf();
        if let Err(e) = common::equivalent_on_grid(&Formula::not(f), &neg, -2, 2, &qdom()) {
            return Err(TestCaseError::fail(e));
        }
    }

    #[test]
    fn trimming_generated_programs_is_total(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let p = gen_corpus_program(&mut rng);
        for preset in Preset::ALL {
            let trimmed = trim_program(&p, &preset.config());
            prop_assert!(
                trimmed.program.validate().is_ok(),
                "{} output fails validation for seed {seed}",
                preset.name()
            );
        }
    }
}
