mod common;

use trim_core::testgen::{gen_corpus_program, negate_one_assert, seed_from_env, Rng};
use trim_core::*;

fn kind(v: &Verdict) -> &'static str {
    match v {
        Verdict::EquiSafe => "equisafe",
        Verdict::Counterexample { .. } => "counterexample",
        Verdict::Inconclusive { .. } => "inconclusive",
    }
}

#[test]
#[ignore]
fn diag7() {
    let mut rng = Rng::new(seed_from_env(0xC7));
    let cfg = ExecConfig {
        nondet_lo: -4,
        nondet_hi: 4,
        fork_bound: 48,
        max_paths: 32768,
        ..ExecConfig::default()
    };
    let mut raw_detect = 0usize;
    let mut trim_detect = 0usize;
    let mut printed = 0usize;
    for case in 0..50 {
        let p = gen_corpus_program(&mut rng);
        let mutant = negate_one_assert(&p, &mut rng).unwrap();
        let trimmed = trim_program(&mutant, &Preset::Trim.config());
        let params = p.entry_procedure().unwrap().params.clone();
        let inputs = input_valuations(&params, -3, 3);
        let raw = check_equi_safe(&p, &mutant, &inputs, &cfg);
        let trm = check_equi_safe(&p, &trimmed.program, &inputs, &cfg);
        let rd = matches!(raw, Verdict::Counterexample { .. });
        let td = matches!(trm, Verdict::Counterexample { .. });
        if rd {
            raw_detect += 1;
        }
        if td {
            trim_detect += 1;
        }
        if !td {
            let mut both = 0usize;
            let mut none = 0usize;
            let mut inc = 0usize;
            for sigma in &inputs {
                let o = explore(&p, sigma, &cfg);
                let m = explore(&mutant, sigma, &cfg);
                if o.inconclusive > 0 || m.inconclusive > 0 {
                    inc += 1;
                    continue;
                }
                match (o.has_fail(), m.has_fail()) {
                    (true, true) => both += 1,
                    (false, false) => none += 1,
                    _ => {}
                }
            }
            eprintln!(
                "case {case}: raw={} trim={} inputs={} both_fail={both} none_fail={none} inc={inc}",
                kind(&raw),
                kind(&trm),
                inputs.len()
            );
            if printed < 12 {
                printed += 1;
                eprintln!("--- original\n{}", print_program(&p));
                eprintln!("--- mutant\n{}", print_program(&mutant));
            }
        }
    }
    eprintln!("raw detected {raw_detect}/50, trimmed detected {trim_detect}/50");
}

#[test]
#[ignore]
fn diag5() {
    let mut rng = Rng::new(seed_from_env(0xC4));
    let cfg = ExecConfig {
        nondet_lo: -2,
        nondet_hi: 2,
        fork_bound: 48,
        max_paths: 32768,
        ..ExecConfig::default()
    };
    let mut by_preset = std::collections::BTreeMap::new();
    let mut samples = Vec::new();
    for case in 0..500 {
        let p = gen_corpus_program(&mut rng);
        let params = p.entry_procedure().unwrap().params.clone();
        let inputs = common_sample(&params);
        for preset in Preset::ALL {
            let trimmed = trim_program(&p, &preset.config());
            if let Verdict::Inconclusive { sigma, detail } =
                check_equi_safe(&p, &trimmed.program, &inputs, &cfg)
            {
                *by_preset.entry(preset.name()).or_insert(0usize) += 1;
                if samples.len() < 8 {
                    samples.push((case, preset.name(), sigma, detail));
                }
            }
        }
    }
    eprintln!("inconclusive by preset: {by_preset:?}");
    for (case, name, sigma, detail) in samples {
        eprintln!("case {case} {name} sigma={sigma:?}: {detail}");
    }
}

fn common_sample(params: &[Ident]) -> Vec<Valuation> {
    let all = input_valuations(params, -1, 1);
    let max = 9usize.min(all.len());
    (0..max).map(|i| all[i * all.len() / max].clone()).collect()
}
