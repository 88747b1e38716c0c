//! End-to-end pipeline configuration and the named presets.

use std::collections::BTreeSet;
use std::str::FromStr;

use crate::alias::AliasInfo;
use crate::ast::Program;
use crate::engine::{EngineConfig, QeMethod};
use crate::formula::IntMode;
use crate::infer::infer_program;
use crate::instrument::{instrument, split_procedures, Observation, Placement, TrimReport};

#[derive(Clone, Debug)]
pub struct TrimConfig {
    pub engine: EngineConfig,
    pub placements: BTreeSet<Placement>,
    pub int_mode: IntMode,
    /// Insert `assume false` at the entry when the whole program is safe.
    pub keep_trivial: bool,
}

impl Default for TrimConfig {
    fn default() -> Self {
        TrimConfig {
            engine: EngineConfig::default(),
            placements: Placement::all(),
            int_mode: IntMode::Math,
            keep_trivial: true,
        }
    }
}

/// The six shipped configurations. They differ in whether conditions are
/// bounded to 4 conjuncts, whether quantifiers are eliminated or encoded as
/// nondeterministic reads, and whether conditionals get conditions too.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Preset {
    TrimLb,
    TrimB,
    TrimNdb,
    TrimL,
    Trim,
    TrimNd,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::TrimLb,
        Preset::TrimB,
        Preset::TrimNdb,
        Preset::TrimL,
        Preset::Trim,
        Preset::TrimNd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::TrimLb => "trim_LB",
            Preset::TrimB => "trim_B",
            Preset::TrimNdb => "trim_NDB",
            Preset::TrimL => "trim_L",
            Preset::Trim => "trim",
            Preset::TrimNd => "trim_ND",
        }
    }

    pub fn config(self) -> TrimConfig {
        let bounded = matches!(self, Preset::TrimLb | Preset::TrimB | Preset::TrimNdb);
        let nondet = matches!(self, Preset::TrimNdb | Preset::TrimNd);
        let calls_only = matches!(self, Preset::TrimLb | Preset::TrimL);
        let mut placements = BTreeSet::from([Placement::BeforeCalls]);
        if !calls_only {
            placements.insert(Placement::BeforeConditionals);
        }
        TrimConfig {
            engine: EngineConfig {
                qe: if nondet { QeMethod::Nondet } else { QeMethod::Full },
                max_conjuncts: if bounded { Some(4) } else { None },
                ..EngineConfig::default()
            },
            placements,
            int_mode: IntMode::Math,
            keep_trivial: true,
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset '{s}'"))
    }
}

#[derive(Debug)]
pub struct Trimmed {
    /// Split but not yet instrumented; the observation paths point here.
    pub split_program: Program,
    /// The final output with assumes spliced in.
    pub program: Program,
    pub observations: Vec<Observation>,
    pub report: TrimReport,
}

/// Full pipeline on a validated program: split every called procedure into
/// an assume-only twin and a failure-bound original, infer safety conditions
/// backward, then splice in the negated conditions at the configured points.
pub fn trim_program(program: &Program, cfg: &TrimConfig) -> Trimmed {
    let split = split_procedures(program);
    let alias = AliasInfo::analyze(&split.program);
    let inference = infer_program(&split.program, &alias, cfg.int_mode);
    let instrumented = instrument(
        &split,
        &inference,
        &cfg.engine,
        &cfg.placements,
        cfg.keep_trivial,
    );
    Trimmed {
        split_program: split.program,
        program: instrumented.program,
        observations: instrumented.observations,
        report: instrumented.report,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_program;
    use crate::print::print_program;

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("trim_lb".parse::<Preset>().is_err());
    }

    #[test]
    fn bounded_presets_cap_conjuncts() {
        assert_eq!(Preset::TrimLb.config().engine.max_conjuncts, Some(4));
        assert_eq!(Preset::TrimL.config().engine.max_conjuncts, None);
        assert_eq!(Preset::TrimNd.config().engine.qe, QeMethod::Nondet);
        assert!(!Preset::TrimL
            .config()
            .placements
            .contains(&Placement::BeforeConditionals));
        for p in Preset::ALL {
            assert!(!p.config().placements.contains(&Placement::AtEntry));
        }
    }

    #[test]
    fn assert_free_program_blocks_at_entry() {
        let src = "\
proc main(m) : f {
  f := m + 1;
}
";
        let p = parse_program(src).unwrap();
        p.validate().unwrap();
        let out = trim_program(&p, &TrimConfig::default());
        let text = print_program(&out.program);
        assert!(text.starts_with("proc main(m) : f {\n  assume false;\n"), "{text}");
        assert_eq!(out.report.assumes, 1);
    }

    #[test]
    fn call_preset_guards_the_call_site() {
        let src = "\
proc fact(n) : r {
  r := 1;
  if (n > 0) {
    t := call fact(n - 1);
    r := n * t;
  } else {
  }
}

proc main(m) : f {
  f := call fact(m);
  assert m != 5 || f = 120;
}
";
        let p = parse_program(src).unwrap();
        p.validate().unwrap();
        let out = trim_program(&p, &Preset::TrimL.config());
        out.program.validate().unwrap();
        let text = print_program(&out.program);
        assert!(text.contains("assume m = 5;"), "{text}");
    }
}
