//! Canonical pretty printer. Output reparses to the identical AST, and the
//! line map lets reports point at statements by source line of the printed
//! text.

use crate::ast::{Path, Procedure, Program, Step, Stmt};
use std::collections::BTreeMap;

pub fn print_program(program: &Program) -> String {
    print_with_lines(program).0
}

/// Prints the program and records, for every statement leaf and every
/// `if (*)` header, the 1-based output line it starts on, keyed by
/// (procedure index, path).
pub fn print_with_lines(program: &Program) -> (String, BTreeMap<(usize, Path), u32>) {
    let mut pr = Printer { out: String::new(), line: 1, lines: BTreeMap::new() };
    for (pi, p) in program.procedures.iter().enumerate() {
        if pi > 0 {
            pr.out.push('\n');
            pr.line += 1;
        }
        pr.procedure(pi, p);
    }
    (pr.out, pr.lines)
}

struct Printer {
    out: String,
    line: u32,
    lines: BTreeMap<(usize, Path), u32>,
}

impl Printer {
    fn emit(&mut self, indent: usize, text: &str) {
        for _ in 0..indent {
            self.out.push_str("  ");
        }
        self.out.push_str(text);
        self.out.push('\n');
        self.line += 1;
    }

    fn procedure(&mut self, pi: usize, p: &Procedure) {
        self.emit(0, &format!("proc {}({}) : {} {{", p.name, p.params.join(", "), p.ret));
        let mut path = Vec::new();
        self.stmt(pi, &p.body, 1, &mut path);
        self.emit(0, "}");
    }

    fn stmt(&mut self, pi: usize, s: &Stmt, indent: usize, path: &mut Path) {
        match s {
            Stmt::Seq(a, b) => {
                path.push(Step::SeqL);
                self.stmt(pi, a, indent, path);
                path.pop();
                path.push(Step::SeqR);
                self.stmt(pi, b, indent, path);
                path.pop();
            }
            Stmt::NondetIf(a, b) => {
                self.lines.insert((pi, path.clone()), self.line);
                self.emit(indent, "if (*) {");
                path.push(Step::Then);
                self.stmt(pi, a, indent + 1, path);
                path.pop();
                self.emit(indent, "} else {");
                path.push(Step::Else);
                self.stmt(pi, b, indent + 1, path);
                path.pop();
                self.emit(indent, "}");
            }
            leaf => {
                self.lines.insert((pi, path.clone()), self.line);
                let text = match leaf {
                    Stmt::Assign { dst, src } => format!("{dst} := {src};"),
                    Stmt::HeapLoad { dst, src } => format!("{dst} := *{src};"),
                    Stmt::HeapStore { dst, src } => format!("*{dst} := {src};"),
                    Stmt::Malloc { dst, size } => format!("{dst} := malloc({size});"),
                    Stmt::Call { dst, proc, args } => {
                        format!("{dst} := call {proc}({});", args.join(", "))
                    }
                    Stmt::Assert(p) => format!("assert {p};"),
                    Stmt::Assume(p) => format!("assume {p};"),
                    Stmt::NondetAssign { dst } => format!("{dst} := nondet;"),
                    Stmt::Seq(..) | Stmt::NondetIf(..) => unreachable!(),
                };
                self.emit(indent, &text);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_program;

    #[test]
    fn prints_canonical_form() {
        let src = "proc main(x) : r {\n  if (*) {\n    r := x + 1;\n  } else {\n    assume true;\n  }\n  assert r > 0;\n}\n";
        let p = parse_program(src).unwrap();
        assert_eq!(print_program(&p), src);
    }

    #[test]
    fn roundtrips_after_desugaring() {
        let src = "proc main(p) : r { if (*p > 0) { r := **p; } else { r := -1; } }";
        let once = parse_program(src).unwrap();
        let printed = print_program(&once);
        let twice = parse_program(&printed).unwrap();
        assert_eq!(once, twice);
        assert_eq!(print_program(&twice), printed);
    }

    #[test]
    fn line_map_points_at_statements() {
        let src = "proc f(x) : r { r := x; }\n\nproc main(y) : r { r := call f(y); assert r > 0; }";
        let p = parse_program(src).unwrap();
        let (text, lines) = print_with_lines(&p);
        let all: Vec<&str> = text.lines().collect();
        // f's single statement.
        assert_eq!(all[lines[&(0, vec![])] as usize - 1].trim(), "r := x;");
        // main's two statements.
        assert_eq!(
            all[lines[&(1, vec![Step::SeqL])] as usize - 1].trim(),
            "r := call f(y);"
        );
        assert_eq!(
            all[lines[&(1, vec![Step::SeqR])] as usize - 1].trim(),
            "assert r > 0;"
        );
    }
}
