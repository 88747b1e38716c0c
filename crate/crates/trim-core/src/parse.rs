//! Concrete syntax -> AST. Parsing desugars the surface language into the
//! core statement forms: dereferences inside expressions become explicit
//! heap loads, call arguments become plain variables, and deterministic
//! conditionals become nondeterministic ones whose arms assume the guard.

use crate::ast::{ArithOp, CmpOp, Expr, Ident, Pred, Procedure, Program, Stmt, ValidateError};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}:{col}: unexpected character '{ch}'")]
    UnexpectedChar { ch: char, line: u32, col: u32 },
    #[error("line {line}:{col}: integer literal out of range")]
    IntOutOfRange { line: u32, col: u32 },
    #[error("line {line}:{col}: expected {expected}, found {found}")]
    Unexpected {
        expected: String,
        found: String,
        line: u32,
        col: u32,
    },
    #[error("unexpected end of input, expected {expected}")]
    Eof { expected: String },
    #[error(transparent)]
    Invalid(#[from] ValidateError),
}

#[derive(Clone, PartialEq, Eq, Debug)]
enum Tok {
    Ident(String),
    Int(i64),
    KwProc,
    KwMalloc,
    KwCall,
    KwNondet,
    KwAssert,
    KwAssume,
    KwIf,
    KwElse,
    KwTrue,
    KwFalse,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Colon,
    Assign,
    Plus,
    Minus,
    Star,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
    AndAnd,
    OrOr,
    Bang,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Int(n) => format!("integer {n}"),
            Tok::KwProc => "'proc'".into(),
            Tok::KwMalloc => "'malloc'".into(),
            Tok::KwCall => "'call'".into(),
            Tok::KwNondet => "'nondet'".into(),
            Tok::KwAssert => "'assert'".into(),
            Tok::KwAssume => "'assume'".into(),
            Tok::KwIf => "'if'".into(),
            Tok::KwElse => "'else'".into(),
            Tok::KwTrue => "'true'".into(),
            Tok::KwFalse => "'false'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::Comma => "','".into(),
            Tok::Semi => "';'".into(),
            Tok::Colon => "':'".into(),
            Tok::Assign => "':='".into(),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Lt => "'<'".into(),
            Tok::Gt => "'>'".into(),
            Tok::Le => "'<='".into(),
            Tok::Ge => "'>='".into(),
            Tok::Eq => "'='".into(),
            Tok::Ne => "'!='".into(),
            Tok::AndAnd => "'&&'".into(),
            Tok::OrOr => "'||'".into(),
            Tok::Bang => "'!'".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: u32,
    col: u32,
}

struct Lexer {
    chars: Vec<char>,
    i: usize,
    line: u32,
    col: u32,
}

impl Lexer {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).copied()
    }

    fn peek2(&self) -> Option<char> {
        self.chars.get(self.i + 1).copied()
    }

    fn bump(&mut self) -> char {
        let c = self.chars[self.i];
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut lx = Lexer { chars: src.chars().collect(), i: 0, line: 1, col: 1 };
    let mut out = Vec::new();
    while let Some(c) = lx.peek() {
        let (tline, tcol) = (lx.line, lx.col);
        if c.is_whitespace() {
            lx.bump();
            continue;
        }
        if c == '/' && lx.peek2() == Some('/') {
            while lx.peek().is_some_and(|c| c != '\n') {
                lx.bump();
            }
            continue;
        }
        if c.is_ascii_digit() {
            let mut text = String::new();
            while lx.peek().is_some_and(|c| c.is_ascii_digit()) {
                text.push(lx.bump());
            }
            let n: i64 = text
                .parse()
                .map_err(|_| ParseError::IntOutOfRange { line: tline, col: tcol })?;
            out.push(Token { tok: Tok::Int(n), line: tline, col: tcol });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut text = String::new();
            while lx.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
                text.push(lx.bump());
            }
            let tok = match text.as_str() {
                "proc" => Tok::KwProc,
                "malloc" => Tok::KwMalloc,
                "call" => Tok::KwCall,
                "nondet" => Tok::KwNondet,
                "assert" => Tok::KwAssert,
                "assume" => Tok::KwAssume,
                "if" => Tok::KwIf,
                "else" => Tok::KwElse,
                "true" => Tok::KwTrue,
                "false" => Tok::KwFalse,
                _ => Tok::Ident(text),
            };
            out.push(Token { tok, line: tline, col: tcol });
            continue;
        }
        let two: Option<Tok> = match (c, lx.peek2()) {
            (':', Some('=')) => Some(Tok::Assign),
            ('!', Some('=')) => Some(Tok::Ne),
            ('<', Some('=')) => Some(Tok::Le),
            ('>', Some('=')) => Some(Tok::Ge),
            ('&', Some('&')) => Some(Tok::AndAnd),
            ('|', Some('|')) => Some(Tok::OrOr),
            _ => None,
        };
        if let Some(tok) = two {
            lx.bump();
            lx.bump();
            out.push(Token { tok, line: tline, col: tcol });
            continue;
        }
        let one = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            ',' => Tok::Comma,
            ';' => Tok::Semi,
            ':' => Tok::Colon,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '<' => Tok::Lt,
            '>' => Tok::Gt,
            '=' => Tok::Eq,
            '!' => Tok::Bang,
            other => {
                return Err(ParseError::UnexpectedChar { ch: other, line: tline, col: tcol })
            }
        };
        lx.bump();
        out.push(Token { tok: one, line: tline, col: tcol });
    }
    Ok(out)
}

/// Expression as written, before dereferences are hoisted into loads.
enum SExpr {
    Var(Ident),
    Int(i64),
    Bin(ArithOp, Box<SExpr>, Box<SExpr>),
    Drf(Box<SExpr>),
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    temp_next: u32,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, off: usize) -> Option<&Tok> {
        self.tokens.get(self.pos + off).map(|t| &t.tok)
    }

    fn err_here(&self, expected: &str) -> ParseError {
        match self.tokens.get(self.pos) {
            Some(t) => ParseError::Unexpected {
                expected: expected.into(),
                found: t.tok.describe(),
                line: t.line,
                col: t.col,
            },
            None => ParseError::Eof { expected: expected.into() },
        }
    }

    fn eat(&mut self, tok: Tok) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err_here(&tok.describe()))
        }
    }

    fn ident(&mut self) -> Result<Ident, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err_here("identifier")),
        }
    }

    fn fresh_temp(&mut self) -> Ident {
        let name = format!("_t{}", self.temp_next);
        self.temp_next += 1;
        name
    }

    /// Temps are numbered per procedure, above any `_tN` already present in
    /// its body so reparsing printed output cannot collide.
    fn seed_temps_from_body(&mut self) {
        let mut max: Option<u32> = None;
        let mut depth = 0usize;
        for t in &self.tokens[self.pos..] {
            match &t.tok {
                Tok::LBrace => depth += 1,
                Tok::RBrace => {
                    if depth <= 1 {
                        break;
                    }
                    depth -= 1;
                }
                Tok::Ident(s) => {
                    if let Some(rest) = s.strip_prefix("_t") {
                        if let Ok(n) = rest.parse::<u32>() {
                            max = Some(max.map_or(n, |m| m.max(n)));
                        }
                    }
                }
                _ => {}
            }
        }
        self.temp_next = max.map_or(0, |m| m + 1);
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut procedures = Vec::new();
        while self.peek().is_some() {
            procedures.push(self.procedure()?);
        }
        if procedures.is_empty() {
            return Err(ParseError::Eof { expected: "'proc'".into() });
        }
        Ok(Program { procedures, entry: "main".into() })
    }

    fn procedure(&mut self) -> Result<Procedure, ParseError> {
        self.eat(Tok::KwProc)?;
        let name = self.ident()?;
        self.eat(Tok::LParen)?;
        let mut params = Vec::new();
        if self.peek() != Some(&Tok::RParen) {
            loop {
                params.push(self.ident()?);
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.eat(Tok::RParen)?;
        self.eat(Tok::Colon)?;
        let ret = self.ident()?;
        self.seed_temps_from_body();
        let body = self.block()?;
        Ok(Procedure { name, params, ret, body })
    }

    fn block(&mut self) -> Result<Stmt, ParseError> {
        self.eat(Tok::LBrace)?;
        let mut items = Vec::new();
        while self.peek() != Some(&Tok::RBrace) {
            if self.peek().is_none() {
                return Err(self.err_here("statement or '}'"));
            }
            self.stmt(&mut items)?;
        }
        self.eat(Tok::RBrace)?;
        Ok(Stmt::seq(items))
    }

    /// Parses one surface statement, pushing it (plus any hoisted loads and
    /// temp assignments) onto `out`.
    fn stmt(&mut self, out: &mut Vec<Stmt>) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::KwAssert) | Some(Tok::KwAssume) => {
                let is_assert = self.peek() == Some(&Tok::KwAssert);
                self.pos += 1;
                let p = self.pred(out)?;
                self.eat(Tok::Semi)?;
                out.push(if is_assert { Stmt::Assert(p) } else { Stmt::Assume(p) });
                Ok(())
            }
            Some(Tok::KwIf) => {
                self.pos += 1;
                self.eat(Tok::LParen)?;
                if self.peek() == Some(&Tok::Star) && self.peek_at(1) == Some(&Tok::RParen) {
                    self.pos += 2;
                    let a = self.block()?;
                    self.eat(Tok::KwElse)?;
                    let b = self.block()?;
                    out.push(Stmt::NondetIf(Box::new(a), Box::new(b)));
                } else {
                    // Deterministic branch: loads feeding the guard run once,
                    // before the nondeterministic split.
                    let p = self.pred(out)?;
                    self.eat(Tok::RParen)?;
                    let a = self.block()?;
                    self.eat(Tok::KwElse)?;
                    let b = self.block()?;
                    let then_arm = Stmt::Seq(Box::new(Stmt::Assume(p.clone())), Box::new(a));
                    let else_arm = Stmt::Seq(Box::new(Stmt::Assume(p.negated())), Box::new(b));
                    out.push(Stmt::NondetIf(Box::new(then_arm), Box::new(else_arm)));
                }
                Ok(())
            }
            Some(Tok::Star) => {
                // `* ID := expr ;`
                self.pos += 1;
                let dst = self.ident()?;
                self.eat(Tok::Assign)?;
                let se = self.expr_surface()?;
                self.eat(Tok::Semi)?;
                let src = self.lower(se, out);
                out.push(Stmt::HeapStore { dst, src });
                Ok(())
            }
            Some(Tok::Ident(_)) => {
                let dst = self.ident()?;
                self.eat(Tok::Assign)?;
                match self.peek() {
                    Some(Tok::KwMalloc) => {
                        self.pos += 1;
                        self.eat(Tok::LParen)?;
                        let se = self.expr_surface()?;
                        self.eat(Tok::RParen)?;
                        self.eat(Tok::Semi)?;
                        let size = self.lower(se, out);
                        out.push(Stmt::Malloc { dst, size });
                    }
                    Some(Tok::KwCall) => {
                        self.pos += 1;
                        let proc = self.ident()?;
                        self.eat(Tok::LParen)?;
                        let mut args = Vec::new();
                        if self.peek() != Some(&Tok::RParen) {
                            loop {
                                let se = self.expr_surface()?;
                                args.push(se);
                                if self.peek() == Some(&Tok::Comma) {
                                    self.pos += 1;
                                } else {
                                    break;
                                }
                            }
                        }
                        self.eat(Tok::RParen)?;
                        self.eat(Tok::Semi)?;
                        let mut flat = Vec::new();
                        for se in args {
                            flat.push(self.lower_to_var(se, out));
                        }
                        out.push(Stmt::Call { dst, proc, args: flat });
                    }
                    Some(Tok::KwNondet) => {
                        self.pos += 1;
                        self.eat(Tok::Semi)?;
                        out.push(Stmt::NondetAssign { dst });
                    }
                    // `ID := * ID ;` is a direct heap load, not a hoisted one.
                    Some(Tok::Star)
                        if matches!(self.peek_at(1), Some(Tok::Ident(_)))
                            && self.peek_at(2) == Some(&Tok::Semi) =>
                    {
                        self.pos += 1;
                        let src = self.ident()?;
                        self.eat(Tok::Semi)?;
                        out.push(Stmt::HeapLoad { dst, src });
                    }
                    _ => {
                        let se = self.expr_surface()?;
                        self.eat(Tok::Semi)?;
                        let src = self.lower(se, out);
                        out.push(Stmt::Assign { dst, src });
                    }
                }
                Ok(())
            }
            _ => Err(self.err_here("statement")),
        }
    }

    fn pred(&mut self, out: &mut Vec<Stmt>) -> Result<Pred, ParseError> {
        let mut p = self.pred_conj(out)?;
        while self.peek() == Some(&Tok::OrOr) {
            self.pos += 1;
            let q = self.pred_conj(out)?;
            p = Pred::or(p, q);
        }
        Ok(p)
    }

    fn pred_conj(&mut self, out: &mut Vec<Stmt>) -> Result<Pred, ParseError> {
        let mut p = self.pred_atom(out)?;
        while self.peek() == Some(&Tok::AndAnd) {
            self.pos += 1;
            let q = self.pred_atom(out)?;
            p = Pred::and(p, q);
        }
        Ok(p)
    }

    fn pred_atom(&mut self, out: &mut Vec<Stmt>) -> Result<Pred, ParseError> {
        match self.peek() {
            Some(Tok::Bang) => {
                self.pos += 1;
                let p = self.pred_atom(out)?;
                Ok(Pred::not(p))
            }
            Some(Tok::KwTrue) => {
                self.pos += 1;
                Ok(Pred::Bool(true))
            }
            Some(Tok::KwFalse) => {
                self.pos += 1;
                Ok(Pred::Bool(false))
            }
            Some(Tok::LParen) => {
                // Either a parenthesized predicate or a parenthesized
                // expression starting a comparison; try the comparison first.
                let save = self.pos;
                match self.comparison(out) {
                    Ok(p) => Ok(p),
                    Err(_) => {
                        self.pos = save;
                        self.pos += 1;
                        let p = self.pred(out)?;
                        self.eat(Tok::RParen)?;
                        Ok(p)
                    }
                }
            }
            _ => self.comparison(out),
        }
    }

    fn comparison(&mut self, out: &mut Vec<Stmt>) -> Result<Pred, ParseError> {
        let lhs = self.expr_surface()?;
        let (op, negate) = match self.peek() {
            Some(Tok::Eq) => (CmpOp::Eq, false),
            Some(Tok::Ne) => (CmpOp::Eq, true),
            Some(Tok::Lt) => (CmpOp::Lt, false),
            Some(Tok::Gt) => (CmpOp::Gt, false),
            Some(Tok::Le) => (CmpOp::Gt, true),
            Some(Tok::Ge) => (CmpOp::Lt, true),
            _ => return Err(self.err_here("comparison operator")),
        };
        self.pos += 1;
        let rhs = self.expr_surface()?;
        let a = self.lower(lhs, out);
        let b = self.lower(rhs, out);
        let cmp = Pred::cmp(op, a, b);
        Ok(if negate { Pred::not(cmp) } else { cmp })
    }

    fn expr_surface(&mut self) -> Result<SExpr, ParseError> {
        let mut e = self.term_surface()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => ArithOp::Add,
                Some(Tok::Minus) => ArithOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term_surface()?;
            e = SExpr::Bin(op, Box::new(e), Box::new(rhs));
        }
        Ok(e)
    }

    fn term_surface(&mut self) -> Result<SExpr, ParseError> {
        let mut e = self.factor_surface()?;
        while self.peek() == Some(&Tok::Star) {
            // `a * b` only when something that can start a factor follows;
            // otherwise the star belongs to the next statement.
            let next_starts_factor = matches!(
                self.peek_at(1),
                Some(Tok::Ident(_)) | Some(Tok::Int(_)) | Some(Tok::LParen) | Some(Tok::Minus)
                    | Some(Tok::Star)
            );
            if !next_starts_factor {
                break;
            }
            self.pos += 1;
            let rhs = self.factor_surface()?;
            e = SExpr::Bin(ArithOp::Mul, Box::new(e), Box::new(rhs));
        }
        Ok(e)
    }

    fn factor_surface(&mut self) -> Result<SExpr, ParseError> {
        match self.peek() {
            Some(Tok::Int(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(SExpr::Int(n))
            }
            Some(Tok::Minus) => {
                self.pos += 1;
                match self.peek() {
                    Some(Tok::Int(n)) => {
                        let n = *n;
                        self.pos += 1;
                        Ok(SExpr::Int(-n))
                    }
                    _ => Err(self.err_here("integer literal")),
                }
            }
            Some(Tok::Ident(_)) => {
                let v = self.ident()?;
                Ok(SExpr::Var(v))
            }
            Some(Tok::Star) => {
                self.pos += 1;
                let inner = self.factor_surface()?;
                Ok(SExpr::Drf(Box::new(inner)))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr_surface()?;
                self.eat(Tok::RParen)?;
                Ok(e)
            }
            _ => Err(self.err_here("expression")),
        }
    }

    /// Rewrites a surface expression into a core one, emitting loads for
    /// dereferences (innermost first) onto `out`.
    fn lower(&mut self, se: SExpr, out: &mut Vec<Stmt>) -> Expr {
        match se {
            SExpr::Var(v) => Expr::Var(v),
            SExpr::Int(n) => Expr::Int(n),
            SExpr::Bin(op, a, b) => {
                let a = self.lower(*a, out);
                let b = self.lower(*b, out);
                Expr::bin(op, a, b)
            }
            SExpr::Drf(inner) => {
                let addr = self.lower(*inner, out);
                let src = match addr {
                    Expr::Var(v) => v,
                    other => {
                        let t = self.fresh_temp();
                        out.push(Stmt::Assign { dst: t.clone(), src: other });
                        t
                    }
                };
                let dst = self.fresh_temp();
                out.push(Stmt::HeapLoad { dst: dst.clone(), src });
                Expr::Var(dst)
            }
        }
    }

    /// As `lower`, but always lands on a variable (for call arguments).
    fn lower_to_var(&mut self, se: SExpr, out: &mut Vec<Stmt>) -> Ident {
        match self.lower(se, out) {
            Expr::Var(v) => v,
            other => {
                let t = self.fresh_temp();
                out.push(Stmt::Assign { dst: t.clone(), src: other });
                t
            }
        }
    }
}

/// Parses a whole program. The entry point defaults to `main`; callers that
/// want a different entry set it afterwards (see [`Program::set_entry`]) and
/// re-validate. Structural validity (arities, bindings, definite assignment)
/// is always checked here.
pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let tokens = lex(src)?;
    let mut p = Parser { tokens, pos: 0, temp_next: 0 };
    let program = p.program()?;
    if let Err(mut errs) = program.validate_structure() {
        return Err(ParseError::Invalid(errs.remove(0)));
    }
    Ok(program)
}
