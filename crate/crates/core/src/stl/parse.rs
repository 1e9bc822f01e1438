//! Text grammar for STL formulas.
//!
//! ```text
//! formula := or
//! or      := and ('|' and)*
//! and     := until ('&' until)*
//! until   := unary ('U' '[' int ',' int ']' unary)*      (left-associative)
//! unary   := '!' unary
//!          | 'F' '[' int ',' int ']' unary
//!          | 'G' '[' int ',' int ']' unary
//!          | '(' formula ')'
//!          | '~'? ident                                  ('~' = outside polarity)
//! ```
//!
//! Precedence is `!` > `&` > `|`, left-associative; temporal operators bind to
//! their immediately following operand. `F`, `G`, `U` are reserved words.

use thiserror::Error;

use crate::env::Polarity;
use crate::stl::{Formula, Interval, Predicate};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl ParseError {
    fn new(offset: usize, message: impl Into<String>) -> Self {
        ParseError { offset, message: message.into() }
    }
}

/// Parses a formula from text.
pub fn parse(text: &str) -> Result<Formula, ParseError> {
    let mut p = Parser { text, pos: 0 };
    let f = p.or_expr()?;
    p.skip_ws();
    if p.pos < p.text.len() {
        return Err(ParseError::new(p.pos, format!("unexpected trailing input `{}`", p.rest())));
    }
    Ok(f)
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.rest().chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    fn eat(&mut self, expected: char) -> Result<(), ParseError> {
        match self.peek() {
            Some(c) if c == expected => {
                self.pos += c.len_utf8();
                Ok(())
            }
            Some(c) => Err(ParseError::new(self.pos, format!("expected `{expected}`, found `{c}`"))),
            None => Err(ParseError::new(self.pos, format!("expected `{expected}`, found end of input"))),
        }
    }

    fn or_expr(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.peek() == Some('|') {
            self.pos += 1;
            let rhs = self.and_expr()?;
            lhs = Formula::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.until_expr()?;
        while self.peek() == Some('&') {
            self.pos += 1;
            let rhs = self.until_expr()?;
            lhs = Formula::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn until_expr(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.unary_expr()?;
        loop {
            self.skip_ws();
            // `U` is only the until operator when followed by an interval.
            if self.rest().starts_with('U') {
                let after = self.text[self.pos + 1..].trim_start();
                if after.starts_with('[') {
                    self.pos += 1;
                    let interval = self.interval()?;
                    let rhs = self.unary_expr()?;
                    lhs = Formula::Until(interval, Box::new(lhs), Box::new(rhs));
                    continue;
                }
            }
            return Ok(lhs);
        }
    }

    fn unary_expr(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Some('!') => {
                self.pos += 1;
                Ok(Formula::Not(Box::new(self.unary_expr()?)))
            }
            Some('~') => {
                self.pos += 1;
                let (name, at) = self.ident()?;
                if is_reserved(&name) {
                    return Err(ParseError::new(at, format!("`{name}` is a reserved operator")));
                }
                Ok(Formula::Atom(Predicate::Region { name, polarity: Polarity::Outside }))
            }
            Some('(') => {
                self.pos += 1;
                let inner = self.or_expr()?;
                self.eat(')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let (name, at) = self.ident()?;
                match name.as_str() {
                    "F" => {
                        let interval = self.interval()?;
                        Ok(Formula::Finally(interval, Box::new(self.unary_expr()?)))
                    }
                    "G" => {
                        let interval = self.interval()?;
                        Ok(Formula::Globally(interval, Box::new(self.unary_expr()?)))
                    }
                    "U" => Err(ParseError::new(at, "`U` is infix; expected an operand before it")),
                    _ => Ok(Formula::Atom(Predicate::Region { name, polarity: Polarity::Inside })),
                }
            }
            Some(c) => Err(ParseError::new(self.pos, format!("unexpected character `{c}`"))),
            None => Err(ParseError::new(self.pos, "expected a formula, found end of input")),
        }
    }

    fn ident(&mut self) -> Result<(String, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let mut end = start;
        for c in self.rest().chars() {
            if c.is_ascii_alphanumeric() || c == '_' {
                end += c.len_utf8();
            } else {
                break;
            }
        }
        if end == start {
            return Err(ParseError::new(start, "expected an identifier"));
        }
        self.pos = end;
        Ok((self.text[start..end].to_string(), start))
    }

    fn interval(&mut self) -> Result<Interval, ParseError> {
        self.eat('[')?;
        let (lo, lo_at) = self.integer()?;
        self.eat(',')?;
        let (hi, _) = self.integer()?;
        self.eat(']')?;
        if hi < lo {
            return Err(ParseError::new(lo_at, format!("malformed interval [{lo},{hi}]: hi < lo")));
        }
        Ok(Interval::new(lo, hi))
    }

    fn integer(&mut self) -> Result<(usize, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.rest().starts_with('-') {
            return Err(ParseError::new(start, "malformed interval: negative bound"));
        }
        let digits: String = self.rest().chars().take_while(|c| c.is_ascii_digit()).collect();
        if digits.is_empty() {
            let found = self.rest().chars().next().map_or("end of input".to_string(), |c| {
                if c == '.' {
                    "non-integer bound".to_string()
                } else {
                    format!("`{c}`")
                }
            });
            return Err(ParseError::new(start, format!("malformed interval: expected integer, found {found}")));
        }
        self.pos += digits.len();
        if self.rest().starts_with('.') {
            return Err(ParseError::new(start, "malformed interval: non-integer bound"));
        }
        let value: usize = digits
            .parse()
            .map_err(|_| ParseError::new(start, format!("malformed interval: bound `{digits}` out of range")))?;
        Ok((value, start))
    }
}

fn is_reserved(name: &str) -> bool {
    matches!(name, "F" | "G" | "U")
}

/// Canonical text rendering: the in-order symbol token stream, compactly
/// joined. `parse(render_canonical(f)) == f` for region-atom formulas.
pub fn render_canonical(f: &Formula) -> String {
    let stream = crate::stl::linearize(f, crate::stl::TraversalStyle::InOrder, crate::stl::WordForm::Symbol)
        .expect("canonical rendering requires region atoms");
    join_tokens(&stream.tokens)
}

pub(crate) fn join_tokens(tokens: &[String]) -> String {
    let mut out = String::new();
    let mut prev: Option<&str> = None;
    for tok in tokens {
        let no_space = match prev {
            None => true,
            Some(p) => {
                matches!(p, "[" | "(" | "!" | "~" | ",")
                    || matches!(tok.as_str(), "[" | "]" | ")" | ",")
                    || (p == "]" && tok == "(")
            }
        };
        if !no_space {
            out.push(' ');
        }
        out.push_str(tok);
        prev = Some(tok.as_str());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(name: &str) -> Formula {
        Formula::atom_region(name, Polarity::Inside)
    }

    #[test]
    fn parses_single_finally() {
        let f = parse("F[0,10](R1)").unwrap();
        assert_eq!(f, Formula::Finally(Interval::new(0, 10), Box::new(atom("R1"))));
    }

    #[test]
    fn parses_nested_sequenced_visit() {
        // F[0,15](R1 & F[0,15](R2))
        let f = parse("F[0,15](R1 & F[0,15](R2))").unwrap();
        let expected = Formula::Finally(
            Interval::new(0, 15),
            Box::new(Formula::And(
                Box::new(atom("R1")),
                Box::new(Formula::Finally(Interval::new(0, 15), Box::new(atom("R2")))),
            )),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn unbalanced_paren_reports_offset() {
        let err = parse("F[0,10](R1").unwrap_err();
        assert_eq!(err.offset, 10);
    }

    #[test]
    fn precedence_is_not_over_and_over_or() {
        // a | b & !c  ==  a | (b & (!c))
        let f = parse("R1 | R2 & !O1").unwrap();
        let expected = Formula::Or(
            Box::new(atom("R1")),
            Box::new(Formula::And(
                Box::new(atom("R2")),
                Box::new(Formula::Not(Box::new(atom("O1")))),
            )),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn and_or_are_left_associative() {
        let f = parse("R1 & R2 & R3").unwrap();
        let expected = Formula::And(
            Box::new(Formula::And(Box::new(atom("R1")), Box::new(atom("R2")))),
            Box::new(atom("R3")),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn until_is_infix_with_interval() {
        let f = parse("R1 U[0,5] R2").unwrap();
        assert_eq!(
            f,
            Formula::Until(Interval::new(0, 5), Box::new(atom("R1")), Box::new(atom("R2")))
        );
    }

    #[test]
    fn tilde_marks_outside_polarity() {
        let f = parse("~O1").unwrap();
        assert_eq!(f, Formula::atom_region("O1", Polarity::Outside));
    }

    #[test]
    fn temporal_binds_to_immediate_operand() {
        // F[0,2] R1 & R2  ==  (F[0,2] R1) & R2
        let f = parse("F[0,2] R1 & R2").unwrap();
        let expected = Formula::And(
            Box::new(Formula::Finally(Interval::new(0, 2), Box::new(atom("R1")))),
            Box::new(atom("R2")),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn malformed_intervals_are_rejected() {
        assert!(parse("F[5,2](R1)").unwrap_err().message.contains("hi < lo"));
        assert!(parse("F[-1,2](R1)").unwrap_err().message.contains("negative"));
        assert!(parse("F[0.5,2](R1)").unwrap_err().message.contains("non-integer"));
        assert!(parse("F[0 2](R1)").is_err());
    }

    #[test]
    fn reserved_words_are_not_regions() {
        assert!(parse("U").is_err());
        assert!(parse("~F R1").is_err());
    }

    #[test]
    fn canonical_rendering_round_trips() {
        let texts = [
            "F[0,10](R1)",
            "F[0,15](R1 & F[0,15](R2))",
            "(F[0,10](R1) | F[10,20](R2)) & F[20,30](R3) & G[0,30](!O1)",
            "R1 U[2,7] ~O1",
            "!!R1 | R2 & R3",
        ];
        for text in texts {
            let f = parse(text).unwrap();
            let rendered = render_canonical(&f);
            let again = parse(&rendered).unwrap();
            assert_eq!(f, again, "canonical round-trip failed for `{text}` -> `{rendered}`");
        }
    }
}
