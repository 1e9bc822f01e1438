//! Deterministic linearization of formulas to token streams, and the fixed
//! vocabulary that the specification embedder indexes into.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Polarity;
use crate::stl::{Formula, Interval, Predicate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraversalStyle {
    InOrder,
    PreOrder,
    PostOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordForm {
    Symbol,
    Word,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TokenError {
    #[error("affine atoms have no token rendering; only region atoms linearize")]
    AffineAtom,
    #[error("token `{token}` is not in the vocabulary")]
    OutOfVocabulary { token: String },
    #[error("interval bound {bound} exceeds the vocabulary limit H_max={h_max}")]
    BoundExceedsHorizon { bound: usize, h_max: usize },
}

/// A linearized formula: every token is a string drawn from a fixed
/// vocabulary (operators, brackets, integers, region names).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<String>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Compact text form; for the canonical in-order symbol style this is the
    /// canonical rendering and re-parses to the original formula.
    pub fn text(&self) -> String {
        super::parse::join_tokens(&self.tokens)
    }
}

impl std::fmt::Display for TokenStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.text())
    }
}

struct OpNames {
    finally_: &'static str,
    globally: &'static str,
    until: &'static str,
    not: &'static str,
    and: &'static str,
    or: &'static str,
    outside: &'static str,
}

const SYMBOLS: OpNames =
    OpNames { finally_: "F", globally: "G", until: "U", not: "!", and: "&", or: "|", outside: "~" };
const WORDS: OpNames = OpNames {
    finally_: "finally",
    globally: "globally",
    until: "until",
    not: "not",
    and: "and",
    or: "or",
    outside: "outside",
};

fn names(form: WordForm) -> &'static OpNames {
    match form {
        WordForm::Symbol => &SYMBOLS,
        WordForm::Word => &WORDS,
    }
}

/// Renders a formula as a deterministic token stream.
///
/// The in-order style is fully bracketed and re-parses to the same tree; the
/// pre/post-order styles drop brackets (tree structure makes them redundant)
/// and emit interval bounds as bare integer tokens.
pub fn linearize(f: &Formula, style: TraversalStyle, form: WordForm) -> Result<TokenStream, TokenError> {
    let mut tokens = Vec::new();
    let ops = names(form);
    match style {
        TraversalStyle::InOrder => in_order(f, ops, 0, &mut tokens)?,
        TraversalStyle::PreOrder => pre_order(f, ops, &mut tokens)?,
        TraversalStyle::PostOrder => post_order(f, ops, &mut tokens)?,
    }
    Ok(TokenStream { tokens })
}

fn atom_tokens(p: &Predicate, ops: &OpNames, tokens: &mut Vec<String>) -> Result<(), TokenError> {
    match p {
        Predicate::Region { name, polarity } => {
            if *polarity == Polarity::Outside {
                tokens.push(ops.outside.to_string());
            }
            tokens.push(name.clone());
            Ok(())
        }
        Predicate::Affine { .. } => Err(TokenError::AffineAtom),
    }
}

fn interval_bracketed(i: &Interval, tokens: &mut Vec<String>) {
    tokens.push("[".into());
    tokens.push(i.lo.to_string());
    tokens.push(",".into());
    tokens.push(i.hi.to_string());
    tokens.push("]".into());
}

// Precedence levels for minimal-parenthesis in-order rendering; unary
// operands are always parenthesized for temporal operators (their canonical
// written form) and kept tight for `!`/`~`.
fn prec(f: &Formula) -> u8 {
    match f {
        Formula::Or(..) => 1,
        Formula::And(..) => 2,
        Formula::Until(..) => 3,
        Formula::Not(..) | Formula::Finally(..) | Formula::Globally(..) => 4,
        Formula::Atom(_) => 5,
    }
}

fn in_order(f: &Formula, ops: &OpNames, min_prec: u8, tokens: &mut Vec<String>) -> Result<(), TokenError> {
    let own = prec(f);
    let parens = own < min_prec;
    if parens {
        tokens.push("(".into());
    }
    match f {
        Formula::Atom(p) => atom_tokens(p, ops, tokens)?,
        Formula::Not(g) => {
            tokens.push(ops.not.to_string());
            in_order(g, ops, 4, tokens)?;
        }
        Formula::And(a, b) => {
            in_order(a, ops, own, tokens)?;
            tokens.push(ops.and.to_string());
            in_order(b, ops, own + 1, tokens)?;
        }
        Formula::Or(a, b) => {
            in_order(a, ops, own, tokens)?;
            tokens.push(ops.or.to_string());
            in_order(b, ops, own + 1, tokens)?;
        }
        Formula::Finally(i, g) | Formula::Globally(i, g) => {
            tokens.push(
                match f {
                    Formula::Finally(..) => ops.finally_,
                    _ => ops.globally,
                }
                .to_string(),
            );
            interval_bracketed(i, tokens);
            tokens.push("(".into());
            in_order(g, ops, 0, tokens)?;
            tokens.push(")".into());
        }
        Formula::Until(i, a, b) => {
            in_order(a, ops, own, tokens)?;
            tokens.push(ops.until.to_string());
            interval_bracketed(i, tokens);
            in_order(b, ops, own + 1, tokens)?;
        }
    }
    if parens {
        tokens.push(")".into());
    }
    Ok(())
}

fn pre_order(f: &Formula, ops: &OpNames, tokens: &mut Vec<String>) -> Result<(), TokenError> {
    match f {
        Formula::Atom(p) => atom_tokens(p, ops, tokens)?,
        Formula::Not(g) => {
            tokens.push(ops.not.to_string());
            pre_order(g, ops, tokens)?;
        }
        Formula::And(a, b) => {
            tokens.push(ops.and.to_string());
            pre_order(a, ops, tokens)?;
            pre_order(b, ops, tokens)?;
        }
        Formula::Or(a, b) => {
            tokens.push(ops.or.to_string());
            pre_order(a, ops, tokens)?;
            pre_order(b, ops, tokens)?;
        }
        Formula::Finally(i, g) | Formula::Globally(i, g) => {
            tokens.push(
                match f {
                    Formula::Finally(..) => ops.finally_,
                    _ => ops.globally,
                }
                .to_string(),
            );
            tokens.push(i.lo.to_string());
            tokens.push(i.hi.to_string());
            pre_order(g, ops, tokens)?;
        }
        Formula::Until(i, a, b) => {
            tokens.push(ops.until.to_string());
            tokens.push(i.lo.to_string());
            tokens.push(i.hi.to_string());
            pre_order(a, ops, tokens)?;
            pre_order(b, ops, tokens)?;
        }
    }
    Ok(())
}

fn post_order(f: &Formula, ops: &OpNames, tokens: &mut Vec<String>) -> Result<(), TokenError> {
    match f {
        Formula::Atom(p) => atom_tokens(p, ops, tokens)?,
        Formula::Not(g) => {
            post_order(g, ops, tokens)?;
            tokens.push(ops.not.to_string());
        }
        Formula::And(a, b) => {
            post_order(a, ops, tokens)?;
            post_order(b, ops, tokens)?;
            tokens.push(ops.and.to_string());
        }
        Formula::Or(a, b) => {
            post_order(a, ops, tokens)?;
            post_order(b, ops, tokens)?;
            tokens.push(ops.or.to_string());
        }
        Formula::Finally(i, g) | Formula::Globally(i, g) => {
            post_order(g, ops, tokens)?;
            tokens.push(i.lo.to_string());
            tokens.push(i.hi.to_string());
            tokens.push(
                match f {
                    Formula::Finally(..) => ops.finally_,
                    _ => ops.globally,
                }
                .to_string(),
            );
        }
        Formula::Until(i, a, b) => {
            post_order(a, ops, tokens)?;
            post_order(b, ops, tokens)?;
            tokens.push(i.lo.to_string());
            tokens.push(i.hi.to_string());
            tokens.push(ops.until.to_string());
        }
    }
    Ok(())
}

/// Fixed token vocabulary: symbol operators, brackets, integers `0..=h_max`,
/// and region identifiers, in a stable order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    h_max: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn build(h_max: usize, region_names: &[String]) -> Self {
        let mut tokens: Vec<String> = ["F", "G", "U", "!", "&", "|", "~", "[", "]", "(", ")", ","]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for i in 0..=h_max {
            tokens.push(i.to_string());
        }
        let mut regions: Vec<String> = region_names.to_vec();
        regions.sort();
        regions.dedup();
        tokens.extend(regions);
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, h_max, index }
    }

    /// Restores the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn h_max(&self) -> usize {
        self.h_max
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn encode(&self, stream: &TokenStream) -> Result<Vec<usize>, TokenError> {
        stream
            .tokens
            .iter()
            .map(|t| {
                self.lookup(t).ok_or_else(|| match t.parse::<usize>() {
                    Ok(bound) if bound > self.h_max => {
                        TokenError::BoundExceedsHorizon { bound, h_max: self.h_max }
                    }
                    _ => TokenError::OutOfVocabulary { token: t.clone() },
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::parse;

    fn phi(text: &str) -> Formula {
        parse(text).unwrap()
    }

    #[test]
    fn in_order_symbol_rendering_matches_written_form() {
        let stream = linearize(&phi("F[0,10](R1)"), TraversalStyle::InOrder, WordForm::Symbol).unwrap();
        assert_eq!(stream.tokens, vec!["F", "[", "0", ",", "10", "]", "(", "R1", ")"]);
    }

    #[test]
    fn pre_order_word_rendering_drops_brackets() {
        let stream = linearize(&phi("F[0,10](R1)"), TraversalStyle::PreOrder, WordForm::Word).unwrap();
        assert_eq!(stream.tokens, vec!["finally", "0", "10", "R1"]);
    }

    #[test]
    fn post_order_puts_operator_last() {
        let stream = linearize(&phi("F[0,10](R1)"), TraversalStyle::PostOrder, WordForm::Symbol).unwrap();
        assert_eq!(stream.tokens, vec!["R1", "0", "10", "F"]);
    }

    #[test]
    fn in_order_round_trips_through_parse() {
        let f = phi("F[0,15](R1 & F[0,15](R2))");
        let stream = linearize(&f, TraversalStyle::InOrder, WordForm::Symbol).unwrap();
        assert_eq!(parse(&stream.text()).unwrap(), f);
    }

    #[test]
    fn affine_atoms_do_not_linearize() {
        let f = Formula::atom_affine(vec![1.0, 0.0], -3.0);
        assert!(matches!(
            linearize(&f, TraversalStyle::InOrder, WordForm::Symbol),
            Err(TokenError::AffineAtom)
        ));
    }

    #[test]
    fn vocabulary_encodes_and_flags_oversized_bounds() {
        let vocab = Vocab::build(32, &["R1".into(), "O1".into()]);
        let f = phi("F[0,10](R1)");
        let stream = linearize(&f, TraversalStyle::InOrder, WordForm::Symbol).unwrap();
        let ids = vocab.encode(&stream).unwrap();
        assert_eq!(ids.len(), stream.len());
        assert_eq!(vocab.token(ids[7]), "R1");

        let too_far = phi("F[0,99](R1)");
        let stream = linearize(&too_far, TraversalStyle::InOrder, WordForm::Symbol).unwrap();
        assert!(matches!(
            vocab.encode(&stream),
            Err(TokenError::BoundExceedsHorizon { bound: 99, h_max: 32 })
        ));

        let unknown = phi("F[0,2](R7)");
        let stream = linearize(&unknown, TraversalStyle::InOrder, WordForm::Symbol).unwrap();
        assert!(matches!(vocab.encode(&stream), Err(TokenError::OutOfVocabulary { .. })));
    }

    #[test]
    fn outside_polarity_has_a_marker_token() {
        let f = phi("~O1");
        let stream = linearize(&f, TraversalStyle::InOrder, WordForm::Symbol).unwrap();
        assert_eq!(stream.tokens, vec!["~", "O1"]);
        assert_eq!(parse(&stream.text()).unwrap(), f);
    }
}
