//! Text form: sums of products of numbers, variables, powers, parentheses
//! and single-argument function calls such as `0.5*exp(x1)`.
//!
//! Function calls are kept symbolic: the result is a list of
//! `coefficient · call(argument)` terms where the coefficient and the
//! argument are polynomials. A product of two calls is rejected.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{PolyError, Polynomial};

/// A function application `name(arg)` found while parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct Call {
    pub name: String,
    pub arg: Polynomial,
    /// Byte offset of the function name in the source text.
    pub pos: usize,
}

/// One `coeff · call` term; `call == None` means a pure polynomial term.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTerm {
    pub coeff: Polynomial,
    pub call: Option<Call>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn err(pos: usize, msg: impl Into<String>) -> PolyError {
    PolyError::Parse { pos, msg: msg.into() }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, PolyError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'+' => {
                out.push((i, Tok::Plus));
                i += 1;
            }
            b'-' => {
                out.push((i, Tok::Minus));
                i += 1;
            }
            b'*' => {
                out.push((i, Tok::Star));
                i += 1;
            }
            b'^' => {
                out.push((i, Tok::Caret));
                i += 1;
            }
            b'(' => {
                out.push((i, Tok::LParen));
                i += 1;
            }
            b')' => {
                out.push((i, Tok::RParen));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let s = &text[start..i];
                let v: f64 = s.parse().map_err(|_| err(start, format!("bad number `{}`", s)))?;
                out.push((start, Tok::Num(v)));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(text[start..i].to_string())));
            }
            _ => return Err(err(i, format!("unexpected character `{}`", c as char))),
        }
    }
    Ok(out)
}

/// Sum of `coeff · call` terms during evaluation.
type Sum = Vec<ParsedTerm>;

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    names: &'a [&'a str],
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.end)
    }

    fn nvars(&self) -> usize {
        self.names.len()
    }

    fn expr(&mut self) -> Result<Sum, PolyError> {
        let mut acc: Sum = Vec::new();
        let mut sign = 1.0;
        match self.peek() {
            Some(Tok::Plus) => self.pos += 1,
            Some(Tok::Minus) => {
                self.pos += 1;
                sign = -1.0;
            }
            _ => {}
        }
        loop {
            let t = self.term()?;
            acc.extend(scale(t, sign));
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    sign = 1.0;
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    sign = -1.0;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Sum, PolyError> {
        let mut acc = self.factor()?;
        while let Some(Tok::Star) = self.peek() {
            self.pos += 1;
            let at = self.offset();
            let rhs = self.factor()?;
            acc = multiply(&acc, &rhs, at)?;
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Sum, PolyError> {
        // unary minus inside products, e.g. `2*-x1`
        if let Some(Tok::Minus) = self.peek() {
            self.pos += 1;
            let inner = self.factor()?;
            return Ok(scale(inner, -1.0));
        }
        let at = self.offset();
        let base = self.atom()?;
        if let Some(Tok::Caret) = self.peek() {
            self.pos += 1;
            let eat = self.offset();
            let k = match self.peek() {
                Some(Tok::Num(v)) if *v >= 0.0 && *v == libm::floor(*v) && *v <= 64.0 => *v as u32,
                _ => return Err(err(eat, "exponent must be a non-negative integer")),
            };
            self.pos += 1;
            let mut acc = vec_const(self.nvars(), 1.0);
            for _ in 0..k {
                acc = multiply(&acc, &base, at)?;
            }
            return Ok(acc);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Sum, PolyError> {
        let at = self.offset();
        let tok = self.toks.get(self.pos).cloned();
        match tok {
            Some((_, Tok::Num(v))) => {
                self.pos += 1;
                Ok(vec_const(self.nvars(), v))
            }
            Some((_, Tok::LParen)) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some((_, Tok::Ident(name))) => {
                self.pos += 1;
                if let Some(Tok::LParen) = self.peek() {
                    self.pos += 1;
                    let arg_at = self.offset();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    let mut poly = Polynomial::zero(self.nvars());
                    for t in arg {
                        if t.call.is_some() {
                            return Err(err(arg_at, "nested function calls are not supported"));
                        }
                        poly = &poly + &t.coeff;
                    }
                    return Ok(alloc::vec![ParsedTerm {
                        coeff: Polynomial::constant(self.nvars(), 1.0),
                        call: Some(Call {
                            name,
                            arg: poly,
                            pos: at
                        }),
                    }]);
                }
                match self.names.iter().position(|n| *n == name) {
                    Some(i) => Ok(alloc::vec![ParsedTerm {
                        coeff: Polynomial::var(self.nvars(), i),
                        call: None,
                    }]),
                    None => Err(err(at, format!("unknown variable `{}`", name))),
                }
            }
            Some((o, t)) => Err(err(o, format!("unexpected token {:?}", t))),
            None => Err(err(at, "unexpected end of input")),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), PolyError> {
        match self.peek() {
            Some(Tok::RParen) => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(err(self.offset(), "expected `)`")),
        }
    }
}

fn vec_const(nvars: usize, c: f64) -> Sum {
    alloc::vec![ParsedTerm {
        coeff: Polynomial::constant(nvars, c),
        call: None,
    }]
}

fn scale(s: Sum, c: f64) -> Sum {
    s.into_iter()
        .map(|t| ParsedTerm {
            coeff: t.coeff.scale(c),
            call: t.call,
        })
        .collect()
}

fn multiply(a: &Sum, b: &Sum, at: usize) -> Result<Sum, PolyError> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for ta in a {
        for tb in b {
            let call = match (&ta.call, &tb.call) {
                (Some(_), Some(_)) => {
                    return Err(err(at, "product of two function calls; rewrite it as a single call"))
                }
                (Some(c), None) | (None, Some(c)) => Some(c.clone()),
                (None, None) => None,
            };
            out.push(ParsedTerm {
                coeff: &ta.coeff * &tb.coeff,
                call,
            });
        }
    }
    Ok(out)
}

/// Parses `text` into `coeff · call` terms. Terms with the same call (same
/// name and argument) are merged, as are all pure polynomial terms, which
/// come first.
pub fn parse_terms(text: &str, names: &[&str]) -> Result<Vec<ParsedTerm>, PolyError> {
    let toks = tokenize(text)?;
    if toks.is_empty() {
        return Err(err(0, "empty expression"));
    }
    let mut p = Parser {
        toks,
        pos: 0,
        names,
        end: text.len(),
    };
    let sum = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(err(p.offset(), "trailing input"));
    }
    let mut merged: Vec<ParsedTerm> = alloc::vec![ParsedTerm {
        coeff: Polynomial::zero(names.len()),
        call: None,
    }];
    for t in sum {
        match &t.call {
            None => merged[0].coeff = &merged[0].coeff + &t.coeff,
            Some(c) => {
                let existing = merged[1..]
                    .iter_mut()
                    .find(|m| m.call.as_ref().is_some_and(|mc| mc.name == c.name && mc.arg == c.arg));
                match existing {
                    Some(m) => m.coeff = &m.coeff + &t.coeff,
                    None => merged.push(t),
                }
            }
        }
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calls_are_collected() {
        let terms = parse_terms("-x1 + x2 + 0.5*(exp(x1) - 1)", &["x1", "x2"]).unwrap();
        assert_eq!(terms.len(), 2);
        assert_eq!(terms[0].coeff, Polynomial::parse("-x1 + x2 - 0.5", 2).unwrap());
        let call = terms[1].call.as_ref().unwrap();
        assert_eq!(call.name, "exp");
        assert_eq!(terms[1].coeff, Polynomial::constant(2, 0.5));
    }

    #[test]
    fn merges_repeated_calls() {
        let terms = parse_terms("x1*cos(x1) + 2*cos(x1)", &["x1"]).unwrap();
        assert_eq!(terms.len(), 2);
        assert_eq!(terms[1].coeff, Polynomial::parse("x1 + 2", 1).unwrap());
    }

    #[test]
    fn rejects_products_of_calls() {
        let e = parse_terms("sin(x1)*cos(x1)", &["x1"]).unwrap_err();
        assert!(matches!(e, PolyError::Parse { .. }));
    }

    #[test]
    fn reports_unknown_variables() {
        match parse_terms("x1 + y", &["x1"]) {
            Err(PolyError::Parse { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn scientific_notation_and_powers() {
        let p = Polynomial::parse("1e-7*x1^3 - 2.5E+2*(x1 + 1)^2", 1).unwrap();
        let q = Polynomial::univariate(1, 0, &[-250.0, -500.0, -250.0, 1e-7]);
        assert_eq!(p, q);
    }
}
