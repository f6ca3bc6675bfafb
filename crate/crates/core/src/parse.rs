//! Polynomial syntax: `p/q` coefficients, optional `*`, `^` powers, parentheses.

use num_bigint::BigInt;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::gca::{Algebra, Element, Q};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(BigInt),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut k = 0;
    while k < chars.len() {
        let c = chars[k];
        let col = k + 1;
        if c.is_whitespace() {
            k += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let start = k;
            while k < chars.len() && chars[k].is_ascii_digit() {
                k += 1;
            }
            let s: String = chars[start..k].iter().collect();
            out.push((col, Tok::Num(s.parse().expect("digits"))));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = k;
            while k < chars.len() && (chars[k].is_ascii_alphanumeric() || chars[k] == '_') {
                k += 1;
            }
            out.push((col, Tok::Ident(chars[start..k].iter().collect())));
            continue;
        }
        let t = match c {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            _ => return Err(Error::Syntax { col, msg: format!("unexpected character `{c}`") }),
        };
        out.push((col, t));
        k += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end_col: usize,
    alg: &'a Algebra,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |(c, _)| *c)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Syntax { col: self.col(), msg: msg.into() })
    }

    fn expr(&mut self) -> Result<Element> {
        let mut acc = match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                -&self.product()?
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.product()?
            }
            _ => self.product()?,
        };
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    acc += &self.product()?;
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    acc -= &self.product()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn product(&mut self) -> Result<Element> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    acc = self.alg.mul_unchecked(&acc, &rhs);
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    let col = self.col();
                    let rhs = self.factor()?;
                    let c = constant_of(&rhs).ok_or(Error::Syntax {
                        col,
                        msg: "division by a non-constant".into(),
                    })?;
                    if c.is_zero() {
                        return Err(Error::Syntax { col, msg: "division by zero".into() });
                    }
                    acc = acc.scale(&(Q::from_integer(1.into()) / c));
                }
                Some(Tok::Num(_)) | Some(Tok::Ident(_)) | Some(Tok::LParen) => {
                    let rhs = self.factor()?;
                    acc = self.alg.mul_unchecked(&acc, &rhs);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Element> {
        if let Some(Tok::Minus) = self.peek() {
            self.pos += 1;
            return Ok(-&self.factor()?);
        }
        let base = self.atom()?;
        if let Some(Tok::Caret) = self.peek() {
            self.pos += 1;
            match self.peek().cloned() {
                Some(Tok::Num(n)) => {
                    let e: u32 = match n.try_into() {
                        Ok(e) => e,
                        Err(_) => return self.err("exponent too large"),
                    };
                    self.pos += 1;
                    return self.alg.pow(&base, e);
                }
                _ => return self.err("expected an unsigned integer exponent after `^`"),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Element> {
        let col = self.col();
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(Element::constant(Q::from_integer(n)))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match self.alg.index_of(&name) {
                    Some(i) => Ok(Element::gen(i)),
                    None => Err(Error::Syntax { col, msg: format!("unknown generator `{name}`") }),
                }
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(e)
                    }
                    _ => self.err("expected `)`"),
                }
            }
            Some(_) => self.err("expected a number, generator or `(`"),
            None => self.err("unexpected end of input"),
        }
    }
}

fn constant_of(e: &Element) -> Option<Q> {
    match e.len() {
        0 => Some(Q::zero()),
        1 => {
            let (m, c) = e.terms().next()?;
            m.is_one().then(|| c.clone())
        }
        _ => None,
    }
}

impl Algebra {
    /// Parses a polynomial in this algebra's generators.
    pub fn parse(&self, src: &str) -> Result<Element> {
        let toks = lex(src)?;
        let end_col = src.chars().count() + 1;
        let mut p = Parser { toks, pos: 0, end_col, alg: self };
        if p.peek().is_none() {
            return p.err("empty expression");
        }
        let e = p.expr()?;
        if p.peek().is_some() {
            return p.err("unexpected token");
        }
        Ok(e)
    }
}

/// Every identifier appearing in `src`, in order of first appearance.
pub fn identifiers(src: &str) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    for (_, t) in lex(src)? {
        if let Tok::Ident(s) = t {
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    Ok(out)
}
