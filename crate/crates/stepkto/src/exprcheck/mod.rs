//! Final-answer parsing and mathematical equivalence.
//!
//! Answers live in a small expression language: exact rationals (integers,
//! decimals, `a/b`, `\frac{a}{b}`), pi, square roots, the four binary
//! operators, integer powers, parentheses and unary minus. Equivalence is
//! decided on canonical forms: expressions reducible to `q * pi^k * sqrt(m)`
//! by rational arithmetic compare exactly; everything else is evaluated at
//! [`fixed::WORK_SCALE`] decimal digits and compared with a relative
//! tolerance of 1e-9.
//!
//! Grammar sketch (whitespace ignored, juxtaposition multiplies):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/')? unary)*
//! unary  := '-' unary | power
//! power  := primary ('^' int | '^' '{' int '}')?
//! primary:= NUMBER | 'pi' | '\pi' | '\sqrt' '{' expr '}'
//!         | '\frac' '{' expr '}' '{' expr '}' | '(' expr ')' | '{' expr '}'
//! ```

mod canonical;
pub mod fixed;

pub use canonical::{canonical, equivalent, CanonicalForm};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// AST of the supported answer language. Rationals are normalized on
/// construction, so denominators are always positive and nonzero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Rational(BigRational),
    Pi,
    Neg(Box<Expr>),
    Sqrt(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
}

impl Expr {
    pub fn integer(n: i64) -> Expr {
        Expr::Rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn ratio(num: i64, den: i64) -> Expr {
        Expr::Rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExprError {
    /// Token or construct outside the supported grammar; carries the
    /// offending span of the input.
    #[error("unsupported grammar at {span:?}: {found}")]
    UnsupportedGrammar { span: (usize, usize), found: String },
    /// Unbalanced braces inside a `\boxed{...}` region.
    #[error("malformed answer: {0}")]
    MalformedAnswer(String),
    /// Division by zero or a square root of a negative value during reduction.
    #[error("undefined value: {0}")]
    UndefinedValue(String),
}

impl ExprError {
    fn unsupported(span: (usize, usize), found: impl Into<String>) -> Self {
        ExprError::UnsupportedGrammar { span, found: found.into() }
    }

    pub(crate) fn undefined(msg: impl Into<String>) -> Self {
        ExprError::UndefinedValue(msg.into())
    }
}

/// Returns the brace-balanced contents of the last `\boxed{...}` in
/// `solution_text`, or `None` when no marker exists. Unbalanced braces inside
/// the boxed region are a malformed-answer error.
pub fn extract_boxed(solution_text: &str) -> Result<Option<String>, ExprError> {
    const MARKER: &str = "\\boxed{";
    let Some(start) = solution_text.rfind(MARKER) else {
        return Ok(None);
    };
    let body = &solution_text[start + MARKER.len()..];
    let mut depth = 1usize;
    for (i, ch) in body.char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Ok(Some(body[..i].to_string()));
                }
            }
            _ => {}
        }
    }
    Err(ExprError::MalformedAnswer(
        "unbalanced braces inside \\boxed{...}".to_string(),
    ))
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    /// Integer or decimal literal, already converted to an exact rational.
    Number(BigRational),
    Pi,
    Sqrt,
    Frac,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBrace,
    RBrace,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    span: (usize, usize),
}

fn lex(input: &str) -> Result<Vec<Spanned>, ExprError> {
    let bytes = input.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0usize;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '+' => { i += 1; Tok::Plus }
            '-' | '\u{2212}' => { i += c.len_utf8(); Tok::Minus }
            '*' => { i += 1; Tok::Star }
            '/' => { i += 1; Tok::Slash }
            '^' => { i += 1; Tok::Caret }
            '(' => { i += 1; Tok::LParen }
            ')' => { i += 1; Tok::RParen }
            '{' => { i += 1; Tok::LBrace }
            '}' => { i += 1; Tok::RBrace }
            '0'..='9' => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                let mut frac_digits = 0usize;
                if j < bytes.len() && bytes[j] == b'.' && j + 1 < bytes.len() && bytes[j + 1].is_ascii_digit() {
                    j += 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                        frac_digits += 1;
                    }
                }
                let text: String = input[i..j].chars().filter(|&ch| ch != '.').collect();
                let num: BigInt = text.parse().expect("digit run parses");
                let den = BigInt::from(10u32).pow(frac_digits as u32);
                i = j;
                Tok::Number(BigRational::new(num, den))
            }
            '\\' => {
                let rest = &input[i..];
                if rest.starts_with("\\pi") {
                    i += 3;
                    Tok::Pi
                } else if rest.starts_with("\\sqrt") {
                    i += 5;
                    Tok::Sqrt
                } else if rest.starts_with("\\frac") {
                    i += 5;
                    Tok::Frac
                } else if rest.starts_with("\\cdot") {
                    i += 5;
                    Tok::Star
                } else if rest.starts_with("\\times") {
                    i += 6;
                    Tok::Star
                } else {
                    let end = i + rest
                        .char_indices()
                        .skip(1)
                        .find(|(_, ch)| !ch.is_ascii_alphabetic())
                        .map(|(k, _)| k)
                        .unwrap_or(rest.len());
                    return Err(ExprError::unsupported((i, end), &input[i..end]));
                }
            }
            'p' if input[i..].starts_with("pi") => {
                i += 2;
                Tok::Pi
            }
            '\u{3c0}' => {
                i += '\u{3c0}'.len_utf8();
                Tok::Pi
            }
            other => {
                let end = i + other.len_utf8();
                return Err(ExprError::unsupported((i, end), &input[i..end]));
            }
        };
        toks.push(Spanned { tok, span: (start, i) });
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    toks: &'a [Spanned],
    pos: usize,
    input_len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn span(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|s| s.span)
            .unwrap_or((self.input_len, self.input_len))
    }

    fn bump(&mut self) -> Option<&Spanned> {
        let s = self.toks.get(self.pos);
        self.pos += 1;
        s
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ExprError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ExprError::unsupported(self.span(), format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                // Juxtaposition multiplies: `288\pi`, `2\sqrt{3}`.
                Some(Tok::Number(_) | Tok::Pi | Tok::Sqrt | Tok::Frac | Tok::LParen | Tok::LBrace) => {
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let exp = self.exponent()?;
            return Ok(Expr::Pow(Box::new(base), exp));
        }
        Ok(base)
    }

    /// Integer exponent, optionally braced: `^2`, `^-2`, `^{12}`, `^{-3}`.
    fn exponent(&mut self) -> Result<i32, ExprError> {
        let braced = self.peek() == Some(&Tok::LBrace);
        if braced {
            self.pos += 1;
        }
        let mut negative = false;
        if self.peek() == Some(&Tok::Minus) {
            negative = true;
            self.pos += 1;
        }
        let span = self.span();
        let value = match self.bump().map(|s| &s.tok) {
            Some(Tok::Number(q)) if q.is_integer() => {
                let n = q.to_integer();
                i32::try_from(&n).map_err(|_| ExprError::unsupported(span, "exponent out of range"))?
            }
            _ => return Err(ExprError::unsupported(span, "expected integer exponent")),
        };
        if braced {
            self.expect(Tok::RBrace, "'}' after exponent")?;
        }
        Ok(if negative { -value } else { value })
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let span = self.span();
        match self.bump().map(|s| s.tok.clone()) {
            Some(Tok::Number(q)) => Ok(Expr::Rational(q)),
            Some(Tok::Pi) => Ok(Expr::Pi),
            Some(Tok::Sqrt) => {
                self.expect(Tok::LBrace, "'{' after \\sqrt")?;
                let inner = self.expr()?;
                self.expect(Tok::RBrace, "'}' closing \\sqrt")?;
                Ok(Expr::Sqrt(Box::new(inner)))
            }
            Some(Tok::Frac) => {
                self.expect(Tok::LBrace, "'{' after \\frac")?;
                let num = self.expr()?;
                self.expect(Tok::RBrace, "'}' after numerator")?;
                self.expect(Tok::LBrace, "'{' before denominator")?;
                let den = self.expr()?;
                self.expect(Tok::RBrace, "'}' after denominator")?;
                Ok(Expr::Div(Box::new(num), Box::new(den)))
            }
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Some(Tok::LBrace) => {
                let inner = self.expr()?;
                self.expect(Tok::RBrace, "'}'")?;
                Ok(inner)
            }
            _ => Err(ExprError::unsupported(span, "expected a value")),
        }
    }
}

/// Parses an answer string into an [`Expr`]. Decimals with `d` fractional
/// digits become exact rationals over `10^d`.
pub fn parse_answer(text: &str) -> Result<Expr, ExprError> {
    let toks = lex(text)?;
    let mut parser = Parser { toks: &toks, pos: 0, input_len: text.len() };
    let expr = parser.expr()?;
    if parser.pos != toks.len() {
        let span = parser.span();
        return Err(ExprError::unsupported(span, "trailing input"));
    }
    Ok(expr)
}

pub(crate) fn rational_is_zero(q: &BigRational) -> bool {
    q.numer().is_zero()
}

pub(crate) fn rational_one() -> BigRational {
    BigRational::from_integer(BigInt::one())
}
