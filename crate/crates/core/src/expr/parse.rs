use thiserror::Error;

use super::{BinOp, Expr, Func};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("empty expression")]
    Empty,
    #[error("dimension must be at least 2, got {0}")]
    Dimension(usize),
    #[error("unexpected character '{0}'")]
    UnexpectedChar(char),
    #[error("unexpected {0}")]
    UnexpectedToken(String),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("malformed number '{0}'")]
    BadNumber(String),
    #[error("unknown identifier '{0}'")]
    UnknownIdentifier(String),
    #[error("coordinate x{index} out of range for dimension {dimension}")]
    CoordinateOutOfRange { index: usize, dimension: usize },
    #[error("exponent must be an integer literal")]
    BadExponent,
    #[error("function '{0}' requires a parenthesized argument")]
    MissingCall(String),
}

/// Parse failure. `position` is the 1-based character column; end of input
/// reports one past the last character.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at position {position}: {kind}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    Sym(char),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(s) => format!("number '{s}'"),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Sym(c) => format!("'{c}'"),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(source: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit()
            || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            out.push((Tok::Num(chars[start..i].iter().collect()), pos));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
        } else if "+-*/^()".contains(c) {
            out.push((Tok::Sym(c), pos));
            i += 1;
        } else {
            return Err(ParseError {
                kind: ParseErrorKind::UnexpectedChar(c),
                position: pos,
            });
        }
    }
    out.push((Tok::End, chars.len() + 1));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    dimension: usize,
    parameters: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self) -> ParseError {
        let kind = match self.peek() {
            Tok::End => ParseErrorKind::UnexpectedEnd,
            t => ParseErrorKind::UnexpectedToken(t.describe()),
        };
        ParseError {
            kind,
            position: self.pos(),
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Sym('-') {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Sym('^') {
            self.bump();
            let k = self.exponent()?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    /// Signed integer literal, right-associative: `x^2^3` is `x^8`.
    fn exponent(&mut self) -> Result<i32, ParseError> {
        let position = self.pos();
        let bad = ParseError {
            kind: ParseErrorKind::BadExponent,
            position,
        };
        let negative = match self.peek() {
            Tok::Sym('-') => {
                self.bump();
                true
            }
            _ => false,
        };
        let digits = match self.bump() {
            (Tok::Num(s), _) if s.bytes().all(|b| b.is_ascii_digit()) => s,
            (Tok::End, p) => {
                return Err(ParseError {
                    kind: ParseErrorKind::UnexpectedEnd,
                    position: p,
                })
            }
            _ => return Err(bad),
        };
        let mut k: i32 = digits.parse().map_err(|_| bad.clone())?;
        if negative {
            k = -k;
        }
        if *self.peek() == Tok::Sym('^') {
            self.bump();
            let rest = self.exponent()?;
            if rest < 0 && k.abs() != 1 {
                return Err(bad);
            }
            k = k.checked_pow(rest.unsigned_abs()).ok_or(bad)?;
        }
        Ok(k)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Num(s) => {
                let position = self.pos();
                self.bump();
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Expr::Const)
                    .ok_or(ParseError {
                        kind: ParseErrorKind::BadNumber(s),
                        position,
                    })
            }
            Tok::Sym('(') => {
                self.bump();
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let position = self.pos();
                self.bump();
                if let Some(func) = Func::from_name(&name) {
                    if *self.peek() != Tok::Sym('(') {
                        return Err(ParseError {
                            kind: ParseErrorKind::MissingCall(name),
                            position,
                        });
                    }
                    self.bump();
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(Expr::call(func, arg));
                }
                self.identifier(name, position)
            }
            _ => Err(self.unexpected()),
        }
    }

    fn identifier(&self, name: String, position: usize) -> Result<Expr, ParseError> {
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = digits.parse().unwrap_or(usize::MAX);
                if index == 0 || index > self.dimension {
                    return Err(ParseError {
                        kind: ParseErrorKind::CoordinateOutOfRange {
                            index,
                            dimension: self.dimension,
                        },
                        position,
                    });
                }
                return Ok(Expr::Coord(index));
            }
        }
        if self.parameters.contains(&name.as_str()) {
            Ok(Expr::Param(name))
        } else {
            Err(ParseError {
                kind: ParseErrorKind::UnknownIdentifier(name),
                position,
            })
        }
    }
}

/// Parse `source` in a system of `dimension` coordinates with the given
/// parameter names.
///
/// Precedence from tightest: `^` (right-associative, integer literal
/// exponent), unary `-`, `* /`, `+ -`. So `-x1^2` is `-(x1^2)`.
pub fn parse(source: &str, dimension: usize, parameters: &[&str]) -> Result<Expr, ParseError> {
    if dimension < 2 {
        return Err(ParseError {
            kind: ParseErrorKind::Dimension(dimension),
            position: 1,
        });
    }
    if source.trim().is_empty() {
        return Err(ParseError {
            kind: ParseErrorKind::Empty,
            position: 1,
        });
    }
    let mut p = Parser {
        toks: lex(source)?,
        at: 0,
        dimension,
        parameters,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected());
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> Expr {
        Expr::coord(i)
    }

    #[test]
    fn product_of_coordinates() {
        assert_eq!(parse("x2*x3", 3, &[]).unwrap(), x(2) * x(3));
    }

    #[test]
    fn difference_of_quotients() {
        let g = || Expr::param("g");
        assert_eq!(
            parse("g/x1 - g/x2", 3, &["g"]).unwrap(),
            g() / x(1) - g() / x(2)
        );
    }

    #[test]
    fn dangling_operator_reports_end_position() {
        let err = parse("x1 +", 3, &[]).unwrap_err();
        assert_eq!(err.position, 5);
        assert_eq!(err.kind, ParseErrorKind::UnexpectedEnd);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(parse("-x1^2", 3, &[]).unwrap(), -(x(1).powi(2)));
        assert_eq!(parse("x1 - x2 - x3", 3, &[]).unwrap(), (x(1) - x(2)) - x(3));
        assert_eq!(parse("x1 / x2 * x3", 3, &[]).unwrap(), (x(1) / x(2)) * x(3));
        assert_eq!(parse("x1 + x2 * x3", 3, &[]).unwrap(), x(1) + x(2) * x(3));
        assert_eq!(parse("x1^2^3", 3, &[]).unwrap(), x(1).powi(8));
        assert_eq!(parse("x1^-2", 3, &[]).unwrap(), x(1).powi(-2));
        assert_eq!(parse("-x1 * x2", 3, &[]).unwrap(), -x(1) * x(2));
        assert_eq!(
            parse("sqrt(x1 + 1)", 3, &[]).unwrap(),
            Expr::call(Func::Sqrt, x(1) + 1.0)
        );
        assert_eq!(parse("1.5e-3", 3, &[]).unwrap(), Expr::Const(1.5e-3));
    }

    #[test]
    fn identifier_errors() {
        let e = parse("x1 + y", 3, &[]).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownIdentifier("y".into()));
        assert_eq!(e.position, 6);
        let e = parse("x4", 3, &[]).unwrap_err();
        assert_eq!(
            e.kind,
            ParseErrorKind::CoordinateOutOfRange {
                index: 4,
                dimension: 3
            }
        );
        let e = parse("x0", 3, &[]).unwrap_err();
        assert!(matches!(
            e.kind,
            ParseErrorKind::CoordinateOutOfRange { index: 0, .. }
        ));
        assert!(parse("x1^1.5", 3, &[]).is_err());
        assert!(parse("x1^x2", 3, &[]).is_err());
        assert!(parse("sqrt x1", 3, &[]).is_err());
        assert!(parse("(x1", 3, &[]).is_err());
        assert!(parse("x1)", 3, &[]).is_err());
        assert!(parse("x1 $ x2", 3, &[]).is_err());
        assert!(parse("   ", 3, &[]).is_err());
        assert!(parse("x1", 1, &[]).is_err());
    }
}
