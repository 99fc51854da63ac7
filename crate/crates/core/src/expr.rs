//! Tiny expression grammar for model coefficients and composite functionals.
//!
//! Expressions are built from `x`, `t`, numeric constants, the unary
//! functions `exp log cosh sin cos tanh abs`, the binary `max`, arithmetic
//! `+ - * /` with parentheses, and the mean-field averages
//! `mean_x mean_x2 mean_sin mean_cos mean_sin2` evaluated against the
//! current measure. `log` is the natural logarithm.

use crate::measures::{MeanField, MeasureStats};

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("expression error at column {column}: {message}")]
pub struct ExprError {
    pub column: usize,
    pub message: String,
}

fn err<T>(column: usize, message: impl Into<String>) -> Result<T, ExprError> {
    Err(ExprError {
        column,
        message: message.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Exp,
    Log,
    Cosh,
    Sin,
    Cos,
    Tanh,
    Abs,
}

impl UnaryFn {
    fn apply(self, v: f64) -> f64 {
        match self {
            UnaryFn::Exp => v.exp(),
            UnaryFn::Log => v.ln(),
            UnaryFn::Cosh => v.cosh(),
            UnaryFn::Sin => v.sin(),
            UnaryFn::Cos => v.cos(),
            UnaryFn::Tanh => v.tanh(),
            UnaryFn::Abs => v.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    X,
    T,
    MeanField(MeanField),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Unary(UnaryFn, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let expr = p.expr()?;
        match p.peek() {
            Some(tok) => err(tok.column, format!("unexpected trailing `{}`", tok.kind)),
            None => Ok(expr),
        }
    }

    pub fn eval(&self, x: f64, t: f64, stats: &dyn MeasureStats) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X => x,
            Expr::T => t,
            Expr::MeanField(m) => stats.mean_field(*m),
            Expr::Neg(e) => -e.eval(x, t, stats),
            Expr::Add(a, b) => a.eval(x, t, stats) + b.eval(x, t, stats),
            Expr::Sub(a, b) => a.eval(x, t, stats) - b.eval(x, t, stats),
            Expr::Mul(a, b) => a.eval(x, t, stats) * b.eval(x, t, stats),
            Expr::Div(a, b) => a.eval(x, t, stats) / b.eval(x, t, stats),
            Expr::Unary(f, e) => f.apply(e.eval(x, t, stats)),
            Expr::Max(a, b) => a.eval(x, t, stats).max(b.eval(x, t, stats)),
        }
    }

    /// True when any subexpression queries the measure.
    pub fn uses_mean_field(&self) -> bool {
        match self {
            Expr::MeanField(_) => true,
            Expr::Const(_) | Expr::X | Expr::T => false,
            Expr::Neg(e) | Expr::Unary(_, e) => e.uses_mean_field(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Max(a, b) => a.uses_mean_field() || b.uses_mean_field(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
}

impl std::fmt::Display for TokenKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TokenKind::Number(v) => write!(f, "{v}"),
            TokenKind::Ident(s) => write!(f, "{s}"),
            TokenKind::Plus => write!(f, "+"),
            TokenKind::Minus => write!(f, "-"),
            TokenKind::Star => write!(f, "*"),
            TokenKind::Slash => write!(f, "/"),
            TokenKind::LParen => write!(f, "("),
            TokenKind::RParen => write!(f, ")"),
            TokenKind::Comma => write!(f, ","),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    kind: TokenKind,
    column: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let column = i + 1;
        match c {
            ' ' | '\t' => i += 1,
            '+' | '-' | '*' | '/' | '(' | ')' | ',' => {
                let kind = match c {
                    '+' => TokenKind::Plus,
                    '-' => TokenKind::Minus,
                    '*' => TokenKind::Star,
                    '/' => TokenKind::Slash,
                    '(' => TokenKind::LParen,
                    ')' => TokenKind::RParen,
                    _ => TokenKind::Comma,
                };
                tokens.push(Token { kind, column });
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() {
                    let d = bytes[i] as char;
                    if d.is_ascii_digit() || d == '.' {
                        i += 1;
                    } else if (d == 'e' || d == 'E')
                        && i + 1 < bytes.len()
                        && ((bytes[i + 1] as char).is_ascii_digit()
                            || bytes[i + 1] == b'+'
                            || bytes[i + 1] == b'-')
                    {
                        i += 2;
                    } else {
                        break;
                    }
                }
                let text = &src[start..i];
                match text.parse::<f64>() {
                    Ok(v) => tokens.push(Token {
                        kind: TokenKind::Number(v),
                        column,
                    }),
                    Err(_) => return err(column, format!("bad number literal `{text}`")),
                }
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len() {
                    let d = bytes[i] as char;
                    if d.is_ascii_alphanumeric() || d == '_' {
                        i += 1;
                    } else {
                        break;
                    }
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(src[start..i].to_string()),
                    column,
                });
            }
            other => return err(column, format!("unexpected character `{other}`")),
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn end_column(&self) -> usize {
        self.tokens.last().map(|t| t.column + 1).unwrap_or(1)
    }

    fn expect(&mut self, kind: &TokenKind, what: &str) -> Result<(), ExprError> {
        match self.next() {
            Some(tok) if &tok.kind == kind => Ok(()),
            Some(tok) => err(tok.column, format!("expected {what}, found `{}`", tok.kind)),
            None => err(self.end_column(), format!("expected {what}, found end of input")),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(tok) = self.peek() {
            match tok.kind {
                TokenKind::Plus => {
                    self.next();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                TokenKind::Minus => {
                    self.next();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(tok) = self.peek() {
            match tok.kind {
                TokenKind::Star => {
                    self.next();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                TokenKind::Slash => {
                    self.next();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if let Some(tok) = self.peek() {
            if tok.kind == TokenKind::Minus {
                self.next();
                return Ok(Expr::Neg(Box::new(self.unary()?)));
            }
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let tok = match self.next() {
            Some(t) => t,
            None => return err(self.end_column(), "expected expression, found end of input"),
        };
        match tok.kind {
            TokenKind::Number(v) => Ok(Expr::Const(v)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect(&TokenKind::RParen, "`)`")?;
                Ok(inner)
            }
            TokenKind::Ident(name) => self.ident(&name, tok.column),
            other => err(tok.column, format!("expected expression, found `{other}`")),
        }
    }

    fn ident(&mut self, name: &str, column: usize) -> Result<Expr, ExprError> {
        match name {
            "x" => return Ok(Expr::X),
            "t" => return Ok(Expr::T),
            "mean_x" => return Ok(Expr::MeanField(MeanField::X)),
            "mean_x2" => return Ok(Expr::MeanField(MeanField::X2)),
            "mean_sin" => return Ok(Expr::MeanField(MeanField::Sin)),
            "mean_cos" => return Ok(Expr::MeanField(MeanField::Cos)),
            "mean_sin2" => return Ok(Expr::MeanField(MeanField::Sin2)),
            _ => {}
        }
        if name == "max" {
            self.expect(&TokenKind::LParen, "`(` after max")?;
            let a = self.expr()?;
            self.expect(&TokenKind::Comma, "`,` between max arguments")?;
            let b = self.expr()?;
            self.expect(&TokenKind::RParen, "`)`")?;
            return Ok(Expr::Max(Box::new(a), Box::new(b)));
        }
        let f = match name {
            "exp" => UnaryFn::Exp,
            "log" => UnaryFn::Log,
            "cosh" => UnaryFn::Cosh,
            "sin" => UnaryFn::Sin,
            "cos" => UnaryFn::Cos,
            "tanh" => UnaryFn::Tanh,
            "abs" => UnaryFn::Abs,
            _ => return err(column, format!("unknown identifier `{name}`")),
        };
        self.expect(&TokenKind::LParen, &format!("`(` after {name}"))?;
        let inner = self.expr()?;
        self.expect(&TokenKind::RParen, "`)`")?;
        Ok(Expr::Unary(f, Box::new(inner)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::EmpiricalMeasure;

    fn eval(src: &str, x: f64, t: f64) -> f64 {
        let mu = EmpiricalMeasure::new(vec![0.0, 1.0, 2.0]).unwrap();
        Expr::parse(src).unwrap().eval(x, t, &mu)
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(eval("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(eval("(1 + 2) * 3", 0.0, 0.0), 9.0);
        assert_eq!(eval("-x + 4 / 2", 3.0, 0.0), -1.0);
        assert_eq!(eval("2 - 3 - 1", 0.0, 0.0), -2.0);
    }

    #[test]
    fn functions_and_mean_field() {
        assert!((eval("exp(x) * t", 1.0, 2.0) - 2.0 * std::f64::consts::E).abs() < 1e-15);
        assert_eq!(eval("max(x, t)", -1.0, 0.5), 0.5);
        // mean over {0,1,2} = 1
        assert_eq!(eval("mean_x", 0.0, 0.0), 1.0);
        let sin2 = ((0.0f64).sin().powi(2) + (1.0f64).sin().powi(2) + (2.0f64).sin().powi(2)) / 3.0;
        assert!((eval("mean_sin2 + 2", 0.0, 0.0) - (sin2 + 2.0)).abs() < 1e-15);
        assert_eq!(eval("0.05 * x * (mean_sin2 + 2)", 0.0, 9.9), 0.0);
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(eval("1.5e-2", 0.0, 0.0), 0.015);
        assert_eq!(eval("2E3", 0.0, 0.0), 2000.0);
    }

    #[test]
    fn uses_mean_field_flag() {
        assert!(Expr::parse("0.05 * x * (mean_sin2 + 2)").unwrap().uses_mean_field());
        assert!(!Expr::parse("0.05 * x").unwrap().uses_mean_field());
    }

    #[test]
    fn parse_errors_carry_columns() {
        let e = Expr::parse("1 + foo(2)").unwrap_err();
        assert_eq!(e.column, 5);
        assert!(e.message.contains("unknown identifier"));

        let e = Expr::parse("max(1 2)").unwrap_err();
        assert_eq!(e.column, 7);

        let e = Expr::parse("(1 + 2").unwrap_err();
        assert!(e.message.contains("end of input"));

        let e = Expr::parse("1 + 2)").unwrap_err();
        assert!(e.message.contains("trailing"));

        let e = Expr::parse("x $ 2").unwrap_err();
        assert_eq!(e.column, 3);
    }
}
