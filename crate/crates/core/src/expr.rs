//! Density expressions over ambient coordinates.
//!
//! Grammar: numbers, `pi`, variables `x1 … xN`, binary `+ - * /`, unary
//! minus, parentheses, and the functions `exp log sin cos`.

use crate::error::{Error, Result};
use crate::linalg::Vector;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based coordinate index.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '0'..='9' | '.' => {
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
                let text: String = chars[start..i].iter().collect();
                let v = text.parse().map_err(|_| Error::Parse(format!("bad number `{text}`")))?;
                out.push(Token::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            '+' | '*' | '/' | '-' => {
                out.push(Token::Op(c));
                i += 1;
            }
            '\u{2212}' => {
                out.push(Token::Op('-'));
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            other => return Err(Error::Parse(format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
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
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' { Expr::Add(lhs.into(), rhs.into()) } else { Expr::Sub(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' { Expr::Mul(lhs.into(), rhs.into()) } else { Expr::Div(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(self.unary()?.into()))
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(e),
                    _ => Err(Error::Parse("missing `)`".into())),
                }
            }
            Some(Token::Ident(name)) => {
                let func = match name.as_str() {
                    "pi" => return Ok(Expr::Const(std::f64::consts::PI)),
                    "exp" => Func::Exp,
                    "log" => Func::Log,
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    _ => {
                        if let Some(k) = name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                            if k >= 1 {
                                return Ok(Expr::Var(k - 1));
                            }
                        }
                        return Err(Error::Parse(format!("unknown identifier `{name}`")));
                    }
                };
                if self.next() != Some(Token::LParen) {
                    return Err(Error::Parse(format!("`{name}` must be followed by `(`")));
                }
                let arg = self.expr()?;
                if self.next() != Some(Token::RParen) {
                    return Err(Error::Parse(format!("missing `)` after `{name}(`")));
                }
                Ok(Expr::Call(func, arg.into()))
            }
            Some(t) => Err(Error::Parse(format!("unexpected token {t:?}"))),
            None => Err(Error::Parse("unexpected end of expression".into())),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser { tokens: tokenize(src)?, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Parse(format!("trailing input after position {}", p.pos)));
        }
        Ok(e)
    }

    /// Number of coordinates referenced (largest `k` in `xk`).
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(k) => k + 1,
            Expr::Neg(a) | Expr::Call(_, a) => a.arity(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => a.arity().max(b.arity()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Var(k) => x[*k],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Call(f, a) => {
                let v = a.eval(x);
                match f {
                    Func::Exp => v.exp(),
                    Func::Log => v.ln(),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                }
            }
        }
    }

    /// Evaluates at every position; values must be finite and positive.
    pub fn eval_positive(&self, positions: &[Vector], ambient_dim: usize) -> Result<Vec<f64>> {
        if self.arity() > ambient_dim {
            return Err(Error::Config(format!(
                "expression uses x{} but the mesh lives in R^{ambient_dim}",
                self.arity()
            )));
        }
        let values: Vec<f64> = positions.iter().map(|p| self.eval(p.as_slice())).collect();
        crate::functionals::check_positive(&values)?;
        Ok(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vector_from_slice;

    #[test]
    fn precedence_and_functions() {
        let e = Expr::parse("1 + 2*x1 - x2/4").unwrap();
        assert_eq!(e.eval(&[3.0, 8.0]), 5.0);
        let e = Expr::parse("-(x1 - 1) * -2").unwrap();
        assert_eq!(e.eval(&[4.0]), 6.0);
        let e = Expr::parse("exp(log(2.5)) + sin(0) + cos(0)").unwrap();
        assert!((e.eval(&[]) - 3.5).abs() < 1e-15);
        let e = Expr::parse("(1 + 0.5*x1/4)/(2*pi)").unwrap();
        assert!((e.eval(&[4.0]) - 1.5 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert_eq!(Expr::parse("2e-3*x3").unwrap().eval(&[0.0, 0.0, 1000.0]), 2.0);
        assert_eq!(Expr::parse("1 \u{2212} 0.5").unwrap().eval(&[]), 0.5);
    }

    #[test]
    fn arity_and_errors() {
        assert_eq!(Expr::parse("x1 + x4*x2").unwrap().arity(), 4);
        for bad in ["", "1 +", "(1", "foo(1)", "x0", "exp 1", "1 2", "3 $ 4"] {
            assert!(matches!(Expr::parse(bad), Err(Error::Parse(_))), "{bad}");
        }
    }

    #[test]
    fn positivity_is_checked() {
        let pts = vec![vector_from_slice(&[1.0, 0.0]), vector_from_slice(&[-1.0, 0.0])];
        let e = Expr::parse("1 + 0.5*x1").unwrap();
        assert_eq!(e.eval_positive(&pts, 2).unwrap(), vec![1.5, 0.5]);
        let e = Expr::parse("x1").unwrap();
        assert!(matches!(e.eval_positive(&pts, 2), Err(Error::NonpositiveDensity { vertex: 1, .. })));
        let e = Expr::parse("x3").unwrap();
        assert!(matches!(e.eval_positive(&pts, 2), Err(Error::Config(_))));
    }
}
