//! A small arithmetic expression language for user-supplied `phi`, `f`, `F`,
//! `h` and growth data.
//!
//! Grammar: `+ - * / ^`, parentheses, numeric literals, the constant `pi`, the
//! functions `sqrt ln exp abs sin cos`, and the variables `t s x y`. `^` is
//! right associative and binds tighter than unary minus (`-t^2 = -(t^2)`).

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("column {column}: {message}")]
pub struct ParseError {
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    S,
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sqrt,
    Ln,
    Exp,
    Abs,
    Sin,
    Cos,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Ln => "ln",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sqrt => v.sqrt(),
            Func::Ln => v.ln(),
            Func::Exp => v.exp(),
            Func::Abs => v.abs(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// Variable bindings for [`Expr::eval`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Bindings {
    pub t: f64,
    pub s: f64,
    pub x: f64,
    pub y: f64,
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    root: Node,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.source.trim())
    }
}

impl Expr {
    /// Parses `source`, accepting only the variables in `allowed`.
    pub fn parse(source: &str, allowed: &[Var]) -> Result<Self, ParseError> {
        let mut p = Parser {
            chars: source.char_indices().collect(),
            pos: 0,
            allowed,
        };
        let root = p.expr()?;
        p.skip_ws();
        if let Some(&(col, c)) = p.chars.get(p.pos) {
            return Err(ParseError {
                column: col + 1,
                message: format!("unexpected character '{c}'"),
            });
        }
        Ok(Self {
            source: source.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        self.source.trim()
    }

    pub fn eval(&self, b: &Bindings) -> f64 {
        eval(&self.root, b)
    }

    /// Convenience for single-variable expressions in `t`.
    pub fn eval_t(&self, t: f64) -> f64 {
        self.eval(&Bindings { t, ..Default::default() })
    }

    pub fn eval_xy(&self, x: [f64; 2]) -> f64 {
        self.eval(&Bindings { x: x[0], y: x[1], ..Default::default() })
    }

    pub fn eval_xs(&self, x: [f64; 2], s: f64) -> f64 {
        self.eval(&Bindings { s, x: x[0], y: x[1], ..Default::default() })
    }

    /// True when the expression does not mention `v`.
    pub fn is_free_of(&self, v: Var) -> bool {
        fn walk(n: &Node, v: Var) -> bool {
            match n {
                Node::Num(_) => true,
                Node::Var(w) => *w != v,
                Node::Neg(a) | Node::Call(_, a) => walk(a, v),
                Node::Add(a, b)
                | Node::Sub(a, b)
                | Node::Mul(a, b)
                | Node::Div(a, b)
                | Node::Pow(a, b) => walk(a, v) && walk(b, v),
            }
        }
        walk(&self.root, v)
    }
}

fn eval(n: &Node, b: &Bindings) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Var(Var::T) => b.t,
        Node::Var(Var::S) => b.s,
        Node::Var(Var::X) => b.x,
        Node::Var(Var::Y) => b.y,
        Node::Neg(a) => -eval(a, b),
        Node::Add(l, r) => eval(l, b) + eval(r, b),
        Node::Sub(l, r) => eval(l, b) - eval(r, b),
        Node::Mul(l, r) => eval(l, b) * eval(r, b),
        Node::Div(l, r) => eval(l, b) / eval(r, b),
        Node::Pow(l, r) => {
            let base = eval(l, b);
            match &**r {
                Node::Num(e) if e.fract() == 0.0 && e.abs() < 64.0 => base.powi(*e as i32),
                other => base.powf(eval(other, b)),
            }
        }
        Node::Call(func, a) => func.apply(eval(a, b)),
    }
}

struct Parser<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    allowed: &'a [Var],
}

impl Parser<'_> {
    fn column(&self) -> usize {
        self.chars
            .get(self.pos)
            .map(|&(i, _)| i + 1)
            .unwrap_or_else(|| self.chars.last().map(|&(i, c)| i + c.len_utf8() + 1).unwrap_or(1))
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            column: self.column(),
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while matches!(self.chars.get(self.pos), Some((_, c)) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some('-') => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some('/') => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            None => self.err("unexpected end of expression"),
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(')') {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => self.err(format!("unexpected character '{c}'")),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        let mut text = String::new();
        while let Some(&(_, c)) = self.chars.get(self.pos) {
            let exp_sign = (c == '+' || c == '-') && matches!(text.chars().last(), Some('e' | 'E'));
            if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                text.push(c);
                self.pos += 1;
            } else {
                break;
            }
        }
        text.parse::<f64>().map(Node::Num).map_err(|_| ParseError {
            column: self.chars[start].0 + 1,
            message: format!("malformed number '{text}'"),
        })
    }

    fn ident(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        let mut name = String::new();
        while let Some(&(_, c)) = self.chars.get(self.pos) {
            if c.is_ascii_alphanumeric() || c == '_' {
                name.push(c);
                self.pos += 1;
            } else {
                break;
            }
        }
        let func = match name.as_str() {
            "sqrt" => Some(Func::Sqrt),
            "ln" => Some(Func::Ln),
            "exp" => Some(Func::Exp),
            "abs" => Some(Func::Abs),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            _ => None,
        };
        if let Some(func) = func {
            if self.peek() != Some('(') {
                return self.err(format!("expected '(' after {}", func.name()));
            }
            self.pos += 1;
            let arg = self.expr()?;
            if self.peek() != Some(')') {
                return self.err("expected ')'");
            }
            self.pos += 1;
            return Ok(Node::Call(func, Box::new(arg)));
        }
        let var = match name.as_str() {
            "pi" => return Ok(Node::Num(std::f64::consts::PI)),
            "t" => Var::T,
            "s" => Var::S,
            "x" => Var::X,
            "y" => Var::Y,
            _ => {
                return Err(ParseError {
                    column: self.chars[start].0 + 1,
                    message: format!("unknown identifier '{name}'"),
                })
            }
        };
        if !self.allowed.contains(&var) {
            return Err(ParseError {
                column: self.chars[start].0 + 1,
                message: format!("variable '{name}' is not available here"),
            });
        }
        Ok(Node::Var(var))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: &[Var] = &[Var::T, Var::S, Var::X, Var::Y];

    fn ev(src: &str, t: f64) -> f64 {
        Expr::parse(src, ALL).unwrap().eval_t(t)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0), 512.0);
        assert_eq!(ev("-t^2", 3.0), -9.0);
        assert_eq!(ev("(1 + 2) * 3 / 9", 0.0), 1.0);
        assert_eq!(ev("2^-1", 0.0), 0.5);
        assert_eq!(ev("1e-3 * 2E+2", 0.0), 0.2);
    }

    #[test]
    fn functions_and_constants() {
        assert!((ev("sqrt(1 + t^2) - 1", 1.0) - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert!((ev("ln(exp(2.5))", 0.0) - 2.5).abs() < 1e-15);
        assert_eq!(ev("abs(-t)", 4.0), 4.0);
        assert!((ev("sin(pi/2) + cos(0)", 0.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn multi_variable() {
        let e = Expr::parse("x * abs(s)^1.5 + y", ALL).unwrap();
        assert!((e.eval_xs([2.0, 1.0], -4.0) - 17.0).abs() < 1e-12);
        assert!(!e.is_free_of(Var::X));
        assert!(e.is_free_of(Var::T));
    }

    #[test]
    fn errors_carry_columns() {
        let e = Expr::parse("t + * 2", ALL).unwrap_err();
        assert_eq!(e.column, 5);
        let e = Expr::parse("t + q", ALL).unwrap_err();
        assert_eq!(e.column, 5);
        assert!(e.message.contains("unknown"));
        let e = Expr::parse("x + t", &[Var::T]).unwrap_err();
        assert_eq!(e.column, 1);
        assert!(Expr::parse("sqrt t", ALL).is_err());
        assert!(Expr::parse("(t + 1", ALL).is_err());
        assert!(Expr::parse("t 1", ALL).is_err());
        assert!(Expr::parse("", ALL).is_err());
    }
}
