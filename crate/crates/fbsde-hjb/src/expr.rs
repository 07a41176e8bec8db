//! Coefficient expression mini-language.
//!
//! Grammar (precedence low to high):
//!
//! | level | operators            | associativity |
//! |-------|----------------------|---------------|
//! | 1     | `+` `-`              | left          |
//! | 2     | `*` `/`              | left          |
//! | 3     | unary `-`            | prefix        |
//! | 4     | `^`                  | right         |
//!
//! Atoms are numeric literals (decimal, optional exponent), the variables
//! `t`, `x`, `y`, `z`, `u`, parenthesized expressions, and the function
//! calls `exp`, `log`, `sqrt`, `abs`, `tanh` (one argument) and `min`,
//! `max`, `pow` (two arguments).  `a^b` and `pow(a, b)` are equivalent.
//! Unary minus binds looser than `^`, so `-x^2` parses as `-(x^2)`.
//!
//! Parsing checks variables against an allowed list so that, for example,
//! `y` is rejected inside a drift coefficient.  Evaluation is total for
//! finite inputs: out-of-domain arguments follow IEEE semantics (`log` of
//! a negative number is NaN, division by zero is infinite).

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use std::fmt;

/// Variables the mini-language knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X,
    Y,
    Z,
    U,
}

impl Var {
    pub fn as_char(self) -> char {
        match self {
            Var::T => 't',
            Var::X => 'x',
            Var::Y => 'y',
            Var::Z => 'z',
            Var::U => 'u',
        }
    }

    fn from_name(name: &str) -> Option<Var> {
        match name {
            "t" => Some(Var::T),
            "x" => Some(Var::X),
            "y" => Some(Var::Y),
            "z" => Some(Var::Z),
            "u" => Some(Var::U),
            _ => None,
        }
    }
}

/// All five variables, for coefficients like the BSDE driver.
pub const ALL_VARS: [Var; 5] = [Var::T, Var::X, Var::Y, Var::Z, Var::U];
/// State-only coefficients (terminal conditions).
pub const X_ONLY: [Var; 1] = [Var::X];
/// Drift/volatility coefficients.
pub const TXU: [Var; 3] = [Var::T, Var::X, Var::U];
/// Nonlinear terminal transforms.
pub const Y_ONLY: [Var; 1] = [Var::Y];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UnaryFn {
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinaryFn {
    Min,
    Max,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call1(UnaryFn, Box<Node>),
    Call2(BinaryFn, Box<Node>, Box<Node>),
}

/// Evaluation environment; unused variables may stay at zero.
#[derive(Debug, Clone, Copy)]
pub struct Env<S> {
    pub t: S,
    pub x: S,
    pub y: S,
    pub z: S,
    pub u: S,
}

impl<S: Scalar> Default for Env<S> {
    fn default() -> Self {
        Env {
            t: S::zero(),
            x: S::zero(),
            y: S::zero(),
            z: S::zero(),
            u: S::zero(),
        }
    }
}

impl<S: Scalar> Env<S> {
    pub fn new(t: S, x: S, y: S, z: S, u: S) -> Self {
        Env { t, x, y, z, u }
    }

    fn get(&self, v: Var) -> S {
        match v {
            Var::T => self.t,
            Var::X => self.x,
            Var::Y => self.y,
            Var::Z => self.z,
            Var::U => self.u,
        }
    }
}

/// A parsed coefficient expression.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprAst {
    root: Node,
}

impl ExprAst {
    /// Evaluates the expression at the given inputs.
    pub fn eval<S: Scalar>(&self, env: &Env<S>) -> S {
        eval_node(&self.root, env)
    }

    /// Convenience wrapper for `f64` inputs.
    pub fn eval_f64(&self, t: f64, x: f64, y: f64, z: f64, u: f64) -> f64 {
        self.eval(&Env::new(t, x, y, z, u))
    }
}

fn eval_node<S: Scalar>(node: &Node, env: &Env<S>) -> S {
    match node {
        Node::Num(v) => S::from_f64_lossy(*v),
        Node::Var(v) => env.get(*v),
        Node::Neg(inner) => -eval_node(inner, env),
        Node::Bin(op, a, b) => {
            let a = eval_node(a, env);
            let b = eval_node(b, env);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => a.powf(b),
            }
        }
        Node::Call1(f, a) => {
            let a = eval_node(a, env);
            match f {
                UnaryFn::Exp => a.exp(),
                UnaryFn::Log => a.ln(),
                UnaryFn::Sqrt => a.sqrt(),
                UnaryFn::Abs => a.abs(),
                UnaryFn::Tanh => a.tanh(),
            }
        }
        Node::Call2(f, a, b) => {
            let a = eval_node(a, env);
            let b = eval_node(b, env);
            match f {
                BinaryFn::Min => a.min(b),
                BinaryFn::Max => a.max(b),
                BinaryFn::Pow => a.powf(b),
            }
        }
    }
}

// Fully parenthesized form; re-parsing reproduces the tree.
impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_node(&self.root, f)
    }
}

fn fmt_node(node: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match node {
        Node::Num(v) => {
            if v.is_sign_negative() {
                write!(f, "({v})")
            } else {
                write!(f, "{v}")
            }
        }
        Node::Var(v) => write!(f, "{}", v.as_char()),
        Node::Neg(inner) => {
            write!(f, "(-")?;
            fmt_node(inner, f)?;
            write!(f, ")")
        }
        Node::Bin(op, a, b) => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => "^",
            };
            write!(f, "(")?;
            fmt_node(a, f)?;
            write!(f, "{sym}")?;
            fmt_node(b, f)?;
            write!(f, ")")
        }
        Node::Call1(func, a) => {
            let name = match func {
                UnaryFn::Exp => "exp",
                UnaryFn::Log => "log",
                UnaryFn::Sqrt => "sqrt",
                UnaryFn::Abs => "abs",
                UnaryFn::Tanh => "tanh",
            };
            write!(f, "{name}(")?;
            fmt_node(a, f)?;
            write!(f, ")")
        }
        Node::Call2(func, a, b) => {
            let name = match func {
                BinaryFn::Min => "min",
                BinaryFn::Max => "max",
                BinaryFn::Pow => "pow",
            };
            write!(f, "{name}(")?;
            fmt_node(a, f)?;
            write!(f, ",")?;
            fmt_node(b, f)?;
            write!(f, ")")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<(Token, usize)>> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                tokens.push((Token::Plus, i));
                i += 1;
            }
            '-' => {
                tokens.push((Token::Minus, i));
                i += 1;
            }
            '*' => {
                tokens.push((Token::Star, i));
                i += 1;
            }
            '/' => {
                tokens.push((Token::Slash, i));
                i += 1;
            }
            '^' => {
                tokens.push((Token::Caret, i));
                i += 1;
            }
            '(' => {
                tokens.push((Token::LParen, i));
                i += 1;
            }
            ')' => {
                tokens.push((Token::RParen, i));
                i += 1;
            }
            ',' => {
                tokens.push((Token::Comma, i));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| Error::Syntax {
                    pos: start,
                    msg: format!("invalid number literal `{text}`"),
                })?;
                tokens.push((Token::Num(value), start));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    i += 1;
                }
                tokens.push((Token::Ident(src[start..i].to_string()), start));
            }
            other => {
                return Err(Error::Syntax {
                    pos: i,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: &'a [(Token, usize)],
    pos: usize,
    src_len: usize,
    allowed: &'a [Var],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(_, p)| *p)
            .unwrap_or(self.src_len)
    }

    fn bump(&mut self) -> Option<&'a (Token, usize)> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: &Token, what: &str) -> Result<()> {
        match self.bump() {
            Some((t, _)) if t == want => Ok(()),
            Some((t, p)) => Err(Error::Syntax {
                pos: *p,
                msg: format!("expected {what}, found {t:?}"),
            }),
            None => Err(Error::Syntax {
                pos: self.src_len,
                msg: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn parse_expr(&mut self, min_bp: u8) -> Result<Node> {
        let mut lhs = self.parse_prefix()?;
        loop {
            let (op, lbp, rbp) = match self.peek() {
                Some(Token::Plus) => (BinOp::Add, 10, 11),
                Some(Token::Minus) => (BinOp::Sub, 10, 11),
                Some(Token::Star) => (BinOp::Mul, 20, 21),
                Some(Token::Slash) => (BinOp::Div, 20, 21),
                Some(Token::Caret) => (BinOp::Pow, 50, 49),
                _ => break,
            };
            if lbp < min_bp {
                break;
            }
            self.bump();
            let rhs = self.parse_expr(rbp)?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_prefix(&mut self) -> Result<Node> {
        let pos = self.here();
        match self.bump() {
            Some((Token::Num(v), _)) => Ok(Node::Num(*v)),
            Some((Token::Minus, _)) => {
                // Unary minus binds looser than `^`.
                let inner = self.parse_expr(30)?;
                Ok(Node::Neg(Box::new(inner)))
            }
            Some((Token::LParen, _)) => {
                let inner = self.parse_expr(0)?;
                self.expect(&Token::RParen, "`)`")?;
                Ok(inner)
            }
            Some((Token::Ident(name), p)) => self.parse_ident(name, *p),
            Some((t, p)) => Err(Error::Syntax {
                pos: *p,
                msg: format!("expected an expression, found {t:?}"),
            }),
            None => Err(Error::Syntax {
                pos,
                msg: "expected an expression, found end of input".into(),
            }),
        }
    }

    fn parse_ident(&mut self, name: &str, pos: usize) -> Result<Node> {
        let unary = match name {
            "exp" => Some(UnaryFn::Exp),
            "log" => Some(UnaryFn::Log),
            "sqrt" => Some(UnaryFn::Sqrt),
            "abs" => Some(UnaryFn::Abs),
            "tanh" => Some(UnaryFn::Tanh),
            _ => None,
        };
        if let Some(f) = unary {
            self.expect(&Token::LParen, "`(` after function name")?;
            let a = self.parse_expr(0)?;
            self.expect(&Token::RParen, "`)`")?;
            return Ok(Node::Call1(f, Box::new(a)));
        }
        let binary = match name {
            "min" => Some(BinaryFn::Min),
            "max" => Some(BinaryFn::Max),
            "pow" => Some(BinaryFn::Pow),
            _ => None,
        };
        if let Some(f) = binary {
            self.expect(&Token::LParen, "`(` after function name")?;
            let a = self.parse_expr(0)?;
            self.expect(&Token::Comma, "`,`")?;
            let b = self.parse_expr(0)?;
            self.expect(&Token::RParen, "`)`")?;
            return Ok(Node::Call2(f, Box::new(a), Box::new(b)));
        }
        match Var::from_name(name) {
            Some(v) if self.allowed.contains(&v) => Ok(Node::Var(v)),
            Some(v) => Err(Error::VarNotAllowed {
                pos,
                var: v.as_char(),
            }),
            None => Err(Error::UnknownIdentifier {
                pos,
                name: name.to_string(),
            }),
        }
    }
}

/// Parses an expression, restricting variables to `allowed`.
pub fn parse(source: &str, allowed: &[Var]) -> Result<ExprAst> {
    let tokens = tokenize(source)?;
    if tokens.is_empty() {
        return Err(Error::Syntax {
            pos: 0,
            msg: "empty expression".into(),
        });
    }
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        src_len: source.len(),
        allowed,
    };
    let root = parser.parse_expr(0)?;
    if parser.pos != tokens.len() {
        let (t, p) = &tokens[parser.pos];
        return Err(Error::Syntax {
            pos: *p,
            msg: format!("trailing input starting with {t:?}"),
        });
    }
    Ok(ExprAst { root })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ev(src: &str, t: f64, x: f64, y: f64, z: f64, u: f64) -> f64 {
        parse(src, &ALL_VARS).unwrap().eval_f64(t, x, y, z, u)
    }

    #[test]
    fn identity_in_x() {
        let e = parse("x", &[Var::T, Var::X]).unwrap();
        assert_eq!(e.eval_f64(0.0, 3.0, 0.0, 0.0, 0.0), 3.0);
    }

    #[test]
    fn z_squared() {
        assert_eq!(ev("z*z", 0.0, 0.0, 0.0, 2.0, 0.0), 4.0);
    }

    #[test]
    fn exponential_utility_at_one() {
        let v = ev("-(1/1)*exp(-1*x)", 0.0, 1.0, 0.0, 0.0, 0.0);
        assert_relative_eq!(v, -(-1.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(v, -0.367_879_441_171_442_33, epsilon = 1e-12);
    }

    #[test]
    fn precedence_and_power() {
        assert_eq!(ev("1+2*3", 0.0, 0.0, 0.0, 0.0, 0.0), 7.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0, 0.0, 0.0, 0.0), 512.0);
        assert_eq!(ev("-2^2", 0.0, 0.0, 0.0, 0.0, 0.0), -4.0);
        assert_eq!(ev("(1-2)-3", 0.0, 0.0, 0.0, 0.0, 0.0), -4.0);
        assert_eq!(ev("1-2-3", 0.0, 0.0, 0.0, 0.0, 0.0), -4.0);
        assert_eq!(ev("8/4/2", 0.0, 0.0, 0.0, 0.0, 0.0), 1.0);
        assert_eq!(ev("pow(2,10)", 0.0, 0.0, 0.0, 0.0, 0.0), 1024.0);
        assert_eq!(ev("min(3,max(1,2))", 0.0, 0.0, 0.0, 0.0, 0.0), 2.0);
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(ev("1e-5", 0.0, 0.0, 0.0, 0.0, 0.0), 1e-5);
        assert_eq!(ev("2.5E2", 0.0, 0.0, 0.0, 0.0, 0.0), 250.0);
    }

    #[test]
    fn syntax_error_carries_position() {
        match parse("1 + $", &ALL_VARS) {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier() {
        assert!(matches!(
            parse("foo + 1", &ALL_VARS),
            Err(Error::UnknownIdentifier { .. })
        ));
    }

    #[test]
    fn disallowed_variable() {
        match parse("x + y", &TXU) {
            Err(Error::VarNotAllowed { var, .. }) => assert_eq!(var, 'y'),
            other => panic!("expected var error, got {other:?}"),
        }
    }

    #[test]
    fn generic_eval_matches_f64() {
        let e = parse("exp(x) + tanh(t) - sqrt(abs(u))", &ALL_VARS).unwrap();
        let v64 = e.eval(&Env::<f64>::new(0.3, 1.2, 0.0, 0.0, 4.0));
        let v32 = e.eval(&Env::<f32>::new(0.3, 1.2, 0.0, 0.0, 4.0));
        assert_relative_eq!(v64, v32 as f64, epsilon = 1e-5);
    }
}
