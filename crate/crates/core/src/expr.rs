//! Closed-form scalar expressions over `x, y, t` (and the facet normal
//! components `nx, ny` for boundary loads).
//!
//! Grammar: numbers, the variables above, the constant `pi`, the binary
//! operators `+ - * /`, `^` with an integer exponent, unary minus, the
//! functions `sin`, `cos`, `exp`, and parentheses. Expressions can be
//! differentiated symbolically and compiled to a postfix program for
//! evaluation inside quadrature loops.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X = 0,
    Y = 1,
    T = 2,
    Nx = 3,
    Ny = 4,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::T => "t",
            Var::Nx => "nx",
            Var::Ny => "ny",
        }
    }
}

/// Values bound to the variables, indexed by `Var as usize`.
pub type Env = [f64; 5];

pub fn env(x: f64, y: f64, t: f64) -> Env {
    [x, y, t, 0.0, 0.0]
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("column {column}: {message}")]
pub struct ParseError {
    /// 1-based character column.
    pub column: usize,
    pub message: String,
}

// Smart constructors fold constants and drop neutral elements.

pub fn num(v: f64) -> Expr {
    Expr::Num(v)
}

pub fn var(v: Var) -> Expr {
    Expr::Var(v)
}

fn as_num(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(v) => Some(*v),
        _ => None,
    }
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => Expr::Num(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => match b {
            Expr::Neg(nb) => Expr::Sub(Box::new(a), nb),
            b => Expr::Add(Box::new(a), Box::new(b)),
        },
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => Expr::Num(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => match b {
            Expr::Neg(nb) => Expr::Add(Box::new(a), nb),
            b => Expr::Sub(Box::new(a), Box::new(b)),
        },
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => Expr::Num(x * y),
        (Some(x), _) if x == 0.0 => Expr::Num(0.0),
        (_, Some(y)) if y == 0.0 => Expr::Num(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        _ => match (a, b) {
            (Expr::Neg(na), Expr::Neg(nb)) => Expr::Mul(na, nb),
            (Expr::Neg(na), b) => neg(Expr::Mul(na, Box::new(b))),
            (a, Expr::Neg(nb)) => neg(Expr::Mul(Box::new(a), nb)),
            (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
        },
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => Expr::Num(x / y),
        (Some(x), _) if x == 0.0 => Expr::Num(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, n: i32) -> Expr {
    match (n, as_num(&a)) {
        (0, _) => Expr::Num(1.0),
        (1, _) => a,
        (_, Some(x)) => Expr::Num(math::powi(x, n)),
        _ => Expr::Pow(Box::new(a), n),
    }
}

pub fn sin(a: Expr) -> Expr {
    match as_num(&a) {
        Some(x) => Expr::Num(math::sin(x)),
        None => Expr::Sin(Box::new(a)),
    }
}

pub fn cos(a: Expr) -> Expr {
    match as_num(&a) {
        Some(x) => Expr::Num(math::cos(x)),
        None => Expr::Cos(Box::new(a)),
    }
}

pub fn exp(a: Expr) -> Expr {
    match as_num(&a) {
        Some(x) => Expr::Num(math::exp(x)),
        None => Expr::Exp(Box::new(a)),
    }
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Num(0.0)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    /// Symbolic partial derivative, simplified on construction.
    pub fn diff(&self, v: Var) -> Expr {
        match self {
            Expr::Num(_) => num(0.0),
            Expr::Var(w) => num(if *w == v { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff(v)),
            Expr::Add(a, b) => add(a.diff(v), b.diff(v)),
            Expr::Sub(a, b) => sub(a.diff(v), b.diff(v)),
            Expr::Mul(a, b) => add(
                mul(a.diff(v), (**b).clone()),
                mul((**a).clone(), b.diff(v)),
            ),
            Expr::Div(a, b) => {
                let da = a.diff(v);
                let db = b.diff(v);
                if db.is_zero() {
                    div(da, (**b).clone())
                } else {
                    div(
                        sub(mul(da, (**b).clone()), mul((**a).clone(), db)),
                        pow((**b).clone(), 2),
                    )
                }
            }
            Expr::Pow(a, n) => mul(
                mul(num(*n as f64), pow((**a).clone(), n - 1)),
                a.diff(v),
            ),
            Expr::Sin(a) => mul(cos((**a).clone()), a.diff(v)),
            Expr::Cos(a) => neg(mul(sin((**a).clone()), a.diff(v))),
            Expr::Exp(a) => mul(exp((**a).clone()), a.diff(v)),
        }
    }

    /// Replace a variable by an expression.
    pub fn subst(&self, v: Var, with: &Expr) -> Expr {
        match self {
            Expr::Num(x) => num(*x),
            Expr::Var(w) => {
                if *w == v {
                    with.clone()
                } else {
                    var(*w)
                }
            }
            Expr::Neg(a) => neg(a.subst(v, with)),
            Expr::Add(a, b) => add(a.subst(v, with), b.subst(v, with)),
            Expr::Sub(a, b) => sub(a.subst(v, with), b.subst(v, with)),
            Expr::Mul(a, b) => mul(a.subst(v, with), b.subst(v, with)),
            Expr::Div(a, b) => div(a.subst(v, with), b.subst(v, with)),
            Expr::Pow(a, n) => pow(a.subst(v, with), *n),
            Expr::Sin(a) => sin(a.subst(v, with)),
            Expr::Cos(a) => cos(a.subst(v, with)),
            Expr::Exp(a) => exp(a.subst(v, with)),
        }
    }

    pub fn uses(&self, v: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => {
                a.uses(v)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.uses(v) || b.uses(v)
            }
        }
    }

    /// Tree-walking evaluation. Prefer [`Program`] in hot loops.
    pub fn eval(&self, e: &Env) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(w) => e[*w as usize],
            Expr::Neg(a) => -a.eval(e),
            Expr::Add(a, b) => a.eval(e) + b.eval(e),
            Expr::Sub(a, b) => a.eval(e) - b.eval(e),
            Expr::Mul(a, b) => a.eval(e) * b.eval(e),
            Expr::Div(a, b) => a.eval(e) / b.eval(e),
            Expr::Pow(a, n) => math::powi(a.eval(e), *n),
            Expr::Sin(a) => math::sin(a.eval(e)),
            Expr::Cos(a) => math::cos(a.eval(e)),
            Expr::Exp(a) => math::exp(a.eval(e)),
        }
    }

    pub fn compile(&self) -> Program {
        let mut ops = Vec::new();
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        emit(self, &mut ops, &mut depth, &mut max_depth);
        Program { ops, max_depth }
    }
}

fn emit(e: &Expr, ops: &mut Vec<Op>, depth: &mut usize, max_depth: &mut usize) {
    let push = |d: &mut usize, m: &mut usize| {
        *d += 1;
        *m = (*m).max(*d);
    };
    match e {
        Expr::Num(v) => {
            ops.push(Op::Num(*v));
            push(depth, max_depth);
        }
        Expr::Var(w) => {
            ops.push(Op::Var(*w as u8));
            push(depth, max_depth);
        }
        Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => {
            emit(a, ops, depth, max_depth);
            ops.push(match e {
                Expr::Neg(_) => Op::Neg,
                Expr::Pow(_, n) => Op::Pow(*n),
                Expr::Sin(_) => Op::Sin,
                Expr::Cos(_) => Op::Cos,
                _ => Op::Exp,
            });
        }
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            emit(a, ops, depth, max_depth);
            emit(b, ops, depth, max_depth);
            ops.push(match e {
                Expr::Add(..) => Op::Add,
                Expr::Sub(..) => Op::Sub,
                Expr::Mul(..) => Op::Mul,
                _ => Op::Div,
            });
            *depth -= 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Num(f64),
    Var(u8),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow(i32),
    Sin,
    Cos,
    Exp,
}

/// Postfix form of an [`Expr`].
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    ops: Vec<Op>,
    max_depth: usize,
}

impl Program {
    pub fn eval(&self, e: &Env) -> f64 {
        const INLINE: usize = 48;
        if self.max_depth <= INLINE {
            let mut stack = [0.0f64; INLINE];
            self.run(e, &mut stack)
        } else {
            let mut stack = alloc::vec![0.0f64; self.max_depth];
            self.run(e, &mut stack)
        }
    }

    pub fn eval_xyt(&self, x: f64, y: f64, t: f64) -> f64 {
        self.eval(&env(x, y, t))
    }

    fn run(&self, e: &Env, s: &mut [f64]) -> f64 {
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Num(v) => {
                    s[sp] = v;
                    sp += 1;
                }
                Op::Var(i) => {
                    s[sp] = e[i as usize];
                    sp += 1;
                }
                Op::Neg => s[sp - 1] = -s[sp - 1],
                Op::Pow(n) => s[sp - 1] = math::powi(s[sp - 1], n),
                Op::Sin => s[sp - 1] = math::sin(s[sp - 1]),
                Op::Cos => s[sp - 1] = math::cos(s[sp - 1]),
                Op::Exp => s[sp - 1] = math::exp(s[sp - 1]),
                Op::Add | Op::Sub | Op::Mul | Op::Div => {
                    let b = s[sp - 1];
                    let a = s[sp - 2];
                    sp -= 1;
                    s[sp - 1] = match *op {
                        Op::Add => a + b,
                        Op::Sub => a - b,
                        Op::Mul => a * b,
                        _ => a / b,
                    };
                }
            }
        }
        s[0]
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 => write!(f, "({})", v),
            Expr::Num(v) => write!(f, "{}", v),
            Expr::Var(w) => f.write_str(w.name()),
            Expr::Neg(a) => write!(f, "(-{})", a),
            Expr::Add(a, b) => write!(f, "({} + {})", a, b),
            Expr::Sub(a, b) => write!(f, "({} - {})", a, b),
            Expr::Mul(a, b) => write!(f, "{}*{}", a, b),
            Expr::Div(a, b) => write!(f, "{}/({})", a, b),
            Expr::Pow(a, n) => write!(f, "({})^({})", a, n),
            Expr::Sin(a) => write!(f, "sin({})", a),
            Expr::Cos(a) => write!(f, "cos({})", a),
            Expr::Exp(a) => write!(f, "exp({})", a),
        }
    }
}

/// Parse an expression over `x, y, t`.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    Parser::new(src, false).run()
}

/// Parse an expression that may also use the facet normal `nx, ny`.
pub fn parse_boundary(src: &str) -> Result<Expr, ParseError> {
    Parser::new(src, true).run()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    allow_normal: bool,
    lex_error: Option<ParseError>,
}

impl Parser {
    fn new(src: &str, allow_normal: bool) -> Self {
        let mut toks = Vec::new();
        let mut lex_error = None;
        let chars: Vec<char> = src.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            let single = match c {
                '+' => Some(Tok::Plus),
                '-' | '\u{2212}' => Some(Tok::Minus),
                '*' | '\u{00d7}' => Some(Tok::Star),
                '/' | '\u{00f7}' => Some(Tok::Slash),
                '^' => Some(Tok::Caret),
                '(' => Some(Tok::LParen),
                ')' => Some(Tok::RParen),
                _ => None,
            };
            if let Some(t) = single {
                toks.push((t, col));
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
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
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                match text.parse::<f64>() {
                    Ok(v) => toks.push((Tok::Num(v), col)),
                    Err(_) => {
                        lex_error.get_or_insert(ParseError {
                            column: col,
                            message: alloc::format!("malformed number '{}'", text),
                        });
                    }
                }
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                toks.push((Tok::Ident(chars[start..i].iter().collect()), col));
            } else {
                lex_error.get_or_insert(ParseError {
                    column: col,
                    message: alloc::format!("unexpected character '{}'", c),
                });
                i += 1;
            }
        }
        toks.push((Tok::End, chars.len() + 1));
        Parser {
            toks,
            pos: 0,
            allow_normal,
            lex_error,
        }
    }

    fn run(mut self) -> Result<Expr, ParseError> {
        if let Some(e) = self.lex_error.take() {
            return Err(e);
        }
        if self.peek() == &Tok::End {
            return Err(self.err("empty expression"));
        }
        let e = self.expr()?;
        if self.peek() != &Tok::End {
            return Err(self.err("unexpected trailing input"));
        }
        Ok(e)
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, msg: &str) -> ParseError {
        ParseError {
            column: self.toks[self.pos].1,
            message: msg.to_string(),
        }
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(self.err(&alloc::format!("expected {}", what)))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let paren = *self.peek() == Tok::LParen;
        if paren {
            self.bump();
        }
        let sign = if *self.peek() == Tok::Minus {
            self.bump();
            -1.0
        } else {
            1.0
        };
        let n = match self.peek() {
            Tok::Num(v) if math::trunc(*v) == *v && v.abs() <= i32::MAX as f64 => *v,
            _ => return Err(self.err("exponent must be an integer")),
        };
        self.bump();
        if paren {
            self.expect(Tok::RParen, "')'")?;
        }
        Ok(Expr::Pow(Box::new(base), (sign * n) as i32))
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let col_tok = self.pos;
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let fun = match name.as_str() {
                    "sin" | "cos" | "exp" => Some(name.clone()),
                    _ => None,
                };
                if let Some(f) = fun {
                    self.expect(Tok::LParen, "'(' after function name")?;
                    let arg = Box::new(self.expr()?);
                    self.expect(Tok::RParen, "')'")?;
                    return Ok(match f.as_str() {
                        "sin" => Expr::Sin(arg),
                        "cos" => Expr::Cos(arg),
                        _ => Expr::Exp(arg),
                    });
                }
                let v = match name.as_str() {
                    "x" => Some(Var::X),
                    "y" => Some(Var::Y),
                    "t" => Some(Var::T),
                    "nx" if self.allow_normal => Some(Var::Nx),
                    "ny" if self.allow_normal => Some(Var::Ny),
                    "pi" => return Ok(Expr::Num(core::f64::consts::PI)),
                    _ => None,
                };
                match v {
                    Some(v) => Ok(Expr::Var(v)),
                    None => Err(ParseError {
                        column: self.toks[col_tok].1,
                        message: alloc::format!("unknown identifier '{}'", name),
                    }),
                }
            }
            Tok::End => Err(ParseError {
                column: self.toks[col_tok].1,
                message: "unexpected end of expression".to_string(),
            }),
            _ => Err(ParseError {
                column: self.toks[col_tok].1,
                message: "expected a number, variable, function or '('".to_string(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin_pi_x_times_t() {
        let e = parse("sin(pi*x)*t").unwrap();
        assert!((e.eval(&env(0.5, 0.0, 1.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = parse("-x^2 + 2*y/4").unwrap();
        assert_eq!(e.eval(&env(3.0, 2.0, 0.0)), -9.0 + 1.0);
        let e = parse("2^-1 + x^(2)").unwrap();
        assert_eq!(e.eval(&env(3.0, 0.0, 0.0)), 9.5);
    }

    #[test]
    fn errors_carry_columns() {
        let e = parse("x + foo").unwrap_err();
        assert_eq!(e.column, 5);
        let e = parse("x ^ 1.5").unwrap_err();
        assert_eq!(e.column, 5);
        assert!(parse("").is_err());
        assert!(parse("(x").is_err());
        assert!(parse("nx").is_err());
        assert!(parse_boundary("nx*x").is_ok());
    }

    #[test]
    fn derivative_of_product() {
        let e = parse("x^3*sin(y)").unwrap();
        let d = e.diff(Var::X);
        let p = d.compile();
        let v = p.eval(&env(2.0, 0.3, 0.0));
        assert!((v - 12.0 * math::sin(0.3)).abs() < 1e-14);
    }

    #[test]
    fn program_matches_tree() {
        let e = parse("exp(-t)*cos(pi*x)*(y-1)^2/(1+x^2)").unwrap();
        let p = e.compile();
        for &(x, y, t) in &[(0.1, 0.2, 0.3), (0.9, -0.5, 2.0)] {
            assert_eq!(p.eval(&env(x, y, t)), e.eval(&env(x, y, t)));
        }
    }

    #[test]
    fn display_round_trips() {
        let e = parse("-(x - 2.5)^3*exp(-t)/(1+y) - -3").unwrap();
        let back = parse(&alloc::format!("{}", e)).unwrap();
        let a = env(0.3, 0.7, 0.2);
        assert_eq!(e.eval(&a), back.eval(&a));
    }
}
