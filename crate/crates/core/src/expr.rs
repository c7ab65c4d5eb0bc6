//! Recursive-descent parser and evaluator for right-hand sides and closed-form
//! comparison functions.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := ('-')? atom ('^' atom)?
//! atom   := number | ident | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func   := sin | cos | exp | log | abs | sqrt | min | max | tanh
//! ```
//!
//! Which identifiers are legal depends on the [`Scope`]: system right-hand sides
//! see `t`, `x1..xn`, `d1..dm`; scalar comparison functions see `r`; two-argument
//! (KL-type) functions see `r` and `t`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// Variables `t, x1..x{states}, d1..d{disturbances}`, slots in that order.
    System { states: usize, disturbances: usize },
    /// A single variable `r`.
    Scalar,
    /// Variables `r` (slot 0) and `t` (slot 1).
    TwoArg,
}

impl Scope {
    fn resolve(&self, name: &str) -> Option<usize> {
        match *self {
            Scope::Scalar => (name == "r").then_some(0),
            Scope::TwoArg => match name {
                "r" => Some(0),
                "t" => Some(1),
                _ => None,
            },
            Scope::System {
                states,
                disturbances,
            } => {
                if name == "t" {
                    return Some(0);
                }
                let (prefix, digits) = name.split_at(1);
                if digits.is_empty()
                    || digits.starts_with('0')
                    || !digits.bytes().all(|b| b.is_ascii_digit())
                {
                    return None;
                }
                let idx: usize = digits.parse().ok()?;
                match prefix {
                    "x" if idx <= states => Some(idx),
                    "d" if idx <= disturbances => Some(states + idx),
                    _ => None,
                }
            }
        }
    }

    /// Number of variable slots an evaluation needs.
    pub fn slots(&self) -> usize {
        match *self {
            Scope::Scalar => 1,
            Scope::TwoArg => 2,
            Scope::System {
                states,
                disturbances,
            } => 1 + states + disturbances,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
    Sqrt,
    Min,
    Max,
    Tanh,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "min" => Func::Min,
            "max" => Func::Max,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Min => "min",
            Func::Max => "max",
            Func::Tanh => "tanh",
        }
    }

    fn apply(self, args: &[f64]) -> f64 {
        match self {
            Func::Sin => args[0].sin(),
            Func::Cos => args[0].cos(),
            Func::Exp => args[0].exp(),
            Func::Log => args[0].ln(),
            Func::Abs => args[0].abs(),
            Func::Sqrt => args[0].sqrt(),
            Func::Min => args[0].min(args[1]),
            Func::Max => args[0].max(args[1]),
            Func::Tanh => args[0].tanh(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
            BinOp::Pow => {
                if b.fract() == 0.0 && b.abs() <= 64.0 {
                    a.powi(b as i32)
                } else {
                    a.powf(b)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    pub fn eval(&self, vars: &[f64]) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Var(i) => vars[*i],
            Node::Neg(a) => -a.eval(vars),
            Node::Binary(op, a, b) => op.apply(a.eval(vars), b.eval(vars)),
            Node::Call(f, args) => match args.as_slice() {
                [a] => f.apply(&[a.eval(vars)]),
                [a, b] => f.apply(&[a.eval(vars), b.eval(vars)]),
                _ => unreachable!("arity checked at parse time"),
            },
        }
    }

    fn fold(self) -> Node {
        match self {
            Node::Neg(a) => match a.fold() {
                Node::Const(c) => Node::Const(-c),
                other => Node::Neg(Box::new(other)),
            },
            Node::Binary(op, a, b) => match (a.fold(), b.fold()) {
                (Node::Const(x), Node::Const(y)) => Node::Const(op.apply(x, y)),
                (x, y) => Node::Binary(op, Box::new(x), Box::new(y)),
            },
            Node::Call(f, args) => {
                let args: Vec<Node> = args.into_iter().map(Node::fold).collect();
                if args.iter().all(|a| matches!(a, Node::Const(_))) {
                    let vals: Vec<f64> = args
                        .iter()
                        .map(|a| match a {
                            Node::Const(c) => *c,
                            _ => unreachable!(),
                        })
                        .collect();
                    Node::Const(f.apply(&vals))
                } else {
                    Node::Call(f, args)
                }
            }
            leaf => leaf,
        }
    }

    fn uses_vars(&self) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(_) => true,
            Node::Neg(a) => a.uses_vars(),
            Node::Binary(_, a, b) => a.uses_vars() || b.uses_vars(),
            Node::Call(_, args) => args.iter().any(Node::uses_vars),
        }
    }
}

/// A parsed, constant-folded expression together with its source text.
#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    scope: Scope,
    root: Node,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source && self.scope == other.scope
    }
}

impl Expr {
    pub fn parse(source: &str, scope: Scope) -> Result<Expr> {
        let tokens = tokenize(source)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            scope,
        };
        let root = p.expr()?;
        p.expect_end()?;
        Ok(Expr {
            source: source.to_string(),
            scope,
            root: root.fold(),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// True when folding reduced the whole expression to a constant.
    pub fn is_constant(&self) -> bool {
        !self.root.uses_vars()
    }

    /// Evaluate with variables laid out per [`Scope::slots`].
    pub fn eval(&self, vars: &[f64]) -> f64 {
        debug_assert!(vars.len() >= self.scope.slots());
        self.root.eval(vars)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

/// Parse a system right-hand side over `t, x1..xn, d1..dm`.
pub fn parse_rhs(source: &str, dimension: usize, disturbance_dim: usize) -> Result<Expr> {
    Expr::parse(
        source,
        Scope::System {
            states: dimension,
            disturbances: disturbance_dim,
        },
    )
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
    Comma,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token {
                tok,
                line: tl,
                column: tc,
            });
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
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
            let value: f64 = text.parse().map_err(|_| Error::Syntax {
                line: tl,
                column: tc,
                message: format!("malformed number `{text}`"),
            })?;
            col += i - start;
            out.push(Token {
                tok: Tok::Num(value),
                line: tl,
                column: tc,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: tl,
                column: tc,
            });
            continue;
        }
        return Err(Error::Syntax {
            line: tl,
            column: tc,
            message: format!("unexpected character `{c}`"),
        });
    }
    out.push(Token {
        tok: Tok::End,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    scope: Scope,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, tok: &Token, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            line: tok.line,
            column: tok.column,
            message: message.into(),
        })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        let t = self.bump();
        if t.tok == want {
            Ok(())
        } else {
            self.syntax(&t, format!("expected {what}, found {:?}", t.tok))
        }
    }

    fn expect_end(&mut self) -> Result<()> {
        let t = self.peek().clone();
        if t.tok == Tok::End {
            Ok(())
        } else {
            self.syntax(&t, format!("unexpected trailing token {:?}", t.tok))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Node> {
        let negate = if self.peek().tok == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let mut base = self.atom()?;
        if self.peek().tok == Tok::Caret {
            self.bump();
            let exponent = self.atom()?;
            base = Node::Binary(BinOp::Pow, Box::new(base), Box::new(exponent));
        }
        Ok(if negate {
            Node::Neg(Box::new(base))
        } else {
            base
        })
    }

    fn atom(&mut self) -> Result<Node> {
        let t = self.bump();
        match &t.tok {
            Tok::Num(v) => Ok(Node::Const(*v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(ref name) => {
                if self.peek().tok == Tok::LParen {
                    let func = Func::lookup(name).ok_or_else(|| Error::UnknownFunction {
                        name: name.clone(),
                        line: t.line,
                        column: t.column,
                    })?;
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while self.peek().tok == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen, "`)` after arguments")?;
                    if args.len() != func.arity() {
                        return Err(Error::Arity {
                            name: func.name().to_string(),
                            expected: func.arity(),
                            got: args.len(),
                        });
                    }
                    Ok(Node::Call(func, args))
                } else {
                    self.scope
                        .resolve(name)
                        .map(Node::Var)
                        .ok_or_else(|| Error::UnknownIdentifier {
                            name: name.clone(),
                            line: t.line,
                            column: t.column,
                        })
                }
            }
            other => self.syntax(&t, format!("expected an operand, found {other:?}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(src: &str, n: usize, m: usize) -> Result<Expr> {
        parse_rhs(src, n, m)
    }

    #[test]
    fn negated_state_evaluates() {
        let e = sys("-x1", 1, 0).unwrap();
        assert_eq!(e.eval(&[0.0, 2.0]), -2.0);
    }

    #[test]
    fn bilinear_rhs_is_valid() {
        let e = sys("x1*d1 - x2", 2, 1).unwrap();
        // slots: t, x1, x2, d1
        assert_eq!(e.eval(&[0.0, 3.0, 1.0, 2.0]), 5.0);
    }

    #[test]
    fn out_of_range_state_is_unknown() {
        match sys("x3", 2, 0) {
            Err(Error::UnknownIdentifier { name, line, column }) => {
                assert_eq!(name, "x3");
                assert_eq!((line, column), (1, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(sys("d1", 1, 0).is_err());
        assert!(sys("x0", 1, 0).is_err());
        assert!(sys("x01", 1, 0).is_err());
        assert!(sys("y", 1, 0).is_err());
    }

    #[test]
    fn syntax_errors_carry_position() {
        match sys("x1 +\n  * 2", 1, 0) {
            Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(sys("(x1", 1, 0), Err(Error::Syntax { .. })));
        assert!(matches!(sys("x1 x1", 1, 0), Err(Error::Syntax { .. })));
        assert!(matches!(sys("x1 # 2", 1, 0), Err(Error::Syntax { .. })));
        assert!(matches!(sys("2^3^2", 1, 0), Err(Error::Syntax { .. })));
    }

    #[test]
    fn function_errors() {
        assert!(matches!(sys("foo(x1)", 1, 0), Err(Error::UnknownFunction { .. })));
        assert!(matches!(
            sys("min(x1)", 1, 0),
            Err(Error::Arity { expected: 2, got: 1, .. })
        ));
        assert!(matches!(
            sys("exp(x1, 2)", 1, 0),
            Err(Error::Arity { expected: 1, got: 2, .. })
        ));
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = Expr::parse("-r^2 + 3*r - 4/2", Scope::Scalar).unwrap();
        assert_eq!(e.eval(&[3.0]), -9.0 + 9.0 - 2.0);
        let e = Expr::parse("2*(r+1)^2", Scope::Scalar).unwrap();
        assert_eq!(e.eval(&[1.0]), 8.0);
        let e = Expr::parse("1 - -r", Scope::Scalar).unwrap();
        assert_eq!(e.eval(&[2.0]), 3.0);
    }

    #[test]
    fn constant_folding() {
        let e = Expr::parse("2*3 + exp(0) - min(1, 2)", Scope::Scalar).unwrap();
        assert!(e.is_constant());
        assert_eq!(e.root(), &Node::Const(6.0));
        let e = Expr::parse("r*(2+3)", Scope::Scalar).unwrap();
        assert!(!e.is_constant());
        assert_eq!(
            e.root(),
            &Node::Binary(BinOp::Mul, Box::new(Node::Var(0)), Box::new(Node::Const(5.0)))
        );
    }

    #[test]
    fn scientific_numbers_and_functions() {
        let e = Expr::parse("1.5e-1*r + sqrt(4) + tanh(0) + abs(-1) + log(1)", Scope::Scalar)
            .unwrap();
        assert!((e.eval(&[10.0]) - 4.5).abs() < 1e-15);
        let e = Expr::parse("r*exp(-t)", Scope::TwoArg).unwrap();
        assert_eq!(e.eval(&[2.0, 0.0]), 2.0);
        assert!(Expr::parse("x1", Scope::TwoArg).is_err());
    }
}
