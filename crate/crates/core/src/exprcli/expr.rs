use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output range of `atan2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Atan2Range {
    /// `(−π, π]`
    #[default]
    #[serde(rename = "pmpi")]
    Pmpi,
    /// `[0, 2π)`
    #[serde(rename = "0..2pi")]
    ZeroTwoPi,
}

impl std::str::FromStr for Atan2Range {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pmpi" | "-pi..pi" => Ok(Atan2Range::Pmpi),
            "0..2pi" => Ok(Atan2Range::ZeroTwoPi),
            other => Err(Error::InvalidArgument(format!(
                "atan2 range must be `pmpi` or `0..2pi`, got `{other}`"
            ))),
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
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Atan2,
    Min,
    Max,
    If,
}

impl Func {
    const ALL: [Func; 10] = [
        Func::Abs,
        Func::Sqrt,
        Func::Exp,
        Func::Log,
        Func::Sin,
        Func::Cos,
        Func::Atan2,
        Func::Min,
        Func::Max,
        Func::If,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Atan2 => "atan2",
            Func::Min => "min",
            Func::Max => "max",
            Func::If => "if",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Atan2 | Func::Min | Func::Max => 2,
            Func::If => 3,
            _ => 1,
        }
    }

    fn lookup(name: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Bool(bool),
    Pi,
    /// Zero-based coordinate index; printed as `x1`, `x2`, ….
    Var(usize),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

// ---------------------------------------------------------------- lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    And,
    Or,
    Not,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let start = (line, col);
        let push = |out: &mut Vec<Token>, tok| {
            out.push(Token {
                tok,
                line: start.0,
                col: start.1,
            })
        };
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                j += 1;
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            let text: String = chars[i..j].iter().collect();
            let v: f64 = text
                .parse()
                .map_err(|_| syntax(line, col, format!("malformed number `{text}`")))?;
            push(&mut out, Tok::Num(v));
            col += j - i;
            i = j;
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            let tok = match word.as_str() {
                "and" => Tok::And,
                "or" => Tok::Or,
                "not" => Tok::Not,
                _ => Tok::Ident(word),
            };
            push(&mut out, tok);
            col += j - i;
            i = j;
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, len) = match (c, next) {
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('=', Some('=')) => (Tok::EqEq, 2),
            ('!', Some('=')) => (Tok::Ne, 2),
            ('&', Some('&')) => (Tok::And, 2),
            ('|', Some('|')) => (Tok::Or, 2),
            ('≤', _) => (Tok::Le, 1),
            ('≥', _) => (Tok::Ge, 1),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            ('!', _) => (Tok::Not, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            (',', _) => (Tok::Comma, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) | ('−', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('/', _) => (Tok::Slash, 1),
            ('^', _) => (Tok::Caret, 1),
            _ => return Err(syntax(line, col, format!("unexpected character `{c}`"))),
        };
        push(&mut out, tok);
        i += len;
        col += len;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

// ---------------------------------------------------------------- parser

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self) -> Error {
        let t = &self.toks[self.pos];
        let what = match &t.tok {
            Tok::Eof => "unexpected end of input".to_string(),
            other => format!("unexpected token {other:?}"),
        };
        syntax(t.line, t.col, what)
    }

    fn expect(&mut self, tok: Tok) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn or(&mut self) -> Result<Expr> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.and()?;
            lhs = Expr::Bin(BinOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr> {
        let mut lhs = self.not()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.not()?;
            lhs = Expr::Bin(BinOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Not {
            self.bump();
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr> {
        let lhs = self.add()?;
        let op = match self.peek() {
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::EqEq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.add()?;
        Ok(Expr::Bin(op, Box::new(lhs), Box::new(rhs)))
    }

    fn add(&mut self) -> Result<Expr> {
        let mut lhs = self.mul()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.mul()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn mul(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.pow()
    }

    fn pow(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let t = self.bump();
        match t.tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.or()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    let func = Func::lookup(&name).ok_or_else(|| Error::UnknownIdentifier {
                        name: name.clone(),
                        column: t.col,
                    })?;
                    self.bump();
                    let mut args = Vec::new();
                    if *self.peek() != Tok::RParen {
                        loop {
                            args.push(self.or()?);
                            if *self.peek() == Tok::Comma {
                                self.bump();
                                continue;
                            }
                            break;
                        }
                    }
                    self.expect(Tok::RParen)?;
                    if args.len() != func.arity() {
                        return Err(Error::Arity {
                            name,
                            expected: func.arity(),
                            got: args.len(),
                        });
                    }
                    return Ok(Expr::Call(func, args));
                }
                match name.as_str() {
                    "pi" => return Ok(Expr::Pi),
                    "true" => return Ok(Expr::Bool(true)),
                    "false" => return Ok(Expr::Bool(false)),
                    _ => {}
                }
                if let Some(k) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                    if k >= 1 && k <= self.dim && !name[1..].starts_with('0') {
                        return Ok(Expr::Var(k - 1));
                    }
                }
                Err(Error::UnknownIdentifier {
                    name,
                    column: t.col,
                })
            }
            Tok::Eof => Err(syntax(t.line, t.col, "unexpected end of input")),
            other => Err(syntax(t.line, t.col, format!("unexpected token {other:?}"))),
        }
    }
}

/// Parses `src` as an expression over the variables `x1..x{dim}`.
pub fn parse(src: &str, dim: usize) -> Result<Expr> {
    if src.trim().is_empty() {
        return Err(syntax(1, 1, "empty expression"));
    }
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, dim };
    let e = p.or()?;
    if *p.peek() != Tok::Eof {
        return Err(p.unexpected());
    }
    Ok(e)
}

// ---------------------------------------------------------------- printer

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin(op, ..) => match op {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div => 6,
            BinOp::Pow => 8,
        },
        Expr::Not(_) => 3,
        Expr::Neg(_) => 7,
        Expr::Num(v) if *v < 0.0 || v.is_sign_negative() => 7,
        _ => 9,
    }
}

fn op_str(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "+",
        BinOp::Sub => "-",
        BinOp::Mul => "*",
        BinOp::Div => "/",
        BinOp::Pow => "^",
        BinOp::Lt => "<",
        BinOp::Le => "<=",
        BinOp::Gt => ">",
        BinOp::Ge => ">=",
        BinOp::Eq => "==",
        BinOp::Ne => "!=",
        BinOp::And => "and",
        BinOp::Or => "or",
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool) -> fmt::Result {
    if paren {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Pi => write!(f, "pi"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => {
                write!(f, "-")?;
                write_child(f, a, prec(a) < 7)
            }
            Expr::Not(a) => {
                write!(f, "not ")?;
                write_child(f, a, prec(a) < 3)
            }
            Expr::Bin(op, a, b) => {
                let p = prec(self);
                let (lp, rp) = match op {
                    BinOp::Pow => (prec(a) < 9, prec(b) < 7),
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => {
                        (prec(a) <= p, prec(b) <= p)
                    }
                    _ => (prec(a) < p, prec(b) <= p),
                };
                write_child(f, a, lp)?;
                if *op == BinOp::Pow {
                    write!(f, "^")?;
                } else {
                    write!(f, " {} ", op_str(*op))?;
                }
                write_child(f, b, rp)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

// ---------------------------------------------------------------- evaluation

#[inline]
fn truthy(v: f64) -> bool {
    v != 0.0
}

#[inline]
fn from_bool(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn apply_bin(op: BinOp, a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        return f64::NAN;
    }
    match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b == 0.0 {
                f64::NAN
            } else {
                a / b
            }
        }
        BinOp::Pow => {
            if a == 0.0 && b < 0.0 {
                f64::NAN
            } else {
                a.powf(b)
            }
        }
        BinOp::Lt => from_bool(a < b),
        BinOp::Le => from_bool(a <= b),
        BinOp::Gt => from_bool(a > b),
        BinOp::Ge => from_bool(a >= b),
        BinOp::Eq => from_bool(a == b),
        BinOp::Ne => from_bool(a != b),
        BinOp::And => from_bool(truthy(a) && truthy(b)),
        BinOp::Or => from_bool(truthy(a) || truthy(b)),
    }
}

fn atan2_in(y: f64, x: f64, range: Atan2Range) -> f64 {
    let t = y.atan2(x);
    match range {
        Atan2Range::Pmpi => {
            if t == -PI {
                PI
            } else {
                t
            }
        }
        Atan2Range::ZeroTwoPi => {
            if t < 0.0 {
                let w = t + TAU;
                if w >= TAU {
                    0.0
                } else {
                    w
                }
            } else {
                t
            }
        }
    }
}

fn apply_call(func: Func, a: &[f64], range: Atan2Range) -> f64 {
    if func == Func::If {
        if a[0].is_nan() {
            return f64::NAN;
        }
        return if truthy(a[0]) { a[1] } else { a[2] };
    }
    if a.iter().any(|v| v.is_nan()) {
        return f64::NAN;
    }
    match func {
        Func::Abs => a[0].abs(),
        Func::Sqrt => a[0].sqrt(),
        Func::Exp => a[0].exp(),
        Func::Log => {
            if a[0] > 0.0 {
                a[0].ln()
            } else {
                f64::NAN
            }
        }
        Func::Sin => a[0].sin(),
        Func::Cos => a[0].cos(),
        Func::Atan2 => atan2_in(a[0], a[1], range),
        Func::Min => a[0].min(a[1]),
        Func::Max => a[0].max(a[1]),
        Func::If => unreachable!(),
    }
}

impl Expr {
    /// Direct recursive evaluation; the compiled [`Program`] is the fast path.
    pub fn eval_tree(&self, x: &[f64], range: Atan2Range) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Bool(b) => from_bool(*b),
            Expr::Pi => PI,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval_tree(x, range),
            Expr::Not(a) => {
                let v = a.eval_tree(x, range);
                if v.is_nan() {
                    v
                } else {
                    from_bool(!truthy(v))
                }
            }
            Expr::Bin(op, a, b) => apply_bin(*op, a.eval_tree(x, range), b.eval_tree(x, range)),
            Expr::Call(func, args) => {
                let vals: Vec<f64> = args.iter().map(|a| a.eval_tree(x, range)).collect();
                apply_call(*func, &vals, range)
            }
        }
    }

    /// Largest variable index used plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Not(a) => a.arity(),
            Expr::Bin(_, a, b) => a.arity().max(b.arity()),
            Expr::Call(_, args) => args.iter().map(Expr::arity).max().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn compile(&self, dim: usize, range: Atan2Range) -> Program {
        let mut ops = Vec::new();
        emit(self, &mut ops);
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &ops {
            depth = depth + 1 - op.pops();
            max_depth = max_depth.max(depth);
        }
        Program {
            ops,
            max_stack: max_depth.max(1),
            dim,
            range,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Neg,
    Not,
    Bin(BinOp),
    Call(Func),
}

impl Op {
    fn pops(self) -> usize {
        match self {
            Op::Const(_) | Op::Var(_) => 0,
            Op::Neg | Op::Not => 1,
            Op::Bin(_) => 2,
            Op::Call(f) => f.arity(),
        }
    }
}

fn emit(e: &Expr, ops: &mut Vec<Op>) {
    match e {
        Expr::Num(v) => ops.push(Op::Const(*v)),
        Expr::Bool(b) => ops.push(Op::Const(from_bool(*b))),
        Expr::Pi => ops.push(Op::Const(PI)),
        Expr::Var(i) => ops.push(Op::Var(*i)),
        Expr::Neg(a) => {
            emit(a, ops);
            ops.push(Op::Neg);
        }
        Expr::Not(a) => {
            emit(a, ops);
            ops.push(Op::Not);
        }
        Expr::Bin(op, a, b) => {
            emit(a, ops);
            emit(b, ops);
            ops.push(Op::Bin(*op));
        }
        Expr::Call(f, args) => {
            for a in args {
                emit(a, ops);
            }
            ops.push(Op::Call(*f));
        }
    }
}

/// Stack-machine form of an [`Expr`]; cheap to evaluate and shareable across threads.
#[derive(Debug, Clone)]
pub struct Program {
    ops: Vec<Op>,
    max_stack: usize,
    dim: usize,
    range: Atan2Range,
}

const INLINE_STACK: usize = 32;

impl Program {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atan2_range(&self) -> Atan2Range {
        self.range
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.max_stack <= INLINE_STACK {
            let mut stack = [0.0f64; INLINE_STACK];
            self.run(x, &mut stack)
        } else {
            let mut stack = vec![0.0; self.max_stack];
            self.run(x, &mut stack)
        }
    }

    fn run(&self, x: &[f64], stack: &mut [f64]) -> f64 {
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Const(v) => {
                    stack[sp] = v;
                    sp += 1;
                }
                Op::Var(i) => {
                    stack[sp] = x[i];
                    sp += 1;
                }
                Op::Neg => stack[sp - 1] = -stack[sp - 1],
                Op::Not => {
                    let v = stack[sp - 1];
                    stack[sp - 1] = if v.is_nan() { v } else { from_bool(!truthy(v)) };
                }
                Op::Bin(b) => {
                    let r = apply_bin(b, stack[sp - 2], stack[sp - 1]);
                    sp -= 1;
                    stack[sp - 1] = r;
                }
                Op::Call(f) => {
                    let n = f.arity();
                    let r = apply_call(f, &stack[sp - n..sp], self.range);
                    sp -= n - 1;
                    stack[sp - 1] = r;
                }
            }
        }
        stack[0]
    }

    /// Value and forward-mode gradient. One-sided conventions at kinks:
    /// `abs'(0) = 0`, `max`/`min` take the first argument on ties.
    pub fn eval_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.dim;
        let mut vals = vec![0.0; self.max_stack];
        let mut grads = vec![0.0; self.max_stack * n];
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Const(v) => {
                    vals[sp] = v;
                    grads[sp * n..(sp + 1) * n].fill(0.0);
                    sp += 1;
                }
                Op::Var(i) => {
                    vals[sp] = x[i];
                    let g = &mut grads[sp * n..(sp + 1) * n];
                    g.fill(0.0);
                    g[i] = 1.0;
                    sp += 1;
                }
                Op::Neg => {
                    vals[sp - 1] = -vals[sp - 1];
                    grads[(sp - 1) * n..sp * n]
                        .iter_mut()
                        .for_each(|g| *g = -*g);
                }
                Op::Not => {
                    let v = vals[sp - 1];
                    vals[sp - 1] = if v.is_nan() { v } else { from_bool(!truthy(v)) };
                    grads[(sp - 1) * n..sp * n].fill(0.0);
                }
                Op::Bin(b) => {
                    let (a, c) = (vals[sp - 2], vals[sp - 1]);
                    let v = apply_bin(b, a, c);
                    let (lo, hi) = grads.split_at_mut((sp - 1) * n);
                    let ga = &mut lo[(sp - 2) * n..];
                    let gc = &hi[..n];
                    for k in 0..n {
                        ga[k] = match b {
                            BinOp::Add => ga[k] + gc[k],
                            BinOp::Sub => ga[k] - gc[k],
                            BinOp::Mul => ga[k] * c + a * gc[k],
                            BinOp::Div => (ga[k] * c - a * gc[k]) / (c * c),
                            BinOp::Pow => {
                                let mut d = if ga[k] != 0.0 {
                                    c * a.powf(c - 1.0) * ga[k]
                                } else {
                                    0.0
                                };
                                if gc[k] != 0.0 {
                                    d += v * a.ln() * gc[k];
                                }
                                d
                            }
                            _ => 0.0,
                        };
                    }
                    sp -= 1;
                    vals[sp - 1] = v;
                }
                Op::Call(f) => {
                    let m = f.arity();
                    let base = sp - m;
                    let args: Vec<f64> = vals[base..sp].to_vec();
                    let v = apply_call(f, &args, self.range);
                    let a = args[0];
                    let (dst, rest) = grads.split_at_mut((base + 1) * n);
                    let g0 = &mut dst[base * n..];
                    match f {
                        Func::Abs => {
                            let s = if a > 0.0 {
                                1.0
                            } else if a < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            g0.iter_mut().for_each(|g| *g *= s);
                        }
                        Func::Sqrt => {
                            let s = 0.5 / a.sqrt();
                            g0.iter_mut().for_each(|g| *g *= s);
                        }
                        Func::Exp => g0.iter_mut().for_each(|g| *g *= v),
                        Func::Log => g0.iter_mut().for_each(|g| *g /= a),
                        Func::Sin => {
                            let s = a.cos();
                            g0.iter_mut().for_each(|g| *g *= s);
                        }
                        Func::Cos => {
                            let s = -a.sin();
                            g0.iter_mut().for_each(|g| *g *= s);
                        }
                        Func::Atan2 => {
                            let xx = args[1];
                            let r2 = a * a + xx * xx;
                            let g1 = &rest[..n];
                            for k in 0..n {
                                g0[k] = (xx * g0[k] - a * g1[k]) / r2;
                            }
                        }
                        Func::Min | Func::Max => {
                            let take_first = if f == Func::Max {
                                a >= args[1]
                            } else {
                                a <= args[1]
                            };
                            if !take_first {
                                g0.copy_from_slice(&rest[..n]);
                            }
                        }
                        Func::If => {
                            if truthy(a) {
                                g0.copy_from_slice(&rest[..n]);
                            } else {
                                g0.copy_from_slice(&rest[n..2 * n]);
                            }
                        }
                    }
                    sp = base + 1;
                    vals[base] = v;
                }
            }
        }
        grad[..n].copy_from_slice(&grads[..n]);
        vals[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(src: &str, x: &[f64]) -> f64 {
        parse(src, x.len())
            .unwrap()
            .compile(x.len(), Atan2Range::Pmpi)
            .eval(x)
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("-2^2", &[0.0]), -4.0);
        assert_eq!(ev("2^3^2", &[0.0]), 512.0);
        assert_eq!(ev("1 + 2 * 3", &[0.0]), 7.0);
        assert_eq!(ev("2^-1", &[0.0]), 0.5);
        assert_eq!(ev("1 < 2 and not 3 < 2 or false", &[0.0]), 1.0);
        assert_eq!(ev("x1 > 0 and x2 > 0", &[1.0, -1.0]), 0.0);
    }

    #[test]
    fn singular_field_parses() {
        let e = parse("1/sqrt(atan2(x2,x1))", 2).unwrap();
        let p = e.compile(2, Atan2Range::ZeroTwoPi);
        let v = p.eval(&[0.0, -1.0]);
        assert!((v - 1.0 / (1.5 * PI).sqrt()).abs() < 1e-15);
        assert!(e.compile(2, Atan2Range::Pmpi).eval(&[0.0, -1.0]).is_nan());
    }

    #[test]
    fn step_field_and_if() {
        assert_eq!(ev("if(x1>0, 1, 0)", &[0.3]), 1.0);
        assert_eq!(ev("if(x1>0, 1, 0)", &[-0.3]), 0.0);
        assert_eq!(ev("if(x1>0, sqrt(x1), 0)", &[-1.0]), 0.0);
    }

    #[test]
    fn errors_are_positioned() {
        match parse("max(x1,", 2) {
            Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (1, 8)),
            other => panic!("{other:?}"),
        }
        match parse("x1 +\n  * 2", 1) {
            Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse("max(x1)", 1),
            Err(Error::Arity {
                expected: 2,
                got: 1,
                ..
            })
        ));
        assert!(matches!(
            parse("x3", 2),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            parse("foo(1)", 2),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            parse("x1 x2", 2),
            Err(Error::Syntax { column: 4, .. })
        ));
        assert!(parse("   ", 2).is_err());
    }

    #[test]
    fn tagged_nan() {
        assert!(ev("1/x1", &[0.0]).is_nan());
        assert!(ev("log(x1)", &[-1.0]).is_nan());
        assert!(ev("sqrt(x1) > 0", &[-1.0]).is_nan());
    }

    #[test]
    fn atan2_ranges() {
        let p = parse("atan2(x2, x1)", 2).unwrap();
        let a = p.compile(2, Atan2Range::Pmpi);
        let b = p.compile(2, Atan2Range::ZeroTwoPi);
        assert_eq!(a.eval(&[-1.0, -0.0]), PI);
        assert_eq!(b.eval(&[1.0, -0.0]), 0.0);
        assert!((b.eval(&[0.0, -1.0]) - 1.5 * PI).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let srcs = [
            "x1^2 + x2*x1",
            "sin(x1)*exp(x2)",
            "atan2(x2, x1)",
            "sqrt(x1^2 + x2^2 + 1)",
            "log(2 + x1) / (3 + x2)",
            "max(x1, x2) + min(x1, -x2)",
            "x1^x2",
        ];
        let x = [0.7, 0.4];
        for s in srcs {
            let p = parse(s, 2).unwrap().compile(2, Atan2Range::Pmpi);
            let mut g = [0.0; 2];
            p.eval_grad(&x, &mut g);
            for k in 0..2 {
                let h = 1e-6;
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let fd = (p.eval(&xp) - p.eval(&xm)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-6, "{s}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn kink_conventions() {
        let p = parse("abs(x1)", 1).unwrap().compile(1, Atan2Range::Pmpi);
        let mut g = [9.0];
        p.eval_grad(&[0.0], &mut g);
        assert_eq!(g[0], 0.0);
        p.eval_grad(&[-0.1], &mut g);
        assert_eq!(g[0], -1.0);
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..10.0).prop_map(|v| Expr::Num((v * 100.0).round() / 100.0)),
            (0usize..2).prop_map(Expr::Var),
            Just(Expr::Pi),
            any::<bool>().prop_map(Expr::Bool),
        ];
        leaf.prop_recursive(4, 32, 3, |inner| {
            let ops = [
                BinOp::Add,
                BinOp::Sub,
                BinOp::Mul,
                BinOp::Div,
                BinOp::Pow,
                BinOp::Lt,
                BinOp::Ge,
                BinOp::Ne,
                BinOp::And,
                BinOp::Or,
            ];
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                inner.clone().prop_map(|a| Expr::Not(Box::new(a))),
                (0usize..ops.len(), inner.clone(), inner.clone())
                    .prop_map(move |(i, a, b)| Expr::Bin(ops[i], Box::new(a), Box::new(b))),
                (0usize..Func::ALL.len(), prop::collection::vec(inner, 3)).prop_map(
                    |(i, mut v)| {
                        let f = Func::ALL[i];
                        v.truncate(f.arity());
                        Expr::Call(f, v)
                    }
                ),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let back = parse(&printed, 2).unwrap();
            prop_assert_eq!(&back, &e, "printed: {}", printed);
        }

        #[test]
        fn compiled_matches_tree(e in arb_expr(), x1 in -3.0f64..3.0, x2 in -3.0f64..3.0) {
            let x = [x1, x2];
            for r in [Atan2Range::Pmpi, Atan2Range::ZeroTwoPi] {
                let a = e.eval_tree(&x, r);
                let b = e.compile(2, r).eval(&x);
                prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
            }
        }
    }
}
