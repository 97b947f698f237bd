//! Declarative model files.
//!
//! A model is a sequence of `[section]` blocks with `key = value` lines and
//! `#` comments:
//!
//! ```text
//! [parameters]
//! kappa = 1.0
//! alpha = [0.2, 0.0]          # complex scalars are [re, im]
//!
//! [spaces]                    # tensor factors, in order
//! cavity = fock(6)            # qubit | spin | level(d) | fock(n)
//!
//! [operators]
//! a = annihilator(cavity)
//!
//! [family]
//! channels = 1
//! L1[0] = zero()
//! L0[0] = sqrt(kappa) * a
//! H2 = adjoint(a) * adjoint(a) * a * a
//! H1 = zero()
//! H0 = zero()
//!
//! [subspace]
//! zeno = basis(0, 1)          # auto | basis(i, ...) | states([i, j], ...)
//! ```
//!
//! Operator primitives (`annihilator`, `pauli`, `ketbra`) act on a named factor
//! and are embedded in the full space. `tensor(x, y)` requires `x` and `y` to
//! act on disjoint factors. Scattering entries `S[i][j]` default to the
//! identity matrix when the section has none.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_complex::Complex64;

use crate::error::Error;
use crate::operator_algebra::{
    fock_annihilator, pauli, HilbertSpace, Operator, PauliAxis, SubspaceIsometry, ZenoSplit,
    DEFAULT_KERNEL_TOL,
};
use crate::slh_model::VALIDATION_WARN_LIMIT;
use crate::zeno_elimination::{find_zeno_subspace, ScaledSlhFamily};

/// Diagnostic with a 1-based source position.
#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

type PResult<T> = std::result::Result<T, ParseError>;

fn err<T>(pos: Pos, message: impl Into<String>) -> PResult<T> {
    Err(ParseError { line: pos.line, column: pos.column, message: message.into() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
}

fn tokenize(text: &str, line: usize, offset: usize) -> PResult<Vec<(Token, Pos)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        let pos = Pos { line, column: offset + i + 1 };
        if ch.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match ch {
            '(' => Some(Token::LParen),
            ')' => Some(Token::RParen),
            '[' => Some(Token::LBracket),
            ']' => Some(Token::RBracket),
            ',' => Some(Token::Comma),
            '+' => Some(Token::Plus),
            '-' => Some(Token::Minus),
            '*' => Some(Token::Star),
            '/' => Some(Token::Slash),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, pos));
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let literal: String = chars[start..i].iter().collect();
            match literal.parse::<f64>() {
                Ok(v) => out.push((Token::Number(v), pos)),
                Err(_) => return err(pos, format!("malformed number {literal:?}")),
            }
        } else if ch.is_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Token::Ident(chars[start..i].iter().collect()), pos));
        } else {
            return err(pos, format!("unexpected character {ch:?}"));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExprKind {
    Number(f64),
    /// `[a, b, ...]`; a pair is a complex scalar.
    List(Vec<f64>),
    Ident(String),
    Call(String, Vec<Expr>),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
}

/// Expression with the position of its first token.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

fn fmt_number(v: f64) -> String {
    format!("{v:?}")
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Number(v) => f.write_str(&fmt_number(*v)),
            ExprKind::List(vs) => {
                let parts: Vec<String> = vs.iter().map(|v| fmt_number(*v)).collect();
                write!(f, "[{}]", parts.join(", "))
            }
            ExprKind::Ident(name) => f.write_str(name),
            ExprKind::Call(name, args) => {
                let parts: Vec<String> = args.iter().map(|a| a.to_string()).collect();
                write!(f, "{name}({})", parts.join(", "))
            }
            ExprKind::Neg(x) => write!(f, "(-{x})"),
            ExprKind::Add(a, b) => write!(f, "({a} + {b})"),
            ExprKind::Sub(a, b) => write!(f, "({a} - {b})"),
            ExprKind::Mul(a, b) => write!(f, "({a} * {b})"),
            ExprKind::Div(a, b) => write!(f, "({a} / {b})"),
        }
    }
}

struct Parser {
    tokens: Vec<(Token, Pos)>,
    at: usize,
    end: Pos,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.at).map(|(t, _)| t)
    }

    fn pos(&self) -> Pos {
        self.tokens.get(self.at).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<(Token, Pos)> {
        let t = self.tokens.get(self.at).cloned();
        self.at += 1;
        t
    }

    fn expect(&mut self, want: Token, what: &str) -> PResult<()> {
        let pos = self.pos();
        match self.next() {
            Some((t, _)) if t == want => Ok(()),
            _ => err(pos, format!("expected {what}")),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Token::Plus) => ExprKind::Add as fn(Box<Expr>, Box<Expr>) -> ExprKind,
                Some(Token::Minus) => ExprKind::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.term()?;
            let pos = lhs.pos;
            lhs = Expr { kind: op(Box::new(lhs), Box::new(rhs)), pos };
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Token::Star) => ExprKind::Mul as fn(Box<Expr>, Box<Expr>) -> ExprKind,
                Some(Token::Slash) => ExprKind::Div,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.unary()?;
            let pos = lhs.pos;
            lhs = Expr { kind: op(Box::new(lhs), Box::new(rhs)), pos };
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.peek() == Some(&Token::Minus) {
            let pos = self.pos();
            self.next();
            let inner = self.unary()?;
            return Ok(Expr { kind: ExprKind::Neg(Box::new(inner)), pos });
        }
        self.primary()
    }

    fn signed_number(&mut self) -> PResult<f64> {
        let pos = self.pos();
        let sign = if self.peek() == Some(&Token::Minus) {
            self.next();
            -1.0
        } else {
            1.0
        };
        match self.next() {
            Some((Token::Number(v), _)) => Ok(sign * v),
            _ => err(pos, "expected a number"),
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        match self.next() {
            Some((Token::Number(v), _)) => Ok(Expr { kind: ExprKind::Number(v), pos }),
            Some((Token::LBracket, _)) => {
                let mut values = vec![self.signed_number()?];
                while self.peek() == Some(&Token::Comma) {
                    self.next();
                    values.push(self.signed_number()?);
                }
                self.expect(Token::RBracket, "']'")?;
                Ok(Expr { kind: ExprKind::List(values), pos })
            }
            Some((Token::LParen, _)) => {
                let inner = self.expr()?;
                self.expect(Token::RParen, "')'")?;
                Ok(inner)
            }
            Some((Token::Ident(name), _)) => {
                if self.peek() != Some(&Token::LParen) {
                    return Ok(Expr { kind: ExprKind::Ident(name), pos });
                }
                self.next();
                let mut args = Vec::new();
                if self.peek() != Some(&Token::RParen) {
                    args.push(self.expr()?);
                    while self.peek() == Some(&Token::Comma) {
                        self.next();
                        args.push(self.expr()?);
                    }
                }
                self.expect(Token::RParen, "')'")?;
                Ok(Expr { kind: ExprKind::Call(name, args), pos })
            }
            _ => err(pos, "expected an expression"),
        }
    }
}

fn parse_expr(text: &str, line: usize, offset: usize) -> PResult<Expr> {
    let tokens = tokenize(text, line, offset)?;
    let end = Pos { line, column: offset + text.chars().count() + 1 };
    if tokens.is_empty() {
        return err(end, "missing value");
    }
    let mut p = Parser { tokens, at: 0, end };
    let e = p.expr()?;
    if p.at < p.tokens.len() {
        return err(p.pos(), "unexpected trailing input");
    }
    Ok(e)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    Qubit,
    Spin,
    Level(usize),
    Fock(usize),
}

impl FactorKind {
    pub fn dim(self) -> usize {
        match self {
            FactorKind::Qubit | FactorKind::Spin => 2,
            FactorKind::Level(d) | FactorKind::Fock(d) => d,
        }
    }
}

impl fmt::Display for FactorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FactorKind::Qubit => f.write_str("qubit"),
            FactorKind::Spin => f.write_str("spin"),
            FactorKind::Level(d) => write!(f, "level({d})"),
            FactorKind::Fock(n) => write!(f, "fock({n})"),
        }
    }
}

/// `key = value` entry with source positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry<T> {
    pub name: String,
    pub value: T,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SubspaceDecl {
    Auto,
    Basis(Vec<usize>),
    States(Vec<Vec<usize>>),
}

/// Family slot name.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    S(usize, usize),
    L1(usize),
    L0(usize),
    H2,
    H1,
    H0,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::S(i, j) => write!(f, "S[{i}][{j}]"),
            Slot::L1(i) => write!(f, "L1[{i}]"),
            Slot::L0(i) => write!(f, "L0[{i}]"),
            Slot::H2 => f.write_str("H2"),
            Slot::H1 => f.write_str("H1"),
            Slot::H0 => f.write_str("H0"),
        }
    }
}

fn parse_slot(key: &str) -> Option<Slot> {
    let idx = |s: &str| -> Option<Vec<usize>> {
        let mut out = Vec::new();
        let mut rest = s;
        while !rest.is_empty() {
            let inner = rest.strip_prefix('[')?;
            let close = inner.find(']')?;
            out.push(inner[..close].trim().parse().ok()?);
            rest = &inner[close + 1..];
        }
        Some(out)
    };
    match key {
        "H2" => return Some(Slot::H2),
        "H1" => return Some(Slot::H1),
        "H0" => return Some(Slot::H0),
        _ => {}
    }
    for (prefix, arity) in [("L1", 1), ("L0", 1), ("S", 2)] {
        if let Some(rest) = key.strip_prefix(prefix) {
            let ix = idx(rest)?;
            if ix.len() != arity {
                return None;
            }
            return Some(match prefix {
                "L1" => Slot::L1(ix[0]),
                "L0" => Slot::L0(ix[0]),
                _ => Slot::S(ix[0], ix[1]),
            });
        }
    }
    None
}

/// A parsed and fully resolved model file.
#[derive(Clone, Debug)]
pub struct ModelDocument {
    pub parameters: Vec<Entry<Complex64>>,
    pub spaces: Vec<Entry<FactorKind>>,
    pub operators: Vec<Entry<Expr>>,
    pub channels: usize,
    pub slots: BTreeMap<Slot, Entry<Expr>>,
    pub subspace: SubspaceDecl,
    space: HilbertSpace,
    operator_table: Vec<(String, Operator)>,
    family: ScaledSlhFamily,
    /// Resolved explicit subspace; `None` for `auto`.
    explicit_split: Option<ZenoSplit>,
}

impl ModelDocument {
    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn family(&self) -> &ScaledSlhFamily {
        &self.family
    }

    /// Zeno split from the subspace section. For `auto` this is the numerical
    /// kernel of `A`, which fails with `TrivialKernel` or `FullKernel` when the
    /// family has no proper Zeno subspace.
    pub fn split(&self) -> crate::error::Result<ZenoSplit> {
        match &self.explicit_split {
            Some(split) => Ok(split.clone()),
            None => find_zeno_subspace(&self.family, DEFAULT_KERNEL_TOL),
        }
    }

    /// Named operators in declaration order, evaluated on the full space.
    pub fn operator_table(&self) -> &[(String, Operator)] {
        &self.operator_table
    }

    /// Canonical text: fixed section order, full-precision numbers, fully
    /// parenthesized expressions.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        out.push_str("[parameters]\n");
        for p in &self.parameters {
            if p.value.im == 0.0 {
                out.push_str(&format!("{} = {}\n", p.name, fmt_number(p.value.re)));
            } else {
                out.push_str(&format!("{} = [{}, {}]\n", p.name, fmt_number(p.value.re), fmt_number(p.value.im)));
            }
        }
        out.push_str("\n[spaces]\n");
        for s in &self.spaces {
            out.push_str(&format!("{} = {}\n", s.name, s.value));
        }
        out.push_str("\n[operators]\n");
        for o in &self.operators {
            out.push_str(&format!("{} = {}\n", o.name, o.value));
        }
        out.push_str(&format!("\n[family]\nchannels = {}\n", self.channels));
        for (slot, e) in &self.slots {
            out.push_str(&format!("{slot} = {}\n", e.value));
        }
        out.push_str("\n[subspace]\nzeno = ");
        match &self.subspace {
            SubspaceDecl::Auto => out.push_str("auto"),
            SubspaceDecl::Basis(ix) => {
                let parts: Vec<String> = ix.iter().map(|i| i.to_string()).collect();
                out.push_str(&format!("basis({})", parts.join(", ")));
            }
            SubspaceDecl::States(states) => {
                let parts: Vec<String> = states
                    .iter()
                    .map(|s| format!("[{}]", s.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")))
                    .collect();
                out.push_str(&format!("states({})", parts.join(", ")));
            }
        }
        out.push('\n');
        out
    }
}

#[derive(Clone, Debug)]
enum Value {
    Scalar(Complex64),
    /// Operator on the full space and the bitmask of factors it acts on.
    Op(Operator, u64),
}

struct Env<'a> {
    params: &'a HashMap<String, Complex64>,
    ops: &'a HashMap<String, (Operator, u64)>,
    factors: &'a [Entry<FactorKind>],
    space: &'a HilbertSpace,
}

impl Env<'_> {
    fn factor(&self, e: &Expr) -> PResult<(usize, FactorKind)> {
        match &e.kind {
            ExprKind::Ident(name) => self
                .factors
                .iter()
                .position(|f| &f.name == name)
                .map(|i| (i, self.factors[i].value))
                .map_or_else(|| err(e.pos, format!("unknown space {name:?}")), Ok),
            _ => err(e.pos, "expected a space name"),
        }
    }

    fn index(&self, e: &Expr) -> PResult<usize> {
        match e.kind {
            ExprKind::Number(v) if v >= 0.0 && v.fract() == 0.0 => Ok(v as usize),
            _ => err(e.pos, "expected a non-negative integer"),
        }
    }

    fn embed(&self, local: &Operator, factor: usize, pos: Pos) -> PResult<Value> {
        Operator::embed(local, factor, self.space)
            .map(|op| Value::Op(op, 1 << factor))
            .map_or_else(|e| err(pos, e.to_string()), Ok)
    }

    fn eval(&self, e: &Expr) -> PResult<Value> {
        match &e.kind {
            ExprKind::Number(v) => Ok(Value::Scalar(Complex64::new(*v, 0.0))),
            ExprKind::List(vs) => match vs.as_slice() {
                [re, im] => Ok(Value::Scalar(Complex64::new(*re, *im))),
                _ => err(e.pos, "a complex scalar is written [re, im]"),
            },
            ExprKind::Ident(name) => {
                if let Some(v) = self.params.get(name) {
                    Ok(Value::Scalar(*v))
                } else if let Some((op, mask)) = self.ops.get(name) {
                    Ok(Value::Op(op.clone(), *mask))
                } else {
                    err(e.pos, format!("unresolved reference {name:?}"))
                }
            }
            ExprKind::Neg(x) => match self.eval(x)? {
                Value::Scalar(s) => Ok(Value::Scalar(-s)),
                Value::Op(op, m) => Ok(Value::Op(-&op, m)),
            },
            ExprKind::Add(a, b) | ExprKind::Sub(a, b) => {
                let negate = matches!(e.kind, ExprKind::Sub(..));
                match (self.eval(a)?, self.eval(b)?) {
                    (Value::Scalar(x), Value::Scalar(y)) => Ok(Value::Scalar(if negate { x - y } else { x + y })),
                    (Value::Op(x, mx), Value::Op(y, my)) => {
                        Ok(Value::Op(if negate { &x - &y } else { &x + &y }, mx | my))
                    }
                    _ => err(e.pos, "cannot add a scalar and an operator; multiply the scalar by identity()"),
                }
            }
            ExprKind::Mul(a, b) => match (self.eval(a)?, self.eval(b)?) {
                (Value::Scalar(x), Value::Scalar(y)) => Ok(Value::Scalar(x * y)),
                (Value::Scalar(s), Value::Op(op, m)) | (Value::Op(op, m), Value::Scalar(s)) => {
                    Ok(Value::Op(op.scale(s), m))
                }
                (Value::Op(x, mx), Value::Op(y, my)) => Ok(Value::Op(&x * &y, mx | my)),
            },
            ExprKind::Div(a, b) => {
                let d = match self.eval(b)? {
                    Value::Scalar(d) if d.norm() > 0.0 => d,
                    Value::Scalar(_) => return err(b.pos, "division by zero"),
                    Value::Op(..) => return err(b.pos, "can only divide by a scalar"),
                };
                match self.eval(a)? {
                    Value::Scalar(x) => Ok(Value::Scalar(x / d)),
                    Value::Op(op, m) => Ok(Value::Op(op.scale(1.0 / d), m)),
                }
            }
            ExprKind::Call(name, args) => self.call(e.pos, name, args),
        }
    }

    fn arity(&self, pos: Pos, name: &str, args: &[Expr], n: usize) -> PResult<()> {
        if args.len() != n {
            return err(pos, format!("{name} takes {n} argument(s), got {}", args.len()));
        }
        Ok(())
    }

    fn scalar(&self, e: &Expr) -> PResult<Complex64> {
        match self.eval(e)? {
            Value::Scalar(s) => Ok(s),
            Value::Op(..) => err(e.pos, "expected a scalar"),
        }
    }

    fn call(&self, pos: Pos, name: &str, args: &[Expr]) -> PResult<Value> {
        match name {
            "identity" | "zero" => {
                self.arity(pos, name, args, 0)?;
                let op = if name == "identity" { Operator::identity(self.space) } else { Operator::zeros(self.space) };
                Ok(Value::Op(op, 0))
            }
            "annihilator" => {
                self.arity(pos, name, args, 1)?;
                let (idx, kind) = self.factor(&args[0])?;
                let FactorKind::Fock(n) = kind else {
                    return err(args[0].pos, format!("annihilator needs a fock space, got {kind}"));
                };
                let a = fock_annihilator(n).map_err(|e| ParseError { line: pos.line, column: pos.column, message: e.to_string() })?;
                self.embed(&a, idx, pos)
            }
            "pauli" => {
                self.arity(pos, name, args, 2)?;
                let (idx, kind) = self.factor(&args[0])?;
                if kind.dim() != 2 {
                    return err(args[0].pos, format!("pauli needs a two-dimensional space, got {kind}"));
                }
                let axis: PauliAxis = match &args[1].kind {
                    ExprKind::Ident(ax) => ax.parse().map_err(|_| ParseError {
                        line: args[1].pos.line,
                        column: args[1].pos.column,
                        message: format!("unknown Pauli axis {ax:?}; use x, y or z"),
                    })?,
                    _ => return err(args[1].pos, "expected x, y or z"),
                };
                self.embed(&pauli(axis), idx, pos)
            }
            "ketbra" => {
                self.arity(pos, name, args, 3)?;
                let (idx, kind) = self.factor(&args[0])?;
                let (i, j) = (self.index(&args[1])?, self.index(&args[2])?);
                let local = Operator::ketbra(kind.dim(), i, j)
                    .map_err(|e| ParseError { line: pos.line, column: pos.column, message: e.to_string() })?;
                self.embed(&local, idx, pos)
            }
            "adjoint" => {
                self.arity(pos, name, args, 1)?;
                match self.eval(&args[0])? {
                    Value::Scalar(s) => Ok(Value::Scalar(s.conj())),
                    Value::Op(op, m) => Ok(Value::Op(op.adjoint(), m)),
                }
            }
            "conj" => {
                self.arity(pos, name, args, 1)?;
                Ok(Value::Scalar(self.scalar(&args[0])?.conj()))
            }
            "sqrt" => {
                self.arity(pos, name, args, 1)?;
                let s = self.scalar(&args[0])?;
                if s.im != 0.0 || s.re < 0.0 {
                    return err(args[0].pos, "sqrt needs a non-negative real argument");
                }
                Ok(Value::Scalar(Complex64::new(s.re.sqrt(), 0.0)))
            }
            "tensor" => {
                self.arity(pos, name, args, 2)?;
                match (self.eval(&args[0])?, self.eval(&args[1])?) {
                    (Value::Op(x, mx), Value::Op(y, my)) => {
                        if mx & my != 0 {
                            return err(pos, "tensor factors must act on disjoint spaces");
                        }
                        Ok(Value::Op(&x * &y, mx | my))
                    }
                    _ => err(pos, "tensor takes two operators"),
                }
            }
            other => err(pos, format!("unknown primitive {other:?}")),
        }
    }
}

fn parse_factor(e: &Expr) -> PResult<FactorKind> {
    let size = |args: &[Expr]| -> PResult<usize> {
        match args {
            [Expr { kind: ExprKind::Number(v), .. }] if *v >= 1.0 && v.fract() == 0.0 => Ok(*v as usize),
            _ => err(e.pos, "expected a positive integer dimension"),
        }
    };
    match &e.kind {
        ExprKind::Ident(n) if n == "qubit" => Ok(FactorKind::Qubit),
        ExprKind::Ident(n) if n == "spin" => Ok(FactorKind::Spin),
        ExprKind::Call(n, args) if n == "level" => Ok(FactorKind::Level(size(args)?)),
        ExprKind::Call(n, args) if n == "fock" => {
            let d = size(args)?;
            if d < 2 {
                return err(e.pos, "fock truncation must be at least 2");
            }
            Ok(FactorKind::Fock(d))
        }
        _ => err(e.pos, "unknown space kind; use qubit, spin, level(d) or fock(n)"),
    }
}

fn parse_subspace(e: &Expr) -> PResult<SubspaceDecl> {
    let int = |x: f64, pos: Pos| -> PResult<usize> {
        if x >= 0.0 && x.fract() == 0.0 {
            Ok(x as usize)
        } else {
            err(pos, "expected a non-negative integer")
        }
    };
    match &e.kind {
        ExprKind::Ident(n) if n == "auto" => Ok(SubspaceDecl::Auto),
        ExprKind::Call(n, args) if n == "basis" => {
            let mut out = Vec::new();
            for a in args {
                match a.kind {
                    ExprKind::Number(v) => out.push(int(v, a.pos)?),
                    _ => return err(a.pos, "basis takes integer indices"),
                }
            }
            Ok(SubspaceDecl::Basis(out))
        }
        ExprKind::Call(n, args) if n == "states" => {
            let mut out = Vec::new();
            for a in args {
                match &a.kind {
                    ExprKind::List(vs) => out.push(vs.iter().map(|&v| int(v, a.pos)).collect::<PResult<_>>()?),
                    _ => return err(a.pos, "states takes lists of per-factor indices"),
                }
            }
            Ok(SubspaceDecl::States(out))
        }
        _ => err(e.pos, "expected auto, basis(...) or states(...)"),
    }
}

fn literal_scalar(e: &Expr) -> PResult<Complex64> {
    match &e.kind {
        ExprKind::Number(v) => Ok(Complex64::new(*v, 0.0)),
        ExprKind::List(vs) if vs.len() == 2 => Ok(Complex64::new(vs[0], vs[1])),
        ExprKind::Neg(x) => literal_scalar(x).map(|v| -v),
        _ => err(e.pos, "parameters take a number or [re, im]"),
    }
}

const SECTIONS: [&str; 5] = ["parameters", "spaces", "operators", "family", "subspace"];

pub fn parse_model(text: &str) -> PResult<ModelDocument> {
    let mut section: Option<(String, Pos)> = None;
    let mut parameters: Vec<Entry<Complex64>> = Vec::new();
    let mut spaces: Vec<Entry<FactorKind>> = Vec::new();
    let mut operators: Vec<Entry<Expr>> = Vec::new();
    let mut channels: Option<(usize, Pos)> = None;
    let mut slots: BTreeMap<Slot, Entry<Expr>> = BTreeMap::new();
    let mut subspace: Option<SubspaceDecl> = None;
    let mut family_pos: Option<Pos> = None;
    let mut seen: HashMap<(String, String), Pos> = HashMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        let start = Pos { line, column: content[..indent].chars().count() + 1 };
        if let Some(rest) = trimmed.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return err(start, "unterminated section header");
            };
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return err(start, format!("unknown section [{name}]"));
            }
            if name == "family" {
                family_pos = Some(start);
            }
            section = Some((name.to_string(), start));
            continue;
        }
        let Some((sec, _)) = &section else {
            return err(start, "entry outside of a section");
        };
        let Some(eq) = content.find('=') else {
            return err(start, "expected `key = value`");
        };
        let key = content[..eq].trim().to_string();
        if key.is_empty() {
            return err(start, "missing key");
        }
        if let Some(prev) = seen.insert((sec.clone(), key.clone()), start) {
            return err(start, format!("duplicate key {key:?} (first defined on line {})", prev.line));
        }
        let value_offset = content[..eq + 1].chars().count();
        let expr = parse_expr(&content[eq + 1..], line, value_offset)?;
        match sec.as_str() {
            "parameters" => parameters.push(Entry { name: key, value: literal_scalar(&expr)?, pos: start }),
            "spaces" => spaces.push(Entry { name: key, value: parse_factor(&expr)?, pos: start }),
            "operators" => operators.push(Entry { name: key, value: expr, pos: start }),
            "family" => {
                if key == "channels" {
                    match expr.kind {
                        ExprKind::Number(v) if v >= 0.0 && v.fract() == 0.0 => channels = Some((v as usize, start)),
                        _ => return err(expr.pos, "channels must be a non-negative integer"),
                    }
                } else {
                    let slot = parse_slot(&key).map_or_else(
                        || err(start, format!("unknown family slot {key:?}; use S[i][j], L1[i], L0[i], H2, H1, H0")),
                        Ok,
                    )?;
                    slots.insert(slot, Entry { name: key, value: expr, pos: start });
                }
            }
            "subspace" => {
                if key != "zeno" {
                    return err(start, format!("unknown subspace key {key:?}; use zeno"));
                }
                subspace = Some(parse_subspace(&expr)?);
            }
            _ => unreachable!("section names are checked on entry"),
        }
    }

    let eof = Pos { line: text.lines().count().max(1), column: 1 };
    if spaces.is_empty() {
        return err(eof, "no spaces declared");
    }
    if spaces.len() > 64 {
        return err(spaces[64].pos, "at most 64 tensor factors are supported");
    }
    let space = HilbertSpace::new(spaces.iter().map(|s| s.value.dim()).collect())
        .map_err(|e| ParseError { line: spaces[0].pos.line, column: 1, message: e.to_string() })?;

    let mut params = HashMap::new();
    for p in &parameters {
        if spaces.iter().any(|s| s.name == p.name) {
            return err(p.pos, format!("{:?} is both a parameter and a space", p.name));
        }
        params.insert(p.name.clone(), p.value);
    }
    let mut ops: HashMap<String, (Operator, u64)> = HashMap::new();
    let mut operator_table = Vec::new();
    for o in &operators {
        if params.contains_key(&o.name) {
            return err(o.pos, format!("{:?} is already a parameter", o.name));
        }
        let env = Env { params: &params, ops: &ops, factors: &spaces, space: &space };
        match env.eval(&o.value)? {
            Value::Op(op, mask) => {
                operator_table.push((o.name.clone(), op.clone()));
                ops.insert(o.name.clone(), (op, mask));
            }
            Value::Scalar(_) => return err(o.value.pos, format!("{:?} evaluates to a scalar, not an operator", o.name)),
        }
    }

    // Family slots.
    let family_at = family_pos.unwrap_or(eof);
    let mut missing = Vec::new();
    let n = match channels {
        Some((n, _)) => n,
        None => {
            missing.push("channels".to_string());
            0
        }
    };
    for i in 0..n {
        for slot in [Slot::L1(i), Slot::L0(i)] {
            if !slots.contains_key(&slot) {
                missing.push(slot.to_string());
            }
        }
    }
    for slot in [Slot::H2, Slot::H1, Slot::H0] {
        if !slots.contains_key(&slot) {
            missing.push(slot.to_string());
        }
    }
    let has_s = slots.keys().any(|s| matches!(s, Slot::S(..)));
    if has_s {
        for i in 0..n {
            for j in 0..n {
                if !slots.contains_key(&Slot::S(i, j)) {
                    missing.push(Slot::S(i, j).to_string());
                }
            }
        }
    }
    if !missing.is_empty() {
        return err(family_at, format!("missing family slots: {}", missing.join(", ")));
    }
    for (slot, e) in &slots {
        let out_of_range = match slot {
            Slot::S(i, j) => *i >= n || *j >= n,
            Slot::L1(i) | Slot::L0(i) => *i >= n,
            _ => false,
        };
        if out_of_range {
            return err(e.pos, format!("{slot} exceeds the declared {n} channel(s)"));
        }
    }

    let env = Env { params: &params, ops: &ops, factors: &spaces, space: &space };
    let eval_op = |slot: &Slot| -> PResult<Operator> {
        let e = &slots[slot];
        match env.eval(&e.value)? {
            Value::Op(op, _) => Ok(op),
            Value::Scalar(_) => err(e.value.pos, format!("{slot} must be an operator")),
        }
    };
    let mut hamiltonians = Vec::new();
    for slot in [Slot::H2, Slot::H1, Slot::H0] {
        let h = eval_op(&slot)?;
        let residual = h.hermiticity_residual();
        if residual > VALIDATION_WARN_LIMIT {
            return err(slots[&slot].pos, format!("{slot} is not Hermitian (residual {residual:.3e})"));
        }
        hamiltonians.push(h);
    }
    let l1 = (0..n).map(|i| eval_op(&Slot::L1(i))).collect::<PResult<Vec<_>>>()?;
    let l0 = (0..n).map(|i| eval_op(&Slot::L0(i))).collect::<PResult<Vec<_>>>()?;
    let s = if has_s {
        let mut s = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                s.push(eval_op(&Slot::S(i, j))?);
            }
        }
        s
    } else {
        crate::slh_model::identity_scattering(&space, n)
    };
    let [h2, h1, h0]: [Operator; 3] = hamiltonians.try_into().expect("three Hamiltonian slots");
    let family = ScaledSlhFamily::new(s, l1, l0, h2, h1, h0)
        .map_err(|e| ParseError { line: family_at.line, column: family_at.column, message: e.to_string() })?;

    let subspace = subspace.unwrap_or(SubspaceDecl::Auto);
    let split_err = |e: Error| ParseError { line: eof.line, column: 1, message: format!("subspace: {e}") };
    let explicit_split = match &subspace {
        SubspaceDecl::Auto => None,
        SubspaceDecl::Basis(ix) => {
            Some(ZenoSplit::from_zeno(SubspaceIsometry::from_basis_indices(&space, ix).map_err(split_err)?))
        }
        SubspaceDecl::States(states) => {
            let ix = states
                .iter()
                .map(|s| space.basis_index(s))
                .collect::<crate::error::Result<Vec<_>>>()
                .map_err(split_err)?;
            Some(ZenoSplit::from_zeno(SubspaceIsometry::from_basis_indices(&space, &ix).map_err(split_err)?))
        }
    };

    Ok(ModelDocument {
        parameters,
        spaces,
        operators,
        channels: n,
        slots,
        subspace,
        space,
        operator_table,
        family,
        explicit_split,
    })
}
