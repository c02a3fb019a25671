//! Scalar expression language for coefficient entries and problem data.
//!
//! Grammar (standard precedence, `^` right-associative and binding tighter
//! than unary minus):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'pi' | var | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! Variables are `<prefix>1 .. <prefix>d`, where the prefix is `y` for
//! cell-periodic fields and `x` for data on the physical domain.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        match s {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            _ => None,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
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
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
            BinOp::Pow => a.powf(b),
        }
    }
}

/// Expression tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Pi,
    /// Zero-based variable index.
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

const PREC_NEG: u8 = 3;
const PREC_ATOM: u8 = 5;

impl Node {
    fn precedence(&self) -> u8 {
        match self {
            Node::Num(_) | Node::Pi | Node::Var(_) | Node::Call(..) => PREC_ATOM,
            Node::Neg(_) => PREC_NEG,
            Node::Bin(op, ..) => op.precedence(),
        }
    }

    fn eval(&self, vars: &[f64]) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Pi => std::f64::consts::PI,
            Node::Var(i) => vars[*i],
            Node::Neg(a) => -a.eval(vars),
            Node::Bin(op, a, b) => op.apply(a.eval(vars), b.eval(vars)),
            Node::Call(f, a) => f.apply(a.eval(vars)),
        }
    }

    fn has_var(&self) -> bool {
        match self {
            Node::Num(_) | Node::Pi => false,
            Node::Var(_) => true,
            Node::Neg(a) | Node::Call(_, a) => a.has_var(),
            Node::Bin(_, a, b) => a.has_var() || b.has_var(),
        }
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            Node::Num(_) | Node::Pi => None,
            Node::Var(i) => Some(*i),
            Node::Neg(a) | Node::Call(_, a) => a.max_var(),
            Node::Bin(_, a, b) => a.max_var().max(b.max_var()),
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, prefix: char) -> fmt::Result {
        match self {
            Node::Num(v) => write!(f, "{v}"),
            Node::Pi => write!(f, "pi"),
            Node::Var(i) => write!(f, "{prefix}{}", i + 1),
            Node::Neg(a) => {
                write!(f, "-")?;
                write_child(f, a, PREC_NEG, prefix)
            }
            Node::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write(f, prefix)?;
                write!(f, ")")
            }
            Node::Bin(op, a, b) => {
                let p = op.precedence();
                if *op == BinOp::Pow {
                    write_child(f, a, PREC_ATOM, prefix)?;
                    write!(f, "^")?;
                    write_child(f, b, PREC_NEG, prefix)
                } else {
                    write_child(f, a, p, prefix)?;
                    write!(f, "{}", op.symbol())?;
                    write_child(f, b, p + 1, prefix)
                }
            }
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, n: &Node, min_prec: u8, prefix: char) -> fmt::Result {
    if n.precedence() < min_prec {
        write!(f, "(")?;
        n.write(f, prefix)?;
        write!(f, ")")
    } else {
        n.write(f, prefix)
    }
}

/// Variable namespace an expression is parsed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scope {
    pub prefix: char,
    pub dim: usize,
}

impl Scope {
    /// Cell variables `y1..yd`.
    pub fn cell(dim: usize) -> Self {
        Scope { prefix: 'y', dim }
    }

    /// Physical-domain variables `x1..xd`.
    pub fn physical(dim: usize) -> Self {
        Scope { prefix: 'x', dim }
    }
}

#[derive(Debug, Clone, Copy)]
enum Instr {
    Const(f64),
    Var(usize),
    Neg,
    Bin(BinOp),
    Call(Func),
}

/// A parsed scalar expression, compiled to a small stack program for
/// evaluation.
#[derive(Debug, Clone)]
pub struct ScalarFieldExpr {
    root: Node,
    scope: Scope,
    program: Vec<Instr>,
    depth: usize,
}

impl PartialEq for ScalarFieldExpr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.scope == other.scope
    }
}

const STACK: usize = 32;

impl ScalarFieldExpr {
    pub fn from_node(root: Node, scope: Scope) -> Result<Self> {
        if let Some(v) = root.max_var() {
            if v >= scope.dim {
                return Err(Error::UnknownIdentifier {
                    name: format!("{}{}", scope.prefix, v + 1),
                    offset: 0,
                });
            }
        }
        let mut program = Vec::new();
        let mut depth = 0;
        compile(&root, &mut program, 0, &mut depth);
        Ok(ScalarFieldExpr {
            root,
            scope,
            program,
            depth,
        })
    }

    pub fn constant(value: f64, scope: Scope) -> Self {
        Self::from_node(Node::Num(value), scope).expect("constants have no variables")
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    /// Value if the expression does not depend on any variable.
    pub fn as_constant(&self) -> Option<f64> {
        if self.root.has_var() {
            None
        } else {
            Some(self.root.eval(&[]))
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_constant() == Some(0.0)
    }

    /// Evaluates at `vars` (length must be at least the scope dimension).
    pub fn eval(&self, vars: &[f64]) -> f64 {
        if self.depth > STACK {
            return self.root.eval(vars);
        }
        let mut stack = [0.0f64; STACK];
        let mut sp = 0usize;
        for ins in &self.program {
            match *ins {
                Instr::Const(v) => {
                    stack[sp] = v;
                    sp += 1;
                }
                Instr::Var(i) => {
                    stack[sp] = vars[i];
                    sp += 1;
                }
                Instr::Neg => stack[sp - 1] = -stack[sp - 1],
                Instr::Call(f) => stack[sp - 1] = f.apply(stack[sp - 1]),
                Instr::Bin(op) => {
                    sp -= 1;
                    stack[sp - 1] = op.apply(stack[sp - 1], stack[sp]);
                }
            }
        }
        stack[0]
    }

    /// Evaluates a 1-periodic field: coordinates are reduced to their
    /// fractional part first.
    pub fn eval_periodic(&self, y: &[f64]) -> f64 {
        let mut frac = [0.0f64; 3];
        for (f, &v) in frac.iter_mut().zip(y) {
            *f = v - v.floor();
        }
        self.eval(&frac[..y.len().min(3)])
    }
}

fn compile(n: &Node, out: &mut Vec<Instr>, sp: usize, depth: &mut usize) {
    let here = sp + 1;
    *depth = (*depth).max(here);
    match n {
        Node::Num(v) => out.push(Instr::Const(*v)),
        Node::Pi => out.push(Instr::Const(std::f64::consts::PI)),
        Node::Var(i) => out.push(Instr::Var(*i)),
        Node::Neg(a) => {
            compile(a, out, sp, depth);
            out.push(Instr::Neg);
        }
        Node::Call(f, a) => {
            compile(a, out, sp, depth);
            out.push(Instr::Call(*f));
        }
        Node::Bin(op, a, b) => {
            compile(a, out, sp, depth);
            compile(b, out, sp + 1, depth);
            out.push(Instr::Bin(*op));
        }
    }
}

impl fmt::Display for ScalarFieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.write(f, self.scope.prefix)
    }
}

/// Parses `source` against the given variable scope.
pub fn parse_expr(source: &str, scope: Scope) -> Result<ScalarFieldExpr> {
    if source.trim().is_empty() {
        return Err(Error::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let tokens = tokenize(source)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        scope,
    };
    let root = p.expr()?;
    let (tok, off) = p.peek();
    if *tok != Tok::End {
        return Err(Error::Syntax {
            offset: off,
            message: format!("unexpected {}", tok.describe()),
        });
    }
    ScalarFieldExpr::from_node(root, scope)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Op(c) => format!("operator `{c}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| Error::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else {
            let tok = match c {
                b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                b',' => Tok::Comma,
                _ => {
                    let ch = src[start..].chars().next().unwrap_or('?');
                    return Err(Error::Syntax {
                        offset: start,
                        message: format!("unexpected character `{ch}`"),
                    });
                }
            };
            i += 1;
            out.push((tok, start));
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    scope: Scope,
}

impl Parser {
    fn peek(&self) -> (&Tok, usize) {
        let (t, o) = &self.tokens[self.pos];
        (t, *o)
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        let (t, off) = self.bump();
        if t == want {
            Ok(())
        } else {
            Err(Error::Syntax {
                offset: off,
                message: format!("expected {}, found {}", want.describe(), t.describe()),
            })
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().0 {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().0 {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if *self.peek().0 == Tok::Op('-') {
            self.bump();
            let inner = self.unary()?;
            return Ok(Node::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if *self.peek().0 == Tok::Op('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        let (tok, off) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => self.ident(name, off),
            other => Err(Error::Syntax {
                offset: off,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }

    fn ident(&mut self, name: String, off: usize) -> Result<Node> {
        if let Some(func) = Func::from_name(&name) {
            self.expect(Tok::LParen)?;
            let mut args = vec![self.expr()?];
            while *self.peek().0 == Tok::Comma {
                self.bump();
                args.push(self.expr()?);
            }
            self.expect(Tok::RParen)?;
            if args.len() != 1 {
                return Err(Error::Arity {
                    name,
                    expected: 1,
                    found: args.len(),
                });
            }
            let arg = args.pop().expect("one argument");
            return Ok(Node::Call(func, Box::new(arg)));
        }
        if name == "pi" {
            return Ok(Node::Pi);
        }
        let mut chars = name.chars();
        if chars.next() == Some(self.scope.prefix) {
            if let Ok(k) = chars.as_str().parse::<usize>() {
                if k >= 1 && k <= self.scope.dim {
                    return Ok(Node::Var(k - 1));
                }
            }
        }
        Err(Error::UnknownIdentifier { name, offset: off })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> ScalarFieldExpr {
        parse_expr(s, Scope::cell(2)).unwrap()
    }

    #[test]
    fn parses_trig_sum() {
        let e = p("2+sin(2*pi*y1)");
        let y = [0.125, 0.7];
        let want = 2.0 + (2.0 * std::f64::consts::PI * 0.125).sin();
        assert!((e.eval(&y) - want).abs() < 1e-15);
    }

    #[test]
    fn constant_one() {
        let e = p("1");
        assert_eq!(e.as_constant(), Some(1.0));
        assert_eq!(e.eval(&[0.3, 0.4]), 1.0);
    }

    #[test]
    fn out_of_scope_variable() {
        match parse_expr("sin(y3)", Scope::cell(2)) {
            Err(Error::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "y3");
                assert_eq!(offset, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_expr("sin(y3)", Scope::cell(3)).is_ok());
        assert!(matches!(
            parse_expr("x1", Scope::cell(2)),
            Err(Error::UnknownIdentifier { .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse_expr("1 + * 2", Scope::cell(2)) {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_expr("(1+2", Scope::cell(2)), Err(Error::Syntax { .. })));
        assert!(matches!(parse_expr("", Scope::cell(2)), Err(Error::Syntax { .. })));
        assert!(matches!(parse_expr("2 $ 3", Scope::cell(2)), Err(Error::Syntax { offset: 2, .. })));
    }

    #[test]
    fn wrong_arity() {
        assert!(matches!(
            parse_expr("sin(y1, y2)", Scope::cell(2)),
            Err(Error::Arity { expected: 1, found: 2, .. })
        ));
    }

    #[test]
    fn precedence_and_associativity() {
        let e = p("-2^2");
        assert_eq!(e.eval(&[0.0, 0.0]), -4.0);
        let e = p("2^3^2");
        assert_eq!(e.eval(&[0.0, 0.0]), 512.0);
        let e = p("8/2/2");
        assert_eq!(e.eval(&[0.0, 0.0]), 2.0);
        let e = p("1-2-3");
        assert_eq!(e.eval(&[0.0, 0.0]), -4.0);
        let e = p("2^-1");
        assert_eq!(e.eval(&[0.0, 0.0]), 0.5);
        let e = p("1.5e-1*y2");
        assert!((e.eval(&[0.0, 2.0]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn periodic_evaluation_uses_fractional_part() {
        let e = p("y1");
        assert!((e.eval_periodic(&[1.25, 0.0]) - 0.25).abs() < 1e-15);
        assert!((e.eval_periodic(&[-0.25, 0.0]) - 0.75).abs() < 1e-15);
    }

    fn arb_node() -> impl Strategy<Value = Node> {
        let leaf = prop_oneof![
            (0u32..1000).prop_map(|v| Node::Num(v as f64 / 8.0)),
            Just(Node::Pi),
            (0usize..2).prop_map(Node::Var),
        ];
        leaf.prop_recursive(5, 40, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Node::Neg(Box::new(a))),
                (inner.clone(), prop_oneof![Just(Func::Sin), Just(Func::Cos), Just(Func::Exp)])
                    .prop_map(|(a, f)| Node::Call(f, Box::new(a))),
                (
                    inner.clone(),
                    inner,
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ]
                )
                    .prop_map(|(a, b, op)| Node::Bin(op, Box::new(a), Box::new(b))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(node in arb_node()) {
            let e = ScalarFieldExpr::from_node(node, Scope::cell(2)).unwrap();
            let printed = e.to_string();
            let back = parse_expr(&printed, Scope::cell(2)).unwrap();
            prop_assert_eq!(&back, &e, "printed as {}", printed);
        }

        #[test]
        fn compiled_matches_tree(node in arb_node(), y1 in 0.0f64..1.0, y2 in 0.0f64..1.0) {
            let e = ScalarFieldExpr::from_node(node.clone(), Scope::cell(2)).unwrap();
            let a = e.eval(&[y1, y2]);
            let b = node.eval(&[y1, y2]);
            prop_assert!(a == b || (a.is_nan() && b.is_nan()));
        }
    }
}
