//! Parser for the element-wise function text format.
//!
//! A source file holds one shape declaration per tensor (`a : 3 x 5`) and a
//! single definition line (`f[i; j] = expr`). Expressions support `+ - * /
//! **`, the functions `exp log sin cos sinh sqrt`, summations
//! `sum{k}_lo^hi (body)` with affine bounds (optionally `max [..]` /
//! `min [..]`), delta conditionals `if {cond} then (a) else (b)` and tensor
//! references with affine index expressions. `#` starts a comment.

use std::collections::BTreeMap;

use num_traits::Zero;
use tad_core::{
    build_spec, AffineForm, ArgDecl, BoundDir, DeltaCond, ElemFuncSpec, ExprGraph, ExprId,
    IndexSymbol, Int, RangeBound, Rat, UnOp,
};

#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.col, self.msg)
    }
}

impl std::error::Error for ParseError {}

const FUNCTIONS: &[(&str, UnOp)] = &[
    ("exp", UnOp::Exp),
    ("log", UnOp::Log),
    ("sin", UnOp::Sin),
    ("cos", UnOp::Cos),
    ("sinh", UnOp::Sinh),
    ("sqrt", UnOp::Sqrt),
];

const KEYWORDS: &[&str] =
    &["sum", "if", "then", "else", "max", "min", "exp", "log", "sin", "cos", "sinh", "sqrt"];

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(Rat),
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Colon,
    Caret,
    Underscore,
    Plus,
    Minus,
    Star,
    StarStar,
    Slash,
    Percent,
    Eq,
    Ge,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Tok::Ident(n) => return write!(f, "`{n}`"),
            Tok::Num(v) => return write!(f, "`{v}`"),
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::Caret => "^",
            Tok::Underscore => "_",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::StarStar => "**",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::Eq => "=",
            Tok::Ge => ">=",
        };
        write!(f, "`{s}`")
    }
}

fn lex(line: &str, line_no: usize) -> Result<Vec<(Tok, usize)>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            '#' => break,
            c if c.is_whitespace() => {
                i += 1;
            }
            '[' => push1(&mut out, Tok::LBracket, col, &mut i),
            ']' => push1(&mut out, Tok::RBracket, col, &mut i),
            '{' => push1(&mut out, Tok::LBrace, col, &mut i),
            '}' => push1(&mut out, Tok::RBrace, col, &mut i),
            '(' => push1(&mut out, Tok::LParen, col, &mut i),
            ')' => push1(&mut out, Tok::RParen, col, &mut i),
            ';' => push1(&mut out, Tok::Semi, col, &mut i),
            ':' => push1(&mut out, Tok::Colon, col, &mut i),
            '^' => push1(&mut out, Tok::Caret, col, &mut i),
            '_' => push1(&mut out, Tok::Underscore, col, &mut i),
            '+' => push1(&mut out, Tok::Plus, col, &mut i),
            '-' => push1(&mut out, Tok::Minus, col, &mut i),
            '/' => push1(&mut out, Tok::Slash, col, &mut i),
            '%' => push1(&mut out, Tok::Percent, col, &mut i),
            '=' => push1(&mut out, Tok::Eq, col, &mut i),
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push((Tok::Ge, col));
                    i += 2;
                } else {
                    return Err(ParseError { line: line_no, col, msg: "expected `>=`".into() });
                }
            }
            '*' => {
                if chars.get(i + 1) == Some(&'*') {
                    out.push((Tok::StarStar, col));
                    i += 2;
                } else {
                    out.push((Tok::Star, col));
                    i += 1;
                }
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let mut denom = Int::from(1);
                let mut digits: String = chars[start..i].iter().collect();
                if i < chars.len() && chars[i] == '.' && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit()) {
                    i += 1;
                    let fstart = i;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                    for _ in fstart..i {
                        denom *= 10;
                    }
                    digits.extend(chars[fstart..i].iter());
                }
                let numer: Int = digits.parse().expect("digits");
                out.push((Tok::Num(Rat::new(numer, denom)), col));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push((Tok::Ident(chars[start..i].iter().collect()), col));
            }
            other => {
                return Err(ParseError {
                    line: line_no,
                    col,
                    msg: format!("unexpected character `{other}`"),
                });
            }
        }
    }
    Ok(out)
}

fn push1(out: &mut Vec<(Tok, usize)>, t: Tok, col: usize, i: &mut usize) {
    out.push((t, col));
    *i += 1;
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    graph: ExprGraph,
    args: Vec<ArgDecl>,
    scope: Vec<IndexSymbol>,
}

impl Parser {
    fn err(&self, msg: impl Into<String>) -> ParseError {
        let col = self.toks.get(self.pos).map(|(_, c)| *c).unwrap_or_else(|| {
            self.toks.last().map(|(_, c)| c + 1).unwrap_or(1)
        });
        ParseError { line: self.line, col, msg: msg.into() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok) -> Result<(), ParseError> {
        match self.peek() {
            Some(got) if *got == t => {
                self.pos += 1;
                Ok(())
            }
            Some(got) => Err(self.err(format!("expected {t}, found {got}"))),
            None => Err(self.err(format!("expected {t}, found end of line"))),
        }
    }

    fn lookup_symbol(&self, name: &str) -> Option<IndexSymbol> {
        self.scope.iter().rev().find(|s| s.name == name).cloned()
    }

    fn arg_index(&self, name: &str) -> Option<usize> {
        self.args.iter().position(|a| a.name == name)
    }

    // ----- general expressions -----

    fn expr(&mut self) -> Result<ExprId, ParseError> {
        let mut lhs = self.mul_expr()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    let rhs = self.mul_expr()?;
                    lhs = self.graph.add(lhs, rhs);
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let rhs = self.mul_expr()?;
                    lhs = self.graph.sub(lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn mul_expr(&mut self) -> Result<ExprId, ParseError> {
        let mut lhs = self.unary_expr()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let rhs = self.unary_expr()?;
                    lhs = self.graph.mul(lhs, rhs);
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    let rhs = self.unary_expr()?;
                    lhs = self.graph.div(lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary_expr(&mut self) -> Result<ExprId, ParseError> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            let x = self.unary_expr()?;
            return Ok(self.graph.neg(x));
        }
        self.power_expr()
    }

    fn power_expr(&mut self) -> Result<ExprId, ParseError> {
        let base = self.atom_expr()?;
        if self.peek() == Some(&Tok::StarStar) {
            self.pos += 1;
            // `**` binds tighter than unary minus, but its exponent may
            // itself carry one, as in `x ** -2`.
            let expo = self.unary_expr()?;
            if !self.graph.is_constant_expr(expo) {
                return Err(self.err("exponent must be a constant"));
            }
            return Ok(self.graph.pow(base, expo));
        }
        Ok(base)
    }

    fn atom_expr(&mut self) -> Result<ExprId, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(self.graph.constant(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if name == "sum" {
                    return self.sum_expr();
                }
                if name == "if" {
                    return self.if_expr();
                }
                if let Some((_, op)) = FUNCTIONS.iter().find(|(n, _)| *n == name) {
                    self.pos += 1;
                    self.expect(Tok::LParen)?;
                    let x = self.expr()?;
                    self.expect(Tok::RParen)?;
                    return Ok(self.graph.unary(*op, x));
                }
                if let Some(arg) = self.arg_index(&name) {
                    self.pos += 1;
                    self.expect(Tok::LBracket)?;
                    let mut indices = vec![self.affine()?];
                    while self.peek() == Some(&Tok::Semi) {
                        self.pos += 1;
                        indices.push(self.affine()?);
                    }
                    self.expect(Tok::RBracket)?;
                    return Ok(self.graph.arg(arg, indices));
                }
                if self.lookup_symbol(&name).is_some() {
                    Err(self.err(format!("index `{name}` cannot be used as a value")))
                } else {
                    Err(self.err(format!("undeclared tensor `{name}`")))
                }
            }
            Some(t) => Err(self.err(format!("unexpected {t}"))),
            None => Err(self.err("unexpected end of line")),
        }
    }

    fn sum_expr(&mut self) -> Result<ExprId, ParseError> {
        self.pos += 1; // sum
        self.expect(Tok::LBrace)?;
        let name = match self.next() {
            Some(Tok::Ident(n)) => n,
            _ => return Err(self.err("expected a summation index name")),
        };
        if KEYWORDS.contains(&name.as_str()) {
            return Err(self.err(format!("`{name}` is reserved")));
        }
        self.expect(Tok::RBrace)?;
        self.expect(Tok::Underscore)?;
        let lo = self.bound(BoundDir::Lower)?;
        self.expect(Tok::Caret)?;
        let hi = self.bound(BoundDir::Upper)?;
        let sym = IndexSymbol::summation(name);
        self.scope.push(sym.clone());
        self.expect(Tok::LParen)?;
        let body = self.expr()?;
        self.expect(Tok::RParen)?;
        self.scope.pop();
        Ok(self.graph.sum(sym, lo, hi, body))
    }

    fn bound(&mut self, dir: BoundDir) -> Result<RangeBound, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(RangeBound::new(dir, vec![AffineForm::constant(v)]))
            }
            Some(Tok::Ident(n)) => {
                let Some(sym) = self.lookup_symbol(&n) else {
                    return Err(self.err(format!("unknown index `{n}` in a bound")));
                };
                self.pos += 1;
                Ok(RangeBound::new(dir, vec![AffineForm::symbol(sym)]))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let b = match self.peek().cloned() {
                    Some(Tok::Ident(kw)) if kw == "max" || kw == "min" => {
                        match (kw.as_str(), dir) {
                            ("max", BoundDir::Lower) | ("min", BoundDir::Upper) => {}
                            ("max", _) => {
                                return Err(self.err("`max` belongs in a lower bound"));
                            }
                            (_, _) => return Err(self.err("`min` belongs in an upper bound")),
                        }
                        self.pos += 1;
                        self.expect(Tok::LBracket)?;
                        let mut forms = vec![self.affine()?];
                        while self.peek() == Some(&Tok::Semi) {
                            self.pos += 1;
                            forms.push(self.affine()?);
                        }
                        self.expect(Tok::RBracket)?;
                        RangeBound::new(dir, forms)
                    }
                    _ => RangeBound::new(dir, vec![self.affine()?]),
                };
                self.expect(Tok::RParen)?;
                Ok(b)
            }
            _ => Err(self.err("expected a summation bound")),
        }
    }

    fn if_expr(&mut self) -> Result<ExprId, ParseError> {
        self.pos += 1; // if
        self.expect(Tok::LBrace)?;
        let form = self.affine()?;
        let cond = match self.next() {
            Some(Tok::Eq) => {
                self.expect_zero()?;
                DeltaCond::Zero(form)
            }
            Some(Tok::Percent) => {
                let m = match self.next() {
                    Some(Tok::Num(v)) if v.is_integer() && v.numer() > &Int::from(0) => {
                        v.to_integer()
                    }
                    _ => return Err(self.err("expected a positive integer modulus")),
                };
                self.expect(Tok::Eq)?;
                self.expect_zero()?;
                if !form.is_integral() {
                    return Err(self.err("divisibility needs an integer expression"));
                }
                DeltaCond::Divisible(form, m)
            }
            Some(Tok::Ge) => {
                self.expect_zero()?;
                DeltaCond::Nonneg(form)
            }
            _ => return Err(self.err("expected `= 0`, `% m = 0` or `>= 0`")),
        };
        self.expect(Tok::RBrace)?;
        let then_kw = self.next();
        if then_kw != Some(Tok::Ident("then".into())) {
            return Err(self.err("expected `then`"));
        }
        self.expect(Tok::LParen)?;
        let t = self.expr()?;
        self.expect(Tok::RParen)?;
        let else_kw = self.next();
        if else_kw != Some(Tok::Ident("else".into())) {
            return Err(self.err("expected `else`"));
        }
        self.expect(Tok::LParen)?;
        let e = self.expr()?;
        self.expect(Tok::RParen)?;
        Ok(self.graph.delta(cond, t, e))
    }

    fn expect_zero(&mut self) -> Result<(), ParseError> {
        match self.next() {
            Some(Tok::Num(v)) if v.is_zero() => Ok(()),
            _ => Err(self.err("conditions compare against 0")),
        }
    }

    // ----- affine index expressions -----

    fn affine(&mut self) -> Result<AffineForm, ParseError> {
        let mut acc = self.affine_term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    let t = self.affine_term()?;
                    acc = acc.add(&t);
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let t = self.affine_term()?;
                    acc = acc.sub(&t);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn affine_term(&mut self) -> Result<AffineForm, ParseError> {
        let mut acc = self.affine_factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let f = self.affine_factor()?;
                    acc = match (acc.is_constant(), f.is_constant()) {
                        (true, _) => f.scale(acc.constant_part()),
                        (_, true) => acc.scale(f.constant_part()),
                        _ => {
                            return Err(
                                self.err("non-affine index expression (product of indices)")
                            )
                        }
                    };
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    let f = self.affine_factor()?;
                    if !f.is_constant() || f.constant_part().is_zero() {
                        return Err(self.err("division must be by a nonzero constant"));
                    }
                    acc = acc.scale(&f.constant_part().clone().recip());
                }
                _ => return Ok(acc),
            }
        }
    }

    fn affine_factor(&mut self) -> Result<AffineForm, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Minus) => {
                self.pos += 1;
                Ok(self.affine_factor()?.neg())
            }
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(AffineForm::constant(v))
            }
            Some(Tok::Ident(n)) => {
                if let Some(sym) = self.lookup_symbol(&n) {
                    self.pos += 1;
                    Ok(AffineForm::symbol(sym))
                } else if self.arg_index(&n).is_some() {
                    Err(self.err(format!("tensor `{n}` cannot appear in an index expression")))
                } else {
                    Err(self.err(format!("unknown index `{n}`")))
                }
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let f = self.affine()?;
                self.expect(Tok::RParen)?;
                Ok(f)
            }
            Some(t) => Err(self.err(format!("unexpected {t} in an index expression"))),
            None => Err(self.err("unexpected end of index expression")),
        }
    }
}

/// Parse a complete source text into a validated spec.
pub fn parse_source(text: &str) -> Result<ElemFuncSpec, ParseError> {
    let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
    let mut def: Option<(usize, Vec<(Tok, usize)>)> = None;

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let toks = lex(raw, line_no)?;
        if toks.is_empty() {
            continue;
        }
        if toks.get(1).map(|(t, _)| t) == Some(&Tok::Colon) {
            shapes.push(parse_shape_decl(&toks, line_no)?);
        } else if def.is_none() {
            def = Some((line_no, toks));
        } else {
            return Err(ParseError {
                line: line_no,
                col: 1,
                msg: "only one definition per file is supported".into(),
            });
        }
    }
    let Some((def_line, toks)) = def else {
        return Err(ParseError { line: 1, col: 1, msg: "no function definition found".into() });
    };

    // Definition header: name[i; j; ...] =
    let mut p = Parser {
        toks,
        pos: 0,
        line: def_line,
        graph: ExprGraph::new(),
        args: Vec::new(),
        scope: Vec::new(),
    };
    let fname = match p.next() {
        Some(Tok::Ident(n)) => n,
        _ => return Err(p.err("expected a function name")),
    };
    let output_shape = shapes
        .iter()
        .find(|(n, _)| *n == fname)
        .map(|(_, s)| s.clone())
        .ok_or_else(|| p.err(format!("missing shape declaration for `{fname}`")))?;
    p.args = shapes
        .iter()
        .filter(|(n, _)| *n != fname)
        .map(|(n, s)| ArgDecl::new(n.clone(), s.clone()))
        .collect();
    if let Some(bad) =
        p.args.iter().map(|a| a.name.clone()).find(|n| KEYWORDS.contains(&n.as_str()))
    {
        return Err(p.err(format!("`{bad}` is reserved and cannot name a tensor")));
    }

    p.expect(Tok::LBracket)?;
    let mut output_indices = Vec::new();
    loop {
        match p.next() {
            Some(Tok::Ident(n)) => {
                if KEYWORDS.contains(&n.as_str()) {
                    return Err(p.err(format!("`{n}` is reserved")));
                }
                output_indices.push(IndexSymbol::output(n));
            }
            _ => return Err(p.err("expected an output index name")),
        }
        match p.next() {
            Some(Tok::Semi) => continue,
            Some(Tok::RBracket) => break,
            _ => return Err(p.err("expected `;` or `]`")),
        }
    }
    p.expect(Tok::Eq)?;
    p.scope = output_indices.clone();
    let body = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.err("trailing input after the expression"));
    }

    let Parser { graph, args, .. } = p;
    build_spec(fname, output_indices, output_shape, args, graph, body).map_err(|e| ParseError {
        line: def_line,
        col: 1,
        msg: e.to_string(),
    })
}

fn parse_shape_decl(
    toks: &[(Tok, usize)],
    line_no: usize,
) -> Result<(String, Vec<usize>), ParseError> {
    let fail = |col: usize, msg: &str| ParseError { line: line_no, col, msg: msg.into() };
    let name = match &toks[0].0 {
        Tok::Ident(n) => n.clone(),
        _ => return Err(fail(toks[0].1, "expected a tensor name")),
    };
    if KEYWORDS.contains(&name.as_str()) {
        return Err(fail(toks[0].1, "this name is reserved"));
    }
    let mut shape = Vec::new();
    let mut i = 2;
    loop {
        match toks.get(i) {
            Some((Tok::Num(v), col)) => {
                if !v.is_integer() || v.numer() <= &Int::from(0) {
                    return Err(fail(*col, "dimensions are positive integers"));
                }
                shape.push(usize::try_from(v.to_integer()).map_err(|_| {
                    fail(*col, "dimension too large")
                })?);
                i += 1;
            }
            Some((_, col)) => return Err(fail(*col, "expected a dimension")),
            None => return Err(fail(1, "expected a dimension")),
        }
        match toks.get(i) {
            None => break,
            Some((Tok::Ident(x), _)) if x == "x" => {
                i += 1;
            }
            Some((_, col)) => return Err(fail(*col, "expected `x` between dimensions")),
        }
    }
    Ok((name, shape))
}

/// A BTreeMap of declared shapes, useful to build evaluation environments
/// in file order.
pub fn shape_table(spec: &ElemFuncSpec) -> BTreeMap<String, Vec<usize>> {
    let mut m: BTreeMap<String, Vec<usize>> =
        spec.args().iter().map(|a| (a.name.clone(), a.shape.clone())).collect();
    m.insert(spec.name().to_string(), spec.output_shape().to_vec());
    m
}
