//! Expression trees of structural equations and their parser.

use super::Noise;

pub(crate) const RESERVED: [&str; 5] = ["sin", "exp", "tanh", "normal", "bernoulli"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Exp,
    Tanh,
}

impl Func {
    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Exp => x.exp(),
            Func::Tanh => x.tanh(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// A named coefficient with its value.
    Coef(String, f64),
    /// Index of an earlier variable.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn vars(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Num(_) | Expr::Coef(..) => {}
            Expr::Var(i) => out.push(*i),
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn has_vars(&self) -> bool {
        !self.vars().is_empty()
    }

    pub fn eval(&self, vals: &[f64]) -> f64 {
        match self {
            Expr::Num(v) | Expr::Coef(_, v) => *v,
            Expr::Var(i) => vals[*i],
            Expr::Neg(a) => -a.eval(vals),
            Expr::Add(a, b) => a.eval(vals) + b.eval(vals),
            Expr::Sub(a, b) => a.eval(vals) - b.eval(vals),
            Expr::Mul(a, b) => a.eval(vals) * b.eval(vals),
            Expr::Call(f, a) => f.apply(a.eval(vals)),
        }
    }

    pub(crate) fn eval_const(&self) -> f64 {
        self.eval(&[])
    }

    /// Column-wise evaluation over `n` rows.
    pub(crate) fn eval_columns(&self, cols: &[Vec<f64>], n: usize) -> Vec<f64> {
        match self {
            Expr::Num(v) | Expr::Coef(_, v) => vec![*v; n],
            Expr::Var(i) => cols[*i].clone(),
            Expr::Neg(a) => a.eval_columns(cols, n).into_iter().map(|x| -x).collect(),
            Expr::Add(a, b) => zip(a.eval_columns(cols, n), b.eval_columns(cols, n), |x, y| x + y),
            Expr::Sub(a, b) => zip(a.eval_columns(cols, n), b.eval_columns(cols, n), |x, y| x - y),
            Expr::Mul(a, b) => zip(a.eval_columns(cols, n), b.eval_columns(cols, n), |x, y| x * y),
            Expr::Call(f, a) => a.eval_columns(cols, n).into_iter().map(|x| f.apply(x)).collect(),
        }
    }

    /// `(constant, [(var, coefficient)])` when the expression is affine in
    /// the variables; functions of constants fold to constants.
    pub fn linear(&self) -> Option<(f64, Vec<(usize, f64)>)> {
        if !self.has_vars() {
            return Some((self.eval_const(), Vec::new()));
        }
        let scale = |(c, t): (f64, Vec<(usize, f64)>), k: f64| {
            (c * k, t.into_iter().map(|(v, a)| (v, a * k)).collect::<Vec<_>>())
        };
        let plus = |(c1, mut t1): (f64, Vec<(usize, f64)>), (c2, t2): (f64, Vec<(usize, f64)>)| {
            for (v, a) in t2 {
                match t1.iter_mut().find(|(w, _)| *w == v) {
                    Some(slot) => slot.1 += a,
                    None => t1.push((v, a)),
                }
            }
            (c1 + c2, t1)
        };
        match self {
            Expr::Var(i) => Some((0.0, vec![(*i, 1.0)])),
            Expr::Neg(a) => Some(scale(a.linear()?, -1.0)),
            Expr::Add(a, b) => Some(plus(a.linear()?, b.linear()?)),
            Expr::Sub(a, b) => Some(plus(a.linear()?, scale(b.linear()?, -1.0))),
            Expr::Mul(a, b) => match (a.has_vars(), b.has_vars()) {
                (false, _) => Some(scale(b.linear()?, a.eval_const())),
                (_, false) => Some(scale(a.linear()?, b.eval_const())),
                _ => None,
            },
            _ => None,
        }
    }

    /// Text form using `names` for variables.
    pub fn render(&self, names: &[&str]) -> String {
        self.render_prec(names, 0)
    }

    fn render_prec(&self, names: &[&str], prec: u8) -> String {
        let (s, p) = match self {
            Expr::Num(v) => (format!("{v}"), 3),
            Expr::Coef(c, _) => (c.clone(), 3),
            Expr::Var(i) => (names[*i].to_string(), 3),
            Expr::Call(f, a) => (format!("{}({})", f.name(), a.render_prec(names, 0)), 3),
            Expr::Neg(a) => (format!("-{}", a.render_prec(names, 3)), 2),
            Expr::Mul(a, b) => (
                format!("{} * {}", a.render_prec(names, 2), b.render_prec(names, 3)),
                2,
            ),
            Expr::Add(a, b) => (
                format!("{} + {}", a.render_prec(names, 1), b.render_prec(names, 2)),
                1,
            ),
            Expr::Sub(a, b) => (
                format!("{} - {}", a.render_prec(names, 1), b.render_prec(names, 2)),
                1,
            ),
        };
        if p < prec {
            format!("({s})")
        } else {
            s
        }
    }
}

fn zip(a: Vec<f64>, b: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.into_iter().zip(b).map(|(x, y)| f(x, y)).collect()
}

pub(crate) enum Ident {
    Var(usize),
    Coef(String, f64),
}

pub(crate) struct Parsed {
    pub expr: Expr,
    pub noise: Option<Noise>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn lex(s: &str) -> Result<Vec<Tok>, String> {
    let mut out = Vec::new();
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_ascii_digit()
                    || chars[i] == '.'
                    || chars[i] == 'e'
                    || chars[i] == 'E'
                    || ((chars[i] == '-' || chars[i] == '+') && matches!(chars[i - 1], 'e' | 'E')))
            {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            out.push(Tok::Num(
                text.parse().map_err(|_| format!("invalid number `{text}`"))?,
            ));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*(),".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(format!("unexpected character `{c}`"));
        }
    }
    Ok(out)
}

/// Intermediate tree where noise calls may appear anywhere; validation then
/// requires exactly one noise term at the top level of the sum.
enum Node {
    Expr(Expr),
    Noise(Noise),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
}

struct Parser<'a, F: Fn(&str) -> Option<Ident>> {
    toks: Vec<Tok>,
    pos: usize,
    lookup: &'a F,
}

impl<F: Fn(&str) -> Option<Ident>> Parser<'_, F> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), String> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(format!("expected `{c}`"))
        }
    }

    fn sum(&mut self) -> Result<Node, String> {
        let mut lhs = self.product()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.product()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.product()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> Result<Node, String> {
        let mut lhs = self.unary()?;
        while self.eat('*') {
            let rhs = self.unary()?;
            lhs = Node::Expr(Expr::Mul(Box::new(plain(lhs)?), Box::new(plain(rhs)?)));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, String> {
        if self.eat('-') {
            return Ok(Node::Expr(Expr::Neg(Box::new(plain(self.unary()?)?))));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Node, String> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Node::Expr(Expr::Num(v)))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let inner = self.sum()?;
                self.expect(')')?;
                Ok(Node::Expr(plain(inner)?))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.eat('(') {
                    let mut args = vec![plain(self.sum()?)?];
                    while self.eat(',') {
                        args.push(plain(self.sum()?)?);
                    }
                    self.expect(')')?;
                    return self.call(&name, args);
                }
                match (self.lookup)(&name) {
                    Some(Ident::Var(i)) => Ok(Node::Expr(Expr::Var(i))),
                    Some(Ident::Coef(c, v)) => Ok(Node::Expr(Expr::Coef(c, v))),
                    None => Err(format!("`{name}` is not an earlier variable or coefficient")),
                }
            }
            Some(Tok::Sym(c)) => Err(format!("unexpected `{c}`")),
            None => Err("unexpected end of expression".into()),
        }
    }

    fn call(&self, name: &str, args: Vec<Expr>) -> Result<Node, String> {
        let arity = |k: usize| -> Result<(), String> {
            if args.len() == k {
                Ok(())
            } else {
                Err(format!("`{name}` takes {k} argument(s), got {}", args.len()))
            }
        };
        let constant = |e: &Expr| -> Result<f64, String> {
            if e.has_vars() {
                Err(format!("`{name}` parameters must be constants"))
            } else {
                Ok(e.eval_const())
            }
        };
        let func = |f: Func| -> Result<Node, String> {
            arity(1)?;
            Ok(Node::Expr(Expr::Call(f, Box::new(args[0].clone()))))
        };
        match name {
            "sin" => func(Func::Sin),
            "exp" => func(Func::Exp),
            "tanh" => func(Func::Tanh),
            "normal" => {
                arity(2)?;
                let (mu, sd) = (constant(&args[0])?, constant(&args[1])?);
                if sd.is_nan() || sd < 0.0 || !mu.is_finite() || !sd.is_finite() {
                    return Err(format!("normal({mu}, {sd}) needs a finite mean and sd >= 0"));
                }
                Ok(Node::Noise(Noise::Normal { mu, sd }))
            }
            "bernoulli" => {
                arity(1)?;
                let q = constant(&args[0])?;
                if !(0.0..=1.0).contains(&q) {
                    return Err(format!("bernoulli({q}) needs 0 <= q <= 1"));
                }
                Ok(Node::Noise(Noise::Bernoulli { q }))
            }
            other => Err(format!("unknown function `{other}`")),
        }
    }
}

fn plain(n: Node) -> Result<Expr, String> {
    match n {
        Node::Expr(e) => Ok(e),
        Node::Noise(_) => Err("noise must be a top-level additive term".into()),
        Node::Add(a, b) => Ok(Expr::Add(Box::new(plain(*a)?), Box::new(plain(*b)?))),
        Node::Sub(a, b) => Ok(Expr::Sub(Box::new(plain(*a)?), Box::new(plain(*b)?))),
    }
}

/// Splits a top-level sum into signed terms.
fn terms(n: Node, sign: f64, out: &mut Vec<(f64, Node)>) {
    match n {
        Node::Add(a, b) => {
            terms(*a, sign, out);
            terms(*b, sign, out);
        }
        Node::Sub(a, b) => {
            terms(*a, sign, out);
            terms(*b, -sign, out);
        }
        other => out.push((sign, other)),
    }
}

pub(crate) fn parse<F: Fn(&str) -> Option<Ident>>(text: &str, lookup: &F) -> Result<Parsed, String> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        lookup,
    };
    let tree = p.sum()?;
    if let Some(t) = p.peek() {
        return Err(format!("unexpected trailing input at {t:?}"));
    }
    let mut parts = Vec::new();
    terms(tree, 1.0, &mut parts);
    let mut noise = None;
    let mut expr: Option<Expr> = None;
    for (sign, node) in parts {
        match node {
            Node::Noise(n) => {
                if noise.is_some() {
                    return Err("at most one noise term per equation".into());
                }
                if sign < 0.0 {
                    return Err("noise must be added, not subtracted".into());
                }
                noise = Some(n);
            }
            other => {
                let e = plain(other)?;
                expr = Some(match (expr, sign < 0.0) {
                    (None, false) => e,
                    (None, true) => Expr::Neg(Box::new(e)),
                    (Some(acc), false) => Expr::Add(Box::new(acc), Box::new(e)),
                    (Some(acc), true) => Expr::Sub(Box::new(acc), Box::new(e)),
                });
            }
        }
    }
    Ok(Parsed {
        expr: expr.unwrap_or(Expr::Num(0.0)),
        noise,
    })
}
