//! Expression trees for problem files: parsing, evaluation and symbolic
//! differentiation.
//!
//! Trees are built either from infix text (`"x0^2 - abs(x1)"`) or from a JSON
//! object form (`{"op": "add", "args": [...]}`, `{"var": 0}`,
//! `{"const": 2.0}`). Variables are zero-based: `x0, x1, ...`.

use std::fmt;

use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Abs(Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Cos(Box<Expr>),
    Sin(Box<Expr>),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
    /// Sign function; appears only in derivatives of `abs`.
    Sign(Box<Expr>),
    /// Heaviside step, `1` when the argument is `>= 0`; appears only in
    /// derivatives of `max`/`min`.
    Step(Box<Expr>),
}

fn b(e: Expr) -> Box<Expr> {
    Box::new(e)
}

// Constructors with light constant folding, so derivatives stay readable.
#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn add(a: Expr, c: Expr) -> Expr {
        match (a, c) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
            (Expr::Const(z), e) | (e, Expr::Const(z)) if z == 0.0 => e,
            (a, c) => Expr::Add(b(a), b(c)),
        }
    }

    pub fn sub(a: Expr, c: Expr) -> Expr {
        match (a, c) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
            (e, Expr::Const(z)) if z == 0.0 => e,
            (Expr::Const(z), e) if z == 0.0 => Expr::neg(e),
            (a, c) => Expr::Sub(b(a), b(c)),
        }
    }

    pub fn mul(a: Expr, c: Expr) -> Expr {
        match (a, c) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
            (Expr::Const(z), _) | (_, Expr::Const(z)) if z == 0.0 => Expr::Const(0.0),
            (Expr::Const(o), e) | (e, Expr::Const(o)) if o == 1.0 => e,
            (a, c) => Expr::Mul(b(a), b(c)),
        }
    }

    pub fn div(a: Expr, c: Expr) -> Expr {
        match (a, c) {
            (Expr::Const(z), _) if z == 0.0 => Expr::Const(0.0),
            (e, Expr::Const(o)) if o == 1.0 => e,
            (a, c) => Expr::Div(b(a), b(c)),
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(x) => Expr::Const(-x),
            Expr::Neg(inner) => *inner,
            e => Expr::Neg(b(e)),
        }
    }

    pub fn pow(a: Expr, c: Expr) -> Expr {
        match (a, c) {
            (_, Expr::Const(z)) if z == 0.0 => Expr::Const(1.0),
            (e, Expr::Const(o)) if o == 1.0 => e,
            (a, c) => Expr::Pow(b(a), b(c)),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Add(a, c) => a.eval(x) + c.eval(x),
            Expr::Sub(a, c) => a.eval(x) - c.eval(x),
            Expr::Mul(a, c) => a.eval(x) * c.eval(x),
            Expr::Div(a, c) => a.eval(x) / c.eval(x),
            Expr::Pow(a, c) => {
                let base = a.eval(x);
                match c.as_ref() {
                    Expr::Const(e) if e.fract() == 0.0 && e.abs() < 64.0 => base.powi(*e as i32),
                    other => base.powf(other.eval(x)),
                }
            }
            Expr::Neg(a) => -a.eval(x),
            Expr::Abs(a) => a.eval(x).abs(),
            Expr::Max(a, c) => a.eval(x).max(c.eval(x)),
            Expr::Min(a, c) => a.eval(x).min(c.eval(x)),
            Expr::Cos(a) => a.eval(x).cos(),
            Expr::Sin(a) => a.eval(x).sin(),
            Expr::Exp(a) => a.eval(x).exp(),
            Expr::Ln(a) => a.eval(x).ln(),
            Expr::Sign(a) => {
                let v = a.eval(x);
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Expr::Step(a) => {
                if a.eval(x) >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Largest variable index + 1 (0 for constant trees).
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Add(a, c)
            | Expr::Sub(a, c)
            | Expr::Mul(a, c)
            | Expr::Div(a, c)
            | Expr::Pow(a, c)
            | Expr::Max(a, c)
            | Expr::Min(a, c) => a.arity().max(c.arity()),
            Expr::Neg(a)
            | Expr::Abs(a)
            | Expr::Cos(a)
            | Expr::Sin(a)
            | Expr::Exp(a)
            | Expr::Ln(a)
            | Expr::Sign(a)
            | Expr::Step(a) => a.arity(),
        }
    }

    /// True when the tree has no kinks (`abs`, `max`, `min`, sign/step).
    pub fn is_smooth(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => true,
            Expr::Abs(_) | Expr::Max(..) | Expr::Min(..) | Expr::Sign(_) | Expr::Step(_) => false,
            Expr::Add(a, c) | Expr::Sub(a, c) | Expr::Mul(a, c) | Expr::Div(a, c) | Expr::Pow(a, c) => {
                a.is_smooth() && c.is_smooth()
            }
            Expr::Neg(a) | Expr::Cos(a) | Expr::Sin(a) | Expr::Exp(a) | Expr::Ln(a) => a.is_smooth(),
        }
    }

    /// Symbolic partial derivative with respect to `x_var`. Kinks
    /// differentiate to the one-sided rule encoded by `Sign`/`Step`.
    pub fn derivative(&self, var: usize) -> Expr {
        use Expr as E;
        match self {
            E::Const(_) => E::Const(0.0),
            E::Var(i) => E::Const(if *i == var { 1.0 } else { 0.0 }),
            E::Add(a, c) => E::add(a.derivative(var), c.derivative(var)),
            E::Sub(a, c) => E::sub(a.derivative(var), c.derivative(var)),
            E::Mul(a, c) => E::add(
                E::mul(a.derivative(var), (**c).clone()),
                E::mul((**a).clone(), c.derivative(var)),
            ),
            E::Div(a, c) => E::div(
                E::sub(
                    E::mul(a.derivative(var), (**c).clone()),
                    E::mul((**a).clone(), c.derivative(var)),
                ),
                E::pow((**c).clone(), E::Const(2.0)),
            ),
            E::Pow(a, c) => {
                let da = a.derivative(var);
                match c.as_ref() {
                    E::Const(p) => E::mul(
                        E::mul(E::Const(*p), E::pow((**a).clone(), E::Const(p - 1.0))),
                        da,
                    ),
                    _ => {
                        // d(u^v) = u^v (v' ln u + v u'/u)
                        let dc = c.derivative(var);
                        E::mul(
                            self.clone(),
                            E::add(
                                E::mul(dc, E::Ln(b((**a).clone()))),
                                E::div(E::mul((**c).clone(), da), (**a).clone()),
                            ),
                        )
                    }
                }
            }
            E::Neg(a) => E::neg(a.derivative(var)),
            E::Abs(a) => E::mul(E::Sign(a.clone()), a.derivative(var)),
            E::Max(a, c) => {
                let step = E::Step(b(E::sub((**a).clone(), (**c).clone())));
                E::add(
                    E::mul(step.clone(), a.derivative(var)),
                    E::mul(E::sub(E::Const(1.0), step), c.derivative(var)),
                )
            }
            E::Min(a, c) => {
                let step = E::Step(b(E::sub((**c).clone(), (**a).clone())));
                E::add(
                    E::mul(step.clone(), a.derivative(var)),
                    E::mul(E::sub(E::Const(1.0), step), c.derivative(var)),
                )
            }
            E::Cos(a) => E::neg(E::mul(E::Sin(a.clone()), a.derivative(var))),
            E::Sin(a) => E::mul(E::Cos(a.clone()), a.derivative(var)),
            E::Exp(a) => E::mul(self.clone(), a.derivative(var)),
            E::Ln(a) => E::div(a.derivative(var), (**a).clone()),
            E::Sign(_) | E::Step(_) => E::Const(0.0),
        }
    }

    /// Parses infix text.
    pub fn parse(text: &str) -> Result<Expr> {
        let tokens = tokenize(text)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Parse(format!(
                "unexpected trailing input in `{text}` at token {}",
                p.pos
            )));
        }
        Ok(e)
    }

    /// Accepts a number, an infix string, or the object form.
    pub fn from_json(v: &Value) -> Result<Expr> {
        match v {
            Value::Number(n) => Ok(Expr::Const(n.as_f64().unwrap_or(f64::NAN))),
            Value::String(s) => Expr::parse(s),
            Value::Object(map) => {
                if let Some(c) = map.get("const") {
                    return c
                        .as_f64()
                        .map(Expr::Const)
                        .ok_or_else(|| Error::Parse("`const` must be a number".into()));
                }
                if let Some(i) = map.get("var") {
                    return i
                        .as_u64()
                        .map(|i| Expr::Var(i as usize))
                        .ok_or_else(|| Error::Parse("`var` must be a non-negative integer".into()));
                }
                let op = map
                    .get("op")
                    .and_then(Value::as_str)
                    .ok_or_else(|| Error::Parse("expression object needs `op`, `var` or `const`".into()))?;
                let args: Vec<Expr> = map
                    .get("args")
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::Parse(format!("`{op}` needs an `args` array")))?
                    .iter()
                    .map(Expr::from_json)
                    .collect::<Result<_>>()?;
                build_op(op, args)
            }
            _ => Err(Error::Parse(format!("cannot read expression from {v}"))),
        }
    }
}

fn build_op(op: &str, mut args: Vec<Expr>) -> Result<Expr> {
    let need = |n: usize, args: &Vec<Expr>| -> Result<()> {
        if args.len() != n {
            Err(Error::Parse(format!("`{op}` takes {n} argument(s), got {}", args.len())))
        } else {
            Ok(())
        }
    };
    match op {
        "add" | "+" | "mul" | "*" => {
            if args.is_empty() {
                return Err(Error::Parse(format!("`{op}` needs at least one argument")));
            }
            let is_add = op == "add" || op == "+";
            let first = args.remove(0);
            Ok(args.into_iter().fold(first, |acc, e| {
                if is_add {
                    Expr::Add(b(acc), b(e))
                } else {
                    Expr::Mul(b(acc), b(e))
                }
            }))
        }
        "sub" | "-" => {
            if args.len() == 1 {
                return Ok(Expr::Neg(b(args.remove(0))));
            }
            need(2, &args)?;
            let c = args.pop().unwrap();
            Ok(Expr::Sub(b(args.pop().unwrap()), b(c)))
        }
        "div" | "/" | "pow" | "^" | "max" | "min" => {
            need(2, &args)?;
            let c = b(args.pop().unwrap());
            let a = b(args.pop().unwrap());
            Ok(match op {
                "div" | "/" => Expr::Div(a, c),
                "pow" | "^" => Expr::Pow(a, c),
                "max" => Expr::Max(a, c),
                _ => Expr::Min(a, c),
            })
        }
        "neg" | "abs" | "cos" | "sin" | "exp" | "ln" | "sqrt" => {
            need(1, &args)?;
            let a = b(args.pop().unwrap());
            Ok(match op {
                "neg" => Expr::Neg(a),
                "abs" => Expr::Abs(a),
                "cos" => Expr::Cos(a),
                "sin" => Expr::Sin(a),
                "exp" => Expr::Exp(a),
                "ln" => Expr::Ln(a),
                _ => Expr::Pow(a, b(Expr::Const(0.5))),
            })
        }
        other => Err(Error::Parse(format!("unknown operator `{other}`"))),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Add(a, c) => write!(f, "({a} + {c})"),
            Expr::Sub(a, c) => write!(f, "({a} - {c})"),
            Expr::Mul(a, c) => write!(f, "{a}*{c}"),
            Expr::Div(a, c) => write!(f, "{a}/{c}"),
            Expr::Pow(a, c) => write!(f, "{a}^{c}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Abs(a) => write!(f, "abs({a})"),
            Expr::Max(a, c) => write!(f, "max({a}, {c})"),
            Expr::Min(a, c) => write!(f, "min({a}, {c})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Ln(a) => write!(f, "ln({a})"),
            Expr::Sign(a) => write!(f, "sign({a})"),
            Expr::Step(a) => write!(f, "step({a})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = i;
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                if i < chars.len() && chars[i].is_ascii_digit() {
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number `{s}`")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else {
            out.push(match c {
                '+' | '-' | '*' | '/' | '^' => Token::Op(c),
                '(' => Token::LParen,
                ')' => Token::RParen,
                ',' => Token::Comma,
                other => return Err(Error::Parse(format!("unexpected character `{other}`"))),
            });
            i += 1;
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

    fn expect(&mut self, t: Token) -> Result<()> {
        match self.next() {
            Some(ref got) if *got == t => Ok(()),
            got => Err(Error::Parse(format!("expected {t:?}, found {got:?}"))),
        }
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(b(lhs), b(rhs))
            } else {
                Expr::Sub(b(lhs), b(rhs))
            };
        }
        Ok(lhs)
    }

    // term := unary (('*'|'/') unary)*
    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(b(lhs), b(rhs))
            } else {
                Expr::Div(b(lhs), b(rhs))
            };
        }
        Ok(lhs)
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Expr> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(b(self.unary()?)));
        }
        if let Some(Token::Op('+')) = self.peek() {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    // power := atom ('^' unary)?   (right associative)
    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(b(base), b(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                if let Some(Token::LParen) = self.peek() {
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while let Some(Token::Comma) = self.peek() {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(Token::RParen)?;
                    return build_op(&name, args);
                }
                if name == "pi" {
                    return Ok(Expr::Const(std::f64::consts::PI));
                }
                if let Some(idx) = name.strip_prefix('x') {
                    if let Ok(i) = idx.parse::<usize>() {
                        return Ok(Expr::Var(i));
                    }
                }
                if name == "x" {
                    return Ok(Expr::Var(0));
                }
                Err(Error::Parse(format!("unknown identifier `{name}`")))
            }
            other => Err(Error::Parse(format!("unexpected token {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_eval() {
        let e = Expr::parse("x0^2 - x1 + 2*cos(x1)").unwrap();
        assert_eq!(e.eval(&[0.0, 0.0]), 2.0);
        assert_eq!(e.eval(&[1.0, 0.0]), 3.0);
        assert_eq!(e.arity(), 2);
        assert!(e.is_smooth());
        assert_eq!(Expr::parse("-x0^2").unwrap().eval(&[3.0]), -9.0);
        assert_eq!(Expr::parse("2^3^2").unwrap().eval(&[]), 512.0);
        assert_eq!(Expr::parse("1e-3*x").unwrap().eval(&[2.0]), 2e-3);
    }

    #[test]
    fn kinked_tree_is_not_smooth() {
        let e = Expr::parse("x0^2 - abs(x1)").unwrap();
        assert!(!e.is_smooth());
        assert_eq!(e.eval(&[0.0, -0.5]), -0.5);
    }

    #[test]
    fn derivative_matches_hand_rule() {
        let e = Expr::parse("x0*sin(x1) + exp(x0)/x1").unwrap();
        let x = [0.7, 1.3];
        let d0 = e.derivative(0).eval(&x);
        let d1 = e.derivative(1).eval(&x);
        assert!((d0 - (1.3f64.sin() + 0.7f64.exp() / 1.3)).abs() < 1e-12);
        assert!((d1 - (0.7 * 1.3f64.cos() - 0.7f64.exp() / 1.69)).abs() < 1e-12);
    }

    #[test]
    fn json_object_form() {
        let v: Value = serde_json::json!({"op": "add", "args": [{"op": "pow", "args": [{"var": 0}, 2]}, {"const": 1}]});
        let e = Expr::from_json(&v).unwrap();
        assert_eq!(e.eval(&[3.0]), 10.0);
        assert!(Expr::from_json(&serde_json::json!({"op": "frob", "args": []})).is_err());
    }

    #[test]
    fn parse_errors() {
        assert!(Expr::parse("x0 +").is_err());
        assert!(Expr::parse("foo(x0)").is_err());
        assert!(Expr::parse("(x0").is_err());
        assert!(Expr::parse("x0 $ 1").is_err());
    }
}
