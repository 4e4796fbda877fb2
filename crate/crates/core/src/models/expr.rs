//! Polynomial/rational right-hand sides written as text, with jacobians
//! obtained by symbolic differentiation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{ExternalFactors, ModelSystem};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sym {
    State(usize),
    Param(usize),
    Factor(usize),
    Time,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Sym),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
}

fn num(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(v) => Some(*v),
        _ => None,
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (num(&a), num(&b)) {
        (Some(x), Some(y)) => Expr::Num(x + y),
        (Some(0.0), _) => b,
        (_, Some(0.0)) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (num(&a), num(&b)) {
        (Some(x), Some(y)) => Expr::Num(x - y),
        (_, Some(0.0)) => a,
        (Some(0.0), _) => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (num(&a), num(&b)) {
        (Some(x), Some(y)) => Expr::Num(x * y),
        (Some(0.0), _) | (_, Some(0.0)) => Expr::Num(0.0),
        (Some(1.0), _) => b,
        (_, Some(1.0)) => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (num(&a), num(&b)) {
        (Some(0.0), _) => Expr::Num(0.0),
        (_, Some(1.0)) => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn pow(a: Expr, k: i32) -> Expr {
    match (k, num(&a)) {
        (0, _) => Expr::Num(1.0),
        (1, _) => a,
        (_, Some(v)) => Expr::Num(v.powi(k)),
        _ => Expr::Pow(Box::new(a), k),
    }
}

/// Values the expression may reference.
pub struct Env<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub theta: &'a [f64],
    pub factors: &'a [f64],
}

impl Expr {
    pub fn eval(&self, env: &Env<'_>) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Sym::State(i)) => env.x[*i],
            Expr::Var(Sym::Param(i)) => env.theta[*i],
            Expr::Var(Sym::Factor(i)) => env.factors[*i],
            Expr::Var(Sym::Time) => env.t,
            Expr::Neg(a) => -a.eval(env),
            Expr::Add(a, b) => a.eval(env) + b.eval(env),
            Expr::Sub(a, b) => a.eval(env) - b.eval(env),
            Expr::Mul(a, b) => a.eval(env) * b.eval(env),
            Expr::Div(a, b) => a.eval(env) / b.eval(env),
            Expr::Pow(a, k) => a.eval(env).powi(*k),
        }
    }

    pub fn diff(&self, s: Sym) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(v) => Expr::Num(if *v == s { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff(s)),
            Expr::Add(a, b) => add(a.diff(s), b.diff(s)),
            Expr::Sub(a, b) => sub(a.diff(s), b.diff(s)),
            Expr::Mul(a, b) => add(mul(a.diff(s), (**b).clone()), mul((**a).clone(), b.diff(s))),
            Expr::Div(a, b) => {
                // (a'b − ab') / b²
                let num = sub(mul(a.diff(s), (**b).clone()), mul((**a).clone(), b.diff(s)));
                div(num, pow((**b).clone(), 2))
            }
            Expr::Pow(a, k) => mul(mul(Expr::Num(*k as f64), pow((**a).clone(), k - 1)), a.diff(s)),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    chars: Vec<char>,
    pos: usize,
    lookup: &'a dyn Fn(&str) -> Option<Sym>,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Config(format!("{msg} at position {} in '{}'", self.pos, self.src))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                '+' => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                '-' => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.peek() {
            match c {
                '*' => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                '/' => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some('-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.peek() == Some('+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            let negative = if self.peek() == Some('-') {
                self.pos += 1;
                true
            } else {
                false
            };
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let digits: String = self.chars[start..self.pos].iter().collect();
            let k: i32 = digits.parse().map_err(|_| self.err("exponent must be an integer"))?;
            return Ok(Expr::Pow(Box::new(base), if negative { -k } else { k }));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let start = self.pos;
                while self.pos < self.chars.len() {
                    let c = self.chars[self.pos];
                    let exp_sign =
                        (c == '+' || c == '-') && self.pos > start && matches!(self.chars[self.pos - 1], 'e' | 'E');
                    if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let text: String = self.chars[start..self.pos].iter().collect();
                text.parse::<f64>().map(Expr::Num).map_err(|_| self.err("malformed number"))
            }
            Some(c) if c.is_alphabetic() || c == '_' => {
                let start = self.pos;
                while self.pos < self.chars.len()
                    && (self.chars[self.pos].is_alphanumeric() || self.chars[self.pos] == '_')
                {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().collect();
                (self.lookup)(&name)
                    .map(Expr::Var)
                    .ok_or_else(|| Error::Config(format!("unknown symbol '{name}' in '{}'", self.src)))
            }
            _ => Err(self.err("expected a number, symbol or '('")),
        }
    }
}

/// Parse `text` resolving identifiers with `lookup`.
pub fn parse(text: &str, lookup: &dyn Fn(&str) -> Option<Sym>) -> Result<Expr> {
    let mut p = Parser { src: text, chars: text.chars().collect(), pos: 0, lookup };
    let e = p.expr()?;
    if p.peek().is_some() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

/// Text description of a user model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InlineModel {
    pub states: Vec<String>,
    pub params: Vec<String>,
    #[serde(default)]
    pub factors: Vec<String>,
    /// One expression per state.
    pub rhs: Vec<String>,
    /// Initial state per state, in terms of parameters and factors.
    pub initial: Vec<String>,
}

/// A [`ModelSystem`] compiled from an [`InlineModel`].
pub struct ExprModel {
    spec: InlineModel,
    rhs: Vec<Expr>,
    jx: Vec<Expr>,
    jp: Vec<Expr>,
    init: Vec<Expr>,
    init_sens: Vec<Expr>,
}

impl ExprModel {
    pub fn new(spec: InlineModel) -> Result<Self> {
        let n = spec.states.len();
        if n == 0 || spec.params.is_empty() {
            return Err(Error::Config("inline model needs at least one state and one parameter".into()));
        }
        if spec.rhs.len() != n || spec.initial.len() != n {
            return Err(Error::Config(format!(
                "inline model has {n} states but {} rhs and {} initial expressions",
                spec.rhs.len(),
                spec.initial.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in spec.states.iter().chain(&spec.params).chain(&spec.factors) {
            if name == "t" || !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("symbol '{name}' is reserved or declared twice")));
            }
        }
        let lookup = |name: &str| -> Option<Sym> {
            if name == "t" {
                return Some(Sym::Time);
            }
            spec.states
                .iter()
                .position(|s| s == name)
                .map(Sym::State)
                .or_else(|| spec.params.iter().position(|s| s == name).map(Sym::Param))
                .or_else(|| spec.factors.iter().position(|s| s == name).map(Sym::Factor))
        };
        let rhs = spec.rhs.iter().map(|s| parse(s, &lookup)).collect::<Result<Vec<_>>>()?;
        let init = spec.initial.iter().map(|s| parse(s, &lookup)).collect::<Result<Vec<_>>>()?;
        for (e, text) in init.iter().zip(&spec.initial) {
            if (0..n).any(|i| e.diff(Sym::State(i)) != Expr::Num(0.0)) || e.diff(Sym::Time) != Expr::Num(0.0) {
                return Err(Error::Config(format!("initial expression '{text}' may not use states or t")));
            }
        }
        let p = spec.params.len();
        let jx = rhs.iter().flat_map(|f| (0..n).map(move |j| f.diff(Sym::State(j)))).collect();
        let jp = rhs.iter().flat_map(|f| (0..p).map(move |k| f.diff(Sym::Param(k)))).collect();
        let init_sens = init.iter().flat_map(|f| (0..p).map(move |k| f.diff(Sym::Param(k)))).collect();
        Ok(Self { spec, rhs, jx, jp, init, init_sens })
    }

    pub fn spec(&self) -> &InlineModel {
        &self.spec
    }

    fn factor_values(&self, nu: &ExternalFactors, t: f64) -> Vec<f64> {
        self.spec.factors.iter().map(|f| nu.at(f, t)).collect()
    }

    fn fill(exprs: &[Expr], env: &Env<'_>, out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(exprs) {
            *o = e.eval(env);
        }
    }
}

impl ModelSystem for ExprModel {
    fn state_dim(&self) -> usize {
        self.spec.states.len()
    }
    fn param_dim(&self) -> usize {
        self.spec.params.len()
    }
    fn state_names(&self) -> &[String] {
        &self.spec.states
    }
    fn param_names(&self) -> &[String] {
        &self.spec.params
    }
    fn factor_names(&self) -> &[String] {
        &self.spec.factors
    }

    fn rhs(&self, t: f64, x: &[f64], theta: &[f64], nu: &ExternalFactors, dx: &mut [f64]) {
        let f = self.factor_values(nu, t);
        Self::fill(&self.rhs, &Env { t, x, theta, factors: &f }, dx);
    }

    fn jacobian_state(&self, t: f64, x: &[f64], theta: &[f64], nu: &ExternalFactors, jac: &mut [f64]) {
        let f = self.factor_values(nu, t);
        Self::fill(&self.jx, &Env { t, x, theta, factors: &f }, jac);
    }

    fn jacobian_params(&self, t: f64, x: &[f64], theta: &[f64], nu: &ExternalFactors, jac: &mut [f64]) {
        let f = self.factor_values(nu, t);
        Self::fill(&self.jp, &Env { t, x, theta, factors: &f }, jac);
    }

    fn initial_state(&self, theta: &[f64], nu: &ExternalFactors, x0: &mut [f64]) {
        let f = self.factor_values(nu, 0.0);
        Self::fill(&self.init, &Env { t: 0.0, x: &[], theta, factors: &f }, x0);
    }

    fn initial_sensitivity(&self, theta: &[f64], nu: &ExternalFactors, s0: &mut [f64]) {
        let f = self.factor_values(nu, 0.0);
        Self::fill(&self.init_sens, &Env { t: 0.0, x: &[], theta, factors: &f }, s0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::jacobian_discrepancy;

    fn vars(name: &str) -> Option<Sym> {
        match name {
            "x" => Some(Sym::State(0)),
            "a" => Some(Sym::Param(0)),
            "t" => Some(Sym::Time),
            _ => None,
        }
    }

    fn at(e: &Expr, x: f64, a: f64, t: f64) -> f64 {
        e.eval(&Env { t, x: &[x], theta: &[a], factors: &[] })
    }

    #[test]
    fn precedence_and_powers() {
        let e = parse("1 + 2*x^2 - a/(1+x) - -3", &vars).unwrap();
        assert_eq!(at(&e, 2.0, 3.0, 0.0), 1.0 + 8.0 - 1.0 + 3.0);
        let e = parse("x^-1 * 1.5e1", &vars).unwrap();
        assert_eq!(at(&e, 2.0, 0.0, 0.0), 7.5);
        assert!(parse("x + q", &vars).is_err());
        assert!(parse("x +", &vars).is_err());
        assert!(parse("(x", &vars).is_err());
        assert!(parse("x^0.5", &vars).is_err());
    }

    #[test]
    fn derivatives_match_differences() {
        let e = parse("a*x^3/(a + x) - t*x", &vars).unwrap();
        let dx = e.diff(Sym::State(0));
        let da = e.diff(Sym::Param(0));
        let (x, a, t, h) = (1.3, 0.7, 0.4, 1e-6);
        let fd_x = (at(&e, x + h, a, t) - at(&e, x - h, a, t)) / (2.0 * h);
        let fd_a = (at(&e, x, a + h, t) - at(&e, x, a - h, t)) / (2.0 * h);
        assert!((at(&dx, x, a, t) - fd_x).abs() < 1e-7);
        assert!((at(&da, x, a, t) - fd_a).abs() < 1e-7);
    }

    #[test]
    fn inline_model_jacobians() {
        let m = ExprModel::new(InlineModel {
            states: vec!["s".into(), "p".into()],
            params: vec!["vmax".into(), "km".into(), "s0".into()],
            factors: vec!["e".into()],
            rhs: vec!["-vmax*e*s/(km + s)".into(), "vmax*e*s/(km + s) - 0.1*p".into()],
            initial: vec!["s0".into(), "0".into()],
        })
        .unwrap();
        let nu = ExternalFactors::new("c").with("e", 2.0);
        assert!(jacobian_discrepancy(&m, 0.0, &[1.5, 0.2], &[1.0, 0.5, 3.0], &nu) < 1e-5);
        let mut s0 = vec![0.0; 6];
        m.initial_sensitivity(&[1.0, 0.5, 3.0], &nu, &mut s0);
        assert_eq!(s0, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn inline_model_validation() {
        let base = InlineModel {
            states: vec!["x".into()],
            params: vec!["k".into()],
            factors: vec![],
            rhs: vec!["-k*x".into()],
            initial: vec!["1".into()],
        };
        assert!(ExprModel::new(base.clone()).is_ok());
        let mut bad = base.clone();
        bad.initial = vec!["x".into()];
        assert!(ExprModel::new(bad).is_err());
        let mut bad = base.clone();
        bad.params = vec!["x".into()];
        assert!(ExprModel::new(bad).is_err());
        let mut bad = base;
        bad.rhs = vec![];
        assert!(ExprModel::new(bad).is_err());
    }
}
