//! Arithmetic expression grammar for data and drivers.
//!
//! Grammar (position-reporting recursive descent):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := factor (('*' | '/') factor)*
//! factor  := unary ('^' factor)?            -- right associative
//! unary   := '-' unary | primary
//! primary := NUMBER | IDENT ['(' expr (',' expr)* ')'] | '(' expr ')'
//! ```
//!
//! Variables: `t`, `state` (first Brownian coordinate, alias `s`), `state2`,
//! `y`, `z` (first martingale coordinate), `z2`, `znorm` (`|z|`), and `x`
//! (modulus argument).  Constants: `pi`, `e`.  Functions: `abs`, `sqrt`,
//! `cbrt`, `exp`, `ln`, `sin`, `cos`, `tan`, `tanh`, `sgn`, and two-argument
//! `min`, `max`, `pow`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    State,
    State2,
    Y,
    Z,
    Z2,
    ZNorm,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Sqrt,
    Cbrt,
    Exp,
    Ln,
    Sin,
    Cos,
    Tan,
    Tanh,
    Sgn,
    Min,
    Max,
    Pow,
}

impl Func {
    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max | Func::Pow => 2,
            _ => 1,
        }
    }
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
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Values the variables resolve to at one evaluation point.
#[derive(Debug, Clone, Copy)]
pub struct ExprCtx<'a> {
    pub t: f64,
    pub state: &'a [f64],
    pub y: f64,
    pub z: &'a [f64],
    pub x: f64,
}

impl<'a> ExprCtx<'a> {
    /// Context for data expressions (`xi`, `L`, `U`, `V`): no `y`, `z`.
    pub fn data(t: f64, state: &'a [f64]) -> Self {
        Self {
            t,
            state,
            y: 0.0,
            z: &[],
            x: 0.0,
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
        };
        p.skip_ws();
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, ctx: &ExprCtx) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(v) => match v {
                Var::T => ctx.t,
                Var::State => ctx.state.first().copied().unwrap_or(0.0),
                Var::State2 => ctx.state.get(1).copied().unwrap_or(0.0),
                Var::Y => ctx.y,
                Var::Z => ctx.z.first().copied().unwrap_or(0.0),
                Var::Z2 => ctx.z.get(1).copied().unwrap_or(0.0),
                Var::ZNorm => ctx.z.iter().map(|v| v * v).sum::<f64>().sqrt(),
                Var::X => ctx.x,
            },
            Expr::Neg(e) => -e.eval(ctx),
            Expr::Add(a, b) => a.eval(ctx) + b.eval(ctx),
            Expr::Sub(a, b) => a.eval(ctx) - b.eval(ctx),
            Expr::Mul(a, b) => a.eval(ctx) * b.eval(ctx),
            Expr::Div(a, b) => a.eval(ctx) / b.eval(ctx),
            Expr::Pow(a, b) => a.eval(ctx).powf(b.eval(ctx)),
            Expr::Call(f, args) => {
                let a0 = args[0].eval(ctx);
                match f {
                    Func::Abs => a0.abs(),
                    Func::Sqrt => a0.sqrt(),
                    Func::Cbrt => a0.cbrt(),
                    Func::Exp => a0.exp(),
                    Func::Ln => a0.ln(),
                    Func::Sin => a0.sin(),
                    Func::Cos => a0.cos(),
                    Func::Tan => a0.tan(),
                    Func::Tanh => a0.tanh(),
                    Func::Sgn => {
                        if a0 > 0.0 {
                            1.0
                        } else if a0 < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    Func::Min => a0.min(args[1].eval(ctx)),
                    Func::Max => a0.max(args[1].eval(ctx)),
                    Func::Pow => a0.powf(args[1].eval(ctx)),
                }
            }
        }
    }

    pub fn uses(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(e) => e.uses(var),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.uses(var) || b.uses(var),
            Expr::Call(_, args) => args.iter().any(|a| a.uses(var)),
        }
    }

    /// True when the expression reads the solution variables.
    pub fn uses_solution_vars(&self) -> bool {
        self.uses(Var::Y) || self.uses(Var::Z) || self.uses(Var::Z2) || self.uses(Var::ZNorm)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, msg: impl Into<String>) -> Error {
        Error::ExprParse {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            self.skip_ws();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.unary()?;
        if self.eat(b'^') {
            let exp = self.factor()?; // right associative
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.eat(b'(');
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(c) => Err(self.error(format!("unexpected character `{}`", c as char))),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E')
                && self.pos > start
                && self
                    .src
                    .get(self.pos + 1)
                    .is_some_and(|&n| n.is_ascii_digit() || n == b'+' || n == b'-')
            {
                self.pos += 2;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let v: f64 = text.parse().map_err(|_| {
            self.error(format!("invalid number literal `{text}`"))
        })?;
        self.skip_ws();
        Ok(Expr::Num(v))
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' || c == b'.' {
                self.pos += 1;
            } else {
                break;
            }
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_owned();
        self.skip_ws();
        if let Some(var) = match name.as_str() {
            "t" => Some(Var::T),
            "state" | "s" => Some(Var::State),
            "state2" => Some(Var::State2),
            "y" => Some(Var::Y),
            "z" => Some(Var::Z),
            "z2" => Some(Var::Z2),
            "znorm" => Some(Var::ZNorm),
            "x" => Some(Var::X),
            _ => None,
        } {
            return Ok(Expr::Var(var));
        }
        match name.as_str() {
            "pi" => return Ok(Expr::Num(std::f64::consts::PI)),
            "e" => return Ok(Expr::Num(std::f64::consts::E)),
            _ => {}
        }
        let func = match name.as_str() {
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "cbrt" => Func::Cbrt,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "tanh" => Func::Tanh,
            "sgn" => Func::Sgn,
            "min" => Func::Min,
            "max" => Func::Max,
            "pow" => Func::Pow,
            other => return Err(self.error(format!("unknown identifier `{other}`"))),
        };
        if !self.eat(b'(') {
            return Err(self.error(format!("function `{name}` requires arguments")));
        }
        let mut args = vec![self.expr()?];
        while self.eat(b',') {
            args.push(self.expr()?);
        }
        if !self.eat(b')') {
            return Err(self.error("expected `)`"));
        }
        if args.len() != func.arity() {
            return Err(self.error(format!(
                "function `{name}` takes {} argument(s), got {}",
                func.arity(),
                args.len()
            )));
        }
        Ok(Expr::Call(func, args))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_data(src: &str, t: f64, s: f64) -> f64 {
        Expr::parse(src).unwrap().eval(&ExprCtx::data(t, &[s]))
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(eval_data("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(eval_data("(1 + 2) * 3", 0.0, 0.0), 9.0);
        assert_eq!(eval_data("2 ^ 3 ^ 2", 0.0, 0.0), 512.0); // right assoc
        assert_eq!(eval_data("-2 ^ 2", 0.0, 0.0), 4.0); // (-2)^2 via unary first
        assert_eq!(eval_data("1 - 2 - 3", 0.0, 0.0), -4.0);
    }

    #[test]
    fn variables_and_functions() {
        assert_eq!(eval_data("state ^ 2", 0.0, 3.0), 9.0);
        assert_eq!(eval_data("max(0.5, s)", 0.0, 0.25), 0.5);
        assert_eq!(eval_data("abs(-2) + sqrt(4)", 0.0, 0.0), 4.0);
        assert_eq!(eval_data("t * 10", 0.5, 0.0), 5.0);
        let g = Expr::parse("y + 2 * znorm").unwrap();
        let v = g.eval(&ExprCtx {
            t: 0.0,
            state: &[0.0],
            y: 1.0,
            z: &[3.0, 4.0],
            x: 0.0,
        });
        assert_eq!(v, 11.0);
    }

    #[test]
    fn parse_errors_carry_positions() {
        match Expr::parse("1 + ") {
            Err(Error::ExprParse { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("min(1)").is_err());
        assert!(Expr::parse("1 2").is_err());
    }

    #[test]
    fn solution_variable_detection() {
        assert!(!Expr::parse("s^2 + t").unwrap().uses_solution_vars());
        assert!(Expr::parse("0.5 * y").unwrap().uses_solution_vars());
        assert!(Expr::parse("cos(znorm)").unwrap().uses_solution_vars());
    }

    #[test]
    fn scientific_notation() {
        assert_eq!(eval_data("1e-3 + 2.5e2", 0.0, 0.0), 250.001);
    }
}
