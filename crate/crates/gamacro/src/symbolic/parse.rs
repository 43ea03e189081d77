//! Recursive-descent parser for scalar coefficient expressions.
//!
//! Accepts `+ - * / ^` with the usual precedence, unary minus, function
//! calls `f(x)`, parenthesized groups, integer and decimal literals
//! (decimals become exact rationals), and `<...>` coefficient references
//! which lex as opaque variables including the angle brackets.

use super::{Expr, Fn1, Num, Rat};
use crate::error::Error;
use num_rational::Ratio;

pub fn parse_expr(src: &str) -> Result<Expr, Error> {
    let mut p = Parser { src: src.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::ScalarParse(format!("{msg} at byte {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), Error> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, Error> {
        let mut terms = vec![self.term()?];
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    terms.push(self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    terms.push(Expr::Neg(Box::new(self.term()?)));
                }
                _ => break,
            }
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Sum(terms) })
    }

    fn term(&mut self) -> Result<Expr, Error> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = acc.mul(self.unary()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    acc = acc.div(self.unary()?);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr, Error> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, Error> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let n = self.int_exponent()?;
            return Ok(Expr::Pow(Box::new(base), n));
        }
        Ok(base)
    }

    fn int_exponent(&mut self) -> Result<i32, Error> {
        self.skip_ws();
        let parens = self.eat(b'(');
        self.skip_ws();
        let neg = self.eat(b'-');
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("exponent must be an integer literal"));
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let mut n: i32 = digits
            .parse()
            .map_err(|_| self.err("exponent out of range"))?;
        if neg {
            n = -n;
        }
        if parens {
            self.expect(b')')?;
        }
        Ok(n)
    }

    fn atom(&mut self) -> Result<Expr, Error> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(b'<') => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos] != b'>' {
                    self.pos += 1;
                }
                if self.pos == self.src.len() {
                    return Err(self.err("unterminated `<...>` reference"));
                }
                let inner = std::str::from_utf8(&self.src[start..self.pos])
                    .map_err(|_| self.err("invalid utf-8 in reference"))?
                    .trim()
                    .to_string();
                self.pos += 1;
                if inner.is_empty() {
                    return Err(self.err("empty `<...>` reference"));
                }
                Ok(Expr::Var(format!("<{inner}>")))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.name(),
            Some(c) => Err(self.err(&format!("unexpected character `{}`", c as char))),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn name(&mut self) -> Result<Expr, Error> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_alphanumeric() || c == b'_' || c == b'.' {
                self.pos += 1;
            } else {
                break;
            }
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        if self.peek() == Some(b'(') {
            let f = Fn1::from_name(&name)
                .ok_or_else(|| Error::UnsupportedFunction(name.clone()))?;
            self.pos += 1;
            let arg = self.expr()?;
            self.expect(b')')?;
            return Ok(Expr::Func(f, Box::new(arg)));
        }
        Ok(Expr::Var(name))
    }

    fn number(&mut self) -> Result<Expr, Error> {
        self.skip_ws();
        let start = self.pos;
        let mut saw_digit = false;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
            saw_digit = true;
        }
        let int_end = self.pos;
        let mut frac = &self.src[0..0];
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            // A dot not followed by a digit belongs to a name, not a number.
            let after = self.src.get(self.pos + 1);
            if after.is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
                let fs = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                    saw_digit = true;
                }
                frac = &self.src[fs..self.pos];
            }
        }
        if !saw_digit {
            return Err(self.err("malformed number"));
        }
        let int_part = std::str::from_utf8(&self.src[start..int_end]).unwrap();
        let frac_part = std::str::from_utf8(frac).unwrap();

        let mut exp10: i32 = 0;
        if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E')
        {
            // Only treat as an exponent when digits (optionally signed) follow.
            let save = self.pos;
            self.pos += 1;
            let neg = self.pos < self.src.len()
                && (self.src[self.pos] == b'-' || self.src[self.pos] == b'+')
                && {
                    let n = self.src[self.pos] == b'-';
                    self.pos += 1;
                    n
                };
            let ds = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == ds {
                self.pos = save;
            } else {
                let digits = std::str::from_utf8(&self.src[ds..self.pos]).unwrap();
                exp10 = digits.parse().map_err(|_| self.err("exponent out of range"))?;
                if neg {
                    exp10 = -exp10;
                }
            }
        }

        Ok(Expr::Const(make_decimal(int_part, frac_part, exp10)))
    }
}

/// Builds `int.frac * 10^exp` as an exact rational, falling back to a
/// float when the parts exceed 64-bit range.
fn make_decimal(int_part: &str, frac_part: &str, exp10: i32) -> Num {
    let fallback = || {
        let text = format!(
            "{}.{}e{}",
            if int_part.is_empty() { "0" } else { int_part },
            if frac_part.is_empty() { "0" } else { frac_part },
            exp10
        );
        Num::Float(text.parse().unwrap_or(f64::NAN))
    };

    let digits = format!("{int_part}{frac_part}");
    let Ok(mantissa) = digits.parse::<i64>() else {
        return fallback();
    };
    let shift = exp10 as i64 - frac_part.len() as i64;
    let mut value = Ratio::from_integer(mantissa);
    let ten = Rat::from_integer(10);
    if shift >= 0 {
        for _ in 0..shift {
            let Some(next) = checked_mul_rat(&value, &ten) else {
                return fallback();
            };
            value = next;
        }
    } else {
        for _ in 0..(-shift) {
            let Some(next) = checked_div10_rat(&value) else {
                return fallback();
            };
            value = next;
        }
    }
    Num::Rat(value)
}

fn checked_mul_rat(a: &Rat, b: &Rat) -> Option<Rat> {
    let n = (*a.numer() as i128).checked_mul(*b.numer() as i128)?;
    let d = (*a.denom() as i128).checked_mul(*b.denom() as i128)?;
    super::rat_from_i128(n, d)
}

fn checked_div10_rat(a: &Rat) -> Option<Rat> {
    let d = (*a.denom() as i128).checked_mul(10)?;
    super::rat_from_i128(*a.numer() as i128, d)
}

#[cfg(test)]
mod tests {
    use super::super::*;

    fn p(src: &str) -> Expr {
        parse_expr(src).unwrap()
    }

    #[test]
    fn precedence_and_grouping() {
        let got = p("a + b * c");
        assert_eq!(got, Expr::var("a").add(Expr::var("b").mul(Expr::var("c"))));
        let got = p("(a + b) * c");
        assert_eq!(got, Expr::var("a").add(Expr::var("b")).mul(Expr::var("c")));
        let got = p("a / b / c");
        assert_eq!(got, Expr::var("a").div(Expr::var("b")).div(Expr::var("c")));
    }

    #[test]
    fn decimals_are_exact_rationals() {
        assert_eq!(p("0.1"), Expr::rat(1, 10));
        assert_eq!(p("3.25"), Expr::rat(13, 4));
        assert_eq!(p("2e3"), Expr::int(2000));
        assert_eq!(p("1.5e-2"), Expr::rat(3, 200));
        assert_eq!(p("42"), Expr::int(42));
    }

    #[test]
    fn functions_and_powers() {
        assert_eq!(p("sin(x)"), Expr::func(Fn1::Sin, Expr::var("x")));
        assert_eq!(p("x^2"), Expr::var("x").pow(2));
        assert_eq!(p("x^-2"), Expr::var("x").pow(-2));
        assert_eq!(p("x^(-2)"), Expr::var("x").pow(-2));
        assert_eq!(
            p("sqrt(x^2 + y^2)"),
            Expr::func(Fn1::Sqrt, Expr::var("x").pow(2).add(Expr::var("y").pow(2)))
        );
        assert!(matches!(parse_expr("foo(x)"), Err(Error::UnsupportedFunction(_))));
        assert!(matches!(parse_expr("x^y"), Err(Error::ScalarParse(_))));
    }

    #[test]
    fn dotted_names_and_references() {
        assert_eq!(p("u.x * v.y"), Expr::var("u.x").mul(Expr::var("v.y")));
        assert_eq!(p("<B.e1^e2> + 1"), Expr::var("<B.e1^e2>").add(Expr::int(1)));
    }

    #[test]
    fn unary_minus() {
        assert_eq!(p("-x"), Expr::var("x").neg());
        assert_eq!(p("--x"), Expr::var("x").neg().neg());
        assert_eq!(p("a - -b"), Expr::var("a").sub(Expr::var("b").neg()));
    }

    #[test]
    fn rejects_trailing_garbage() {
        assert!(matches!(parse_expr("a b"), Err(Error::ScalarParse(_))));
        assert!(matches!(parse_expr("(a"), Err(Error::ScalarParse(_))));
        assert!(matches!(parse_expr(""), Err(Error::ScalarParse(_))));
        assert!(matches!(parse_expr("<unclosed"), Err(Error::ScalarParse(_))));
    }

    #[test]
    fn print_parse_round_trip() {
        let a = Assumptions::new();
        let samples = [
            "u.x * v.y - u.y * v.x",
            "-(u.z * v.y) + u.y * v.z",
            "sin(x)^2 - cos(x)^2",
            "sqrt(x^2 + y^2) / (1 + atan(t))",
            "0.5 * r^2 - 3.25",
        ];
        for src in samples {
            let once = simplify(&parse_expr(src).unwrap(), &a).unwrap();
            let printed = write_expr(&once, &PrintOpts::default()).unwrap();
            let again = simplify(&parse_expr(&printed).unwrap(), &a).unwrap();
            assert_eq!(once, again, "round trip failed for `{src}` via `{printed}`");
        }
    }
}
