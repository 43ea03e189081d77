//! Self-contained symbolic scalar engine.
//!
//! Expressions are immutable trees over exact rationals, floats, variables
//! and a fixed set of real functions. [`simplify`] rewrites a tree into a
//! canonical form (flattened, sorted, constant-folded, like terms collected)
//! so that structurally equal trees are mathematically identical; the
//! converse is not promised. Simplification results are memoized in a
//! per-thread cache keyed by the expression and the active assumption set.

mod parse;
mod simplify;

pub use parse::parse_expr;
pub use simplify::simplify;

use crate::error::Error;
use num_integer::Integer;
use num_rational::Ratio;
use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};

pub type Rat = Ratio<i64>;

/// A numeric constant: exact rational, or IEEE double once floats enter.
#[derive(Clone, Copy, Debug)]
pub enum Num {
    Rat(Rat),
    Float(f64),
}

impl Num {
    pub const ZERO: Num = Num::Rat(Ratio::new_raw(0, 1));
    pub const ONE: Num = Num::Rat(Ratio::new_raw(1, 1));

    pub fn int(n: i64) -> Num {
        Num::Rat(Ratio::new_raw(n, 1))
    }

    pub fn rat(n: i64, d: i64) -> Num {
        Num::Rat(Ratio::new(n, d))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Num::Rat(r) => *r.numer() == 0,
            Num::Float(f) => *f == 0.0,
        }
    }

    pub fn is_one(&self) -> bool {
        match self {
            Num::Rat(r) => *r.numer() == 1 && *r.denom() == 1,
            Num::Float(f) => *f == 1.0,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Num::Rat(r) => *r.numer() as f64 / *r.denom() as f64,
            Num::Float(f) => *f,
        }
    }

    pub fn is_negative(&self) -> bool {
        match self {
            Num::Rat(r) => *r.numer() < 0,
            Num::Float(f) => *f < 0.0,
        }
    }

    pub fn neg(&self) -> Num {
        match self {
            Num::Rat(r) => Num::Rat(-r),
            Num::Float(f) => Num::Float(-f),
        }
    }

    pub fn abs(&self) -> Num {
        if self.is_negative() { self.neg() } else { *self }
    }

    pub fn add(&self, other: &Num) -> Num {
        match (self, other) {
            (Num::Rat(a), Num::Rat(b)) => {
                rat_from_i128(
                    *a.numer() as i128 * *b.denom() as i128
                        + *b.numer() as i128 * *a.denom() as i128,
                    *a.denom() as i128 * *b.denom() as i128,
                )
                .map(Num::Rat)
                .unwrap_or_else(|| Num::Float(self.to_f64() + other.to_f64()))
            }
            _ => Num::Float(self.to_f64() + other.to_f64()),
        }
    }

    pub fn sub(&self, other: &Num) -> Num {
        self.add(&other.neg())
    }

    pub fn div(&self, other: &Num) -> Result<Num, Error> {
        Ok(self.mul(&other.recip()?))
    }

    pub fn mul(&self, other: &Num) -> Num {
        match (self, other) {
            (Num::Rat(a), Num::Rat(b)) => rat_from_i128(
                *a.numer() as i128 * *b.numer() as i128,
                *a.denom() as i128 * *b.denom() as i128,
            )
            .map(Num::Rat)
            .unwrap_or_else(|| Num::Float(self.to_f64() * other.to_f64())),
            _ => Num::Float(self.to_f64() * other.to_f64()),
        }
    }

    /// Multiplicative inverse. Fails on exact zero.
    pub fn recip(&self) -> Result<Num, Error> {
        if self.is_zero() {
            return Err(Error::DivisionByZeroConstant);
        }
        Ok(match self {
            Num::Rat(r) => Num::Rat(Ratio::new(*r.denom(), *r.numer())),
            Num::Float(f) => Num::Float(1.0 / f),
        })
    }

    pub fn powi(&self, n: i32) -> Num {
        if n == 0 {
            return Num::ONE;
        }
        let base = if n < 0 {
            match self.recip() {
                Ok(b) => b,
                Err(_) => return Num::Float(f64::INFINITY),
            }
        } else {
            *self
        };
        let mut acc = Num::ONE;
        for _ in 0..n.unsigned_abs() {
            acc = acc.mul(&base);
        }
        acc
    }

    fn kind_rank(&self) -> u8 {
        match self {
            Num::Rat(_) => 0,
            Num::Float(_) => 1,
        }
    }
}

fn rat_from_i128(mut n: i128, mut d: i128) -> Option<Rat> {
    if d == 0 {
        return None;
    }
    if d < 0 {
        n = -n;
        d = -d;
    }
    let g = n.gcd(&d);
    if g != 0 {
        n /= g;
        d /= g;
    }
    Some(Ratio::new_raw(i64::try_from(n).ok()?, i64::try_from(d).ok()?))
}

impl PartialEq for Num {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Num::Rat(a), Num::Rat(b)) => a == b,
            (Num::Float(a), Num::Float(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}
impl Eq for Num {}

impl PartialOrd for Num {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Num {
    fn cmp(&self, other: &Self) -> Ordering {
        self.to_f64()
            .total_cmp(&other.to_f64())
            .then_with(|| self.kind_rank().cmp(&other.kind_rank()))
            .then_with(|| match (self, other) {
                (Num::Rat(a), Num::Rat(b)) => a.cmp(b),
                _ => Ordering::Equal,
            })
    }
}

impl Hash for Num {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Num::Rat(r) => {
                0u8.hash(state);
                r.numer().hash(state);
                r.denom().hash(state);
            }
            Num::Float(f) => {
                1u8.hash(state);
                f.to_bits().hash(state);
            }
        }
    }
}

/// The function set supported in coefficients.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Fn1 {
    Sin,
    Cos,
    Tan,
    Sqrt,
    Exp,
    Ln,
    Atan,
    Cosh,
    Sinh,
    Abs,
}

impl Fn1 {
    pub fn name(self) -> &'static str {
        match self {
            Fn1::Sin => "sin",
            Fn1::Cos => "cos",
            Fn1::Tan => "tan",
            Fn1::Sqrt => "sqrt",
            Fn1::Exp => "exp",
            Fn1::Ln => "ln",
            Fn1::Atan => "atan",
            Fn1::Cosh => "cosh",
            Fn1::Sinh => "sinh",
            Fn1::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Fn1> {
        Some(match name {
            "sin" => Fn1::Sin,
            "cos" => Fn1::Cos,
            "tan" => Fn1::Tan,
            "sqrt" => Fn1::Sqrt,
            "exp" => Fn1::Exp,
            "ln" => Fn1::Ln,
            "atan" => Fn1::Atan,
            "cosh" => Fn1::Cosh,
            "sinh" => Fn1::Sinh,
            "abs" => Fn1::Abs,
            _ => return None,
        })
    }
}

/// Symbolic real scalar expression.
///
/// The variant order defines the canonical total order used when sorting
/// sum terms and product factors. Canonical trees (as produced by
/// [`simplify`]) contain no `Neg` nodes, no sums/products of arity < 2, no
/// stored zero terms or unit factors, and `Pow` exponents >= 2.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Expr {
    Const(Num),
    Var(String),
    Func(Fn1, Box<Expr>),
    Pow(Box<Expr>, i32),
    Prod(Vec<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Sum(Vec<Expr>),
    Neg(Box<Expr>),
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Const(Num::ZERO)
    }

    pub fn one() -> Expr {
        Expr::Const(Num::ONE)
    }

    pub fn int(n: i64) -> Expr {
        Expr::Const(Num::int(n))
    }

    pub fn rat(n: i64, d: i64) -> Expr {
        Expr::Const(Num::rat(n, d))
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn add(self, other: Expr) -> Expr {
        Expr::Sum(vec![self, other])
    }

    pub fn sub(self, other: Expr) -> Expr {
        Expr::Sum(vec![self, Expr::Neg(Box::new(other))])
    }

    pub fn mul(self, other: Expr) -> Expr {
        Expr::Prod(vec![self, other])
    }

    pub fn div(self, other: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(other))
    }

    pub fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }

    pub fn pow(self, n: i32) -> Expr {
        Expr::Pow(Box::new(self), n)
    }

    pub fn func(f: Fn1, arg: Expr) -> Expr {
        Expr::Func(f, Box::new(arg))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if c.is_zero())
    }

    pub fn as_const(&self) -> Option<Num> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// All variable names, in first-occurrence order.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Var(v) = e {
                if !out.iter().any(|o| o == v) {
                    out.push(v.clone());
                }
            }
        });
        out
    }

    pub fn walk(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Func(_, a) | Expr::Pow(a, _) | Expr::Neg(a) => a.walk(f),
            Expr::Div(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            Expr::Sum(ts) | Expr::Prod(ts) => {
                for t in ts {
                    t.walk(f);
                }
            }
        }
    }

    /// Count of arithmetic operations (adds, multiplies, divisions, powers,
    /// function applications) in the tree. Used by the optimizer's
    /// monotonicity accounting.
    pub fn op_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 0,
            Expr::Func(_, a) => 1 + a.op_count(),
            Expr::Pow(a, _) => 1 + a.op_count(),
            Expr::Neg(a) => a.op_count(),
            Expr::Div(a, b) => 1 + a.op_count() + b.op_count(),
            Expr::Sum(ts) | Expr::Prod(ts) => {
                ts.len() - 1 + ts.iter().map(|t| t.op_count()).sum::<usize>()
            }
        }
    }
}

/// Lower/upper bounds on named scalar variables, used to resolve
/// `sqrt(v^2)` and `abs(v)` signs during simplification.
#[derive(Clone, Default, PartialEq, Eq, Hash, Debug)]
pub struct Assumptions {
    entries: BTreeMap<String, (Option<Num>, Option<Num>)>,
}

impl Assumptions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn assume_min(&mut self, var: impl Into<String>, min: Num) -> Result<(), Error> {
        let var = var.into();
        let e = self.entries.entry(var.clone()).or_insert((None, None));
        if let Some(up) = e.1 {
            if min > up {
                return Err(Error::InvalidAssumption(var));
            }
        }
        e.0 = Some(min);
        Ok(())
    }

    pub fn assume_max(&mut self, var: impl Into<String>, max: Num) -> Result<(), Error> {
        let var = var.into();
        let e = self.entries.entry(var.clone()).or_insert((None, None));
        if let Some(lo) = e.0 {
            if max < lo {
                return Err(Error::InvalidAssumption(var));
            }
        }
        e.1 = Some(max);
        Ok(())
    }

    pub fn lower(&self, var: &str) -> Option<Num> {
        self.entries.get(var).and_then(|e| e.0)
    }

    pub fn upper(&self, var: &str) -> Option<Num> {
        self.entries.get(var).and_then(|e| e.1)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Simultaneous substitution of variables, followed by simplification.
pub fn substitute(
    e: &Expr,
    bindings: &HashMap<String, Expr>,
    a: &Assumptions,
) -> Result<Expr, Error> {
    fn go(e: &Expr, b: &HashMap<String, Expr>) -> Expr {
        match e {
            Expr::Var(v) => b.get(v).cloned().unwrap_or_else(|| e.clone()),
            Expr::Const(_) => e.clone(),
            Expr::Func(f, x) => Expr::Func(*f, Box::new(go(x, b))),
            Expr::Pow(x, n) => Expr::Pow(Box::new(go(x, b)), *n),
            Expr::Neg(x) => Expr::Neg(Box::new(go(x, b))),
            Expr::Div(x, y) => Expr::Div(Box::new(go(x, b)), Box::new(go(y, b))),
            Expr::Sum(ts) => Expr::Sum(ts.iter().map(|t| go(t, b)).collect()),
            Expr::Prod(ts) => Expr::Prod(ts.iter().map(|t| go(t, b)).collect()),
        }
    }
    simplify(&go(e, bindings), a)
}

/// Exact symbolic derivative with respect to `v`, simplified.
pub fn differentiate(e: &Expr, v: &str, a: &Assumptions) -> Result<Expr, Error> {
    let d = diff_raw(e, v)?;
    simplify(&d, a)
}

fn diff_raw(e: &Expr, v: &str) -> Result<Expr, Error> {
    Ok(match e {
        Expr::Const(_) => Expr::zero(),
        Expr::Var(name) => {
            if name == v {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Expr::Neg(x) => Expr::Neg(Box::new(diff_raw(x, v)?)),
        Expr::Sum(ts) => {
            Expr::Sum(ts.iter().map(|t| diff_raw(t, v)).collect::<Result<_, _>>()?)
        }
        Expr::Prod(fs) => {
            let mut terms = Vec::new();
            for (i, fi) in fs.iter().enumerate() {
                let mut factors: Vec<Expr> = fs.to_vec();
                factors[i] = diff_raw(fi, v)?;
                terms.push(Expr::Prod(factors));
            }
            Expr::Sum(terms)
        }
        Expr::Div(n, d) => {
            // (n'd - nd') / d^2
            let np = diff_raw(n, v)?;
            let dp = diff_raw(d, v)?;
            Expr::Div(
                Box::new(np.mul((**d).clone()).sub((**n).clone().mul(dp))),
                Box::new((**d).clone().pow(2)),
            )
        }
        Expr::Pow(b, n) => {
            let bp = diff_raw(b, v)?;
            Expr::int(*n as i64).mul((**b).clone().pow(n - 1)).mul(bp)
        }
        Expr::Func(f, x) => {
            let xp = diff_raw(x, v)?;
            let x = (**x).clone();
            let outer = match f {
                Fn1::Sin => Expr::func(Fn1::Cos, x),
                Fn1::Cos => Expr::func(Fn1::Sin, x).neg(),
                Fn1::Tan => Expr::one().add(Expr::func(Fn1::Tan, x).pow(2)),
                Fn1::Sqrt => Expr::rat(1, 2).div(Expr::func(Fn1::Sqrt, x)),
                Fn1::Exp => Expr::func(Fn1::Exp, x),
                Fn1::Ln => Expr::one().div(x),
                Fn1::Atan => Expr::one().div(Expr::one().add(x.pow(2))),
                Fn1::Cosh => Expr::func(Fn1::Sinh, x),
                Fn1::Sinh => Expr::func(Fn1::Cosh, x),
                Fn1::Abs => return Err(Error::UnsupportedFunction("abs".into())),
            };
            outer.mul(xp)
        }
    })
}

/// IEEE double evaluation. `pi` is always bound.
pub fn eval_numeric(e: &Expr, env: &HashMap<String, f64>) -> Result<f64, Error> {
    Ok(match e {
        Expr::Const(c) => c.to_f64(),
        Expr::Var(v) => {
            if let Some(x) = env.get(v) {
                *x
            } else if v == "pi" {
                std::f64::consts::PI
            } else {
                return Err(Error::UnboundVariable(v.clone()));
            }
        }
        Expr::Neg(x) => -eval_numeric(x, env)?,
        Expr::Sum(ts) => {
            let mut acc = 0.0;
            for t in ts {
                acc += eval_numeric(t, env)?;
            }
            acc
        }
        Expr::Prod(fs) => {
            let mut acc = 1.0;
            for f in fs {
                acc *= eval_numeric(f, env)?;
            }
            acc
        }
        Expr::Div(n, d) => eval_numeric(n, env)? / eval_numeric(d, env)?,
        Expr::Pow(b, n) => eval_numeric(b, env)?.powi(*n),
        Expr::Func(f, x) => {
            let x = eval_numeric(x, env)?;
            match f {
                Fn1::Sin => x.sin(),
                Fn1::Cos => x.cos(),
                Fn1::Tan => x.tan(),
                Fn1::Sqrt => {
                    if x < 0.0 {
                        return Err(Error::DomainError(format!("sqrt of negative {x}")));
                    }
                    x.sqrt()
                }
                Fn1::Exp => x.exp(),
                Fn1::Ln => {
                    if x <= 0.0 {
                        return Err(Error::DomainError(format!("ln of non-positive {x}")));
                    }
                    x.ln()
                }
                Fn1::Atan => x.atan(),
                Fn1::Cosh => x.cosh(),
                Fn1::Sinh => x.sinh(),
                Fn1::Abs => x.abs(),
            }
        }
    })
}

/// Structural hash of a canonical tree: equal trees get equal keys.
pub fn canonical_key(e: &Expr) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    e.hash(&mut h);
    h.finish()
}

thread_local! {
    static CACHE: RefCell<SimplifyCache> = RefCell::new(SimplifyCache::default());
}

#[derive(Default)]
struct SimplifyCache {
    map: HashMap<(Expr, Assumptions), Result<Expr, Error>>,
    hits: u64,
    misses: u64,
}

/// Hit/miss counters of this thread's simplification cache.
pub fn cache_stats() -> (u64, u64) {
    CACHE.with(|c| {
        let c = c.borrow();
        (c.hits, c.misses)
    })
}

pub fn reset_cache() {
    CACHE.with(|c| {
        let mut c = c.borrow_mut();
        c.map.clear();
        c.hits = 0;
        c.misses = 0;
    });
}

pub(crate) fn cached_simplify(e: &Expr, a: &Assumptions) -> Result<Expr, Error> {
    // Leaves are their own canonical form; don't pollute the cache.
    if matches!(e, Expr::Const(_) | Expr::Var(_)) {
        return simplify::simplify_uncached(e, a);
    }
    let key = (e.clone(), a.clone());
    if let Some(hit) = CACHE.with(|c| {
        let mut c = c.borrow_mut();
        let found = c.map.get(&key).cloned();
        match found {
            Some(r) => {
                c.hits += 1;
                Some(r)
            }
            None => {
                c.misses += 1;
                None
            }
        }
    }) {
        return hit;
    }
    let result = simplify::simplify_uncached(e, a);
    CACHE.with(|c| {
        let mut c = c.borrow_mut();
        // Bound the cache so pathological workloads don't grow it forever.
        if c.map.len() > 1 << 20 {
            c.map.clear();
        }
        c.map.insert(key, result.clone());
    });
    result
}

/// How [`write_expr`] renders powers.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PowStyle {
    /// `x^2` (DSL surface syntax, neutral dialect).
    Caret,
    /// `pow(x, 2)` with the mapped function name (c-like dialects).
    Call,
}

/// Expression printer configuration shared by the emitters and tests.
pub struct PrintOpts<'a> {
    pub pow: PowStyle,
    /// Maps a function name to its dialect spelling; `None` = identity.
    pub func_name: Option<&'a dyn Fn(&str) -> Option<String>>,
}

impl Default for PrintOpts<'_> {
    fn default() -> Self {
        PrintOpts { pow: PowStyle::Caret, func_name: None }
    }
}

/// Render `e` with minimal parentheses. Returns an error only when a
/// dialect function map lacks a needed name.
pub fn write_expr(e: &Expr, opts: &PrintOpts) -> Result<String, Error> {
    let mut s = String::new();
    wr(e, opts, Prec::Sum, &mut s)?;
    Ok(s)
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Sum,
    Prod,
    Unary,
    Atom,
}

fn mapped_name(name: &str, opts: &PrintOpts) -> Result<String, Error> {
    match opts.func_name {
        None => Ok(name.to_string()),
        Some(f) => f(name).ok_or_else(|| Error::UnmappedFunction(name.into(), "dialect".into())),
    }
}

fn fmt_num(c: &Num) -> String {
    match c {
        Num::Rat(r) if *r.denom() == 1 => format!("{}", r.numer()),
        _ => {
            let f = c.to_f64();
            if f == f.trunc() && f.abs() < 1e15 {
                // Keep an explicit decimal point so c-like targets stay in
                // floating point: 3 -> "3.0".
                format!("{:.1}", f)
            } else {
                format!("{}", f)
            }
        }
    }
}

/// Splits a canonical term into (negative?, magnitude-expression).
pub(crate) fn split_sign(e: &Expr) -> (bool, Expr) {
    match e {
        Expr::Const(c) if c.is_negative() => (true, Expr::Const(c.neg())),
        Expr::Prod(fs) => {
            if let Some(Expr::Const(c)) = fs.first() {
                if c.is_negative() {
                    let mut rest = fs[1..].to_vec();
                    let mag = c.neg();
                    if !mag.is_one() {
                        rest.insert(0, Expr::Const(mag));
                    }
                    let body = if rest.len() == 1 { rest.pop().unwrap() } else { Expr::Prod(rest) };
                    return (true, body);
                }
            }
            (false, e.clone())
        }
        Expr::Neg(x) => (true, (**x).clone()),
        _ => (false, e.clone()),
    }
}

fn wr(e: &Expr, opts: &PrintOpts, ctx: Prec, out: &mut String) -> Result<(), Error> {
    match e {
        Expr::Const(c) => {
            let s = fmt_num(c);
            if c.is_negative() && ctx > Prec::Sum {
                out.push('(');
                out.push_str(&s);
                out.push(')');
            } else {
                out.push_str(&s);
            }
        }
        Expr::Var(v) => out.push_str(v),
        Expr::Func(f, x) => {
            out.push_str(&mapped_name(f.name(), opts)?);
            out.push('(');
            wr(x, opts, Prec::Sum, out)?;
            out.push(')');
        }
        Expr::Pow(b, n) => match opts.pow {
            PowStyle::Caret => {
                let needs = !matches!(**b, Expr::Var(_) | Expr::Func(..))
                    || matches!(**b, Expr::Const(_));
                if needs {
                    out.push('(');
                    wr(b, opts, Prec::Sum, out)?;
                    out.push(')');
                } else {
                    wr(b, opts, Prec::Atom, out)?;
                }
                out.push('^');
                out.push_str(&n.to_string());
            }
            PowStyle::Call => {
                out.push_str(&mapped_name("pow", opts)?);
                out.push('(');
                wr(b, opts, Prec::Sum, out)?;
                out.push_str(", ");
                out.push_str(&n.to_string());
                out.push(')');
            }
        },
        Expr::Prod(fs) => {
            let (neg, body) = split_sign(e);
            if neg {
                // "-x" for a bare atom, "-(a * b)" otherwise, matching the
                // usual generated-code style.
                out.push('-');
                let atom = matches!(body, Expr::Var(_) | Expr::Func(..) | Expr::Pow(..));
                if atom {
                    wr(&body, opts, Prec::Unary, out)?;
                } else {
                    out.push('(');
                    wr(&body, opts, Prec::Sum, out)?;
                    out.push(')');
                }
                return Ok(());
            }
            let needs = ctx > Prec::Prod;
            if needs {
                out.push('(');
            }
            for (i, f) in fs.iter().enumerate() {
                if i > 0 {
                    out.push_str(" * ");
                }
                wr(f, opts, Prec::Unary, out)?;
            }
            if needs {
                out.push(')');
            }
        }
        Expr::Div(n, d) => {
            let needs = ctx > Prec::Prod;
            if needs {
                out.push('(');
            }
            wr(n, opts, Prec::Prod, out)?;
            out.push_str(" / ");
            wr(d, opts, Prec::Unary, out)?;
            if needs {
                out.push(')');
            }
        }
        Expr::Sum(ts) => {
            let needs = ctx > Prec::Sum;
            if needs {
                out.push('(');
            }
            for (i, t) in ts.iter().enumerate() {
                let (neg, body) = split_sign(t);
                if i == 0 {
                    if neg {
                        let atom = matches!(body, Expr::Var(_) | Expr::Func(..) | Expr::Pow(..));
                        out.push('-');
                        if atom {
                            wr(&body, opts, Prec::Unary, out)?;
                        } else {
                            out.push('(');
                            wr(&body, opts, Prec::Sum, out)?;
                            out.push(')');
                        }
                    } else {
                        wr(&body, opts, Prec::Prod, out)?;
                    }
                } else {
                    out.push_str(if neg { " - " } else { " + " });
                    wr(&body, opts, Prec::Prod, out)?;
                }
            }
            if needs {
                out.push(')');
            }
        }
        Expr::Neg(x) => {
            out.push_str("-(");
            wr(x, opts, Prec::Sum, out)?;
            out.push(')');
        }
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match write_expr(self, &PrintOpts::default()) {
            Ok(s) => f.write_str(&s),
            Err(_) => Err(fmt::Error),
        }
    }
}

pub(crate) fn collect_entry(map: &mut BTreeMap<Vec<Expr>, Num>, key: Vec<Expr>, c: Num) {
    match map.entry(key) {
        Entry::Vacant(v) => {
            v.insert(c);
        }
        Entry::Occupied(mut o) => {
            let s = o.get().add(&c);
            if s.is_zero() {
                o.remove();
            } else {
                *o.get_mut() = s;
            }
        }
    }
}
