//! Canonicalizing rewriter.
//!
//! The canonical form is a flattened sum of terms, each term a constant
//! coefficient times a sorted product of non-sum factors, with divisions
//! kept only for non-constant denominators and exponents >= 2. Products
//! distribute over sums so that like terms can cancel; small integer
//! powers of sums are expanded for the same reason.

use super::{collect_entry, split_sign, Assumptions, Expr, Fn1, Num};
use crate::error::Error;
use std::collections::BTreeMap;

pub fn simplify(e: &Expr, a: &Assumptions) -> Result<Expr, Error> {
    super::cached_simplify(e, a)
}

/// Largest exponent at which a power of a sum is multiplied out.
const EXPAND_POW_LIMIT: i32 = 6;

pub(crate) fn simplify_uncached(e: &Expr, a: &Assumptions) -> Result<Expr, Error> {
    match e {
        Expr::Const(_) | Expr::Var(_) => Ok(e.clone()),
        Expr::Neg(x) => {
            let x = super::cached_simplify(x, a)?;
            prod_of(vec![Expr::int(-1), x], a)
        }
        Expr::Sum(ts) => {
            let ts = ts
                .iter()
                .map(|t| super::cached_simplify(t, a))
                .collect::<Result<Vec<_>, _>>()?;
            sum_of(ts, a)
        }
        Expr::Prod(fs) => {
            let fs = fs
                .iter()
                .map(|f| super::cached_simplify(f, a))
                .collect::<Result<Vec<_>, _>>()?;
            prod_of(fs, a)
        }
        Expr::Div(n, d) => {
            let n = super::cached_simplify(n, a)?;
            let d = super::cached_simplify(d, a)?;
            div_of(n, d, a)
        }
        Expr::Pow(b, n) => {
            let b = super::cached_simplify(b, a)?;
            pow_of(b, *n, a)
        }
        Expr::Func(f, x) => {
            let x = super::cached_simplify(x, a)?;
            func_of(*f, x, a)
        }
    }
}

/// Splits a canonical term into (coefficient, monomial factor list).
fn coeff_mono(t: Expr) -> (Num, Vec<Expr>) {
    match t {
        Expr::Const(c) => (c, Vec::new()),
        Expr::Prod(mut fs) => {
            if let Some(Expr::Const(c)) = fs.first() {
                let c = *c;
                fs.remove(0);
                (c, fs)
            } else {
                (Num::ONE, fs)
            }
        }
        other => (Num::ONE, vec![other]),
    }
}

fn term_from(mono: Vec<Expr>, c: Num) -> Expr {
    if mono.is_empty() {
        return Expr::Const(c);
    }
    if c.is_one() {
        if mono.len() == 1 {
            return mono.into_iter().next().unwrap();
        }
        return Expr::Prod(mono);
    }
    let mut fs = Vec::with_capacity(mono.len() + 1);
    fs.push(Expr::Const(c));
    fs.extend(mono);
    Expr::Prod(fs)
}

/// Rewrites c*M*sin(t)^2 + c*M*cos(t)^2 into c*M, repeatedly.
fn apply_pythagoras(map: &mut BTreeMap<Vec<Expr>, Num>) {
    loop {
        let mut found: Option<(Vec<Expr>, Vec<Expr>, Vec<Expr>)> = None;
        'scan: for (key, coeff) in map.iter() {
            if coeff.is_zero() {
                continue;
            }
            for (i, f) in key.iter().enumerate() {
                let t = match f {
                    Expr::Pow(b, 2) => match &**b {
                        Expr::Func(Fn1::Sin, t) => t.clone(),
                        _ => continue,
                    },
                    _ => continue,
                };
                let mut partner = key.clone();
                partner[i] = Expr::Pow(Box::new(Expr::Func(Fn1::Cos, t)), 2);
                partner.sort();
                if map.get(&partner) == Some(coeff) {
                    let mut reduced = key.clone();
                    reduced.remove(i);
                    found = Some((key.clone(), partner, reduced));
                    break 'scan;
                }
            }
        }
        match found {
            Some((sin_key, cos_key, reduced)) => {
                let c = map.remove(&sin_key).expect("key vanished");
                map.remove(&cos_key);
                collect_entry(map, reduced, c);
            }
            None => return,
        }
    }
}

fn rebuild_terms(map: BTreeMap<Vec<Expr>, Num>) -> Vec<Expr> {
    map.into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|(mono, c)| term_from(mono, c))
        .collect()
}

pub(crate) fn sum_of(terms: Vec<Expr>, _a: &Assumptions) -> Result<Expr, Error> {
    // Plain terms keyed by monomial; divided terms grouped per denominator.
    let mut plain: BTreeMap<Vec<Expr>, Num> = BTreeMap::new();
    let mut by_den: BTreeMap<Expr, BTreeMap<Vec<Expr>, Num>> = BTreeMap::new();

    let mut stack = terms;
    stack.reverse();
    while let Some(t) = stack.pop() {
        match t {
            Expr::Sum(ts) => stack.extend(ts.into_iter().rev()),
            Expr::Div(n, d) => {
                let subterms = match *n {
                    Expr::Sum(ts) => ts,
                    other => vec![other],
                };
                let group = by_den.entry(*d).or_default();
                for st in subterms {
                    let (c, m) = coeff_mono(st);
                    collect_entry(group, m, c);
                }
            }
            other => {
                let (c, m) = coeff_mono(other);
                collect_entry(&mut plain, m, c);
            }
        }
    }

    let mut div_terms = Vec::new();
    for (den, mut group) in by_den {
        apply_pythagoras(&mut group);
        // Terms carrying the denominator as a literal factor cancel it.
        let keys: Vec<Vec<Expr>> = group.keys().cloned().collect();
        for key in keys {
            let mut reduced = None;
            for (i, f) in key.iter().enumerate() {
                if *f == den {
                    let mut k = key.clone();
                    k.remove(i);
                    reduced = Some(k);
                    break;
                }
                if let Expr::Pow(b, n) = f {
                    if **b == den {
                        let mut k = key.clone();
                        k[i] = if *n == 2 { (**b).clone() } else { Expr::Pow(b.clone(), n - 1) };
                        k.sort();
                        reduced = Some(k);
                        break;
                    }
                }
            }
            if let Some(k) = reduced {
                let c = group.remove(&key).expect("key vanished");
                if !c.is_zero() {
                    collect_entry(&mut plain, k, c);
                }
            }
        }
        let num_terms = rebuild_terms(group);
        if num_terms.is_empty() {
            continue;
        }
        let num = if num_terms.len() == 1 {
            num_terms.into_iter().next().unwrap()
        } else {
            let mut ts = num_terms;
            ts.sort();
            Expr::Sum(ts)
        };
        if num == den {
            collect_entry(&mut plain, Vec::new(), Num::ONE);
        } else {
            div_terms.push(Expr::Div(Box::new(num), Box::new(den)));
        }
    }

    apply_pythagoras(&mut plain);
    let mut out = rebuild_terms(plain);
    out.extend(div_terms);
    out.sort();
    Ok(match out.len() {
        0 => Expr::zero(),
        1 => out.into_iter().next().unwrap(),
        _ => Expr::Sum(out),
    })
}

pub(crate) fn prod_of(factors: Vec<Expr>, a: &Assumptions) -> Result<Expr, Error> {
    let mut coeff = Num::ONE;
    let mut nums: Vec<Expr> = Vec::new();
    let mut dens: Vec<Expr> = Vec::new();

    let mut stack = factors;
    stack.reverse();
    while let Some(f) = stack.pop() {
        match f {
            Expr::Const(c) => coeff = coeff.mul(&c),
            Expr::Prod(fs) => stack.extend(fs.into_iter().rev()),
            Expr::Div(n, d) => {
                stack.push(*n);
                dens.push(*d);
            }
            Expr::Neg(x) => {
                coeff = coeff.neg();
                stack.push(*x);
            }
            other => nums.push(other),
        }
    }

    if coeff.is_zero() {
        return Ok(Expr::zero());
    }

    // Distribute over any sum factors so like terms can cancel upstream.
    if nums.iter().any(|f| matches!(f, Expr::Sum(_))) {
        let mut combos: Vec<Vec<Expr>> = vec![vec![Expr::Const(coeff)]];
        for f in nums {
            match f {
                Expr::Sum(ts) => {
                    let mut next = Vec::with_capacity(combos.len() * ts.len());
                    for base in &combos {
                        for t in &ts {
                            let mut b = base.clone();
                            b.push(t.clone());
                            next.push(b);
                        }
                    }
                    combos = next;
                }
                other => {
                    for b in &mut combos {
                        b.push(other.clone());
                    }
                }
            }
        }
        let expanded = combos
            .into_iter()
            .map(|fs| prod_of(fs, a))
            .collect::<Result<Vec<_>, _>>()?;
        let num = sum_of(expanded, a)?;
        return if dens.is_empty() {
            Ok(num)
        } else {
            div_of(num, prod_of(dens, a)?, a)
        };
    }

    // Merge repeated bases into powers.
    let mut powers: BTreeMap<Expr, i32> = BTreeMap::new();
    let mut merged = false;
    for f in nums {
        let (base, exp) = match f {
            Expr::Pow(b, n) => (*b, n),
            other => (other, 1),
        };
        let e = powers.entry(base).or_insert(0);
        if *e != 0 {
            merged = true;
        }
        *e = e.checked_add(exp).ok_or_else(|| Error::Other("exponent overflow".into()))?;
    }

    let mut rebuilt = Vec::with_capacity(powers.len());
    let mut regather = merged;
    for (base, exp) in powers {
        match exp {
            0 => regather = true,
            1 => rebuilt.push(base),
            n => {
                let p = pow_of(base.clone(), n, a)?;
                match &p {
                    Expr::Pow(b, m) if **b == base && *m == n => {}
                    _ => regather = true,
                }
                rebuilt.push(p);
            }
        }
    }

    if regather {
        let mut again = Vec::with_capacity(rebuilt.len() + 1 + dens.len());
        again.push(Expr::Const(coeff));
        again.extend(rebuilt);
        for d in dens {
            again.push(Expr::Div(Box::new(Expr::one()), Box::new(d)));
        }
        return prod_of(again, a);
    }

    let built = if rebuilt.is_empty() {
        Expr::Const(coeff)
    } else {
        let mut fs = rebuilt;
        if !coeff.is_one() {
            fs.push(Expr::Const(coeff));
        }
        fs.sort();
        if fs.len() == 1 {
            fs.into_iter().next().unwrap()
        } else {
            Expr::Prod(fs)
        }
    };

    if dens.is_empty() {
        Ok(built)
    } else {
        let den = prod_of(dens, a)?;
        div_of(built, den, a)
    }
}

pub(crate) fn pow_of(base: Expr, n: i32, a: &Assumptions) -> Result<Expr, Error> {
    if n == 0 {
        return Ok(Expr::one());
    }
    if n == 1 {
        return Ok(base);
    }
    if n < 0 {
        if base.is_zero() {
            return Err(Error::DivisionByZeroConstant);
        }
        let m = n.checked_neg().ok_or_else(|| Error::Other("exponent overflow".into()))?;
        let p = pow_of(base, m, a)?;
        return div_of(Expr::one(), p, a);
    }
    match base {
        Expr::Const(c) => Ok(Expr::Const(c.powi(n))),
        Expr::Pow(b, m) => {
            let k = m.checked_mul(n).ok_or_else(|| Error::Other("exponent overflow".into()))?;
            pow_of(*b, k, a)
        }
        Expr::Prod(fs) => {
            let parts = fs
                .into_iter()
                .map(|f| pow_of(f, n, a))
                .collect::<Result<Vec<_>, _>>()?;
            prod_of(parts, a)
        }
        Expr::Div(num, den) => {
            let pn = pow_of(*num, n, a)?;
            let pd = pow_of(*den, n, a)?;
            div_of(pn, pd, a)
        }
        Expr::Neg(x) => {
            let sign = if n % 2 == 0 { 1 } else { -1 };
            let p = pow_of(*x, n, a)?;
            prod_of(vec![Expr::int(sign), p], a)
        }
        Expr::Func(Fn1::Sqrt, x) => {
            if n % 2 == 0 {
                pow_of(*x, n / 2, a)
            } else {
                let whole = pow_of((*x).clone(), n / 2, a)?;
                prod_of(vec![whole, Expr::Func(Fn1::Sqrt, x)], a)
            }
        }
        Expr::Func(Fn1::Abs, x) if n % 2 == 0 => pow_of(*x, n, a),
        Expr::Sum(ts) if n <= EXPAND_POW_LIMIT => {
            let factors = vec![Expr::Sum(ts); n as usize];
            prod_of(factors, a)
        }
        other => Ok(Expr::Pow(Box::new(other), n)),
    }
}

pub(crate) fn div_of(num: Expr, den: Expr, a: &Assumptions) -> Result<Expr, Error> {
    let (mut num, mut den) = (num, den);
    loop {
        match (num, den) {
            (Expr::Div(n1, n2), d) => {
                num = *n1;
                den = prod_of(vec![*n2, d], a)?;
            }
            (n, Expr::Div(d1, d2)) => {
                num = prod_of(vec![n, *d2], a)?;
                den = *d1;
            }
            (n, d) => {
                num = n;
                den = d;
                break;
            }
        }
    }

    if let Expr::Const(c) = den {
        let r = c.recip()?;
        return prod_of(vec![Expr::Const(r), num], a);
    }
    if num.is_zero() {
        return Ok(Expr::zero());
    }

    // Denominators carry no constant factor; it moves up as a reciprocal.
    if let Expr::Prod(fs) = &den {
        if let Some(Expr::Const(c)) = fs.first() {
            let r = c.recip()?;
            let rest = fs[1..].to_vec();
            let den2 = if rest.len() == 1 {
                rest.into_iter().next().unwrap()
            } else {
                Expr::Prod(rest)
            };
            let num2 = prod_of(vec![Expr::Const(r), num], a)?;
            return div_of(num2, den2, a);
        }
    }

    if num == den {
        return Ok(Expr::one());
    }

    // Exact factor cancellation when both sides are products of powers.
    fn decompose(e: &Expr) -> Option<(Num, BTreeMap<Expr, i32>)> {
        let mut c = Num::ONE;
        let mut map = BTreeMap::new();
        let mut add = |b: Expr, n: i32| {
            *map.entry(b).or_insert(0) += n;
        };
        match e {
            Expr::Sum(_) | Expr::Div(..) => return None,
            Expr::Const(k) => c = *k,
            Expr::Pow(b, n) => add((**b).clone(), *n),
            Expr::Prod(fs) => {
                for f in fs {
                    match f {
                        Expr::Const(k) => c = c.mul(k),
                        Expr::Pow(b, n) => add((**b).clone(), *n),
                        other => add(other.clone(), 1),
                    }
                }
            }
            other => add(other.clone(), 1),
        }
        Some((c, map))
    }

    if let (Some((cn, nmap)), Some((cd, dmap))) = (decompose(&num), decompose(&den)) {
        if nmap.keys().any(|k| dmap.contains_key(k)) {
            let mut net = nmap;
            for (b, e) in dmap {
                *net.entry(b).or_insert(0) -= e;
            }
            let coeff = cn.mul(&cd.recip()?);
            let mut top = vec![Expr::Const(coeff)];
            let mut bottom = Vec::new();
            for (b, e) in net {
                if e > 0 {
                    top.push(pow_of(b, e, a)?);
                } else if e < 0 {
                    bottom.push(pow_of(b, -e, a)?);
                }
            }
            let num2 = prod_of(top, a)?;
            if bottom.is_empty() {
                return Ok(num2);
            }
            let den2 = prod_of(bottom, a)?;
            return div_of(num2, den2, a);
        }
    }

    // (a*q + b*q) / q -> a + b when q is a literal factor of every term.
    if let Expr::Sum(ts) = &num {
        let divide_term = |t: &Expr| -> Option<Expr> {
            if *t == den {
                return Some(Expr::one());
            }
            if let Expr::Prod(fs) = t {
                if let Some(i) = fs.iter().position(|f| *f == den) {
                    let mut rest = fs.clone();
                    rest.remove(i);
                    return Some(if rest.len() == 1 {
                        rest.into_iter().next().unwrap()
                    } else {
                        Expr::Prod(rest)
                    });
                }
            }
            None
        };
        if let Some(divided) = ts.iter().map(divide_term).collect::<Option<Vec<_>>>() {
            return sum_of(divided, a);
        }
    }

    Ok(Expr::Div(Box::new(num), Box::new(den)))
}

fn isqrt_exact(n: i64) -> Option<i64> {
    if n < 0 {
        return None;
    }
    let r = (n as f64).sqrt().round() as i64;
    for cand in [r - 1, r, r + 1] {
        if cand >= 0 && cand.checked_mul(cand) == Some(n) {
            return Some(cand);
        }
    }
    None
}

pub(crate) fn can_assume_nonneg(e: &Expr, a: &Assumptions) -> bool {
    match e {
        Expr::Const(c) => !c.is_negative(),
        Expr::Var(v) => {
            v == "pi" || a.lower(v).map_or(false, |lo| !lo.is_negative())
        }
        Expr::Pow(b, n) => *n % 2 == 0 || can_assume_nonneg(b, a),
        Expr::Prod(fs) => fs.iter().all(|f| can_assume_nonneg(f, a)),
        Expr::Sum(ts) => ts.iter().all(|t| can_assume_nonneg(t, a)),
        Expr::Div(n, d) => can_assume_nonneg(n, a) && can_assume_nonneg(d, a),
        Expr::Func(f, x) => match f {
            Fn1::Sqrt | Fn1::Abs | Fn1::Exp | Fn1::Cosh => true,
            // odd and increasing through the origin
            Fn1::Atan | Fn1::Sinh => can_assume_nonneg(x, a),
            Fn1::Sin | Fn1::Cos | Fn1::Tan | Fn1::Ln => false,
        },
        Expr::Neg(_) => false,
    }
}

pub(crate) fn func_of(f: Fn1, x: Expr, a: &Assumptions) -> Result<Expr, Error> {
    if let Expr::Const(c) = &x {
        match c {
            Num::Rat(r) => {
                let zero = *r.numer() == 0;
                let one = *r.numer() == 1 && *r.denom() == 1;
                match f {
                    Fn1::Sin | Fn1::Tan | Fn1::Atan | Fn1::Sinh if zero => {
                        return Ok(Expr::zero())
                    }
                    Fn1::Cos | Fn1::Cosh if zero => return Ok(Expr::one()),
                    Fn1::Exp if zero => return Ok(Expr::one()),
                    Fn1::Ln if one => return Ok(Expr::zero()),
                    Fn1::Sqrt => {
                        if let (Some(sn), Some(sd)) =
                            (isqrt_exact(*r.numer()), isqrt_exact(*r.denom()))
                        {
                            return Ok(Expr::Const(Num::rat(sn, sd)));
                        }
                    }
                    Fn1::Abs => return Ok(Expr::Const(c.abs())),
                    _ => {}
                }
            }
            Num::Float(v) => {
                let folded = match f {
                    Fn1::Sin => Some(v.sin()),
                    Fn1::Cos => Some(v.cos()),
                    Fn1::Tan => Some(v.tan()),
                    Fn1::Sqrt => (*v >= 0.0).then(|| v.sqrt()),
                    Fn1::Exp => Some(v.exp()),
                    Fn1::Ln => (*v > 0.0).then(|| v.ln()),
                    Fn1::Atan => Some(v.atan()),
                    Fn1::Cosh => Some(v.cosh()),
                    Fn1::Sinh => Some(v.sinh()),
                    Fn1::Abs => Some(v.abs()),
                };
                if let Some(v) = folded {
                    return Ok(Expr::Const(Num::Float(v)));
                }
            }
        }
    }

    match f {
        Fn1::Exp => {
            if let Expr::Func(Fn1::Ln, y) = x {
                return Ok(*y);
            }
        }
        Fn1::Ln => {
            if let Expr::Func(Fn1::Exp, y) = x {
                return Ok(*y);
            }
        }
        Fn1::Sqrt => {
            if let Expr::Pow(b, n) = &x {
                if *n % 2 == 0 {
                    let mag = func_of(Fn1::Abs, (**b).clone(), a)?;
                    return pow_of(mag, *n / 2, a);
                }
            }
        }
        Fn1::Abs => {
            if can_assume_nonneg(&x, a) {
                return Ok(x);
            }
            let (neg, mag) = split_sign(&x);
            if neg {
                return func_of(Fn1::Abs, mag, a);
            }
        }
        _ => {}
    }

    // Parity: odd functions pull a leading minus out, even ones drop it.
    match f {
        Fn1::Sin | Fn1::Tan | Fn1::Atan | Fn1::Sinh => {
            let (neg, mag) = split_sign(&x);
            if neg {
                let inner = func_of(f, mag, a)?;
                return prod_of(vec![Expr::int(-1), inner], a);
            }
        }
        Fn1::Cos | Fn1::Cosh => {
            let (neg, mag) = split_sign(&x);
            if neg {
                return func_of(f, mag, a);
            }
        }
        _ => {}
    }

    Ok(Expr::Func(f, Box::new(x)))
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;

    fn s(e: Expr) -> Expr {
        simplify(&e, &Assumptions::new()).unwrap()
    }

    #[test]
    fn collects_like_terms() {
        let x = Expr::var("x");
        assert_eq!(s(x.clone().add(x.clone())), Expr::int(2).mul(x.clone()));
        assert_eq!(s(x.clone().sub(x.clone())), Expr::zero());
        let y = Expr::var("y");
        // 3xy + 2yx - 5xy = 0
        let e = Expr::int(3)
            .mul(x.clone())
            .mul(y.clone())
            .add(Expr::int(2).mul(y.clone()).mul(x.clone()))
            .sub(Expr::int(5).mul(x).mul(y));
        assert_eq!(s(e), Expr::zero());
    }

    #[test]
    fn merges_factors_into_powers() {
        let x = Expr::var("x");
        assert_eq!(s(x.clone().mul(x.clone())), x.clone().pow(2));
        assert_eq!(s(x.clone().mul(x.clone().pow(2))), x.pow(3));
    }

    #[test]
    fn distributes_products_over_sums() {
        let (x, y) = (Expr::var("x"), Expr::var("y"));
        // (x + y)(x - y) = x^2 - y^2
        let e = x.clone().add(y.clone()).mul(x.clone().sub(y.clone()));
        let want = x.pow(2).sub(y.pow(2));
        assert_eq!(s(e), s(want));
    }

    #[test]
    fn pythagorean_identity() {
        let t = Expr::var("t");
        let e = Expr::func(Fn1::Sin, t.clone())
            .pow(2)
            .add(Expr::func(Fn1::Cos, t.clone()).pow(2));
        assert_eq!(s(e), Expr::one());
        // Scaled: 3 sin^2 + 3 cos^2 = 3, but sin^2 - cos^2 stays put.
        let e = Expr::int(3)
            .mul(Expr::func(Fn1::Sin, t.clone()).pow(2))
            .add(Expr::int(3).mul(Expr::func(Fn1::Cos, t.clone()).pow(2)));
        assert_eq!(s(e), Expr::int(3));
        let e = Expr::func(Fn1::Sin, t.clone())
            .pow(2)
            .sub(Expr::func(Fn1::Cos, t).pow(2));
        assert!(matches!(s(e), Expr::Sum(_)));
    }

    #[test]
    fn sqrt_and_abs_rules() {
        let x = Expr::var("x");
        let sq = Expr::func(Fn1::Sqrt, x.clone().pow(2));
        assert_eq!(s(sq.clone()), Expr::func(Fn1::Abs, x.clone()));
        let mut a = Assumptions::new();
        a.assume_min("x", Num::ZERO).unwrap();
        assert_eq!(simplify(&sq, &a).unwrap(), x.clone());
        // abs of a sum of squares drops without assumptions
        let e = Expr::func(Fn1::Abs, x.clone().pow(2).add(Expr::var("y").pow(2)));
        assert_eq!(s(e), x.pow(2).add(Expr::var("y").pow(2)));
    }

    #[test]
    fn division_rules() {
        let (x, y) = (Expr::var("x"), Expr::var("y"));
        assert_eq!(s(x.clone().div(x.clone())), Expr::one());
        assert_eq!(s(Expr::int(2).mul(x.clone()).div(x.clone())), Expr::int(2));
        // (xy + x) / x = y + 1
        let e = x.clone().mul(y.clone()).add(x.clone()).div(x.clone());
        assert_eq!(s(e), s(y.clone().add(Expr::one())));
        // a / (b / c) = a c / b
        let e = x.clone().div(y.clone().div(Expr::var("z")));
        let got = s(e);
        match &got {
            Expr::Div(n, d) => {
                assert_eq!(**d, y);
                assert!(matches!(**n, Expr::Prod(_)));
            }
            other => panic!("expected division, got {other:?}"),
        }
        // constant denominator folds into the coefficient
        assert_eq!(s(x.clone().div(Expr::int(4))), Expr::rat(1, 4).mul(x).pipe_s());
        assert!(matches!(
            simplify(&Expr::one().div(Expr::zero()), &Assumptions::new()),
            Err(Error::DivisionByZeroConstant)
        ));
    }

    #[test]
    fn power_rules() {
        let x = Expr::var("x");
        assert_eq!(s(x.clone().pow(1)), x.clone());
        assert_eq!(s(x.clone().pow(0)), Expr::one());
        assert_eq!(s(x.clone().pow(2).pow(3)), x.clone().pow(6));
        assert_eq!(s(Expr::func(Fn1::Sqrt, x.clone()).pow(2)), x.clone());
        match s(x.clone().pow(-2)) {
            Expr::Div(n, d) => {
                assert_eq!(*n, Expr::one());
                assert_eq!(*d, x.clone().pow(2));
            }
            other => panic!("expected division, got {other:?}"),
        }
        assert_eq!(s(Expr::rat(2, 3).pow(3)), Expr::rat(8, 27));
    }

    #[test]
    fn constant_folds_are_exact_only() {
        assert_eq!(s(Expr::func(Fn1::Sin, Expr::zero())), Expr::zero());
        assert_eq!(s(Expr::func(Fn1::Cos, Expr::zero())), Expr::one());
        assert_eq!(s(Expr::func(Fn1::Sqrt, Expr::rat(9, 4))), Expr::rat(3, 2));
        assert_eq!(s(Expr::func(Fn1::Ln, Expr::one())), Expr::zero());
        // sin(1) has no exact form: stays symbolic
        assert!(matches!(s(Expr::func(Fn1::Sin, Expr::one())), Expr::Func(..)));
        // ...but a float argument folds numerically
        let e = Expr::func(Fn1::Sin, Expr::Const(Num::Float(1.0)));
        assert!(matches!(s(e), Expr::Const(Num::Float(_))));
    }

    #[test]
    fn parity() {
        let x = Expr::var("x");
        let e = Expr::func(Fn1::Sin, x.clone().neg());
        assert_eq!(s(e), s(Expr::func(Fn1::Sin, x.clone()).neg()));
        let e = Expr::func(Fn1::Cos, x.clone().neg());
        assert_eq!(s(e), Expr::func(Fn1::Cos, x));
    }

    #[test]
    fn exp_ln_inverse() {
        let x = Expr::var("x");
        assert_eq!(s(Expr::func(Fn1::Exp, Expr::func(Fn1::Ln, x.clone()))), x.clone());
        assert_eq!(s(Expr::func(Fn1::Ln, Expr::func(Fn1::Exp, x.clone()))), x);
    }

    #[test]
    fn idempotent_on_samples() {
        let (x, y) = (Expr::var("x"), Expr::var("y"));
        let samples = vec![
            x.clone().add(y.clone()).mul(x.clone().sub(y.clone())),
            Expr::func(Fn1::Sqrt, x.clone().pow(2).add(y.clone().pow(2))),
            x.clone().div(y.clone()).add(Expr::int(2).mul(x.clone()).div(y.clone())),
            Expr::func(Fn1::Sin, x.clone()).pow(2).add(Expr::func(Fn1::Cos, x).pow(2)),
        ];
        for e in samples {
            let once = s(e);
            let twice = s(once.clone());
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn same_denominator_terms_combine() {
        let (x, y, q) = (Expr::var("x"), Expr::var("y"), Expr::var("q"));
        let e = x.clone().div(q.clone()).add(y.clone().div(q.clone()));
        match s(e) {
            Expr::Div(n, d) => {
                assert_eq!(*d, q);
                assert_eq!(*n, Expr::Sum(vec![x.clone(), y.clone()]));
            }
            other => panic!("expected division, got {other:?}"),
        }
        // x/q - x/q = 0
        let e = x.clone().div(q.clone()).sub(x.div(q));
        assert_eq!(s(e), Expr::zero());
    }

    #[test]
    fn op_count_monotone_under_simplify() {
        let x = Expr::var("x");
        let e = x.clone().mul(Expr::one()).add(Expr::zero()).add(x.clone());
        let simplified = s(e.clone());
        assert!(simplified.op_count() <= e.op_count());
        assert_eq!(simplified, Expr::int(2).mul(x).pipe_s());
    }

    trait PipeS {
        fn pipe_s(self) -> Expr;
    }
    impl PipeS for Expr {
        fn pipe_s(self) -> Expr {
            simplify(&self, &Assumptions::new()).unwrap()
        }
    }
}
