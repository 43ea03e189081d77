//! Independent numeric geometric algebra used to check generated code.
//!
//! This module shares no algorithms with [`crate::blades`]: blade
//! products are computed by concatenating factor lists and bubble
//! sorting them (counting swaps for the sign), and general metrics are
//! diagonalized by exact rational congruence (symmetric Gaussian
//! elimination with the hyperbolic trick for zero pivots) instead of a
//! floating eigendecomposition. Multivectors are dense arrays of
//! doubles over all 2^n blades, for frames of up to 8 dimensions.

use crate::error::Error;
use crate::symbolic::Num;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

type Exact = Ratio<i128>;

/// Minimal field interface so the congruence and product code runs both
/// exactly and in doubles.
trait Scalar: Clone + PartialEq {
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn neg(&self) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn magnitude(&self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn neg(&self) -> Self {
        -self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Scalar for Exact {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn neg(&self) -> Self {
        -self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn magnitude(&self) -> f64 {
        let n = *self.numer() as f64;
        let d = *self.denom() as f64;
        (n / d).abs()
    }
}

/// Splits a blade bitmask into its vector indices, ascending.
fn factor_list(blade: u32) -> Vec<usize> {
    let mut out = Vec::new();
    let mut bits = blade;
    while bits != 0 {
        let i = bits.trailing_zeros() as usize;
        bits &= bits - 1;
        out.push(i);
    }
    out
}

fn bits_of(factors: &[usize]) -> u32 {
    factors.iter().fold(0u32, |acc, &i| acc | (1 << i))
}

/// Bubble sorts a factor list, flipping the sign once per swap.
fn sort_counting_swaps(factors: &mut [usize]) -> i32 {
    let mut sign = 1;
    let len = factors.len();
    if len < 2 {
        return sign;
    }
    loop {
        let mut swapped = false;
        for i in 1..len {
            if factors[i - 1] > factors[i] {
                factors.swap(i - 1, i);
                sign = -sign;
                swapped = true;
            }
        }
        if !swapped {
            return sign;
        }
    }
}

/// Geometric product of two blades under a diagonal metric: concatenate,
/// sort, then contract equal neighbours through the metric.
fn gp_diagonal<T: Scalar>(metric: &[T], a: u32, b: u32) -> Option<(u32, T)> {
    let mut factors = factor_list(a);
    factors.extend(factor_list(b));
    let sign = sort_counting_swaps(&mut factors);
    let mut coeff = if sign > 0 { T::one() } else { T::one().neg() };
    let mut reduced = Vec::with_capacity(factors.len());
    let mut i = 0;
    while i < factors.len() {
        if i + 1 < factors.len() && factors[i] == factors[i + 1] {
            let m = &metric[factors[i]];
            if m.is_zero() {
                return None;
            }
            coeff = coeff.mul(m);
            i += 2;
        } else {
            reduced.push(factors[i]);
            i += 1;
        }
    }
    Some((bits_of(&reduced), coeff))
}

/// Outer product of two blades: zero on shared factors, otherwise the
/// union with the sorting sign.
fn wedge_blades(a: u32, b: u32) -> Option<(u32, i32)> {
    if a & b != 0 {
        return None;
    }
    let mut factors = factor_list(a);
    factors.extend(factor_list(b));
    let sign = sort_counting_swaps(&mut factors);
    Some((a | b, sign))
}

/// Symmetric congruence diagonalization: returns (p, d) with
/// p * g * p^T = diag(d) and p invertible. Zero pivots with a nonzero
/// off-diagonal partner get the hyperbolic row update first.
fn congruence_diagonalize<T: Scalar>(g: &[Vec<T>]) -> (Vec<Vec<T>>, Vec<T>) {
    let n = g.len();
    let mut a: Vec<Vec<T>> = g.to_vec();
    let mut p: Vec<Vec<T>> =
        (0..n).map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect()).collect();

    // Row op helpers keep A symmetric by mirroring onto columns.
    fn add_row<T: Scalar>(a: &mut [Vec<T>], p: &mut [Vec<T>], dst: usize, src: usize, f: &T) {
        let n = a.len();
        for j in 0..n {
            let v = a[src][j].mul(f);
            a[dst][j] = a[dst][j].add(&v);
        }
        for i in 0..n {
            let v = a[i][src].mul(f);
            a[i][dst] = a[i][dst].add(&v);
        }
        for j in 0..n {
            let v = p[src][j].mul(f);
            p[dst][j] = p[dst][j].add(&v);
        }
    }
    fn swap_rows<T: Scalar>(a: &mut [Vec<T>], p: &mut [Vec<T>], i: usize, j: usize) {
        a.swap(i, j);
        let n = a.len();
        for row in a.iter_mut() {
            row.swap(i, j);
        }
        let _ = n;
        p.swap(i, j);
    }

    for k in 0..n {
        if a[k][k].is_zero() {
            if let Some(j) = (k + 1..n).find(|&j| !a[j][j].is_zero()) {
                swap_rows(&mut a, &mut p, k, j);
            } else if let Some(j) = (k + 1..n).find(|&j| !a[k][j].is_zero()) {
                // Null diagonal but coupled: e_k + e_j squares to 2*a[k][j].
                let one = T::one();
                add_row(&mut a, &mut p, k, j, &one);
            }
        }
        if a[k][k].is_zero() {
            continue;
        }
        let pivot = a[k][k].clone();
        for i in k + 1..n {
            if a[i][k].is_zero() {
                continue;
            }
            let f = a[i][k].div(&pivot).neg();
            add_row(&mut a, &mut p, i, k, &f);
        }
    }

    let d = (0..n).map(|i| a[i][i].clone()).collect();
    (p, d)
}

/// Gauss-Jordan matrix inverse over any scalar.
fn invert<T: Scalar>(m: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let n = m.len();
    let mut a: Vec<Vec<T>> = m.to_vec();
    let mut inv: Vec<Vec<T>> =
        (0..n).map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect()).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].magnitude().total_cmp(&a[j][col].magnitude())
        })?;
        if a[pivot][col].magnitude() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col].clone();
        for j in 0..n {
            a[col][j] = a[col][j].div(&d);
            inv[col][j] = inv[col][j].div(&d);
        }
        for i in 0..n {
            if i == col || a[i][col].is_zero() {
                continue;
            }
            let f = a[i][col].clone();
            for j in 0..n {
                let v = f.mul(&a[col][j]);
                a[i][j] = a[i][j].sub(&v);
                let v = f.mul(&inv[col][j]);
                inv[i][j] = inv[i][j].sub(&v);
            }
        }
    }
    Some(inv)
}

/// Maps a blade through a linear map (column i of `m` holds the image of
/// vector i) by wedging the image vectors together.
fn blade_image<T: Scalar>(m: &[Vec<T>], blade: u32) -> Vec<(u32, T)> {
    let mut acc: Vec<(u32, T)> = vec![(0, T::one())];
    for i in factor_list(blade) {
        let mut next: Vec<(u32, T)> = Vec::new();
        for (eb, ec) in &acc {
            for (j, col_entry) in m.iter().map(|row| &row[i]).enumerate() {
                if col_entry.is_zero() {
                    continue;
                }
                let vb = 1u32 << j;
                let Some((blade2, sign)) = wedge_blades(*eb, vb) else { continue };
                let mut c = ec.mul(col_entry);
                if sign < 0 {
                    c = c.neg();
                }
                match next.iter_mut().find(|(b, _)| *b == blade2) {
                    Some((_, existing)) => *existing = existing.add(&c),
                    None => next.push((blade2, c)),
                }
            }
        }
        next.retain(|(_, c)| !c.is_zero());
        acc = next;
    }
    acc.sort_by_key(|(b, _)| *b);
    acc
}

fn gp_table<T: Scalar>(g: &[Vec<T>], n: usize) -> Vec<Vec<Vec<(u32, T)>>> {
    let (p, d) = congruence_diagonalize(g);
    let identity = p.iter().enumerate().all(|(i, row)| {
        row.iter().enumerate().all(|(j, x)| if i == j { *x == T::one() } else { x.is_zero() })
    });

    let count = 1usize << n;
    if identity {
        // Metric already diagonal: products come straight out.
        return (0..count as u32)
            .map(|a| {
                (0..count as u32)
                    .map(|b| match gp_diagonal(&d, a, b) {
                        Some((blade, c)) if !c.is_zero() => vec![(blade, c)],
                        _ => Vec::new(),
                    })
                    .collect()
            })
            .collect();
    }

    // General metric: push blades into the diagonal frame, multiply,
    // and pull the result back. Coordinates map with the transpose
    // inverse, so vector f_i has image column i of p^-1 (row i as built).
    let p_inv = invert(&p).expect("congruence transform is invertible");
    // to_diag column i = row i of p_inv (f_i = sum_j p_inv[i][j] d_j)
    let to_diag: Vec<Vec<T>> =
        (0..n).map(|r| (0..n).map(|c| p_inv[c][r].clone()).collect()).collect();
    // from_diag column i = row i of p (d_i = sum_j p[i][j] f_j)
    let from_diag: Vec<Vec<T>> =
        (0..n).map(|r| (0..n).map(|c| p[c][r].clone()).collect()).collect();

    let images: Vec<Vec<(u32, T)>> =
        (0..count as u32).map(|b| blade_image(&to_diag, b)).collect();

    (0..count as u32)
        .map(|a| {
            (0..count as u32)
                .map(|b| {
                    let mut diag_result: Vec<(u32, T)> = Vec::new();
                    for (ba, ca) in &images[a as usize] {
                        for (bb, cb) in &images[b as usize] {
                            let Some((blade, c)) = gp_diagonal(&d, *ba, *bb) else { continue };
                            let c = c.mul(ca).mul(cb);
                            match diag_result.iter_mut().find(|(x, _)| *x == blade) {
                                Some((_, e)) => *e = e.add(&c),
                                None => diag_result.push((blade, c)),
                            }
                        }
                    }
                    let mut out: Vec<(u32, T)> = Vec::new();
                    for (blade, c) in diag_result {
                        if c.is_zero() {
                            continue;
                        }
                        for (fb, fc) in blade_image(&from_diag, blade) {
                            let v = c.mul(&fc);
                            match out.iter_mut().find(|(x, _)| *x == fb) {
                                Some((_, e)) => *e = e.add(&v),
                                None => out.push((fb, v)),
                            }
                        }
                    }
                    out.retain(|(_, c)| !c.is_zero());
                    out.sort_by_key(|(b2, _)| *b2);
                    out
                })
                .collect()
        })
        .collect()
}

/// The same nine product names as the compiler side, derived here by
/// grade selection over this module's own geometric product.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OracleProduct {
    Gp,
    Op,
    Sp,
    Lcp,
    Rcp,
    Fdp,
    Hip,
    Cp,
    Acp,
}

impl OracleProduct {
    pub const ALL: [OracleProduct; 9] = [
        OracleProduct::Gp,
        OracleProduct::Op,
        OracleProduct::Sp,
        OracleProduct::Lcp,
        OracleProduct::Rcp,
        OracleProduct::Fdp,
        OracleProduct::Hip,
        OracleProduct::Cp,
        OracleProduct::Acp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OracleProduct::Gp => "gp",
            OracleProduct::Op => "op",
            OracleProduct::Sp => "sp",
            OracleProduct::Lcp => "lcp",
            OracleProduct::Rcp => "rcp",
            OracleProduct::Fdp => "fdp",
            OracleProduct::Hip => "hip",
            OracleProduct::Cp => "cp",
            OracleProduct::Acp => "acp",
        }
    }
}

/// A frame for the numeric oracle, with a dense-pair product table.
pub struct NumFrame {
    name: String,
    n: usize,
    gp_f64: Vec<Vec<Vec<(u32, f64)>>>,
    gp_exact: Option<Vec<Vec<Vec<(u32, Exact)>>>>,
}

impl NumFrame {
    /// Builds the oracle algebra from an inner product matrix alone.
    pub fn new(name: impl Into<String>, ipm: &[Vec<Num>]) -> Result<NumFrame, Error> {
        let name = name.into();
        let n = ipm.len();
        if n == 0 || n > 8 {
            return Err(Error::Other(format!(
                "oracle frame `{name}`: {n} dimensions outside supported range 1..=8"
            )));
        }
        if ipm.iter().any(|r| r.len() != n) {
            return Err(Error::Other(format!("oracle frame `{name}`: IPM must be square")));
        }

        let all_rational = ipm.iter().flatten().all(|x| matches!(x, Num::Rat(_)));
        if all_rational {
            let exact: Vec<Vec<Exact>> = ipm
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|x| match x {
                            Num::Rat(r) => Ratio::new(*r.numer() as i128, *r.denom() as i128),
                            Num::Float(_) => unreachable!(),
                        })
                        .collect()
                })
                .collect();
            let table = gp_table(&exact, n);
            let f64_table = table
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|cell| cell.iter().map(|(b, c)| (*b, c.magnitude() * sign_of(c))).collect())
                        .collect()
                })
                .collect();
            Ok(NumFrame { name, n, gp_f64: f64_table, gp_exact: Some(table) })
        } else {
            let floats: Vec<Vec<f64>> =
                ipm.iter().map(|row| row.iter().map(|x| x.to_f64()).collect()).collect();
            let table = gp_table(&floats, n);
            Ok(NumFrame { name, n, gp_f64: table, gp_exact: None })
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn blade_count(&self) -> usize {
        1usize << self.n
    }

    pub fn zero(&self) -> NumMultivector {
        NumMultivector { coeffs: vec![0.0; self.blade_count()] }
    }

    pub fn scalar(&self, v: f64) -> NumMultivector {
        let mut m = self.zero();
        m.coeffs[0] = v;
        m
    }

    pub fn basis_blade(&self, blade: u32) -> NumMultivector {
        let mut m = self.zero();
        m.coeffs[blade as usize] = 1.0;
        m
    }

    /// Exact rational geometric product of two basis blades, when the
    /// metric was rational.
    pub fn gp_blades_exact(&self, a: u32, b: u32) -> Option<&[(u32, Exact)]> {
        self.gp_exact.as_ref().map(|t| t[a as usize][b as usize].as_slice())
    }

    /// Any of the nine products of basis blades, exactly.
    pub fn product_blades_exact(
        &self,
        kind: OracleProduct,
        a: u32,
        b: u32,
    ) -> Option<Vec<(u32, Exact)>> {
        let table = self.gp_exact.as_ref()?;
        let ab = &table[a as usize][b as usize];
        let (ga, gb) = (a.count_ones() as i32, b.count_ones() as i32);
        let pick = |target: i32| -> Vec<(u32, Exact)> {
            if target < 0 {
                return Vec::new();
            }
            ab.iter().filter(|(b2, _)| b2.count_ones() as i32 == target).cloned().collect()
        };
        Some(match kind {
            OracleProduct::Gp => ab.clone(),
            OracleProduct::Op => pick(ga + gb),
            OracleProduct::Sp => pick(0),
            OracleProduct::Lcp => pick(gb - ga),
            OracleProduct::Rcp => pick(ga - gb),
            OracleProduct::Fdp => pick((ga - gb).abs()),
            OracleProduct::Hip => {
                if ga == 0 || gb == 0 {
                    Vec::new()
                } else {
                    pick((ga - gb).abs())
                }
            }
            OracleProduct::Cp | OracleProduct::Acp => {
                let ba = &table[b as usize][a as usize];
                let half = Exact::new(1, 2);
                let mut acc: Vec<(u32, Exact)> = ab.clone();
                for (blade, c) in ba {
                    let c = if kind == OracleProduct::Cp { -c } else { c.clone() };
                    match acc.iter_mut().find(|(x, _)| x == blade) {
                        Some((_, e)) => *e = e.clone() + c,
                        None => acc.push((*blade, c)),
                    }
                }
                acc.iter_mut().for_each(|(_, c)| *c = c.clone() * half);
                acc.retain(|(_, c)| !Zero::is_zero(c));
                acc.sort_by_key(|(b2, _)| *b2);
                acc
            }
        })
    }

    pub fn gp(&self, a: &NumMultivector, b: &NumMultivector) -> NumMultivector {
        self.product(OracleProduct::Gp, a, b)
    }

    pub fn product(
        &self,
        kind: OracleProduct,
        a: &NumMultivector,
        b: &NumMultivector,
    ) -> NumMultivector {
        match kind {
            OracleProduct::Cp => {
                let ab = self.raw_gp(a, b);
                let ba = self.raw_gp(b, a);
                ab.sub(&ba).scale(0.5)
            }
            OracleProduct::Acp => {
                let ab = self.raw_gp(a, b);
                let ba = self.raw_gp(b, a);
                ab.add(&ba).scale(0.5)
            }
            _ => self.graded_product(kind, a, b),
        }
    }

    fn raw_gp(&self, a: &NumMultivector, b: &NumMultivector) -> NumMultivector {
        let mut out = self.zero();
        for (ba, &ca) in a.coeffs.iter().enumerate() {
            if ca == 0.0 {
                continue;
            }
            for (bb, &cb) in b.coeffs.iter().enumerate() {
                if cb == 0.0 {
                    continue;
                }
                for &(blade, c) in &self.gp_f64[ba][bb] {
                    out.coeffs[blade as usize] += ca * cb * c;
                }
            }
        }
        out
    }

    fn graded_product(
        &self,
        kind: OracleProduct,
        a: &NumMultivector,
        b: &NumMultivector,
    ) -> NumMultivector {
        let mut out = self.zero();
        for (ba, &ca) in a.coeffs.iter().enumerate() {
            if ca == 0.0 {
                continue;
            }
            let ga = (ba as u32).count_ones() as i32;
            for (bb, &cb) in b.coeffs.iter().enumerate() {
                if cb == 0.0 {
                    continue;
                }
                let gb = (bb as u32).count_ones() as i32;
                let target = match kind {
                    OracleProduct::Gp => None,
                    OracleProduct::Op => Some(ga + gb),
                    OracleProduct::Sp => Some(0),
                    OracleProduct::Lcp => Some(gb - ga),
                    OracleProduct::Rcp => Some(ga - gb),
                    OracleProduct::Fdp => Some((ga - gb).abs()),
                    OracleProduct::Hip => {
                        if ga == 0 || gb == 0 {
                            continue;
                        }
                        Some((ga - gb).abs())
                    }
                    OracleProduct::Cp | OracleProduct::Acp => unreachable!(),
                };
                if target.is_some_and(|t| t < 0) {
                    continue;
                }
                for &(blade, c) in &self.gp_f64[ba][bb] {
                    if target.is_none_or(|t| blade.count_ones() as i32 == t) {
                        out.coeffs[blade as usize] += ca * cb * c;
                    }
                }
            }
        }
        out
    }

    pub fn reverse(&self, a: &NumMultivector) -> NumMultivector {
        self.per_grade_sign(a, |k| k % 4 == 2 || k % 4 == 3)
    }

    pub fn grade_involution(&self, a: &NumMultivector) -> NumMultivector {
        self.per_grade_sign(a, |k| k % 2 == 1)
    }

    pub fn clifford_conjugate(&self, a: &NumMultivector) -> NumMultivector {
        self.per_grade_sign(a, |k| k % 4 == 1 || k % 4 == 2)
    }

    fn per_grade_sign(&self, a: &NumMultivector, flip: impl Fn(u32) -> bool) -> NumMultivector {
        let mut out = a.clone();
        for (b, c) in out.coeffs.iter_mut().enumerate() {
            if flip((b as u32).count_ones()) {
                *c = -*c;
            }
        }
        out
    }

    /// Scalar part of A * reverse(A).
    pub fn quasi_norm2(&self, a: &NumMultivector) -> f64 {
        let rev = self.reverse(a);
        self.raw_gp(a, &rev).coeffs[0]
    }

    pub fn quasi_norm(&self, a: &NumMultivector) -> f64 {
        self.quasi_norm2(a).abs().sqrt()
    }

    /// Sum over grades of |scalar part of A_k * reverse(A_k)|.
    pub fn norm2(&self, a: &NumMultivector) -> f64 {
        let mut total = 0.0;
        for k in 0..=self.n as u32 {
            let part = a.grade_part(k);
            let rev = self.reverse(&part);
            total += self.raw_gp(&part, &rev).coeffs[0].abs();
        }
        total
    }

    pub fn norm(&self, a: &NumMultivector) -> f64 {
        self.norm2(a).sqrt()
    }

    pub fn versor_inverse(&self, v: &NumMultivector) -> Result<NumMultivector, Error> {
        let q = self.quasi_norm2(v);
        if q.abs() < 1e-300 {
            return Err(Error::NullVersor);
        }
        Ok(self.reverse(v).scale(1.0 / q))
    }

    /// Dual with respect to a blade: A lcp B^-1.
    pub fn dual(&self, a: &NumMultivector, b: &NumMultivector) -> Result<NumMultivector, Error> {
        let bi = self.versor_inverse(b)?;
        Ok(self.product(OracleProduct::Lcp, a, &bi))
    }

    /// Undual: A lcp B.
    pub fn undual(&self, a: &NumMultivector, b: &NumMultivector) -> NumMultivector {
        self.product(OracleProduct::Lcp, a, b)
    }

    /// Projection onto a non-null blade: the dual followed by the
    /// un-dual, (A lcp B^-1) lcp B.
    pub fn project(
        &self,
        a: &NumMultivector,
        b: &NumMultivector,
    ) -> Result<NumMultivector, Error> {
        let inner = self.dual(a, b)?;
        Ok(self.undual(&inner, b))
    }

    /// Sandwich product V A V^-1.
    pub fn sandwich(
        &self,
        v: &NumMultivector,
        a: &NumMultivector,
    ) -> Result<NumMultivector, Error> {
        let vi = self.versor_inverse(v)?;
        Ok(self.raw_gp(&self.raw_gp(v, a), &vi))
    }

    /// Applies a linear vector map (column i = image of vector i) as an
    /// outermorphism.
    pub fn apply_outermorphism(&self, m: &[Vec<f64>], a: &NumMultivector) -> NumMultivector {
        let mut out = self.zero();
        for (blade, &c) in a.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (b2, c2) in blade_image(m, blade as u32) {
                out.coeffs[b2 as usize] += c * c2;
            }
        }
        out
    }
}

fn sign_of(c: &Exact) -> f64 {
    if c.is_negative() {
        -1.0
    } else {
        1.0
    }
}

/// Dense multivector: one double per blade.
#[derive(Clone, Debug, PartialEq)]
pub struct NumMultivector {
    pub coeffs: Vec<f64>,
}

impl NumMultivector {
    pub fn from_coeffs(coeffs: Vec<f64>) -> NumMultivector {
        NumMultivector { coeffs }
    }

    pub fn get(&self, blade: u32) -> f64 {
        self.coeffs[blade as usize]
    }

    pub fn set(&mut self, blade: u32, v: f64) {
        self.coeffs[blade as usize] = v;
    }

    pub fn add(&self, o: &NumMultivector) -> NumMultivector {
        let coeffs = self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a + b).collect();
        NumMultivector { coeffs }
    }

    pub fn sub(&self, o: &NumMultivector) -> NumMultivector {
        let coeffs = self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a - b).collect();
        NumMultivector { coeffs }
    }

    pub fn scale(&self, f: f64) -> NumMultivector {
        NumMultivector { coeffs: self.coeffs.iter().map(|c| c * f).collect() }
    }

    pub fn neg(&self) -> NumMultivector {
        self.scale(-1.0)
    }

    pub fn grade_part(&self, k: u32) -> NumMultivector {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(b, &c)| if (b as u32).count_ones() == k { c } else { 0.0 })
            .collect();
        NumMultivector { coeffs }
    }

    pub fn select_grades(&self, grades: &[u32]) -> NumMultivector {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(b, &c)| if grades.contains(&(b as u32).count_ones()) { c } else { 0.0 })
            .collect();
        NumMultivector { coeffs }
    }

    /// Keeps only the listed blades.
    pub fn mask_blades(&self, blades: &[u32]) -> NumMultivector {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(b, &c)| if blades.contains(&(b as u32)) { c } else { 0.0 })
            .collect();
        NumMultivector { coeffs }
    }

    pub fn max_abs_diff(&self, o: &NumMultivector) -> f64 {
        self.coeffs
            .iter()
            .zip(&o.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_zero_within(&self, tol: f64) -> bool {
        self.coeffs.iter().all(|c| c.abs() <= tol)
    }
}
