//! Basis blades, frame metrics, and the bilinear product tables.
//!
//! A blade is a bitmask: bit `i` set means basis vector `i` is a factor,
//! so the scalar is `0`, `e1` is `0b1`, and `e1^e3` is `0b101`. Products
//! on orthonormal frames reduce to an XOR plus a reorder sign and the
//! metric signs of shared vectors. Frames declared through an inner
//! product matrix get an internal orthonormal frame by symmetric
//! eigendecomposition; their products run through that frame by
//! outermorphism and snap back to exact rationals when the error is
//! below 1e-12.

use crate::error::Error;
use crate::symbolic::Num;
use nalgebra::DMatrix;
use num_rational::Ratio;
use std::collections::HashMap;
use std::fmt;

pub type BladeId = u32;

/// Number of basis vectors in a blade.
pub fn grade(b: BladeId) -> u32 {
    b.count_ones()
}

/// Sign of sorting the concatenation of two ascending blades into
/// ascending order: counts the transpositions as a parity.
pub fn reorder_sign(a: BladeId, b: BladeId) -> i8 {
    let mut a = a >> 1;
    let mut swaps = 0u32;
    while a != 0 {
        swaps += (a & b).count_ones();
        a >>= 1;
    }
    if swaps % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Reverse: (-1)^(k(k-1)/2) on a grade-k blade.
pub fn reverse_sign(k: u32) -> i8 {
    if (k * k.wrapping_sub(1) / 2) % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Grade involution: (-1)^k.
pub fn grade_involution_sign(k: u32) -> i8 {
    if k % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Clifford conjugate: (-1)^(k(k+1)/2).
pub fn clifford_conjugate_sign(k: u32) -> i8 {
    if (k * (k + 1) / 2) % 2 == 0 {
        1
    } else {
        -1
    }
}

/// The nine bilinear products.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum ProductKind {
    /// Geometric product.
    Gp,
    /// Outer product.
    Op,
    /// Scalar product.
    Sp,
    /// Left contraction.
    Lcp,
    /// Right contraction.
    Rcp,
    /// Fat dot product.
    Fdp,
    /// Hestenes inner product.
    Hip,
    /// Commutator product.
    Cp,
    /// Anti-commutator product.
    Acp,
}

impl ProductKind {
    pub const ALL: [ProductKind; 9] = [
        ProductKind::Gp,
        ProductKind::Op,
        ProductKind::Sp,
        ProductKind::Lcp,
        ProductKind::Rcp,
        ProductKind::Fdp,
        ProductKind::Hip,
        ProductKind::Cp,
        ProductKind::Acp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProductKind::Gp => "gp",
            ProductKind::Op => "op",
            ProductKind::Sp => "sp",
            ProductKind::Lcp => "lcp",
            ProductKind::Rcp => "rcp",
            ProductKind::Fdp => "fdp",
            ProductKind::Hip => "hip",
            ProductKind::Cp => "cp",
            ProductKind::Acp => "acp",
        }
    }

    pub fn from_name(name: &str) -> Option<ProductKind> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }
}

/// A sparse multivector over blade ids with numeric coefficients; the
/// value type of product table entries.
pub type SparseNums = Vec<(BladeId, Num)>;

/// A basis frame: named basis vectors plus a metric.
#[derive(Clone)]
pub struct Frame {
    name: String,
    vectors: Vec<String>,
    /// Inner product matrix; diagonal for orthonormal frames.
    ipm: Vec<Vec<Num>>,
    /// Signatures of the internal orthonormal frame, one per vector.
    signatures: Vec<i8>,
    /// The matrix surfaced to the DSL as `<frame>.BCM`: column j holds
    /// the coordinates of derived vector j in the base frame.
    exposed_bcm: Option<Vec<Vec<Num>>>,
    /// Geometric products for every blade pair, present only when the
    /// frame is not orthonormal.
    gp_table: Option<HashMap<(BladeId, BladeId), SparseNums>>,
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("name", &self.name)
            .field("vectors", &self.vectors)
            .field("signatures", &self.signatures)
            .field("orthonormal", &self.gp_table.is_none())
            .finish()
    }
}

impl Frame {
    pub fn euclidean(name: impl Into<String>, vectors: Vec<String>) -> Result<Frame, Error> {
        let sigs = vec![1i8; vectors.len()];
        Frame::orthonormal(name, vectors, sigs)
    }

    pub fn orthonormal(
        name: impl Into<String>,
        vectors: Vec<String>,
        signatures: Vec<i8>,
    ) -> Result<Frame, Error> {
        let name = name.into();
        check_vectors(&name, &vectors)?;
        if signatures.len() != vectors.len() {
            return Err(Error::Other(format!(
                "frame `{name}`: {} signatures for {} vectors",
                signatures.len(),
                vectors.len()
            )));
        }
        let n = vectors.len();
        let ipm = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { Num::int(signatures[i] as i64) } else { Num::ZERO })
                    .collect()
            })
            .collect();
        Ok(Frame { name, vectors, ipm, signatures, exposed_bcm: None, gp_table: None })
    }

    /// Frame declared by an explicit symmetric inner product matrix.
    pub fn from_ipm(
        name: impl Into<String>,
        vectors: Vec<String>,
        ipm: Vec<Vec<Num>>,
    ) -> Result<Frame, Error> {
        let name = name.into();
        check_vectors(&name, &vectors)?;
        let n = vectors.len();
        if ipm.len() != n || ipm.iter().any(|r| r.len() != n) {
            return Err(Error::Other(format!("frame `{name}`: IPM must be {n}x{n}")));
        }
        for i in 0..n {
            for j in 0..i {
                if (ipm[i][j].to_f64() - ipm[j][i].to_f64()).abs() > 1e-12 {
                    return Err(Error::NonSymmetricIPM);
                }
            }
        }
        // A diagonal matrix of unit or zero entries is already orthonormal.
        if let Some(sigs) = as_orthonormal_diag(&ipm) {
            let mut f = Frame::orthonormal(name, vectors, sigs)?;
            f.ipm = ipm;
            return Ok(f);
        }
        build_ipm_frame(name, vectors, ipm, None)
    }

    /// Restriction of a parent frame to a named subset of its vectors.
    pub fn subspace_of(
        name: impl Into<String>,
        vectors: Vec<String>,
        parent: &Frame,
    ) -> Result<Frame, Error> {
        let name = name.into();
        check_vectors(&name, &vectors)?;
        let mut idx = Vec::with_capacity(vectors.len());
        for v in &vectors {
            let i = parent
                .vectors
                .iter()
                .position(|p| p == v)
                .ok_or_else(|| Error::UnknownBlade(v.clone(), parent.name.clone()))?;
            idx.push(i);
        }
        let ipm: Vec<Vec<Num>> =
            idx.iter().map(|&i| idx.iter().map(|&j| parent.ipm[i][j]).collect()).collect();
        if let Some(sigs) = as_orthonormal_diag(&ipm) {
            let mut f = Frame::orthonormal(name, vectors, sigs)?;
            f.ipm = ipm;
            return Ok(f);
        }
        build_ipm_frame(name, vectors, ipm, None)
    }

    /// The parent's internal orthonormal frame under new vector names.
    pub fn orthogonalize(
        name: impl Into<String>,
        vectors: Vec<String>,
        parent: &Frame,
    ) -> Result<Frame, Error> {
        let name = name.into();
        check_vectors(&name, &vectors)?;
        if vectors.len() != parent.dim() {
            return Err(Error::Other(format!(
                "frame `{name}`: expected {} vectors to orthogonalize `{}`",
                parent.dim(),
                parent.name
            )));
        }
        Frame::orthonormal(name, vectors, parent.signatures.clone())
    }

    /// Frame whose vector j is column j of `bcm` in base-frame coordinates.
    pub fn transform_by_bcm(
        name: impl Into<String>,
        vectors: Vec<String>,
        base: &Frame,
        bcm: Vec<Vec<Num>>,
    ) -> Result<Frame, Error> {
        let name = name.into();
        check_vectors(&name, &vectors)?;
        let n = base.dim();
        if vectors.len() != n || bcm.len() != n || bcm.iter().any(|r| r.len() != n) {
            return Err(Error::Other(format!(
                "frame `{name}`: BCM must be {n}x{n} over base `{}`",
                base.name
            )));
        }
        // ipm'[i][j] = f'_i . f'_j = (C^T G C)[i][j] with C columns = new vectors.
        let ct = mat_transpose(&bcm);
        let ipm = mat_mul(&mat_mul(&ct, &base.ipm), &bcm);
        if let Some(sigs) = as_orthonormal_diag(&ipm) {
            let mut f = Frame::orthonormal(name, vectors, sigs)?;
            f.ipm = ipm;
            f.exposed_bcm = Some(bcm);
            return Ok(f);
        }
        build_ipm_frame(name, vectors, ipm, Some(bcm))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[String] {
        &self.vectors
    }

    pub fn signatures(&self) -> &[i8] {
        &self.signatures
    }

    pub fn ipm(&self) -> &[Vec<Num>] {
        &self.ipm
    }

    pub fn exposed_bcm(&self) -> Option<&Vec<Vec<Num>>> {
        self.exposed_bcm.as_ref()
    }

    pub fn is_orthonormal(&self) -> bool {
        self.gp_table.is_none()
    }

    pub fn blade_count(&self) -> usize {
        1usize << self.vectors.len()
    }

    /// Pseudoscalar blade: all vectors.
    pub fn pseudoscalar(&self) -> BladeId {
        (self.blade_count() - 1) as BladeId
    }

    pub fn blade_name(&self, b: BladeId) -> String {
        if b == 0 {
            return "1".to_string();
        }
        let mut parts = Vec::new();
        let mut bits = b;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            parts.push(self.vectors[i].as_str());
        }
        parts.join("^")
    }

    /// Parses a canonical blade name: `1`, a vector name, or vector
    /// names joined by `^` in ascending basis order.
    pub fn parse_blade(&self, s: &str) -> Result<BladeId, Error> {
        let s = s.trim();
        if s == "1" {
            return Ok(0);
        }
        let mut blade: BladeId = 0;
        let mut last: Option<usize> = None;
        for part in s.split('^') {
            let part = part.trim();
            let i = self
                .vectors
                .iter()
                .position(|v| v == part)
                .ok_or_else(|| Error::UnknownBlade(s.to_string(), self.name.clone()))?;
            if last.is_some_and(|p| p >= i) {
                return Err(Error::UnknownBlade(s.to_string(), self.name.clone()));
            }
            last = Some(i);
            blade |= 1 << i;
        }
        Ok(blade)
    }

    /// Geometric product of two basis blades as a sparse multivector.
    pub fn gp(&self, a: BladeId, b: BladeId) -> SparseNums {
        match &self.gp_table {
            None => match gp_orthonormal(&self.signatures, a, b) {
                Some((blade, sign)) => vec![(blade, Num::int(sign as i64))],
                None => Vec::new(),
            },
            Some(table) => table.get(&(a, b)).cloned().unwrap_or_default(),
        }
    }

    /// Any of the nine products of two basis blades. All except gp, cp
    /// and acp are grade selections of the geometric product.
    pub fn product(&self, kind: ProductKind, a: BladeId, b: BladeId) -> SparseNums {
        let (ga, gb) = (grade(a) as i32, grade(b) as i32);
        match kind {
            ProductKind::Gp => self.gp(a, b),
            ProductKind::Op => select_grade(self.gp(a, b), ga + gb),
            ProductKind::Sp => select_grade(self.gp(a, b), 0),
            ProductKind::Lcp => select_grade(self.gp(a, b), gb - ga),
            ProductKind::Rcp => select_grade(self.gp(a, b), ga - gb),
            ProductKind::Fdp => select_grade(self.gp(a, b), (ga - gb).abs()),
            ProductKind::Hip => {
                if ga == 0 || gb == 0 {
                    Vec::new()
                } else {
                    select_grade(self.gp(a, b), (ga - gb).abs())
                }
            }
            ProductKind::Cp => half_combination(self.gp(a, b), self.gp(b, a), -1),
            ProductKind::Acp => half_combination(self.gp(a, b), self.gp(b, a), 1),
        }
    }

    /// Reciprocal basis vectors: row i holds the coordinates of the
    /// vector dual to vector i, so that recip[i] . vector[j] = delta.
    pub fn reciprocal_vectors(&self) -> Result<Vec<Vec<Num>>, Error> {
        mat_inv(&self.ipm).ok_or_else(|| Error::DegenerateMetric(self.name.clone()))
    }
}

fn check_vectors(frame: &str, vectors: &[String]) -> Result<(), Error> {
    if vectors.is_empty() {
        return Err(Error::Other(format!("frame `{frame}` has no basis vectors")));
    }
    if vectors.len() > 16 {
        return Err(Error::Other(format!(
            "frame `{frame}` has {} basis vectors; at most 16 are supported",
            vectors.len()
        )));
    }
    for (i, v) in vectors.iter().enumerate() {
        if v == "1" || v.contains('^') || v.is_empty() {
            return Err(Error::Other(format!("frame `{frame}`: invalid vector name `{v}`")));
        }
        if vectors[..i].contains(v) {
            return Err(Error::Other(format!("frame `{frame}`: duplicate vector `{v}`")));
        }
    }
    Ok(())
}

fn as_orthonormal_diag(ipm: &[Vec<Num>]) -> Option<Vec<i8>> {
    let n = ipm.len();
    let mut sigs = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..n {
            let x = ipm[i][j];
            if i == j {
                match x.to_f64() {
                    v if v == 1.0 => sigs.push(1),
                    v if v == -1.0 => sigs.push(-1),
                    v if v == 0.0 => sigs.push(0),
                    _ => return None,
                }
            } else if !x.is_zero() {
                return None;
            }
        }
    }
    Some(sigs)
}

fn gp_orthonormal(signatures: &[i8], a: BladeId, b: BladeId) -> Option<(BladeId, i8)> {
    let mut sign = reorder_sign(a, b);
    let mut shared = a & b;
    while shared != 0 {
        let i = shared.trailing_zeros() as usize;
        shared &= shared - 1;
        match signatures[i] {
            0 => return None,
            s => sign *= s,
        }
    }
    Some((a ^ b, sign))
}

fn select_grade(entries: SparseNums, target: i32) -> SparseNums {
    if target < 0 {
        return Vec::new();
    }
    entries.into_iter().filter(|(b, _)| grade(*b) as i32 == target).collect()
}

fn half_combination(ab: SparseNums, ba: SparseNums, sign: i64) -> SparseNums {
    let half = Num::rat(1, 2);
    let mut acc: HashMap<BladeId, Num> = HashMap::new();
    for (b, c) in ab {
        let e = acc.entry(b).or_insert(Num::ZERO);
        *e = e.add(&c);
    }
    let s = Num::int(sign);
    for (b, c) in ba {
        let e = acc.entry(b).or_insert(Num::ZERO);
        *e = e.add(&c.mul(&s));
    }
    let mut out: SparseNums = acc
        .into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|(b, c)| (b, c.mul(&half)))
        .collect();
    out.sort_by_key(|(b, _)| *b);
    out
}

fn build_ipm_frame(
    name: String,
    vectors: Vec<String>,
    ipm: Vec<Vec<Num>>,
    exposed_bcm: Option<Vec<Vec<Num>>>,
) -> Result<Frame, Error> {
    let n = vectors.len();
    let m = DMatrix::from_fn(n, n, |i, j| ipm[i][j].to_f64());
    let eig = m.symmetric_eigen();

    // Deterministic order: eigenvalues descending, stable on ties.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut signatures = Vec::with_capacity(n);
    // from_internal[i][j]: coordinate i (base frame) of internal vector j.
    let mut from_internal = vec![vec![0.0f64; n]; n];
    for (jj, &src) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[src];
        let sig = if lambda.abs() < 1e-10 {
            0
        } else if lambda > 0.0 {
            1
        } else {
            -1
        };
        signatures.push(sig);
        let scale = if sig == 0 { 1.0 } else { lambda.abs().sqrt() };
        for i in 0..n {
            from_internal[i][jj] = eig.eigenvectors[(i, src)] / scale;
        }
    }

    let from_num: Vec<Vec<Num>> =
        from_internal.iter().map(|r| r.iter().map(|&x| Num::Float(x)).collect()).collect();
    let to_num = mat_inv(&from_num)
        .ok_or_else(|| Error::DegenerateMetric(format!("{name}: base change not invertible")))?;
    let to_internal: Vec<Vec<f64>> =
        to_num.iter().map(|r| r.iter().map(|x| x.to_f64()).collect()).collect();

    let count = 1u32 << n;
    let mut table = HashMap::with_capacity((count * count) as usize);
    for a in 0..count {
        let ia = blade_through(&to_internal, a, n);
        for b in 0..count {
            let ib = blade_through(&to_internal, b, n);
            let mut internal: HashMap<BladeId, f64> = HashMap::new();
            for &(ba, ca) in &ia {
                for &(bb, cb) in &ib {
                    if let Some((blade, sign)) = gp_orthonormal(&signatures, ba, bb) {
                        *internal.entry(blade).or_insert(0.0) += ca * cb * sign as f64;
                    }
                }
            }
            let mut back: HashMap<BladeId, f64> = HashMap::new();
            for (blade, c) in internal {
                for (fb, fc) in blade_through(&from_internal, blade, n) {
                    *back.entry(fb).or_insert(0.0) += c * fc;
                }
            }
            let mut entries: SparseNums = back
                .into_iter()
                .map(|(blade, c)| (blade, snap_num(c)))
                .filter(|(_, c)| !c.is_zero())
                .collect();
            entries.sort_by_key(|(blade, _)| *blade);
            table.insert((a, b), entries);
        }
    }

    Ok(Frame { name, vectors, ipm, signatures, exposed_bcm, gp_table: Some(table) })
}

/// Maps a blade through a linear map given column-wise: input vector i
/// goes to sum_j m[j][i] * (output vector j), extended as a wedge.
fn blade_through(m: &[Vec<f64>], blade: BladeId, n: usize) -> Vec<(BladeId, f64)> {
    let mut acc: HashMap<BladeId, f64> = HashMap::new();
    acc.insert(0, 1.0);
    let mut bits = blade;
    while bits != 0 {
        let i = bits.trailing_zeros() as usize;
        bits &= bits - 1;
        let mut next: HashMap<BladeId, f64> = HashMap::new();
        for (&eb, &ec) in &acc {
            for j in 0..n {
                let mji = m[j][i];
                if mji == 0.0 {
                    continue;
                }
                let vb = 1u32 << j;
                if eb & vb != 0 {
                    continue;
                }
                let sign = reorder_sign(eb, vb) as f64;
                *next.entry(eb | vb).or_insert(0.0) += ec * mji * sign;
            }
        }
        acc = next;
    }
    let mut out: Vec<(BladeId, f64)> = acc.into_iter().filter(|(_, c)| *c != 0.0).collect();
    out.sort_by_key(|(b, _)| *b);
    out
}

/// Nearest rational within 1e-12 relative error and a small denominator;
/// otherwise the float passes through unchanged.
pub(crate) fn snap_num(x: f64) -> Num {
    const TOL: f64 = 1e-12;
    const MAX_DEN: i64 = 10_000;
    if !x.is_finite() {
        return Num::Float(x);
    }
    let scale = x.abs().max(1.0);
    let (mut p0, mut q0) = (1i64, 0i64);
    let (mut p1, mut q1) = (x.floor() as i64, 1i64);
    let mut frac = x - x.floor();
    for _ in 0..64 {
        if (p1 as f64 / q1 as f64 - x).abs() <= TOL * scale {
            return Num::Rat(Ratio::new(p1, q1));
        }
        if frac.abs() < 1e-18 {
            break;
        }
        let r = 1.0 / frac;
        let a = r.floor();
        frac = r - a;
        if a > MAX_DEN as f64 {
            break;
        }
        let a = a as i64;
        let p2 = match a.checked_mul(p1).and_then(|v| v.checked_add(p0)) {
            Some(v) => v,
            None => break,
        };
        let q2 = match a.checked_mul(q1).and_then(|v| v.checked_add(q0)) {
            Some(v) => v,
            None => break,
        };
        if q2 > MAX_DEN {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
    }
    Num::Float(x)
}

pub(crate) fn mat_identity(n: usize) -> Vec<Vec<Num>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { Num::ONE } else { Num::ZERO }).collect())
        .collect()
}

pub(crate) fn mat_transpose(a: &[Vec<Num>]) -> Vec<Vec<Num>> {
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    (0..cols).map(|j| (0..rows).map(|i| a[i][j]).collect()).collect()
}

pub(crate) fn mat_mul(a: &[Vec<Num>], b: &[Vec<Num>]) -> Vec<Vec<Num>> {
    let n = a.len();
    let k = b.len();
    let m = b.first().map_or(0, |r| r.len());
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut acc = Num::ZERO;
                    for t in 0..k {
                        acc = acc.add(&a[i][t].mul(&b[t][j]));
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Gauss-Jordan inverse with partial pivoting; exact on rational input.
pub(crate) fn mat_inv(a: &[Vec<Num>]) -> Option<Vec<Vec<Num>>> {
    let n = a.len();
    let mut m: Vec<Vec<Num>> = a.to_vec();
    let mut inv = mat_identity(n);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[i][col].to_f64().abs().total_cmp(&m[j][col].to_f64().abs())
        })?;
        if m[pivot][col].to_f64().abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let d = m[col][col];
        let r = d.recip().ok()?;
        for j in 0..n {
            m[col][j] = m[col][j].mul(&r);
            inv[col][j] = inv[col][j].mul(&r);
        }
        for i in 0..n {
            if i == col || m[i][col].is_zero() {
                continue;
            }
            let f = m[i][col];
            for j in 0..n {
                m[i][j] = m[i][j].sub(&f.mul(&m[col][j]));
                inv[i][j] = inv[i][j].sub(&f.mul(&inv[col][j]));
            }
        }
    }
    Some(inv)
}
