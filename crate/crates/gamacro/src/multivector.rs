//! Sparse multivectors with symbolic coefficients.
//!
//! Every macro input becomes one of these: a map from basis blade to a
//! scalar expression. All nine products, the involutions, norms, and
//! the outermorphism application work term by term through the frame's
//! blade product tables, simplifying coefficients as they are built.

use crate::blades::{
    self, BladeId, Frame, ProductKind,
};
use crate::error::Error;
use crate::symbolic::{simplify, Assumptions, Expr, Fn1, Num};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

#[derive(Clone)]
pub struct SymMultivector {
    frame: Arc<Frame>,
    coeffs: BTreeMap<BladeId, Expr>,
}

impl SymMultivector {
    pub fn zero(frame: Arc<Frame>) -> SymMultivector {
        SymMultivector { frame, coeffs: BTreeMap::new() }
    }

    pub fn scalar(frame: Arc<Frame>, value: Expr) -> SymMultivector {
        let mut m = SymMultivector::zero(frame);
        if !value.is_zero() {
            m.coeffs.insert(0, value);
        }
        m
    }

    pub fn basis_blade(frame: Arc<Frame>, blade: BladeId) -> SymMultivector {
        let mut m = SymMultivector::zero(frame);
        m.coeffs.insert(blade, Expr::one());
        m
    }

    /// The unit pseudoscalar of the frame.
    pub fn pseudoscalar(frame: Arc<Frame>) -> SymMultivector {
        let top = frame.pseudoscalar();
        SymMultivector::basis_blade(frame, top)
    }

    pub fn frame(&self) -> &Arc<Frame> {
        &self.frame
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, blade: BladeId) -> Expr {
        self.coeffs.get(&blade).cloned().unwrap_or_else(Expr::zero)
    }

    pub fn set_coeff(&mut self, blade: BladeId, e: Expr) {
        if e.is_zero() {
            self.coeffs.remove(&blade);
        } else {
            self.coeffs.insert(blade, e);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (BladeId, &Expr)> {
        self.coeffs.iter().map(|(b, e)| (*b, e))
    }

    pub fn blades(&self) -> Vec<BladeId> {
        self.coeffs.keys().copied().collect()
    }

    /// Largest grade with a nonzero coefficient, zero for the zero
    /// multivector.
    pub fn top_grade(&self) -> u32 {
        self.coeffs.keys().map(|b| blades::grade(*b)).max().unwrap_or(0)
    }

    pub fn grades_present(&self) -> Vec<u32> {
        let mut gs: Vec<u32> = self.coeffs.keys().map(|b| blades::grade(*b)).collect();
        gs.sort_unstable();
        gs.dedup();
        gs
    }

    fn check_frame(&self, other: &SymMultivector) -> Result<(), Error> {
        if self.frame.name() != other.frame.name() || self.frame.dim() != other.frame.dim() {
            return Err(Error::FrameMismatch(
                self.frame.name().to_string(),
                other.frame.name().to_string(),
            ));
        }
        Ok(())
    }

    /// Rebuilds after an edit, dropping coefficients that simplify to
    /// zero.
    pub fn simplified(&self, a: &Assumptions) -> Result<SymMultivector, Error> {
        let mut out = SymMultivector::zero(self.frame.clone());
        for (b, e) in &self.coeffs {
            let s = simplify(e, a)?;
            out.set_coeff(*b, s);
        }
        Ok(out)
    }

    pub fn add(&self, other: &SymMultivector, a: &Assumptions) -> Result<SymMultivector, Error> {
        self.check_frame(other)?;
        let mut out = self.clone();
        for (b, e) in &other.coeffs {
            let sum = simplify(&out.coeff(*b).add(e.clone()), a)?;
            out.set_coeff(*b, sum);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &SymMultivector, a: &Assumptions) -> Result<SymMultivector, Error> {
        self.check_frame(other)?;
        let mut out = self.clone();
        for (b, e) in &other.coeffs {
            let diff = simplify(&out.coeff(*b).sub(e.clone()), a)?;
            out.set_coeff(*b, diff);
        }
        Ok(out)
    }

    pub fn neg(&self) -> SymMultivector {
        let mut out = SymMultivector::zero(self.frame.clone());
        for (b, e) in &self.coeffs {
            out.coeffs.insert(*b, e.clone().neg());
        }
        out
    }

    /// Multiplies every coefficient by a scalar expression.
    pub fn scale(&self, factor: &Expr, a: &Assumptions) -> Result<SymMultivector, Error> {
        let mut out = SymMultivector::zero(self.frame.clone());
        for (b, e) in &self.coeffs {
            let s = simplify(&e.clone().mul(factor.clone()), a)?;
            out.set_coeff(*b, s);
        }
        Ok(out)
    }

    /// Divides every coefficient by a scalar expression.
    pub fn div_by_scalar(&self, divisor: &Expr, a: &Assumptions) -> Result<SymMultivector, Error> {
        let mut out = SymMultivector::zero(self.frame.clone());
        for (b, e) in &self.coeffs {
            let s = simplify(&e.clone().div(divisor.clone()), a)?;
            out.set_coeff(*b, s);
        }
        Ok(out)
    }

    /// Any of the nine bilinear products, term by term through the
    /// frame's tables.
    pub fn product(
        &self,
        kind: ProductKind,
        other: &SymMultivector,
        a: &Assumptions,
    ) -> Result<SymMultivector, Error> {
        self.check_frame(other)?;
        // Gather all contributions per output blade first so each
        // coefficient is simplified once, as a whole sum.
        let mut pending: BTreeMap<BladeId, Vec<Expr>> = BTreeMap::new();
        for (ba, ea) in &self.coeffs {
            for (bb, eb) in &other.coeffs {
                for (blade, c) in self.frame.product(kind, *ba, *bb) {
                    let term =
                        Expr::Const(c).mul(ea.clone()).mul(eb.clone());
                    pending.entry(blade).or_default().push(term);
                }
            }
        }
        let mut out = SymMultivector::zero(self.frame.clone());
        for (blade, terms) in pending {
            let total = simplify(&Expr::Sum(terms), a)?;
            out.set_coeff(blade, total);
        }
        Ok(out)
    }

    pub fn gp(&self, other: &SymMultivector, a: &Assumptions) -> Result<SymMultivector, Error> {
        self.product(ProductKind::Gp, other, a)
    }

    pub fn op(&self, other: &SymMultivector, a: &Assumptions) -> Result<SymMultivector, Error> {
        self.product(ProductKind::Op, other, a)
    }

    pub fn lcp(&self, other: &SymMultivector, a: &Assumptions) -> Result<SymMultivector, Error> {
        self.product(ProductKind::Lcp, other, a)
    }

    pub fn reverse(&self) -> SymMultivector {
        self.per_grade_sign(blades::reverse_sign)
    }

    pub fn grade_involution(&self) -> SymMultivector {
        self.per_grade_sign(blades::grade_involution_sign)
    }

    pub fn clifford_conjugate(&self) -> SymMultivector {
        self.per_grade_sign(blades::clifford_conjugate_sign)
    }

    fn per_grade_sign(&self, sign: impl Fn(u32) -> i8) -> SymMultivector {
        let mut out = SymMultivector::zero(self.frame.clone());
        for (b, e) in &self.coeffs {
            let e = if sign(blades::grade(*b)) < 0 { e.clone().neg() } else { e.clone() };
            out.coeffs.insert(*b, e);
        }
        out
    }

    pub fn grade_part(&self, k: u32) -> SymMultivector {
        let mut out = SymMultivector::zero(self.frame.clone());
        for (b, e) in &self.coeffs {
            if blades::grade(*b) == k {
                out.coeffs.insert(*b, e.clone());
            }
        }
        out
    }

    pub fn select_grades(&self, grades: &[u32]) -> SymMultivector {
        let mut out = SymMultivector::zero(self.frame.clone());
        for (b, e) in &self.coeffs {
            if grades.contains(&blades::grade(*b)) {
                out.coeffs.insert(*b, e.clone());
            }
        }
        out
    }

    /// Keeps only coefficients on the listed blades.
    pub fn restrict_to_blades(&self, blades: &[BladeId]) -> SymMultivector {
        let mut out = SymMultivector::zero(self.frame.clone());
        for (b, e) in &self.coeffs {
            if blades.contains(b) {
                out.coeffs.insert(*b, e.clone());
            }
        }
        out
    }

    /// Scalar part of A * reverse(A).
    pub fn quasi_norm2(&self, a: &Assumptions) -> Result<Expr, Error> {
        let rev = self.reverse();
        let p = self.gp(&rev, a)?;
        Ok(p.coeff(0))
    }

    /// sqrt(|quasi_norm2|).
    pub fn quasi_norm(&self, a: &Assumptions) -> Result<Expr, Error> {
        let q = self.quasi_norm2(a)?;
        simplify(&Expr::func(Fn1::Sqrt, Expr::func(Fn1::Abs, q)), a)
    }

    /// Sum over grades of |scalar part of A_k * reverse(A_k)|.
    pub fn norm2(&self, a: &Assumptions) -> Result<Expr, Error> {
        let mut parts = Vec::new();
        for k in self.grades_present() {
            let part = self.grade_part(k);
            let q = part.quasi_norm2(a)?;
            parts.push(Expr::func(Fn1::Abs, q));
        }
        simplify(&Expr::Sum(parts), a)
    }

    pub fn norm(&self, a: &Assumptions) -> Result<Expr, Error> {
        let n2 = self.norm2(a)?;
        simplify(&Expr::func(Fn1::Sqrt, n2), a)
    }

    /// reverse(V) / quasi_norm2(V). Fails on syntactically null versors.
    pub fn versor_inverse(&self, a: &Assumptions) -> Result<SymMultivector, Error> {
        let q = self.quasi_norm2(a)?;
        if q.is_zero() {
            return Err(Error::NullVersor);
        }
        self.reverse().div_by_scalar(&q, a)
    }

    /// Dual with respect to a non-null blade: A lcp B^-1.
    pub fn dual(&self, b: &SymMultivector, a: &Assumptions) -> Result<SymMultivector, Error> {
        let bi = b.versor_inverse(a)?;
        self.lcp(&bi, a)
    }

    /// Un-dual: A lcp B.
    pub fn undual(&self, b: &SymMultivector, a: &Assumptions) -> Result<SymMultivector, Error> {
        self.lcp(b, a)
    }

    /// Projection onto a non-null blade: dual then un-dual.
    pub fn project(&self, b: &SymMultivector, a: &Assumptions) -> Result<SymMultivector, Error> {
        self.dual(b, a)?.undual(b, a)
    }

    /// Sandwich V A V^-1.
    pub fn sandwich(&self, inner: &SymMultivector, a: &Assumptions) -> Result<SymMultivector, Error> {
        let vi = self.versor_inverse(a)?;
        self.gp(inner, a)?.gp(&vi, a)
    }

    /// Differentiates every coefficient with respect to a scalar
    /// variable.
    pub fn diff(&self, var: &str, a: &Assumptions) -> Result<SymMultivector, Error> {
        let mut out = SymMultivector::zero(self.frame.clone());
        for (b, e) in &self.coeffs {
            let d = crate::symbolic::differentiate(e, var, a)?;
            out.set_coeff(*b, d);
        }
        Ok(out)
    }

    /// Substitutes scalar bindings in every coefficient.
    pub fn substitute(
        &self,
        bindings: &std::collections::HashMap<String, Expr>,
        a: &Assumptions,
    ) -> Result<SymMultivector, Error> {
        let mut out = SymMultivector::zero(self.frame.clone());
        for (b, e) in &self.coeffs {
            let s = crate::symbolic::substitute(e, bindings, a)?;
            out.set_coeff(*b, s);
        }
        Ok(out)
    }

    /// Applies a linear map on frame vectors (column i holds the image
    /// of vector i) as an outermorphism.
    pub fn apply_linear(&self, m: &[Vec<Num>], a: &Assumptions) -> Result<SymMultivector, Error> {
        let n = self.frame.dim();
        if m.len() != n || m.iter().any(|r| r.len() != n) {
            return Err(Error::Other(format!(
                "linear map must be {n}x{n} for frame `{}`",
                self.frame.name()
            )));
        }
        let mut pending: BTreeMap<BladeId, Vec<Expr>> = BTreeMap::new();
        for (blade, e) in &self.coeffs {
            for (b2, c) in blade_image_num(m, *blade) {
                pending
                    .entry(b2)
                    .or_default()
                    .push(Expr::Const(c).mul(e.clone()));
            }
        }
        let mut out = SymMultivector::zero(self.frame.clone());
        for (blade, terms) in pending {
            let total = simplify(&Expr::Sum(terms), a)?;
            out.set_coeff(blade, total);
        }
        Ok(out)
    }

    /// Structural equality after simplifying the difference of each
    /// coefficient.
    pub fn equivalent(&self, other: &SymMultivector, a: &Assumptions) -> Result<bool, Error> {
        if self.check_frame(other).is_err() {
            return Ok(false);
        }
        let mut all: Vec<BladeId> = self.blades();
        all.extend(other.blades());
        all.sort_unstable();
        all.dedup();
        for b in all {
            let d = simplify(&self.coeff(b).sub(other.coeff(b)), a)?;
            if !d.is_zero() {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Expands the image of a basis blade under a vector map with numeric
/// entries, using the compiler-side reordering sign.
pub(crate) fn blade_image_num(m: &[Vec<Num>], blade: BladeId) -> Vec<(BladeId, Num)> {
    let n = m.len();
    let mut acc: Vec<(BladeId, Num)> = vec![(0, Num::ONE)];
    for i in 0..n as u32 {
        if blade & (1 << i) == 0 {
            continue;
        }
        let mut next: Vec<(BladeId, Num)> = Vec::new();
        for (eb, ec) in &acc {
            for (j, row) in m.iter().enumerate() {
                let entry = row[i as usize];
                if entry.is_zero() {
                    continue;
                }
                let vb: BladeId = 1 << j;
                if eb & vb != 0 {
                    continue;
                }
                let sign = blades::reorder_sign(*eb, vb);
                let mut c = ec.mul(&entry);
                if sign < 0 {
                    c = c.neg();
                }
                let key = eb | vb;
                match next.iter_mut().find(|(b, _)| *b == key) {
                    Some((_, existing)) => *existing = existing.add(&c),
                    None => next.push((key, c)),
                }
            }
        }
        next.retain(|(_, c)| !c.is_zero());
        acc = next;
    }
    acc.sort_by_key(|(b, _)| *b);
    acc
}

impl fmt::Display for SymMultivector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (b, e) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let name = self.frame.blade_name(*b);
            if *b == 0 {
                write!(f, "({e})")?;
            } else {
                write!(f, "({e}) {name}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for SymMultivector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMultivector[{}: {}]", self.frame.name(), self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::parse_expr;
    use proptest::prelude::*;

    fn e3d() -> Arc<Frame> {
        Arc::new(
            Frame::euclidean("e3d", vec!["e1".into(), "e2".into(), "e3".into()]).unwrap(),
        )
    }

    fn e4d() -> Arc<Frame> {
        Arc::new(
            Frame::euclidean(
                "e4d",
                vec!["e1".into(), "e2".into(), "e3".into(), "e4".into()],
            )
            .unwrap(),
        )
    }

    fn mv(frame: &Arc<Frame>, parts: &[(&str, &str)]) -> SymMultivector {
        let mut m = SymMultivector::zero(frame.clone());
        for (blade, expr) in parts {
            let b = frame.parse_blade(blade).unwrap();
            m.set_coeff(b, parse_expr(expr).unwrap());
        }
        m
    }

    #[test]
    fn four_dim_example_products() {
        // A = 5 + e1 - 3 e1^e3, B = 2 e1^e4 + e2^e3^e4 in Euclidean 4D.
        let f = e4d();
        let asm = Assumptions::default();
        let a = mv(&f, &[("1", "5"), ("e1", "1"), ("e1^e3", "-3")]);
        let b = mv(&f, &[("e1^e4", "2"), ("e2^e3^e4", "1")]);

        let ab = a.gp(&b, &asm).unwrap();
        let expected_ab = mv(
            &f,
            &[
                ("e1^e4", "10"),
                ("e4", "2"),
                ("e3^e4", "6"),
                ("e2^e3^e4", "5"),
                ("e1^e2^e3^e4", "1"),
                ("e1^e2^e4", "3"),
            ],
        );
        assert!(ab.equivalent(&expected_ab, &asm).unwrap(), "AB = {ab}");

        let ba = b.gp(&a, &asm).unwrap();
        let expected_ba = mv(
            &f,
            &[
                ("e4", "-2"),
                ("e1^e4", "10"),
                ("e3^e4", "-6"),
                ("e1^e2^e4", "-3"),
                ("e2^e3^e4", "5"),
                ("e1^e2^e3^e4", "-1"),
            ],
        );
        assert!(ba.equivalent(&expected_ba, &asm).unwrap(), "BA = {ba}");

        let ab2 = ab.grade_part(2);
        let expected_ab2 = mv(&f, &[("e1^e4", "10"), ("e3^e4", "6")]);
        assert!(ab2.equivalent(&expected_ab2, &asm).unwrap(), "<AB>_2 = {ab2}");
    }

    #[test]
    fn symbolic_outer_product_cancels() {
        // u ^ v for trigonometric vectors lands on (sin^2 - cos^2) e12.
        let f = Arc::new(
            Frame::euclidean("e2d", vec!["e1".into(), "e2".into()]).unwrap(),
        );
        let asm = Assumptions::default();
        let u = mv(&f, &[("e1", "sin(x)"), ("e2", "cos(x)")]);
        let v = mv(&f, &[("e1", "cos(x)"), ("e2", "sin(x)")]);
        let w = u.op(&v, &asm).unwrap();
        let b12 = f.parse_blade("e1^e2").unwrap();
        let expected = simplify(&parse_expr("sin(x)^2 - cos(x)^2").unwrap(), &asm).unwrap();
        assert_eq!(w.coeff(b12), expected);

        let d = w.diff("x", &asm).unwrap();
        let expected_d = simplify(&parse_expr("4*sin(x)*cos(x)").unwrap(), &asm).unwrap();
        assert_eq!(d.coeff(b12), expected_d);
    }

    #[test]
    fn trig_rotor_has_unit_quasi_norm() {
        let f = e3d();
        let asm = Assumptions::default();
        let r = mv(&f, &[("1", "cos(t)"), ("e1^e2", "-sin(t)")]);
        let q = r.quasi_norm2(&asm).unwrap();
        assert_eq!(q, Expr::one());
        // The inverse of a unit versor is its reverse, exactly.
        let ri = r.versor_inverse(&asm).unwrap();
        assert!(ri.equivalent(&r.reverse(), &asm).unwrap());
        // And the sandwich keeps e3 fixed.
        let e3 = SymMultivector::basis_blade(f.clone(), f.parse_blade("e3").unwrap());
        let out = r.sandwich(&e3, &asm).unwrap();
        assert!(out.equivalent(&e3, &asm).unwrap(), "sandwich moved e3: {out}");
    }

    #[test]
    fn projection_keeps_contained_blades() {
        let f = e3d();
        let asm = Assumptions::default();
        let e1 = SymMultivector::basis_blade(f.clone(), f.parse_blade("e1").unwrap());
        let plane = SymMultivector::basis_blade(f.clone(), f.parse_blade("e1^e2").unwrap());
        let p = e1.project(&plane, &asm).unwrap();
        assert!(p.equivalent(&e1, &asm).unwrap(), "projection = {p}");

        // A general vector loses its out-of-plane part.
        let v = mv(&f, &[("e1", "a"), ("e2", "b"), ("e3", "c")]);
        let p = v.project(&plane, &asm).unwrap();
        let expected = mv(&f, &[("e1", "a"), ("e2", "b")]);
        assert!(p.equivalent(&expected, &asm).unwrap(), "projection = {p}");
    }

    #[test]
    fn dual_undual_round_trip() {
        let f = e3d();
        let asm = Assumptions::default();
        let i = SymMultivector::pseudoscalar(f.clone());
        let v = mv(&f, &[("e1", "a"), ("e2", "b"), ("e3", "c")]);
        let d = v.dual(&i, &asm).unwrap();
        // Dual of a vector against I3 is a bivector.
        assert_eq!(d.grades_present(), vec![2]);
        let back = d.undual(&i, &asm).unwrap();
        assert!(back.equivalent(&v, &asm).unwrap(), "round trip = {back}");
    }

    #[test]
    fn pythagorean_rational_map_preserves_areas() {
        // [[3/5, -4/5], [4/5, 3/5]] is an exact rotation; areas map
        // through the determinant, which is one.
        let f = Arc::new(
            Frame::euclidean("e2d", vec!["e1".into(), "e2".into()]).unwrap(),
        );
        let asm = Assumptions::default();
        let m = vec![
            vec![Num::rat(3, 5), Num::rat(-4, 5)],
            vec![Num::rat(4, 5), Num::rat(3, 5)],
        ];
        let area = SymMultivector::basis_blade(f.clone(), f.parse_blade("e1^e2").unwrap());
        let img = area.apply_linear(&m, &asm).unwrap();
        assert!(img.equivalent(&area, &asm).unwrap(), "image = {img}");
    }

    #[test]
    fn norms_on_mixed_grades() {
        let f = e3d();
        let asm = Assumptions::default();
        let a = mv(&f, &[("1", "2"), ("e1", "3"), ("e1^e2", "5")]);
        let n2 = a.norm2(&asm).unwrap();
        assert_eq!(n2, Expr::int(4 + 9 + 25));
        let q2 = a.quasi_norm2(&asm).unwrap();
        assert_eq!(q2, Expr::int(4 + 9 + 25));
    }

    fn small_rational() -> impl Strategy<Value = Expr> {
        (-4i64..=4, 1i64..=3).prop_map(|(n, d)| Expr::rat(n, d))
    }

    fn rational_mv(frame: Arc<Frame>) -> impl Strategy<Value = SymMultivector> {
        let count = frame.blade_count();
        proptest::collection::vec(small_rational(), count).prop_map(move |coeffs| {
            let mut m = SymMultivector::zero(frame.clone());
            for (b, e) in coeffs.into_iter().enumerate() {
                m.set_coeff(b as BladeId, e);
            }
            m
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

        #[test]
        fn reversal_antidistributes(a in rational_mv(e3d()), b in rational_mv(e3d())) {
            let asm = Assumptions::default();
            let lhs = a.gp(&b, &asm).unwrap().reverse();
            let rhs = b.reverse().gp(&a.reverse(), &asm).unwrap();
            prop_assert!(lhs.equivalent(&rhs, &asm).unwrap());
        }

        #[test]
        fn grade_involution_distributes(a in rational_mv(e3d()), b in rational_mv(e3d())) {
            let asm = Assumptions::default();
            let lhs = a.gp(&b, &asm).unwrap().grade_involution();
            let rhs = a.grade_involution().gp(&b.grade_involution(), &asm).unwrap();
            prop_assert!(lhs.equivalent(&rhs, &asm).unwrap());
        }

        #[test]
        fn conjugate_antidistributes(a in rational_mv(e3d()), b in rational_mv(e3d())) {
            let asm = Assumptions::default();
            let lhs = a.gp(&b, &asm).unwrap().clifford_conjugate();
            let rhs = b.clifford_conjugate().gp(&a.clifford_conjugate(), &asm).unwrap();
            prop_assert!(lhs.equivalent(&rhs, &asm).unwrap());
        }

        #[test]
        fn vector_anticommutator_is_scalar(a in rational_mv(e3d()), b in rational_mv(e3d())) {
            let asm = Assumptions::default();
            let x = a.grade_part(1);
            let y = b.grade_part(1);
            let sum = x.gp(&y, &asm).unwrap().add(&y.gp(&x, &asm).unwrap(), &asm).unwrap();
            for g in sum.grades_present() {
                prop_assert_eq!(g, 0);
            }
        }

        #[test]
        fn scalar_product_is_symmetric(a in rational_mv(e3d()), b in rational_mv(e3d())) {
            let asm = Assumptions::default();
            let lhs = a.product(ProductKind::Sp, &b, &asm).unwrap();
            let rhs = b.product(ProductKind::Sp, &a, &asm).unwrap();
            prop_assert!(lhs.equivalent(&rhs, &asm).unwrap());
        }

        #[test]
        fn grade_projection_is_idempotent_and_linear(a in rational_mv(e3d()), b in rational_mv(e3d())) {
            let asm = Assumptions::default();
            for k in 0..=3 {
                let p = a.grade_part(k);
                prop_assert!(p.grade_part(k).equivalent(&p, &asm).unwrap());
                let sum_then = a.add(&b, &asm).unwrap().grade_part(k);
                let then_sum = a.grade_part(k).add(&b.grade_part(k), &asm).unwrap();
                prop_assert!(sum_then.equivalent(&then_sum, &asm).unwrap());
            }
        }

        #[test]
        fn versor_inverse_round_trip(coords in proptest::collection::vec((-3i64..=3, 1i64..=2), 6)) {
            let f = e3d();
            let asm = Assumptions::default();
            // Build a versor from up to two non-null rational vectors.
            let mut v = SymMultivector::scalar(f.clone(), Expr::one());
            for pair in coords.chunks(3) {
                let mut vec_mv = SymMultivector::zero(f.clone());
                for (i, (n, d)) in pair.iter().enumerate() {
                    vec_mv.set_coeff(1 << i, Expr::rat(*n, *d));
                }
                if vec_mv.quasi_norm2(&asm).unwrap().is_zero() {
                    continue;
                }
                v = v.gp(&vec_mv, &asm).unwrap();
            }
            let vi = v.versor_inverse(&asm).unwrap();
            let p = v.gp(&vi, &asm).unwrap();
            let one = SymMultivector::scalar(f, Expr::one());
            prop_assert!(p.equivalent(&one, &asm).unwrap(), "V V^-1 = {}", p);
        }
    }
}
