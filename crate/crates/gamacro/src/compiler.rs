//! Stage-2 semantic compilation: the parsed project becomes compiled
//! frames with product tables, outermorphisms, subspace blade sets,
//! multivector classes, constant multivectors, and macros lowered to
//! linear operation lists over versioned registers.
//!
//! Macro calls are always inlined here, so the resulting [`MacroIR`]
//! has no call construct and recursion is a compile error. Register
//! reassignment in the DSL compiles to fresh register ids, which keeps
//! the downstream optimizer's bookkeeping trivial.

use crate::blades::{BladeId, Frame};
use crate::dsl::{
    BinOp, ClassRef, FileRole, FrameDef, Loc, MacroDecl, Operand, ProjectAst, Statement,
    SubspaceDef, TransformDef, UnaryKind,
};
use crate::error::{Diagnostic, Error};
use crate::multivector::SymMultivector;
use crate::symbolic::{simplify, Assumptions, Expr, Num};
use indexmap::IndexMap;
use std::collections::HashMap;
use std::sync::Arc;

/// A linear map between two frames of equal dimension, applied to
/// multivectors as an outermorphism. Column j of `matrix` holds the
/// image of source vector j expressed on the destination basis.
#[derive(Debug)]
pub struct Outermorphism {
    pub name: String,
    pub source: Arc<Frame>,
    pub dest: Arc<Frame>,
    pub matrix: Vec<Vec<Num>>,
}

impl Outermorphism {
    pub fn apply(&self, mv: &SymMultivector, a: &Assumptions) -> Result<SymMultivector, Error> {
        if mv.frame().name() != self.source.name() {
            return Err(Error::TransformDomainMismatch(self.name.clone()));
        }
        let moved = mv.apply_linear(&self.matrix, a)?;
        let mut out = SymMultivector::zero(self.dest.clone());
        for (b, e) in moved.terms() {
            out.set_coeff(b, e.clone());
        }
        Ok(out)
    }
}

/// A named set of basis blades inside one frame.
#[derive(Debug)]
pub struct SubspaceInfo {
    pub qualified: String,
    pub frame: Arc<Frame>,
    /// Sorted ascending.
    pub blades: Vec<BladeId>,
}

/// A multivector class: a blade set plus constant-pinned coefficients.
#[derive(Debug)]
pub struct ClassInfo {
    pub qualified: String,
    pub frame: Arc<Frame>,
    /// Sorted ascending; always a superset of the pinned blades.
    pub blades: Vec<BladeId>,
    pub pinned: Vec<(BladeId, Expr)>,
}

impl ClassInfo {
    /// The built-in `<frame>.Multivector` class covering the full space.
    pub fn full(frame: &Arc<Frame>) -> ClassInfo {
        ClassInfo {
            qualified: format!("{}.Multivector", frame.name()),
            frame: frame.clone(),
            blades: (0..frame.blade_count() as BladeId).collect(),
            pinned: Vec::new(),
        }
    }

    pub fn contains(&self, b: BladeId) -> bool {
        self.blades.binary_search(&b).is_ok()
    }

    pub fn pin_for(&self, b: BladeId) -> Option<&Expr> {
        self.pinned.iter().find(|(p, _)| *p == b).map(|(_, e)| e)
    }

    /// Restricts `mv` to the class blade set and overwrites pinned
    /// blades with their class constants. A symbolically nonzero
    /// coefficient outside the blade set errors in strict mode and is
    /// dropped otherwise.
    pub fn cast(
        &self,
        mv: &SymMultivector,
        strict: bool,
        a: &Assumptions,
    ) -> Result<SymMultivector, Error> {
        if mv.frame().name() != self.frame.name() {
            return Err(Error::FrameMismatch(
                mv.frame().name().to_string(),
                self.frame.name().to_string(),
            ));
        }
        let mut out = SymMultivector::zero(self.frame.clone());
        for (b, e) in mv.terms() {
            if self.contains(b) {
                out.set_coeff(b, e.clone());
            } else if strict {
                let v = simplify(e, a)?;
                if !v.is_zero() {
                    return Err(Error::BladeOutsideClass(self.frame.blade_name(b)));
                }
            }
        }
        for (b, pin) in &self.pinned {
            out.set_coeff(*b, pin.clone());
        }
        Ok(out)
    }
}

/// A reusable coefficient binding pattern for one frame: blade to
/// target-expression pairs plus optional variable bounds. Target
/// variable references stay in their bracketed `<path>` form; the use
/// site prefixes them with an object path.
#[derive(Debug)]
pub struct BindingPattern {
    pub name: String,
    pub frame: Arc<Frame>,
    pub bind: Vec<(BladeId, Expr)>,
    /// Bracketed variable names with constant lower bounds.
    pub min: Vec<(String, Num)>,
    pub max: Vec<(String, Num)>,
}

pub type RegId = usize;

/// Debug metadata for one virtual register.
#[derive(Clone, Debug)]
pub struct RegInfo {
    pub name: String,
    pub frame: Arc<Frame>,
}

/// A scalar expression argument together with the register
/// coefficients its `<mv.blade>` references read.
#[derive(Clone, Debug)]
pub struct ScalarArg {
    pub expr: Expr,
    /// (variable name as it appears in `expr`, register, blade).
    pub reads: Vec<(String, RegId, BladeId)>,
}

impl ScalarArg {
    pub fn plain(expr: Expr) -> ScalarArg {
        ScalarArg { expr, reads: Vec::new() }
    }
}

/// What a `diff` operation differentiates with respect to.
#[derive(Clone, Debug)]
pub enum DiffTarget {
    /// The symbol held in a register coefficient, resolved at
    /// evaluation time (the coefficient must be a plain variable).
    Coeff(RegId, BladeId),
    /// A raw symbol name.
    Var(String),
}

#[derive(Clone, Debug)]
pub enum UnaryIR {
    GradeInv,
    CliffConj,
    Reverse,
    Norm,
    Norm2,
    QuasiNorm,
    QuasiNorm2,
    Scale(ScalarArg),
    DivByScalar(ScalarArg),
    Diff(DiffTarget),
    CastToGrades(Vec<u32>),
    CastToSubspace(Arc<SubspaceInfo>),
    CastToClass(Arc<ClassInfo>),
}

/// One step of a lowered macro. Registers are written at most once.
#[derive(Clone, Debug)]
pub enum Op {
    /// Build a multivector from explicit blade coefficients.
    Ctor { dst: RegId, frame: Arc<Frame>, coeffs: Vec<(BladeId, ScalarArg)> },
    Binary { dst: RegId, op: BinOp, lhs: RegId, rhs: RegId },
    Transform { dst: RegId, transform: Arc<Outermorphism>, arg: RegId },
    Unary { dst: RegId, op: UnaryIR, arg: RegId },
    Copy { dst: RegId, src: RegId },
    Negate { dst: RegId, src: RegId },
    /// Verbatim target text; `reads` lists the `<mv.blade>`
    /// placeholders to resolve when emitting.
    Output { payload: String, reads: Vec<(String, RegId, BladeId)> },
    JoinOn,
    JoinOff,
}

/// A macro lowered to a linear operation list. The first
/// `inputs.len()` registers are the inputs, in declaration order.
#[derive(Debug)]
pub struct MacroIR {
    pub name: String,
    pub inputs: Vec<(String, Arc<ClassInfo>)>,
    /// `None` register means the output was never assigned and
    /// evaluates to zero.
    pub outputs: Vec<(String, Arc<ClassInfo>, Option<RegId>)>,
    pub regs: Vec<RegInfo>,
    pub ops: Vec<Op>,
}

/// The fully resolved project. Iteration order of each map follows
/// declaration order, which keeps downstream generation deterministic.
#[derive(Default, Debug)]
pub struct CompiledProject {
    pub frames: IndexMap<String, Arc<Frame>>,
    pub transforms: IndexMap<String, Arc<Outermorphism>>,
    /// Keyed `frame.name`.
    pub subspaces: IndexMap<String, Arc<SubspaceInfo>>,
    /// Keyed `frame.Name`; every frame gets a built-in
    /// `frame.Multivector` class.
    pub classes: IndexMap<String, Arc<ClassInfo>>,
    /// Keyed `frame.Name`; every frame gets built-in `I` (the
    /// pseudoscalar) and, when it exists, `Ii` (its versor inverse).
    pub constants: IndexMap<String, SymMultivector>,
    pub bindings: IndexMap<String, Arc<BindingPattern>>,
    pub macros: IndexMap<String, Arc<MacroIR>>,
}

impl CompiledProject {
    pub fn frame(&self, name: &str) -> Result<&Arc<Frame>, Error> {
        self.frames.get(name).ok_or_else(|| Error::UnknownFrame(name.to_string()))
    }

    pub fn transform(&self, name: &str) -> Result<&Arc<Outermorphism>, Error> {
        self.transforms.get(name).ok_or_else(|| Error::UnknownTransform(name.to_string()))
    }

    pub fn subspace(&self, qualified: &str) -> Result<&Arc<SubspaceInfo>, Error> {
        self.subspaces.get(qualified).ok_or_else(|| Error::UnknownSubspace(qualified.to_string()))
    }

    pub fn class(&self, qualified: &str) -> Result<&Arc<ClassInfo>, Error> {
        self.classes.get(qualified).ok_or_else(|| Error::UnknownClass(qualified.to_string()))
    }

    pub fn constant(&self, qualified: &str) -> Result<&SymMultivector, Error> {
        self.constants.get(qualified).ok_or_else(|| Error::UnknownConstant(qualified.to_string()))
    }

    pub fn macro_ir(&self, name: &str) -> Result<&Arc<MacroIR>, Error> {
        self.macros.get(name).ok_or_else(|| Error::UnknownMacroName(name.to_string()))
    }

    pub fn binding(&self, name: &str) -> Result<&Arc<BindingPattern>, Error> {
        self.bindings
            .get(name)
            .ok_or_else(|| Error::Other(format!("unknown class binding `{name}`")))
    }
}

/// Stable diagnostic code for a resolution error.
fn code_of(e: &Error) -> &'static str {
    match e {
        Error::UnknownFrame(_) => "unknown-frame",
        Error::UnknownClass(_) => "unknown-class",
        Error::UnknownTransform(_) => "unknown-transform",
        Error::UnknownSubspace(_) => "unknown-subspace",
        Error::UnknownMacroName(_) => "unknown-macro",
        Error::UnknownConstant(_) => "unknown-constant",
        Error::UnknownBlade(..) => "unknown-blade",
        Error::SingularTransform(_) => "singular-transform",
        Error::CyclicMacroCall(_) => "cyclic-call",
        Error::UnboundCalleeInput(_) => "unbound-callee-input",
        Error::ClassMismatch(..) => "class-mismatch",
        Error::FrameMismatch(..) => "frame-mismatch",
        Error::TransformDomainMismatch(_) => "transform-domain",
        Error::NonSymmetricIPM => "non-symmetric-ipm",
        Error::DegenerateMetric(_) => "degenerate-metric",
        Error::BladeOutsideClass(_) => "blade-outside-class",
        _ => "compile-error",
    }
}

fn diag(loc: Loc, role: FileRole, e: &Error) -> Diagnostic {
    loc.diagnostic(role, code_of(e), e.to_string())
}

pub fn compile(ast: &ProjectAst) -> Result<CompiledProject, Vec<Diagnostic>> {
    let mut p = CompiledProject::default();
    let mut diags: Vec<Diagnostic> = Vec::new();

    for d in &ast.frames {
        match build_frame(&p, d) {
            Ok(f) => {
                let f = Arc::new(f);
                p.frames.insert(d.name.clone(), f.clone());
                let full = Arc::new(ClassInfo::full(&f));
                p.classes.insert(full.qualified.clone(), full);
                let i = SymMultivector::pseudoscalar(f.clone());
                if let Ok(ii) = i.versor_inverse(&Assumptions::default()) {
                    p.constants.insert(format!("{}.Ii", f.name()), ii);
                }
                p.constants.insert(format!("{}.I", f.name()), i);
            }
            Err(e) => diags.push(diag(d.loc, FileRole::Frames, &e)),
        }
    }

    for d in &ast.transforms {
        match build_transform(&p, d) {
            Ok(t) => {
                p.transforms.insert(d.name.clone(), Arc::new(t));
            }
            Err(e) => diags.push(diag(d.loc, FileRole::Transforms, &e)),
        }
    }

    for d in &ast.subspaces {
        match build_subspace(&p, d) {
            Ok(s) => {
                p.subspaces.insert(s.qualified.clone(), Arc::new(s));
            }
            Err(e) => diags.push(diag(d.loc, FileRole::Subspaces, &e)),
        }
    }

    for d in &ast.classes {
        match build_class(&p, d) {
            Ok(c) => {
                if c.qualified.ends_with(".Multivector") {
                    diags.push(d.loc.diagnostic(
                        FileRole::Multivectors,
                        "duplicate-name",
                        format!("`{}` shadows the built-in full-space class", c.qualified),
                    ));
                } else {
                    p.classes.insert(c.qualified.clone(), Arc::new(c));
                }
            }
            Err(e) => diags.push(diag(d.loc, FileRole::Multivectors, &e)),
        }
    }

    for d in &ast.constants {
        let qualified = format!("{}.{}", d.frame, d.name);
        if d.name == "I" || d.name == "Ii" {
            diags.push(d.loc.diagnostic(
                FileRole::Constants,
                "duplicate-name",
                format!("`{qualified}` shadows a built-in constant"),
            ));
            continue;
        }
        match build_constant(&p, d) {
            Ok(c) => {
                p.constants.insert(qualified, c);
            }
            Err(e) => diags.push(diag(d.loc, FileRole::Constants, &e)),
        }
    }

    for d in &ast.bindings {
        match build_binding(&p, d) {
            Ok(b) => {
                p.bindings.insert(d.name.clone(), Arc::new(b));
            }
            Err(e) => diags.push(diag(d.loc, FileRole::Bindings, &e)),
        }
    }

    for d in &ast.macros {
        match compile_macro(&p, d) {
            Ok(m) => {
                p.macros.insert(d.name.clone(), Arc::new(m));
            }
            Err(mut errs) => diags.append(&mut errs),
        }
    }

    if diags.is_empty() { Ok(p) } else { Err(diags) }
}

/// Normalizes a bound-variable name to the bracketed form expression
/// variables use.
fn bracketed(name: &str) -> String {
    if name.starts_with('<') { name.to_string() } else { format!("<{name}>") }
}

fn build_binding(
    p: &CompiledProject,
    d: &crate::dsl::BindingDecl,
) -> Result<BindingPattern, Error> {
    let frame = p.frame(&d.frame)?.clone();
    let mut bind = Vec::with_capacity(d.bind.len());
    for (blade, e) in &d.bind {
        bind.push((frame.parse_blade(blade)?, e.clone()));
    }
    let min = d.min.iter().map(|(v, c)| (bracketed(v), *c)).collect();
    let max = d.max.iter().map(|(v, c)| (bracketed(v), *c)).collect();
    Ok(BindingPattern { name: d.name.clone(), frame, bind, min, max })
}

fn build_frame(p: &CompiledProject, d: &crate::dsl::FrameDecl) -> Result<Frame, Error> {
    let basis = d.basis.clone();
    match &d.def {
        FrameDef::Euclidean => Frame::euclidean(&d.name, basis),
        FrameDef::Ipm(m) => Frame::from_ipm(&d.name, basis, m.clone()),
        FrameDef::SubspaceOf(parent) => Frame::subspace_of(&d.name, basis, p.frame(parent)?),
        FrameDef::Orthogonalize(parent) => Frame::orthogonalize(&d.name, basis, p.frame(parent)?),
        FrameDef::TransformBy { source, bcm } => {
            Frame::transform_by_bcm(&d.name, basis, p.frame(source)?, bcm.clone())
        }
    }
}

fn build_transform(
    p: &CompiledProject,
    d: &crate::dsl::TransformDecl,
) -> Result<Outermorphism, Error> {
    let source = p.frame(&d.source)?.clone();
    let dest = p.frame(&d.dest)?.clone();
    let n = source.dim();
    if dest.dim() != n {
        return Err(Error::Other(format!(
            "transform `{}` connects frames of different dimension ({} vs {})",
            d.name,
            n,
            dest.dim()
        )));
    }
    let matrix = match &d.def {
        TransformDef::Identity => crate::blades::mat_identity(n),
        TransformDef::AliasOf(t) => p.transform(t)?.matrix.clone(),
        TransformDef::InverseOf(t) => {
            let base = p.transform(t)?;
            crate::blades::mat_inv(&base.matrix)
                .ok_or_else(|| Error::SingularTransform(t.clone()))?
        }
        TransformDef::TransposeOf(t) => crate::blades::mat_transpose(&p.transform(t)?.matrix),
        TransformDef::InverseTransposeOf(t) => {
            let base = p.transform(t)?;
            let inv = crate::blades::mat_inv(&base.matrix)
                .ok_or_else(|| Error::SingularTransform(t.clone()))?;
            crate::blades::mat_transpose(&inv)
        }
        TransformDef::OutermorphismBcm(f) => {
            let frame = p.frame(f)?;
            frame
                .exposed_bcm()
                .cloned()
                .ok_or_else(|| Error::Other(format!("frame `{f}` exposes no base change matrix")))?
        }
        TransformDef::OutermorphismMatrix(m) => m.clone(),
    };
    if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
        return Err(Error::Other(format!("transform `{}` needs a {n}x{n} matrix", d.name)));
    }
    Ok(Outermorphism { name: d.name.clone(), source, dest, matrix })
}

fn build_subspace(
    p: &CompiledProject,
    d: &crate::dsl::SubspaceDecl,
) -> Result<SubspaceInfo, Error> {
    let frame = p.frame(&d.frame)?.clone();
    let mut blades: Vec<BladeId> = match &d.def {
        SubspaceDef::Basis(names) => {
            names.iter().map(|n| frame.parse_blade(n)).collect::<Result<_, _>>()?
        }
        SubspaceDef::GaSpan(vectors) => {
            let mut mask: BladeId = 0;
            for v in vectors {
                let b = frame.parse_blade(v)?;
                if crate::blades::grade(b) != 1 {
                    return Err(Error::Other(format!(
                        "ga_span expects basis vectors, got `{v}`"
                    )));
                }
                mask |= b;
            }
            (0..frame.blade_count() as BladeId).filter(|b| b & !mask == 0).collect()
        }
    };
    blades.sort_unstable();
    blades.dedup();
    Ok(SubspaceInfo { qualified: format!("{}.{}", d.frame, d.name), frame, blades })
}

fn build_class(p: &CompiledProject, d: &crate::dsl::ClassDecl) -> Result<ClassInfo, Error> {
    let frame = p.frame(&d.frame)?.clone();
    let mut blades: Vec<BladeId> = Vec::new();
    for s in &d.subspaces {
        let sub = p.subspace(&format!("{}.{s}", d.frame))?;
        blades.extend_from_slice(&sub.blades);
    }
    let mut pinned = Vec::new();
    for (name, e) in &d.pinned {
        let b = frame.parse_blade(name)?;
        blades.push(b);
        pinned.push((b, simplify(e, &Assumptions::default())?));
    }
    blades.sort_unstable();
    blades.dedup();
    Ok(ClassInfo { qualified: format!("{}.{}", d.frame, d.name), frame, blades, pinned })
}

fn build_constant(
    p: &CompiledProject,
    d: &crate::dsl::ConstantDecl,
) -> Result<SymMultivector, Error> {
    let frame = p.frame(&d.frame)?.clone();
    let a = Assumptions::default();
    let mut mv = SymMultivector::zero(frame.clone());
    for (name, e) in &d.coeffs {
        let b = frame.parse_blade(name)?;
        mv.set_coeff(b, simplify(e, &a)?);
    }
    Ok(mv)
}

struct MacroCx<'p> {
    p: &'p CompiledProject,
    macro_name: &'p str,
    regs: Vec<RegInfo>,
    ops: Vec<Op>,
    /// Current register for each live source-level name.
    env: HashMap<String, RegId>,
    /// Materialized constant operands, per qualified name.
    const_regs: HashMap<String, RegId>,
}

impl<'p> MacroCx<'p> {
    fn fresh(&mut self, name: impl Into<String>, frame: Arc<Frame>) -> RegId {
        self.regs.push(RegInfo { name: name.into(), frame });
        self.regs.len() - 1
    }

    fn bind(&mut self, name: &str, reg: RegId) {
        self.env.insert(name.to_string(), reg);
    }

    fn class(&self, r: &ClassRef, loc: Loc) -> Result<Arc<ClassInfo>, Diagnostic> {
        self.p
            .class(&format!("{}.{}", r.frame, r.class))
            .cloned()
            .map_err(|e| diag(loc, FileRole::Macros, &e))
    }

    fn operand_reg(&mut self, o: &Operand, loc: Loc) -> Result<RegId, Diagnostic> {
        match o {
            Operand::Register(name) => self.env.get(name).copied().ok_or_else(|| {
                loc.diagnostic(
                    FileRole::Macros,
                    "read-before-write",
                    format!("`{name}` is read before it is written"),
                )
            }),
            Operand::Constant { frame, name } => {
                let q = format!("{frame}.{name}");
                if let Some(&r) = self.const_regs.get(&q) {
                    return Ok(r);
                }
                let mv =
                    self.p.constant(&q).map_err(|e| diag(loc, FileRole::Macros, &e))?.clone();
                let coeffs: Vec<(BladeId, ScalarArg)> =
                    mv.terms().map(|(b, e)| (b, ScalarArg::plain(e.clone()))).collect();
                let dst = self.fresh(q.clone(), mv.frame().clone());
                self.ops.push(Op::Ctor { dst, frame: mv.frame().clone(), coeffs });
                self.const_regs.insert(q, dst);
                Ok(dst)
            }
        }
    }

    /// Resolves a `name.blade` coefficient reference against the
    /// current environment.
    fn resolve_coeff_ref(&self, inner: &str) -> Option<(RegId, BladeId)> {
        let (name, blade) = inner.split_once('.')?;
        let &reg = self.env.get(name.trim())?;
        let b = self.regs[reg].frame.parse_blade(blade.trim()).ok()?;
        Some((reg, b))
    }

    /// Builds a scalar argument, resolving every `<mv.blade>` variable
    /// the expression mentions.
    fn scalar_arg(&self, e: &Expr, loc: Loc) -> Result<ScalarArg, Diagnostic> {
        let mut reads = Vec::new();
        for v in e.variables() {
            if let Some(inner) = v.strip_prefix('<').and_then(|s| s.strip_suffix('>')) {
                match self.resolve_coeff_ref(inner) {
                    Some((reg, b)) => reads.push((v.clone(), reg, b)),
                    None => {
                        return Err(loc.diagnostic(
                            FileRole::Macros,
                            "unknown-reference",
                            format!("`<{inner}>` does not name a multivector coefficient"),
                        ));
                    }
                }
            }
        }
        Ok(ScalarArg { expr: e.clone(), reads })
    }

    /// Collects `<mv.blade>` placeholders out of verbatim output text.
    /// Spans that do not resolve are left alone: the payload may
    /// contain target-language `<` freely.
    fn payload_reads(&self, payload: &str) -> Vec<(String, RegId, BladeId)> {
        let mut reads: Vec<(String, RegId, BladeId)> = Vec::new();
        let bytes = payload.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'<' {
                if let Some(j) = payload[i + 1..].find(['>', '\n', '<']) {
                    let end = i + 1 + j;
                    if bytes[end] == b'>' {
                        let inner = payload[i + 1..end].trim();
                        if let Some((reg, b)) = self.resolve_coeff_ref(inner) {
                            let text = payload[i..=end].to_string();
                            if !reads.iter().any(|(t, ..)| *t == text) {
                                reads.push((text, reg, b));
                            }
                        }
                        i = end + 1;
                        continue;
                    }
                }
            }
            i += 1;
        }
        reads
    }

    fn unary_ir(&self, k: &UnaryKind, loc: Loc) -> Result<UnaryIR, Diagnostic> {
        Ok(match k {
            UnaryKind::GradeInv => UnaryIR::GradeInv,
            UnaryKind::CliffConj => UnaryIR::CliffConj,
            UnaryKind::Reverse => UnaryIR::Reverse,
            UnaryKind::Norm => UnaryIR::Norm,
            UnaryKind::Norm2 => UnaryIR::Norm2,
            UnaryKind::QuasiNorm => UnaryIR::QuasiNorm,
            UnaryKind::QuasiNorm2 => UnaryIR::QuasiNorm2,
            UnaryKind::Scale(e) => UnaryIR::Scale(self.scalar_arg(e, loc)?),
            UnaryKind::DivByScalar(e) => UnaryIR::DivByScalar(self.scalar_arg(e, loc)?),
            UnaryKind::Diff(target) => {
                if target.contains('.') {
                    match self.resolve_coeff_ref(target) {
                        Some((reg, b)) => UnaryIR::Diff(DiffTarget::Coeff(reg, b)),
                        None => {
                            return Err(loc.diagnostic(
                                FileRole::Macros,
                                "unknown-reference",
                                format!("`{target}` does not name a multivector coefficient"),
                            ));
                        }
                    }
                } else {
                    UnaryIR::Diff(DiffTarget::Var(target.clone()))
                }
            }
            UnaryKind::CastToGrades(g) => UnaryIR::CastToGrades(g.clone()),
            UnaryKind::CastToSubspace(q) => UnaryIR::CastToSubspace(
                self.p.subspace(q).cloned().map_err(|e| diag(loc, FileRole::Macros, &e))?,
            ),
            UnaryKind::CastToClass(q) => UnaryIR::CastToClass(
                self.p.class(q).cloned().map_err(|e| diag(loc, FileRole::Macros, &e))?,
            ),
        })
    }

    fn statement(&mut self, s: &Statement) -> Result<(), Diagnostic> {
        match s {
            Statement::Ctor { dst, frame, coeffs, loc } => {
                let f = self.p.frame(frame).map_err(|e| diag(*loc, FileRole::Macros, &e))?.clone();
                let mut resolved = Vec::with_capacity(coeffs.len());
                for (name, e) in coeffs {
                    let b =
                        f.parse_blade(name).map_err(|e| diag(*loc, FileRole::Macros, &e))?;
                    resolved.push((b, self.scalar_arg(e, *loc)?));
                }
                let r = self.fresh(dst.clone(), f.clone());
                self.ops.push(Op::Ctor { dst: r, frame: f, coeffs: resolved });
                self.bind(dst, r);
            }
            Statement::Binary { dst, op, lhs, rhs, loc } => {
                let l = self.operand_reg(lhs, *loc)?;
                let r = self.operand_reg(rhs, *loc)?;
                let lf = &self.regs[l].frame;
                let rf = &self.regs[r].frame;
                if lf.name() != rf.name() {
                    let e = Error::FrameMismatch(lf.name().to_string(), rf.name().to_string());
                    return Err(diag(*loc, FileRole::Macros, &e));
                }
                let frame = lf.clone();
                let d = self.fresh(dst.clone(), frame);
                self.ops.push(Op::Binary { dst: d, op: *op, lhs: l, rhs: r });
                self.bind(dst, d);
            }
            Statement::Transform { dst, transform, arg, loc } => {
                let t = self
                    .p
                    .transform(transform)
                    .cloned()
                    .map_err(|e| diag(*loc, FileRole::Macros, &e))?;
                let a = self.operand_reg(arg, *loc)?;
                if self.regs[a].frame.name() != t.source.name() {
                    let e = Error::TransformDomainMismatch(transform.clone());
                    return Err(diag(*loc, FileRole::Macros, &e));
                }
                let d = self.fresh(dst.clone(), t.dest.clone());
                self.ops.push(Op::Transform { dst: d, transform: t, arg: a });
                self.bind(dst, d);
            }
            Statement::Unary { dst, op, arg, loc } => {
                let ir = self.unary_ir(op, *loc)?;
                let a = self.operand_reg(arg, *loc)?;
                let frame = self.regs[a].frame.clone();
                if let UnaryIR::CastToSubspace(s) = &ir {
                    if s.frame.name() != frame.name() {
                        let e =
                            Error::FrameMismatch(frame.name().to_string(), s.frame.name().into());
                        return Err(diag(*loc, FileRole::Macros, &e));
                    }
                }
                if let UnaryIR::CastToClass(c) = &ir {
                    if c.frame.name() != frame.name() {
                        let e =
                            Error::FrameMismatch(frame.name().to_string(), c.frame.name().into());
                        return Err(diag(*loc, FileRole::Macros, &e));
                    }
                }
                let d = self.fresh(dst.clone(), frame);
                self.ops.push(Op::Unary { dst: d, op: ir, arg: a });
                self.bind(dst, d);
            }
            Statement::Copy { dst, src, loc } => {
                let s = self.operand_reg(src, *loc)?;
                let d = self.fresh(dst.clone(), self.regs[s].frame.clone());
                self.ops.push(Op::Copy { dst: d, src: s });
                self.bind(dst, d);
            }
            Statement::Negate { dst, src, loc } => {
                let s = self.operand_reg(src, *loc)?;
                let d = self.fresh(dst.clone(), self.regs[s].frame.clone());
                self.ops.push(Op::Negate { dst: d, src: s });
                self.bind(dst, d);
            }
            Statement::Call { name, bindings, loc } => self.inline_call(name, bindings, *loc)?,
            Statement::Output { payload, loc: _ } => {
                let reads = self.payload_reads(payload);
                self.ops.push(Op::Output { payload: payload.clone(), reads });
            }
            Statement::JoinOn { .. } => self.ops.push(Op::JoinOn),
            Statement::JoinOff { .. } => self.ops.push(Op::JoinOff),
        }
        Ok(())
    }

    /// Splices the callee's operation list in place, substituting the
    /// caller's registers for the callee's inputs and rebinding the
    /// caller names given for the callee's outputs.
    fn inline_call(
        &mut self,
        name: &str,
        bindings: &[(String, String)],
        loc: Loc,
    ) -> Result<(), Diagnostic> {
        if name == self.macro_name {
            let e = Error::CyclicMacroCall(name.to_string());
            return Err(diag(loc, FileRole::Macros, &e));
        }
        let callee = self.p.macro_ir(name).cloned().map_err(|e| diag(loc, FileRole::Macros, &e))?;
        for (cn, _) in bindings {
            let known = callee.inputs.iter().any(|(n, _)| n == cn)
                || callee.outputs.iter().any(|(n, ..)| n == cn);
            if !known {
                return Err(loc.diagnostic(
                    FileRole::Macros,
                    "unknown-reference",
                    format!("macro `{name}` has no input or output `{cn}`"),
                ));
            }
        }

        let mut map: Vec<Option<RegId>> = vec![None; callee.regs.len()];
        for (i, (iname, class)) in callee.inputs.iter().enumerate() {
            let bound = bindings.iter().find(|(cn, _)| cn == iname).map(|(_, caller)| caller);
            let caller_name = bound.ok_or_else(|| {
                diag(loc, FileRole::Macros, &Error::UnboundCalleeInput(iname.clone()))
            })?;
            let reg = self.operand_reg(&Operand::Register(caller_name.clone()), loc)?;
            if self.regs[reg].frame.name() != class.frame.name() {
                let e = Error::ClassMismatch(
                    iname.clone(),
                    format!(
                        "expected a `{}` multivector, got frame `{}`",
                        class.frame.name(),
                        self.regs[reg].frame.name()
                    ),
                );
                return Err(diag(loc, FileRole::Macros, &e));
            }
            map[i] = Some(reg);
        }

        for op in &callee.ops {
            let remapped = self.remap_op(op, &callee, &mut map, name);
            self.ops.push(remapped);
        }

        for (oname, class, oreg) in &callee.outputs {
            let Some((_, caller_name)) = bindings.iter().find(|(cn, _)| cn == oname) else {
                continue;
            };
            let reg = match oreg {
                Some(r) => map[*r].expect("callee outputs are written by callee ops"),
                None => {
                    let dst = self.fresh(format!("{name}::{oname}"), class.frame.clone());
                    self.ops.push(Op::Ctor {
                        dst,
                        frame: class.frame.clone(),
                        coeffs: Vec::new(),
                    });
                    dst
                }
            };
            self.bind(caller_name, reg);
        }
        Ok(())
    }

    fn remap_reg(
        &mut self,
        r: RegId,
        callee: &MacroIR,
        map: &mut Vec<Option<RegId>>,
        call: &str,
    ) -> RegId {
        if let Some(m) = map[r] {
            return m;
        }
        let info = &callee.regs[r];
        let fresh = self.fresh(format!("{call}::{}", info.name), info.frame.clone());
        map[r] = Some(fresh);
        fresh
    }

    fn remap_op(
        &mut self,
        op: &Op,
        callee: &MacroIR,
        map: &mut Vec<Option<RegId>>,
        call: &str,
    ) -> Op {
        match op {
            Op::Ctor { dst, frame, coeffs } => {
                let coeffs = coeffs
                    .iter()
                    .map(|(b, arg)| (*b, self.remap_arg(arg, callee, map, call)))
                    .collect();
                Op::Ctor { dst: self.remap_reg(*dst, callee, map, call), frame: frame.clone(), coeffs }
            }
            Op::Binary { dst, op, lhs, rhs } => {
                let lhs = self.remap_reg(*lhs, callee, map, call);
                let rhs = self.remap_reg(*rhs, callee, map, call);
                Op::Binary { dst: self.remap_reg(*dst, callee, map, call), op: *op, lhs, rhs }
            }
            Op::Transform { dst, transform, arg } => {
                let arg = self.remap_reg(*arg, callee, map, call);
                Op::Transform {
                    dst: self.remap_reg(*dst, callee, map, call),
                    transform: transform.clone(),
                    arg,
                }
            }
            Op::Unary { dst, op, arg } => {
                let op = match op {
                    UnaryIR::Scale(a) => UnaryIR::Scale(self.remap_arg(a, callee, map, call)),
                    UnaryIR::DivByScalar(a) => {
                        UnaryIR::DivByScalar(self.remap_arg(a, callee, map, call))
                    }
                    UnaryIR::Diff(DiffTarget::Coeff(r, b)) => {
                        UnaryIR::Diff(DiffTarget::Coeff(self.remap_reg(*r, callee, map, call), *b))
                    }
                    other => other.clone(),
                };
                let arg = self.remap_reg(*arg, callee, map, call);
                Op::Unary { dst: self.remap_reg(*dst, callee, map, call), op, arg }
            }
            Op::Copy { dst, src } => {
                let src = self.remap_reg(*src, callee, map, call);
                Op::Copy { dst: self.remap_reg(*dst, callee, map, call), src }
            }
            Op::Negate { dst, src } => {
                let src = self.remap_reg(*src, callee, map, call);
                Op::Negate { dst: self.remap_reg(*dst, callee, map, call), src }
            }
            Op::Output { payload, reads } => {
                let reads = reads
                    .iter()
                    .map(|(t, r, b)| (t.clone(), self.remap_reg(*r, callee, map, call), *b))
                    .collect();
                Op::Output { payload: payload.clone(), reads }
            }
            Op::JoinOn => Op::JoinOn,
            Op::JoinOff => Op::JoinOff,
        }
    }

    fn remap_arg(
        &mut self,
        a: &ScalarArg,
        callee: &MacroIR,
        map: &mut Vec<Option<RegId>>,
        call: &str,
    ) -> ScalarArg {
        ScalarArg {
            expr: a.expr.clone(),
            reads: a
                .reads
                .iter()
                .map(|(t, r, b)| (t.clone(), self.remap_reg(*r, callee, map, call), *b))
                .collect(),
        }
    }
}

fn compile_macro(p: &CompiledProject, d: &MacroDecl) -> Result<MacroIR, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut cx = MacroCx {
        p,
        macro_name: &d.name,
        regs: Vec::new(),
        ops: Vec::new(),
        env: HashMap::new(),
        const_regs: HashMap::new(),
    };

    let mut inputs = Vec::with_capacity(d.inputs.len());
    for (name, cref) in &d.inputs {
        match cx.class(cref, d.loc) {
            Ok(class) => {
                let r = cx.fresh(name.clone(), class.frame.clone());
                cx.bind(name, r);
                inputs.push((name.clone(), class));
            }
            Err(e) => diags.push(e),
        }
    }
    let mut output_classes = Vec::with_capacity(d.outputs.len());
    for (name, cref) in &d.outputs {
        match cx.class(cref, d.loc) {
            Ok(class) => output_classes.push((name.clone(), class)),
            Err(e) => diags.push(e),
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    for s in &d.statements {
        if let Err(e) = cx.statement(s) {
            diags.push(e);
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let outputs = output_classes
        .into_iter()
        .map(|(name, class)| {
            let reg = cx.env.get(&name).copied();
            (name, class, reg)
        })
        .collect();

    Ok(MacroIR { name: d.name.clone(), inputs, outputs, regs: cx.regs, ops: cx.ops })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blades::{grade, ProductKind};
    use crate::dsl::{parse_project, write_project, ProjectSources};

    fn sources(frames: &str, extra: &ProjectSources) -> ProjectSources {
        ProjectSources { frames: frames.to_string(), ..extra.clone() }
    }

    fn base_frames() -> &'static str {
        r#"
define frame e2d as
    basis: {e1, e2}
    Euclidean
end frame

define frame e3d as
    basis: {e1, e2, e3}
    Euclidean
end frame

define frame cga5d as
    basis: {eo, e1, e2, e3, ei}
    IPM = [[0, 0, 0, 0, -1],
           [0, 1, 0, 0, 0],
           [0, 0, 1, 0, 0],
           [0, 0, 0, 1, 0],
           [-1, 0, 0, 0, 0]]
end frame
"#
    }

    fn compile_src(src: &ProjectSources) -> Result<CompiledProject, Vec<Diagnostic>> {
        let ast = parse_project(src).expect("parse failed");
        compile(&ast)
    }

    #[test]
    fn builtins_exist_per_frame() {
        let p = compile_src(&sources(base_frames(), &ProjectSources::default())).unwrap();
        assert!(p.classes.contains_key("e3d.Multivector"));
        assert!(p.constants.contains_key("e3d.I"));
        // Euclidean 3D: the inverse pseudoscalar is the negated one.
        let ii = p.constant("e3d.Ii").unwrap();
        assert_eq!(ii.blades(), vec![0b111]);
        assert_eq!(ii.coeff(0b111), Expr::int(-1));
        // Conformal pseudoscalar squares to a nonzero scalar too.
        assert!(p.constants.contains_key("cga5d.Ii"));
    }

    #[test]
    fn ga_span_subspace_is_the_full_sub_lattice() {
        let src = ProjectSources {
            subspaces: r#"
define subspace e3d.plane as
    ga_span {e1; e2}
end subspace

define subspace e3d.axis as
    basis {e3}
end subspace
"#
            .to_string(),
            ..Default::default()
        };
        let p = compile_src(&sources(base_frames(), &src)).unwrap();
        let s = p.subspace("e3d.plane").unwrap();
        assert_eq!(s.blades, vec![0b000, 0b001, 0b010, 0b011]);
        assert_eq!(p.subspace("e3d.axis").unwrap().blades, vec![0b100]);
    }

    #[test]
    fn class_union_and_pins() {
        let src = ProjectSources {
            subspaces: r#"
define subspace cga5d.euclid as
    ga_span {e1; e2; e3}
end subspace
"#
            .to_string(),
            multivectors: r#"
define multivector class cga5d.Point as
    euclid; eo : 1
end multivector class
"#
            .to_string(),
            ..Default::default()
        };
        let p = compile_src(&sources(base_frames(), &src)).unwrap();
        let c = p.class("cga5d.Point").unwrap();
        // eo is bit 0 in cga5d, so the pinned blade is 0b00001.
        assert!(c.contains(0b00001));
        assert_eq!(c.pin_for(0b00001), Some(&Expr::one()));
        // The euclid span sits on bits 1..3.
        assert!(c.contains(0b00110));
        assert!(!c.contains(0b10000));

        let frame = c.frame.clone();
        let mut mv = SymMultivector::zero(frame);
        mv.set_coeff(0b00010, Expr::var("x"));
        mv.set_coeff(0b10000, Expr::var("leak"));
        let a = Assumptions::default();
        let dropped = c.cast(&mv, false, &a).unwrap();
        assert_eq!(dropped.coeff(0b10000), Expr::zero());
        assert_eq!(dropped.coeff(0b00001), Expr::one());
        assert_eq!(dropped.coeff(0b00010), Expr::var("x"));
        match c.cast(&mv, true, &a) {
            Err(Error::BladeOutsideClass(b)) => assert_eq!(b, "ei"),
            other => panic!("expected BladeOutsideClass, got {other:?}"),
        }
    }

    #[test]
    fn transform_matrix_forms() {
        let src = ProjectSources {
            transforms: r#"
define transform ident : e2d -> e2d as
    identity
end transform

define transform rot : e2d -> e2d as
    outermorphism using [[0.6, -0.8], [0.8, 0.6]]
end transform

define transform rot_alias : e2d -> e2d as
    alias of rot
end transform

define transform unrot : e2d -> e2d as
    inverse of rot
end transform

define transform rot_t : e2d -> e2d as
    transpose of rot
end transform

define transform rot_it : e2d -> e2d as
    inverse transpose of rot
end transform
"#
            .to_string(),
            ..Default::default()
        };
        let p = compile_src(&sources(base_frames(), &src)).unwrap();
        let rot = p.transform("rot").unwrap();
        let unrot = p.transform("unrot").unwrap();
        let prod = crate::blades::mat_mul(&unrot.matrix, &rot.matrix);
        for (i, row) in prod.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                let want = if i == j { Num::ONE } else { Num::ZERO };
                assert!(c.sub(&want).is_zero(), "inverse is not a left inverse at {i},{j}");
            }
        }
        // The rotation is orthogonal, so transpose == inverse.
        let rt = p.transform("rot_t").unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(rt.matrix[i][j].sub(&unrot.matrix[i][j]).is_zero());
            }
        }
        let rit = p.transform("rot_it").unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(rit.matrix[i][j].sub(&rot.matrix[i][j]).is_zero());
            }
        }
        assert_eq!(p.transform("rot_alias").unwrap().matrix, rot.matrix);

        let a = Assumptions::default();
        let e1 = SymMultivector::basis_blade(p.frame("e2d").unwrap().clone(), 0b01);
        let moved = rot.apply(&e1, &a).unwrap();
        assert_eq!(moved.coeff(0b01), Expr::rat(3, 5));
        assert_eq!(moved.coeff(0b10), Expr::rat(4, 5));
    }

    #[test]
    fn singular_inverse_is_reported() {
        let src = ProjectSources {
            transforms: r#"
define transform squash : e2d -> e2d as
    outermorphism using [[1, 0], [0, 0]]
end transform

define transform unsquash : e2d -> e2d as
    inverse of squash
end transform
"#
            .to_string(),
            ..Default::default()
        };
        let errs = compile_src(&sources(base_frames(), &src)).unwrap_err();
        assert!(errs.iter().any(|d| d.code == "singular-transform"), "{errs:?}");
    }

    fn cross_macro() -> ProjectSources {
        ProjectSources {
            subspaces: r#"
define subspace e3d.vectors as
    basis {e1; e2; e3}
end subspace
"#
            .to_string(),
            multivectors: r#"
define multivector class e3d.Vector as
    vectors
end multivector class
"#
            .to_string(),
            macros: r#"
define macro cross as
    inputs: {u : e3d.Vector; v : e3d.Vector}
    outputs: {w : e3d.Vector}
    performs:
        t = u op v;
        w = t lcp e3d.Ii;
end macro
"#
            .to_string(),
            ..Default::default()
        }
    }

    #[test]
    fn cross_product_macro_lowers_to_three_ops() {
        let p = compile_src(&sources(base_frames(), &cross_macro())).unwrap();
        let m = p.macro_ir("cross").unwrap();
        assert_eq!(m.inputs.len(), 2);
        assert_eq!(m.regs[0].name, "u");
        assert_eq!(m.regs[1].name, "v");
        // op, constant ctor, lcp.
        assert_eq!(m.ops.len(), 3);
        assert!(matches!(
            m.ops[0],
            Op::Binary { op: BinOp::Product(ProductKind::Op), lhs: 0, rhs: 1, .. }
        ));
        assert!(matches!(m.ops[1], Op::Ctor { .. }));
        assert!(matches!(m.ops[2], Op::Binary { op: BinOp::Product(ProductKind::Lcp), .. }));
        let (_, _, out) = &m.outputs[0];
        assert!(out.is_some());
    }

    #[test]
    fn reassignment_creates_new_registers() {
        let mut src = cross_macro();
        src.macros = r#"
define macro twice as
    inputs: {u : e3d.Vector}
    outputs: {w : e3d.Vector}
    performs:
        w = u op u;
        w = w + w;
end macro
"#
        .to_string();
        let p = compile_src(&sources(base_frames(), &src)).unwrap();
        let m = p.macro_ir("twice").unwrap();
        let Op::Binary { dst: first, .. } = m.ops[0] else { panic!() };
        let Op::Binary { dst: second, lhs, rhs, .. } = m.ops[1] else { panic!() };
        assert_ne!(first, second);
        assert_eq!(lhs, first);
        assert_eq!(rhs, first);
        assert_eq!(m.outputs[0].2, Some(second));
    }

    #[test]
    fn call_is_inlined_and_flat() {
        let mut src = cross_macro();
        src.macros.push_str(
            r#"
define macro use_cross as
    inputs: {a : e3d.Vector; b : e3d.Vector}
    outputs: {n : e3d.Vector}
    performs:
        call cross {u : a; v : b; w : n}
end macro
"#,
        );
        let p = compile_src(&sources(base_frames(), &src)).unwrap();
        let outer = p.macro_ir("use_cross").unwrap();
        let inner = p.macro_ir("cross").unwrap();
        // Identity-shaped call: the op list is the callee's, verbatim.
        assert_eq!(outer.ops.len(), inner.ops.len());
        for (a, b) in outer.ops.iter().zip(&inner.ops) {
            assert_eq!(std::mem::discriminant(a), std::mem::discriminant(b));
        }
        assert!(outer.outputs[0].2.is_some());
        // Callee temporaries got namespaced debug names.
        assert!(outer.regs.iter().any(|r| r.name.starts_with("cross::")));
    }

    #[test]
    fn two_level_call_chain_flattens() {
        let mut src = cross_macro();
        src.macros.push_str(
            r#"
define macro mid as
    inputs: {a : e3d.Vector; b : e3d.Vector}
    outputs: {n : e3d.Vector}
    performs:
        call cross {u : a; v : b; w : n}
end macro

define macro top as
    inputs: {x : e3d.Vector; y : e3d.Vector}
    outputs: {m : e3d.Vector}
    performs:
        call mid {a : x; b : y; n : m}
end macro
"#,
        );
        let p = compile_src(&sources(base_frames(), &src)).unwrap();
        let top = p.macro_ir("top").unwrap();
        assert_eq!(top.ops.len(), p.macro_ir("cross").unwrap().ops.len());
    }

    #[test]
    fn self_call_is_cyclic() {
        let mut src = cross_macro();
        src.macros = r#"
define macro loopy as
    inputs: {u : e3d.Vector}
    outputs: {w : e3d.Vector}
    performs:
        call loopy {u : u; w : w}
end macro
"#
        .to_string();
        let errs = compile_src(&sources(base_frames(), &src)).unwrap_err();
        assert!(errs.iter().any(|d| d.code == "cyclic-call"), "{errs:?}");
    }

    #[test]
    fn missing_callee_input_is_reported() {
        let mut src = cross_macro();
        src.macros.push_str(
            r#"
define macro partial as
    inputs: {a : e3d.Vector}
    outputs: {n : e3d.Vector}
    performs:
        call cross {u : a; w : n}
end macro
"#,
        );
        let errs = compile_src(&sources(base_frames(), &src)).unwrap_err();
        assert!(errs.iter().any(|d| d.code == "unbound-callee-input"), "{errs:?}");
    }

    #[test]
    fn frame_mismatch_in_binary_op() {
        let mut src = cross_macro();
        src.macros = r#"
define macro mixed as
    inputs: {u : e3d.Vector; p : e2d.Multivector}
    outputs: {w : e3d.Vector}
    performs:
        w = u gp p;
end macro
"#
        .to_string();
        let errs = compile_src(&sources(base_frames(), &src)).unwrap_err();
        assert!(errs.iter().any(|d| d.code == "frame-mismatch"), "{errs:?}");
    }

    #[test]
    fn transform_domain_is_checked() {
        let mut src = cross_macro();
        src.transforms = r#"
define transform flip : e2d -> e2d as
    outermorphism using [[-1, 0], [0, 1]]
end transform
"#
        .to_string();
        src.macros = r#"
define macro bad as
    inputs: {u : e3d.Vector}
    outputs: {w : e3d.Vector}
    performs:
        w = flip[u];
end macro
"#
        .to_string();
        let errs = compile_src(&sources(base_frames(), &src)).unwrap_err();
        assert!(errs.iter().any(|d| d.code == "transform-domain"), "{errs:?}");
    }

    #[test]
    fn read_before_write_is_reported() {
        let mut src = cross_macro();
        src.macros = r#"
define macro oops as
    inputs: {u : e3d.Vector}
    outputs: {w : e3d.Vector}
    performs:
        w = u op ghost;
end macro
"#
        .to_string();
        let errs = compile_src(&sources(base_frames(), &src)).unwrap_err();
        assert!(errs.iter().any(|d| d.code == "read-before-write"), "{errs:?}");
    }

    #[test]
    fn scalar_references_resolve_to_registers() {
        let mut src = cross_macro();
        src.macros = r#"
define macro rescale as
    inputs: {u : e3d.Vector}
    outputs: {w : e3d.Vector}
    performs:
        n = norm(u);
        w = scale(u, 1 / <n.1>);
end macro
"#
        .to_string();
        let p = compile_src(&sources(base_frames(), &src)).unwrap();
        let m = p.macro_ir("rescale").unwrap();
        let Op::Unary { op: UnaryIR::Scale(arg), .. } = &m.ops[1] else {
            panic!("expected scale, got {:?}", m.ops[1]);
        };
        assert_eq!(arg.reads.len(), 1);
        let (name, reg, blade) = &arg.reads[0];
        assert_eq!(name, "<n.1>");
        assert_eq!(m.regs[*reg].name, "n");
        assert_eq!(*blade, 0);
    }

    #[test]
    fn subspace_frames_embed_exactly() {
        // Products computed in a "subspace of" frame must match the
        // parent frame's products restricted to the chosen vectors,
        // including for a non-diagonal parent metric.
        let src = ProjectSources {
            frames: format!(
                "{}{}",
                base_frames(),
                r#"
define frame minkowski as
    basis: {eo, ei}
    subspace of cga5d
end frame
"#
            ),
            ..Default::default()
        };
        let p = compile_src(&src).unwrap();
        let sub = p.frame("minkowski").unwrap();
        let parent = p.frame("cga5d").unwrap();
        // Vector j of the sub frame is parent vector idx[j].
        let idx: Vec<u32> = sub
            .vectors()
            .iter()
            .map(|v| parent.vectors().iter().position(|p| p == v).unwrap() as u32)
            .collect();
        let embed = |b: BladeId| -> BladeId {
            let mut out = 0;
            for (j, &i) in idx.iter().enumerate() {
                if b & (1 << j) != 0 {
                    out |= 1 << i;
                }
            }
            out
        };
        for a in 0..sub.blade_count() as BladeId {
            for b in 0..sub.blade_count() as BladeId {
                for kind in ProductKind::ALL {
                    let got = sub.product(kind, a, b);
                    let want = parent.product(kind, embed(a), embed(b));
                    let mapped: Vec<(BladeId, Num)> =
                        got.iter().map(|(blade, c)| (embed(*blade), *c)).collect();
                    assert_eq!(mapped.len(), want.len(), "{kind:?} {a:b} {b:b}");
                    for ((gb, gc), (wb, wc)) in mapped.iter().zip(&want) {
                        assert_eq!(gb, wb, "{kind:?} {a:b} {b:b}");
                        assert!(gc.sub(wc).is_zero(), "{kind:?} {a:b} {b:b}");
                    }
                }
            }
        }
        // Grades survive the embedding, so the restriction is exact.
        for b in 0..sub.blade_count() as BladeId {
            assert_eq!(grade(b), grade(embed(b)));
        }
    }

    #[test]
    fn recompiling_printed_project_is_stable() {
        let src = sources(base_frames(), &cross_macro());
        let ast = parse_project(&src).unwrap();
        let p1 = compile(&ast).unwrap();
        let printed = write_project(&ast);
        let p2 = compile(&parse_project(&printed).unwrap()).unwrap();
        let m1 = p1.macro_ir("cross").unwrap();
        let m2 = p2.macro_ir("cross").unwrap();
        assert_eq!(m1.ops.len(), m2.ops.len());
        for (a, b) in m1.ops.iter().zip(&m2.ops) {
            assert_eq!(std::mem::discriminant(a), std::mem::discriminant(b));
        }
    }
}
