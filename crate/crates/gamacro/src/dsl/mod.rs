//! The `.gmac` language: seven file roles, one AST.
//!
//! A project is described by seven text files, parsed in a fixed
//! order: frames, transforms, subspaces, multivector classes,
//! constants, bindings, and macros. The parser aggregates diagnostics
//! with line/column positions instead of failing on the first error,
//! and the printer writes the same AST back out, so parse-print-parse
//! is structurally stable.

mod parse;

pub use parse::{parse_macro_statement, parse_project};

use crate::error::Diagnostic;
use crate::symbolic::{Expr, Num, PrintOpts};
use std::fmt::Write as _;

/// The seven file roles, in parse order.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FileRole {
    Frames,
    Transforms,
    Subspaces,
    Multivectors,
    Constants,
    Bindings,
    Macros,
}

impl FileRole {
    pub const ALL: [FileRole; 7] = [
        FileRole::Frames,
        FileRole::Transforms,
        FileRole::Subspaces,
        FileRole::Multivectors,
        FileRole::Constants,
        FileRole::Bindings,
        FileRole::Macros,
    ];

    /// Fixed on-disk file name for this role.
    pub fn file_name(self) -> &'static str {
        match self {
            FileRole::Frames => "frames.gmac",
            FileRole::Transforms => "transforms.gmac",
            FileRole::Subspaces => "subspaces.gmac",
            FileRole::Multivectors => "multivectors.gmac",
            FileRole::Constants => "constants.gmac",
            FileRole::Bindings => "bindings.gmac",
            FileRole::Macros => "macros.gmac",
        }
    }
}

/// The seven sources of a project, keyed by role.
#[derive(Clone, Default, Debug, PartialEq)]
pub struct ProjectSources {
    pub frames: String,
    pub transforms: String,
    pub subspaces: String,
    pub multivectors: String,
    pub constants: String,
    pub bindings: String,
    pub macros: String,
}

impl ProjectSources {
    pub fn get(&self, role: FileRole) -> &str {
        match role {
            FileRole::Frames => &self.frames,
            FileRole::Transforms => &self.transforms,
            FileRole::Subspaces => &self.subspaces,
            FileRole::Multivectors => &self.multivectors,
            FileRole::Constants => &self.constants,
            FileRole::Bindings => &self.bindings,
            FileRole::Macros => &self.macros,
        }
    }

    pub fn set(&mut self, role: FileRole, text: String) {
        match role {
            FileRole::Frames => self.frames = text,
            FileRole::Transforms => self.transforms = text,
            FileRole::Subspaces => self.subspaces = text,
            FileRole::Multivectors => self.multivectors = text,
            FileRole::Constants => self.constants = text,
            FileRole::Bindings => self.bindings = text,
            FileRole::Macros => self.macros = text,
        }
    }
}

/// A source position inside one of the seven files.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct Loc {
    pub line: u32,
    pub col: u32,
}

impl Loc {
    pub fn diagnostic(self, role: FileRole, code: &str, message: impl Into<String>) -> Diagnostic {
        Diagnostic::new(role.file_name(), self.line as usize, self.col as usize, code, message)
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ProjectAst {
    pub frames: Vec<FrameDecl>,
    pub transforms: Vec<TransformDecl>,
    pub subspaces: Vec<SubspaceDecl>,
    pub classes: Vec<ClassDecl>,
    pub constants: Vec<ConstantDecl>,
    pub bindings: Vec<BindingDecl>,
    pub macros: Vec<MacroDecl>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameDecl {
    pub name: String,
    pub basis: Vec<String>,
    pub def: FrameDef,
    pub loc: Loc,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FrameDef {
    Euclidean,
    SubspaceOf(String),
    Orthogonalize(String),
    Ipm(Vec<Vec<Num>>),
    TransformBy { source: String, bcm: Vec<Vec<Num>> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformDecl {
    pub name: String,
    pub source: String,
    pub dest: String,
    pub def: TransformDef,
    pub loc: Loc,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TransformDef {
    Identity,
    AliasOf(String),
    InverseOf(String),
    TransposeOf(String),
    InverseTransposeOf(String),
    /// `outermorphism using <frame>.BCM`
    OutermorphismBcm(String),
    /// `outermorphism using [[..],[..]]`
    OutermorphismMatrix(Vec<Vec<Num>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceDecl {
    pub frame: String,
    pub name: String,
    pub def: SubspaceDef,
    pub loc: Loc,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SubspaceDef {
    /// Explicit basis blades.
    Basis(Vec<String>),
    /// All 2^k blades spanned by the listed vectors.
    GaSpan(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassDecl {
    pub frame: String,
    pub name: String,
    /// Subspace names (unqualified, same frame) whose union forms the
    /// class blade set.
    pub subspaces: Vec<String>,
    /// Blades pinned to constant coefficients.
    pub pinned: Vec<(String, Expr)>,
    pub loc: Loc,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstantDecl {
    pub frame: String,
    pub name: String,
    pub coeffs: Vec<(String, Expr)>,
    pub loc: Loc,
}

/// A named, reusable coefficient binding pattern for one frame. The
/// angle references in `bind` values are target variable paths,
/// relative to an object path supplied at the use site.
#[derive(Clone, Debug, PartialEq)]
pub struct BindingDecl {
    pub name: String,
    pub frame: String,
    pub bind: Vec<(String, Expr)>,
    pub min: Vec<(String, Num)>,
    pub max: Vec<(String, Num)>,
    pub loc: Loc,
}

/// `frame.class` pair naming a multivector class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassRef {
    pub frame: String,
    pub class: String,
}

impl std::fmt::Display for ClassRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.frame, self.class)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacroDecl {
    pub name: String,
    pub inputs: Vec<(String, ClassRef)>,
    pub outputs: Vec<(String, ClassRef)>,
    pub statements: Vec<Statement>,
    pub loc: Loc,
}

/// Either a macro-local multivector register or a `frame.constant`
/// reference (including the built-ins I and Ii).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Operand {
    Register(String),
    Constant { frame: String, name: String },
}

impl std::fmt::Display for Operand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Operand::Register(n) => write!(f, "{n}"),
            Operand::Constant { frame, name } => write!(f, "{frame}.{name}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Product(crate::blades::ProductKind),
    Add,
    Sub,
}

impl BinOp {
    pub fn token(self) -> &'static str {
        match self {
            BinOp::Product(k) => k.name(),
            BinOp::Add => "+",
            BinOp::Sub => "-",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum UnaryKind {
    GradeInv,
    CliffConj,
    Reverse,
    Norm,
    Norm2,
    QuasiNorm,
    QuasiNorm2,
    /// Multiply by a scalar function.
    Scale(Expr),
    /// Divide by a scalar function.
    DivByScalar(Expr),
    /// Differentiate with respect to the symbol held in `mv.blade`.
    Diff(String),
    CastToGrades(Vec<u32>),
    /// Qualified `frame.subspace` name.
    CastToSubspace(String),
    /// Qualified `frame.class` name.
    CastToClass(String),
}

impl UnaryKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            UnaryKind::GradeInv => "grade_inv",
            UnaryKind::CliffConj => "cliff_conj",
            UnaryKind::Reverse => "reverse",
            UnaryKind::Norm => "norm",
            UnaryKind::Norm2 => "norm2",
            UnaryKind::QuasiNorm => "quasi_norm",
            UnaryKind::QuasiNorm2 => "quasi_norm2",
            UnaryKind::Scale(_) => "scale",
            UnaryKind::DivByScalar(_) => "div_by_scalar",
            UnaryKind::Diff(_) => "diff",
            UnaryKind::CastToGrades(_) => "cast_to_grades",
            UnaryKind::CastToSubspace(_) => "cast_to_subspace",
            UnaryKind::CastToClass(_) => "cast_to_class",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Statement {
    /// `dst = frame.multivector { blade : fn; ... }`
    Ctor { dst: String, frame: String, coeffs: Vec<(String, Expr)>, loc: Loc },
    /// `dst = lhs <op> rhs`
    Binary { dst: String, op: BinOp, lhs: Operand, rhs: Operand, loc: Loc },
    /// `dst = transform[arg]`
    Transform { dst: String, transform: String, arg: Operand, loc: Loc },
    /// `dst = op(arg)` or `dst = op(arg, second)`
    Unary { dst: String, op: UnaryKind, arg: Operand, loc: Loc },
    /// `dst = src`
    Copy { dst: String, src: Operand, loc: Loc },
    /// `dst = -src`
    Negate { dst: String, src: Operand, loc: Loc },
    /// `call name { callee : caller; ... }`
    Call { name: String, bindings: Vec<(String, String)>, loc: Loc },
    /// `output { verbatim target text }`
    Output { payload: String, loc: Loc },
    JoinOn { loc: Loc },
    JoinOff { loc: Loc },
}

impl Statement {
    pub fn loc(&self) -> Loc {
        match self {
            Statement::Ctor { loc, .. }
            | Statement::Binary { loc, .. }
            | Statement::Transform { loc, .. }
            | Statement::Unary { loc, .. }
            | Statement::Copy { loc, .. }
            | Statement::Negate { loc, .. }
            | Statement::Call { loc, .. }
            | Statement::Output { loc, .. }
            | Statement::JoinOn { loc }
            | Statement::JoinOff { loc } => *loc,
        }
    }
}

fn fmt_expr(e: &Expr) -> String {
    // The DSL's own scalar syntax is the caret power form.
    crate::symbolic::write_expr(e, &PrintOpts::default()).unwrap_or_else(|_| format!("{e}"))
}

fn fmt_matrix(m: &[Vec<Num>]) -> String {
    let rows: Vec<String> = m
        .iter()
        .map(|r| {
            let cells: Vec<String> =
                r.iter().map(|c| fmt_expr(&Expr::Const(*c))).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn write_coeff_list(out: &mut String, items: &[(String, Expr)]) {
    let parts: Vec<String> =
        items.iter().map(|(b, e)| format!("{b} : {}", fmt_expr(e))).collect();
    out.push_str(&parts.join("; "));
}

/// Renders one statement in canonical form, without the trailing
/// separator.
pub fn write_statement(s: &Statement) -> String {
    match s {
        Statement::Ctor { dst, frame, coeffs, .. } => {
            let mut out = format!("{dst} = {frame}.multivector {{ ");
            write_coeff_list(&mut out, coeffs);
            out.push_str(" }");
            out
        }
        Statement::Binary { dst, op, lhs, rhs, .. } => {
            format!("{dst} = {lhs} {} {rhs}", op.token())
        }
        Statement::Transform { dst, transform, arg, .. } => {
            format!("{dst} = {transform}[{arg}]")
        }
        Statement::Unary { dst, op, arg, .. } => match op {
            UnaryKind::Scale(e) | UnaryKind::DivByScalar(e) => {
                format!("{dst} = {}({arg}, {})", op.keyword(), fmt_expr(e))
            }
            UnaryKind::Diff(r) => format!("{dst} = diff({arg}, {r})"),
            UnaryKind::CastToGrades(gs) => {
                let list: Vec<String> = gs.iter().map(|g| g.to_string()).collect();
                format!("{dst} = cast_to_grades({arg}, {{{}}})", list.join("; "))
            }
            UnaryKind::CastToSubspace(n) | UnaryKind::CastToClass(n) => {
                format!("{dst} = {}({arg}, {n})", op.keyword())
            }
            _ => format!("{dst} = {}({arg})", op.keyword()),
        },
        Statement::Copy { dst, src, .. } => format!("{dst} = {src}"),
        Statement::Negate { dst, src, .. } => format!("{dst} = -{src}"),
        Statement::Call { name, bindings, .. } => {
            let parts: Vec<String> =
                bindings.iter().map(|(a, b)| format!("{a} : {b}")).collect();
            format!("call {name} {{ {} }}", parts.join("; "))
        }
        Statement::Output { payload, .. } => format!("output {{{payload}}}"),
        Statement::JoinOn { .. } => "join on".to_string(),
        Statement::JoinOff { .. } => "join off".to_string(),
    }
}

/// Writes the whole AST back as the seven file texts.
pub fn write_project(ast: &ProjectAst) -> ProjectSources {
    let mut src = ProjectSources::default();

    let mut f = String::new();
    for d in &ast.frames {
        let _ = writeln!(f, "define frame {} as", d.name);
        let _ = writeln!(f, "    basis: {{{}}}", d.basis.join(", "));
        match &d.def {
            FrameDef::Euclidean => f.push_str("    Euclidean\n"),
            FrameDef::SubspaceOf(s) => {
                let _ = writeln!(f, "    subspace of {s}");
            }
            FrameDef::Orthogonalize(s) => {
                let _ = writeln!(f, "    orthogonalize {s}");
            }
            FrameDef::Ipm(m) => {
                let _ = writeln!(f, "    IPM = {}", fmt_matrix(m));
            }
            FrameDef::TransformBy { source, bcm } => {
                let _ = writeln!(f, "    transform {source} by BCM = {}", fmt_matrix(bcm));
            }
        }
        f.push_str("end frame\n\n");
    }
    src.frames = f;

    let mut f = String::new();
    for d in &ast.transforms {
        let _ = writeln!(f, "define transform {} : {} -> {} as", d.name, d.source, d.dest);
        match &d.def {
            TransformDef::Identity => f.push_str("    identity\n"),
            TransformDef::AliasOf(t) => {
                let _ = writeln!(f, "    alias of {t}");
            }
            TransformDef::InverseOf(t) => {
                let _ = writeln!(f, "    inverse of {t}");
            }
            TransformDef::TransposeOf(t) => {
                let _ = writeln!(f, "    transpose of {t}");
            }
            TransformDef::InverseTransposeOf(t) => {
                let _ = writeln!(f, "    inverse transpose of {t}");
            }
            TransformDef::OutermorphismBcm(frame) => {
                let _ = writeln!(f, "    outermorphism using {frame}.BCM");
            }
            TransformDef::OutermorphismMatrix(m) => {
                let _ = writeln!(f, "    outermorphism using {}", fmt_matrix(m));
            }
        }
        f.push_str("end transform\n\n");
    }
    src.transforms = f;

    let mut f = String::new();
    for d in &ast.subspaces {
        let _ = writeln!(f, "define subspace {}.{} as", d.frame, d.name);
        match &d.def {
            SubspaceDef::Basis(blades) => {
                let _ = writeln!(f, "    basis {{ {} }}", blades.join("; "));
            }
            SubspaceDef::GaSpan(vecs) => {
                let _ = writeln!(f, "    ga_span {{ {} }}", vecs.join("; "));
            }
        }
        f.push_str("end subspace\n\n");
    }
    src.subspaces = f;

    let mut f = String::new();
    for d in &ast.classes {
        let _ = writeln!(f, "define multivector class {}.{} as", d.frame, d.name);
        let mut items: Vec<String> = d.subspaces.clone();
        items.extend(d.pinned.iter().map(|(b, e)| format!("{b} : {}", fmt_expr(e))));
        let _ = writeln!(f, "    {}", items.join("; "));
        f.push_str("end multivector class\n\n");
    }
    src.multivectors = f;

    let mut f = String::new();
    for d in &ast.constants {
        let _ = writeln!(f, "define constant {}.{} as", d.frame, d.name);
        let mut line = String::from("    multivector {");
        write_coeff_list(&mut line, &d.coeffs);
        let _ = writeln!(f, "{line}}}");
        f.push_str("end constant\n\n");
    }
    src.constants = f;

    let mut f = String::new();
    for d in &ast.bindings {
        let _ = writeln!(f, "define binding {} as", d.name);
        let _ = writeln!(f, "    use frame {}", d.frame);
        let mut line = String::from("    bind { ");
        write_coeff_list(&mut line, &d.bind);
        let _ = writeln!(f, "{line} }}");
        for (kw, list) in [("min", &d.min), ("max", &d.max)] {
            if list.is_empty() {
                continue;
            }
            let parts: Vec<String> = list
                .iter()
                .map(|(v, n)| format!("{v} : {}", fmt_expr(&Expr::Const(*n))))
                .collect();
            let _ = writeln!(f, "    {kw} {{ {} }}", parts.join("; "));
        }
        f.push_str("end binding\n\n");
    }
    src.bindings = f;

    let mut f = String::new();
    for d in &ast.macros {
        let _ = writeln!(f, "define macro {} as", d.name);
        let ins: Vec<String> =
            d.inputs.iter().map(|(n, c)| format!("{n} : {c}")).collect();
        let outs: Vec<String> =
            d.outputs.iter().map(|(n, c)| format!("{n} : {c}")).collect();
        let _ = writeln!(f, "  inputs: {{{}}}", ins.join("; "));
        let _ = writeln!(f, "  outputs: {{{}}}", outs.join("; "));
        f.push_str("  performs:\n");
        for s in &d.statements {
            let _ = writeln!(f, "    {};", write_statement(s));
        }
        f.push_str("end macro\n\n");
    }
    src.macros = f;

    src
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_sources() -> ProjectSources {
        ProjectSources {
            frames: r#"
// Euclidean plane and space, plus a conformal frame.
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

define frame euclid as
    basis: {f1, f2, f3}
    subspace of cga5d
end frame

define frame rot45 as
    basis: {g1, g2}
    transform e2d by BCM = [[0.6, -0.8], [0.8, 0.6]]
end frame
"#
            .to_string(),
            transforms: r#"
define transform swap_xy : e2d -> e2d as
    outermorphism using [[0, 1], [1, 0]]
end transform

define transform swap_back : e2d -> e2d as
    inverse of swap_xy
end transform

define transform swap_alias : e2d -> e2d as
    alias of swap_xy
end transform

define transform ident3 : e3d -> e3d as
    identity
end transform

define transform rot_om : e2d -> e2d as
    outermorphism using rot45.BCM
end transform

define transform swap_t : e2d -> e2d as
    transpose of swap_xy
end transform

define transform swap_it : e2d -> e2d as
    inverse transpose of swap_xy
end transform
"#
            .to_string(),
            subspaces: r#"
define subspace e3d.vectors as
    basis { e1; e2; e3 }
end subspace

define subspace e3d.plane12 as
    ga_span { e1; e2 }
end subspace
"#
            .to_string(),
            multivectors: r#"
define multivector class e3d.Vector as
    vectors
end multivector class

define multivector class e3d.PinnedPlane as
    plane12; e3 : 1
end multivector class
"#
            .to_string(),
            constants: r#"
define constant e3d.origin_area as
    multivector { e1^e2 : 1/2; 1 : 3 }
end constant
"#
            .to_string(),
            bindings: r#"
define binding Point3 as
    use frame e3d
    bind { e1 : <x>; e2 : <y>; e3 : <z> }
    min { <x> : -100; <y> : -100 }
    max { <x> : 100 }
end binding
"#
            .to_string(),
            macros: r#"
define macro cross as
  inputs: { u : e3d.Vector; v as e3d.Vector }
  outputs: { w : e3d.Vector }
  performs:
    t1 = u op v;
    w = t1 lcp e3d.Ii;
end macro

define macro kitchen_sink as
  inputs: { a : e3d.Multivector }
  outputs: { b : e3d.Multivector }
  performs:
    m = e3d.multivector { e1 : cos(<a.1>); e2 : sin(<a.1>) };
    s1 = a + m;
    s2 = a - m;
    g = grade_inv(s1);
    c = cliff_conj(g);
    r = reverse(c);
    n = norm(r);
    n2 = norm2(r);
    q = quasi_norm(r);
    q2 = quasi_norm2(r);
    sc = scale(r, 3/2);
    dv = div_by_scalar(sc, 2);
    d = diff(dv, <a.1>);
    cg = cast_to_grades(d, {0; 2});
    cs = cast_to_subspace(cg, e3d.plane12);
    cc = cast_to_class(cs, e3d.Vector);
    tt = ident3[cc];
    ng = -tt;
    cp = ng;
    join on;
    output {// marker <b.e1^e2>};
    join off;
    call cross { u : cp; v : a; w : b };
end macro
"#
            .to_string(),
        }
    }

    /// Clears source positions so structural equality ignores layout.
    fn zero_locs(ast: &mut ProjectAst) {
        for d in &mut ast.frames {
            d.loc = Loc::default();
        }
        for d in &mut ast.transforms {
            d.loc = Loc::default();
        }
        for d in &mut ast.subspaces {
            d.loc = Loc::default();
        }
        for d in &mut ast.classes {
            d.loc = Loc::default();
        }
        for d in &mut ast.constants {
            d.loc = Loc::default();
        }
        for d in &mut ast.bindings {
            d.loc = Loc::default();
        }
        for m in &mut ast.macros {
            m.loc = Loc::default();
            for s in &mut m.statements {
                match s {
                    Statement::Ctor { loc, .. }
                    | Statement::Binary { loc, .. }
                    | Statement::Transform { loc, .. }
                    | Statement::Unary { loc, .. }
                    | Statement::Copy { loc, .. }
                    | Statement::Negate { loc, .. }
                    | Statement::Call { loc, .. }
                    | Statement::Output { loc, .. }
                    | Statement::JoinOn { loc }
                    | Statement::JoinOff { loc } => *loc = Loc::default(),
                }
            }
        }
    }

    #[test]
    fn parses_and_round_trips() {
        let src = sample_sources();
        let mut ast = parse_project(&src).expect("parse failed");
        assert_eq!(ast.frames.len(), 5);
        assert_eq!(ast.transforms.len(), 7);
        assert_eq!(ast.subspaces.len(), 2);
        assert_eq!(ast.classes.len(), 2);
        assert_eq!(ast.constants.len(), 1);
        assert_eq!(ast.bindings.len(), 1);
        assert_eq!(ast.macros.len(), 2);

        let printed = write_project(&ast);
        let mut back = parse_project(&printed).expect("reparse failed");
        zero_locs(&mut ast);
        zero_locs(&mut back);
        assert_eq!(ast, back);
    }

    #[test]
    fn cross_product_macro_shape() {
        let src = sample_sources();
        let ast = parse_project(&src).unwrap();
        let m = &ast.macros[0];
        assert_eq!(m.name, "cross");
        // Both `:` and `as` separators land in the same AST form.
        assert_eq!(m.inputs[0].1, ClassRef { frame: "e3d".into(), class: "Vector".into() });
        assert_eq!(m.inputs[1].1, ClassRef { frame: "e3d".into(), class: "Vector".into() });
        assert_eq!(m.statements.len(), 2);
        match &m.statements[0] {
            Statement::Binary { dst, op, lhs, rhs, .. } => {
                assert_eq!(dst, "t1");
                assert_eq!(op.token(), "op");
                assert_eq!(lhs, &Operand::Register("u".into()));
                assert_eq!(rhs, &Operand::Register("v".into()));
            }
            other => panic!("expected binary, got {other:?}"),
        }
        match &m.statements[1] {
            Statement::Binary { op, rhs, .. } => {
                assert_eq!(op.token(), "lcp");
                assert_eq!(
                    rhs,
                    &Operand::Constant { frame: "e3d".into(), name: "Ii".into() }
                );
            }
            other => panic!("expected binary, got {other:?}"),
        }
    }

    #[test]
    fn diagnostics_carry_positions() {
        let mut src = sample_sources();
        src.frames.push_str("\ndefine frame broken as\n    basis: {x,\n");
        let errs = parse_project(&src).unwrap_err();
        assert!(!errs.is_empty());
        let d = &errs[0];
        assert_eq!(d.file, "frames.gmac");
        assert!(d.line > 1);
    }

    #[test]
    fn duplicate_names_are_reported() {
        let mut src = sample_sources();
        let dup = "
define frame e2d as
    basis: {a, b}
    Euclidean
end frame
";
        src.frames.push_str(dup);
        let errs = parse_project(&src).unwrap_err();
        assert!(errs.iter().any(|d| d.code == "duplicate-name"), "{errs:?}");
    }

    #[test]
    fn unknown_operator_is_reported() {
        let mut src = sample_sources();
        src.macros = "
define macro bad as
  inputs: { u : e3d.Multivector }
  outputs: { w : e3d.Multivector }
  performs:
    w = u frobnicate u;
end macro
"
        .to_string();
        let errs = parse_project(&src).unwrap_err();
        assert!(errs.iter().any(|d| d.code == "unknown-operator"), "{errs:?}");
    }

    #[test]
    fn output_payload_is_verbatim() {
        let src = ProjectSources {
            macros: r#"
define macro m as
  inputs: { u : e3d.Multivector }
  outputs: { w : e3d.Multivector }
  performs:
    output { if (<u.e1^e2> != 0.0) { } };
    w = u;
end macro
"#
            .to_string(),
            ..Default::default()
        };
        let ast = parse_project(&src).unwrap();
        match &ast.macros[0].statements[0] {
            Statement::Output { payload, .. } => {
                assert_eq!(payload.trim(), "if (<u.e1^e2> != 0.0) { }");
            }
            other => panic!("expected output, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

        #[test]
        fn parser_never_panics(junk in "\\PC{0,200}") {
            let src = ProjectSources {
                frames: junk.clone(),
                transforms: junk.clone(),
                subspaces: junk.clone(),
                multivectors: junk.clone(),
                constants: junk.clone(),
                bindings: junk.clone(),
                macros: junk,
                ..Default::default()
            };
            let _ = parse_project(&src);
        }

        #[test]
        fn parser_never_panics_on_mutated_fixture(seed in 0usize..2000) {
            // Flip a byte somewhere in an otherwise valid fixture.
            let mut src = sample_sources();
            let mut bytes = src.macros.into_bytes();
            if !bytes.is_empty() {
                let i = seed % bytes.len();
                bytes[i] = b'@';
            }
            src.macros = String::from_utf8_lossy(&bytes).into_owned();
            let _ = parse_project(&src);
        }
    }
}
