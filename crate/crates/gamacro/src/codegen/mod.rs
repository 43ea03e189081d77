//! Stage-3 generation: scan target sources for binding points,
//! evaluate the named macro symbolically under the bindings, optimize
//! the resulting scalar assignment sequence, emit target text, and
//! splice it in place.
//!
//! The evaluation follows the reformulate/evaluate alternation: in
//! join-off regions (the default) every multivector used as an operand
//! of a product-like operation first has its non-atomic coefficients
//! named as temporaries, which keeps the symbolic products small and
//! produces the familiar `var1 = ...` traces. In join-on regions
//! expressions flow through unsubstituted.

mod emit;
mod scan;
mod verify;

pub use emit::{emit, Dialect, DialectKind};
pub use scan::{scan_source, splice};
pub use verify::{run_macro_numeric, verify_binding_point, VerifyReport};

use crate::blades::BladeId;
use crate::compiler::{
    ClassInfo, CompiledProject, DiffTarget, MacroIR, Op, RegId, ScalarArg, UnaryIR,
};
use crate::dsl::BinOp;
use crate::error::Error;
use crate::multivector::SymMultivector;
use crate::symbolic::{
    differentiate, simplify, substitute, Assumptions, Expr, Num,
};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

/// One coefficient binding inside a binding point.
#[derive(Clone, Debug, PartialEq)]
pub enum BindSpec {
    /// `Bind("mv.blade", "<target expr>")`.
    Coeff { mv: String, blade: String, target: String },
    /// `Bind("mv", "binding name", "object path")`: apply a named
    /// class binding with its variable paths prefixed by the object.
    Class { mv: String, pattern: String, object: String },
}

/// Where a region sits in the scanned file, byte-indexed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Span {
    /// Start of the opening marker line.
    pub start: usize,
    /// Just past the closing marker line.
    pub end: usize,
    /// Start of the closing marker line; generated code goes here.
    pub insert_at: usize,
    /// Existing generated block (sentinel line through sentinel line).
    pub generated: Option<(usize, usize)>,
    /// Indentation of the opening marker, reused for emitted lines.
    pub indent: String,
}

/// A parsed binding region: the macro to evaluate, its coefficient
/// bindings, variable bounds, and the source span to regenerate.
#[derive(Clone, Debug, PartialEq)]
pub struct BindingPoint {
    pub macro_name: String,
    pub binds: Vec<BindSpec>,
    /// Bracketed variable names with constant bounds.
    pub assume_min: Vec<(String, Num)>,
    pub assume_max: Vec<(String, Num)>,
    /// 1-based line of the opening marker.
    pub line: usize,
    pub span: Span,
}

impl BindingPoint {
    /// A binding point detached from any source file, for direct
    /// evaluation.
    pub fn bare(macro_name: impl Into<String>, binds: Vec<BindSpec>) -> BindingPoint {
        BindingPoint {
            macro_name: macro_name.into(),
            binds,
            assume_min: Vec::new(),
            assume_max: Vec::new(),
            line: 0,
            span: Span::default(),
        }
    }

    pub fn assumptions(&self) -> Result<Assumptions, Error> {
        let mut a = Assumptions::new();
        for (v, c) in &self.assume_min {
            a.assume_min(v.clone(), *c)?;
        }
        for (v, c) in &self.assume_max {
            a.assume_max(v.clone(), *c)?;
        }
        Ok(a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymbolKind {
    InputAlias,
    Temporary,
    /// A value referenced from verbatim output text; kept alive and
    /// never renamed, but declared like a temporary.
    Ref,
    Output,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Item {
    Assign { name: String, kind: SymbolKind, expr: Expr },
    /// Target text passed through from an `output` statement.
    Verbatim(String),
}

/// An ordered scalar assignment sequence: input aliases, then the
/// evaluation trace, then output assignments sorted by multivector
/// name and blade.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExprSequence {
    pub items: Vec<Item>,
}

impl ExprSequence {
    pub fn assigns(&self) -> impl Iterator<Item = (&str, SymbolKind, &Expr)> {
        self.items.iter().filter_map(|i| match i {
            Item::Assign { name, kind, expr } => Some((name.as_str(), *kind, expr)),
            Item::Verbatim(_) => None,
        })
    }

    pub fn assignment_count(&self) -> usize {
        self.assigns().count()
    }

    pub fn temporary_count(&self) -> usize {
        self.assigns().filter(|(_, k, _)| *k == SymbolKind::Temporary).count()
    }

    /// Total arithmetic operations across all right-hand sides.
    pub fn op_count(&self) -> usize {
        self.assigns().map(|(_, _, e)| e.op_count()).sum()
    }
}

/// Generation switches shared by evaluation and verification.
#[derive(Clone, Copy, Debug)]
pub struct GenOptions {
    /// Error on unbound input coefficients and out-of-class blades
    /// instead of defaulting to zero / dropping.
    pub strict: bool,
    /// Emit `w = 0` lines for bound outputs that vanish.
    pub emit_zeros: bool,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions { strict: false, emit_zeros: false }
    }
}

/// Where one input coefficient came from.
#[derive(Clone, Debug)]
pub enum CoeffSource {
    /// Class constant.
    Pinned(Expr),
    /// Bound to a target expression under a fresh symbol.
    Bound { symbol: String, target: Expr },
    /// Unbound, defaulted to zero.
    Zero,
}

/// The materialized plan for one macro input.
#[derive(Clone, Debug)]
pub struct InputPlan {
    pub mv: String,
    pub class: Arc<ClassInfo>,
    pub coeffs: Vec<(BladeId, CoeffSource)>,
}

/// Everything evaluation produces for one binding point.
#[derive(Debug)]
pub struct EvalResult {
    /// Final symbolic value of every output coefficient, over the
    /// fresh input symbols.
    pub outputs: BTreeMap<(String, BladeId), Expr>,
    /// The raw (unoptimized) assignment trace.
    pub seq: ExprSequence,
    pub inputs: Vec<InputPlan>,
    /// `(mv, blade, target name)` for every bound output coefficient,
    /// including those whose zero value was not emitted.
    pub bound_outputs: Vec<(String, BladeId, String)>,
}

/// Reads an expression as a possibly negated variable use, covering
/// both `Neg` and the canonical `-1 * x` product form.
fn as_var_use(e: &Expr) -> Option<(&str, bool)> {
    match e {
        Expr::Var(v) => Some((v, false)),
        Expr::Neg(x) => match &**x {
            Expr::Var(v) => Some((v, true)),
            _ => None,
        },
        Expr::Prod(fs) if fs.len() == 2 => match (&fs[0], &fs[1]) {
            (Expr::Const(c), Expr::Var(v)) if c.neg().is_one() => Some((v, true)),
            _ => None,
        },
        _ => None,
    }
}

/// Coefficients that never get named as reformulation temporaries:
/// constants, variables, and their negations.
fn is_atomic(e: &Expr) -> bool {
    match e {
        Expr::Const(_) | Expr::Var(_) => true,
        Expr::Neg(x) => matches!(**x, Expr::Const(_) | Expr::Var(_)),
        Expr::Prod(fs) if fs.len() == 2 => {
            matches!((&fs[0], &fs[1]), (Expr::Const(c), Expr::Var(_)) if c.neg().is_one())
        }
        _ => false,
    }
}

struct Eval<'a> {
    ir: &'a MacroIR,
    opts: GenOptions,
    a: Assumptions,
    regs: Vec<Option<SymMultivector>>,
    /// Reformulated operand views, one per register.
    memo: HashMap<RegId, SymMultivector>,
    /// Temporary definitions, for expanding expressions before
    /// differentiation.
    defs: HashMap<String, Expr>,
    items: Vec<Item>,
    next_temp: usize,
    next_ref: usize,
    join_on: bool,
}

impl<'a> Eval<'a> {
    fn reg_val(&self, r: RegId) -> Result<&SymMultivector, Error> {
        self.regs[r]
            .as_ref()
            .ok_or_else(|| Error::Other(format!("register `{}` read before write", r)))
    }

    fn fresh_temp(&mut self) -> String {
        self.next_temp += 1;
        format!("var{}", self.next_temp)
    }

    /// The operand view of a register: raw in join-on regions,
    /// otherwise with every non-atomic coefficient named once.
    fn operand(&mut self, r: RegId) -> Result<SymMultivector, Error> {
        let raw = self.reg_val(r)?.clone();
        if self.join_on {
            return Ok(raw);
        }
        if let Some(m) = self.memo.get(&r) {
            return Ok(m.clone());
        }
        let mut out = SymMultivector::zero(raw.frame().clone());
        for (b, e) in raw.terms() {
            if is_atomic(e) {
                out.set_coeff(b, e.clone());
            } else {
                let name = self.fresh_temp();
                self.items.push(Item::Assign {
                    name: name.clone(),
                    kind: SymbolKind::Temporary,
                    expr: e.clone(),
                });
                self.defs.insert(name.clone(), e.clone());
                out.set_coeff(b, Expr::var(name));
            }
        }
        self.memo.insert(r, out.clone());
        Ok(out)
    }

    /// Replaces trace temporaries by their definitions, to fixpoint;
    /// definitions may reference earlier temporaries.
    fn expand(&self, e: &Expr) -> Result<Expr, Error> {
        let mut cur = e.clone();
        loop {
            let vars = cur.variables();
            let step: HashMap<String, Expr> = vars
                .iter()
                .filter_map(|v| self.defs.get(v).map(|d| (v.clone(), d.clone())))
                .collect();
            if step.is_empty() {
                return Ok(cur);
            }
            cur = substitute(&cur, &step, &self.a)?;
        }
    }

    /// Resolves a scalar argument's `<mv.blade>` references against
    /// the current register values.
    fn resolve_arg(&mut self, arg: &ScalarArg) -> Result<Expr, Error> {
        if arg.reads.is_empty() {
            return simplify(&arg.expr, &self.a);
        }
        let mut map = HashMap::new();
        for (v, reg, blade) in &arg.reads {
            let val = self.operand(*reg)?.coeff(*blade);
            map.insert(v.clone(), val);
        }
        substitute(&arg.expr, &map, &self.a)
    }

    fn exec(&mut self, idx: usize) -> Result<(), Error> {
        let op = &self.ir.ops[idx];
        match op {
            Op::Ctor { dst, frame, coeffs } => {
                let mut mv = SymMultivector::zero(frame.clone());
                for (b, arg) in coeffs {
                    mv.set_coeff(*b, self.resolve_arg(arg)?);
                }
                self.regs[*dst] = Some(mv);
            }
            Op::Binary { dst, op, lhs, rhs } => {
                let l = self.operand(*lhs)?;
                let r = self.operand(*rhs)?;
                let v = match op {
                    BinOp::Product(kind) => l.product(*kind, &r, &self.a)?,
                    BinOp::Add => l.add(&r, &self.a)?,
                    BinOp::Sub => l.sub(&r, &self.a)?,
                };
                self.regs[*dst] = Some(v);
            }
            Op::Transform { dst, transform, arg } => {
                let v = self.operand(*arg)?;
                self.regs[*dst] = Some(transform.apply(&v, &self.a)?);
            }
            Op::Unary { dst, op, arg } => {
                let v = self.unary(op, *arg)?;
                self.regs[*dst] = Some(v);
            }
            Op::Copy { dst, src } => {
                self.regs[*dst] = Some(self.reg_val(*src)?.clone());
            }
            Op::Negate { dst, src } => {
                self.regs[*dst] = Some(self.reg_val(*src)?.neg());
            }
            Op::Output { payload, reads } => {
                // Verbatim text survives optimization untouched, so a
                // placeholder may only name something the optimizer
                // will never rename or remove: a literal, a target
                // variable, or a pinned ref assignment.
                let mut text = payload.clone();
                for (placeholder, reg, blade) in reads {
                    let val = self.reg_val(*reg)?.coeff(*blade);
                    let replacement = match &val {
                        Expr::Var(v) if v.starts_with('<') => strip_brackets(v).to_string(),
                        Expr::Const(_) => {
                            crate::symbolic::write_expr(&val, &Default::default())?
                        }
                        _ => {
                            self.next_ref += 1;
                            let name = format!("ref{}", self.next_ref);
                            self.items.push(Item::Assign {
                                name: name.clone(),
                                kind: SymbolKind::Ref,
                                expr: val.clone(),
                            });
                            name
                        }
                    };
                    text = text.replace(placeholder, &replacement);
                }
                self.items.push(Item::Verbatim(text));
            }
            Op::JoinOn => self.join_on = true,
            Op::JoinOff => self.join_on = false,
        }
        Ok(())
    }

    fn unary(&mut self, op: &UnaryIR, arg: RegId) -> Result<SymMultivector, Error> {
        Ok(match op {
            UnaryIR::GradeInv => self.reg_val(arg)?.grade_involution(),
            UnaryIR::CliffConj => self.reg_val(arg)?.clifford_conjugate(),
            UnaryIR::Reverse => self.reg_val(arg)?.reverse(),
            UnaryIR::Norm => {
                let v = self.operand(arg)?;
                let n = v.norm(&self.a)?;
                SymMultivector::scalar(v.frame().clone(), n)
            }
            UnaryIR::Norm2 => {
                let v = self.operand(arg)?;
                let n = v.norm2(&self.a)?;
                SymMultivector::scalar(v.frame().clone(), n)
            }
            UnaryIR::QuasiNorm => {
                let v = self.operand(arg)?;
                let n = v.quasi_norm(&self.a)?;
                SymMultivector::scalar(v.frame().clone(), n)
            }
            UnaryIR::QuasiNorm2 => {
                let v = self.operand(arg)?;
                let n = v.quasi_norm2(&self.a)?;
                SymMultivector::scalar(v.frame().clone(), n)
            }
            UnaryIR::Scale(sa) => {
                let f = self.resolve_arg(sa)?;
                self.operand(arg)?.scale(&f, &self.a)?
            }
            UnaryIR::DivByScalar(sa) => {
                let f = self.resolve_arg(sa)?;
                self.operand(arg)?.div_by_scalar(&f, &self.a)?
            }
            UnaryIR::Diff(target) => {
                let var = match target {
                    DiffTarget::Coeff(reg, blade) => {
                        match self.reg_val(*reg)?.coeff(*blade) {
                            Expr::Var(v) => v,
                            other => {
                                return Err(Error::DomainError(format!(
                                    "differentiation target holds `{other}`, not a symbol"
                                )));
                            }
                        }
                    }
                    DiffTarget::Var(v) => v.clone(),
                };
                let src = self.reg_val(arg)?.clone();
                let mut out = SymMultivector::zero(src.frame().clone());
                for (b, e) in src.terms() {
                    let expanded = self.expand(e)?;
                    out.set_coeff(b, differentiate(&expanded, &var, &self.a)?);
                }
                out
            }
            UnaryIR::CastToGrades(g) => self.reg_val(arg)?.select_grades(g),
            UnaryIR::CastToSubspace(s) => self.reg_val(arg)?.restrict_to_blades(&s.blades),
            UnaryIR::CastToClass(c) => {
                let v = self.reg_val(arg)?.clone();
                c.cast(&v, self.opts.strict, &self.a)?
            }
        })
    }
}

pub(crate) fn strip_brackets(v: &str) -> &str {
    v.strip_prefix('<').and_then(|s| s.strip_suffix('>')).map(str::trim).unwrap_or(v)
}

/// Rewrites bracketed variable paths `<path>` to `<object.path>`.
fn prefix_paths(e: &Expr, object: &str, a: &Assumptions) -> Result<Expr, Error> {
    if object.is_empty() {
        return Ok(e.clone());
    }
    let map: HashMap<String, Expr> = e
        .variables()
        .into_iter()
        .filter(|v| v.starts_with('<'))
        .map(|v| {
            let inner = strip_brackets(&v).to_string();
            let renamed = Expr::var(format!("<{object}.{inner}>"));
            (v, renamed)
        })
        .collect();
    if map.is_empty() { Ok(e.clone()) } else { substitute(e, &map, a) }
}

/// Symbolically evaluates `ir` under the binding point, producing the
/// output coefficient map and the raw assignment trace.
pub fn evaluate_macro(
    p: &CompiledProject,
    ir: &MacroIR,
    bp: &BindingPoint,
    opts: GenOptions,
) -> Result<EvalResult, Error> {
    let mut a = bp.assumptions()?;

    // Index and validate the binding specs per multivector.
    let classes: HashMap<&str, &Arc<ClassInfo>> = ir
        .inputs
        .iter()
        .map(|(n, c)| (n.as_str(), c))
        .chain(ir.outputs.iter().map(|(n, c, _)| (n.as_str(), c)))
        .collect();
    let mut coeff_binds: HashMap<(String, BladeId), String> = HashMap::new();
    let mut class_binds: HashMap<String, (String, String)> = HashMap::new();
    for spec in &bp.binds {
        let mv = match spec {
            BindSpec::Coeff { mv, .. } | BindSpec::Class { mv, .. } => mv,
        };
        let Some(class) = classes.get(mv.as_str()) else {
            return Err(Error::MalformedBinding(format!(
                "`{mv}` is not an input or output of macro `{}`",
                ir.name
            )));
        };
        match spec {
            BindSpec::Coeff { blade, target, .. } => {
                let b = class.frame.parse_blade(blade)?;
                if !class.contains(b) {
                    return Err(Error::BladeOutsideClass(blade.clone()));
                }
                coeff_binds.insert((mv.clone(), b), target.clone());
            }
            BindSpec::Class { pattern, object, .. } => {
                class_binds.insert(mv.clone(), (pattern.clone(), object.clone()));
            }
        }
    }

    // Resolve class-binding patterns up front. Bounds declared by a
    // pattern join the assumption set under the prefixed names.
    let mut pattern_map: HashMap<String, Vec<(BladeId, Expr)>> = HashMap::new();
    for (mv, (pattern, object)) in &class_binds {
        let pat = p.binding(pattern)?;
        let class = classes[mv.as_str()];
        if pat.frame.name() != class.frame.name() {
            return Err(Error::FrameMismatch(
                pat.frame.name().to_string(),
                class.frame.name().to_string(),
            ));
        }
        let mut entries = Vec::with_capacity(pat.bind.len());
        for (b, e) in &pat.bind {
            entries.push((*b, prefix_paths(e, object, &a)?));
        }
        for (v, c) in &pat.min {
            a.assume_min(prefixed_name(v, object), *c)?;
        }
        for (v, c) in &pat.max {
            a.assume_max(prefixed_name(v, object), *c)?;
        }
        pattern_map.insert(mv.clone(), entries);
    }

    let mut ev = Eval {
        ir,
        opts,
        a: a.clone(),
        regs: vec![None; ir.regs.len()],
        memo: HashMap::new(),
        defs: HashMap::new(),
        items: Vec::new(),
        next_temp: 0,
        next_ref: 0,
        join_on: false,
    };

    // Materialize the inputs: pinned blades take their class
    // constants; bound blades get a fresh symbol recording the target
    // expression; the rest default to zero (or error in strict mode).
    let mut plans = Vec::with_capacity(ir.inputs.len());
    for (i, (mv_name, class)) in ir.inputs.iter().enumerate() {
        let pattern = pattern_map.get(mv_name);
        let mut mv = SymMultivector::zero(class.frame.clone());
        let mut plan = Vec::new();
        for &b in &class.blades {
            if let Some(pin) = class.pin_for(b) {
                mv.set_coeff(b, pin.clone());
                plan.push((b, CoeffSource::Pinned(pin.clone())));
                continue;
            }
            let target = match coeff_binds.get(&(mv_name.clone(), b)) {
                Some(t) => Some(crate::symbolic::parse_expr(t)?),
                None => pattern
                    .and_then(|entries| entries.iter().find(|(pb, _)| *pb == b))
                    .map(|(_, e)| e.clone()),
            };
            match target {
                Some(t) => {
                    let symbol = format!("{mv_name}{b}");
                    // A plain-variable target hands its bounds to the
                    // input symbol.
                    if let Expr::Var(v) = &t {
                        if let Some(lo) = ev.a.lower(v) {
                            ev.a.assume_min(symbol.clone(), lo)?;
                        }
                        if let Some(hi) = ev.a.upper(v) {
                            ev.a.assume_max(symbol.clone(), hi)?;
                        }
                    }
                    ev.items.push(Item::Assign {
                        name: symbol.clone(),
                        kind: SymbolKind::InputAlias,
                        expr: t.clone(),
                    });
                    mv.set_coeff(b, Expr::var(symbol.clone()));
                    plan.push((b, CoeffSource::Bound { symbol, target: t }));
                }
                None if opts.strict => {
                    return Err(Error::UnboundInputCoefficient(format!(
                        "{mv_name}.{}",
                        class.frame.blade_name(b)
                    )));
                }
                None => plan.push((b, CoeffSource::Zero)),
            }
        }
        ev.regs[i] = Some(mv);
        plans.push(InputPlan { mv: mv_name.clone(), class: class.clone(), coeffs: plan });
    }

    for idx in 0..ir.ops.len() {
        ev.exec(idx)?;
    }

    // Collect outputs, cast onto their classes.
    let mut outputs = BTreeMap::new();
    let mut bound_outputs: Vec<(String, BladeId, String)> = Vec::new();
    let mut out_assigns: Vec<(String, BladeId, String, Expr)> = Vec::new();
    for (oname, class, reg) in &ir.outputs {
        let raw = match reg {
            Some(r) => ev.reg_val(*r)?.clone(),
            None => SymMultivector::zero(class.frame.clone()),
        };
        let value = class.cast(&raw, opts.strict, &ev.a)?;
        for &b in &class.blades {
            let e = value.coeff(b);
            outputs.insert((oname.clone(), b), e.clone());
            let target = match coeff_binds.get(&(oname.clone(), b)) {
                Some(t) => Some(crate::symbolic::parse_expr(t)?),
                None => pattern_map
                    .get(oname)
                    .and_then(|entries| entries.iter().find(|(pb, _)| *pb == b))
                    .map(|(_, e)| e.clone()),
            };
            let Some(target) = target else { continue };
            let lhs = match &target {
                Expr::Var(v) => strip_brackets(v).to_string(),
                other => {
                    return Err(Error::MalformedBinding(format!(
                        "output `{oname}` is bound to `{other}`, which is not a variable"
                    )));
                }
            };
            bound_outputs.push((oname.clone(), b, lhs.clone()));
            if e.is_zero() && !opts.emit_zeros {
                continue;
            }
            out_assigns.push((oname.clone(), b, lhs, e));
        }
    }
    out_assigns.sort_by(|x, y| (&x.0, x.1).cmp(&(&y.0, y.1)));
    for (_, _, lhs, expr) in out_assigns {
        ev.items.push(Item::Assign { name: lhs, kind: SymbolKind::Output, expr });
    }
    bound_outputs.sort();

    Ok(EvalResult {
        outputs,
        seq: ExprSequence { items: ev.items },
        inputs: plans,
        bound_outputs,
    })
}

fn prefixed_name(v: &str, object: &str) -> String {
    if object.is_empty() {
        v.to_string()
    } else {
        format!("<{object}.{}>", strip_brackets(v))
    }
}

/// Fixed optimization pipeline: simplify, propagate forwarding copies,
/// extract common subexpressions, fold constants, delete dead
/// assignments, renumber temporaries. The arithmetic operation count
/// never increases.
pub fn optimize(seq: &ExprSequence, a: &Assumptions) -> Result<ExprSequence, Error> {
    let mut items = seq.items.clone();

    for it in &mut items {
        if let Item::Assign { expr, .. } = it {
            *expr = simplify(expr, a)?;
        }
    }

    copy_propagate(&mut items, a)?;
    cse(&mut items, a)?;

    for it in &mut items {
        if let Item::Assign { expr, .. } = it {
            *expr = simplify(expr, a)?;
        }
    }

    dead_code(&mut items);
    renumber(&mut items, a)?;
    Ok(ExprSequence { items })
}

fn use_counts(items: &[Item]) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for it in items {
        if let Item::Assign { expr, .. } = it {
            for v in expr.variables() {
                *counts.entry(v).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Propagates constant and plain-variable definitions everywhere,
/// and folds a single-use definition into its use when the use is a
/// pure forwarding assignment (`x = t` or `x = -t`). Substituting
/// larger definitions into the middle of expressions is deliberately
/// left alone: it would not reduce the operation count and the
/// named-temporary shape is the readable one.
fn copy_propagate(items: &mut Vec<Item>, a: &Assumptions) -> Result<(), Error> {
    loop {
        let counts = use_counts(items);
        let mut action: Option<(usize, bool)> = None;
        for (i, it) in items.iter().enumerate() {
            let Item::Assign { name, kind, expr } = it else { continue };
            if matches!(kind, SymbolKind::Output | SymbolKind::Ref) {
                continue;
            }
            if matches!(expr, Expr::Const(_) | Expr::Var(_)) {
                action = Some((i, true));
                break;
            }
            if counts.get(name).copied().unwrap_or(0) == 1 {
                let forwarded = items.iter().any(|other| match other {
                    Item::Assign { expr: e, .. } => {
                        matches!(as_var_use(e), Some((v, _)) if v == name)
                    }
                    Item::Verbatim(_) => false,
                });
                if forwarded {
                    action = Some((i, false));
                    break;
                }
            }
        }
        let Some((i, rename)) = action else { return Ok(()) };
        let Item::Assign { name, expr, .. } = items.remove(i) else { unreachable!() };
        if rename {
            let map: HashMap<String, Expr> = [(name, expr)].into_iter().collect();
            for it in items.iter_mut() {
                if let Item::Assign { expr: e, .. } = it {
                    *e = substitute(e, &map, a)?;
                }
            }
        } else {
            for it in items.iter_mut() {
                let Item::Assign { expr: e, .. } = it else { continue };
                match as_var_use(e) {
                    Some((v, negated)) if v == name => {
                        *e = if negated {
                            simplify(&expr.clone().neg(), a)?
                        } else {
                            expr.clone()
                        };
                    }
                    _ => {}
                }
            }
        }
    }
}

fn var_leaves(e: &Expr) -> usize {
    let mut n = 0;
    e.walk(&mut |x| {
        if matches!(x, Expr::Var(_)) {
            n += 1;
        }
    });
    n
}

/// Counts structural occurrences of shareable subtrees across all
/// right-hand sides. A candidate has to combine at least two
/// variable leaves; bare negations and scalings of a single variable
/// are not worth naming.
fn collect_candidates(items: &[Item]) -> HashMap<Expr, (usize, usize)> {
    fn walk(e: &Expr, idx: usize, acc: &mut HashMap<Expr, (usize, usize)>) {
        let shareable = match e {
            Expr::Sum(ts) => ts.len() >= 2,
            Expr::Prod(fs) => fs.len() >= 2,
            Expr::Div(..) => true,
            _ => false,
        };
        if shareable && var_leaves(e) >= 2 {
            let entry = acc.entry(e.clone()).or_insert((0, idx));
            entry.0 += 1;
        }
        match e {
            Expr::Sum(ts) | Expr::Prod(ts) => {
                for t in ts {
                    walk(t, idx, acc);
                }
            }
            Expr::Div(n, d) => {
                walk(n, idx, acc);
                walk(d, idx, acc);
            }
            Expr::Neg(x) | Expr::Func(_, x) => walk(x, idx, acc),
            Expr::Pow(b, _) => walk(b, idx, acc),
            Expr::Const(_) | Expr::Var(_) => {}
        }
    }
    let mut acc = HashMap::new();
    for (i, it) in items.iter().enumerate() {
        if let Item::Assign { expr, .. } = it {
            walk(expr, i, &mut acc);
        }
    }
    acc
}

fn replace_subtree(e: &Expr, what: &Expr, with: &Expr) -> Expr {
    if e == what {
        return with.clone();
    }
    match e {
        Expr::Sum(ts) => Expr::Sum(ts.iter().map(|t| replace_subtree(t, what, with)).collect()),
        Expr::Prod(fs) => Expr::Prod(fs.iter().map(|f| replace_subtree(f, what, with)).collect()),
        Expr::Div(n, d) => Expr::Div(
            Box::new(replace_subtree(n, what, with)),
            Box::new(replace_subtree(d, what, with)),
        ),
        Expr::Neg(x) => Expr::Neg(Box::new(replace_subtree(x, what, with))),
        Expr::Func(f, x) => Expr::Func(*f, Box::new(replace_subtree(x, what, with))),
        Expr::Pow(b, n) => Expr::Pow(Box::new(replace_subtree(b, what, with)), *n),
        Expr::Const(_) | Expr::Var(_) => e.clone(),
    }
}

/// Extracts subtrees that occur at least twice into fresh
/// temporaries, largest first.
fn cse(items: &mut Vec<Item>, _a: &Assumptions) -> Result<(), Error> {
    let mut n = 0usize;
    loop {
        let cands = collect_candidates(items);
        let mut best: Option<(&Expr, usize)> = None;
        for (e, (count, first)) in &cands {
            if *count < 2 {
                continue;
            }
            match best {
                None => best = Some((e, *first)),
                Some((b, bf)) => {
                    let key = (e.op_count(), std::cmp::Reverse(*first));
                    let bkey = (b.op_count(), std::cmp::Reverse(bf));
                    if key > bkey || (key == bkey && e > b) {
                        best = Some((e, *first));
                    }
                }
            }
        }
        let Some((cand, first)) = best.map(|(e, f)| (e.clone(), f)) else { return Ok(()) };
        n += 1;
        let name = format!("cse{n}");
        let var = Expr::var(name.clone());
        for it in items.iter_mut() {
            if let Item::Assign { expr, .. } = it {
                *expr = replace_subtree(expr, &cand, &var);
            }
        }
        items.insert(
            first,
            Item::Assign { name, kind: SymbolKind::Temporary, expr: cand },
        );
    }
}

fn dead_code(items: &mut Vec<Item>) {
    let mut live: HashSet<String> = HashSet::new();
    let mut keep = vec![false; items.len()];
    for i in (0..items.len()).rev() {
        match &items[i] {
            Item::Verbatim(_) => keep[i] = true,
            Item::Assign { name, kind, expr } => {
                if matches!(kind, SymbolKind::Output | SymbolKind::Ref) || live.contains(name) {
                    keep[i] = true;
                    for v in expr.variables() {
                        live.insert(v);
                    }
                }
            }
        }
    }
    let mut i = 0;
    items.retain(|_| {
        let k = keep[i];
        i += 1;
        k
    });
}

/// Renames temporaries to `var0001`-style in order of appearance.
fn renumber(items: &mut [Item], a: &Assumptions) -> Result<(), Error> {
    let mut map: HashMap<String, Expr> = HashMap::new();
    let mut n = 0usize;
    for it in items.iter_mut() {
        if let Item::Assign { name, kind: SymbolKind::Temporary, .. } = it {
            n += 1;
            let fresh = format!("var{n:04}");
            map.insert(name.clone(), Expr::var(fresh.clone()));
            *name = fresh;
        }
    }
    if map.is_empty() {
        return Ok(());
    }
    for it in items.iter_mut() {
        if let Item::Assign { expr, .. } = it {
            *expr = substitute(expr, &map, a)?;
        }
    }
    Ok(())
}

/// Straight-line IEEE-double execution of a sequence. The environment
/// maps bare target-variable names; bracketed references resolve to
/// the same entries.
pub fn interpret(
    seq: &ExprSequence,
    env: &HashMap<String, f64>,
) -> Result<HashMap<String, f64>, Error> {
    let mut vals: HashMap<String, f64> = HashMap::new();
    for (k, v) in env {
        vals.insert(k.clone(), *v);
        vals.insert(format!("<{k}>"), *v);
    }
    let mut out = HashMap::new();
    for it in &seq.items {
        let Item::Assign { name, kind, expr } = it else { continue };
        let v = crate::symbolic::eval_numeric(expr, &vals)?;
        vals.insert(name.clone(), v);
        vals.insert(format!("<{name}>"), v);
        if matches!(kind, SymbolKind::Output | SymbolKind::Ref) {
            out.insert(name.clone(), v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
