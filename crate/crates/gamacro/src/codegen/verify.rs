//! Numeric verification of generated sequences against the
//! table-free oracle.
//!
//! The macro IR is executed a second time in plain IEEE doubles on
//! top of [`crate::oracle`], which derives blade products from the
//! metric by congruence diagonalization rather than from the frame's
//! precomputed tables. Sampled inputs then check that the raw trace,
//! the optimized trace, and the oracle all agree.

use super::{
    evaluate_macro, interpret, optimize, BindingPoint, CoeffSource, EvalResult, GenOptions,
    Item,
};
use crate::blades::{BladeId, ProductKind};
use crate::compiler::{CompiledProject, DiffTarget, MacroIR, Op, ScalarArg, UnaryIR};
use crate::dsl::BinOp;
use crate::error::Error;
use crate::oracle::{NumFrame, NumMultivector, OracleProduct};
use crate::symbolic::eval_numeric;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap};

fn oracle_product(k: ProductKind) -> OracleProduct {
    match k {
        ProductKind::Gp => OracleProduct::Gp,
        ProductKind::Op => OracleProduct::Op,
        ProductKind::Sp => OracleProduct::Sp,
        ProductKind::Lcp => OracleProduct::Lcp,
        ProductKind::Rcp => OracleProduct::Rcp,
        ProductKind::Fdp => OracleProduct::Fdp,
        ProductKind::Hip => OracleProduct::Hip,
        ProductKind::Cp => OracleProduct::Cp,
        ProductKind::Acp => OracleProduct::Acp,
    }
}

struct NumEval<'a> {
    ir: &'a MacroIR,
    /// One oracle frame per distinct frame among the registers.
    frames: HashMap<String, NumFrame>,
    /// Scalar environment with both `x` and `<x>` spellings.
    env: HashMap<String, f64>,
}

impl<'a> NumEval<'a> {
    fn new(ir: &'a MacroIR, env: &HashMap<String, f64>) -> Result<NumEval<'a>, Error> {
        let mut frames = HashMap::new();
        for r in &ir.regs {
            if !frames.contains_key(r.frame.name()) {
                frames.insert(
                    r.frame.name().to_string(),
                    NumFrame::new(r.frame.name(), r.frame.ipm())?,
                );
            }
        }
        let mut full = HashMap::new();
        for (k, v) in env {
            full.insert(k.clone(), *v);
            if !k.starts_with('<') {
                full.insert(format!("<{k}>"), *v);
            }
        }
        Ok(NumEval { ir, frames, env: full })
    }

    fn frame_of(&self, reg: usize) -> &NumFrame {
        &self.frames[self.ir.regs[reg].frame.name()]
    }

    fn arg_value(
        &self,
        arg: &ScalarArg,
        regs: &[Option<NumMultivector>],
    ) -> Result<f64, Error> {
        if arg.reads.is_empty() {
            return eval_numeric(&arg.expr, &self.env);
        }
        let mut env = self.env.clone();
        for (v, reg, blade) in &arg.reads {
            let mv = regs[*reg]
                .as_ref()
                .ok_or_else(|| Error::Other(format!("register `{reg}` read before write")))?;
            env.insert(v.clone(), mv.get(*blade));
        }
        eval_numeric(&arg.expr, &env)
    }

    /// Runs `ops[..upto]` over the given dense input coordinates.
    fn run(
        &self,
        inputs: &[Vec<f64>],
        upto: usize,
    ) -> Result<Vec<Option<NumMultivector>>, Error> {
        let mut regs: Vec<Option<NumMultivector>> = vec![None; self.ir.regs.len()];
        for (i, coords) in inputs.iter().enumerate() {
            regs[i] = Some(NumMultivector::from_coeffs(coords.clone()));
        }
        for idx in 0..upto {
            self.step(idx, inputs, &mut regs)?;
        }
        Ok(regs)
    }

    fn step(
        &self,
        idx: usize,
        inputs: &[Vec<f64>],
        regs: &mut Vec<Option<NumMultivector>>,
    ) -> Result<(), Error> {
        let get = |regs: &[Option<NumMultivector>], r: usize| -> Result<NumMultivector, Error> {
            regs[r]
                .as_ref()
                .cloned()
                .ok_or_else(|| Error::Other(format!("register `{r}` read before write")))
        };
        match &self.ir.ops[idx] {
            Op::Ctor { dst, frame, coeffs } => {
                let mut mv = NumMultivector::from_coeffs(vec![0.0; frame.blade_count()]);
                for (b, arg) in coeffs {
                    mv.set(*b, self.arg_value(arg, regs)?);
                }
                regs[*dst] = Some(mv);
            }
            Op::Binary { dst, op, lhs, rhs } => {
                let l = get(regs, *lhs)?;
                let r = get(regs, *rhs)?;
                let v = match op {
                    BinOp::Add => l.add(&r),
                    BinOp::Sub => l.sub(&r),
                    BinOp::Product(kind) => {
                        self.frame_of(*lhs).product(oracle_product(*kind), &l, &r)
                    }
                };
                regs[*dst] = Some(v);
            }
            Op::Transform { dst, transform, arg } => {
                let m: Vec<Vec<f64>> = transform
                    .matrix
                    .iter()
                    .map(|row| row.iter().map(|n| n.to_f64()).collect())
                    .collect();
                let v = get(regs, *arg)?;
                regs[*dst] = Some(self.frame_of(*arg).apply_outermorphism(&m, &v));
            }
            Op::Copy { dst, src } => regs[*dst] = Some(get(regs, *src)?),
            Op::Negate { dst, src } => regs[*dst] = Some(get(regs, *src)?.neg()),
            Op::Output { .. } | Op::JoinOn | Op::JoinOff => {}
            Op::Unary { dst, op, arg } => {
                let f = self.frame_of(*arg);
                let v = get(regs, *arg)?;
                let scalar_mv = |x: f64, dim: usize| {
                    let mut c = vec![0.0; dim];
                    c[0] = x;
                    NumMultivector::from_coeffs(c)
                };
                let out = match op {
                    UnaryIR::GradeInv => f.grade_involution(&v),
                    UnaryIR::CliffConj => f.clifford_conjugate(&v),
                    UnaryIR::Reverse => f.reverse(&v),
                    UnaryIR::Norm => scalar_mv(f.norm(&v), f.blade_count()),
                    UnaryIR::Norm2 => scalar_mv(f.norm2(&v), f.blade_count()),
                    UnaryIR::QuasiNorm => scalar_mv(f.quasi_norm(&v), f.blade_count()),
                    UnaryIR::QuasiNorm2 => scalar_mv(f.quasi_norm2(&v), f.blade_count()),
                    UnaryIR::Scale(sa) => v.scale(self.arg_value(sa, regs)?),
                    UnaryIR::DivByScalar(sa) => {
                        let d = self.arg_value(sa, regs)?;
                        v.scale(1.0 / d)
                    }
                    UnaryIR::CastToGrades(g) => v.select_grades(g),
                    UnaryIR::CastToSubspace(s) => v.mask_blades(&s.blades),
                    UnaryIR::CastToClass(c) => {
                        let mut out = v.mask_blades(&c.blades);
                        for (b, pin) in &c.pinned {
                            out.set(*b, eval_numeric(pin, &self.env)?);
                        }
                        out
                    }
                    UnaryIR::Diff(target) => self.diff(idx, target, *arg, inputs, regs)?,
                };
                regs[*dst] = Some(out);
            }
        }
        Ok(())
    }

    /// Central finite difference of the `arg` register with respect
    /// to the target coordinate, re-running the op prefix at shifted
    /// inputs.
    fn diff(
        &self,
        idx: usize,
        target: &DiffTarget,
        arg: usize,
        inputs: &[Vec<f64>],
        regs: &[Option<NumMultivector>],
    ) -> Result<NumMultivector, Error> {
        let (input_idx, blade) = match target {
            DiffTarget::Coeff(reg, blade) => {
                if *reg >= self.ir.inputs.len() {
                    return Err(Error::DomainError(
                        "numeric differentiation target must be an input coefficient".into(),
                    ));
                }
                (*reg, *blade)
            }
            DiffTarget::Var(name) => {
                let (i, b) = self.resolve_symbol(name).ok_or_else(|| {
                    Error::DomainError(format!(
                        "numeric differentiation target `{name}` is not an input symbol"
                    ))
                })?;
                (i, b)
            }
        };
        let x = inputs[input_idx][blade as usize];
        let h = 6e-6 * x.abs().max(1.0);
        let run_at = |x: f64| -> Result<NumMultivector, Error> {
            let mut shifted = inputs.to_vec();
            shifted[input_idx][blade as usize] = x;
            let regs = self.run(&shifted, idx)?;
            regs[arg]
                .as_ref()
                .cloned()
                .ok_or_else(|| Error::Other(format!("register `{arg}` read before write")))
        };
        let hi = run_at(x + h)?;
        let lo = run_at(x - h)?;
        let _ = regs;
        Ok(hi.sub(&lo).scale(1.0 / (2.0 * h)))
    }

    /// Maps an input symbol `{mv}{blade}` back to its coordinate.
    fn resolve_symbol(&self, name: &str) -> Option<(usize, BladeId)> {
        for (i, (mv, class)) in self.ir.inputs.iter().enumerate() {
            if let Some(rest) = name.strip_prefix(mv.as_str()) {
                if let Ok(b) = rest.parse::<BladeId>() {
                    if class.contains(b) {
                        return Some((i, b));
                    }
                }
            }
        }
        None
    }
}

/// Executes the macro numerically and returns every output
/// coefficient, cast onto the output classes.
pub fn run_macro_numeric(
    ir: &MacroIR,
    inputs: &[Vec<f64>],
    env: &HashMap<String, f64>,
) -> Result<BTreeMap<(String, BladeId), f64>, Error> {
    if inputs.len() != ir.inputs.len() {
        return Err(Error::Other(format!(
            "macro `{}` takes {} inputs, got {}",
            ir.name,
            ir.inputs.len(),
            inputs.len()
        )));
    }
    let ev = NumEval::new(ir, env)?;
    let regs = ev.run(inputs, ir.ops.len())?;
    let mut out = BTreeMap::new();
    for (name, class, reg) in &ir.outputs {
        let value = match reg {
            Some(r) => regs[*r]
                .as_ref()
                .cloned()
                .ok_or_else(|| Error::Other(format!("register `{r}` read before write")))?,
            None => NumMultivector::from_coeffs(vec![0.0; class.frame.blade_count()]),
        };
        let mut value = value.mask_blades(&class.blades);
        for (b, pin) in &class.pinned {
            value.set(*b, eval_numeric(pin, &ev.env)?);
        }
        for &b in &class.blades {
            out.insert((name.clone(), b), value.get(b));
        }
    }
    Ok(out)
}

/// Aggregate sampling results for one binding point.
#[derive(Debug)]
pub struct VerifyReport {
    pub macro_name: String,
    pub samples: usize,
    /// Raw trace vs oracle, max over samples of the relative error.
    pub raw_vs_oracle: f64,
    /// Optimized trace vs oracle.
    pub opt_vs_oracle: f64,
    /// Raw trace vs optimized trace (optimizer soundness).
    pub raw_vs_opt: f64,
    pub raw_ops: usize,
    pub opt_ops: usize,
    pub raw_assignments: usize,
    pub opt_assignments: usize,
}

impl VerifyReport {
    pub fn within(&self, soundness_tol: f64, oracle_tol: f64) -> bool {
        self.raw_vs_opt <= soundness_tol
            && self.raw_vs_oracle <= oracle_tol
            && self.opt_vs_oracle <= oracle_tol
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Free variables of the sequence and input plan: everything that is
/// not assigned, not an input symbol, and not the `pi` builtin.
fn free_variables(res: &EvalResult) -> Vec<String> {
    let mut defined: Vec<String> = Vec::new();
    let mut seen = Vec::new();
    for it in &res.seq.items {
        if let Item::Assign { name, .. } = it {
            defined.push(name.clone());
        }
    }
    let mut push = |v: String| {
        let key = super::strip_brackets(&v).to_string();
        if key != "pi"
            && !defined.iter().any(|d| *d == v || *d == key)
            && !seen.contains(&key)
        {
            seen.push(key);
        }
    };
    for it in &res.seq.items {
        if let Item::Assign { expr, .. } = it {
            for v in expr.variables() {
                push(v);
            }
        }
    }
    for plan in &res.inputs {
        for (_, src) in &plan.coeffs {
            if let CoeffSource::Bound { target, .. } = src {
                for v in target.variables() {
                    push(v);
                }
            }
        }
    }
    seen.sort();
    seen
}

/// Samples random inputs for a binding point and checks the raw
/// trace, the optimized trace, and the oracle against each other.
pub fn verify_binding_point(
    p: &CompiledProject,
    bp: &BindingPoint,
    opts: GenOptions,
    samples: usize,
    seed: u64,
) -> Result<VerifyReport, Error> {
    let ir = p.macro_ir(&bp.macro_name)?.clone();
    let res = evaluate_macro(p, &ir, bp, opts)?;
    let a = bp.assumptions()?;
    let opt = optimize(&res.seq, &a)?;

    let vars = free_variables(&res);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = VerifyReport {
        macro_name: bp.macro_name.clone(),
        samples,
        raw_vs_oracle: 0.0,
        opt_vs_oracle: 0.0,
        raw_vs_opt: 0.0,
        raw_ops: res.seq.op_count(),
        opt_ops: opt.op_count(),
        raw_assignments: res.seq.assignment_count(),
        opt_assignments: opt.assignment_count(),
    };

    for _ in 0..samples {
        let mut env: HashMap<String, f64> = HashMap::new();
        for v in &vars {
            let key = format!("<{v}>");
            let lo = a.lower(&key).map(|n| n.to_f64()).unwrap_or(-2.0);
            let hi = a.upper(&key).map(|n| n.to_f64()).unwrap_or(2.0);
            let (lo, hi) = if lo < hi { (lo, hi) } else { (lo, lo + 1.0) };
            env.insert(v.clone(), rng.random_range(lo..hi));
        }
        let mut full = env.clone();
        for (k, v) in &env {
            full.insert(format!("<{k}>"), *v);
        }

        let raw_out = interpret(&res.seq, &env)?;
        let opt_out = interpret(&opt, &env)?;

        let mut inputs = Vec::with_capacity(res.inputs.len());
        for plan in &res.inputs {
            let mut coords = vec![0.0; plan.class.frame.blade_count()];
            for (b, src) in &plan.coeffs {
                coords[*b as usize] = match src {
                    CoeffSource::Pinned(e) => eval_numeric(e, &full)?,
                    CoeffSource::Bound { target, .. } => eval_numeric(target, &full)?,
                    CoeffSource::Zero => 0.0,
                };
            }
            inputs.push(coords);
        }
        let oracle = run_macro_numeric(&ir, &inputs, &env)?;

        for (mv, b, lhs) in &res.bound_outputs {
            let want = oracle[&(mv.clone(), *b)];
            let raw = raw_out.get(lhs).copied().unwrap_or(0.0);
            let o = opt_out.get(lhs).copied().unwrap_or(0.0);
            report.raw_vs_oracle = report.raw_vs_oracle.max(rel_err(raw, want));
            report.opt_vs_oracle = report.opt_vs_oracle.max(rel_err(o, want));
        }
        for (name, raw) in &raw_out {
            let o = opt_out.get(name).copied().unwrap_or(0.0);
            report.raw_vs_opt = report.raw_vs_opt.max(rel_err(o, *raw));
        }
    }
    Ok(report)
}
