use super::*;
use crate::compiler::compile;
use crate::dsl::{parse_project, ProjectSources};
use crate::symbolic::parse_expr;
use std::collections::HashMap;

fn fixture() -> CompiledProject {
    let src = ProjectSources {
        frames: r#"
define frame e2d as
    basis: {e1, e2}
    Euclidean
end frame

define frame e3d as
    basis: {e1, e2, e3}
    Euclidean
end frame
"#
        .to_string(),
        subspaces: r#"
define subspace e2d.vectors as
    basis {e1; e2}
end subspace

define subspace e2d.area as
    basis {e1^e2}
end subspace

define subspace e3d.vectors as
    basis {e1; e2; e3}
end subspace
"#
        .to_string(),
        multivectors: r#"
define multivector class e2d.Vector as
    vectors
end multivector class

define multivector class e2d.Bivector as
    area
end multivector class

define multivector class e3d.Vector as
    vectors
end multivector class

define multivector class e3d.Point as
    vectors; 1 : 1
end multivector class
"#
        .to_string(),
        bindings: r#"
define binding Point3 as
    use frame e3d
    bind { e1 : <x>; e2 : <y>; e3 : <z> }
    min { <x> : -100 }
    max { <x> : 100 }
end binding
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

define macro wedge2 as
    inputs: {v0 : e2d.Vector; v1 : e2d.Vector; v2 : e2d.Vector}
    outputs: {B : e2d.Bivector}
    performs:
        a = v1 - v0;
        b = v2 - v0;
        B = a op b;
end macro

define macro sq as
    inputs: {u : e3d.Vector}
    outputs: {w : e3d.Vector; dw : e3d.Vector}
    performs:
        w = scale(u, <u.e1>);
        dw = diff(w, <u.e1>);
end macro

define macro jo as
    inputs: {u : e3d.Vector; v : e3d.Vector}
    outputs: {w : e3d.Vector}
    performs:
        join on;
        t = u op v;
        w = t lcp e3d.Ii;
end macro

define macro show as
    inputs: {u : e3d.Vector}
    outputs: {w : e3d.Vector}
    performs:
        s = u + u;
        w = u;
        output {// first is <u.e1>, doubled is <s.e1>};
end macro

define macro keep_point as
    inputs: {p : e3d.Point}
    outputs: {w : e3d.Point}
    performs:
        w = p;
end macro
"#
        .to_string(),
        ..Default::default()
    };
    let ast = parse_project(&src).expect("fixture parses");
    compile(&ast).expect("fixture compiles")
}

fn cross_binds() -> Vec<BindSpec> {
    let c = |mv: &str, blade: &str, t: &str| BindSpec::Coeff {
        mv: mv.into(),
        blade: blade.into(),
        target: t.into(),
    };
    vec![
        c("u", "e1", "<u.x>"),
        c("u", "e2", "<u.y>"),
        c("u", "e3", "<u.z>"),
        c("v", "e1", "<v.x>"),
        c("v", "e2", "<v.y>"),
        c("v", "e3", "<v.z>"),
        c("w", "e1", "<wx>"),
        c("w", "e2", "<wy>"),
        c("w", "e3", "<wz>"),
    ]
}

fn eval_fixture(
    p: &CompiledProject,
    name: &str,
    binds: Vec<BindSpec>,
    opts: GenOptions,
) -> EvalResult {
    let ir = p.macro_ir(name).unwrap().clone();
    evaluate_macro(p, &ir, &BindingPoint::bare(name, binds), opts).unwrap()
}

fn exprs_equal(a: &Expr, b: &Expr) -> bool {
    let no = Assumptions::new();
    let diff = Expr::Sum(vec![a.clone(), b.clone().neg()]);
    simplify(&diff, &no).unwrap().is_zero()
}

#[test]
fn cross_trace_has_reformulation_temps_and_forwarding_outputs() {
    let p = fixture();
    let res = eval_fixture(&p, "cross", cross_binds(), GenOptions::default());
    let seq = &res.seq;
    let aliases: Vec<_> =
        seq.assigns().filter(|(_, k, _)| *k == SymbolKind::InputAlias).collect();
    assert_eq!(aliases.len(), 6);
    assert_eq!(aliases[0].0, "u1");
    assert_eq!(seq.temporary_count(), 3);

    // Outputs forward the wedge coefficients: wx = var3, wy = -var2,
    // wz = var1.
    let outs: Vec<_> = seq.assigns().filter(|(_, k, _)| *k == SymbolKind::Output).collect();
    assert_eq!(outs.len(), 3);
    assert_eq!(outs[0].0, "wx");
    assert!(exprs_equal(outs[0].2, &Expr::var("var3")));
    assert_eq!(outs[1].0, "wy");
    assert!(exprs_equal(outs[1].2, &Expr::var("var2").neg()));
    assert_eq!(outs[2].0, "wz");
    assert!(exprs_equal(outs[2].2, &Expr::var("var1")));
}

#[test]
fn cross_optimizes_to_three_bare_assignments() {
    let p = fixture();
    let res = eval_fixture(&p, "cross", cross_binds(), GenOptions::default());
    let opt = optimize(&res.seq, &Assumptions::new()).unwrap();
    assert_eq!(opt.assignment_count(), 3);
    assert_eq!(opt.temporary_count(), 0);
    assert!(opt.op_count() <= res.seq.op_count());

    let expect = [
        ("wx", "<u.y>*<v.z> - <u.z>*<v.y>"),
        ("wy", "<u.z>*<v.x> - <u.x>*<v.z>"),
        ("wz", "<u.x>*<v.y> - <u.y>*<v.x>"),
    ];
    for ((name, _, expr), (want_name, want)) in opt.assigns().zip(expect) {
        assert_eq!(name, want_name);
        let want = parse_expr(want).unwrap();
        assert!(exprs_equal(expr, &want), "{name}: got {expr}, want {want}");
    }
}

#[test]
fn cross_interprets_correctly() {
    let p = fixture();
    let res = eval_fixture(&p, "cross", cross_binds(), GenOptions::default());
    let opt = optimize(&res.seq, &Assumptions::new()).unwrap();
    let env: HashMap<String, f64> = [
        ("u.x", 1.0),
        ("u.y", 0.0),
        ("u.z", 0.0),
        ("v.x", 0.0),
        ("v.y", 1.0),
        ("v.z", 0.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    for seq in [&res.seq, &opt] {
        let out = interpret(seq, &env).unwrap();
        // Zero coefficients are dropped from the sequence entirely.
        assert_eq!(out.get("wx").copied().unwrap_or(0.0), 0.0);
        assert_eq!(out.get("wy").copied().unwrap_or(0.0), 0.0);
        assert_eq!(out["wz"], 1.0);
    }
}

#[test]
fn wedge_of_differences_keeps_reformulation_temps() {
    let p = fixture();
    let c = |mv: &str, blade: &str, t: String| BindSpec::Coeff {
        mv: mv.into(),
        blade: blade.into(),
        target: t,
    };
    let mut binds = Vec::new();
    for (i, mv) in ["v0", "v1", "v2"].iter().enumerate() {
        binds.push(c(mv, "e1", format!("<x{i}>")));
        binds.push(c(mv, "e2", format!("<y{i}>")));
    }
    binds.push(c("B", "e1^e2", "<area>".to_string()));
    let res = eval_fixture(&p, "wedge2", binds, GenOptions::default());

    // The two differences reformulate into four temporaries feeding
    // the single product, and the temporaries are not forwarding
    // copies, so they survive optimization: 4 + 1 assignments.
    let opt = optimize(&res.seq, &Assumptions::new()).unwrap();
    assert_eq!(opt.temporary_count(), 4);
    assert_eq!(opt.assignment_count(), 5);

    let env: HashMap<String, f64> = [
        ("x0", 0.0),
        ("y0", 0.0),
        ("x1", 1.0),
        ("y1", 0.0),
        ("x2", 0.0),
        ("y2", 1.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let out = interpret(&opt, &env).unwrap();
    assert_eq!(out["area"], 1.0);
}

#[test]
fn unbound_inputs_default_to_zero_or_error_in_strict_mode() {
    let p = fixture();
    let binds: Vec<BindSpec> = cross_binds()
        .into_iter()
        .filter(|b| !matches!(b, BindSpec::Coeff { mv, .. } if mv == "v"))
        .collect();
    let res = eval_fixture(&p, "cross", binds.clone(), GenOptions::default());
    // u x 0 = 0: all output coefficients vanish and nothing is
    // emitted for them.
    assert!(res.outputs.values().all(|e| e.is_zero()));
    assert_eq!(
        res.seq.assigns().filter(|(_, k, _)| *k == SymbolKind::Output).count(),
        0
    );

    let ir = p.macro_ir("cross").unwrap().clone();
    let err = evaluate_macro(
        &p,
        &ir,
        &BindingPoint::bare("cross", binds),
        GenOptions { strict: true, ..Default::default() },
    )
    .unwrap_err();
    assert!(matches!(err, Error::UnboundInputCoefficient(ref s) if s == "v.e1"), "{err}");
}

#[test]
fn emit_zeros_writes_vanishing_outputs() {
    let p = fixture();
    let binds: Vec<BindSpec> = cross_binds()
        .into_iter()
        .filter(|b| !matches!(b, BindSpec::Coeff { mv, .. } if mv == "v"))
        .collect();
    let res = eval_fixture(
        &p,
        "cross",
        binds,
        GenOptions { emit_zeros: true, ..Default::default() },
    );
    let outs: Vec<_> =
        res.seq.assigns().filter(|(_, k, _)| *k == SymbolKind::Output).collect();
    assert_eq!(outs.len(), 3);
    assert!(outs.iter().all(|(_, _, e)| e.is_zero()));
}

#[test]
fn pinned_blades_use_the_class_constant() {
    let p = fixture();
    let c = |mv: &str, blade: &str, t: &str| BindSpec::Coeff {
        mv: mv.into(),
        blade: blade.into(),
        target: t.into(),
    };
    let binds = vec![
        c("p", "e1", "<p.x>"),
        c("p", "e2", "<p.y>"),
        c("p", "e3", "<p.z>"),
        c("w", "1", "<s>"),
        c("w", "e1", "<wx>"),
    ];
    let res = eval_fixture(&p, "keep_point", binds, GenOptions::default());
    // The scalar slot is pinned to 1 by the class, so the bound
    // output is the constant.
    assert!(exprs_equal(&res.outputs[&("w".to_string(), 0)], &Expr::int(1)));
    let out = res
        .seq
        .assigns()
        .find(|(n, k, _)| *n == "s" && *k == SymbolKind::Output)
        .expect("pinned output emitted");
    assert!(exprs_equal(out.2, &Expr::int(1)));
}

#[test]
fn binding_pattern_prefixes_paths_and_bounds() {
    let p = fixture();
    let binds = vec![
        BindSpec::Class { mv: "u".into(), pattern: "Point3".into(), object: "pt".into() },
        BindSpec::Coeff { mv: "v".into(), blade: "e1".into(), target: "<v.x>".into() },
        BindSpec::Coeff { mv: "w".into(), blade: "e3".into(), target: "<wz>".into() },
    ];
    let res = eval_fixture(&p, "cross", binds, GenOptions::default());
    let alias = res
        .seq
        .assigns()
        .find(|(n, k, _)| *n == "u1" && *k == SymbolKind::InputAlias)
        .unwrap();
    assert_eq!(alias.2, &Expr::var("<pt.x>"));

    // Object-empty patterns keep the raw path.
    let binds = vec![BindSpec::Class { mv: "u".into(), pattern: "Point3".into(), object: "".into() }];
    let res = eval_fixture(&p, "cross", binds, GenOptions::default());
    let alias = res.seq.assigns().find(|(n, _, _)| *n == "u1").unwrap();
    assert_eq!(alias.2, &Expr::var("<x>"));
}

#[test]
fn join_on_lets_expressions_flow_through() {
    let p = fixture();
    let res = eval_fixture(&p, "jo", cross_binds(), GenOptions::default());
    assert_eq!(res.seq.temporary_count(), 0);
    let outs: Vec<_> =
        res.seq.assigns().filter(|(_, k, _)| *k == SymbolKind::Output).collect();
    assert_eq!(outs.len(), 3);
    // Full expressions, not forwarded temporaries.
    assert!(outs.iter().all(|(_, _, e)| e.op_count() >= 3));
}

#[test]
fn output_statements_resolve_placeholders() {
    let p = fixture();
    let binds = vec![
        BindSpec::Coeff { mv: "u".into(), blade: "e1".into(), target: "<ux>".into() },
        BindSpec::Coeff { mv: "w".into(), blade: "e1".into(), target: "<wx>".into() },
    ];
    let res = eval_fixture(&p, "show", binds, GenOptions::default());
    let verbatim = res
        .seq
        .items
        .iter()
        .find_map(|i| match i {
            Item::Verbatim(t) => Some(t.clone()),
            _ => None,
        })
        .expect("verbatim output present");
    // Both reads go through ref assignments: the optimizer may
    // rename or remove anything else the text could point at.
    assert_eq!(verbatim, "// first is ref1, doubled is ref2");
    let r = res.seq.assigns().find(|(n, _, _)| *n == "ref2").unwrap();
    assert_eq!(r.1, SymbolKind::Ref);
    assert!(exprs_equal(r.2, &parse_expr("2*u1").unwrap()));

    // Optimization keeps the ref names stable, resolves them down to
    // the target variables, and leaves the verbatim text untouched.
    let opt = optimize(&res.seq, &Assumptions::new()).unwrap();
    assert!(opt.items.iter().any(|i| matches!(i, Item::Verbatim(t) if t.contains("ref1"))));
    let r = opt.assigns().find(|(n, _, _)| *n == "ref1").unwrap();
    assert_eq!(r.1, SymbolKind::Ref);
    assert!(exprs_equal(r.2, &Expr::var("<ux>")));
}

#[test]
fn diff_takes_exact_symbolic_derivatives() {
    let p = fixture();
    let c = |mv: &str, blade: &str, t: &str| BindSpec::Coeff {
        mv: mv.into(),
        blade: blade.into(),
        target: t.into(),
    };
    let binds = vec![
        c("u", "e1", "<a>"),
        c("u", "e2", "<b>"),
        c("u", "e3", "<c>"),
        c("w", "e1", "<w1>"),
        c("w", "e2", "<w2>"),
        c("w", "e3", "<w3>"),
        c("dw", "e1", "<d1>"),
        c("dw", "e2", "<d2>"),
        c("dw", "e3", "<d3>"),
    ];
    let res = eval_fixture(&p, "sq", binds, GenOptions::default());
    // The outputs map is expressed over the fresh input symbols:
    // w = u * u.e1, so dw/du.e1 = (2*u1, u2, u4).
    assert!(exprs_equal(
        &res.outputs[&("dw".to_string(), 1)],
        &parse_expr("2*u1").unwrap()
    ));
    assert!(exprs_equal(&res.outputs[&("dw".to_string(), 2)], &Expr::var("u2")));

    let env: HashMap<String, f64> =
        [("a", 1.5), ("b", -2.0), ("c", 0.5)].into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let out = interpret(&res.seq, &env).unwrap();
    assert!((out["d1"] - 3.0).abs() < 1e-12);
    assert!((out["d2"] + 2.0).abs() < 1e-12);
    assert!((out["w1"] - 2.25).abs() < 1e-12);
}

#[test]
fn verify_samples_cross_against_the_oracle() {
    let p = fixture();
    let bp = BindingPoint::bare("cross", cross_binds());
    let report =
        verify_binding_point(&p, &bp, GenOptions::default(), 200, 7).unwrap();
    assert!(report.within(1e-12, 1e-9), "{report:?}");
    assert!(report.opt_ops <= report.raw_ops);
    assert_eq!(report.opt_assignments, 3);
}

#[test]
fn verify_samples_diff_macro_with_finite_differences() {
    let p = fixture();
    let c = |mv: &str, blade: &str, t: &str| BindSpec::Coeff {
        mv: mv.into(),
        blade: blade.into(),
        target: t.into(),
    };
    let binds = vec![
        c("u", "e1", "<a>"),
        c("u", "e2", "<b>"),
        c("u", "e3", "<c>"),
        c("dw", "e1", "<d1>"),
        c("dw", "e2", "<d2>"),
        c("dw", "e3", "<d3>"),
    ];
    let bp = BindingPoint::bare("sq", binds);
    let report = verify_binding_point(&p, &bp, GenOptions::default(), 50, 11).unwrap();
    // The oracle side differentiates numerically, so the comparison
    // tolerance is looser than the optimizer-soundness bound.
    assert!(report.raw_vs_opt <= 1e-12, "{report:?}");
    assert!(report.raw_vs_oracle <= 1e-7, "{report:?}");
    assert!(report.opt_vs_oracle <= 1e-7, "{report:?}");
}

#[test]
fn cse_extracts_repeated_subtrees() {
    // Products survive simplification (sums of products is the
    // canonical form), so x*y is a sharable subtree.
    let prod = Expr::Prod(vec![Expr::var("x"), Expr::var("y")]);
    let seq = ExprSequence {
        items: vec![
            Item::Assign {
                name: "o1".into(),
                kind: SymbolKind::Output,
                expr: Expr::Sum(vec![prod.clone(), Expr::var("u")]),
            },
            Item::Assign {
                name: "o2".into(),
                kind: SymbolKind::Output,
                expr: Expr::Sum(vec![prod.clone(), Expr::var("v")]),
            },
        ],
    };
    let opt = optimize(&seq, &Assumptions::new()).unwrap();
    assert_eq!(opt.temporary_count(), 1);
    let (name, _, expr) = opt.assigns().next().unwrap();
    assert_eq!(name, "var0001");
    assert!(exprs_equal(expr, &prod));
    assert!(opt.op_count() < seq.op_count());

    let env: HashMap<String, f64> =
        [("x", 2.0), ("y", 3.0), ("u", 4.0), ("v", 5.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
    let out = interpret(&opt, &env).unwrap();
    assert_eq!(out["o1"], 10.0);
    assert_eq!(out["o2"], 11.0);
}

#[test]
fn dead_assignments_are_removed() {
    let seq = ExprSequence {
        items: vec![
            Item::Assign {
                name: "unused".into(),
                kind: SymbolKind::Temporary,
                expr: Expr::Sum(vec![Expr::var("x"), Expr::var("y")]),
            },
            Item::Assign { name: "o".into(), kind: SymbolKind::Output, expr: Expr::var("x") },
        ],
    };
    let opt = optimize(&seq, &Assumptions::new()).unwrap();
    assert_eq!(opt.assignment_count(), 1);
    assert!(opt.assigns().all(|(n, _, _)| n != "unused"));
}

#[test]
fn optimize_is_idempotent() {
    let p = fixture();
    for (name, binds) in [("cross", cross_binds()), ("jo", cross_binds())] {
        let res = eval_fixture(&p, name, binds, GenOptions::default());
        let a = Assumptions::new();
        let once = optimize(&res.seq, &a).unwrap();
        let twice = optimize(&once, &a).unwrap();
        assert_eq!(once, twice);
    }
}

#[test]
fn emit_renders_both_dialects() {
    let p = fixture();
    let res = eval_fixture(&p, "cross", cross_binds(), GenOptions::default());
    let opt = optimize(&res.seq, &Assumptions::new()).unwrap();

    let neutral = emit(&opt, &Dialect::neutral()).unwrap();
    assert!(neutral.contains("wz = "));
    assert!(!neutral.contains('<') && !neutral.contains('>'));
    assert!(!neutral.contains(';'));

    let clike = emit(&opt, &Dialect::c_like()).unwrap();
    for line in clike.lines() {
        assert!(line.ends_with(';'), "{line}");
    }
    // Outputs assign to existing variables; no declaration.
    assert!(clike.contains("wz = "));
    assert!(!clike.contains("double wz"));

    // Temporaries are declared.
    let raw = emit(&res.seq, &Dialect::c_like()).unwrap();
    assert!(raw.contains("double var1 = "));
    assert!(raw.contains("double u1 = u.x;"));
}

#[test]
fn emit_maps_functions_and_powers() {
    let seq = ExprSequence {
        items: vec![Item::Assign {
            name: "o".into(),
            kind: SymbolKind::Output,
            expr: Expr::Sum(vec![
                Expr::Func(crate::symbolic::Fn1::Sqrt, Box::new(Expr::var("x"))),
                Expr::Pow(Box::new(Expr::var("y")), 3),
            ]),
        }],
    };
    let neutral = emit(&seq, &Dialect::neutral()).unwrap();
    assert!(neutral.contains("sqrt(x)"), "{neutral}");
    assert!(neutral.contains("y^3"), "{neutral}");
    let clike = emit(&seq, &Dialect::c_like()).unwrap();
    assert!(clike.contains("Math.Sqrt(x)"), "{clike}");
    assert!(clike.contains("Math.Pow(y, 3)"), "{clike}");
}

#[test]
fn run_macro_numeric_handles_every_op_shape() {
    let p = fixture();
    let ir = p.macro_ir("cross").unwrap();
    let e1 = |i: usize| {
        let mut c = vec![0.0; 8];
        c[1 << i] = 1.0;
        c
    };
    let out = run_macro_numeric(ir, &[e1(0), e1(1)], &HashMap::new()).unwrap();
    assert_eq!(out[&("w".to_string(), 4)], 1.0);
    assert_eq!(out[&("w".to_string(), 1)], 0.0);
}

#[test]
fn binds_reject_unknown_names_and_foreign_blades() {
    let p = fixture();
    let ir = p.macro_ir("cross").unwrap().clone();
    let err = evaluate_macro(
        &p,
        &ir,
        &BindingPoint::bare(
            "cross",
            vec![BindSpec::Coeff { mv: "nope".into(), blade: "e1".into(), target: "<x>".into() }],
        ),
        GenOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::MalformedBinding(_)), "{err}");

    let err = evaluate_macro(
        &p,
        &ir,
        &BindingPoint::bare(
            "cross",
            vec![BindSpec::Coeff { mv: "u".into(), blade: "e1^e2".into(), target: "<x>".into() }],
        ),
        GenOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::BladeOutsideClass(_)), "{err}");
}

#[test]
fn non_variable_output_targets_are_rejected() {
    let p = fixture();
    let ir = p.macro_ir("cross").unwrap().clone();
    let mut binds = cross_binds();
    binds.push(BindSpec::Coeff {
        mv: "w".into(),
        blade: "e1".into(),
        target: "1 + 2".into(),
    });
    let err = evaluate_macro(
        &p,
        &ir,
        &BindingPoint::bare("cross", binds),
        GenOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::MalformedBinding(_)), "{err}");
}
