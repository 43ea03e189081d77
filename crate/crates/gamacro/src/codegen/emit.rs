//! Turns an assignment sequence into target-language text.

use super::{strip_brackets, ExprSequence, Item, SymbolKind};
use crate::error::Error;
use crate::symbolic::{write_expr, Expr, PowStyle, PrintOpts};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DialectKind {
    /// `name = expr` lines, caret powers, DSL function names.
    Neutral,
    /// `double name = expr;` declarations, `Math.*` calls.
    CLike,
}

/// An output dialect: declaration syntax plus a scalar function map.
pub struct Dialect {
    pub kind: DialectKind,
    pub name: &'static str,
    fn_map: HashMap<&'static str, &'static str>,
}

impl Dialect {
    pub fn neutral() -> Dialect {
        Dialect { kind: DialectKind::Neutral, name: "neutral", fn_map: HashMap::new() }
    }

    pub fn c_like() -> Dialect {
        let fn_map = [
            ("sin", "Math.Sin"),
            ("cos", "Math.Cos"),
            ("tan", "Math.Tan"),
            ("sqrt", "Math.Sqrt"),
            ("exp", "Math.Exp"),
            ("ln", "Math.Log"),
            ("atan", "Math.Atan"),
            ("cosh", "Math.Cosh"),
            ("sinh", "Math.Sinh"),
            ("abs", "Math.Abs"),
            ("pow", "Math.Pow"),
        ]
        .into_iter()
        .collect();
        Dialect { kind: DialectKind::CLike, name: "c-like", fn_map }
    }

    pub fn named(name: &str) -> Result<Dialect, Error> {
        match name {
            "neutral" => Ok(Dialect::neutral()),
            "c-like" | "clike" | "csharp" => Ok(Dialect::c_like()),
            other => Err(Error::Other(format!(
                "unknown dialect `{other}` (expected `neutral` or `c-like`)"
            ))),
        }
    }
}

/// Strips target-variable brackets; the c-like dialect also spells
/// the `pi` builtin.
fn rename_vars(e: &Expr, kind: DialectKind) -> Expr {
    match e {
        Expr::Var(v) => {
            if v.starts_with('<') {
                Expr::var(strip_brackets(v))
            } else if v == "pi" && kind == DialectKind::CLike {
                Expr::var("Math.PI")
            } else {
                e.clone()
            }
        }
        Expr::Const(_) => e.clone(),
        Expr::Func(f, x) => Expr::Func(*f, Box::new(rename_vars(x, kind))),
        Expr::Pow(b, n) => Expr::Pow(Box::new(rename_vars(b, kind)), *n),
        Expr::Prod(fs) => Expr::Prod(fs.iter().map(|f| rename_vars(f, kind)).collect()),
        Expr::Div(n, d) => Expr::Div(
            Box::new(rename_vars(n, kind)),
            Box::new(rename_vars(d, kind)),
        ),
        Expr::Sum(ts) => Expr::Sum(ts.iter().map(|t| rename_vars(t, kind)).collect()),
        Expr::Neg(x) => Expr::Neg(Box::new(rename_vars(x, kind))),
    }
}

/// Renders the sequence as one line per item, each ending in `\n`.
/// Errors only when the dialect lacks a needed function name.
pub fn emit(seq: &ExprSequence, d: &Dialect) -> Result<String, Error> {
    let lookup = |f: &str| d.fn_map.get(f).map(|s| s.to_string());
    let opts = match d.kind {
        DialectKind::Neutral => PrintOpts { pow: PowStyle::Caret, func_name: None },
        DialectKind::CLike => PrintOpts { pow: PowStyle::Call, func_name: Some(&lookup) },
    };
    let mut out = String::new();
    for it in &seq.items {
        match it {
            Item::Verbatim(text) => {
                out.push_str(text);
                out.push('\n');
            }
            Item::Assign { name, kind, expr } => {
                let rhs = write_expr(&rename_vars(expr, d.kind), &opts)?;
                match d.kind {
                    DialectKind::Neutral => {
                        out.push_str(&format!("{name} = {rhs}\n"));
                    }
                    DialectKind::CLike => {
                        let decl = match kind {
                            SymbolKind::Output => "",
                            SymbolKind::InputAlias
                            | SymbolKind::Temporary
                            | SymbolKind::Ref => "double ",
                        };
                        out.push_str(&format!("{decl}{name} = {rhs};\n"));
                    }
                }
            }
        }
    }
    Ok(out)
}
