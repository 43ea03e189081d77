//! Binding-point extraction from target sources and in-place
//! splicing of generated code.
//!
//! A region opens with `// GMac : <macro>` (or `#region GMac :
//! <macro>` in C#-style sources), carries `// GMac.Bind(...)` and
//! `// GMac.AssumeMin/Max(...)` directive lines, and closes with
//! `// GMac end` (or `#endregion`). Generated code lives between
//! sentinel comments inside the region and is replaced wholesale on
//! the next run, so splicing is idempotent.

use super::{BindSpec, BindingPoint, Span};
use crate::error::Diagnostic;
use crate::symbolic::{parse_expr, simplify, Assumptions, Expr, Num};

pub const SENTINEL_OPEN: &str = "// <auto-generated by gamacro>";
pub const SENTINEL_CLOSE: &str = "// </auto-generated>";

struct Line<'a> {
    /// Byte offset of the line start.
    start: usize,
    /// Just past the trailing newline (or EOF).
    end: usize,
    text: &'a str,
    /// 1-based.
    number: usize,
}

fn lines(src: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut number = 1;
    while start < src.len() {
        let rest = &src[start..];
        let (text, end) = match rest.find('\n') {
            Some(i) => (&rest[..i], start + i + 1),
            None => (rest, src.len()),
        };
        out.push(Line { start, end, text, number });
        start = end;
        number += 1;
    }
    out
}

/// Splits a directive argument list on top-level commas, unquoting
/// double-quoted strings.
fn parse_args(s: &str) -> Option<Vec<String>> {
    let mut args = Vec::new();
    let mut cur = String::new();
    let mut in_str = false;
    let mut seen_any = false;
    for c in s.chars() {
        if in_str {
            if c == '"' {
                in_str = false;
            } else {
                cur.push(c);
            }
            continue;
        }
        match c {
            '"' => {
                in_str = true;
                seen_any = true;
            }
            ',' => {
                args.push(cur.trim().to_string());
                cur.clear();
                seen_any = true;
            }
            _ => cur.push(c),
        }
    }
    if in_str {
        return None;
    }
    if seen_any || !cur.trim().is_empty() {
        args.push(cur.trim().to_string());
    }
    Some(args)
}

fn parse_const(s: &str) -> Option<Num> {
    let e = parse_expr(s).ok()?;
    match simplify(&e, &Assumptions::new()).ok()? {
        Expr::Const(n) => Some(n),
        _ => None,
    }
}

/// The text inside the outermost parens of a directive, if balanced.
fn paren_body(s: &str) -> Option<&str> {
    let open = s.find('(')?;
    let close = s.rfind(')')?;
    if close <= open {
        return None;
    }
    Some(&s[open + 1..close])
}

enum Marker<'a> {
    Open(&'a str),
    Close,
    Bind(&'a str),
    AssumeMin(&'a str),
    AssumeMax(&'a str),
    SentinelOpen,
    SentinelClose,
    None,
}

fn classify(text: &str) -> Marker<'_> {
    let t = text.trim_start();
    if t == SENTINEL_OPEN {
        return Marker::SentinelOpen;
    }
    if t == SENTINEL_CLOSE {
        return Marker::SentinelClose;
    }
    for open in ["// GMac :", "#region GMac :"] {
        if let Some(rest) = t.strip_prefix(open) {
            return Marker::Open(rest.trim());
        }
    }
    if t == "// GMac end" || t == "#endregion" || t.starts_with("#endregion ") {
        return Marker::Close;
    }
    if let Some(rest) = t.strip_prefix("// GMac.Bind") {
        return Marker::Bind(rest);
    }
    if let Some(rest) = t.strip_prefix("// GMac.AssumeMin") {
        return Marker::AssumeMin(rest);
    }
    if let Some(rest) = t.strip_prefix("// GMac.AssumeMax") {
        return Marker::AssumeMax(rest);
    }
    Marker::None
}

fn indent_of(text: &str) -> String {
    text[..text.len() - text.trim_start().len()].to_string()
}

/// Extracts every binding region from `src`. Malformed directives and
/// structural problems are reported as diagnostics against `file`;
/// a region with errors is dropped rather than half-applied.
pub fn scan_source(src: &str, file: &str) -> (Vec<BindingPoint>, Vec<Diagnostic>) {
    let mut points = Vec::new();
    let mut diags = Vec::new();
    let mut open: Option<(BindingPoint, bool)> = None;
    let mut pending_sentinel: Option<usize> = None;

    let bad = |line: usize, code: &str, msg: String| Diagnostic::new(file, line, 1, code, msg);

    for line in lines(src) {
        match classify(line.text) {
            Marker::Open(name) => {
                if open.is_some() {
                    diags.push(bad(
                        line.number,
                        "overlapping-regions",
                        format!("binding region `{name}` opens inside another region"),
                    ));
                    continue;
                }
                if name.is_empty() {
                    diags.push(bad(
                        line.number,
                        "malformed-binding",
                        "binding region is missing a macro name".into(),
                    ));
                    continue;
                }
                let mut bp = BindingPoint::bare(name, Vec::new());
                bp.line = line.number;
                bp.span = Span {
                    start: line.start,
                    end: 0,
                    insert_at: 0,
                    generated: None,
                    indent: indent_of(line.text),
                };
                open = Some((bp, false));
            }
            Marker::Close => {
                let Some((mut bp, broken)) = open.take() else {
                    diags.push(bad(
                        line.number,
                        "malformed-binding",
                        "region close marker without an open region".into(),
                    ));
                    continue;
                };
                if pending_sentinel.take().is_some() {
                    diags.push(bad(
                        line.number,
                        "malformed-binding",
                        "generated block is missing its closing sentinel".into(),
                    ));
                    continue;
                }
                bp.span.insert_at = line.start;
                bp.span.end = line.end;
                if !broken {
                    points.push(bp);
                }
            }
            Marker::Bind(rest) => {
                let Some((bp, broken)) = open.as_mut() else {
                    diags.push(bad(
                        line.number,
                        "malformed-binding",
                        "Bind directive outside a binding region".into(),
                    ));
                    continue;
                };
                match paren_body(rest).and_then(parse_args) {
                    Some(args) if args.len() == 2 => {
                        let (mv, blade) = match args[0].split_once('.') {
                            Some((m, b)) if !m.is_empty() && !b.is_empty() => {
                                (m.to_string(), b.to_string())
                            }
                            _ => {
                                diags.push(bad(
                                    line.number,
                                    "malformed-binding",
                                    format!("`{}` is not of the form `mv.blade`", args[0]),
                                ));
                                *broken = true;
                                continue;
                            }
                        };
                        bp.binds.push(BindSpec::Coeff { mv, blade, target: args[1].clone() });
                    }
                    Some(args) if args.len() == 3 => {
                        bp.binds.push(BindSpec::Class {
                            mv: args[0].clone(),
                            pattern: args[1].clone(),
                            object: args[2].clone(),
                        });
                    }
                    _ => {
                        diags.push(bad(
                            line.number,
                            "malformed-binding",
                            format!("cannot parse Bind directive `{}`", line.text.trim()),
                        ));
                        *broken = true;
                    }
                }
            }
            m @ (Marker::AssumeMin(_) | Marker::AssumeMax(_)) => {
                let (rest, is_min) = match m {
                    Marker::AssumeMin(r) => (r, true),
                    Marker::AssumeMax(r) => (r, false),
                    _ => unreachable!(),
                };
                let Some((bp, broken)) = open.as_mut() else {
                    diags.push(bad(
                        line.number,
                        "malformed-binding",
                        "Assume directive outside a binding region".into(),
                    ));
                    continue;
                };
                let parsed = paren_body(rest).and_then(parse_args).and_then(|args| {
                    if args.len() != 2 || args[0].is_empty() {
                        return None;
                    }
                    parse_const(&args[1]).map(|n| (args[0].clone(), n))
                });
                match parsed {
                    Some((var, n)) => {
                        let key = format!("<{}>", super::strip_brackets(&var));
                        if is_min {
                            bp.assume_min.push((key, n));
                        } else {
                            bp.assume_max.push((key, n));
                        }
                    }
                    None => {
                        diags.push(bad(
                            line.number,
                            "malformed-binding",
                            format!("cannot parse Assume directive `{}`", line.text.trim()),
                        ));
                        *broken = true;
                    }
                }
            }
            Marker::SentinelOpen => {
                if let Some((bp, _)) = open.as_mut() {
                    if bp.span.generated.is_some() {
                        diags.push(bad(
                            line.number,
                            "malformed-binding",
                            "second generated block in one region".into(),
                        ));
                    } else {
                        pending_sentinel = Some(line.start);
                    }
                }
            }
            Marker::SentinelClose => {
                if let Some(start) = pending_sentinel.take() {
                    if let Some((bp, _)) = open.as_mut() {
                        bp.span.generated = Some((start, line.end));
                    }
                }
            }
            Marker::None => {}
        }
    }
    if let Some((bp, _)) = open {
        diags.push(bad(
            bp.line,
            "unclosed-region",
            format!("binding region `{}` is never closed", bp.macro_name),
        ));
    }
    (points, diags)
}

/// Replaces the binding point's generated block (or inserts one just
/// above the close marker) with `generated`, indenting each line to
/// match the region. Returns the new file contents.
pub fn splice(src: &str, bp: &BindingPoint, generated: &str) -> String {
    let indent = &bp.span.indent;
    let mut block = String::new();
    block.push_str(indent);
    block.push_str(SENTINEL_OPEN);
    block.push('\n');
    for line in generated.lines() {
        if line.is_empty() {
            block.push('\n');
        } else {
            block.push_str(indent);
            block.push_str(line);
            block.push('\n');
        }
    }
    block.push_str(indent);
    block.push_str(SENTINEL_CLOSE);
    block.push('\n');

    let (from, to) = match bp.span.generated {
        Some((s, e)) => (s, e),
        None => (bp.span.insert_at, bp.span.insert_at),
    };
    let mut out = String::with_capacity(src.len() + block.len());
    out.push_str(&src[..from]);
    out.push_str(&block);
    out.push_str(&src[to..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"fn shade() {
    let mut wx = 0.0; let mut wy = 0.0; let mut wz = 0.0;
    // GMac : cross
    // GMac.Bind("u.e1", "<ux>")
    // GMac.Bind("u.e2", "<uy>")
    // GMac.Bind("v", "VecBinding", "v")
    // GMac.AssumeMin("ux", -100)
    // GMac.AssumeMax("ux", "100")
    // GMac end
}
"#;

    #[test]
    fn scans_directives_and_span() {
        let (points, diags) = scan_source(SAMPLE, "shade.rs");
        assert!(diags.is_empty(), "{diags:?}");
        assert_eq!(points.len(), 1);
        let bp = &points[0];
        assert_eq!(bp.macro_name, "cross");
        assert_eq!(bp.line, 3);
        assert_eq!(bp.binds.len(), 3);
        assert_eq!(
            bp.binds[0],
            BindSpec::Coeff { mv: "u".into(), blade: "e1".into(), target: "<ux>".into() }
        );
        assert_eq!(
            bp.binds[2],
            BindSpec::Class { mv: "v".into(), pattern: "VecBinding".into(), object: "v".into() }
        );
        assert_eq!(bp.assume_min.len(), 1);
        assert_eq!(bp.assume_min[0].0, "<ux>");
        assert_eq!(bp.assume_max[0].0, "<ux>");
        assert_eq!(bp.span.indent, "    ");
        assert!(SAMPLE[bp.span.insert_at..].starts_with("    // GMac end"));
    }

    #[test]
    fn splice_is_idempotent() {
        let (points, _) = scan_source(SAMPLE, "shade.rs");
        let once = splice(SAMPLE, &points[0], "wx = 1.0;\nwy = 2.0;\n");
        assert!(once.contains("    // <auto-generated by gamacro>\n    wx = 1.0;\n"));

        let (points2, diags2) = scan_source(&once, "shade.rs");
        assert!(diags2.is_empty(), "{diags2:?}");
        assert_eq!(points2.len(), 1);
        assert!(points2[0].span.generated.is_some());
        let twice = splice(&once, &points2[0], "wx = 1.0;\nwy = 2.0;\n");
        assert_eq!(once, twice);

        // Regenerating with different content replaces the block.
        let third = splice(&once, &points2[0], "wx = 9.0;\n");
        assert!(third.contains("wx = 9.0;"));
        assert!(!third.contains("wx = 1.0;"));
    }

    #[test]
    fn csharp_region_form() {
        let src = "#region GMac : twist\n// GMac.Bind(\"p.e1\", \"<p.x>\")\n#endregion\n";
        let (points, diags) = scan_source(src, "a.cs");
        assert!(diags.is_empty(), "{diags:?}");
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].macro_name, "twist");
    }

    #[test]
    fn malformed_directive_drops_region() {
        let src = "// GMac : cross\n// GMac.Bind(oops\n// GMac end\n";
        let (points, diags) = scan_source(src, "x.rs");
        assert!(points.is_empty());
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, "malformed-binding");
    }

    #[test]
    fn unclosed_region_reported() {
        let src = "// GMac : cross\n// GMac.Bind(\"u.e1\", \"<x>\")\n";
        let (points, diags) = scan_source(src, "x.rs");
        assert!(points.is_empty());
        assert_eq!(diags[0].code, "unclosed-region");
    }

    #[test]
    fn overlapping_regions_reported() {
        let src = "// GMac : a\n// GMac : b\n// GMac end\n";
        let (points, diags) = scan_source(src, "x.rs");
        assert_eq!(points.len(), 1);
        assert_eq!(diags[0].code, "overlapping-regions");
    }
}
