//! Recursive-descent parser for the seven `.gmac` file roles.
//!
//! Scalar expressions are not tokenized here: the scanner slices the
//! raw text up to the next separator at bracket depth zero and hands
//! the slice to the scalar expression parser. Parse errors do not
//! abort a file; the scanner recovers at the next `define` keyword (or
//! the next statement separator inside a macro) and keeps collecting
//! diagnostics.

use super::*;
use crate::blades::ProductKind;
use crate::error::Diagnostic;
use crate::symbolic::{parse_expr, simplify, Assumptions, Expr, Num};
use std::collections::BTreeSet;

const UNARY_KEYWORDS: [&str; 13] = [
    "grade_inv",
    "cliff_conj",
    "reverse",
    "norm",
    "norm2",
    "quasi_norm",
    "quasi_norm2",
    "scale",
    "div_by_scalar",
    "diff",
    "cast_to_grades",
    "cast_to_subspace",
    "cast_to_class",
];

struct Scanner<'a> {
    src: &'a str,
    b: &'a [u8],
    pos: usize,
    role: FileRole,
}

impl<'a> Scanner<'a> {
    fn new(src: &'a str, role: FileRole) -> Scanner<'a> {
        Scanner { src, b: src.as_bytes(), pos: 0, role }
    }

    fn loc_at(&self, pos: usize) -> Loc {
        let pos = pos.min(self.b.len());
        let mut line = 1u32;
        let mut col = 1u32;
        for &c in &self.b[..pos] {
            if c == b'\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        Loc { line, col }
    }

    fn loc(&self) -> Loc {
        self.loc_at(self.pos)
    }

    fn diag(&self, code: &str, msg: impl Into<String>) -> Diagnostic {
        self.loc().diagnostic(self.role, code, msg)
    }

    fn diag_at(&self, pos: usize, code: &str, msg: impl Into<String>) -> Diagnostic {
        self.loc_at(pos).diagnostic(self.role, code, msg)
    }

    fn skip_trivia(&mut self) {
        loop {
            while self.pos < self.b.len() && self.b[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.b[self.pos..].starts_with(b"//") {
                while self.pos < self.b.len() && self.b[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            return;
        }
    }

    /// Skips spaces and tabs only; stops at line ends.
    fn skip_inline(&mut self) {
        while self.pos < self.b.len() && (self.b[self.pos] == b' ' || self.b[self.pos] == b'\t') {
            self.pos += 1;
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_trivia();
        self.pos >= self.b.len()
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_trivia();
        self.b.get(self.pos).copied()
    }

    fn peek_inline(&mut self) -> Option<u8> {
        self.skip_inline();
        self.b.get(self.pos).copied()
    }

    fn try_punct(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: u8) -> Result<(), Diagnostic> {
        if self.try_punct(c) {
            Ok(())
        } else {
            Err(self.diag("syntax", format!("expected `{}`", c as char)))
        }
    }

    fn word_end(&self, start: usize) -> usize {
        let mut i = start;
        while i < self.b.len()
            && (self.b[i].is_ascii_alphanumeric() || self.b[i] == b'_')
        {
            i += 1;
        }
        i
    }

    fn peek_word(&mut self) -> Option<&'a str> {
        self.skip_trivia();
        let c = *self.b.get(self.pos)?;
        if !(c.is_ascii_alphabetic() || c == b'_') {
            return None;
        }
        Some(&self.src[self.pos..self.word_end(self.pos)])
    }

    fn peek_word_inline(&mut self) -> Option<&'a str> {
        self.skip_inline();
        let c = *self.b.get(self.pos)?;
        if !(c.is_ascii_alphabetic() || c == b'_') {
            return None;
        }
        Some(&self.src[self.pos..self.word_end(self.pos)])
    }

    fn try_keyword(&mut self, kw: &str) -> bool {
        if self.peek_word() == Some(kw) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), Diagnostic> {
        if self.try_keyword(kw) {
            Ok(())
        } else {
            Err(self.diag("syntax", format!("expected `{kw}`")))
        }
    }

    fn ident(&mut self) -> Result<String, Diagnostic> {
        match self.peek_word() {
            Some(w) => {
                self.pos += w.len();
                Ok(w.to_string())
            }
            None => Err(self.diag("syntax", "expected an identifier")),
        }
    }

    /// A basis blade name: `1`, a vector name, or caret-joined vector
    /// names.
    fn blade_token(&mut self) -> Result<String, Diagnostic> {
        self.skip_trivia();
        if self.b.get(self.pos) == Some(&b'1')
            && !self
                .b
                .get(self.pos + 1)
                .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
            return Ok("1".to_string());
        }
        let mut name = self.ident()?;
        while self.peek_inline() == Some(b'^') {
            self.pos += 1;
            name.push('^');
            name.push_str(&self.ident()?);
        }
        Ok(name)
    }

    /// `<raw text>` reference; returns the trimmed inner text.
    fn angle_ref(&mut self) -> Result<String, Diagnostic> {
        self.expect_punct(b'<')?;
        let start = self.pos;
        while self.pos < self.b.len() && self.b[self.pos] != b'>' && self.b[self.pos] != b'\n' {
            self.pos += 1;
        }
        if self.b.get(self.pos) != Some(&b'>') {
            return Err(self.diag_at(start, "syntax", "unterminated `<...>` reference"));
        }
        let inner = self.src[start..self.pos].trim().to_string();
        self.pos += 1;
        if inner.is_empty() {
            return Err(self.diag_at(start, "syntax", "empty `<...>` reference"));
        }
        Ok(inner)
    }

    /// Slices raw text until one of `stops` at bracket depth zero.
    fn slice_until(&mut self, stops: &[u8]) -> &'a str {
        self.skip_trivia();
        let start = self.pos;
        let mut depth = 0i32;
        while self.pos < self.b.len() {
            let c = self.b[self.pos];
            match c {
                b'(' | b'[' | b'{' => depth += 1,
                b')' | b']' | b'}' => {
                    if depth == 0 && stops.contains(&c) {
                        break;
                    }
                    depth -= 1;
                }
                _ => {
                    if depth == 0 && stops.contains(&c) {
                        break;
                    }
                }
            }
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn expr_until(&mut self, stops: &[u8]) -> Result<Expr, Diagnostic> {
        let at = self.pos;
        let text = self.slice_until(stops);
        if text.trim().is_empty() {
            return Err(self.diag_at(at, "syntax", "expected a scalar expression"));
        }
        parse_expr(text)
            .map_err(|e| self.diag_at(at, "scalar-expr", format!("{e} in `{}`", text.trim())))
    }

    fn const_until(&mut self, stops: &[u8]) -> Result<Num, Diagnostic> {
        let at = self.pos;
        let e = self.expr_until(stops)?;
        let folded = simplify(&e, &Assumptions::default())
            .map_err(|err| self.diag_at(at, "scalar-expr", err.to_string()))?;
        folded
            .as_const()
            .ok_or_else(|| self.diag_at(at, "scalar-expr", "expected a constant scalar value"))
    }

    /// `[[a, b], [c, d]]`, with `{}` row/list delimiters also accepted.
    fn matrix(&mut self) -> Result<Vec<Vec<Num>>, Diagnostic> {
        let close = self.open_bracket()?;
        let mut rows = Vec::new();
        loop {
            self.skip_trivia();
            if self.try_punct(close) {
                break;
            }
            rows.push(self.matrix_row()?);
            if self.try_punct(b',') || self.try_punct(b';') {
                continue;
            }
            self.expect_punct(close)?;
            break;
        }
        Ok(rows)
    }

    fn open_bracket(&mut self) -> Result<u8, Diagnostic> {
        match self.peek() {
            Some(b'[') => {
                self.pos += 1;
                Ok(b']')
            }
            Some(b'{') => {
                self.pos += 1;
                Ok(b'}')
            }
            _ => Err(self.diag("syntax", "expected `[` or `{`")),
        }
    }

    fn matrix_row(&mut self) -> Result<Vec<Num>, Diagnostic> {
        let close = self.open_bracket()?;
        let mut row = Vec::new();
        loop {
            self.skip_trivia();
            if self.try_punct(close) {
                break;
            }
            row.push(self.const_until(&[b',', b';', close])?);
            if self.try_punct(b',') || self.try_punct(b';') {
                continue;
            }
            self.expect_punct(close)?;
            break;
        }
        Ok(row)
    }

    /// `{ blade : expr; ... }`
    fn coeff_list(&mut self) -> Result<Vec<(String, Expr)>, Diagnostic> {
        self.expect_punct(b'{')?;
        let mut items = Vec::new();
        loop {
            self.skip_trivia();
            if self.try_punct(b'}') {
                break;
            }
            let blade = self.blade_token()?;
            self.expect_punct(b':')?;
            items.push((blade, self.expr_until(&[b';', b',', b'}'])?));
            if self.try_punct(b';') || self.try_punct(b',') {
                continue;
            }
            self.expect_punct(b'}')?;
            break;
        }
        Ok(items)
    }

    /// Recovers to the next top-level `define`.
    fn recover_to_define(&mut self) {
        self.pos = (self.pos + 1).min(self.b.len());
        while self.pos < self.b.len() {
            if self.b[self.pos..].starts_with(b"define")
                && (self.pos == 0 || self.b[self.pos - 1].is_ascii_whitespace())
                && !self
                    .b
                    .get(self.pos + 6)
                    .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
            {
                return;
            }
            self.pos += 1;
        }
    }

    /// Recovers to just after the next `;` or line end.
    fn recover_to_separator(&mut self) {
        while self.pos < self.b.len() {
            let c = self.b[self.pos];
            self.pos += 1;
            if c == b';' || c == b'\n' {
                return;
            }
        }
    }
}

pub fn parse_project(files: &ProjectSources) -> Result<ProjectAst, Vec<Diagnostic>> {
    let mut ast = ProjectAst::default();
    let mut diags = Vec::new();

    parse_frames(files.get(FileRole::Frames), &mut ast, &mut diags);
    parse_transforms(files.get(FileRole::Transforms), &mut ast, &mut diags);
    parse_subspaces(files.get(FileRole::Subspaces), &mut ast, &mut diags);
    parse_classes(files.get(FileRole::Multivectors), &mut ast, &mut diags);
    parse_constants(files.get(FileRole::Constants), &mut ast, &mut diags);
    parse_bindings(files.get(FileRole::Bindings), &mut ast, &mut diags);
    parse_macros(files.get(FileRole::Macros), &mut ast, &mut diags);
    check_duplicates(&ast, &mut diags);

    if diags.is_empty() {
        Ok(ast)
    } else {
        Err(diags)
    }
}

fn declaration_loop(
    src: &str,
    role: FileRole,
    diags: &mut Vec<Diagnostic>,
    mut one: impl FnMut(&mut Scanner) -> Result<(), Diagnostic>,
) {
    let mut s = Scanner::new(src, role);
    while !s.at_end() {
        if let Err(d) = one(&mut s) {
            diags.push(d);
            s.recover_to_define();
        }
    }
}

fn parse_frames(src: &str, ast: &mut ProjectAst, diags: &mut Vec<Diagnostic>) {
    declaration_loop(src, FileRole::Frames, diags, |s| {
        let loc = s.loc();
        s.expect_keyword("define")?;
        s.expect_keyword("frame")?;
        let name = s.ident()?;
        s.expect_keyword("as")?;
        s.expect_keyword("basis")?;
        s.expect_punct(b':')?;
        s.expect_punct(b'{')?;
        let mut basis = Vec::new();
        loop {
            s.skip_trivia();
            if s.try_punct(b'}') {
                break;
            }
            basis.push(s.ident()?);
            if s.try_punct(b',') || s.try_punct(b';') {
                continue;
            }
            s.expect_punct(b'}')?;
            break;
        }
        let def = if s.try_keyword("Euclidean") {
            FrameDef::Euclidean
        } else if s.try_keyword("subspace") {
            s.expect_keyword("of")?;
            FrameDef::SubspaceOf(s.ident()?)
        } else if s.try_keyword("orthogonalize") {
            FrameDef::Orthogonalize(s.ident()?)
        } else if s.try_keyword("IPM") {
            s.expect_punct(b'=')?;
            FrameDef::Ipm(s.matrix()?)
        } else if s.try_keyword("transform") {
            let source = s.ident()?;
            s.expect_keyword("by")?;
            s.expect_keyword("BCM")?;
            s.expect_punct(b'=')?;
            FrameDef::TransformBy { source, bcm: s.matrix()? }
        } else {
            return Err(s.diag("unknown-definition", "unknown frame definition form"));
        };
        s.expect_keyword("end")?;
        s.expect_keyword("frame")?;
        ast.frames.push(FrameDecl { name, basis, def, loc });
        Ok(())
    });
}

fn parse_transforms(src: &str, ast: &mut ProjectAst, diags: &mut Vec<Diagnostic>) {
    declaration_loop(src, FileRole::Transforms, diags, |s| {
        let loc = s.loc();
        s.expect_keyword("define")?;
        s.expect_keyword("transform")?;
        let name = s.ident()?;
        s.expect_punct(b':')?;
        let source = s.ident()?;
        s.expect_punct(b'-')?;
        s.expect_punct(b'>')?;
        let dest = s.ident()?;
        s.expect_keyword("as")?;
        let def = if s.try_keyword("identity") {
            TransformDef::Identity
        } else if s.try_keyword("alias") {
            s.expect_keyword("of")?;
            TransformDef::AliasOf(s.ident()?)
        } else if s.try_keyword("inverse") {
            if s.try_keyword("transpose") {
                s.expect_keyword("of")?;
                TransformDef::InverseTransposeOf(s.ident()?)
            } else {
                s.expect_keyword("of")?;
                TransformDef::InverseOf(s.ident()?)
            }
        } else if s.try_keyword("transpose") {
            s.expect_keyword("of")?;
            TransformDef::TransposeOf(s.ident()?)
        } else if s.try_keyword("outermorphism") {
            s.expect_keyword("using")?;
            match s.peek() {
                Some(b'[') | Some(b'{') => TransformDef::OutermorphismMatrix(s.matrix()?),
                _ => {
                    let frame = s.ident()?;
                    s.expect_punct(b'.')?;
                    s.expect_keyword("BCM")?;
                    TransformDef::OutermorphismBcm(frame)
                }
            }
        } else {
            return Err(s.diag("unknown-definition", "unknown transform definition form"));
        };
        s.expect_keyword("end")?;
        s.expect_keyword("transform")?;
        ast.transforms.push(TransformDecl { name, source, dest, def, loc });
        Ok(())
    });
}

fn parse_subspaces(src: &str, ast: &mut ProjectAst, diags: &mut Vec<Diagnostic>) {
    declaration_loop(src, FileRole::Subspaces, diags, |s| {
        let loc = s.loc();
        s.expect_keyword("define")?;
        s.expect_keyword("subspace")?;
        let frame = s.ident()?;
        s.expect_punct(b'.')?;
        let name = s.ident()?;
        s.expect_keyword("as")?;
        let def = if s.try_keyword("basis") {
            SubspaceDef::Basis(brace_name_list(s, |s| s.blade_token())?)
        } else if s.try_keyword("ga_span") {
            SubspaceDef::GaSpan(brace_name_list(s, |s| s.ident())?)
        } else {
            return Err(s.diag("unknown-definition", "unknown subspace definition form"));
        };
        s.expect_keyword("end")?;
        s.expect_keyword("subspace")?;
        ast.subspaces.push(SubspaceDecl { frame, name, def, loc });
        Ok(())
    });
}

fn brace_name_list(
    s: &mut Scanner,
    mut item: impl FnMut(&mut Scanner) -> Result<String, Diagnostic>,
) -> Result<Vec<String>, Diagnostic> {
    s.expect_punct(b'{')?;
    let mut names = Vec::new();
    loop {
        s.skip_trivia();
        if s.try_punct(b'}') {
            break;
        }
        names.push(item(s)?);
        if s.try_punct(b';') || s.try_punct(b',') {
            continue;
        }
        s.expect_punct(b'}')?;
        break;
    }
    Ok(names)
}

fn parse_classes(src: &str, ast: &mut ProjectAst, diags: &mut Vec<Diagnostic>) {
    declaration_loop(src, FileRole::Multivectors, diags, |s| {
        let loc = s.loc();
        s.expect_keyword("define")?;
        s.expect_keyword("multivector")?;
        s.expect_keyword("class")?;
        let frame = s.ident()?;
        s.expect_punct(b'.')?;
        let name = s.ident()?;
        s.expect_keyword("as")?;
        let mut subspaces = Vec::new();
        let mut pinned = Vec::new();
        loop {
            s.skip_trivia();
            if s.peek_word() == Some("end") {
                break;
            }
            let token = s.blade_token()?;
            if s.peek_inline() == Some(b':') {
                s.pos += 1;
                // Class items end at the separator or the line end.
                pinned.push((token, s.expr_until(&[b';', b',', b'\n', b'\r'])?));
            } else {
                subspaces.push(token);
            }
            if s.try_punct(b';') || s.try_punct(b',') {
                continue;
            }
        }
        s.expect_keyword("end")?;
        s.expect_keyword("multivector")?;
        s.expect_keyword("class")?;
        ast.classes.push(ClassDecl { frame, name, subspaces, pinned, loc });
        Ok(())
    });
}

fn parse_constants(src: &str, ast: &mut ProjectAst, diags: &mut Vec<Diagnostic>) {
    declaration_loop(src, FileRole::Constants, diags, |s| {
        let loc = s.loc();
        s.expect_keyword("define")?;
        s.expect_keyword("constant")?;
        let frame = s.ident()?;
        s.expect_punct(b'.')?;
        let name = s.ident()?;
        s.expect_keyword("as")?;
        s.expect_keyword("multivector")?;
        let coeffs = s.coeff_list()?;
        s.expect_keyword("end")?;
        s.expect_keyword("constant")?;
        ast.constants.push(ConstantDecl { frame, name, coeffs, loc });
        Ok(())
    });
}

fn parse_bindings(src: &str, ast: &mut ProjectAst, diags: &mut Vec<Diagnostic>) {
    declaration_loop(src, FileRole::Bindings, diags, |s| {
        let loc = s.loc();
        s.expect_keyword("define")?;
        s.expect_keyword("binding")?;
        let name = s.ident()?;
        s.expect_keyword("as")?;
        s.expect_keyword("use")?;
        s.expect_keyword("frame")?;
        let frame = s.ident()?;
        s.expect_keyword("bind")?;
        let bind = s.coeff_list()?;
        let mut min = Vec::new();
        let mut max = Vec::new();
        loop {
            if s.try_keyword("min") {
                min = limit_list(s)?;
            } else if s.try_keyword("max") {
                max = limit_list(s)?;
            } else {
                break;
            }
        }
        s.expect_keyword("end")?;
        s.expect_keyword("binding")?;
        ast.bindings.push(BindingDecl { name, frame, bind, min, max, loc });
        Ok(())
    });
}

/// `{ var : constant; ... }` where var is an identifier or `<path>`.
fn limit_list(s: &mut Scanner) -> Result<Vec<(String, Num)>, Diagnostic> {
    s.expect_punct(b'{')?;
    let mut items = Vec::new();
    loop {
        s.skip_trivia();
        if s.try_punct(b'}') {
            break;
        }
        let var = if s.peek() == Some(b'<') {
            format!("<{}>", s.angle_ref()?)
        } else {
            s.ident()?
        };
        s.expect_punct(b':')?;
        items.push((var, s.const_until(&[b';', b',', b'}'])?));
        if s.try_punct(b';') || s.try_punct(b',') {
            continue;
        }
        s.expect_punct(b'}')?;
        break;
    }
    Ok(items)
}

fn parse_macros(src: &str, ast: &mut ProjectAst, diags: &mut Vec<Diagnostic>) {
    let mut s = Scanner::new(src, FileRole::Macros);
    while !s.at_end() {
        match parse_macro_decl(&mut s, diags) {
            Ok(m) => ast.macros.push(m),
            Err(d) => {
                diags.push(d);
                s.recover_to_define();
            }
        }
    }
}

fn parse_macro_decl(
    s: &mut Scanner,
    diags: &mut Vec<Diagnostic>,
) -> Result<MacroDecl, Diagnostic> {
    let loc = s.loc();
    s.expect_keyword("define")?;
    s.expect_keyword("macro")?;
    let name = s.ident()?;
    s.expect_keyword("as")?;
    s.expect_keyword("inputs")?;
    s.expect_punct(b':')?;
    let inputs = io_list(s)?;
    s.expect_keyword("outputs")?;
    s.expect_punct(b':')?;
    let outputs = io_list(s)?;
    s.expect_keyword("performs")?;
    s.expect_punct(b':')?;
    let mut statements = Vec::new();
    loop {
        s.skip_trivia();
        if s.peek_word() == Some("end") || s.pos >= s.b.len() {
            break;
        }
        match statement(s) {
            Ok(st) => {
                statements.push(st);
                let _ = s.try_punct(b';');
            }
            Err(d) => {
                diags.push(d);
                s.recover_to_separator();
            }
        }
    }
    s.expect_keyword("end")?;
    s.expect_keyword("macro")?;
    Ok(MacroDecl { name, inputs, outputs, statements, loc })
}

/// `{ name : frame.class; ... }`, also accepting `as` for `:`.
fn io_list(s: &mut Scanner) -> Result<Vec<(String, ClassRef)>, Diagnostic> {
    s.expect_punct(b'{')?;
    let mut items = Vec::new();
    loop {
        s.skip_trivia();
        if s.try_punct(b'}') {
            break;
        }
        let name = s.ident()?;
        if !s.try_punct(b':') {
            s.expect_keyword("as")?;
        }
        let frame = s.ident()?;
        s.expect_punct(b'.')?;
        let class = s.ident()?;
        items.push((name, ClassRef { frame, class }));
        if s.try_punct(b';') || s.try_punct(b',') {
            continue;
        }
        s.expect_punct(b'}')?;
        break;
    }
    Ok(items)
}

fn operand(s: &mut Scanner) -> Result<Operand, Diagnostic> {
    let first = s.ident()?;
    if s.peek_inline() == Some(b'.') {
        s.pos += 1;
        let name = s.ident()?;
        Ok(Operand::Constant { frame: first, name })
    } else {
        Ok(Operand::Register(first))
    }
}

/// One macro statement, excluding its separator.
fn statement(s: &mut Scanner) -> Result<Statement, Diagnostic> {
    let loc = s.loc();
    if s.try_keyword("call") {
        let name = s.ident()?;
        s.expect_punct(b'{')?;
        let mut bindings = Vec::new();
        loop {
            s.skip_trivia();
            if s.try_punct(b'}') {
                break;
            }
            let callee = s.ident()?;
            s.expect_punct(b':')?;
            let caller = s.ident()?;
            bindings.push((callee, caller));
            if s.try_punct(b';') || s.try_punct(b',') {
                continue;
            }
            s.expect_punct(b'}')?;
            break;
        }
        return Ok(Statement::Call { name, bindings, loc });
    }
    if s.try_keyword("output") {
        s.expect_punct(b'{')?;
        let start = s.pos;
        let mut depth = 1i32;
        while s.pos < s.b.len() {
            match s.b[s.pos] {
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                }
                _ => {}
            }
            s.pos += 1;
        }
        if depth != 0 {
            return Err(s.diag_at(start, "malformed-output", "unbalanced `output { ... }` block"));
        }
        let payload = s.src[start..s.pos].to_string();
        s.pos += 1;
        return Ok(Statement::Output { payload, loc });
    }
    if s.try_keyword("join") {
        if s.try_keyword("on") {
            return Ok(Statement::JoinOn { loc });
        }
        if s.try_keyword("off") {
            return Ok(Statement::JoinOff { loc });
        }
        return Err(s.diag("syntax", "expected `on` or `off` after `join`"));
    }

    let dst = s.ident()?;
    s.expect_punct(b'=')?;
    s.skip_trivia();

    if s.try_punct(b'-') {
        let src = operand(s)?;
        return Ok(Statement::Negate { dst, src, loc });
    }

    let first_at = s.pos;
    let first = s.ident()?;

    // Constructor: `frame.multivector { ... }`
    if s.peek_inline() == Some(b'.') {
        let dot_pos = s.pos;
        s.pos += 1;
        let second = s.ident()?;
        if second == "multivector" && s.peek() == Some(b'{') {
            let coeffs = s.coeff_list()?;
            return Ok(Statement::Ctor { dst, frame: first, coeffs, loc });
        }
        // A frame.constant operand; fall through to the binary check.
        let lhs = Operand::Constant { frame: first, name: second };
        let _ = dot_pos;
        return finish_binary_or_copy(s, dst, lhs, loc);
    }

    // Unary operator call.
    if UNARY_KEYWORDS.contains(&first.as_str()) && s.peek_inline() == Some(b'(') {
        s.pos += 1;
        let arg = operand(s)?;
        let op = unary_kind(s, &first)?;
        s.expect_punct(b')')?;
        return Ok(Statement::Unary { dst, op, arg, loc });
    }

    // Linear transform application: `name[mv]`.
    if s.peek_inline() == Some(b'[') {
        s.pos += 1;
        let arg = operand(s)?;
        s.expect_punct(b']')?;
        return Ok(Statement::Transform { dst, transform: first, arg, loc });
    }

    let _ = first_at;
    finish_binary_or_copy(s, dst, Operand::Register(first), loc)
}

fn finish_binary_or_copy(
    s: &mut Scanner,
    dst: String,
    lhs: Operand,
    loc: Loc,
) -> Result<Statement, Diagnostic> {
    match s.peek_inline() {
        Some(b'+') => {
            s.pos += 1;
            let rhs = operand(s)?;
            return Ok(Statement::Binary { dst, op: BinOp::Add, lhs, rhs, loc });
        }
        Some(b'-') => {
            s.pos += 1;
            let rhs = operand(s)?;
            return Ok(Statement::Binary { dst, op: BinOp::Sub, lhs, rhs, loc });
        }
        _ => {}
    }
    if let Some(w) = s.peek_word_inline() {
        if w == "end" {
            return Ok(Statement::Copy { dst, src: lhs, loc });
        }
        if let Some(kind) = ProductKind::from_name(w) {
            s.pos += w.len();
            let rhs = operand(s)?;
            return Ok(Statement::Binary { dst, op: BinOp::Product(kind), lhs, rhs, loc });
        }
        return Err(s.diag("unknown-operator", format!("unknown binary operator `{w}`")));
    }
    Ok(Statement::Copy { dst, src: lhs, loc })
}

fn unary_kind(s: &mut Scanner, name: &str) -> Result<UnaryKind, Diagnostic> {
    let simple = match name {
        "grade_inv" => Some(UnaryKind::GradeInv),
        "cliff_conj" => Some(UnaryKind::CliffConj),
        "reverse" => Some(UnaryKind::Reverse),
        "norm" => Some(UnaryKind::Norm),
        "norm2" => Some(UnaryKind::Norm2),
        "quasi_norm" => Some(UnaryKind::QuasiNorm),
        "quasi_norm2" => Some(UnaryKind::QuasiNorm2),
        _ => None,
    };
    if let Some(k) = simple {
        return Ok(k);
    }
    s.expect_punct(b',')?;
    match name {
        "scale" => Ok(UnaryKind::Scale(s.expr_until(&[b')'])?)),
        "div_by_scalar" => Ok(UnaryKind::DivByScalar(s.expr_until(&[b')'])?)),
        "diff" => {
            s.skip_trivia();
            let reference = if s.peek() == Some(b'<') {
                s.angle_ref()?
            } else {
                let mv = s.ident()?;
                s.expect_punct(b'.')?;
                format!("{mv}.{}", s.blade_token()?)
            };
            Ok(UnaryKind::Diff(reference))
        }
        "cast_to_grades" => {
            s.expect_punct(b'{')?;
            let mut grades = Vec::new();
            loop {
                s.skip_trivia();
                if s.try_punct(b'}') {
                    break;
                }
                let at = s.pos;
                let end = s.word_end(s.pos);
                let g: u32 = s.src[s.pos..end]
                    .parse()
                    .map_err(|_| s.diag_at(at, "syntax", "expected a grade number"))?;
                s.pos = end;
                grades.push(g);
                if s.try_punct(b';') || s.try_punct(b',') {
                    continue;
                }
                s.expect_punct(b'}')?;
                break;
            }
            Ok(UnaryKind::CastToGrades(grades))
        }
        "cast_to_subspace" | "cast_to_class" => {
            let frame = s.ident()?;
            s.expect_punct(b'.')?;
            let target = s.ident()?;
            let qualified = format!("{frame}.{target}");
            if name == "cast_to_subspace" {
                Ok(UnaryKind::CastToSubspace(qualified))
            } else {
                Ok(UnaryKind::CastToClass(qualified))
            }
        }
        other => Err(s.diag("unknown-operator", format!("unknown unary operator `{other}`"))),
    }
}

/// Parses a single macro statement from standalone text.
pub fn parse_macro_statement(text: &str) -> Result<Statement, Diagnostic> {
    let mut s = Scanner::new(text, FileRole::Macros);
    let st = statement(&mut s)?;
    let _ = s.try_punct(b';');
    if !s.at_end() {
        return Err(s.diag("syntax", "unexpected trailing text after statement"));
    }
    Ok(st)
}

fn check_duplicates(ast: &ProjectAst, diags: &mut Vec<Diagnostic>) {
    fn check<'x>(
        role: FileRole,
        items: impl Iterator<Item = (String, Loc)> + 'x,
        diags: &mut Vec<Diagnostic>,
    ) {
        let mut seen = BTreeSet::new();
        for (name, loc) in items {
            if !seen.insert(name.clone()) {
                diags.push(loc.diagnostic(
                    role,
                    "duplicate-name",
                    format!("`{name}` is defined more than once"),
                ));
            }
        }
    }
    check(
        FileRole::Frames,
        ast.frames.iter().map(|d| (d.name.clone(), d.loc)),
        diags,
    );
    check(
        FileRole::Transforms,
        ast.transforms.iter().map(|d| (d.name.clone(), d.loc)),
        diags,
    );
    check(
        FileRole::Subspaces,
        ast.subspaces.iter().map(|d| (format!("{}.{}", d.frame, d.name), d.loc)),
        diags,
    );
    check(
        FileRole::Multivectors,
        ast.classes.iter().map(|d| (format!("{}.{}", d.frame, d.name), d.loc)),
        diags,
    );
    check(
        FileRole::Constants,
        ast.constants.iter().map(|d| (format!("{}.{}", d.frame, d.name), d.loc)),
        diags,
    );
    check(
        FileRole::Bindings,
        ast.bindings.iter().map(|d| (d.name.clone(), d.loc)),
        diags,
    );
    check(
        FileRole::Macros,
        ast.macros.iter().map(|d| (d.name.clone(), d.loc)),
        diags,
    );
}
