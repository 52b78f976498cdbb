//! Plant models and the line-oriented model language.
//!
//! ```text
//! # comment
//! state x v
//! input u
//! deriv x = v
//! deriv v = -2*v + u - 0.001*sqr(v)
//! output speed = v
//! ```
//!
//! Sections may appear in any order; every state needs exactly one `deriv`.
//! Expressions use `+ - * /`, parentheses, numeric literals and the
//! functions `sin cos tanh exp sqr`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::interval::Interval;

use super::expr::{BinaryOp, Expr, UnaryOp};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    state_vars: Vec<String>,
    input_vars: Vec<String>,
    derivs: Vec<Expr>,
    outputs: Vec<(String, Expr)>,
    /// `jacobian[i][j]` is the partial of `derivs[i]` w.r.t. state `j`.
    jacobian: Vec<Vec<Expr>>,
    names: Vec<String>,
}

impl PlantModel {
    /// Builds a model from already-resolved expressions. Variable index `i`
    /// refers to `state_vars[i]` for `i < n_states`, otherwise to
    /// `input_vars[i - n_states]`.
    pub fn new(
        state_vars: Vec<String>,
        input_vars: Vec<String>,
        derivs: Vec<Expr>,
        outputs: Vec<(String, Expr)>,
    ) -> Result<Self> {
        if state_vars.is_empty() {
            return Err(Error::Validation("model declares no state variables".into()));
        }
        if derivs.len() != state_vars.len() {
            return Err(Error::dims(state_vars.len(), derivs.len()));
        }
        let names: Vec<String> = state_vars.iter().chain(&input_vars).cloned().collect();
        let n_vars = names.len();
        for e in derivs.iter().chain(outputs.iter().map(|(_, e)| e)) {
            let mut bad = None;
            e.visit_vars(&mut |i| {
                if i >= n_vars {
                    bad = Some(i);
                }
            });
            if let Some(i) = bad {
                return Err(Error::UnboundVariable(format!("#{i}")));
            }
        }
        let jacobian = derivs
            .iter()
            .map(|f| (0..state_vars.len()).map(|j| f.derivative(j)).collect())
            .collect();
        Ok(Self {
            state_vars,
            input_vars,
            derivs,
            outputs,
            jacobian,
            names,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_model(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn state_vars(&self) -> &[String] {
        &self.state_vars
    }

    pub fn input_vars(&self) -> &[String] {
        &self.input_vars
    }

    pub fn n_states(&self) -> usize {
        self.state_vars.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.input_vars.len()
    }

    pub fn derivs(&self) -> &[Expr] {
        &self.derivs
    }

    pub fn outputs(&self) -> &[(String, Expr)] {
        &self.outputs
    }

    pub fn jacobian(&self) -> &[Vec<Expr>] {
        &self.jacobian
    }

    /// States followed by inputs; the index space of [`Expr::Var`].
    pub fn var_names(&self) -> &[String] {
        &self.names
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_vars.iter().position(|n| n == name)
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.input_vars.iter().position(|n| n == name)
    }

    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.outputs.iter().position(|(n, _)| n == name)
    }

    pub fn output_uses_inputs(&self, k: usize) -> bool {
        let n = self.n_states();
        self.outputs[k].1.uses_var(|i| i >= n)
    }

    /// Interval enclosure of the vector field over `states x inputs`.
    pub fn eval_derivs(&self, env: &[Interval]) -> Result<Vec<Interval>> {
        self.derivs.iter().map(|f| f.eval_interval(env)).collect()
    }

    /// Point evaluation of the vector field.
    pub fn eval_derivs_point(&self, env: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.derivs) {
            *o = f.eval(env);
        }
    }

    /// Renders the model back into the model language.
    pub fn to_source(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for PlantModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "state {}", self.state_vars.join(" "))?;
        if !self.input_vars.is_empty() {
            writeln!(f, "input {}", self.input_vars.join(" "))?;
        }
        for (name, e) in self.state_vars.iter().zip(&self.derivs) {
            writeln!(f, "deriv {name} = {}", e.display(&self.names))?;
        }
        for (name, e) in &self.outputs {
            writeln!(f, "output {name} = {}", e.display(&self.names))?;
        }
        Ok(())
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

const KEYWORDS: [&str; 4] = ["state", "input", "deriv", "output"];

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn check_name(name: &str, line: usize, column: usize) -> Result<()> {
    let mut chars = name.chars();
    let ok = chars.next().is_some_and(is_ident_start) && chars.all(is_ident_char);
    if !ok {
        return Err(syntax(line, column, format!("invalid name `{name}`")));
    }
    if UnaryOp::from_name(name).is_some() || KEYWORDS.contains(&name) {
        return Err(syntax(line, column, format!("`{name}` is reserved")));
    }
    Ok(())
}

/// One significant source line with its 1-based number and column offset.
struct SourceLine<'a> {
    number: usize,
    text: &'a str,
    indent: usize,
}

/// `<name> = <expr>` after a `deriv` / `output` keyword.
struct Definition<'a> {
    line: usize,
    name: &'a str,
    name_col: usize,
    body: &'a str,
    body_col: usize,
}

fn split_definition<'a>(src: &SourceLine<'a>, rest: &'a str, rest_col: usize) -> Result<Definition<'a>> {
    let eq = rest
        .find('=')
        .ok_or_else(|| syntax(src.number, rest_col, "expected `<name> = <expression>`"))?;
    let lhs = &rest[..eq];
    let name = lhs.trim();
    let name_col = rest_col + (lhs.len() - lhs.trim_start().len());
    check_name(name, src.number, name_col)?;
    Ok(Definition {
        line: src.number,
        name,
        name_col,
        body: &rest[eq + 1..],
        body_col: rest_col + eq + 1,
    })
}

fn parse_model(text: &str) -> Result<PlantModel> {
    let mut states: Vec<(String, usize)> = Vec::new();
    let mut inputs: Vec<(String, usize)> = Vec::new();
    let mut derivs: Vec<Definition> = Vec::new();
    let mut outputs: Vec<Definition> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let code = raw.split('#').next().unwrap_or("");
        let text = code.trim_start();
        if text.trim().is_empty() {
            continue;
        }
        let src = SourceLine {
            number: i + 1,
            text,
            indent: code.len() - text.len(),
        };
        let kw_len = src.text.find(char::is_whitespace).unwrap_or(src.text.len());
        let keyword = &src.text[..kw_len];
        let rest = &src.text[kw_len..];
        let rest_col = src.indent + kw_len + 1;
        match keyword {
            "state" | "input" => {
                let list = if keyword == "state" { &mut states } else { &mut inputs };
                let mut offset = 0;
                let mut any = false;
                for tok in rest.split(|c: char| c.is_whitespace() || c == ',') {
                    if !tok.is_empty() {
                        let col = rest_col + offset;
                        check_name(tok, src.number, col)?;
                        list.push((tok.to_string(), src.number));
                        any = true;
                    }
                    offset += tok.len() + 1;
                }
                if !any {
                    return Err(syntax(src.number, rest_col, format!("`{keyword}` needs at least one name")));
                }
            }
            "deriv" => derivs.push(split_definition(&src, rest, rest_col)?),
            "output" => outputs.push(split_definition(&src, rest, rest_col)?),
            other => {
                return Err(syntax(
                    src.number,
                    src.indent + 1,
                    format!("unknown declaration `{other}` (expected state, input, deriv or output)"),
                ))
            }
        }
    }

    let mut symbols: HashMap<String, usize> = HashMap::new();
    for (idx, (name, line)) in states.iter().chain(&inputs).enumerate() {
        if symbols.insert(name.clone(), idx).is_some() {
            return Err(Error::DuplicateDeclaration {
                name: name.clone(),
                line: *line,
            });
        }
    }
    if states.is_empty() {
        return Err(Error::Validation("model declares no state variables".into()));
    }

    let mut deriv_exprs: Vec<Option<Expr>> = vec![None; states.len()];
    for d in &derivs {
        let idx = match symbols.get(d.name) {
            Some(&i) if i < states.len() => i,
            Some(_) => {
                return Err(syntax(d.line, d.name_col, format!("`{}` is an input, not a state", d.name)))
            }
            None => {
                return Err(Error::UndeclaredVariable {
                    name: d.name.to_string(),
                    line: d.line,
                })
            }
        };
        if deriv_exprs[idx].is_some() {
            return Err(Error::DuplicateDeclaration {
                name: d.name.to_string(),
                line: d.line,
            });
        }
        deriv_exprs[idx] = Some(ExprParser::new(d.body, d.line, d.body_col, &symbols).parse()?);
    }
    let mut missing = states.iter().zip(&deriv_exprs).filter(|(_, e)| e.is_none());
    if let Some(((name, _), _)) = missing.next() {
        return Err(Error::Validation(format!("state `{name}` has no deriv equation")));
    }

    let mut output_exprs = Vec::new();
    for o in &outputs {
        if symbols.contains_key(o.name) || output_exprs.iter().any(|(n, _)| n == o.name) {
            return Err(Error::DuplicateDeclaration {
                name: o.name.to_string(),
                line: o.line,
            });
        }
        let e = ExprParser::new(o.body, o.line, o.body_col, &symbols).parse()?;
        output_exprs.push((o.name.to_string(), e));
    }

    PlantModel::new(
        states.into_iter().map(|(n, _)| n).collect(),
        inputs.into_iter().map(|(n, _)| n).collect(),
        deriv_exprs.into_iter().map(Option::unwrap).collect(),
        output_exprs,
    )
}

/// Parses a standalone expression against an explicit variable list.
pub fn parse_expr(text: &str, vars: &[&str]) -> Result<Expr> {
    let symbols: HashMap<String, usize> =
        vars.iter().enumerate().map(|(i, v)| (v.to_string(), i)).collect();
    ExprParser::new(text, 1, 1, &symbols).parse()
}

/// Recursive-descent parser:
///
/// ```text
/// expr    := term (('+' | '-') term)*
/// term    := unary (('*' | '/') unary)*
/// unary   := '-' unary | primary
/// primary := number | name | func '(' expr ')' | '(' expr ')'
/// ```
struct ExprParser<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    col0: usize,
    symbols: &'a HashMap<String, usize>,
}

impl<'a> ExprParser<'a> {
    fn new(src: &'a str, line: usize, col0: usize, symbols: &'a HashMap<String, usize>) -> Self {
        Self {
            src,
            pos: 0,
            line,
            col0,
            symbols,
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        syntax(self.line, self.col0 + self.pos, message)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn parse(mut self) -> Result<Expr> {
        self.skip_ws();
        if self.peek().is_none() {
            return Err(self.err("expected an expression"));
        }
        let e = self.expr()?;
        self.skip_ws();
        match self.peek() {
            None => Ok(e),
            Some(c) => Err(self.err(format!("unexpected `{c}`"))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinaryOp::Add
            } else if self.eat('-') {
                BinaryOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Expr::binary(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinaryOp::Mul
            } else if self.eat('/') {
                BinaryOp::Div
            } else {
                return Ok(lhs);
            };
            lhs = Expr::binary(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::unary(UnaryOp::Neg, self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(start),
            Some(c) if is_ident_start(c) => {
                while self.peek().is_some_and(is_ident_char) {
                    self.pos += 1;
                }
                let name = &self.src[start..self.pos];
                if let Some(op) = UnaryOp::from_name(name) {
                    if !self.eat('(') {
                        return Err(self.err(format!("expected `(` after `{name}`")));
                    }
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return Err(self.err("expected `)`"));
                    }
                    return Ok(Expr::unary(op, arg));
                }
                match self.symbols.get(name) {
                    Some(&i) => Ok(Expr::Var(i)),
                    None => Err(Error::UndeclaredVariable {
                        name: name.to_string(),
                        line: self.line,
                    }),
                }
            }
            Some(c) => Err(self.err(format!("unexpected `{c}`"))),
            None => Err(self.err("unexpected end of expression")),
        }
    }

    fn number(&mut self, start: usize) -> Result<Expr> {
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut k = end + 1;
            if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                k += 1;
            }
            if k < bytes.len() && bytes[k].is_ascii_digit() {
                while k < bytes.len() && bytes[k].is_ascii_digit() {
                    k += 1;
                }
                end = k;
            }
        }
        let lit = &self.src[start..end];
        let v: f64 = lit
            .parse()
            .map_err(|_| self.err(format!("invalid number `{lit}`")))?;
        if !v.is_finite() {
            return Err(self.err(format!("number `{lit}` out of range")));
        }
        self.pos = end;
        Ok(Expr::Const(v))
    }
}
