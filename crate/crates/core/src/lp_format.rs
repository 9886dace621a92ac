//! CPLEX-style LP text export and import for the subset this crate emits:
//! `Minimize`, `Subject To`, `Bounds`, `Binaries`, `End`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Constraint, LinearModel, RowFamily, Sense, VarKind, VarName, Variable};

const TERMS_PER_LINE: usize = 8;

fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

fn write_terms(out: &mut String, model: &LinearModel, terms: &[(usize, f64)]) {
    if terms.is_empty() {
        // A row or objective with no terms still needs an expression.
        let _ = write!(out, " 0 {}", model.variables.first().map(|v| v.name.to_string()).unwrap_or_else(|| "v_1".into()));
        return;
    }
    for (n, &(j, c)) in terms.iter().enumerate() {
        if n > 0 && n % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if c < 0.0 { '-' } else { '+' };
        if n == 0 && sign == '+' {
            let _ = write!(out, " {} {}", fmt_num(c), model.variables[j].name);
        } else {
            let _ = write!(out, " {sign} {} {}", fmt_num(c.abs()), model.variables[j].name);
        }
    }
}

/// Renders a model as LP text. Every variable is listed in `Bounds` so the
/// variable order survives a round trip through [`from_lp_string`].
pub fn to_lp_string(model: &LinearModel) -> String {
    let mut out = String::new();
    out.push_str("\\ rdao model\nMinimize\n obj:");
    write_terms(&mut out, model, &model.objective);
    out.push_str("\nSubject To\n");
    for (r, c) in model.constraints.iter().enumerate() {
        let _ = write!(out, " {}:", model.row_name(r));
        write_terms(&mut out, model, &c.coeffs);
        let _ = writeln!(out, " {} {}", c.sense.symbol(), fmt_num(c.rhs));
    }
    out.push_str("Bounds\n");
    for v in &model.variables {
        if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            let _ = writeln!(out, " {} free", v.name);
        } else {
            let _ = writeln!(out, " {} <= {} <= {}", fmt_num(v.lower), v.name, fmt_num(v.upper));
        }
    }
    let binaries: Vec<String> =
        model.variables.iter().filter(|v| v.kind == VarKind::Binary).map(|v| v.name.to_string()).collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(TERMS_PER_LINE) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

pub fn write_lp(model: &LinearModel, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(to_lp_string(model).as_bytes())?;
    f.flush()?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Objective,
    Rows,
    Bounds,
    Binaries,
}

struct Parser {
    order: Vec<String>,
    index: HashMap<String, usize>,
}

impl Parser {
    fn var(&mut self, name: &str) -> usize {
        if let Some(&j) = self.index.get(name) {
            return j;
        }
        self.order.push(name.to_string());
        self.index.insert(name.to_string(), self.order.len() - 1);
        self.order.len() - 1
    }
}

fn parse_num(tok: &str) -> Result<f64> {
    match tok.to_ascii_lowercase().as_str() {
        "+inf" | "inf" | "+infinity" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        t => t.parse::<f64>().map_err(|_| Error::Format(format!("expected a number, found '{tok}'"))),
    }
}

fn is_num(tok: &str) -> bool {
    parse_num(tok).is_ok()
}

/// Parses a linear expression `[+|-] [coef] name ...` into terms.
fn parse_terms(tokens: &[&str], p: &mut Parser) -> Result<Vec<(usize, f64)>> {
    let mut terms = Vec::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for &t in tokens {
        match t {
            "+" => sign = 1.0,
            "-" => sign = -sign,
            _ if is_num(t) && coef.is_none() => coef = Some(parse_num(t)?),
            _ => {
                let j = p.var(t);
                terms.push((j, sign * coef.take().unwrap_or(1.0)));
                sign = 1.0;
            }
        }
    }
    if coef.is_some() {
        return Err(Error::Format("dangling coefficient in expression".into()));
    }
    Ok(terms)
}

/// Parses LP text produced by [`to_lp_string`] (and simple hand-written files
/// in the same subset).
pub fn from_lp_string(text: &str) -> Result<LinearModel> {
    let mut p = Parser { order: Vec::new(), index: HashMap::new() };
    let mut section = Section::None;
    let mut objective = Vec::new();
    let mut rows: Vec<(RowFamily, Vec<(usize, f64)>, Sense, f64)> = Vec::new();
    let mut bounds: HashMap<usize, (f64, f64)> = HashMap::new();
    let mut bound_order: Vec<usize> = Vec::new();
    let mut binaries = Vec::new();
    let mut pending: Vec<String> = Vec::new();

    let flush_row = |pending: &mut Vec<String>, p: &mut Parser, rows: &mut Vec<_>| -> Result<()> {
        if pending.is_empty() {
            return Ok(());
        }
        let joined = pending.join(" ");
        pending.clear();
        let (label, body) = match joined.split_once(':') {
            Some((l, b)) => (l.trim().to_string(), b.to_string()),
            None => (String::new(), joined),
        };
        let toks: Vec<&str> = body.split_whitespace().collect();
        let pos = toks
            .iter()
            .position(|t| matches!(*t, "<=" | ">=" | "=" | "=<" | "=>" | "<" | ">"))
            .ok_or_else(|| Error::Format(format!("row '{label}' has no sense")))?;
        let sense = match toks[pos] {
            "<=" | "=<" | "<" => Sense::Le,
            ">=" | "=>" | ">" => Sense::Ge,
            _ => Sense::Eq,
        };
        let rhs = toks.get(pos + 1).ok_or_else(|| Error::Format(format!("row '{label}' has no rhs")))?;
        let family = label.split_once('_').and_then(|(_, f)| f.parse::<RowFamily>().ok()).unwrap_or(RowFamily::Custom);
        rows.push((family, parse_terms(&toks[..pos], p)?, sense, parse_num(rhs)?));
        Ok(())
    };

    for raw in text.lines() {
        let line = raw.split('\\').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        let next = match lower.as_str() {
            "minimize" | "minimise" | "min" => Some(Section::Objective),
            "subject to" | "such that" | "st" | "s.t." => Some(Section::Rows),
            "bounds" | "bound" => Some(Section::Bounds),
            "binaries" | "binary" | "bin" => Some(Section::Binaries),
            "end" => Some(Section::None),
            "maximize" | "maximise" | "max" => return Err(Error::Format("maximization is not supported".into())),
            _ => None,
        };
        if let Some(s) = next {
            if section == Section::Rows {
                flush_row(&mut pending, &mut p, &mut rows)?;
            }
            section = s;
            continue;
        }
        match section {
            Section::None => return Err(Error::Format(format!("text outside any section: '{line}'"))),
            Section::Objective => {
                let body = line.split_once(':').map(|(_, b)| b).unwrap_or(line);
                let toks: Vec<&str> = body.split_whitespace().collect();
                objective.extend(parse_terms(&toks, &mut p)?);
            }
            Section::Rows => {
                // A new row starts with a label; continuation lines do not.
                let starts_row = line.contains(':');
                if starts_row {
                    flush_row(&mut pending, &mut p, &mut rows)?;
                }
                pending.push(line.to_string());
                let has_sense = line.split_whitespace().any(|t| matches!(t, "<=" | ">=" | "=" | "=<" | "=>" | "<" | ">"));
                if has_sense {
                    flush_row(&mut pending, &mut p, &mut rows)?;
                }
            }
            Section::Bounds => {
                let toks: Vec<&str> = line.split_whitespace().collect();
                if let Some(name) = toks.iter().find(|t| !is_num(t) && !matches!(**t, "<=" | ">=" | "=" | "free" | "FREE" | "Free")) {
                    let j = p.var(name);
                    if !bound_order.contains(&j) {
                        bound_order.push(j);
                    }
                }
                match toks.as_slice() {
                    [name, free] if free.eq_ignore_ascii_case("free") => {
                        let j = p.var(name);
                        bounds.insert(j, (f64::NEG_INFINITY, f64::INFINITY));
                    }
                    [lo, "<=", name, "<=", hi] => {
                        let j = p.var(name);
                        bounds.insert(j, (parse_num(lo)?, parse_num(hi)?));
                    }
                    [name, ">=", lo] => {
                        let j = p.var(name);
                        let e = bounds.entry(j).or_insert((0.0, f64::INFINITY));
                        e.0 = parse_num(lo)?;
                    }
                    [name, "<=", hi] => {
                        let j = p.var(name);
                        let e = bounds.entry(j).or_insert((0.0, f64::INFINITY));
                        e.1 = parse_num(hi)?;
                    }
                    [name, "=", val] => {
                        let j = p.var(name);
                        let v = parse_num(val)?;
                        bounds.insert(j, (v, v));
                    }
                    _ => return Err(Error::Format(format!("unsupported bound line '{line}'"))),
                }
            }
            Section::Binaries => {
                for t in line.split_whitespace() {
                    binaries.push(p.var(t));
                }
            }
        }
    }
    if section == Section::Rows {
        flush_row(&mut pending, &mut p, &mut rows)?;
    }

    // Variables listed in Bounds come first, in that order; the rest follow
    // in order of first appearance.
    let mut perm = vec![usize::MAX; p.order.len()];
    let mut order = Vec::with_capacity(p.order.len());
    for j in bound_order.iter().copied().chain(0..p.order.len()) {
        if perm[j] == usize::MAX {
            perm[j] = order.len();
            order.push(j);
        }
    }
    let mut model = LinearModel::new();
    for (k, &j) in order.iter().enumerate() {
        let parsed = p.order[j].parse::<VarName>().unwrap_or(VarName::Var { index: k as u32 });
        let (lower, upper) = bounds.get(&j).copied().unwrap_or((0.0, f64::INFINITY));
        model.variables.push(Variable { name: parsed, kind: VarKind::Continuous, lower, upper });
    }
    for j in binaries {
        let v = &mut model.variables[perm[j]];
        v.kind = VarKind::Binary;
        if !bounds.contains_key(&j) {
            v.upper = 1.0;
        }
    }
    let remap = |terms: Vec<(usize, f64)>| -> Vec<(usize, f64)> {
        terms.into_iter().filter(|&(_, a)| a != 0.0).map(|(j, a)| (perm[j], a)).collect()
    };
    model.objective = remap(objective);
    model.constraints = rows
        .into_iter()
        .map(|(family, coeffs, sense, rhs)| Constraint { family, coeffs: remap(coeffs), sense, rhs })
        .collect();
    model.validate()?;
    Ok(model)
}

pub fn read_lp(path: &Path) -> Result<LinearModel> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    from_lp_string(&std::fs::read_to_string(path)?)
}
