//! Line-oriented parser for the experiment language. `#` starts a comment;
//! blank lines are skipped. Names must be declared before use and cannot be
//! redeclared. The first offending line is reported.

use crate::ast::*;
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, line {}", self.message, self.line)
    }
}

impl std::error::Error for ParseError {}

struct Names {
    sets: BTreeSet<String>,
    families: BTreeSet<String>,
}

pub fn parse_spec(text: &str) -> Result<SpecProgram, ParseError> {
    let mut program = SpecProgram::default();
    let mut names = Names {
        sets: BTreeSet::new(),
        families: BTreeSet::new(),
    };
    let mut seen_options = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ParseError {
            line: line_no,
            message,
        };
        let (head, rest) = split_word(line);
        match head {
            "option" => {
                parse_options(rest, &mut program.options).map_err(err)?;
                seen_options = true;
            }
            "set" => {
                let (name, expr_text) = parse_binding(rest).map_err(err)?;
                if !names.sets.insert(name.clone()) || names.families.contains(&name) {
                    return Err(err(format!("duplicate declaration of {name}")));
                }
                let expr = parse_set_expr(expr_text, &names).map_err(err)?;
                program.declarations.push(Declaration::Set { name, expr });
            }
            "family" => {
                let (name, expr_text) = parse_binding(rest).map_err(err)?;
                if !names.families.insert(name.clone()) || names.sets.contains(&name) {
                    return Err(err(format!("duplicate declaration of {name}")));
                }
                let expr = parse_family_expr(expr_text, &names).map_err(err)?;
                program.declarations.push(Declaration::Family { name, expr });
            }
            "analyze" => {
                let analysis = parse_analysis(rest, &names).map_err(err)?;
                program.analyses.push(analysis);
            }
            other => {
                return Err(err(format!(
                    "expected option, set, family or analyze, found `{other}`"
                )));
            }
        }
        let _ = seen_options;
    }
    if program.options.horizon == 0 || program.options.prefix == 0 {
        return Err(ParseError {
            line: 1,
            message: "horizon and prefix must be positive".into(),
        });
    }
    Ok(program)
}

fn split_word(s: &str) -> (&str, &str) {
    let s = s.trim();
    match s.find(char::is_whitespace) {
        Some(i) => (&s[..i], s[i..].trim()),
        None => (s, ""),
    }
}

fn parse_binding(rest: &str) -> Result<(String, &str), String> {
    let Some((name, expr)) = rest.split_once('=') else {
        return Err("expected `NAME = EXPR`".into());
    };
    let name = name.trim();
    check_name(name)?;
    Ok((name.to_string(), expr.trim()))
}

fn check_name(name: &str) -> Result<(), String> {
    let ok = !name.is_empty()
        && name
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if ok {
        Ok(())
    } else {
        Err(format!("invalid name `{name}`"))
    }
}

fn parse_options(rest: &str, options: &mut Options) -> Result<(), String> {
    for pair in rest.split_whitespace() {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(format!("expected key=value, found `{pair}`"));
        };
        match key {
            "horizon" => options.horizon = parse_num(value)?,
            "prefix" => options.prefix = parse_num(value)? as usize,
            "seed" => options.seed = parse_num(value)?,
            other => return Err(format!("unknown option `{other}`")),
        }
    }
    Ok(())
}

fn parse_num(s: &str) -> Result<u64, String> {
    s.trim()
        .parse::<u64>()
        .map_err(|_| format!("expected a number, found `{s}`"))
}

fn call_args<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    let rest = text.strip_prefix(name)?.trim_start();
    let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
    Some(inner.trim())
}

fn parse_set_expr(text: &str, names: &Names) -> Result<SetExpr, String> {
    let text = text.trim();
    if text == "omega" {
        return Ok(SetExpr::Omega);
    }
    if text == "evens" {
        return Ok(SetExpr::Evens);
    }
    if let Some(inner) = call_args(text, "dyadic") {
        return Ok(SetExpr::Dyadic(parse_num(inner)? as usize));
    }
    if let Some(inner) = call_args(text, "oscfamily") {
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err("oscfamily takes (size, pick=index)".into());
        }
        let size = parse_num(parts[0])? as usize;
        let pick = parts[1]
            .strip_prefix("pick=")
            .ok_or_else(|| "oscfamily takes (size, pick=index)".to_string())
            .and_then(|v| parse_num(v).map(|n| n as usize))?;
        if size == 0 || pick >= size {
            return Err(format!("pick {pick} out of range for size {size}"));
        }
        return Ok(SetExpr::OscFamily { size, pick });
    }
    if let Some(inner) = call_args(text, "literal") {
        let mut values = Vec::new();
        for part in inner.split(',') {
            values.push(parse_num(part)?);
        }
        if values.is_empty() {
            return Err("literal needs at least one value".into());
        }
        return Ok(SetExpr::Literal(values));
    }
    if let Some(inner) = call_args(text, "thin") {
        check_name(inner)?;
        if !names.sets.contains(inner) {
            return Err(format!("unknown name {inner}"));
        }
        return Ok(SetExpr::Thin(inner.to_string()));
    }
    Err(format!("unknown construction `{text}`"))
}

fn parse_family_expr(text: &str, names: &Names) -> Result<FamilyExpr, String> {
    let (kind, rest) = split_word(text);
    match kind {
        "luzin" => {
            let mut lengths = None;
            let mut members = None;
            for pair in rest.split_whitespace() {
                let Some((key, value)) = pair.split_once('=') else {
                    return Err(format!("expected key=value, found `{pair}`"));
                };
                match key {
                    "L" => {
                        lengths = Some(if let Some(inner) = call_args(value, "doubling") {
                            LengthsExpr::Doubling(parse_num(inner)?)
                        } else {
                            check_name(value)?;
                            if !names.sets.contains(value) {
                                return Err(format!("unknown name {value}"));
                            }
                            LengthsExpr::Named(value.to_string())
                        });
                    }
                    "members" => members = Some(parse_num(value)? as usize),
                    other => return Err(format!("unknown luzin field `{other}`")),
                }
            }
            let lengths = lengths.ok_or("luzin needs L=<set|doubling(k0)>")?;
            let members = members.ok_or("luzin needs members=<m>")?;
            if members == 0 {
                return Err("members must be positive".into());
            }
            Ok(FamilyExpr::Luzin { lengths, members })
        }
        "branches" => {
            let mut levels = None;
            let mut count = None;
            for pair in rest.split_whitespace() {
                let Some((key, value)) = pair.split_once('=') else {
                    return Err(format!("expected key=value, found `{pair}`"));
                };
                match key {
                    "A" => {
                        check_name(value)?;
                        if !names.sets.contains(value) {
                            return Err(format!("unknown name {value}"));
                        }
                        levels = Some(value.to_string());
                    }
                    "count" => count = Some(parse_num(value)? as usize),
                    other => return Err(format!("unknown branches field `{other}`")),
                }
            }
            let levels = levels.ok_or("branches needs A=<set>")?;
            let count = count.ok_or("branches needs count=<m>")?;
            if count == 0 {
                return Err("count must be positive".into());
            }
            Ok(FamilyExpr::Branches { levels, count })
        }
        "union" => {
            let inner = call_args(text, "union").ok_or("union takes (f1,f2)")?;
            let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err("union takes (f1,f2)".into());
            }
            for p in &parts {
                if !names.families.contains(*p) {
                    return Err(format!("unknown name {p}"));
                }
            }
            Ok(FamilyExpr::Union(parts[0].to_string(), parts[1].to_string()))
        }
        other => Err(format!("unknown family construction `{other}`")),
    }
}

fn parse_analysis(rest: &str, names: &Names) -> Result<Analysis, String> {
    let (kind, rest) = split_word(rest);
    let known_set = |n: &str| -> Result<String, String> {
        if names.sets.contains(n) {
            Ok(n.to_string())
        } else {
            Err(format!("unknown name {n}"))
        }
    };
    let known_family = |n: &str| -> Result<String, String> {
        if names.families.contains(n) {
            Ok(n.to_string())
        } else {
            Err(format!("unknown name {n}"))
        }
    };
    match kind {
        "spectrum" => {
            let (f, tail) = split_word(rest);
            expect_end(tail)?;
            Ok(Analysis::Spectrum(known_family(f)?))
        }
        "oscillation" => {
            let (a, rest) = split_word(rest);
            let (b, tail) = split_word(rest);
            expect_end(tail)?;
            Ok(Analysis::Oscillation(known_set(a)?, known_set(b)?))
        }
        "obstruct" => {
            let (a, rest) = split_word(rest);
            let (b, tail) = split_word(rest);
            expect_end(tail)?;
            Ok(Analysis::Obstruct(known_family(a)?, known_family(b)?))
        }
        "selfobstruct" => {
            let (f, tail) = split_word(rest);
            expect_end(tail)?;
            Ok(Analysis::SelfObstruct(known_family(f)?))
        }
        "oracle" => {
            let (a, rest) = split_word(rest);
            let (b, rest) = split_word(rest);
            let left = known_family(a)?;
            let right = known_family(b)?;
            let mut points = None;
            let mut budget = None;
            for pair in rest.split_whitespace() {
                let Some((key, value)) = pair.split_once('=') else {
                    return Err(format!("expected key=value, found `{pair}`"));
                };
                match key {
                    "N" => points = Some(parse_num(value)? as usize),
                    "budget" => budget = Some(parse_num(value)? as usize),
                    other => return Err(format!("unknown oracle field `{other}`")),
                }
            }
            Ok(Analysis::Oracle {
                left,
                right,
                points: points.ok_or("oracle needs N=<n>")?,
                budget: budget.ok_or("oracle needs budget=<b>")?,
            })
        }
        other => Err(format!("unknown analysis `{other}`")),
    }
}

fn expect_end(tail: &str) -> Result<(), String> {
    if tail.is_empty() {
        Ok(())
    } else {
        Err(format!("unexpected trailing input `{tail}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_two_line_program() {
        let p = parse_spec("family F = luzin L=doubling(1) members=4\nanalyze spectrum F")
            .expect("valid program");
        assert_eq!(p.declarations.len(), 1);
        assert_eq!(p.analyses.len(), 1);
    }

    #[test]
    fn empty_program_is_valid() {
        let p = parse_spec("").expect("empty is fine");
        assert!(p.declarations.is_empty());
        assert!(p.analyses.is_empty());
    }

    #[test]
    fn unknown_name_with_line_number() {
        let err = parse_spec("analyze spectrum G").unwrap_err();
        assert_eq!(err.to_string(), "unknown name G, line 1");
    }

    #[test]
    fn duplicate_declaration_rejected() {
        let err = parse_spec("set A = omega\nset A = evens").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("duplicate"));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let p = parse_spec("# a comment\n\nset A = omega # trailing\n").expect("valid");
        assert_eq!(p.declarations.len(), 1);
    }

    #[test]
    fn print_then_parse_is_stable() {
        let text = "option horizon=128 prefix=8 seed=3\n\
                    set P = oscfamily(2, pick=0)\n\
                    set Q = thin(P)\n\
                    set L = literal(1,3,6)\n\
                    family F = luzin L=Q members=3\n\
                    family G = branches A=L count=3\n\
                    family U = union(F,G)\n\
                    analyze spectrum F\n\
                    analyze oscillation P Q\n\
                    analyze obstruct F G\n\
                    analyze selfobstruct U\n\
                    analyze oracle G G N=12 budget=2\n";
        let once = parse_spec(text).expect("valid");
        let twice = parse_spec(&once.to_string()).expect("printed form parses");
        assert_eq!(once, twice);
    }
}
