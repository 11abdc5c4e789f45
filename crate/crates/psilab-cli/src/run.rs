//! Program execution: declarations are built on demand (memoized), analyses
//! run in program order, and every construction error is reported with the
//! analysis that triggered it.

use crate::ast::*;
use crate::report::{Report, Row};
use num_bigint::BigUint;
use psilab_core::{
    almost_oscillating_family, almost_oscillation_bound, brute_force_homeo_search, luzin_family,
    obstruction_report, self_obstruction, spectrum, thin_superincreasing, ADFamily,
    BipartitionScheme, LuzinSpec, NatStream, Prefix, PsiTruncation, Spectrum, TreeSpec, Verdict,
};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug)]
pub struct RunError {
    pub analysis: String,
    pub message: String,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "analysis `{}`: {}", self.analysis, self.message)
    }
}

impl std::error::Error for RunError {}

struct Lab<'p> {
    program: &'p SpecProgram,
    sets: BTreeMap<String, NatStream>,
    families: BTreeMap<String, ADFamily>,
    osc_families: BTreeMap<usize, Vec<NatStream>>,
}

impl Lab<'_> {
    fn set_expr(&self, name: &str) -> Option<&SetExpr> {
        self.program.declarations.iter().find_map(|d| match d {
            Declaration::Set { name: n, expr } if n == name => Some(expr),
            _ => None,
        })
    }

    fn family_expr(&self, name: &str) -> Option<&FamilyExpr> {
        self.program.declarations.iter().find_map(|d| match d {
            Declaration::Family { name: n, expr } if n == name => Some(expr),
            _ => None,
        })
    }

    fn set(&mut self, name: &str) -> Result<NatStream, String> {
        if let Some(s) = self.sets.get(name) {
            return Ok(s.clone());
        }
        let expr = self
            .set_expr(name)
            .ok_or_else(|| format!("unknown set {name}"))?
            .clone();
        let stream = match expr {
            SetExpr::Omega => NatStream::omega(),
            SetExpr::Evens => NatStream::evens(),
            SetExpr::Dyadic(n) => psilab_core::dyadic_partition(n),
            SetExpr::OscFamily { size, pick } => {
                let prefix = self.program.options.prefix;
                let members = self
                    .osc_families
                    .entry(size)
                    .or_insert_with(|| almost_oscillating_family(size, prefix));
                members[pick].clone()
            }
            SetExpr::Literal(values) => NatStream::from_literal(name, &values),
            SetExpr::Thin(inner) => thin_superincreasing(&self.set(&inner)?),
        };
        self.sets.insert(name.to_string(), stream.clone());
        Ok(stream)
    }

    fn family(&mut self, name: &str) -> Result<ADFamily, String> {
        if let Some(f) = self.families.get(name) {
            return Ok(f.clone());
        }
        let expr = self
            .family_expr(name)
            .ok_or_else(|| format!("unknown family {name}"))?
            .clone();
        let horizon = BigUint::from(self.program.options.horizon);
        let family = match expr {
            FamilyExpr::Luzin { lengths, members } => {
                let spec = match lengths {
                    LengthsExpr::Doubling(k0) => LuzinSpec::doubling(k0),
                    LengthsExpr::Named(set_name) => LuzinSpec::new(self.set(&set_name)?),
                };
                luzin_family(&spec.with_trace_horizon(horizon), members)
                    .map_err(|e| e.to_string())?
            }
            FamilyExpr::Branches { levels, count } => {
                let levels = self.set(&levels)?;
                branch_family_checked(&levels, self.program.options.prefix, count)?
            }
            FamilyExpr::Union(a, b) => {
                let fa = self.family(&a)?;
                let fb = self.family(&b)?;
                ADFamily::union(&fa, &fb)
            }
        };
        self.families.insert(name.to_string(), family.clone());
        Ok(family)
    }
}

fn branch_family_checked(
    levels: &NatStream,
    depth: usize,
    count: usize,
) -> Result<ADFamily, String> {
    let spec = TreeSpec::new(levels.clone(), depth);
    Ok(psilab_core::branch_family(&spec, count))
}

fn show_spectrum(s: &Spectrum) -> String {
    let values: Vec<String> = s.values().iter().map(BigUint::to_string).collect();
    let flag = if s.exact() { "exact" } else { "at-horizon" };
    format!("{{{}}} {}", values.join(","), flag)
}

fn prefix_of(stream: &NatStream, len: usize) -> Prefix {
    let values = stream.take(len);
    let horizon = values
        .last()
        .map(|v| v + 1u32)
        .unwrap_or_else(|| BigUint::from(1u32));
    Prefix::new(values, horizon).expect("streams are strictly increasing")
}

pub fn run_spec(program: &SpecProgram) -> Result<Report, RunError> {
    let mut lab = Lab {
        program,
        sets: BTreeMap::new(),
        families: BTreeMap::new(),
        osc_families: BTreeMap::new(),
    };
    let mut rows = Vec::new();
    for analysis in &program.analyses {
        let label = format!("{} {}", analysis.kind(), analysis.args().join(" "));
        let wrap = |message: String| RunError {
            analysis: label.clone(),
            message,
        };
        let row = match analysis {
            Analysis::Spectrum(f) => {
                let family = lab.family(f).map_err(wrap)?;
                let s = spectrum(&family);
                Row {
                    analysis: "spectrum".into(),
                    args: vec![f.clone()],
                    horizon: family.horizon().to_string(),
                    result: show_spectrum(&s),
                }
            }
            Analysis::Oscillation(a, b) => {
                let len = program.options.prefix;
                let pa = prefix_of(&lab.set(a).map_err(&wrap)?, len);
                let pb = prefix_of(&lab.set(b).map_err(&wrap)?, len);
                let horizon = pa.horizon().max(pb.horizon()).to_string();
                let result = match almost_oscillation_bound(&pa, &pb) {
                    Some(n) => format!("bound={n}"),
                    None => "none".into(),
                };
                Row {
                    analysis: "oscillation".into(),
                    args: vec![a.clone(), b.clone()],
                    horizon,
                    result,
                }
            }
            Analysis::Obstruct(f, g) => {
                let fa = lab.family(f).map_err(&wrap)?;
                let fb = lab.family(g).map_err(&wrap)?;
                let report = obstruction_report(&fa, &fb);
                let result = match (&report.verdict, &report.oscillation_bound) {
                    (Verdict::Obstructed, Some(n)) => format!("obstructed bound={n}"),
                    (Verdict::Inconclusive, Some(n)) => {
                        format!("inconclusive bound={n}")
                    }
                    (_, None) => "inconclusive".into(),
                };
                Row {
                    analysis: "obstruct".into(),
                    args: vec![f.clone(), g.clone()],
                    horizon: report.horizon.to_string(),
                    result,
                }
            }
            Analysis::SelfObstruct(f) => {
                let family = lab.family(f).map_err(&wrap)?;
                let result = match self_obstruction(&family, BipartitionScheme::Exhaustive) {
                    Some(w) => format!(
                        "split={}|{} bound={}",
                        join_indices(&w.left),
                        join_indices(&w.right),
                        w.bound
                    ),
                    None => "none".into(),
                };
                Row {
                    analysis: "selfobstruct".into(),
                    args: vec![f.clone()],
                    horizon: family.horizon().to_string(),
                    result,
                }
            }
            Analysis::Oracle {
                left,
                right,
                points,
                budget,
            } => {
                let fa = lab.family(left).map_err(&wrap)?;
                let fb = lab.family(right).map_err(&wrap)?;
                let source =
                    PsiTruncation::new(fa, *points).map_err(|e| wrap(e.to_string()))?;
                let target =
                    PsiTruncation::new(fb, *points).map_err(|e| wrap(e.to_string()))?;
                let result = match brute_force_homeo_search(&source, &target, *budget) {
                    Some(_) => "found".to_string(),
                    None => "absent".to_string(),
                };
                Row {
                    analysis: "oracle".into(),
                    args: vec![
                        left.clone(),
                        right.clone(),
                        format!("N={points}"),
                        format!("budget={budget}"),
                    ],
                    horizon: points.to_string(),
                    result,
                }
            }
        };
        rows.push(row);
    }
    Ok(Report {
        options: program.options,
        rows,
    })
}

fn join_indices(indices: &[usize]) -> String {
    indices
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_spec;

    #[test]
    fn branch_spectrum_row() {
        let program = parse_spec(
            "set A = literal(1,3,6)\nfamily F = branches A=A count=3\nanalyze spectrum F",
        )
        .expect("valid");
        let report = run_spec(&program).expect("runs");
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].result, "{2,4} exact");
    }

    #[test]
    fn luzin_spectrum_row() {
        let program =
            parse_spec("family F = luzin L=doubling(1) members=3\nanalyze spectrum F")
                .expect("valid");
        let report = run_spec(&program).expect("runs");
        assert_eq!(report.rows[0].result, "{2,8} exact");
    }

    #[test]
    fn bad_lengths_error_names_the_analysis() {
        let program = parse_spec(
            "set L = literal(1)\nfamily F = luzin L=L members=2\nanalyze spectrum F",
        )
        .expect("valid");
        let err = run_spec(&program).unwrap_err();
        assert!(err.analysis.contains("spectrum F"), "{err}");
        assert!(err.message.contains("luzin length violation"), "{err}");
    }

    #[test]
    fn reruns_are_identical() {
        let program = parse_spec(
            "set A = literal(1,3,6)\nset B = literal(2,8)\n\
             family F = branches A=A count=3\nfamily G = branches A=B count=3\n\
             analyze spectrum F\nanalyze obstruct F G\nanalyze oscillation A B",
        )
        .expect("valid");
        let a = run_spec(&program).expect("runs");
        let b = run_spec(&program).expect("runs");
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a.to_csv(), b.to_csv());
    }
}
