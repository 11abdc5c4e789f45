//! Program representation for the experiment language, with a canonical
//! printer. Parsing the printed form reproduces the same program.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Options {
    pub horizon: u64,
    pub prefix: usize,
    pub seed: u64,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            horizon: 256,
            prefix: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SetExpr {
    Omega,
    Evens,
    Dyadic(usize),
    /// Member `pick` of the pairwise almost oscillating family of the given
    /// size, materialized to the global prefix length.
    OscFamily { size: usize, pick: usize },
    Literal(Vec<u64>),
    /// Superincreasing thinning of a declared set.
    Thin(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LengthsExpr {
    Named(String),
    Doubling(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FamilyExpr {
    Luzin { lengths: LengthsExpr, members: usize },
    Branches { levels: String, count: usize },
    Union(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Declaration {
    Set { name: String, expr: SetExpr },
    Family { name: String, expr: FamilyExpr },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Analysis {
    Spectrum(String),
    Oscillation(String, String),
    Obstruct(String, String),
    SelfObstruct(String),
    Oracle {
        left: String,
        right: String,
        points: usize,
        budget: usize,
    },
}

impl Analysis {
    pub fn kind(&self) -> &'static str {
        match self {
            Analysis::Spectrum(_) => "spectrum",
            Analysis::Oscillation(..) => "oscillation",
            Analysis::Obstruct(..) => "obstruct",
            Analysis::SelfObstruct(_) => "selfobstruct",
            Analysis::Oracle { .. } => "oracle",
        }
    }

    pub fn args(&self) -> Vec<String> {
        match self {
            Analysis::Spectrum(f) => vec![f.clone()],
            Analysis::Oscillation(a, b) => vec![a.clone(), b.clone()],
            Analysis::Obstruct(a, b) => vec![a.clone(), b.clone()],
            Analysis::SelfObstruct(f) => vec![f.clone()],
            Analysis::Oracle {
                left,
                right,
                points,
                budget,
            } => vec![
                left.clone(),
                right.clone(),
                format!("N={points}"),
                format!("budget={budget}"),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpecProgram {
    pub options: Options,
    pub declarations: Vec<Declaration>,
    pub analyses: Vec<Analysis>,
}

impl fmt::Display for SetExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetExpr::Omega => write!(f, "omega"),
            SetExpr::Evens => write!(f, "evens"),
            SetExpr::Dyadic(n) => write!(f, "dyadic({n})"),
            SetExpr::OscFamily { size, pick } => write!(f, "oscfamily({size}, pick={pick})"),
            SetExpr::Literal(vs) => {
                write!(f, "literal(")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ")")
            }
            SetExpr::Thin(name) => write!(f, "thin({name})"),
        }
    }
}

impl fmt::Display for FamilyExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyExpr::Luzin { lengths, members } => {
                let l = match lengths {
                    LengthsExpr::Named(n) => n.clone(),
                    LengthsExpr::Doubling(k0) => format!("doubling({k0})"),
                };
                write!(f, "luzin L={l} members={members}")
            }
            FamilyExpr::Branches { levels, count } => {
                write!(f, "branches A={levels} count={count}")
            }
            FamilyExpr::Union(a, b) => write!(f, "union({a},{b})"),
        }
    }
}

impl fmt::Display for SpecProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "option horizon={} prefix={} seed={}",
            self.options.horizon, self.options.prefix, self.options.seed
        )?;
        for d in &self.declarations {
            match d {
                Declaration::Set { name, expr } => writeln!(f, "set {name} = {expr}")?,
                Declaration::Family { name, expr } => writeln!(f, "family {name} = {expr}")?,
            }
        }
        for a in &self.analyses {
            match a {
                Analysis::Spectrum(x) => writeln!(f, "analyze spectrum {x}")?,
                Analysis::Oscillation(x, y) => writeln!(f, "analyze oscillation {x} {y}")?,
                Analysis::Obstruct(x, y) => writeln!(f, "analyze obstruct {x} {y}")?,
                Analysis::SelfObstruct(x) => writeln!(f, "analyze selfobstruct {x}")?,
                Analysis::Oracle {
                    left,
                    right,
                    points,
                    budget,
                } => writeln!(f, "analyze oracle {left} {right} N={points} budget={budget}")?,
            }
        }
        Ok(())
    }
}
