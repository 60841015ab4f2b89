//! Instructions over slots: a constraint tree with an s-expression text form,
//! its resolver, and per-category instruction generators.
//!
//! Grammar (whitespace-separated tokens):
//!
//! ```text
//! constraint := "(" "ordinal" INT INT ")"
//!             | "(" "row" INT ")" | "(" "col" INT ")"
//!             | "(" "region" REGION ")"
//!             | "(" "size" CMP ")" | "(" "height" CMP ")"
//!             | "(" "distance" NAME CMP ")"
//!             | "(" "feasible" ")" | "(" "affordance" ")"
//!             | "(" "knowledge" NAME ")"
//!             | "(" "not" constraint ")"
//!             | "(" "and" constraint+ ")"
//! CMP        := "min" | "max"
//! REGION     := "lower-left" | "lower-right" | "upper-left" | "upper-right"
//! NAME       := [A-Za-z0-9_-]+ | '"' ( [^"\\] | '\\' any )* '"'
//! ```
//!
//! Trees are at most [`MAX_DEPTH`] deep and `not` never directly wraps `not`.

mod generate;
mod parse;
mod resolve;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scene::Category;

pub use generate::{generate_instruction, InstructError};
pub use parse::{parse_constraint, ParseError};
pub use resolve::{resolve, ResolveError};

pub const MAX_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cmp {
    Min,
    Max,
}

impl Cmp {
    pub fn as_str(self) -> &'static str {
        match self {
            Cmp::Min => "min",
            Cmp::Max => "max",
        }
    }
}

/// A 2×2 block of cells at one corner of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Corner {
    LowerLeft,
    LowerRight,
    UpperLeft,
    UpperRight,
}

impl Corner {
    pub const ALL: [Corner; 4] = [
        Corner::LowerLeft,
        Corner::LowerRight,
        Corner::UpperLeft,
        Corner::UpperRight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Corner::LowerLeft => "lower-left",
            Corner::LowerRight => "lower-right",
            Corner::UpperLeft => "upper-left",
            Corner::UpperRight => "upper-right",
        }
    }

    pub fn contains(self, row: u32, col: u32, rows: u32, cols: u32) -> bool {
        let low = row <= 2;
        let high = row + 2 > rows;
        let left = col <= 2;
        let right = col + 2 > cols;
        match self {
            Corner::LowerLeft => low && left,
            Corner::LowerRight => low && right,
            Corner::UpperLeft => high && left,
            Corner::UpperRight => high && right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Constraint {
    Ordinal { row: u32, col: u32 },
    Row(u32),
    Col(u32),
    Region(Corner),
    Size(Cmp),
    Height(Cmp),
    Distance { reference: String, cmp: Cmp },
    Not(Box<Constraint>),
    And(Vec<Constraint>),
    Feasible,
    Affordance,
    Knowledge(String),
}

impl Constraint {
    pub fn not(c: Constraint) -> Constraint {
        Constraint::Not(Box::new(c))
    }

    /// Atoms that rank slots (argmin/argmax) rather than filter them.
    pub fn is_comparative(&self) -> bool {
        matches!(
            self,
            Constraint::Size(_)
                | Constraint::Height(_)
                | Constraint::Distance { .. }
                | Constraint::Knowledge(_)
        )
    }

    pub fn depth(&self) -> usize {
        match self {
            Constraint::Not(c) => 1 + c.depth(),
            Constraint::And(cs) => 1 + cs.iter().map(Constraint::depth).max().unwrap_or(0),
            _ => 1,
        }
    }

    /// Structural invariants: depth bound, no double negation, no empty `and`.
    pub fn check(&self) -> Result<(), String> {
        if self.depth() > MAX_DEPTH {
            return Err(format!("tree depth {} exceeds {}", self.depth(), MAX_DEPTH));
        }
        self.check_shape()
    }

    fn check_shape(&self) -> Result<(), String> {
        match self {
            Constraint::Not(inner) => {
                if matches!(**inner, Constraint::Not(_)) {
                    return Err("double negation".into());
                }
                inner.check_shape()
            }
            Constraint::And(cs) => {
                if cs.is_empty() {
                    return Err("empty conjunction".into());
                }
                cs.iter().try_for_each(Constraint::check_shape)
            }
            _ => Ok(()),
        }
    }
}

fn write_name(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    let bare = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if bare && !parse::is_keyword(name) {
        return f.write_str(name);
    }
    f.write_str("\"")?;
    for c in name.chars() {
        if c == '"' || c == '\\' {
            f.write_str("\\")?;
        }
        write!(f, "{c}")?;
    }
    f.write_str("\"")
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Ordinal { row, col } => write!(f, "(ordinal {row} {col})"),
            Constraint::Row(r) => write!(f, "(row {r})"),
            Constraint::Col(c) => write!(f, "(col {c})"),
            Constraint::Region(r) => write!(f, "(region {})", r.as_str()),
            Constraint::Size(c) => write!(f, "(size {})", c.as_str()),
            Constraint::Height(c) => write!(f, "(height {})", c.as_str()),
            Constraint::Distance { reference, cmp } => {
                f.write_str("(distance ")?;
                write_name(f, reference)?;
                write!(f, " {})", cmp.as_str())
            }
            Constraint::Not(c) => write!(f, "(not {c})"),
            Constraint::And(cs) => {
                f.write_str("(and")?;
                for c in cs {
                    write!(f, " {c}")?;
                }
                f.write_str(")")
            }
            Constraint::Feasible => f.write_str("(feasible)"),
            Constraint::Affordance => f.write_str("(affordance)"),
            Constraint::Knowledge(k) => {
                f.write_str("(knowledge ")?;
                write_name(f, k)?;
                f.write_str(")")
            }
        }
    }
}

impl std::str::FromStr for Constraint {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_constraint(s)
    }
}

impl Serialize for Constraint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Constraint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let src = String::deserialize(d)?;
        parse_constraint(&src).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMode {
    Unique,
    AnyOfSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub text: String,
    pub constraint: Constraint,
    pub category: Category,
    pub target_mode: TargetMode,
}
