use std::fmt;

use super::{Cmp, Constraint, Corner, MAX_DEPTH};

const HEADS: &[&str] = &[
    "ordinal",
    "row",
    "col",
    "region",
    "size",
    "height",
    "distance",
    "feasible",
    "affordance",
    "knowledge",
    "not",
    "and",
];

pub(crate) fn is_keyword(word: &str) -> bool {
    HEADS.contains(&word)
        || matches!(word, "min" | "max")
        || Corner::ALL.iter().any(|c| c.as_str() == word)
}

/// A syntax or shape error at byte offset `position`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub position: usize,
    pub expected: Vec<String>,
    pub found: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "at byte {}: expected one of [{}], found {}",
            self.position,
            self.expected.join(", "),
            self.found
        )
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Word(String),
    Quoted(String),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Open => "'('".into(),
            Tok::Close => "')'".into(),
            Tok::Word(w) => format!("'{w}'"),
            Tok::Quoted(q) => format!("{q:?}"),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut out = Vec::new();
    let mut it = src.char_indices().peekable();
    while let Some(&(i, c)) = it.peek() {
        match c {
            c if c.is_whitespace() => {
                it.next();
            }
            '(' => {
                it.next();
                out.push((i, Tok::Open));
            }
            ')' => {
                it.next();
                out.push((i, Tok::Close));
            }
            '"' => {
                it.next();
                let mut s = String::new();
                loop {
                    match it.next() {
                        Some((_, '"')) => break,
                        Some((_, '\\')) => match it.next() {
                            Some((_, e)) => s.push(e),
                            None => return Err(unterminated(src.len())),
                        },
                        Some((_, ch)) => s.push(ch),
                        None => return Err(unterminated(src.len())),
                    }
                }
                out.push((i, Tok::Quoted(s)));
            }
            _ => {
                let mut w = String::new();
                while let Some(&(_, ch)) = it.peek() {
                    if ch.is_whitespace() || ch == '(' || ch == ')' || ch == '"' {
                        break;
                    }
                    w.push(ch);
                    it.next();
                }
                out.push((i, Tok::Word(w)));
            }
        }
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

fn unterminated(pos: usize) -> ParseError {
    ParseError {
        position: pos,
        expected: vec!["'\"'".into()],
        found: "end of input".into(),
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &(usize, Tok) {
        &self.toks[self.at]
    }

    fn next(&mut self) -> (usize, Tok) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        let (pos, tok) = self.peek();
        Err(ParseError {
            position: *pos,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: tok.describe(),
        })
    }

    fn expect_open(&mut self) -> Result<usize, ParseError> {
        match self.peek() {
            (p, Tok::Open) => {
                let p = *p;
                self.next();
                Ok(p)
            }
            _ => self.fail(&["'('"]),
        }
    }

    fn expect_close(&mut self) -> Result<(), ParseError> {
        match self.peek().1 {
            Tok::Close => {
                self.next();
                Ok(())
            }
            _ => self.fail(&["')'"]),
        }
    }

    fn int(&mut self) -> Result<u32, ParseError> {
        if let Tok::Word(w) = &self.peek().1 {
            if !w.is_empty() && w.bytes().all(|b| b.is_ascii_digit()) {
                if let Ok(n) = w.parse::<u32>() {
                    if n >= 1 {
                        self.next();
                        return Ok(n);
                    }
                }
            }
        }
        self.fail(&["positive integer"])
    }

    fn cmp(&mut self) -> Result<Cmp, ParseError> {
        let c = match &self.peek().1 {
            Tok::Word(w) if w == "min" => Cmp::Min,
            Tok::Word(w) if w == "max" => Cmp::Max,
            _ => return self.fail(&["'min'", "'max'"]),
        };
        self.next();
        Ok(c)
    }

    fn name(&mut self) -> Result<String, ParseError> {
        let n = match &self.peek().1 {
            Tok::Word(w) if !is_keyword(w) => w.clone(),
            Tok::Quoted(q) => q.clone(),
            _ => return self.fail(&["name"]),
        };
        self.next();
        Ok(n)
    }

    fn corner(&mut self) -> Result<Corner, ParseError> {
        if let Tok::Word(w) = &self.peek().1 {
            if let Some(c) = Corner::ALL.iter().find(|c| c.as_str() == w) {
                let c = *c;
                self.next();
                return Ok(c);
            }
        }
        self.fail(&["'lower-left'", "'lower-right'", "'upper-left'", "'upper-right'"])
    }

    fn constraint(&mut self, depth: usize, under_not: bool) -> Result<Constraint, ParseError> {
        self.expect_open()?;
        let head = match &self.peek().1 {
            Tok::Word(w) if HEADS.contains(&w.as_str()) => w.clone(),
            _ => {
                let quoted: Vec<String> = HEADS.iter().map(|h| format!("'{h}'")).collect();
                let refs: Vec<&str> = quoted.iter().map(String::as_str).collect();
                return self.fail(&refs);
            }
        };
        let compound = head == "not" || head == "and";
        if depth > MAX_DEPTH || (compound && depth == MAX_DEPTH) {
            return self.fail(&["atom (depth limit reached)"]);
        }
        if under_not && head == "not" {
            let allowed: Vec<&str> = HEADS.iter().copied().filter(|h| *h != "not").collect();
            let quoted: Vec<String> = allowed.iter().map(|h| format!("'{h}'")).collect();
            let refs: Vec<&str> = quoted.iter().map(String::as_str).collect();
            return self.fail(&refs);
        }
        self.next();
        let c = match head.as_str() {
            "ordinal" => {
                let row = self.int()?;
                let col = self.int()?;
                Constraint::Ordinal { row, col }
            }
            "row" => Constraint::Row(self.int()?),
            "col" => Constraint::Col(self.int()?),
            "region" => Constraint::Region(self.corner()?),
            "size" => Constraint::Size(self.cmp()?),
            "height" => Constraint::Height(self.cmp()?),
            "distance" => {
                let reference = self.name()?;
                let cmp = self.cmp()?;
                Constraint::Distance { reference, cmp }
            }
            "feasible" => Constraint::Feasible,
            "affordance" => Constraint::Affordance,
            "knowledge" => Constraint::Knowledge(self.name()?),
            "not" => Constraint::not(self.constraint(depth + 1, true)?),
            "and" => {
                let mut children = vec![self.constraint(depth + 1, false)?];
                while matches!(self.peek().1, Tok::Open) {
                    children.push(self.constraint(depth + 1, false)?);
                }
                Constraint::And(children)
            }
            _ => unreachable!(),
        };
        self.expect_close()?;
        Ok(c)
    }
}

/// Parse the s-expression form produced by `Constraint`'s `Display`.
pub fn parse_constraint(src: &str) -> Result<Constraint, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, at: 0 };
    let c = p.constraint(1, false)?;
    match p.peek().1 {
        Tok::End => Ok(c),
        _ => p.fail(&["end of input"]),
    }
}
