//! Interval-condition rule sets: the textual rule language, bound completion
//! and first-match evaluation.
//!
//! ```text
//! # screening protocol
//! classes: healthy=0, diabetes=1
//! rule r1: BMI >= 30, G120 >= 126 -> diabetes
//! rule r2: BMI <= 25, G120 <= 100 -> healthy
//! rule r3: Age IN [21, 30] -> healthy
//! ```
//!
//! One statement per line, `#` starts a comment. `rule <name>: TRUE -> <label>`
//! declares an unconditional rule. Several conditions on the same
//! variable inside one rule are intersected into a single interval.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{FeatureSchema, LabeledDataset};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuleError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("duplicate rule name `{0}`")]
    DuplicateRuleName(String),
    #[error("line {line}: unknown class label `{label}`")]
    UnknownClassLabel { line: usize, label: String },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("sample is missing feature `{0}`")]
    MissingFeature(String),
    #[error("rule `{rule}` has an empty interval on `{variable}`")]
    EmptyInterval { rule: String, variable: String },
    #[error("class labels must be two distinct names mapped to 0 and 1")]
    InvalidClassMap,
}

/// `lower (<|<=) variable (<|<=) upper`. A missing bound is unbounded until
/// [`RuleSet::complete_bounds`] fills it with the observed feature range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub variable: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub lower_inclusive: bool,
    pub upper_inclusive: bool,
}

impl Condition {
    pub fn at_least(variable: &str, v: f64) -> Self {
        Self::new(variable, Some(v), None, true, true)
    }

    pub fn greater_than(variable: &str, v: f64) -> Self {
        Self::new(variable, Some(v), None, false, true)
    }

    pub fn at_most(variable: &str, v: f64) -> Self {
        Self::new(variable, None, Some(v), true, true)
    }

    pub fn less_than(variable: &str, v: f64) -> Self {
        Self::new(variable, None, Some(v), true, false)
    }

    pub fn between(variable: &str, lo: f64, hi: f64) -> Self {
        Self::new(variable, Some(lo), Some(hi), true, true)
    }

    pub fn new(
        variable: &str,
        lower: Option<f64>,
        upper: Option<f64>,
        lower_inclusive: bool,
        upper_inclusive: bool,
    ) -> Self {
        Self {
            variable: variable.to_string(),
            lower,
            upper,
            lower_inclusive,
            upper_inclusive,
        }
    }

    pub fn holds(&self, v: f64) -> bool {
        let lo_ok = match self.lower {
            None => true,
            Some(l) => v > l || (self.lower_inclusive && v == l),
        };
        let hi_ok = match self.upper {
            None => true,
            Some(u) => v < u || (self.upper_inclusive && v == u),
        };
        lo_ok && hi_ok
    }

    /// Closed interval `[lower, upper]` once both bounds are known.
    pub fn interval(&self) -> Option<(f64, f64)> {
        Some((self.lower?, self.upper?))
    }

    pub fn is_complete(&self) -> bool {
        self.lower.is_some() && self.upper.is_some()
    }

    fn is_empty(&self) -> bool {
        match (self.lower, self.upper) {
            (Some(l), Some(u)) => l > u || (l == u && !(self.lower_inclusive && self.upper_inclusive)),
            _ => false,
        }
    }

    /// Tightest condition implied by both `self` and `other` (same variable).
    fn intersect(&self, other: &Condition) -> Condition {
        let (lower, lower_inclusive) = match (self.lower, other.lower) {
            (None, None) => (None, true),
            (Some(a), None) => (Some(a), self.lower_inclusive),
            (None, Some(b)) => (Some(b), other.lower_inclusive),
            (Some(a), Some(b)) if a > b => (Some(a), self.lower_inclusive),
            (Some(a), Some(b)) if b > a => (Some(b), other.lower_inclusive),
            (Some(a), Some(_)) => (Some(a), self.lower_inclusive && other.lower_inclusive),
        };
        let (upper, upper_inclusive) = match (self.upper, other.upper) {
            (None, None) => (None, true),
            (Some(a), None) => (Some(a), self.upper_inclusive),
            (None, Some(b)) => (Some(b), other.upper_inclusive),
            (Some(a), Some(b)) if a < b => (Some(a), self.upper_inclusive),
            (Some(a), Some(b)) if b < a => (Some(b), other.upper_inclusive),
            (Some(a), Some(_)) => (Some(a), self.upper_inclusive && other.upper_inclusive),
        };
        Condition {
            variable: self.variable.clone(),
            lower,
            upper,
            lower_inclusive,
            upper_inclusive,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.lower, self.upper) {
            (Some(l), Some(u)) if self.lower_inclusive && self.upper_inclusive => {
                write!(f, "{} IN [{}, {}]", self.variable, l, u)
            }
            (lower, upper) => {
                let mut first = true;
                if let Some(l) = lower {
                    let op = if self.lower_inclusive { ">=" } else { ">" };
                    write!(f, "{} {} {}", self.variable, op, l)?;
                    first = false;
                }
                if let Some(u) = upper {
                    if !first {
                        f.write_str(", ")?;
                    }
                    let op = if self.upper_inclusive { "<=" } else { "<" };
                    write!(f, "{} {} {}", self.variable, op, u)?;
                }
                Ok(())
            }
        }
    }
}

/// A conjunction of conditions with a binary outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub name: String,
    pub conditions: Vec<Condition>,
    pub outcome: u8,
}

impl Rule {
    /// Builds a rule, intersecting conditions that share a variable name.
    pub fn new(name: &str, conditions: Vec<Condition>, outcome: u8) -> Result<Self, RuleError> {
        let mut merged: Vec<Condition> = Vec::with_capacity(conditions.len());
        for mut c in conditions {
            if c.lower.is_none() && c.upper.is_none() {
                continue;
            }
            c.lower_inclusive |= c.lower.is_none();
            c.upper_inclusive |= c.upper.is_none();
            match merged.iter_mut().find(|m| m.variable == c.variable) {
                Some(m) => *m = m.intersect(&c),
                None => merged.push(c),
            }
        }
        if let Some(c) = merged.iter().find(|c| c.is_empty()) {
            return Err(RuleError::EmptyInterval {
                rule: name.to_string(),
                variable: c.variable.clone(),
            });
        }
        Ok(Self {
            name: name.to_string(),
            conditions: merged,
            outcome,
        })
    }

    pub fn condition_on(&self, variable: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.variable == variable)
    }
}

/// Ordered rules plus the names of classes 0 and 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub classes: [String; 2],
    pub rules: Vec<Rule>,
}

impl Default for RuleSet {
    fn default() -> Self {
        Self {
            classes: ["0".to_string(), "1".to_string()],
            rules: Vec::new(),
        }
    }
}

impl RuleSet {
    pub fn new(classes: [&str; 2], rules: Vec<Rule>) -> Result<Self, RuleError> {
        if classes[0] == classes[1] {
            return Err(RuleError::InvalidClassMap);
        }
        for (i, r) in rules.iter().enumerate() {
            if rules[..i].iter().any(|o| o.name == r.name) {
                return Err(RuleError::DuplicateRuleName(r.name.clone()));
            }
        }
        Ok(Self {
            classes: [classes[0].to_string(), classes[1].to_string()],
            rules,
        })
    }

    pub fn parse(text: &str) -> Result<Self, RuleError> {
        parse_ruleset(text)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn class_of(&self, label: &str) -> Option<u8> {
        self.classes.iter().position(|c| c == label).map(|p| p as u8)
    }

    /// Fills every missing bound with the dataset's observed minimum (lower) or
    /// maximum (upper) for that feature. Conditions whose variables resolve to
    /// the same column are merged.
    pub fn complete_bounds(&self, data: &LabeledDataset) -> Result<Self, RuleError> {
        self.complete_bounds_with(data.schema(), data.bounds())
    }

    pub fn complete_bounds_with(
        &self,
        schema: &FeatureSchema,
        bounds: &[(f64, f64)],
    ) -> Result<Self, RuleError> {
        let mut rules = Vec::with_capacity(self.rules.len());
        for rule in &self.rules {
            let mut by_index: Vec<(usize, Condition)> = Vec::new();
            for c in &rule.conditions {
                let j = schema
                    .index_of(&c.variable)
                    .ok_or_else(|| RuleError::UnknownVariable(c.variable.clone()))?;
                match by_index.iter_mut().find(|(k, _)| *k == j) {
                    Some((_, m)) => *m = m.intersect(c),
                    None => by_index.push((j, c.clone())),
                }
            }
            let mut conditions = Vec::with_capacity(by_index.len());
            for (j, mut c) in by_index {
                let (lo, hi) = bounds[j];
                if c.lower.is_none() {
                    c.lower = Some(lo);
                    c.lower_inclusive = true;
                }
                if c.upper.is_none() {
                    c.upper = Some(hi);
                    c.upper_inclusive = true;
                }
                if c.is_empty() {
                    return Err(RuleError::EmptyInterval {
                        rule: rule.name.clone(),
                        variable: c.variable,
                    });
                }
                conditions.push(c);
            }
            rules.push(Rule {
                name: rule.name.clone(),
                conditions,
                outcome: rule.outcome,
            });
        }
        Ok(Self {
            classes: self.classes.clone(),
            rules,
        })
    }

    /// Resolves variable names against `schema` for repeated evaluation.
    pub fn bind<'a>(&'a self, schema: &FeatureSchema) -> Result<BoundRuleSet<'a>, RuleError> {
        let columns = self
            .rules
            .iter()
            .map(|r| {
                r.conditions
                    .iter()
                    .map(|c| {
                        schema
                            .index_of(&c.variable)
                            .ok_or_else(|| RuleError::MissingFeature(c.variable.clone()))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BoundRuleSet {
            rules: self,
            columns,
        })
    }

    /// Outcome of the first rule whose conditions all hold, `None` when no rule fires.
    pub fn evaluate(&self, schema: &FeatureSchema, sample: &[f64]) -> Result<Option<u8>, RuleError> {
        if sample.len() < schema.len() {
            return Err(RuleError::MissingFeature(
                schema.name(sample.len()).to_string(),
            ));
        }
        Ok(self.bind(schema)?.evaluate(sample))
    }

    /// Protocol prediction for every row of `data` (raw units).
    pub fn protocol_vector(&self, data: &LabeledDataset) -> Result<Vec<Option<u8>>, RuleError> {
        let bound = self.bind(data.schema())?;
        let mut overlaps = 0usize;
        let out = data
            .rows()
            .map(|row| {
                let mut hits = bound.matching(row);
                let first = hits.next();
                if first.is_some() && hits.next().is_some() {
                    overlaps += 1;
                }
                first.map(|j| self.rules[j].outcome)
            })
            .collect();
        if overlaps > 0 {
            log::warn!("{overlaps} samples satisfy more than one rule; first match used");
        }
        Ok(out)
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let default = self.classes[0] == "0" && self.classes[1] == "1";
        if !default {
            writeln!(f, "classes: {}=0, {}=1", self.classes[0], self.classes[1])?;
        }
        for r in &self.rules {
            write!(f, "rule {}: ", r.name)?;
            if r.conditions.is_empty() {
                f.write_str("TRUE")?;
            }
            for (i, c) in r.conditions.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{c}")?;
            }
            writeln!(f, " -> {}", self.classes[r.outcome as usize])?;
        }
        Ok(())
    }
}

impl FromStr for RuleSet {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_ruleset(s)
    }
}

/// A [`RuleSet`] whose variables have been resolved to column indices.
#[derive(Debug, Clone)]
pub struct BoundRuleSet<'a> {
    rules: &'a RuleSet,
    columns: Vec<Vec<usize>>,
}

impl<'a> BoundRuleSet<'a> {
    pub fn ruleset(&self) -> &'a RuleSet {
        self.rules
    }

    pub fn rule_fires(&self, j: usize, sample: &[f64]) -> bool {
        self.rules.rules[j]
            .conditions
            .iter()
            .zip(&self.columns[j])
            .all(|(c, &col)| c.holds(sample[col]))
    }

    /// Indices of every rule that fires on `sample`, in rule order.
    pub fn matching<'s>(&'s self, sample: &'s [f64]) -> impl Iterator<Item = usize> + 's {
        (0..self.columns.len()).filter(move |&j| self.rule_fires(j, sample))
    }

    pub fn first_match(&self, sample: &[f64]) -> Option<usize> {
        self.matching(sample).next()
    }

    pub fn evaluate(&self, sample: &[f64]) -> Option<u8> {
        self.first_match(sample).map(|j| self.rules.rules[j].outcome)
    }
}

pub fn parse_ruleset(text: &str) -> Result<RuleSet, RuleError> {
    let mut classes: Option<([String; 2], usize)> = None;
    let mut pending: Vec<(usize, String, Vec<Condition>, Outcome)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut p = Parser::new(line, line_no)?;
        match p.peek() {
            Some(Tok::Ident(kw)) if kw == "classes" => {
                if classes.is_some() {
                    return Err(p.error("duplicate classes statement"));
                }
                classes = Some((p.classes()?, line_no));
            }
            Some(Tok::Ident(kw)) if kw == "rule" => {
                let (name, conds, outcome) = p.rule()?;
                pending.push((line_no, name, conds, outcome));
            }
            _ => return Err(p.error("expected `classes:` or `rule`")),
        }
    }

    let class_names = match classes {
        Some((c, _)) => c,
        None => ["0".to_string(), "1".to_string()],
    };
    let mut rules = Vec::with_capacity(pending.len());
    for (line, name, conds, outcome) in pending {
        let class = match outcome {
            Outcome::Label(label) => class_names
                .iter()
                .position(|c| *c == label)
                .ok_or(RuleError::UnknownClassLabel { line, label })?,
            Outcome::Number(v) if v == 0.0 || v == 1.0 => v as usize,
            Outcome::Number(v) => {
                return Err(RuleError::UnknownClassLabel {
                    line,
                    label: v.to_string(),
                })
            }
        };
        rules.push(Rule::new(&name, conds, class as u8)?);
    }
    RuleSet::new([&class_names[0], &class_names[1]], rules)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Sym(&'static str),
}

enum Outcome {
    Label(String),
    Number(f64),
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
    line: usize,
}

const SYMBOLS: [&str; 10] = ["->", "<=", ">=", "<", ">", ":", ",", "[", "]", "="];

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

impl Parser {
    fn new(line: &str, line_no: usize) -> Result<Self, RuleError> {
        let mut toks = Vec::new();
        let bytes = line.as_bytes();
        let mut i = 0;
        while i < line.len() {
            let c = line[i..].chars().next().unwrap_or(' ');
            if c.is_whitespace() {
                i += c.len_utf8();
                continue;
            }
            if is_ident_start(c) {
                let start = i;
                while i < line.len() && is_ident_char(bytes[i] as char) {
                    i += 1;
                }
                toks.push(Tok::Ident(line[start..i].to_string()));
                continue;
            }
            let starts_number = c.is_ascii_digit()
                || c == '.'
                || ((c == '-' || c == '+')
                    && bytes
                        .get(i + 1)
                        .is_some_and(|&b| (b as char).is_ascii_digit() || b == b'.'));
            if starts_number {
                let start = i;
                i += 1;
                while i < line.len() {
                    let b = bytes[i] as char;
                    let exp_sign = (b == '-' || b == '+') && matches!(bytes[i - 1], b'e' | b'E');
                    if b.is_ascii_digit() || b == '.' || b == 'e' || b == 'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let text = &line[start..i];
                let v: f64 = text.parse().map_err(|_| RuleError::Syntax {
                    line: line_no,
                    msg: alloc::format!("invalid number `{text}`"),
                })?;
                if !v.is_finite() {
                    return Err(RuleError::Syntax {
                        line: line_no,
                        msg: alloc::format!("non-finite number `{text}`"),
                    });
                }
                toks.push(Tok::Number(v));
                continue;
            }
            match SYMBOLS.iter().find(|s| line[i..].starts_with(**s)) {
                Some(s) => {
                    toks.push(Tok::Sym(s));
                    i += s.len();
                }
                None => {
                    return Err(RuleError::Syntax {
                        line: line_no,
                        msg: alloc::format!("unexpected character `{c}`"),
                    })
                }
            }
        }
        Ok(Self {
            toks,
            pos: 0,
            line: line_no,
        })
    }

    fn error(&self, msg: &str) -> RuleError {
        RuleError::Syntax {
            line: self.line,
            msg: msg.to_string(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), RuleError> {
        match self.next() {
            Some(Tok::Sym(s)) if s == sym => Ok(()),
            _ => Err(self.error(&alloc::format!("expected `{sym}`"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, RuleError> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            _ => Err(self.error(&alloc::format!("expected {what}"))),
        }
    }

    fn number(&mut self) -> Result<f64, RuleError> {
        match self.next() {
            Some(Tok::Number(v)) => Ok(v),
            _ => Err(self.error("expected number")),
        }
    }

    fn end(&self) -> Result<(), RuleError> {
        if self.pos < self.toks.len() {
            Err(self.error("unexpected trailing input"))
        } else {
            Ok(())
        }
    }

    // classes: <label>=0, <label>=1
    fn classes(&mut self) -> Result<[String; 2], RuleError> {
        self.next();
        self.expect_sym(":")?;
        let mut slots: [Option<String>; 2] = [None, None];
        loop {
            let label = self.ident("class label")?;
            self.expect_sym("=")?;
            let v = self.number()?;
            let slot = if v == 0.0 {
                0
            } else if v == 1.0 {
                1
            } else {
                return Err(self.error("class values must be 0 or 1"));
            };
            if slots[slot].is_some() {
                return Err(self.error("class value assigned twice"));
            }
            slots[slot] = Some(label);
            match self.peek() {
                Some(Tok::Sym(",")) => {
                    self.next();
                }
                _ => break,
            }
        }
        self.end()?;
        match slots {
            [Some(a), Some(b)] if a != b => Ok([a, b]),
            _ => Err(self.error("classes must name two distinct labels for 0 and 1")),
        }
    }

    // rule <name>: <cond> (, <cond>)* -> <label>
    fn rule(&mut self) -> Result<(String, Vec<Condition>, Outcome), RuleError> {
        self.next();
        let name = self.ident("rule name")?;
        self.expect_sym(":")?;
        let mut conds = Vec::new();
        if matches!(self.peek(), Some(Tok::Ident(t)) if t == "TRUE")
            && matches!(self.toks.get(self.pos + 1), Some(Tok::Sym("->")))
        {
            self.pos += 2;
            let outcome = self.outcome()?;
            return Ok((name, conds, outcome));
        }
        loop {
            if matches!(self.peek(), Some(Tok::Sym("->"))) {
                return Err(self.error(if conds.is_empty() {
                    "empty rule body"
                } else {
                    "expected condition after `,`"
                }));
            }
            conds.push(self.condition()?);
            match self.next() {
                Some(Tok::Sym(",")) => continue,
                Some(Tok::Sym("->")) => break,
                _ => return Err(self.error("expected `,` or `->`")),
            }
        }
        let outcome = self.outcome()?;
        Ok((name, conds, outcome))
    }

    fn outcome(&mut self) -> Result<Outcome, RuleError> {
        let outcome = match self.next() {
            Some(Tok::Ident(l)) => Outcome::Label(l),
            Some(Tok::Number(v)) => Outcome::Number(v),
            _ => return Err(self.error("expected class label")),
        };
        self.end()?;
        Ok(outcome)
    }

    fn condition(&mut self) -> Result<Condition, RuleError> {
        let var = self.ident("variable name")?;
        match self.next() {
            Some(Tok::Ident(kw)) if kw == "IN" || kw == "in" => {
                self.expect_sym("[")?;
                let lo = self.number()?;
                self.expect_sym(",")?;
                let hi = self.number()?;
                self.expect_sym("]")?;
                if lo > hi {
                    return Err(self.error("interval lower bound exceeds upper bound"));
                }
                Ok(Condition::between(&var, lo, hi))
            }
            Some(Tok::Sym(op)) if matches!(op, ">=" | ">" | "<=" | "<") => {
                let v = self.number()?;
                Ok(match op {
                    ">=" => Condition::at_least(&var, v),
                    ">" => Condition::greater_than(&var, v),
                    "<=" => Condition::at_most(&var, v),
                    _ => Condition::less_than(&var, v),
                })
            }
            _ => Err(self.error("expected comparison operator or IN")),
        }
    }
}
