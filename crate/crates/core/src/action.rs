//! Web actions and their single-line text form.
//!
//! `CLICK [7]`, `TYPE [3] [M2 Mac Air]`, `SELECT [4] [Economy]`. Backslash,
//! newline and carriage return inside values are escaped so the form stays
//! on one line and parses back exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dom::CandidateId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    Click,
    Type,
    Select,
}

impl OpKind {
    pub const ALL: [OpKind; 3] = [OpKind::Click, OpKind::Type, OpKind::Select];

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Click => "CLICK",
            OpKind::Type => "TYPE",
            OpKind::Select => "SELECT",
        }
    }

    pub fn takes_value(self) -> bool {
        self != OpKind::Click
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpKind {
    type Err = ActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CLICK" => Ok(OpKind::Click),
            "TYPE" => Ok(OpKind::Type),
            "SELECT" => Ok(OpKind::Select),
            _ => Err(ActionError::Parse(s.to_string())),
        }
    }
}

impl Serialize for OpKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for OpKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum ActionError {
    #[error("cannot parse action {0:?}")]
    Parse(String),
    #[error("{op} action {}", if *.op == OpKind::Click { "must not carry a value" } else { "requires a value" })]
    ValueMismatch { op: OpKind },
}

/// An operation on one candidate element, with a value for TYPE and SELECT.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Action {
    op: OpKind,
    element: CandidateId,
    value: Option<String>,
}

impl Action {
    pub fn new(op: OpKind, element: CandidateId, value: Option<String>) -> Result<Self, ActionError> {
        if op.takes_value() != value.is_some() {
            return Err(ActionError::ValueMismatch { op });
        }
        Ok(Self { op, element, value })
    }

    pub fn click(element: CandidateId) -> Self {
        Self {
            op: OpKind::Click,
            element,
            value: None,
        }
    }

    pub fn type_text(element: CandidateId, value: impl Into<String>) -> Self {
        Self {
            op: OpKind::Type,
            element,
            value: Some(value.into()),
        }
    }

    pub fn select(element: CandidateId, value: impl Into<String>) -> Self {
        Self {
            op: OpKind::Select,
            element,
            value: Some(value.into()),
        }
    }

    /// `op` on `element`, carrying `value` only when `op` takes one.
    pub fn with_op(op: OpKind, element: CandidateId, value: Option<&str>) -> Self {
        Self {
            op,
            element,
            value: if op.takes_value() {
                Some(value.unwrap_or_default().to_string())
            } else {
                None
            },
        }
    }

    pub fn op(&self) -> OpKind {
        self.op
    }

    pub fn element(&self) -> CandidateId {
        self.element
    }

    pub fn value(&self) -> Option<&str> {
        self.value.as_deref()
    }
}

fn escape_value(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    for c in v.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_value(v: &str) -> Option<String> {
    let mut out = String::with_capacity(v.len());
    let mut chars = v.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next()? {
                '\\' => out.push('\\'),
                'n' => out.push('\n'),
                'r' => out.push('\r'),
                _ => return None,
            }
        } else {
            out.push(c);
        }
    }
    Some(out)
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]", self.op, self.element)?;
        if let Some(v) = &self.value {
            write!(f, " [{}]", escape_value(v))?;
        }
        Ok(())
    }
}

impl FromStr for Action {
    type Err = ActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ActionError::Parse(s.to_string());
        let line = s.trim_end_matches(['\n', '\r']);
        let (op, rest) = line.split_once(' ').ok_or_else(bad)?;
        let op: OpKind = op.parse().map_err(|_| bad())?;
        let rest = rest.strip_prefix('[').ok_or_else(bad)?;
        let close = rest.find(']').ok_or_else(bad)?;
        let element: CandidateId = rest[..close].trim().parse().map_err(|_| bad())?;
        let tail = &rest[close + 1..];
        let value = if tail.trim().is_empty() {
            None
        } else {
            let v = tail
                .strip_prefix(" [")
                .and_then(|t| t.strip_suffix(']'))
                .ok_or_else(bad)?;
            Some(unescape_value(v).ok_or_else(bad)?)
        };
        Action::new(op, element, value)
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
