//! Gate classes, locking schemes and per-gate label maps.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::Netlist;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeClass {
    Design,
    Perturb,
    Restore,
    AntiSat,
}

impl NodeClass {
    pub fn name(self) -> &'static str {
        match self {
            NodeClass::Design => "DESIGN",
            NodeClass::Perturb => "PERTURB",
            NodeClass::Restore => "RESTORE",
            NodeClass::AntiSat => "ANTISAT",
        }
    }

    /// Two-letter code used in misclassification summaries ("2 DN as PN").
    pub fn code(self) -> &'static str {
        match self {
            NodeClass::Design => "DN",
            NodeClass::Perturb => "PN",
            NodeClass::Restore => "RN",
            NodeClass::AntiSat => "AN",
        }
    }

    pub fn is_protection(self) -> bool {
        self != NodeClass::Design
    }
}

impl fmt::Display for NodeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelError {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),
    #[error("labels line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("no label for gate `{0}`")]
    Missing(String),
    #[error("class {class} is not used by scheme {scheme}")]
    WrongScheme { class: NodeClass, scheme: Scheme },
}

impl FromStr for NodeClass {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DESIGN" | "DN" => Ok(NodeClass::Design),
            "PERTURB" | "PN" => Ok(NodeClass::Perturb),
            "RESTORE" | "RN" => Ok(NodeClass::Restore),
            "ANTISAT" | "AN" => Ok(NodeClass::AntiSat),
            other => Err(LabelError::UnknownClass(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scheme {
    #[serde(rename = "ANTISAT")]
    AntiSat,
    #[serde(rename = "TTLOCK")]
    TtLock,
    SfllHd,
}

impl Scheme {
    /// Classes in model output order. Index 0 is always DESIGN, so argmax
    /// ties fall to DESIGN.
    pub fn classes(self) -> &'static [NodeClass] {
        match self {
            Scheme::AntiSat => &[NodeClass::Design, NodeClass::AntiSat],
            Scheme::TtLock | Scheme::SfllHd => &[NodeClass::Design, NodeClass::Perturb, NodeClass::Restore],
        }
    }

    pub fn class_index(self, c: NodeClass) -> Option<usize> {
        self.classes().iter().position(|&x| x == c)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::AntiSat => "ANTISAT",
            Scheme::TtLock => "TTLOCK",
            Scheme::SfllHd => "SFLL_HD",
        }
    }

    pub fn is_sfll_family(self) -> bool {
        matches!(self, Scheme::TtLock | Scheme::SfllHd)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "ANTISAT" | "ANTI_SAT" => Ok(Scheme::AntiSat),
            "TTLOCK" => Ok(Scheme::TtLock),
            "SFLL_HD" | "SFLL" => Ok(Scheme::SfllHd),
            other => Err(LabelError::UnknownScheme(other.to_string())),
        }
    }
}

/// Gate name to class. Ordered so that serialisations are deterministic.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels(pub BTreeMap<String, NodeClass>);

impl Labels {
    pub fn new() -> Self {
        Labels(BTreeMap::new())
    }

    pub fn get(&self, gate: &str) -> Option<NodeClass> {
        self.0.get(gate).copied()
    }

    pub fn insert(&mut self, gate: impl Into<String>, class: NodeClass) {
        self.0.insert(gate.into(), class);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeClass)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn count(&self, class: NodeClass) -> usize {
        self.0.values().filter(|&&c| c == class).count()
    }

    /// Class of every gate, in gate order.
    pub fn for_netlist(&self, n: &Netlist) -> Result<Vec<NodeClass>, LabelError> {
        n.gates()
            .iter()
            .map(|g| self.get(&g.name).ok_or_else(|| LabelError::Missing(g.name.clone())))
            .collect()
    }

    pub fn from_classes(n: &Netlist, classes: &[NodeClass]) -> Labels {
        Labels(n.gates().iter().zip(classes).map(|(g, &c)| (g.name.clone(), c)).collect())
    }

    /// `gate_name,class` lines in gate order of `n`, with a header.
    pub fn to_csv(&self, n: &Netlist) -> Result<String, LabelError> {
        let mut out = String::from("gate_name,class\n");
        for (g, c) in n.gates().iter().zip(self.for_netlist(n)?) {
            out.push_str(&g.name);
            out.push(',');
            out.push_str(c.name());
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Labels, LabelError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("gate_name")) {
                continue;
            }
            let (g, c) = line
                .split_once(',')
                .ok_or_else(|| LabelError::Csv { line: i + 1, message: "expected `gate,class`".into() })?;
            let class = c.parse().map_err(|e: LabelError| LabelError::Csv { line: i + 1, message: e.to_string() })?;
            map.insert(g.trim().to_string(), class);
        }
        Ok(Labels(map))
    }
}
