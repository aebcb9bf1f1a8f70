use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{FtnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "task")]
pub enum Provenance {
    /// Produced by the gradient / smoothing / KWTA configurer.
    Configured,
    /// Static disjoint block for the given task index.
    FixedBlock(usize),
    /// The single shared block used by every task.
    SingleBlock,
    AllOnes,
}

/// Binary routing mask over the `D x D` grid, plus the real logits it was
/// derived from (all zero for static masks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mask {
    pub side: usize,
    pub logits: Vec<f64>,
    #[serde(serialize_with = "gates_to_text", deserialize_with = "gates_from_text")]
    pub gates: Vec<bool>,
    pub provenance: Provenance,
}

impl Mask {
    pub fn from_gates(side: usize, gates: Vec<bool>, provenance: Provenance) -> Result<Self> {
        if gates.len() != side * side {
            return Err(FtnError::Config(format!("mask of length {} does not fit a {side}x{side} grid", gates.len())));
        }
        Ok(Self { side, logits: vec![0.0; gates.len()], gates, provenance })
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Indices of active neurons, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.gates.iter().enumerate().filter(|(_, &g)| g).map(|(i, _)| i).collect()
    }

    pub fn count(&self) -> usize {
        self.gates.iter().filter(|&&g| g).count()
    }

    pub fn gate_values(&self) -> Vec<f64> {
        self.gates.iter().map(|&g| if g { 1.0 } else { 0.0 }).collect()
    }

    /// Row-major `0`/`1` characters, one per neuron.
    pub fn to_text(&self) -> String {
        gates_text(&self.gates)
    }
}

fn gates_text(gates: &[bool]) -> String {
    gates.iter().map(|&g| if g { '1' } else { '0' }).collect()
}

pub fn parse_gates(text: &str) -> Result<Vec<bool>> {
    text.trim()
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(FtnError::Data(format!("invalid gate character {other:?}"))),
        })
        .collect()
}

fn gates_to_text<S: Serializer>(gates: &[bool], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&gates_text(gates))
}

fn gates_from_text<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<bool>, D::Error> {
    let text = String::deserialize(d)?;
    parse_gates(&text).map_err(serde::de::Error::custom)
}
