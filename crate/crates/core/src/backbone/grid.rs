use serde::{Deserialize, Serialize};

use crate::error::{FtnError, Result};

/// Tensor geometry of a neuron bank. This is everything a checkpoint needs
/// to rebuild the parameter tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankShape {
    /// Grid side `D`; the bank holds `D * D` neurons.
    pub side: usize,
    /// Hidden layers per neuron (`L >= 1`).
    pub layers: usize,
    /// Inner width of every hidden layer.
    pub inner: usize,
    pub d_in: usize,
    pub d_out: usize,
}

impl BankShape {
    pub fn neurons(&self) -> usize {
        self.side * self.side
    }

    pub fn validate(&self) -> Result<()> {
        if self.side == 0 || self.layers == 0 || self.inner == 0 || self.d_in == 0 || self.d_out == 0 {
            return Err(FtnError::Config(format!("degenerate bank shape {self:?}")));
        }
        Ok(())
    }
}

/// Full grid description: bank geometry plus routing budget and dropout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub shape: BankShape,
    /// KWTA winners per task.
    pub k: usize,
    pub dropout: f64,
}

impl GridSpec {
    pub fn new(
        side: usize,
        k: usize,
        d_in: usize,
        d_out: usize,
        layers: usize,
        inner: usize,
        dropout: f64,
    ) -> Result<Self> {
        let spec = Self { shape: BankShape { side, layers, inner, d_in, d_out }, k, dropout };
        spec.validate()?;
        Ok(spec)
    }

    /// 32x32 grid, 8 layers of width 8, dropout 0.2, k = 128.
    pub fn headline(d_in: usize, d_out: usize) -> Self {
        Self { shape: BankShape { side: 32, layers: 8, inner: 8, d_in, d_out }, k: 128, dropout: 0.2 }
    }

    pub fn neurons(&self) -> usize {
        self.shape.neurons()
    }

    pub fn side(&self) -> usize {
        self.shape.side
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        let h = self.neurons();
        if self.k == 0 || self.k > h {
            return Err(FtnError::Config(format!("k = {} must lie in 1..={h}", self.k)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(FtnError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}
