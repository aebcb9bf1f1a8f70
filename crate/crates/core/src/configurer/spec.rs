use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FtnError, Result};

/// The mask configurer variants compared in the benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// 17x17 kernel, 2 smoothing passes.
    FtnFast,
    /// 3x3 kernel, 15 smoothing passes.
    FtnSlow,
    /// Gradient proposal and KWTA, no smoothing.
    KwtaOnly,
    /// Disjoint static block per task.
    FixedMask,
    /// One shared static block of `k` slots for every task.
    NoMask,
    /// Shared block plus an elastic weight consolidation penalty.
    Ewc,
    /// Every neuron on. Debug only; not capacity-matched.
    AllOnes,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::FtnFast,
        Variant::FtnSlow,
        Variant::KwtaOnly,
        Variant::FixedMask,
        Variant::NoMask,
        Variant::Ewc,
        Variant::AllOnes,
    ];

    pub fn is_adaptive(self) -> bool {
        matches!(self, Variant::FtnFast | Variant::FtnSlow | Variant::KwtaOnly)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::FtnFast => "ftn-fast",
            Variant::FtnSlow => "ftn-slow",
            Variant::KwtaOnly => "kwta-only",
            Variant::FixedMask => "fixed-mask",
            Variant::NoMask => "no-mask",
            Variant::Ewc => "ewc",
            Variant::AllOnes => "all-ones",
        }
    }

    /// `(kernel side, smoothing passes)`.
    pub fn lateral(self) -> (usize, usize) {
        match self {
            Variant::FtnFast => (17, 2),
            Variant::FtnSlow => (3, 15),
            _ => (1, 0),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = FtnError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| FtnError::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Reconfigure before every training batch.
    PerBatch,
    /// Reconfigure at the start of every epoch.
    PerEpoch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigurerSpec {
    pub variant: Variant,
    pub kernel: usize,
    pub lateral_steps: usize,
    pub reconfig_steps: usize,
    pub reconfig_lr: f64,
    pub k: usize,
    pub schedule: Schedule,
}

impl ConfigurerSpec {
    pub fn new(
        variant: Variant,
        k: usize,
        reconfig_steps: usize,
        reconfig_lr: f64,
        schedule: Schedule,
    ) -> Result<Self> {
        let (kernel, lateral_steps) = variant.lateral();
        let spec = Self { variant, kernel, lateral_steps, reconfig_steps, reconfig_lr, k, schedule };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(FtnError::Config(format!("kernel side {} must be odd", self.kernel)));
        }
        if self.k == 0 {
            return Err(FtnError::Config("k must be at least 1".into()));
        }
        if self.variant.is_adaptive() && self.reconfig_steps == 0 {
            return Err(FtnError::Config(format!("{} needs at least one reconfiguration step", self.variant)));
        }
        if self.variant.is_adaptive() && !(self.reconfig_lr > 0.0) {
            return Err(FtnError::Config(format!("reconfiguration lr {} must be positive", self.reconfig_lr)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_table_defaults() {
        assert_eq!(Variant::FtnFast.lateral(), (17, 2));
        assert_eq!(Variant::FtnSlow.lateral(), (3, 15));
        assert_eq!(Variant::KwtaOnly.lateral().1, 0);
        let s = ConfigurerSpec::new(Variant::FtnSlow, 128, 20, 0.2, Schedule::PerEpoch).unwrap();
        assert_eq!((s.kernel, s.lateral_steps), (3, 15));
    }

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("ftn-medium".parse::<Variant>().is_err());
    }

    #[test]
    fn adaptive_needs_steps() {
        assert!(ConfigurerSpec::new(Variant::KwtaOnly, 8, 0, 1.0, Schedule::PerBatch).is_err());
        assert!(ConfigurerSpec::new(Variant::FixedMask, 8, 0, 0.0, Schedule::PerBatch).is_ok());
    }

    #[test]
    fn even_kernel_rejected() {
        let mut s = ConfigurerSpec::new(Variant::FtnSlow, 8, 1, 1.0, Schedule::PerBatch).unwrap();
        s.kernel = 4;
        assert!(s.validate().is_err());
    }
}
