//! Declarative experiment configuration, read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backbone::{BankShape, GridSpec, InitGain};
use crate::baselines::{DEFAULT_FISHER_BATCHES, DEFAULT_LAMBDA};
use crate::configurer::{ConfigurerSpec, Schedule, Variant};
use crate::error::{FtnError, Result};
use crate::numcore::{LossKind, MODEL_LR};

pub const DATA_DIR_ENV: &str = "FTN_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SyntheticClf,
    SyntheticReg,
    MnistShuffled,
    PermutedMnist,
}

impl Experiment {
    pub const ALL: [Experiment; 4] =
        [Experiment::SyntheticClf, Experiment::SyntheticReg, Experiment::MnistShuffled, Experiment::PermutedMnist];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SyntheticClf => "synthetic-clf",
            Experiment::SyntheticReg => "synthetic-reg",
            Experiment::MnistShuffled => "mnist-shuffled",
            Experiment::PermutedMnist => "permuted-mnist",
        }
    }

    pub fn loss(self) -> LossKind {
        match self {
            Experiment::SyntheticReg => LossKind::MeanSquaredError,
            _ => LossKind::CrossEntropy,
        }
    }

    pub fn is_synthetic(self) -> bool {
        matches!(self, Experiment::SyntheticClf | Experiment::SyntheticReg)
    }

    pub fn dims(self) -> (usize, usize) {
        match self {
            Experiment::SyntheticClf => (2, 2),
            Experiment::SyntheticReg => (2, 1),
            _ => (784, 10),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = FtnError;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| FtnError::Config(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Full,
    Desk,
}

impl FromStr for Preset {
    type Err = FtnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            _ => Err(FtnError::Config(format!("unknown preset {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Grid side `D`; the bank has `D * D` neurons.
    pub side: usize,
    pub layers: usize,
    pub inner: usize,
    pub dropout: f64,
    pub k: usize,
    pub lr: f64,
    /// Multiplier on the `±sqrt(1 / fan_in)` bound of the layers inside
    /// each neuron.
    #[serde(default = "unit_gain")]
    pub init_gain: f64,
    /// Multiplier on the readout bound; zero starts every readout column at
    /// zero.
    #[serde(default = "unit_gain")]
    pub readout_gain: f64,
}

fn unit_gain() -> f64 {
    1.0
}

/// Init gains used by both presets. Unit neuron gain leaves eight tanh layers
/// too contractive to learn the synthetic tasks in the step budget. The
/// readout keeps the plain fan-in bound: with a zero readout every untrained
/// neuron has an exactly zero mask logit, and `kwta-only` degenerates to
/// filling the lowest free indices.
pub const PRESET_INIT_GAIN: InitGain = InitGain { neuron: 2.5, readout: 1.0 };

/// `ftn-fast` kernel on the 16 x 16 desk grid. The 17-wide kernel is wider
/// than that grid and wraps onto itself; 9 keeps the same reach relative to
/// the grid side as 17 does on 32.
pub const DESK_FAST_KERNEL: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub tasks: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch: usize,
    pub reconfig_batch: usize,
    pub eval_batch: usize,
    pub support_batch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigurerConfig {
    pub steps: usize,
    pub lr: f64,
    pub schedule: Schedule,
    /// Overrides the `ftn-fast` kernel side; other variants ignore it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fast_kernel: Option<usize>,
    /// Overrides the variant's smoothing kernel side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<usize>,
    /// Overrides the variant's number of smoothing passes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EwcConfig {
    pub lambda: f64,
    pub fisher_batches: usize,
    pub fisher_batch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub variant: Variant,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    pub configurer: ConfigurerConfig,
    pub ewc: EwcConfig,
}

impl ExperimentConfig {
    /// Full-size (`Full`) or reduced (`Desk`) settings for `experiment`.
    pub fn preset(experiment: Experiment, variant: Variant, preset: Preset) -> Self {
        let (steps, lr, schedule) = match experiment {
            Experiment::SyntheticClf => (1, 1.0, Schedule::PerBatch),
            Experiment::SyntheticReg => (10, 0.2, Schedule::PerBatch),
            Experiment::MnistShuffled => (20, 0.2, Schedule::PerEpoch),
            Experiment::PermutedMnist => (10, 0.3, Schedule::PerEpoch),
        };
        let (tasks, epochs, steps_per_epoch) = match (experiment, preset) {
            (Experiment::SyntheticClf | Experiment::SyntheticReg, Preset::Full) => (3, 1, 1000),
            (Experiment::SyntheticClf | Experiment::SyntheticReg, Preset::Desk) => (3, 1, 250),
            (Experiment::MnistShuffled, Preset::Full) => (5, 5, 400),
            (Experiment::MnistShuffled, Preset::Desk) => (3, 2, 200),
            (Experiment::PermutedMnist, Preset::Full) => (10, 3, 400),
            (Experiment::PermutedMnist, Preset::Desk) => (4, 1, 200),
        };
        let (side, k, seeds) = match preset {
            Preset::Full => (32, 128, (0..8).collect()),
            Preset::Desk => (16, 32, (0..3).collect()),
        };
        Self {
            experiment,
            variant,
            seeds,
            data_dir: None,
            out_dir: PathBuf::from("runs"),
            model: ModelConfig {
                side,
                layers: 8,
                inner: 8,
                dropout: 0.2,
                k,
                lr: MODEL_LR,
                init_gain: PRESET_INIT_GAIN.neuron,
                readout_gain: PRESET_INIT_GAIN.readout,
            },
            schedule: ScheduleConfig {
                tasks,
                epochs,
                steps_per_epoch,
                batch: 256,
                reconfig_batch: 256,
                eval_batch: 4096,
                support_batch: 256,
            },
            configurer: ConfigurerConfig {
                steps,
                lr,
                schedule,
                fast_kernel: (preset == Preset::Desk).then_some(DESK_FAST_KERNEL),
                kernel: None,
                passes: None,
            },
            ewc: EwcConfig { lambda: DEFAULT_LAMBDA, fisher_batches: DEFAULT_FISHER_BATCHES, fisher_batch: 256 },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| FtnError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FtnError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| FtnError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let (d_in, d_out) = self.experiment.dims();
        let m = &self.model;
        GridSpec::new(m.side, m.k, d_in, d_out, m.layers, m.inner, m.dropout)
    }

    pub fn init_gain(&self) -> InitGain {
        InitGain { neuron: self.model.init_gain, readout: self.model.readout_gain }
    }

    pub fn bank_shape(&self) -> Result<BankShape> {
        Ok(self.grid()?.shape)
    }

    pub fn configurer_spec(&self) -> Result<ConfigurerSpec> {
        let c = &self.configurer;
        let mut spec = ConfigurerSpec::new(self.variant, self.model.k, c.steps, c.lr, c.schedule)?;
        if let (Variant::FtnFast, Some(kernel)) = (self.variant, c.fast_kernel) {
            spec.kernel = kernel;
        }
        if let Some(kernel) = c.kernel {
            spec.kernel = kernel;
        }
        if let Some(passes) = c.passes {
            spec.lateral_steps = passes;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Explicit setting, then `FTN_DATA_DIR`, then `data/mnist`.
    pub fn resolved_data_dir(&self) -> PathBuf {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data/mnist"))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?.validate()?;
        self.configurer_spec()?;
        self.init_gain().validate().map_err(|_| {
            FtnError::Config("model.init_gain must be positive and model.readout_gain nonnegative".into())
        })?;
        let s = &self.schedule;
        let nonzero = [
            ("tasks", s.tasks),
            ("epochs", s.epochs),
            ("steps_per_epoch", s.steps_per_epoch),
            ("batch", s.batch),
            ("reconfig_batch", s.reconfig_batch),
            ("eval_batch", s.eval_batch),
            ("support_batch", s.support_batch),
        ];
        if let Some((name, _)) = nonzero.iter().find(|(_, v)| *v == 0) {
            return Err(FtnError::Config(format!("schedule.{name} must be positive")));
        }
        if self.experiment.is_synthetic() && s.tasks > crate::tasks::N_TASKS {
            return Err(FtnError::Config(format!("the synthetic benchmark has {} tasks", crate::tasks::N_TASKS)));
        }
        if self.seeds.is_empty() {
            return Err(FtnError::Config("at least one seed is required".into()));
        }
        if !(self.model.lr > 0.0) {
            return Err(FtnError::Config("model.lr must be positive".into()));
        }
        if self.ewc.lambda < 0.0 || !self.ewc.lambda.is_finite() {
            return Err(FtnError::Config("ewc.lambda must be a finite non-negative number".into()));
        }
        if self.variant == Variant::Ewc && (self.ewc.fisher_batches == 0 || self.ewc.fisher_batch == 0) {
            return Err(FtnError::Config("ewc needs a positive fisher sample".into()));
        }
        Ok(())
    }

    /// Whether runs of `self` and `other` can share a report table.
    pub fn compatible(&self, other: &Self) -> bool {
        let strip = |c: &Self| {
            let mut c = c.clone();
            c.variant = Variant::NoMask;
            c.seeds.clear();
            c.data_dir = None;
            c.out_dir = PathBuf::new();
            c.configurer.kernel = None;
            c.configurer.passes = None;
            c
        };
        strip(self) == strip(other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_roundtrip_through_toml() {
        for e in Experiment::ALL {
            for p in [Preset::Full, Preset::Desk] {
                let cfg = ExperimentConfig::preset(e, Variant::FtnSlow, p);
                cfg.validate().unwrap();
                assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
            }
        }
    }

    #[test]
    fn headline_values() {
        let c = ExperimentConfig::preset(Experiment::MnistShuffled, Variant::FtnSlow, Preset::Full);
        assert_eq!(c.grid().unwrap().neurons(), 1024);
        assert_eq!((c.model.k, c.model.layers, c.model.inner, c.model.dropout), (128, 8, 8, 0.2));
        assert_eq!((c.schedule.tasks, c.schedule.epochs, c.schedule.steps_per_epoch), (5, 5, 400));
        assert_eq!((c.configurer.steps, c.configurer.lr), (20, 0.2));
        assert_eq!(c.seeds.len(), 8);
        let spec = c.configurer_spec().unwrap();
        assert_eq!((spec.kernel, spec.lateral_steps), (3, 15));
    }

    #[test]
    fn desk_fast_kernel_fits_the_grid() {
        let desk = ExperimentConfig::preset(Experiment::SyntheticClf, Variant::FtnFast, Preset::Desk);
        assert_eq!(desk.configurer_spec().unwrap().kernel, DESK_FAST_KERNEL);
        assert!(DESK_FAST_KERNEL < desk.model.side);
        let full = ExperimentConfig::preset(Experiment::SyntheticClf, Variant::FtnFast, Preset::Full);
        assert_eq!(full.configurer_spec().unwrap().kernel, 17);
    }

    #[test]
    fn switching_variant_matches_a_fresh_preset() {
        for e in Experiment::ALL {
            for p in [Preset::Full, Preset::Desk] {
                for from in Variant::ALL {
                    for to in Variant::ALL {
                        let mut c = ExperimentConfig::preset(e, from, p);
                        c.variant = to;
                        assert_eq!(c, ExperimentConfig::preset(e, to, p));
                        if to.is_adaptive() {
                            assert_eq!(
                                c.configurer_spec().unwrap(),
                                ExperimentConfig::preset(e, to, p).configurer_spec().unwrap()
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut text = ExperimentConfig::preset(Experiment::SyntheticClf, Variant::NoMask, Preset::Desk).to_toml();
        text = text.replace("dropout =", "drop_out =");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(FtnError::Config(_))));
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = ExperimentConfig::preset(Experiment::SyntheticClf, Variant::NoMask, Preset::Desk);
        c.model.k = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::preset(Experiment::SyntheticClf, Variant::NoMask, Preset::Desk);
        c.schedule.tasks = 4;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::preset(Experiment::SyntheticClf, Variant::FtnFast, Preset::Desk);
        c.configurer.kernel = Some(4);
        assert!(c.validate().is_err());
    }

    #[test]
    fn compatibility_ignores_variant_and_seeds() {
        let a = ExperimentConfig::preset(Experiment::PermutedMnist, Variant::NoMask, Preset::Desk);
        let mut b = ExperimentConfig::preset(Experiment::PermutedMnist, Variant::Ewc, Preset::Desk);
        b.seeds = vec![7];
        assert!(a.compatible(&b));
        b.model.k = 16;
        assert!(!a.compatible(&b));
    }
}
