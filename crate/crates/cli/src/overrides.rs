//! `section.key=value` overrides applied to a config before validation.

use anyhow::{anyhow, bail, Context};
use ftn::config::ExperimentConfig;

/// Parse `value` as a TOML literal, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    let probe = format!("v = {value}");
    match toml::from_str::<toml::Table>(&probe) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

pub fn apply(cfg: &ExperimentConfig, overrides: &[String]) -> anyhow::Result<ExperimentConfig> {
    if overrides.is_empty() {
        return Ok(cfg.clone());
    }
    let mut root: toml::Table = toml::from_str(&cfg.to_toml()).context("re-reading config")?;
    for o in overrides {
        let (path, value) = o.split_once('=').ok_or_else(|| anyhow!("override {o:?} is not key=value"))?;
        let keys: Vec<&str> = path.trim().split('.').collect();
        let (last, parents) = keys.split_last().expect("split yields at least one key");
        let mut table = &mut root;
        for k in parents {
            table = match table.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())) {
                toml::Value::Table(t) => t,
                _ => bail!("override {o:?}: {k} is not a section"),
            };
        }
        table.insert(last.to_string(), parse_value(value.trim()));
    }
    let text = toml::to_string(&root)?;
    Ok(ExperimentConfig::from_toml(&text)?)
}

#[cfg(test)]
mod tests {
    use ftn::config::{Experiment, Preset};
    use ftn::configurer::Variant;

    use super::*;

    #[test]
    fn overrides_nested_and_top_level_keys() {
        let base = ExperimentConfig::preset(Experiment::SyntheticClf, Variant::NoMask, Preset::Desk);
        let cfg = apply(&base, &["model.k=16".into(), "variant=ftn-slow".into(), "schedule.steps_per_epoch=7".into()])
            .unwrap();
        assert_eq!((cfg.model.k, cfg.variant, cfg.schedule.steps_per_epoch), (16, Variant::FtnSlow, 7));
    }

    #[test]
    fn unknown_keys_are_errors() {
        let base = ExperimentConfig::preset(Experiment::SyntheticClf, Variant::NoMask, Preset::Desk);
        assert!(apply(&base, &["model.width=3".into()]).is_err());
        assert!(apply(&base, &["nonsense".into()]).is_err());
    }
}
