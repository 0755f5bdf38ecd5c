//! Flat `key = value` training-config files with `#` comments.

use std::path::Path;

use crate::error::{Error, Result};
use crate::training::TrainConfig;

/// Apply one key/value pair onto a config. Every [`TrainConfig`] field is
/// addressable by its field name.
pub fn apply_kv(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
        value
            .parse::<T>()
            .map_err(|_| Error::Config(format!("invalid value {value:?} for key {key:?}")))
    }
    match key {
        "lr" => cfg.lr = parse(key, value)?,
        "beta1" => cfg.beta1 = parse(key, value)?,
        "beta2" => cfg.beta2 = parse(key, value)?,
        "eps" => cfg.eps = parse(key, value)?,
        "batch_size" => cfg.batch_size = parse(key, value)?,
        "max_epochs" => cfg.max_epochs = parse(key, value)?,
        "patience" => cfg.patience = parse(key, value)?,
        "seed" => cfg.seed = parse(key, value)?,
        "precision" => cfg.precision = parse(key, value)?,
        "delta_mode" => cfg.delta_mode = value.parse()?,
        "k_layers" => cfg.k_layers = parse(key, value)?,
        "d" => cfg.d = parse(key, value)?,
        "d_e" => cfg.d_e = parse(key, value)?,
        "n_max" => cfg.n_max = parse(key, value)?,
        "token_hidden" => cfg.token_hidden = parse(key, value)?,
        "channel_hidden" => cfg.channel_hidden = parse(key, value)?,
        "readout_hidden" => cfg.readout_hidden = parse(key, value)?,
        "activation" => cfg.activation = value.parse()?,
        "grad_clip" => cfg.grad_clip = parse(key, value)?,
        "lr_step_every" => cfg.lr_step_every = parse(key, value)?,
        "lr_step_gamma" => cfg.lr_step_gamma = parse(key, value)?,
        other => return Err(Error::Config(format!("unknown config key {other:?}"))),
    }
    Ok(())
}

/// Parse a config file on top of the defaults.
pub fn parse_config_file(path: &Path) -> Result<TrainConfig> {
    let body = std::fs::read_to_string(path)?;
    let mut cfg = TrainConfig::default();
    for (idx, raw) in body.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, got {raw:?}",
                idx + 1
            )));
        };
        apply_kv(&mut cfg, key.trim(), value.trim())
            .map_err(|e| Error::Config(format!("line {}: {e}", idx + 1)))?;
    }
    Ok(cfg)
}
