//! Optional `key=value` config file merged under command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Values from the config file plus a log of every resolved setting.
#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    resolved: Vec<(String, String)>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            for (n, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), n + 1))?;
                file.insert(k.trim().replace('_', "-"), v.trim().to_string());
            }
        }
        Ok(Self {
            file,
            resolved: Vec::new(),
        })
    }

    /// Flag value, else file value, else `default`.
    pub fn pick<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let from_file = self.take::<T>(key)?;
        let value = flag.or(from_file).unwrap_or(default);
        self.resolved.push((key.to_string(), value.to_string()));
        Ok(value)
    }

    /// Like [`Settings::pick`] without a default.
    pub fn pick_opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let from_file = self.take::<T>(key)?;
        let value = flag.or(from_file);
        if let Some(v) = &value {
            self.resolved.push((key.to_string(), v.to_string()));
        }
        Ok(value)
    }

    /// Seed precedence: flag, config file, `TWU_SEED`, then 0.
    pub fn seed(&mut self, flag: Option<u64>) -> Result<u64> {
        let env = match std::env::var("TWU_SEED") {
            Ok(v) => Some(v.trim().parse::<u64>().map_err(|e| anyhow!("TWU_SEED '{v}': {e}"))?),
            Err(_) => None,
        };
        let from_file = self.take::<u64>("seed")?;
        let seed = flag.or(from_file).or(env).unwrap_or(0);
        self.resolved.push(("seed".into(), seed.to_string()));
        Ok(seed)
    }

    fn take<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.file.remove(key) {
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config key '{key}' = '{raw}': {e}")),
            None => Ok(None),
        }
    }

    /// Rejects leftover file keys and prints the resolved settings.
    pub fn finish(self, command: &str) -> Result<()> {
        if let Some(key) = self.file.keys().next() {
            bail!("config key '{key}' is not used by '{command}'");
        }
        println!("# twu {command}");
        for (k, v) in &self.resolved {
            println!("# {k} = {v}");
        }
        Ok(())
    }
}
