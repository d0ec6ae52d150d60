//! `key = value` run files and the value syntaxes shared with the flags.
//!
//! A run file holds one `key = value` per line; `#` starts a comment. Keys
//! are the long flag names without dashes (`basic-bw = 5`). Flags given on
//! the command line win over the file, and the file wins over defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use eonsurv::embedding::{Scheme, SchemeConfig};
use eonsurv::spectrum::{Modulation, ModulationTable};

#[derive(Debug, Default, Clone, PartialEq)]
pub struct RunFile {
    values: BTreeMap<String, String>,
}

impl RunFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{line}`", i + 1))?;
            let key = k.trim().to_string();
            if key.is_empty() {
                bail!("line {}: empty key", i + 1);
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                bail!("line {}: `{key}` given twice", i + 1);
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {path}"))?;
        Self::parse(&text).with_context(|| format!("in config {path}"))
    }

    /// Fails on any key outside `known`, so typos do not pass silently.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        for k in self.values.keys() {
            if !known.contains(&k.as_str()) {
                bail!("unknown config key `{k}` (expected one of: {})", known.join(", "));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// Flag, then run file, then `default`.
pub fn pick<'a>(flag: &'a Option<String>, file: &'a RunFile, key: &str, default: &'a str) -> &'a str {
    flag.as_deref().or_else(|| file.get(key)).unwrap_or(default)
}

pub fn pick_opt<'a>(flag: &'a Option<String>, file: &'a RunFile, key: &str) -> Option<&'a str> {
    flag.as_deref().or_else(|| file.get(key))
}

pub fn parse_one<T>(key: &str, s: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    s.trim().parse().map_err(|e| anyhow!("{key}: cannot parse `{s}`: {e}"))
}

/// Comma-separated values.
pub fn parse_list<T>(key: &str, s: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    let items: Vec<T> =
        s.split(',').filter(|p| !p.trim().is_empty()).map(|p| parse_one(key, p)).collect::<Result<_>>()?;
    if items.is_empty() {
        bail!("{key}: empty list");
    }
    Ok(items)
}

/// Seeds as a list whose items may be inclusive ranges: `1..5,9`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (parse_one("seeds", a)?, parse_one("seeds", b.trim_start_matches('='))?);
                if a > b {
                    bail!("seeds: empty range `{part}`");
                }
                out.extend(a..=b);
            }
            None => out.push(parse_one("seeds", part)?),
        }
    }
    if out.is_empty() {
        bail!("seeds: empty list");
    }
    Ok(out)
}

/// `apss`, `mdf`, `mpf:4`: a scheme with an optional K.
pub fn parse_scheme(s: &str, h: u32) -> Result<SchemeConfig> {
    let (name, k) = match s.split_once(':') {
        Some((n, k)) => (n, Some(parse_one::<usize>("schemes", k)?)),
        None => (s, None),
    };
    let scheme: Scheme = name.trim().parse()?;
    Ok(SchemeConfig::new(scheme, k.unwrap_or(scheme.default_k()), h)?)
}

/// `NAME:efficiency:reach_km` entries, comma-separated, in table order.
pub fn parse_modulation(entries: Option<&str>, slot_width: &str, guard: &str) -> Result<ModulationTable> {
    let base = ModulationTable::default();
    let slot_width: f64 = parse_one("slot-width", slot_width)?;
    let guard: usize = parse_one("guard-slots", guard)?;
    let entries = match entries {
        None => base.entries().to_vec(),
        Some(s) => s
            .split(',')
            .map(|e| {
                let f: Vec<&str> = e.trim().split(':').collect();
                let [name, eff, reach] = f[..] else {
                    bail!("modulation: expected NAME:efficiency:reach_km, got `{e}`");
                };
                Ok(Modulation {
                    name: name.to_string(),
                    efficiency: parse_one("modulation", eff)?,
                    reach_km: parse_one("modulation", reach)?,
                })
            })
            .collect::<Result<_>>()?,
    };
    Ok(ModulationTable::new(entries, slot_width, guard)?)
}
