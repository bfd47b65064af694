//! Run configuration: a preset, then an optional TOML file, then
//! `--set key=value` overrides, then dedicated flags.

use crate::Usage;
use cotask::episode::EpisodeConfig;
use cotask::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;
use toml::{Table, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub episode: EpisodeConfig,
    pub train: TrainConfig,
}

const SECTIONS: [&str; 2] = ["episode", "train"];

fn base_table(base: &RunConfig) -> Table {
    match Value::try_from(base) {
        Ok(Value::Table(t)) => t,
        _ => unreachable!("run configuration serializes to a table"),
    }
}

/// Overlays `over` onto `base`, rejecting keys `base` does not have.
fn merge(base: &mut Table, over: Table, prefix: &str) -> Result<(), Usage> {
    for (k, v) in over {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match (base.get_mut(&k), v) {
            (None, _) => return Err(Usage(format!("unknown configuration key `{path}`"))),
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o, &path)?,
            (Some(Value::Table(_)), _) => {
                return Err(Usage(format!("`{path}` is a section, not a value")))
            }
            (Some(slot), v) => *slot = v,
        }
    }
    Ok(())
}

/// Parses the right-hand side of `--set`. Bare words become strings so
/// `--set episode.pool=novel` works without quoting.
fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

/// Resolves `key` to a full dotted path. A key without a section is
/// looked up in both sections and must be unambiguous.
fn resolve(table: &Table, key: &str) -> Result<Vec<String>, Usage> {
    let parts: Vec<String> = key.split('.').map(str::to_string).collect();
    if SECTIONS.contains(&parts[0].as_str()) {
        return Ok(parts);
    }
    let hits: Vec<&str> = SECTIONS
        .into_iter()
        .filter(|s| lookup(table, s, &parts).is_some())
        .collect();
    match hits[..] {
        [s] => Ok(std::iter::once(s.to_string()).chain(parts).collect()),
        [] => Err(Usage(format!("unknown configuration key `{key}`"))),
        _ => Err(Usage(format!(
            "`{key}` is ambiguous; write `episode.{key}` or `train.{key}`"
        ))),
    }
}

fn lookup<'a>(table: &'a Table, section: &str, parts: &[String]) -> Option<&'a Value> {
    let mut v = table.get(section)?;
    for p in parts {
        v = v.as_table()?.get(p)?;
    }
    Some(v)
}

fn apply_set(table: &mut Table, assignment: &str) -> Result<(), Usage> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Usage(format!("expected KEY=VALUE, got `{assignment}`")))?;
    let path = resolve(table, key.trim())?;
    let mut over = Table::new();
    let (last, init) = path.split_last().expect("split yields one part");
    let mut cursor = &mut over;
    for p in init {
        cursor = cursor
            .entry(p.clone())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .expect("fresh table");
    }
    cursor.insert(last.clone(), parse_value(raw.trim()));
    merge(table, over, "")
}

/// Builds the configuration from `base`, a file and assignments, in that
/// order of precedence (later wins).
pub fn build(
    base: &RunConfig,
    file: Option<&Path>,
    sets: &[String],
) -> Result<RunConfig, anyhow::Error> {
    let mut table = base_table(base);
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Usage(format!("cannot read {}: {e}", path.display())))?;
        let over: Table = text
            .parse()
            .map_err(|e| Usage(format!("{}: {e}", path.display())))?;
        merge(&mut table, over, "")?;
    }
    for s in sets {
        apply_set(&mut table, s)?;
    }
    let cfg: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e| Usage(format!("invalid configuration: {e}")))?;
    cfg.episode.validate().map_err(|e| Usage(e.to_string()))?;
    cfg.train.validate().map_err(|e| Usage(e.to_string()))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cotask::world::ObjectPool;

    fn base() -> RunConfig {
        RunConfig {
            episode: EpisodeConfig::default(),
            train: TrainConfig::desk(),
        }
    }

    fn usage(e: anyhow::Error) -> String {
        e.downcast::<Usage>().expect("usage error").0
    }

    #[test]
    fn overrides_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "[episode]\ndepth = 5\np_multi = 1\n[episode.reward]\nbeta = 2.5\n",
        )
        .unwrap();
        let sets = vec!["depth=4".to_string(), "episode.pool=novel".to_string()];
        let cfg = build(&base(), Some(&path), &sets).unwrap();
        assert_eq!(cfg.episode.depth, 4);
        assert_eq!(cfg.episode.p_multi, 1.0);
        assert_eq!(cfg.episode.reward.beta, 2.5);
        assert_eq!(cfg.episode.reward.r0, base().episode.reward.r0);
        assert_eq!(cfg.episode.pool, ObjectPool::Novel);
    }

    #[test]
    fn unknown_and_ambiguous_keys_rejected() {
        let e = usage(build(&base(), None, &["episode.dept=4".into()]).unwrap_err());
        assert!(e.contains("episode.dept"), "{e}");
        let e = usage(build(&base(), None, &["seed=4".into()]).unwrap_err());
        assert!(e.contains("ambiguous"), "{e}");
        let cfg = build(&base(), None, &["train.seed=4".into()]).unwrap();
        assert_eq!(cfg.train.seed, 4);
    }

    #[test]
    fn bad_values_rejected() {
        assert!(build(&base(), None, &["p_multi=2".into()]).is_err());
        assert!(build(&base(), None, &["depth=deep".into()]).is_err());
        assert!(build(&base(), None, &["episode.reward=1".into()]).is_err());
        assert!(build(&base(), None, &["depth".into()]).is_err());
    }
}
