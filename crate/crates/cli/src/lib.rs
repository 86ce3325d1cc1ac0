//! Shared plumbing for the `mosaic-sim` and `kpi` binaries.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use mosaic_core::utility::FeatureWeights;
use mosaic_sim::operator::read_script;
use mosaic_sim::{Scenario, ScriptEntry};
use serde::Serialize;

/// Loads a scenario file, or the built-in field scenario for `default`.
pub fn load_scenario(path: &str) -> Result<Scenario> {
    if path == "default" {
        return Ok(Scenario::field_default());
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading scenario {path}"))?;
    Scenario::from_json(&text).with_context(|| format!("parsing scenario {path}"))
}

/// Applies per-robot weight overrides from a TOML file.
///
/// Each top-level table is named after a robot and may set any subset of its
/// weight fields, e.g.
///
/// ```toml
/// [dodo]
/// euclidean = 0.5
/// [dodo.type_rewards]
/// EXPLORATION = 12.0
/// ```
pub fn apply_weights(scenario: &mut Scenario, text: &str) -> Result<()> {
    let table: toml::Table = toml::from_str(text).context("parsing weights")?;
    for (robot, overrides) in table {
        let Some(spec) = scenario.robots.iter_mut().find(|r| r.id.as_str() == robot) else {
            bail!("weights for unknown robot {robot:?}");
        };
        let mut merged = serde_json::to_value(&spec.weights)?;
        merge(&mut merged, serde_json::to_value(&overrides)?);
        let weights: FeatureWeights =
            serde_json::from_value(merged).with_context(|| format!("weights for {robot}"))?;
        weights
            .validate()
            .with_context(|| format!("weights for {robot}"))?;
        spec.weights = weights;
    }
    Ok(())
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

pub fn load_script(path: &Path) -> Result<Vec<ScriptEntry>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_script(BufReader::new(file)).with_context(|| format!("reading script {}", path.display()))
}

/// Writes one JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
