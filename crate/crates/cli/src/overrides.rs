//! `--override key=value` applied to the manifest before it is typed.
//!
//! Plain keys address every scenario in the manifest (`duration=300`,
//! `utility.v_star=7.5`). Keys starting with `sweep.` address the sweep
//! specs instead (`sweep.v_star_step=1.0`).

use anyhow::{anyhow, bail, Result};
use toml::Value;

pub fn parse_assignment(raw: &str) -> Result<(String, Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{raw}` is not of the form key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        bail!("override `{raw}` has an empty key segment");
    }
    Ok((key.to_string(), parse_value(value.trim())))
}

fn parse_value(text: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(text.to_string()))
}

fn scenario_tables(root: &mut Value) -> Vec<&mut Value> {
    let mut out = Vec::new();
    let Some(t) = root.as_table_mut() else { return out };
    for (section, value) in t.iter_mut() {
        match (section.as_str(), value) {
            ("simulate" | "stability", Value::Array(jobs)) => {
                out.extend(jobs.iter_mut().filter_map(|j| j.get_mut("scenario")));
            }
            ("sweep", Value::Array(jobs)) => {
                out.extend(jobs.iter_mut().filter_map(|j| j.get_mut("spec")?.get_mut("template")));
            }
            ("benefit", job) => out.extend(job.get_mut("spec").and_then(|s| s.get_mut("template"))),
            ("benchmark", job) => {
                if let Some(Value::Array(cases)) = job.get_mut("cases") {
                    out.extend(cases.iter_mut().filter_map(|c| c.get_mut("scenario")));
                }
            }
            _ => {}
        }
    }
    out
}

fn sweep_tables(root: &mut Value) -> Vec<&mut Value> {
    let mut out = Vec::new();
    let Some(t) = root.as_table_mut() else { return out };
    for (section, value) in t.iter_mut() {
        match (section.as_str(), value) {
            ("sweep", Value::Array(jobs)) => out.extend(jobs.iter_mut().filter_map(|j| j.get_mut("spec"))),
            ("benefit", job) => out.extend(job.get_mut("spec")),
            _ => {}
        }
    }
    out
}

fn set_path(target: &mut Value, path: &[&str], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = target;
    for seg in parents {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| anyhow!("override path crosses a non-table at `{seg}`"))?;
        cur = table
            .entry(seg.to_string())
            .or_insert_with(|| Value::Table(Default::default()));
    }
    cur.as_table_mut()
        .ok_or_else(|| anyhow!("override path ends in a non-table"))?
        .insert(last.to_string(), value);
    Ok(())
}

/// Applies one assignment; errors when it addresses nothing.
pub fn apply(root: &mut Value, key: &str, value: &Value) -> Result<()> {
    let path: Vec<&str> = key.split('.').collect();
    let (targets, path) = match path.split_first() {
        Some((&"sweep", rest)) if !rest.is_empty() => (sweep_tables(root), rest.to_vec()),
        _ => (scenario_tables(root), path),
    };
    if targets.is_empty() {
        bail!("override `{key}` matches nothing in this manifest");
    }
    for t in targets {
        set_path(t, &path, value.clone())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_are_typed() {
        assert_eq!(parse_assignment("duration=300").unwrap().1, Value::Integer(300));
        assert_eq!(parse_assignment("utility.v_star=7.5").unwrap().1, Value::Float(7.5));
        assert_eq!(parse_assignment("initial=kicked").unwrap().1, Value::String("kicked".into()));
        assert!(parse_assignment("novalue").is_err());
        assert!(parse_assignment("a..b=1").is_err());
    }

    #[test]
    fn reaches_every_scenario() {
        let mut root: Value = toml::from_str(
            r#"
            name = "x"
            [[simulate]]
            label = "a"
            scenario = { duration = 10.0 }
            [[simulate]]
            label = "b"
            scenario = { duration = 10.0 }
            "#,
        )
        .unwrap();
        apply(&mut root, "noise.seed", &Value::Integer(9)).unwrap();
        for job in root["simulate"].as_array().unwrap() {
            assert_eq!(job["scenario"]["noise"]["seed"].as_integer(), Some(9));
        }
        assert!(apply(&mut root, "sweep.v_star_step", &Value::Float(1.0)).is_err());
    }
}
