//! JSON containers for states, trajectories and reports.
//!
//! A state container is an object with one array per scalar component,
//! named `p`, `u0`.., `theta`, `I0`, `I10`.., plus `time`, `params` and
//! `grid`. Values are written with round-trip precision.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::PeriodicGrid;
use crate::limit::{LimitState, LimitTrajectory};
use crate::params::ScaledParameters;
use crate::state::{FullState, Trajectory};

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::io(path, e))
}

fn component_names(dim: usize) -> Vec<String> {
    let mut names = vec!["p".to_string()];
    names.extend((0..dim).map(|a| format!("u{a}")));
    names.push("theta".into());
    names.push("I0".into());
    names.extend((0..dim).map(|a| format!("I1{a}")));
    names
}

pub fn state_to_value(state: &FullState, params: &ScaledParameters) -> Value {
    let mut m = Map::new();
    for (name, c) in component_names(state.grid.dim).into_iter().zip(state.components()) {
        m.insert(name, json!(c));
    }
    m.insert("time".into(), json!(state.time));
    m.insert("params".into(), json!(params));
    m.insert("grid".into(), json!(state.grid));
    Value::Object(m)
}

pub fn state_from_value(v: &Value) -> Result<(FullState, ScaledParameters)> {
    let bad = |what: &str| Error::Validation(vec![format!("state container: {what}")]);
    let obj = v.as_object().ok_or_else(|| bad("not an object"))?;
    let grid: PeriodicGrid =
        serde_json::from_value(obj.get("grid").cloned().ok_or_else(|| bad("missing grid"))?)
            .map_err(|e| bad(&e.to_string()))?;
    let params: ScaledParameters =
        serde_json::from_value(obj.get("params").cloned().ok_or_else(|| bad("missing params"))?)
            .map_err(|e| bad(&e.to_string()))?;
    let time = obj.get("time").and_then(Value::as_f64).ok_or_else(|| bad("missing time"))?;
    let mut comps = Vec::new();
    for name in component_names(grid.dim) {
        let c: Field = serde_json::from_value(obj.get(&name).cloned().ok_or_else(|| bad(&format!("missing {name}")))?)
            .map_err(|e| bad(&e.to_string()))?;
        comps.push(c);
    }
    let state = FullState::from_components(grid, comps, time);
    state.validate()?;
    Ok((state, params))
}

pub fn write_state(path: &Path, state: &FullState, params: &ScaledParameters) -> Result<()> {
    write_json(path, &state_to_value(state, params))
}

pub fn read_state(path: &Path) -> Result<(FullState, ScaledParameters)> {
    state_from_value(&read_json::<Value>(path)?)
}

pub fn trajectory_to_value(t: &Trajectory) -> Value {
    json!({
        "parameters": t.parameters,
        "metadata": t.metadata,
        "status": t.status,
        "snapshots": t.snapshots.iter().map(|s| state_to_value(s, &t.parameters)).collect::<Vec<_>>(),
    })
}

pub fn write_trajectory(path: &Path, t: &Trajectory) -> Result<()> {
    write_json(path, &trajectory_to_value(t))
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let v: Value = read_json(path)?;
    let bad = |what: &str| Error::Validation(vec![format!("trajectory container: {what}")]);
    let get = |k: &str| v.get(k).cloned().ok_or_else(|| bad(&format!("missing {k}")));
    let snapshots = get("snapshots")?
        .as_array()
        .ok_or_else(|| bad("snapshots is not an array"))?
        .iter()
        .map(|s| state_from_value(s).map(|(st, _)| st))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        parameters: serde_json::from_value(get("parameters")?).map_err(|e| bad(&e.to_string()))?,
        metadata: serde_json::from_value(get("metadata")?).map_err(|e| bad(&e.to_string()))?,
        status: serde_json::from_value(get("status")?).map_err(|e| bad(&e.to_string()))?,
        snapshots,
    })
}

fn limit_state_value(s: &LimitState) -> Value {
    let mut m = Map::new();
    for (a, c) in s.u.iter().enumerate() {
        m.insert(format!("u{a}"), json!(c));
    }
    m.insert("theta".into(), json!(s.theta));
    m.insert("I0".into(), json!(s.i0));
    for (a, c) in s.i1.iter().enumerate() {
        m.insert(format!("I1{a}"), json!(c));
    }
    m.insert("pi".into(), json!(s.pi));
    m.insert("time".into(), json!(s.time));
    m.insert("grid".into(), json!(s.grid));
    Value::Object(m)
}

pub fn write_limit_trajectory(path: &Path, t: &LimitTrajectory) -> Result<()> {
    let v = json!({
        "parameters": t.parameters,
        "regime": t.regime,
        "metadata": t.metadata,
        "status": t.status,
        "max_constraint_residual": t.max_constraint_residual,
        "snapshots": t.snapshots.iter().map(limit_state_value).collect::<Vec<_>>(),
    });
    write_json(path, &v)
}
