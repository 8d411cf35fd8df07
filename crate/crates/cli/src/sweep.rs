//! Grids of runs that differ along one or two config keys.

use std::path::Path;

use rayon::prelude::*;

use crate::config::{from_table, RunConfig};
use crate::error::{io_at, CliError, Result};
use crate::experiment::run_all_seeds;
use crate::output::{emit_plot_data, write_run, SweepPoint};

/// Keys a sweep may vary, as dotted paths.
pub const AXES: [&str; 17] = [
    "rounds",
    "method",
    "data.clients",
    "data.alpha",
    "train.local_steps",
    "train.stepsize",
    "train.momentum",
    "train.batch",
    "projection.rank",
    "projection.mode",
    "projection.storage",
    "model.kind",
    "model.hidden",
    "model.lora_rank",
    "synthetic.dim",
    "synthetic.hetero",
    "synthetic.noise",
];

/// Maps short names (`r`, `p`, `alpha`, …) to dotted paths.
pub fn resolve_axis(name: &str) -> Result<&'static str> {
    let path = match name {
        "r" | "rank" => "projection.rank",
        "p" | "N" | "clients" => "data.clients",
        "alpha" | "α" => "data.alpha",
        "eta" | "stepsize" => "train.stepsize",
        "mu" | "momentum" => "train.momentum",
        "T" => "rounds",
        "tau" => "train.local_steps",
        "b" | "batch" => "train.batch",
        other => other,
    };
    AXES.iter().copied().find(|a| *a == path).ok_or_else(|| CliError::Config {
        path: name.to_string(),
        message: format!("unknown sweep axis; expected one of {}", AXES.join(", ")),
    })
}

fn parse_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    if let Ok(i) = raw.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(x) = raw.parse::<f64>() {
        toml::Value::Float(x)
    } else {
        toml::Value::String(raw.to_string())
    }
}

fn set_path(table: &mut toml::Table, path: &str, value: toml::Value) {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().expect("non-empty path");
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .expect("config sections are tables");
    }
    cur.insert(last.to_string(), value);
}

/// The configs of a sweep, in row-major order over the axes.
pub fn expand(base_text: &str, axes: &[(String, Vec<String>)]) -> Result<Vec<(Vec<String>, RunConfig)>> {
    let base: toml::Table = base_text.parse().map_err(|e: toml::de::Error| CliError::Config {
        path: String::new(),
        message: e.message().to_string(),
    })?;
    let base_name = base.get("name").and_then(|v| v.as_str()).unwrap_or("sweep").to_string();
    let resolved: Vec<&str> = axes.iter().map(|(a, _)| resolve_axis(a)).collect::<Result<_>>()?;
    for (name, values) in axes {
        if values.is_empty() {
            return Err(CliError::Config {
                path: name.clone(),
                message: "no sweep values given".into(),
            });
        }
    }
    let mut combos: Vec<Vec<String>> = vec![Vec::new()];
    for (_, values) in axes {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push(v.trim().to_string());
                    c
                })
            })
            .collect();
    }
    combos
        .into_iter()
        .map(|values| {
            let mut table = base.clone();
            let mut name = base_name.clone();
            for (path, v) in resolved.iter().zip(&values) {
                set_path(&mut table, path, parse_value(v));
                let key = path.rsplit('.').next().unwrap_or(path);
                name.push_str(&format!("__{key}_{}", v.replace(['/', '\\', ' '], "_")));
            }
            table.insert("name".into(), toml::Value::String(name));
            Ok((values, from_table(table)?))
        })
        .collect()
}

/// Runs every point, writing each under `out/<point name>/` and the
/// combined files into `out`.
pub fn run_sweep(base_text: &str, axes: &[(String, Vec<String>)], smoke: bool, out: &Path) -> Result<Vec<SweepPoint>> {
    let mut configs = expand(base_text, axes)?;
    if smoke {
        configs.iter_mut().for_each(|(_, c)| *c = c.smoke());
    }
    std::fs::create_dir_all(out).map_err(io_at(out))?;
    let points = configs
        .par_iter()
        .map(|(values, cfg)| {
            let summary = run_all_seeds(cfg)?;
            write_run(&summary, &out.join(&cfg.name))?;
            Ok(SweepPoint {
                values: values.clone(),
                summary,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = axes.iter().map(|(a, _)| resolve_axis(a).map(str::to_string)).collect::<Result<_>>()?;
    emit_plot_data(&names, &points, out)?;
    Ok(points)
}
