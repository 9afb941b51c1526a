//! Scenario runner, configuration, sweeps and frequency diagnostics.

pub mod config;
pub mod freq;
pub mod scenario;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{Config, PerturbMode, Provenance, ScenarioKind, SweepGrid};
pub use freq::{fit_sinusoid, freq_extract, Peak, SineFit};
pub use scenario::{run_scenario, ScenarioResult, StabilityReport};

use crate::average::linear_fit;
use crate::error::{ChoreoError, Result};

/// One cell of a parameter sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRecord {
    pub index: usize,
    pub params: BTreeMap<String, f64>,
    pub result: Option<ScenarioResult>,
    pub error: Option<String>,
}

/// Cartesian product of the non-empty grid axes, `delta` outermost.
pub fn grid_cells(cfg: &Config) -> Vec<(BTreeMap<String, f64>, Config)> {
    let g = &cfg.sweep;
    let mut cells = vec![(BTreeMap::new(), cfg.clone())];
    let axes: [(&str, Vec<f64>); 4] = [
        ("delta", g.delta.clone()),
        ("alpha", g.alpha.clone()),
        ("n", g.n.iter().map(|v| *v as f64).collect()),
        ("amplitude", g.amplitude.clone()),
    ];
    for (name, values) in axes {
        if values.is_empty() {
            continue;
        }
        let mut next = Vec::with_capacity(cells.len() * values.len());
        for (params, c) in &cells {
            for &v in &values {
                let mut p = params.clone();
                p.insert(name.to_string(), v);
                let mut c = c.clone();
                apply(&mut c, name, v);
                next.push((p, c));
            }
        }
        cells = next;
    }
    cells
}

fn apply(c: &mut Config, name: &str, v: f64) {
    let scaling = c.scenario == ScenarioKind::ScalingProbe;
    match name {
        "delta" if scaling => c.scaling.deltas = vec![v],
        "delta" => c.system.delta = v,
        "alpha" if scaling => c.scaling.alpha = v,
        "alpha" => c.system.alpha = v,
        "n" => c.system.n = v as usize,
        _ => c.run.amplitude = v,
    }
}

/// Runs every grid cell in parallel; records come back in grid order and
/// a failing cell only marks its own record.
pub fn sweep(cfg: &Config) -> Vec<SweepRecord> {
    grid_cells(cfg)
        .into_par_iter()
        .enumerate()
        .map(|(index, (params, c))| match run_scenario(&c) {
            Ok(r) => SweepRecord { index, params, result: Some(r), error: None },
            Err(e) => SweepRecord { index, params, result: None, error: Some(e.to_string()) },
        })
        .collect()
}

/// Log-log slope of `|d^4 F|` against `delta` across scaling-probe cells.
pub fn sweep_slope(records: &[SweepRecord]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| match &r.result {
            Some(ScenarioResult::Scaling(s)) if s.deltas.len() == 1 => Some((s.deltas[0].ln(), s.fourth[0].abs().ln())),
            _ => None,
        })
        .collect();
    if pts.len() < 2 {
        return Err(ChoreoError::InvalidInput("need at least two single-delta scaling cells".into()));
    }
    let (slope, _, r2) = linear_fit(&pts);
    Ok((slope, r2))
}
