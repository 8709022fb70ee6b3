#![allow(dead_code)]

use nalgebra::DMatrix;
use sta_core::cost::CostSpec;
use sta_core::cps::{PlantModel, ScenarioState, TimeGrid};
use sta_core::scenario::{parse_config, ScenarioConfig};

pub fn reference_plant() -> PlantModel {
    PlantModel::full_state(
        DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]),
        DMatrix::from_row_slice(2, 1, &[2.0, 1.0]),
    )
    .unwrap()
}

pub fn reference_spec() -> CostSpec {
    CostSpec::identity(2, 1, 1.0).unwrap()
}

pub fn reference_x0() -> ScenarioState {
    ScenarioState::from_slice(&[1.0, 1.0]).unwrap()
}

pub fn grid(horizon: f64, intervals: usize) -> TimeGrid {
    TimeGrid::new(horizon, intervals).unwrap()
}

pub const REFERENCE_DOC: &str = r#"{
  "plant": { "n": 2, "k": 1, "A": [1, 2, 1, 2], "B": [2, 1] },
  "x0": [1, 1],
  "grid": { "T": 100, "N": 10000 }
}"#;

pub fn reference_config() -> ScenarioConfig {
    parse_config(REFERENCE_DOC).unwrap()
}

/// Paper system on a shorter horizon with a nonzero starting attack, so GAD does real work.
pub fn short_attack_config() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::reference_preset();
    cfg.grid.horizon = 20.0;
    cfg.grid.intervals = 2000;
    cfg
}
