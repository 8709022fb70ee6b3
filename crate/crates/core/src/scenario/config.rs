use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cost::CostSpec;
use crate::cps::{AttackSignal, PlantModel, ScenarioState, TimeGrid};
use crate::error::{Result, StaError};
use crate::gad::GadConfig;
use crate::stealth::{StealthConfig, StealthMode};

/// Plant matrices, flattened row-major, with their declared dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub n: usize,
    pub k: usize,
    /// Output dimension; defaults to `n` when `L` is omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    /// Output map; identity when omitted.
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub intervals: usize,
}

/// Cost weights. Omitted matrices default to `Qx = I`, `Ru = I`, `Qf = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    #[serde(rename = "Qx", default, skip_serializing_if = "Option::is_none")]
    pub qx: Option<Vec<f64>>,
    #[serde(rename = "Ru", default, skip_serializing_if = "Option::is_none")]
    pub ru: Option<Vec<f64>>,
    #[serde(rename = "Qf", default, skip_serializing_if = "Option::is_none")]
    pub qf: Option<Vec<f64>>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    1.0
}

impl Default for CostSection {
    fn default() -> Self {
        CostSection {
            qx: None,
            ru: None,
            qf: None,
            gamma: default_gamma(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GadSection {
    #[serde(rename = "lambda_K")]
    pub lambda_k: f64,
    pub lambda_delta: f64,
    pub eta: f64,
    pub max_iters: usize,
    pub delta_max: f64,
    pub backtrack_max: usize,
    pub stale_costate: bool,
    /// Constant value every attack channel starts from.
    pub init_delta: f64,
    pub seed: u64,
}

impl Default for GadSection {
    fn default() -> Self {
        let d = GadConfig::default();
        GadSection {
            lambda_k: d.lambda_k,
            lambda_delta: d.lambda_delta,
            eta: d.eta,
            max_iters: d.max_iters,
            delta_max: d.delta_max,
            backtrack_max: d.backtrack_max,
            stale_costate: d.stale_costate,
            init_delta: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StealthSection {
    pub alpha: f64,
    pub mode: StealthMode,
    pub bisection_tol: f64,
}

impl Default for StealthSection {
    fn default() -> Self {
        StealthSection {
            alpha: 0.003,
            mode: StealthMode::ConstantMu,
            bisection_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsSection {
    pub dir: PathBuf,
    pub emit_trajectory: bool,
}

impl Default for OutputsSection {
    fn default() -> Self {
        OutputsSection {
            dir: PathBuf::from("out"),
            emit_trajectory: true,
        }
    }
}

/// One scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub plant: PlantSection,
    pub x0: Vec<f64>,
    pub grid: GridSection,
    #[serde(default)]
    pub cost: CostSection,
    #[serde(default)]
    pub gad: GadSection,
    #[serde(default)]
    pub stealth: StealthSection,
    #[serde(default)]
    pub outputs: OutputsSection,
}

/// A config turned into the model objects the pipeline runs on.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub plant: PlantModel,
    pub spec: CostSpec,
    pub grid: TimeGrid,
    pub x0: ScenarioState,
    pub gad: GadConfig,
    pub init_delta: AttackSignal,
    pub stealth: StealthConfig,
    pub seed: u64,
}

/// Parses and validates a scenario document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => StaError::Config {
                path,
                message: strip_position(&inner),
            },
            _ => StaError::Syntax {
                line: inner.line(),
                column: inner.column(),
                message: strip_position(&inner),
            },
        }
    })?;
    de.end().map_err(|e| StaError::Syntax {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e),
    })?;
    cfg.build()?;
    Ok(cfg)
}

fn strip_position(err: &serde_json::Error) -> String {
    let text = err.to_string();
    match text.rfind(" at line ") {
        Some(i) => text[..i].to_string(),
        None => text,
    }
}

fn matrix(path: &str, data: &[f64], rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(StaError::config(
            path,
            format!("expected {} entries ({rows}x{cols}), found {}", rows * cols, data.len()),
        ));
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(StaError::config(format!("{path}[{i}]"), "entry is not finite"));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

fn matrix_or(path: &str, data: &Option<Vec<f64>>, n: usize, fallback: DMatrix<f64>) -> Result<DMatrix<f64>> {
    match data {
        Some(d) => matrix(path, d, n, n),
        None => Ok(fallback),
    }
}

impl ScenarioConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn build(&self) -> Result<Scenario> {
        let p = &self.plant;
        if p.n == 0 {
            return Err(StaError::config("plant.n", "must be positive"));
        }
        if p.k == 0 {
            return Err(StaError::config("plant.k", "must be positive"));
        }
        let a = matrix("plant.A", &p.a, p.n, p.n)?;
        let b = matrix("plant.B", &p.b, p.n, p.k)?;
        let l = match (&p.l, p.j) {
            (Some(l), j) => matrix("plant.L", l, j.unwrap_or(p.n), p.n)?,
            (None, Some(j)) if j != p.n => {
                return Err(StaError::config("plant.j", "an explicit L is required when j differs from n"))
            }
            (None, _) => DMatrix::identity(p.n, p.n),
        };
        let plant = PlantModel::new(a, b, l)?;

        if self.x0.len() != p.n {
            return Err(StaError::config(
                "x0",
                format!("expected {} entries, found {}", p.n, self.x0.len()),
            ));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(StaError::config("x0", "entries must be finite"));
        }
        let x0 = ScenarioState::new(DVector::from_column_slice(&self.x0))?;
        let grid = TimeGrid::new(self.grid.horizon, self.grid.intervals)?;

        let c = &self.cost;
        let qx = matrix_or("cost.Qx", &c.qx, p.n, DMatrix::identity(p.n, p.n))?;
        let ru = matrix_or("cost.Ru", &c.ru, p.k, DMatrix::identity(p.k, p.k))?;
        let qf = matrix_or("cost.Qf", &c.qf, p.n, DMatrix::zeros(p.n, p.n))?;
        let spec = CostSpec::new(qx, ru, qf, c.gamma)?;

        let g = &self.gad;
        let gad = GadConfig {
            lambda_k: g.lambda_k,
            lambda_delta: g.lambda_delta,
            eta: g.eta,
            max_iters: g.max_iters,
            delta_max: g.delta_max,
            backtrack_max: g.backtrack_max,
            stale_costate: g.stale_costate,
        };
        gad.validate()?;
        if !g.init_delta.is_finite() || g.init_delta.abs() > g.delta_max {
            return Err(StaError::config("gad.init_delta", "must lie inside [-delta_max, delta_max]"));
        }
        let init_delta = AttackSignal::constant(&vec![g.init_delta; p.k], &grid)?;

        let stealth = StealthConfig {
            alpha: self.stealth.alpha,
            mode: self.stealth.mode,
            bisection_tol: self.stealth.bisection_tol,
        };
        stealth.validate()?;

        Ok(Scenario {
            plant,
            spec,
            grid,
            x0,
            gad,
            init_delta,
            stealth,
            seed: g.seed,
        })
    }

    /// The system of the reference study: `A = [1 2; 1 2]`, `B = [2; 1]`, full-state
    /// output, identity weights, `T = 100`. The initial state `[1, 1]` is a stand-in,
    /// not a reported value.
    pub fn reference_preset() -> Self {
        ScenarioConfig {
            plant: PlantSection {
                n: 2,
                k: 1,
                j: None,
                a: vec![1.0, 2.0, 1.0, 2.0],
                b: vec![2.0, 1.0],
                l: None,
            },
            x0: vec![1.0, 1.0],
            grid: GridSection {
                horizon: 100.0,
                intervals: 10_000,
            },
            cost: CostSection::default(),
            gad: GadSection {
                lambda_k: 1e-2,
                lambda_delta: 1e-2,
                init_delta: 0.37,
                ..GadSection::default()
            },
            stealth: StealthSection::default(),
            outputs: OutputsSection::default(),
        }
    }
}
