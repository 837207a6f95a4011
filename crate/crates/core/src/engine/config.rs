use serde::{Deserialize, Serialize};

use crate::auction::{GspNextRule, Mechanism};
use crate::bidding::{Discretization, EtaSchedule, UniformUpdate};
use crate::datagen::{DataConfig, DatasetConfig};

use super::EngineError;

/// How non-uniform curves sample multipliers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    /// Exact outcome-change points of every auction.
    #[default]
    Breakpoints,
    /// Fixed log-uniform grid `[grid_min, grid_max]` with `grid_points` points.
    Grid,
}

/// Whether bidders react to last round's bids all at once or one at a time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    #[default]
    Simultaneous,
    Sequential,
}

/// One experiment cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub mechanism: Mechanism,
    pub reserve: bool,
    pub level: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentGrid {
    pub mechanisms: Vec<Mechanism>,
    pub levels: Vec<usize>,
    pub reserves: Vec<bool>,
    pub benchmark: Cell,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            mechanisms: Mechanism::ALL.to_vec(),
            levels: vec![0],
            reserves: vec![false],
            benchmark: Cell { mechanism: Mechanism::Gsp, reserve: false, level: 0 },
        }
    }
}

impl ExperimentGrid {
    /// Cells in a fixed order: reserve, then mechanism, then level.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &reserve in &self.reserves {
            for &mechanism in &self.mechanisms {
                for &level in &self.levels {
                    out.push(Cell { mechanism, reserve, level });
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub advertisers: usize,
    pub queries: usize,
    pub slots: usize,
    pub retrieval: usize,
    pub retrieval_threshold: f64,
    pub runs: usize,
    pub iterations: usize,
    pub branching: Vec<usize>,
    pub mechanism: Mechanism,
    pub reserve: bool,
    pub level: usize,
    pub curve: CurveMode,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    pub eta: EtaSchedule,
    pub uniform: UniformUpdate,
    /// Move non-uniform multipliers a fraction η_t of the way to the best
    /// response (linearly, so first-price spend stays on target).
    pub damping: bool,
    pub update: UpdateMode,
    pub gsp_rule: GspNextRule,
    pub seed: u64,
    /// Worker threads; 0 uses every available core. Never changes results.
    pub threads: usize,
    pub experiment: ExperimentGrid,
    pub data: DataConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            advertisers: 50,
            queries: 20_000,
            slots: 4,
            retrieval: 10,
            retrieval_threshold: 0.0,
            runs: 20,
            iterations: 25,
            branching: vec![4, 4, 4],
            mechanism: Mechanism::Gsp,
            reserve: false,
            level: 0,
            curve: CurveMode::Breakpoints,
            grid_min: 1.0 / 32.0,
            grid_max: 32.0,
            grid_points: 33,
            eta: EtaSchedule::default(),
            uniform: UniformUpdate::default(),
            damping: true,
            update: UpdateMode::Simultaneous,
            gsp_rule: GspNextRule::RankedNext,
            seed: 1,
            threads: 0,
            experiment: ExperimentGrid::default(),
            data: DataConfig::default(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::Config(msg));
        for (name, v) in [
            ("advertisers", self.advertisers),
            ("queries", self.queries),
            ("slots", self.slots),
            ("retrieval", self.retrieval),
            ("runs", self.runs),
            ("iterations", self.iterations),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.branching.iter().any(|&b| b == 0) {
            return bad("branching factors must be positive".into());
        }
        let depth = self.branching.len();
        for &level in std::iter::once(&self.level).chain(&self.experiment.levels).chain([&self.experiment.benchmark.level]) {
            if level > depth {
                return bad(format!("level {level} exceeds the hierarchy depth {depth} (branching has {depth} layers)"));
            }
        }
        if self.data.layer_dims.len() != depth {
            return bad(format!("data.layer_dims has {} entries but branching has {depth}", self.data.layer_dims.len()));
        }
        if self.data.layer_dims.iter().sum::<usize>() > self.data.feature_dim {
            return bad("data.layer_dims must sum to at most data.feature_dim".into());
        }
        if self.curve == CurveMode::Grid && !(0.0 < self.grid_min && self.grid_min < self.grid_max && self.grid_points >= 2) {
            return bad("grid needs 0 < grid_min < grid_max and grid_points >= 2".into());
        }
        if !(self.eta.power >= 0.0 && self.eta.offset >= 1.0) {
            return bad("eta needs power >= 0 and offset >= 1".into());
        }
        let u = &self.uniform;
        if !(0.0 < u.ratio_min && u.ratio_min <= 1.0 && u.ratio_max >= 1.0 && u.growth >= 1.0) {
            return bad("uniform clamps need 0 < ratio_min <= 1 <= ratio_max and growth >= 1".into());
        }
        if self.experiment.mechanisms.is_empty() || self.experiment.levels.is_empty() || self.experiment.reserves.is_empty() {
            return bad("experiment grid must not be empty".into());
        }
        Ok(())
    }

    pub fn dataset_config(&self, reserves: bool) -> DatasetConfig {
        DatasetConfig {
            advertisers: self.advertisers,
            queries: self.queries,
            slots: self.slots,
            retrieval: self.retrieval,
            retrieval_threshold: self.retrieval_threshold,
            branching: self.branching.clone(),
            reserves,
            data: self.data.clone(),
        }
    }

    pub fn discretization(&self) -> Discretization {
        match self.curve {
            CurveMode::Breakpoints => Discretization::Breakpoints,
            CurveMode::Grid => Discretization::log_grid(self.grid_min, self.grid_max, self.grid_points),
        }
    }

    /// The single cell described by `mechanism`, `reserve` and `level`.
    pub fn cell(&self) -> Cell {
        Cell { mechanism: self.mechanism, reserve: self.reserve, level: self.level }
    }
}
