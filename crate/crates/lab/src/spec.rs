//! Experiment specifications: named defaults, JSON overrides and validation.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use molrg_core::dae::TrainOptions;
use molrg_core::molrg::MolrgConfig;
use molrg_core::probe::ProbeOptions;
use molrg_core::schedule::{NoiseSchedule, ScheduleDescriptor, SEPARATED_GRID, STANDARD_GRID};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{LabError, LabResult};

/// Time steps of the T = 500 DDPM schedule at which the `fig3` experiment reads its curves.
pub const FIG3_TIMESTEPS: [usize; 14] = [5, 10, 20, 40, 60, 80, 100, 120, 140, 160, 180, 240, 260, 280];
/// Time steps shown in the posterior visualisation.
pub const FIG12_TIMESTEPS: [usize; 5] = [5, 20, 60, 120, 260];
/// Grid of the overlap table (the standard grid without its smallest level).
pub const TABLE4_GRID: [f64; 8] = [0.008, 0.023, 0.060, 0.140, 0.296, 0.585, 1.088, 1.923];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    Fig3,
    Fig4,
    Fig11Grid,
    Fig12Dump,
    Table4,
    Table5,
    Table6,
    Table7,
    CleanInputSnr,
    WeightSharing,
    EnsembleNoise,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 11] = [
        Self::Fig3,
        Self::Fig4,
        Self::Fig11Grid,
        Self::Fig12Dump,
        Self::Table4,
        Self::Table5,
        Self::Table6,
        Self::Table7,
        Self::CleanInputSnr,
        Self::WeightSharing,
        Self::EnsembleNoise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fig3 => "fig3",
            Self::Fig4 => "fig4",
            Self::Fig11Grid => "fig11-grid",
            Self::Fig12Dump => "fig12-dump",
            Self::Table4 => "table4",
            Self::Table5 => "table5",
            Self::Table6 => "table6",
            Self::Table7 => "table7",
            Self::CleanInputSnr => "clean-input-snr",
            Self::WeightSharing => "weight-sharing",
            Self::EnsembleNoise => "ensemble-noise",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = LabError;

    fn from_str(s: &str) -> LabResult<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| LabError::UnknownExperiment(s.to_string()))
    }
}

/// Noise levels at which metrics are read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvalGrid {
    Sigmas { sigmas: Vec<f64> },
    /// 1-based time steps of the training schedule.
    Timesteps { timesteps: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    pub config: MolrgConfig,
    /// Noise schedule used for training.
    pub schedule: ScheduleDescriptor,
    pub eval: EvalGrid,
    pub train: TrainOptions,
    pub probe: ProbeOptions,
    /// One entry per repetition; data, initialisation and noise derive from it.
    pub seeds: Vec<u64>,
    /// Training-set size.
    pub samples: usize,
    /// Size of each freshly drawn evaluation set.
    pub test_samples: usize,
    pub test_sets: usize,
    /// Rank of the per-class subspaces in PCA-based metrics.
    pub pca_rank: usize,
    /// Mean separation for the well-separated experiment.
    pub separation: f64,
    /// Fraction of probe training labels reassigned at random.
    pub label_noise: f64,
    /// Half-width of the ensemble window in grid steps.
    pub ensemble_radius: usize,
    pub out: PathBuf,
}

fn standard_explicit() -> Value {
    json!({"kind": "explicit", "sigmas": STANDARD_GRID})
}

fn ddpm() -> Value {
    json!({"kind": "ddpm", "T": 500, "beta_min": 1e-4, "beta_max": 0.02})
}

fn sigmas(v: &[f64]) -> Value {
    json!({"kind": "sigmas", "sigmas": v})
}

fn timesteps(v: &[usize]) -> Value {
    json!({"kind": "timesteps", "timesteps": v})
}

fn config(n: usize, dims: &[usize], delta: f64, mixing: &[f64]) -> Value {
    json!({"n": n, "dims": dims, "delta": delta, "mixing": mixing, "overlap_angle": 90.0})
}

/// Fully populated default spec for `name`, as JSON.
pub fn defaults(name: ExperimentName) -> Value {
    let base_config = config(50, &[5, 5, 5], 0.2, &[1.0 / 3.0; 3]);
    let two_class = config(50, &[5, 5], 0.2, &[0.5, 0.5]);
    let mut v = json!({
        "name": name,
        "config": base_config,
        "schedule": ddpm(),
        "eval": timesteps(&FIG3_TIMESTEPS),
        "train": TrainOptions::default(),
        "probe": ProbeOptions::default(),
        "seeds": [0],
        "samples": 12000,
        "test_samples": 9000,
        "test_sets": 5,
        "pca_rank": 5,
        "separation": 3.0,
        "label_noise": 0.0,
        "ensemble_radius": 2,
        "out": format!("results/{name}"),
    });
    let patch = match name {
        ExperimentName::Fig3 => json!({}),
        ExperimentName::Fig4 => json!({"schedule": standard_explicit(), "eval": sigmas(&STANDARD_GRID), "samples": 100000}),
        ExperimentName::Fig11Grid => json!({
            "config": config(100, &[5; 10], 0.3, &[0.1; 10]),
            "schedule": standard_explicit(),
            "eval": sigmas(&STANDARD_GRID),
            "samples": 2400,
        }),
        ExperimentName::Fig12Dump => json!({"eval": timesteps(&FIG12_TIMESTEPS), "samples": 600}),
        ExperimentName::Table4 => json!({
            "config": {"overlap_angle": 30.0, "dims": [5, 5], "mixing": [0.5, 0.5]},
            "schedule": standard_explicit(),
            "eval": sigmas(&TABLE4_GRID),
            "samples": 30000,
            "test_samples": 6000,
            "test_sets": 1,
            "seeds": [0, 1, 2],
        }),
        ExperimentName::Table5 => json!({
            "config": config(50, &[10, 2], 0.2, &[0.5, 0.5]),
            "schedule": standard_explicit(),
            "eval": sigmas(&STANDARD_GRID),
            "samples": 30000,
            "test_samples": 6000,
            "test_sets": 1,
            "seeds": [0, 1, 2],
        }),
        ExperimentName::Table6 => json!({
            "config": config(50, &[5, 5], 0.2, &[0.8, 0.2]),
            "schedule": standard_explicit(),
            "eval": sigmas(&STANDARD_GRID),
            "samples": 30000,
            "test_samples": 6000,
            "test_sets": 1,
            "seeds": [0, 1, 2],
        }),
        ExperimentName::Table7 => json!({
            "config": two_class,
            "schedule": {"kind": "explicit", "sigmas": SEPARATED_GRID},
            "eval": sigmas(&SEPARATED_GRID),
        }),
        ExperimentName::CleanInputSnr => json!({
            "schedule": standard_explicit(),
            "eval": sigmas(&STANDARD_GRID),
            "samples": 6000,
        }),
        ExperimentName::WeightSharing => json!({
            "schedule": standard_explicit(),
            "eval": sigmas(&STANDARD_GRID),
            "train": {"epochs": 90},
            "test_sets": 1,
            "seeds": [0, 1, 2],
        }),
        ExperimentName::EnsembleNoise => json!({"label_noise": 0.2, "test_sets": 1}),
    };
    merge(&mut v, &patch);
    v
}

/// Recursive JSON merge: objects merge key by key, everything else replaces.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, pv) in p {
                match b.get_mut(k) {
                    Some(bv) => merge(bv, pv),
                    None => {
                        b.insert(k.clone(), pv.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Command-line level overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config_file: Option<Value>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Build the spec for `name`: defaults, then the config file (a bare spec
/// patch or a previous run's `meta.json`), then `--seed` and `--out`.
pub fn resolve(name: &str, overrides: &Overrides) -> LabResult<ExperimentSpec> {
    let name: ExperimentName = name.parse()?;
    let mut v = defaults(name);
    if let Some(file) = &overrides.config_file {
        let patch = file.get("spec").unwrap_or(file);
        if let Some(other) = patch.get("name") {
            if other != &json!(name) {
                return Err(LabError::InvalidSpec(format!("config file is for experiment {other}, not {name}")));
            }
        }
        merge(&mut v, patch);
    }
    let mut spec: ExperimentSpec =
        serde_json::from_value(v).map_err(|e| LabError::InvalidSpec(e.to_string()))?;
    if let Some(seed) = overrides.seed {
        let count = spec.seeds.len().max(1) as u64;
        spec.seeds = (0..count).map(|i| seed.wrapping_add(i)).collect();
    }
    if let Some(out) = &overrides.out {
        spec.out = out.clone();
    }
    spec.validate()?;
    Ok(spec)
}

impl ExperimentSpec {
    pub fn validate(&self) -> LabResult<()> {
        let bad = |m: String| Err(LabError::InvalidSpec(m));
        self.config.validate().map_err(|e| LabError::InvalidSpec(e.to_string()))?;
        let schedule = self.schedule.build().map_err(|e| LabError::InvalidSpec(e.to_string()))?;
        let grid = self.eval_sigmas_with(&schedule).map_err(|e| LabError::InvalidSpec(e.to_string()))?;
        if grid.is_empty() {
            return bad("evaluation grid is empty".into());
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("evaluation levels must be strictly increasing".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.samples == 0 || self.test_samples == 0 || self.test_sets == 0 {
            return bad("sample counts must be positive".into());
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return bad(format!("label_noise {} outside [0, 1)", self.label_noise));
        }
        if self.separation < 0.0 || !self.separation.is_finite() {
            return bad("separation must be non-negative".into());
        }
        match self.name {
            ExperimentName::Fig12Dump if self.config.k() != 3 => Err(LabError::WrongClassCount(self.config.k())),
            ExperimentName::Table4 | ExperimentName::Table7 if self.config.k() != 2 => {
                bad(format!("{} uses two classes", self.name))
            }
            _ => Ok(()),
        }
    }

    pub fn training_schedule(&self) -> LabResult<NoiseSchedule> {
        Ok(self.schedule.build()?)
    }

    fn eval_sigmas_with(&self, schedule: &NoiseSchedule) -> molrg_core::Result<Vec<f64>> {
        match &self.eval {
            EvalGrid::Sigmas { sigmas } => Ok(sigmas.clone()),
            EvalGrid::Timesteps { timesteps } => {
                timesteps.iter().map(|&t| schedule.sigma_at_timestep(t)).collect()
            }
        }
    }

    /// Evaluation levels resolved to noise values.
    pub fn eval_sigmas(&self) -> LabResult<Vec<f64>> {
        Ok(self.eval_sigmas_with(&self.training_schedule()?)?)
    }
}
