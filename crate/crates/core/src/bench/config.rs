use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    bundled_digits, load_idx, permuted_sequence, split_by_class, synthetic_gaussian_tasks, Dataset,
    GaussianTaskSpec, Task, TaskSequence, DIGITS_SIDE,
};
use crate::engine::OptimizerKind;
use crate::error::{Error, Result};
use crate::nispa::{NispaConfig, TauSchedule};
use crate::replay::ReplayConfig;
use crate::rewire::GrowthPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Nispa,
    NispaReplay,
    /// Sequential fine-tuning of one sparse network.
    Naive,
    /// One independent network per task at density `d`.
    Stl,
    /// One independent network per task at density `d / T`.
    StlIso,
    /// Experience replay without any structural machinery.
    Er,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Nispa => "nispa",
            Method::NispaReplay => "nispa_replay",
            Method::Naive => "naive",
            Method::Stl => "stl",
            Method::StlIso => "stl_iso",
            Method::Er => "er",
        }
    }
}

/// Whether test-time task identity is available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Pick from the method: replay methods are class-incremental.
    Auto,
    /// One output head per task.
    Task,
    /// One shared head over all classes.
    Class,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    /// Bundled 8x8 digits split into class groups.
    Digits,
    /// Bundled digits, later tasks with a fraction of pixels permuted.
    DigitsPermuted,
    Gaussian,
    /// IDX files split into class groups.
    Idx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauKind {
    Cosine,
    Linear,
}

/// One experiment, read from a flat TOML file. Every key is optional in the
/// file; missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub scenario: Scenario,
    /// First seed; runs use `seed .. seed + n_seeds`.
    pub seed: u64,
    pub n_seeds: usize,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,

    pub data: DataKind,
    pub n_tasks: usize,
    pub classes_per_task: usize,
    /// Fraction of pixels shuffled in permuted tasks.
    pub p_r: f64,
    pub val_fraction: f64,
    /// Average-pooling factor applied to square images.
    pub pool: usize,
    pub dim: usize,
    pub separation: f64,
    pub n_per_class: usize,
    pub idx_train_images: String,
    pub idx_train_labels: String,
    pub idx_test_images: String,
    pub idx_test_labels: String,

    pub epochs_per_phase: usize,
    pub accuracy_tolerance: f64,
    pub k: usize,
    pub density: f64,
    pub tau_schedule: TauKind,
    pub tau_step: f64,
    pub reinit: bool,
    pub growth_policy: GrowthPolicy,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,

    pub lambda: f64,
    pub buffer_per_class: usize,

    /// Output directory.
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let nispa = NispaConfig::default();
        let replay = ReplayConfig::default();
        Self {
            method: Method::Nispa,
            scenario: Scenario::Auto,
            seed: 0,
            n_seeds: 5,
            hidden: vec![400, 400, 400],
            data: DataKind::Digits,
            n_tasks: 5,
            classes_per_task: 2,
            p_r: 0.1,
            val_fraction: 0.1,
            pool: 1,
            dim: 16,
            separation: 6.0,
            n_per_class: 200,
            idx_train_images: String::new(),
            idx_train_labels: String::new(),
            idx_test_images: String::new(),
            idx_test_labels: String::new(),
            epochs_per_phase: nispa.epochs_per_phase,
            accuracy_tolerance: nispa.accuracy_tolerance,
            k: nispa.k,
            density: nispa.density,
            tau_schedule: TauKind::Cosine,
            tau_step: 0.05,
            reinit: nispa.reinit,
            growth_policy: nispa.growth_policy,
            optimizer: nispa.optimizer,
            learning_rate: nispa.learning_rate,
            batch_size: nispa.batch_size,
            lambda: replay.lambda,
            buffer_per_class: replay.per_class_capacity,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Small settings that finish in seconds on the bundled digits.
    pub fn desk() -> Self {
        Self {
            hidden: vec![64, 64],
            epochs_per_phase: 3,
            accuracy_tolerance: 2.5,
            k: 30,
            batch_size: 32,
            learning_rate: 0.01,
            val_fraction: 0.2,
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Replaces one key. `value` is read as a TOML value and falls back to a
    /// plain string, so `hidden=[32,32]` and `method=naive` both work.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut updated = self.clone();
        updated.set_unchecked(key, value)?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    fn set_unchecked(&mut self, key: &str, value: &str) -> Result<()> {
        let mut table = toml::Table::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        if !table.contains_key(key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        let parsed = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        table.insert(key.to_string(), parsed);
        *self = table.try_into().map_err(|e| Error::Config(format!("{key}: {e}")))?;
        Ok(())
    }

    /// Applies `key=value` overrides in order and validates the result.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, pairs: &[S]) -> Result<()> {
        let mut updated = self.clone();
        for pair in pairs {
            let (key, value) = pair
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{}`", pair.as_ref())))?;
            updated.set_unchecked(key.trim(), value.trim())?;
        }
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn resolved_scenario(&self) -> Scenario {
        match (self.scenario, self.method) {
            (Scenario::Auto, Method::NispaReplay | Method::Er) => Scenario::Class,
            (Scenario::Auto, _) => Scenario::Task,
            (s, _) => s,
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|i| self.seed + i).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.nispa(self.seed).validate()?;
        self.replay().validate()?;
        if self.n_seeds == 0 {
            return bad("n_seeds must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden must list positive layer widths".into());
        }
        if self.n_tasks == 0 {
            return bad("n_tasks must be positive".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.p_r) {
            return bad("p_r must lie in [0, 1]".into());
        }
        if self.pool == 0 {
            return bad("pool must be positive".into());
        }
        if self.method == Method::StlIso && !(self.density / self.n_tasks as f64 > 0.0) {
            return bad("stl_iso needs density / n_tasks > 0".into());
        }
        match (self.resolved_scenario(), self.method) {
            (Scenario::Task, Method::NispaReplay | Method::Er) => {
                bad(format!("{} needs the class scenario", self.method.name()))
            }
            (Scenario::Class, Method::Stl | Method::StlIso) => {
                bad(format!("{} needs the task scenario", self.method.name()))
            }
            _ => Ok(()),
        }
    }

    pub fn nispa(&self, seed: u64) -> NispaConfig {
        NispaConfig {
            epochs_per_phase: self.epochs_per_phase,
            accuracy_tolerance: self.accuracy_tolerance,
            k: self.k,
            density: self.density,
            tau_schedule: match self.tau_schedule {
                TauKind::Cosine => TauSchedule::Cosine,
                TauKind::Linear => TauSchedule::Linear { step: self.tau_step },
            },
            reinit: self.reinit,
            growth_policy: self.growth_policy,
            seed,
            optimizer: self.optimizer,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
        }
    }

    pub fn replay(&self) -> ReplayConfig {
        ReplayConfig {
            lambda: self.lambda,
            per_class_capacity: self.buffer_per_class,
        }
    }

    fn image_pools(&self) -> Result<(Dataset, Dataset)> {
        let (train, test, side) = match self.data {
            DataKind::Idx => {
                let paths = [
                    &self.idx_train_images,
                    &self.idx_train_labels,
                    &self.idx_test_images,
                    &self.idx_test_labels,
                ];
                if paths.iter().any(|p| p.is_empty()) {
                    return Err(Error::Config("idx data needs all four idx_* paths".into()));
                }
                let train = load_idx(paths[0], paths[1])?;
                let test = load_idx(paths[2], paths[3])?;
                let side = (train.width() as f64).sqrt().round() as usize;
                (train, test, side)
            }
            _ => {
                let (train, test) = bundled_digits();
                (train, test, DIGITS_SIDE)
            }
        };
        if self.pool == 1 {
            return Ok((train, test));
        }
        Ok((train.avg_pool(side, self.pool)?, test.avg_pool(side, self.pool)?))
    }

    /// Consecutive class groups `{0..c}, {c..2c}, ...`.
    pub fn class_groups(&self) -> Vec<Vec<usize>> {
        (0..self.n_tasks)
            .map(|t| (t * self.classes_per_task..(t + 1) * self.classes_per_task).collect())
            .collect()
    }

    /// Builds the task sequence for one seed. Labels are global so that
    /// task `t` owns outputs `t * c .. (t + 1) * c`.
    pub fn build_sequence(&self, seed: u64) -> Result<TaskSequence> {
        match self.data {
            DataKind::Digits | DataKind::Idx => {
                let (train, test) = self.image_pools()?;
                split_by_class(&train, &test, &self.class_groups(), self.val_fraction, seed)
            }
            DataKind::DigitsPermuted => {
                let (train, test) = self.image_pools()?;
                permuted_sequence(&train, &test, self.n_tasks, self.p_r, self.val_fraction, seed, true)
            }
            DataKind::Gaussian => synthetic_gaussian_tasks(GaussianTaskSpec {
                n_tasks: self.n_tasks,
                classes_per_task: self.classes_per_task,
                dim: self.dim,
                separation: self.separation,
                n_per_class: self.n_per_class,
                seed,
            }),
        }
    }

    /// All classes of the data source as one task, for the analyses.
    pub fn build_single_task(&self, seed: u64) -> Result<Task> {
        let seq = self.build_sequence(seed)?;
        let merge = |f: fn(&Task) -> &Dataset| -> Result<Dataset> {
            let parts: Vec<&Dataset> = seq.tasks.iter().map(f).collect();
            Dataset::concat(&parts)
        };
        Ok(Task {
            train: merge(|t| &t.train)?,
            val: merge(|t| &t.val)?,
            test: merge(|t| &t.test)?,
            classes: seq.tasks.iter().flat_map(|t| t.classes.iter().copied()).collect(),
        })
    }
}
