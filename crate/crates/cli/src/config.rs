//! The run configuration file. TOML, every table closed to unknown keys.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use birthrisk::domain::{FeatureSchema, Race};
use birthrisk::experiments::ExperimentSpec;
use birthrisk::ingest::{parse_csv, split_by_year, Dataset, FeatureSubset};
use birthrisk::model::ModelSpec;
use birthrisk::sampling::{expand_grid, SampleRatio};
use birthrisk::synth::{default_config, generate, preset, PRESET_NAMES};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory name under the output directory; defaults to a hash of the
    /// resolved configuration.
    #[serde(default)]
    pub run_id: Option<String>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub seeds: Vec<u64>,
    pub data: DataConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub cv: Option<CvConfig>,
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// A named synthetic benchmark, generated in memory.
    #[serde(default)]
    pub preset: Option<String>,
    /// Generator seed for `preset`.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Row count override for `preset`.
    #[serde(default)]
    pub n: Option<usize>,
    /// One CSV split by year.
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Separate train and test CSV files, used as given.
    #[serde(default)]
    pub train: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    /// Feature schema for CSV input; the generator schema when absent.
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default = "default_train_years")]
    pub train_years: Vec<i32>,
    #[serde(default = "default_test_year")]
    pub test_year: i32,
}

fn default_train_years() -> Vec<i32> {
    vec![2000, 2001]
}

fn default_test_year() -> i32 {
    2002
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub models: Vec<ModelSpec>,
    #[serde(default = "all_subsets")]
    pub subsets: Vec<FeatureSubset>,
    #[serde(default = "all_ratios")]
    pub ratios: Vec<SampleRatio>,
    /// Also fit per-race models for the best cell, skipping races with
    /// fewer training deaths than `race_min_minority`.
    #[serde(default)]
    pub race_models: bool,
    #[serde(default = "default_race_min")]
    pub race_min_minority: usize,
    /// Gain importance from the first boosted-tree model in `models`.
    #[serde(default)]
    pub importance: bool,
}

fn all_subsets() -> Vec<FeatureSubset> {
    FeatureSubset::ALL_SUBSETS.to_vec()
}

fn all_ratios() -> Vec<SampleRatio> {
    SampleRatio::ALL.to_vec()
}

fn default_race_min() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    pub base: ModelSpec,
    /// Hyperparameter axes; the last varies fastest.
    #[serde(default)]
    pub axes: Vec<Axis>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_cv_subset")]
    pub subset: FeatureSubset,
    #[serde(default = "default_cv_ratio")]
    pub ratio: SampleRatio,
}

fn default_k() -> usize {
    5
}

fn default_cv_subset() -> FeatureSubset {
    FeatureSubset::All
}

fn default_cv_ratio() -> SampleRatio {
    SampleRatio::OneToTen
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub values: Vec<serde_json::Value>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(usage("`seeds` is empty"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(usage(format!("`threshold` must lie in (0, 1), got {}", self.threshold)));
        }
        if let Some(id) = &self.run_id {
            if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
                return Err(usage(format!("`run_id` `{id}` is not a plain directory name")));
            }
        }
        self.data.validate()?;
        if self.grid.is_none() && self.cv.is_none() {
            return Err(usage("configuration has neither a [grid] nor a [cv] table"));
        }
        if let Some(g) = &self.grid {
            if g.models.is_empty() || g.subsets.is_empty() || g.ratios.is_empty() {
                return Err(usage("[grid] needs at least one model, subset and ratio"));
            }
            if g.importance && !g.models.iter().any(|m| matches!(m, ModelSpec::Gbt(_))) {
                return Err(usage("[grid] importance needs a gbt model in `models`"));
            }
            for m in &g.models {
                validate_model(m)?;
            }
            let specs = self.grid_specs()?;
            let distinct: BTreeSet<String> = specs.iter().map(ExperimentSpec::hash).collect();
            if distinct.len() != specs.len() {
                return Err(usage("[grid] lists the same cell twice"));
            }
        }
        if let Some(cv) = &self.cv {
            if cv.k < 2 {
                return Err(usage("[cv] k must be at least 2"));
            }
            for m in self.cv_points()? {
                validate_model(&m)?;
            }
        }
        Ok(())
    }

    /// Every grid cell in a fixed order: model, subset, ratio, seed.
    pub fn grid_specs(&self) -> Result<Vec<ExperimentSpec>, CliError> {
        let g = self.grid.as_ref().ok_or_else(|| usage("configuration has no [grid] table"))?;
        let mut specs = Vec::new();
        for model in &g.models {
            for &subset in &g.subsets {
                for &ratio in &g.ratios {
                    for &seed in &self.seeds {
                        specs.push(ExperimentSpec {
                            model: model.with_seed(seed),
                            subset,
                            ratio,
                            seed,
                            train_years: self.data.train_years.clone(),
                            test_year: self.data.test_year,
                            race: None::<Race>,
                            threshold: self.threshold,
                        });
                    }
                }
            }
        }
        Ok(specs)
    }

    pub fn cv_points(&self) -> Result<Vec<ModelSpec>, CliError> {
        let cv = self.cv.as_ref().ok_or_else(|| usage("configuration has no [cv] table"))?;
        let axes: Vec<(String, Vec<serde_json::Value>)> =
            cv.axes.iter().map(|a| (a.name.clone(), a.values.clone())).collect();
        expand_grid(&cv.base, &axes).map_err(|e| usage(format!("[cv] {e}")))
    }

    /// First 16 hex digits of SHA-256 over the configuration's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_id(&self) -> String {
        self.run_id.clone().unwrap_or_else(|| self.hash())
    }
}

fn validate_model(m: &ModelSpec) -> Result<(), CliError> {
    if let ModelSpec::Gbt(p) = m {
        p.validate().map_err(|e| usage(format!("gbt: {e}")))?;
    }
    Ok(())
}

pub fn unknown_preset(name: &str) -> CliError {
    usage(format!("unknown preset `{name}` (available: {})", PRESET_NAMES.join(", ")))
}

impl DataConfig {
    fn validate(&self) -> Result<(), CliError> {
        let sources = [self.preset.is_some(), self.path.is_some(), self.train.is_some() || self.test.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(usage("[data] needs exactly one of `preset`, `path`, or `train` with `test`"));
        }
        if (self.train.is_some() || self.test.is_some()) && (self.train.is_none() || self.test.is_none()) {
            return Err(usage("[data] `train` and `test` go together"));
        }
        if let Some(p) = &self.preset {
            if preset(p).is_err() {
                return Err(unknown_preset(p));
            }
            if self.schema.is_some() {
                return Err(usage("[data] `schema` applies to CSV input only"));
            }
        } else if self.seed.is_some() || self.n.is_some() {
            return Err(usage("[data] `seed` and `n` apply to presets only"));
        }
        if self.train_years.is_empty() {
            return Err(usage("[data] `train_years` is empty"));
        }
        if self.train_years.contains(&self.test_year) {
            return Err(usage(format!("[data] test year {} is also a training year", self.test_year)));
        }
        Ok(())
    }

    /// Files the configuration reads, checked before any work starts.
    pub fn inputs(&self) -> Vec<&Path> {
        [&self.path, &self.train, &self.test, &self.schema].into_iter().flatten().map(PathBuf::as_path).collect()
    }

    /// Loads the train and test partitions.
    pub fn load(&self) -> Result<(Dataset, Dataset), CliError> {
        let rt = |e: birthrisk::Error| CliError::Runtime(e.to_string());
        for p in self.inputs() {
            if !p.is_file() {
                return Err(CliError::Runtime(format!("input file {} does not exist", p.display())));
            }
        }
        let years: BTreeSet<i32> = self.train_years.iter().copied().collect();
        if let Some(name) = &self.preset {
            let p = preset(name).map_err(|_| unknown_preset(name))?;
            let ds = generate(self.n.unwrap_or(p.n), &p.config, self.seed.unwrap_or(0)).map_err(rt)?;
            let split = split_by_year(&ds.dataset, &years, self.test_year).map_err(rt)?;
            return Ok((split.train, split.test));
        }
        let schema = match &self.schema {
            Some(p) => FeatureSchema::load(p).map_err(rt)?,
            None => default_config().schema().map_err(rt)?,
        };
        if let Some(path) = &self.path {
            let ds = parse_csv(path, &schema).map_err(rt)?;
            let split = split_by_year(&ds, &years, self.test_year).map_err(rt)?;
            return Ok((split.train, split.test));
        }
        let train = parse_csv(self.train.as_ref().expect("validated"), &schema).map_err(rt)?;
        let test = parse_csv(self.test.as_ref().expect("validated"), &schema).map_err(rt)?;
        Ok((train, test))
    }
}
