//! Experiment orchestration: one pipeline per spec, grids of specs,
//! per-race models, stratified recall tables and feature importance.
//!
//! Every statistic that is learned (imputation fills, resampling, model
//! fits) comes from training rows only. The test set keeps its natural
//! class balance.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{mortality_class, CauseOfDeath, MortalityClass, Race};
use crate::error::{Error, Result, StageExt};
use crate::ingest::{apply_imputer, encode, fit_imputer, select_features, Dataset, FeatureSubset};
use crate::metrics::{evaluate, stratified_recall, CauseTable, EvaluationReport, StratumRow};
use crate::model::{FittedModel, ModelSpec};
use crate::sampling::{resample, GridResult, SampleRatio};

pub const REPORT_FORMAT: &str = "birthrisk-report v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub model: ModelSpec,
    pub subset: FeatureSubset,
    pub ratio: SampleRatio,
    pub seed: u64,
    pub train_years: Vec<i32>,
    pub test_year: i32,
    #[serde(default)]
    pub race: Option<Race>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    0.5
}

impl ExperimentSpec {
    /// First 16 hex digits of SHA-256 over this experiment's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        Sha256::digest(json.as_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn describe(&self) -> String {
        let race = self.race.map(|r| format!(" race={r}")).unwrap_or_default();
        format!("{} {} {}{race} seed={}", self.model.family(), self.subset, self.ratio, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub report: EvaluationReport,
    pub converged: bool,
    pub n_train: usize,
    pub n_test: usize,
    pub warnings: Vec<String>,
    /// Kept out of report files so reruns compare byte for byte.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

/// A finished run with the fitted model and its test-set output.
#[derive(Debug, Clone)]
pub struct Run {
    pub result: ExperimentResult,
    pub model: FittedModel,
    pub scores: Vec<f64>,
    pub predicted: Vec<u8>,
}

fn by_race(ds: &Dataset, race: Option<Race>) -> Dataset {
    match race {
        Some(r) => ds.filter(|rec| rec.outcome.race == r),
        None => ds.clone(),
    }
}

/// Fits on `train` and evaluates on all of `test`. The stratified recall
/// tables are filled in from the test outcomes.
pub fn run_binary(spec: &ExperimentSpec, train: &Dataset, test: &Dataset) -> Result<Run> {
    let start = Instant::now();
    let train = by_race(train, spec.race);
    let test = by_race(test, spec.race);
    let imputer = fit_imputer(&train).stage("impute")?;
    let train_i = apply_imputer(&train, &imputer).stage("impute")?;
    let test_i = apply_imputer(&test, &imputer).stage("impute")?;
    let (m_train, y_train) = encode(&train_i).stage("encode")?;
    let (m_test, y_test) = encode(&test_i).stage("encode")?;
    let m_train = select_features(&m_train, spec.subset).stage("select")?;
    let m_test = select_features(&m_test, spec.subset).stage("select")?;

    let mut warnings = Vec::new();
    for (j, name) in m_train.column_names().iter().enumerate() {
        let col = m_train.column(j);
        if col.iter().all(|&x| x == col[0]) {
            warnings.push(format!("column `{name}` is constant in the training data"));
        }
    }

    let (m_fit, y_fit) = resample(&m_train, &y_train, spec.ratio, spec.seed).stage("resample")?;
    let model = spec.model.with_seed(spec.seed).fit(&m_fit, &y_fit, spec.seed).stage("fit")?;
    if !model.converged() {
        warnings.push(format!("{} did not converge", spec.model.family()));
    }
    let scores = model.score(&m_test).stage("score")?;
    let predicted = model.labels(&scores, spec.threshold).into_vec();
    let mut report = evaluate(&scores, &predicted, y_test.as_slice(), model.effective_threshold(spec.threshold))
        .stage("evaluate")?;
    let tables = run_strata_reports(&predicted, &test).stage("strata")?;
    report.mortality_strata = Some(tables.mortality);
    report.cause_strata = Some(tables.cause);
    Ok(Run {
        result: ExperimentResult {
            spec: spec.clone(),
            report,
            converged: model.converged(),
            n_train: y_fit.len(),
            n_test: y_test.len(),
            warnings,
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
        model,
        scores,
        predicted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataTables {
    pub mortality: Vec<StratumRow>,
    pub cause: CauseTable,
}

/// Recall within each death-timing bin and each linked cause. Deaths with
/// no linked cause are counted separately and left out of the cause table.
pub fn run_strata_reports(predicted: &[u8], test: &Dataset) -> Result<StrataTables> {
    let labels = test.labels();
    let bins: Vec<Option<MortalityClass>> = test
        .records()
        .iter()
        .map(|r| r.outcome.age_at_death_hours.map(mortality_class).transpose())
        .collect::<Result<_>>()?;
    let mortality = stratified_recall(labels.as_slice(), predicted, &bins, MortalityClass::ALL)?;

    let linked: Vec<u8> = test
        .records()
        .iter()
        .map(|r| u8::from(r.outcome.label() == 1 && r.outcome.cause.is_some()))
        .collect();
    let causes: Vec<Option<CauseOfDeath>> = test.records().iter().map(|r| r.outcome.cause).collect();
    let rows = stratified_recall(&linked, predicted, &causes, CauseOfDeath::ALL)?;
    let unlinked = test
        .records()
        .iter()
        .filter(|r| r.outcome.label() == 1 && r.outcome.cause.is_none())
        .count() as u64;
    Ok(StrataTables { mortality, cause: CauseTable { rows, unlinked_excluded: unlinked } })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub spec: ExperimentSpec,
    pub result: Option<ExperimentResult>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestForRatio {
    pub ratio: SampleRatio,
    /// Index into the grid.
    pub cell: usize,
    pub description: String,
    pub auc: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRun {
    pub cells: Vec<CellOutcome>,
    pub summary: Vec<BestForRatio>,
}

/// Runs every spec; a failing cell is recorded and the rest continue. The
/// summary keeps, per ratio, the cell with the best AUC, then recall, then
/// the earliest position.
pub fn run_grid(specs: &[ExperimentSpec], train: &Dataset, test: &Dataset) -> Result<GridRun> {
    if specs.is_empty() {
        return Err(Error::invalid("empty experiment grid"));
    }
    let cells: Vec<CellOutcome> = specs
        .par_iter()
        .map(|s| match run_binary(s, train, test) {
            Ok(run) => CellOutcome { spec: s.clone(), result: Some(run.result), failure: None },
            Err(e) => CellOutcome { spec: s.clone(), result: None, failure: Some(e.to_string()) },
        })
        .collect();
    let mut summary: Vec<BestForRatio> = Vec::new();
    for ratio in SampleRatio::ALL {
        let mut best: Option<(usize, f64, f64)> = None;
        for (k, c) in cells.iter().enumerate() {
            let Some(r) = &c.result else { continue };
            if r.spec.ratio != ratio {
                continue;
            }
            let (auc, rec) = (r.report.auc, r.report.recall);
            if best.is_none_or(|(_, ba, br)| auc > ba || (auc == ba && rec > br)) {
                best = Some((k, auc, rec));
            }
        }
        if let Some((k, auc, recall)) = best {
            summary.push(BestForRatio { ratio, cell: k, description: cells[k].spec.describe(), auc, recall });
        }
    }
    Ok(GridRun { cells, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceOutcome {
    pub race: Race,
    pub train_minority: usize,
    pub test_rows: usize,
    pub result: Option<ExperimentResult>,
    pub skipped: Option<String>,
}

/// One model per race present in either split, trained and tested on that
/// race's rows only. Races with fewer than `min_minority` training deaths
/// are skipped with a reason.
pub fn run_race_models(spec: &ExperimentSpec, train: &Dataset, test: &Dataset, min_minority: usize) -> Result<Vec<RaceOutcome>> {
    let present: Vec<Race> = Race::ALL
        .iter()
        .copied()
        .filter(|&r| train.records().iter().chain(test.records()).any(|x| x.outcome.race == r))
        .collect();
    Ok(present
        .par_iter()
        .map(|&race| {
            let tr = by_race(train, Some(race));
            let te = by_race(test, Some(race));
            let train_minority = tr.labels().positives();
            let mut out = RaceOutcome { race, train_minority, test_rows: te.len(), result: None, skipped: None };
            if train_minority < min_minority.max(1) {
                out.skipped = Some(format!("{train_minority} training deaths, below the minimum of {min_minority}"));
                return out;
            }
            let s = ExperimentSpec { race: Some(race), ..spec.clone() };
            match run_binary(&s, &tr, &te) {
                Ok(run) => out.result = Some(run.result),
                Err(e) => out.skipped = Some(e.to_string()),
            }
            out
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// Every source feature with its total split gain, descending.
    pub ranking: Vec<(String, f64)>,
    pub n_train: usize,
}

impl ImportanceReport {
    pub fn top(&self, k: usize) -> &[(String, f64)] {
        &self.ranking[..k.min(self.ranking.len())]
    }

    /// 1-based rank of `feature`.
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.ranking.iter().position(|(f, _)| f == feature).map(|k| k + 1)
    }
}

/// Gain importance of a boosted-tree fit on the training data at its
/// natural class balance (`ratio` is ignored).
pub fn run_importance(spec: &ExperimentSpec, train: &Dataset) -> Result<ImportanceReport> {
    let ModelSpec::Gbt(params) = &spec.model else {
        return Err(Error::invalid(format!(
            "importance needs the gbt family, got {}",
            spec.model.family()
        )));
    };
    let train = by_race(train, spec.race);
    let imputer = fit_imputer(&train).stage("impute")?;
    let (m, y) = encode(&apply_imputer(&train, &imputer)?).stage("encode")?;
    let m = select_features(&m, spec.subset).stage("select")?;
    let params = crate::gbt::GbtParams { seed: spec.seed, ..params.clone() };
    let model = crate::gbt::fit_gbt(&m, &y, &params).stage("fit")?;
    Ok(ImportanceReport { ranking: model.feature_importance(), n_train: y.len() })
}

/// Contents of one `.report` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportBody {
    Binary { result: ExperimentResult },
    Failed { reason: String },
    Race { groups: Vec<RaceOutcome> },
    Importance { importance: ImportanceReport },
    Summary { best: Vec<BestForRatio>, cells: Vec<String> },
    /// Cross-validated grid search on the training years.
    Cv { subset: FeatureSubset, ratio: SampleRatio, k: usize, search: GridResult },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub format: String,
    pub spec_hash: Option<String>,
    pub spec: Option<ExperimentSpec>,
    pub body: ReportBody,
}

impl ReportFile {
    pub fn new(spec: Option<&ExperimentSpec>, body: ReportBody) -> Self {
        ReportFile {
            format: REPORT_FORMAT.into(),
            spec_hash: spec.map(ExperimentSpec::hash),
            spec: spec.cloned(),
            body,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Reads a report, rejecting other format versions.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        match value.get("format").and_then(|f| f.as_str()) {
            Some(REPORT_FORMAT) => {}
            other => {
                return Err(Error::Format(format!(
                    "{}: expected format `{REPORT_FORMAT}`, found {other:?}",
                    path.display()
                )))
            }
        }
        serde_json::from_value(value).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Writes one `<spec-hash>.report` per grid cell and a `summary.report`
/// into `dir`, returning the paths in grid order with the summary last.
pub fn write_grid_reports(grid: &GridRun, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut seen = std::collections::BTreeSet::new();
    for cell in &grid.cells {
        if !seen.insert(cell.spec.hash()) {
            return Err(Error::invalid(format!("grid lists `{}` twice", cell.spec.describe())));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(grid.cells.len() + 1);
    for cell in &grid.cells {
        let body = match (&cell.result, &cell.failure) {
            (Some(result), _) => ReportBody::Binary { result: result.clone() },
            (None, reason) => ReportBody::Failed { reason: reason.clone().unwrap_or_default() },
        };
        let path = dir.join(format!("{}.report", cell.spec.hash()));
        ReportFile::new(Some(&cell.spec), body).write(&path)?;
        paths.push(path);
    }
    let summary = ReportBody::Summary {
        best: grid.summary.clone(),
        cells: grid.cells.iter().map(|c| c.spec.hash()).collect(),
    };
    let path = dir.join("summary.report");
    ReportFile::new(None, summary).write(&path)?;
    paths.push(path);
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{default_config, generate};

    fn data() -> (Dataset, Dataset) {
        let mut cfg = default_config();
        cfg.n_probe = 20_000;
        cfg.target_rate = 0.05;
        let ds = generate(6000, &cfg, 4).unwrap().dataset;
        let split = crate::ingest::split_by_year(&ds, &[2000, 2001].into(), 2002).unwrap();
        (split.train, split.test)
    }

    fn spec(model: ModelSpec) -> ExperimentSpec {
        ExperimentSpec {
            model,
            subset: FeatureSubset::All,
            ratio: SampleRatio::OneToTen,
            seed: 3,
            train_years: vec![2000, 2001],
            test_year: 2002,
            race: None,
            threshold: 0.5,
        }
    }

    fn small_gbt() -> ModelSpec {
        ModelSpec::Gbt(crate::gbt::GbtParams { n_estimators: 30, learning_rate: 0.1, ..Default::default() })
    }

    #[test]
    fn same_spec_same_result() {
        let (tr, te) = data();
        let a = run_binary(&spec(small_gbt()), &tr, &te).unwrap().result;
        let b = run_binary(&spec(small_gbt()), &tr, &te).unwrap().result;
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.n_test, te.len());
    }

    #[test]
    fn strata_tables_conserve_deaths() {
        let (tr, te) = data();
        let run = run_binary(&spec(small_gbt()), &tr, &te).unwrap();
        let r = &run.result.report;
        let deaths: u64 = r.mortality_strata.as_ref().unwrap().iter().map(|s| s.deaths).sum();
        assert_eq!(deaths, r.positives);
        let cause = r.cause_strata.as_ref().unwrap();
        let linked: u64 = cause.rows.iter().map(|s| s.deaths).sum();
        assert_eq!(linked + cause.unlinked_excluded, r.positives);
        let all_deaths = te.labels().into_vec();
        let t = run_strata_reports(&all_deaths, &te).unwrap();
        assert!(t.mortality.iter().all(|s| s.recall.is_none_or(|x| x == 1.0)));
        assert!(t.cause.rows.iter().all(|s| s.recall.is_none_or(|x| x == 1.0)));
    }

    #[test]
    fn grid_records_failures_and_picks_best() {
        let (tr, te) = data();
        let good = spec(small_gbt());
        let bad = spec(ModelSpec::Ridge { alpha: -1.0 });
        let weak = ExperimentSpec { subset: FeatureSubset::Ap, ..spec(small_gbt()) };
        let g = run_grid(&[weak, bad, good], &tr, &te).unwrap();
        assert!(g.cells[1].failure.as_ref().unwrap().contains("fit"));
        assert_eq!(g.summary.len(), 1);
        let auc = |k: usize| g.cells[k].result.as_ref().unwrap().report.auc;
        assert_eq!(g.summary[0].cell, if auc(2) > auc(0) { 2 } else { 0 });
    }

    #[test]
    fn race_partitions_cover_test() {
        let (tr, te) = data();
        let groups = run_race_models(&spec(small_gbt()), &tr, &te, 5).unwrap();
        assert_eq!(groups.iter().map(|g| g.test_rows).sum::<usize>(), te.len());
        assert!(groups.iter().any(|g| g.skipped.is_some()));
        assert!(groups.iter().any(|g| g.result.is_some()));
    }

    #[test]
    fn importance_needs_boosted_trees() {
        let (tr, _) = data();
        assert!(run_importance(&spec(ModelSpec::Ridge { alpha: 1.0 }), &tr).is_err());
        let imp = run_importance(&spec(small_gbt()), &tr).unwrap();
        assert_eq!(imp.ranking.len(), tr.schema().len());
        assert_eq!(imp.top(20).len(), 20);
        assert_eq!(imp.n_train, tr.len());
    }

    #[test]
    fn report_files_check_their_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.report");
        let r = ReportFile::new(None, ReportBody::Failed { reason: "boom".into() });
        r.write(&p).unwrap();
        assert_eq!(ReportFile::read(&p).unwrap(), r);
        std::fs::write(&p, r.to_json().replace("v1", "v0")).unwrap();
        assert!(matches!(ReportFile::read(&p), Err(Error::Format(_))));
    }
}
