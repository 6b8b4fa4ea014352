//! CSV ingestion, mean/mode imputation, one-hot encoding, year splits and the
//! four feature subsets.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{
    validate, BirthRecord, CauseOfDeath, FeatureKind, FeatureSchema, Outcome, Race, Value,
};
use crate::error::{Error, Result};

/// A schema together with records that all validate against it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    records: Vec<BirthRecord>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, records: Vec<BirthRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            let v = validate(r, &schema);
            if let Some(first) = v.first() {
                return Err(Error::invalid(format!("record {i}: {first}")));
            }
        }
        Ok(Dataset { schema, records })
    }

    pub(crate) fn new_unchecked(schema: FeatureSchema, records: Vec<BirthRecord>) -> Self {
        Dataset { schema, records }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn records(&self) -> &[BirthRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> LabelVector {
        LabelVector(self.records.iter().map(|r| r.outcome.label()).collect())
    }

    /// Keeps the records for which `keep` returns true, in order.
    pub fn filter(&self, mut keep: impl FnMut(&BirthRecord) -> bool) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn missing_count(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.values.iter().filter(|v| v.is_missing()).count())
            .sum()
    }
}

const META_COLUMNS: [&str; 5] = ["year", "survived", "age_at_death_hours", "cause", "race"];

#[derive(Clone, Copy, PartialEq)]
enum Column {
    Feature(usize),
    Year,
    Survived,
    AgeHours,
    AgeDays,
    Cause,
    Race,
}

/// Parses a dataset CSV file. See [`parse_csv_reader`].
pub fn parse_csv(path: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv_reader(file, path, schema)
}

/// Parses UTF-8 CSV with a header row. Feature columns must match the schema
/// by exact name; `year`, `survived` and `race` are required, and age at death
/// comes from either `age_at_death_hours` or `age_at_death_days` (scaled by
/// 24). Empty fields are missing values.
pub fn parse_csv_reader<R: Read>(reader: R, origin: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, format!("unreadable header: {e}")))?
        .clone();

    let mut columns = Vec::with_capacity(header.len());
    let mut seen = BTreeSet::new();
    for name in header.iter() {
        if !seen.insert(name.to_string()) {
            return Err(Error::SchemaMismatch(format!("duplicate column `{name}`")));
        }
        let col = match name {
            "year" => Column::Year,
            "survived" => Column::Survived,
            "age_at_death_hours" => Column::AgeHours,
            "age_at_death_days" => Column::AgeDays,
            "cause" => Column::Cause,
            "race" => Column::Race,
            other => match schema.index_of(other) {
                Some(i) => Column::Feature(i),
                None => {
                    return Err(Error::SchemaMismatch(format!(
                        "header column `{other}` is not in the schema"
                    )))
                }
            },
        };
        columns.push(col);
    }
    for f in schema.features() {
        if !seen.contains(&f.name) {
            return Err(Error::SchemaMismatch(format!("header lacks feature `{}`", f.name)));
        }
    }
    for required in ["year", "survived", "race"] {
        if !seen.contains(required) {
            return Err(Error::SchemaMismatch(format!("header lacks `{required}`")));
        }
    }
    let has_hours = seen.contains("age_at_death_hours");
    let has_days = seen.contains("age_at_death_days");
    if has_hours == has_days {
        return Err(Error::SchemaMismatch(
            "exactly one of age_at_death_hours / age_at_death_days is required".into(),
        ));
    }

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let mut values = vec![Value::Missing; schema.len()];
        let mut year = None;
        let mut survived = None;
        let mut age = None;
        let mut cause = None;
        let mut race = None;
        for (field, col) in row.iter().zip(&columns) {
            let field = field.trim();
            match *col {
                Column::Feature(i) => {
                    let spec = &schema.features()[i];
                    values[i] = if field.is_empty() {
                        Value::Missing
                    } else {
                        match spec.kind {
                            FeatureKind::Continuous => {
                                let x: f64 = field.parse().map_err(|_| {
                                    parse_err(line, format!("feature `{}`: malformed number `{field}`", spec.name))
                                })?;
                                Value::Number(x)
                            }
                            FeatureKind::Categorical => {
                                let k = spec.category_index(field).ok_or_else(|| {
                                    parse_err(line, format!("feature `{}`: unknown category `{field}`", spec.name))
                                })?;
                                Value::Category(k)
                            }
                        }
                    };
                }
                Column::Year => {
                    year = Some(field.parse::<i32>().map_err(|_| {
                        parse_err(line, format!("year: malformed integer `{field}`"))
                    })?);
                }
                Column::Survived => {
                    survived = Some(match field {
                        "true" | "1" => true,
                        "false" | "0" => false,
                        _ => return Err(parse_err(line, format!("survived: expected true/false, got `{field}`"))),
                    });
                }
                Column::AgeHours | Column::AgeDays if field.is_empty() => {}
                Column::AgeHours | Column::AgeDays => {
                    let x: f64 = field.parse().map_err(|_| {
                        parse_err(line, format!("age at death: malformed number `{field}`"))
                    })?;
                    age = Some(if *col == Column::AgeDays { x * 24.0 } else { x });
                }
                Column::Cause if field.is_empty() => {}
                Column::Cause => {
                    cause = Some(
                        CauseOfDeath::from_str(field)
                            .map_err(|_| parse_err(line, format!("cause: unknown category `{field}`")))?,
                    );
                }
                Column::Race => {
                    race = Some(
                        Race::from_str(field)
                            .map_err(|_| parse_err(line, format!("race: unknown category `{field}`")))?,
                    );
                }
            }
        }
        let (Some(year), Some(survived), Some(race)) = (year, survived, race) else {
            return Err(parse_err(line, "year, survived and race must be present".into()));
        };
        let record = BirthRecord {
            values,
            year,
            outcome: Outcome {
                survived,
                age_at_death_hours: age,
                cause,
                race,
            },
        };
        if let Some(v) = validate(&record, schema).first() {
            return Err(parse_err(line, v.to_string()));
        }
        records.push(record);
    }
    Ok(Dataset::new_unchecked(schema.clone(), records))
}

/// Writes the dataset in the format read by [`parse_csv_reader`], with ages in
/// hours. Numbers use the shortest representation that parses back exactly.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let to_err = |e: csv::Error| Error::invalid(format!("csv write: {e}"));
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = ds.schema.features().iter().map(|f| f.name.as_str()).collect();
    header.extend(META_COLUMNS);
    w.write_record(&header).map_err(to_err)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for r in &ds.records {
        row.clear();
        for (spec, v) in ds.schema.features().iter().zip(&r.values) {
            row.push(match v {
                Value::Missing => String::new(),
                Value::Number(x) => format!("{x}"),
                Value::Category(k) => spec.categories[*k].clone(),
            });
        }
        row.push(r.year.to_string());
        row.push(r.outcome.survived.to_string());
        row.push(r.outcome.age_at_death_hours.map(|a| format!("{a}")).unwrap_or_default());
        row.push(r.outcome.cause.map(|c| c.label().to_string()).unwrap_or_default());
        row.push(r.outcome.race.label().to_string());
        w.write_record(&row).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("csv write: {e}")))?;
    Ok(())
}

/// Per-feature fill values learned from training data: the arithmetic mean
/// for continuous features, the most frequent category for categorical ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputer {
    feature_names: Vec<String>,
    fills: Vec<Value>,
}

impl Imputer {
    pub fn fill(&self, feature: &str) -> Option<Value> {
        let i = self.feature_names.iter().position(|n| n == feature)?;
        Some(self.fills[i])
    }

    pub fn fills(&self) -> &[Value] {
        &self.fills
    }
}

pub fn fit_imputer(train: &Dataset) -> Result<Imputer> {
    let schema = train.schema();
    let mut fills = Vec::with_capacity(schema.len());
    for (j, spec) in schema.features().iter().enumerate() {
        match spec.kind {
            FeatureKind::Continuous => {
                let (sum, count) = train.records.iter().fold((0.0, 0usize), |(s, c), r| match r.values[j] {
                    Value::Number(x) => (s + x, c + 1),
                    _ => (s, c),
                });
                if count == 0 {
                    return Err(Error::AllMissing(spec.name.clone()));
                }
                fills.push(Value::Number(sum / count as f64));
            }
            FeatureKind::Categorical => {
                let mut counts = vec![0usize; spec.categories.len()];
                for r in &train.records {
                    if let Value::Category(k) = r.values[j] {
                        counts[k] += 1;
                    }
                }
                if counts.iter().all(|&c| c == 0) {
                    return Err(Error::AllMissing(spec.name.clone()));
                }
                // first maximal index wins ties
                let mode = counts
                    .iter()
                    .enumerate()
                    .fold((0, 0), |best, (k, &c)| if c > best.1 { (k, c) } else { best })
                    .0;
                fills.push(Value::Category(mode));
            }
        }
    }
    Ok(Imputer {
        feature_names: schema.features().iter().map(|f| f.name.clone()).collect(),
        fills,
    })
}

pub fn apply_imputer(ds: &Dataset, imp: &Imputer) -> Result<Dataset> {
    let names: Vec<&str> = ds.schema.features().iter().map(|f| f.name.as_str()).collect();
    if names.len() != imp.feature_names.len() || names.iter().zip(&imp.feature_names).any(|(a, b)| a != b) {
        return Err(Error::SchemaMismatch(
            "imputer was fitted on a different feature list".into(),
        ));
    }
    let records = ds
        .records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            for (v, fill) in r.values.iter_mut().zip(&imp.fills) {
                if v.is_missing() {
                    *v = *fill;
                }
            }
            r
        })
        .collect();
    Ok(Dataset::new_unchecked(ds.schema.clone(), records))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Encoding {
    Raw,
    OneHot(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub source: String,
    pub encoding: Encoding,
}

impl ColumnMeta {
    pub fn name(&self) -> String {
        match &self.encoding {
            Encoding::Raw => self.source.clone(),
            Encoding::OneHot(cat) => format!("{}={}", self.source, cat),
        }
    }
}

/// Dense row-major design matrix with per-column provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    columns: Vec<ColumnMeta>,
    data: Vec<f64>,
    birth_weight_source: String,
    apgar_source: String,
}

impl FeatureMatrix {
    /// Builds a matrix from row-major data. Subset roles default to
    /// `birth_weight_g` and `apgar_score`.
    pub fn from_rows(columns: Vec<ColumnMeta>, data: Vec<f64>) -> Result<Self> {
        let n_cols = columns.len();
        if n_cols == 0 && !data.is_empty() {
            return Err(Error::invalid("data without columns"));
        }
        if n_cols > 0 && data.len() % n_cols != 0 {
            return Err(Error::Dimension {
                expected: n_cols,
                got: data.len() % n_cols,
            });
        }
        Ok(FeatureMatrix {
            n_rows: if n_cols == 0 { 0 } else { data.len() / n_cols },
            columns,
            data,
            birth_weight_source: "birth_weight_g".into(),
            apgar_source: "apgar_score".into(),
        })
    }

    /// Matrix of anonymous raw columns `x0, x1, ...`.
    pub fn from_raw_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.len());
        let columns = (0..n_cols)
            .map(|j| ColumnMeta {
                source: format!("x{j}"),
                encoding: Encoding::Raw,
            })
            .collect();
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            if r.len() != n_cols {
                return Err(Error::Dimension {
                    expected: n_cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(FeatureMatrix {
            n_rows: rows.len(),
            columns,
            data,
            birth_weight_source: "birth_weight_g".into(),
            apgar_source: "apgar_score".into(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(ColumnMeta::name).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        let p = self.n_cols();
        self.data[i * p + j] = x;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols());
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            n_rows: idx.len(),
            columns: self.columns.clone(),
            data,
            birth_weight_source: self.birth_weight_source.clone(),
            apgar_source: self.apgar_source.clone(),
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(self.n_rows * idx.len());
        for i in 0..self.n_rows {
            let row = self.row(i);
            data.extend(idx.iter().map(|&j| row[j]));
        }
        FeatureMatrix {
            n_rows: self.n_rows,
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            data,
            birth_weight_source: self.birth_weight_source.clone(),
            apgar_source: self.apgar_source.clone(),
        }
    }

    pub(crate) fn check_width(&self, expected: usize) -> Result<()> {
        if self.n_cols() != expected {
            return Err(Error::Dimension {
                expected,
                got: self.n_cols(),
            });
        }
        Ok(())
    }
}

/// Binary outcome per record; 1 marks the NotSurvival minority class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct LabelVector(Vec<u8>);

impl LabelVector {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::invalid(format!("label {bad} is not 0 or 1")));
        }
        Ok(LabelVector(labels))
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.0.iter().filter(|&&y| y == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn select(&self, idx: &[usize]) -> LabelVector {
        LabelVector(idx.iter().map(|&i| self.0[i]).collect())
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&y| f64::from(y)).collect()
    }

    pub(crate) fn require_both_classes(&self) -> Result<()> {
        if self.positives() == 0 {
            return Err(Error::EmptyClass("no NotSurvival (label 1) rows".into()));
        }
        if self.negatives() == 0 {
            return Err(Error::EmptyClass("no Survival (label 0) rows".into()));
        }
        Ok(())
    }
}

impl From<Vec<u8>> for LabelVector {
    fn from(v: Vec<u8>) -> Self {
        LabelVector::new(v).expect("labels must be 0 or 1")
    }
}

/// Column layout produced by [`encode`] for a schema.
pub fn encoded_columns(schema: &FeatureSchema) -> Vec<ColumnMeta> {
    let mut cols = Vec::new();
    for f in schema.features() {
        match f.kind {
            FeatureKind::Continuous => cols.push(ColumnMeta {
                source: f.name.clone(),
                encoding: Encoding::Raw,
            }),
            FeatureKind::Categorical => cols.extend(f.categories.iter().map(|c| ColumnMeta {
                source: f.name.clone(),
                encoding: Encoding::OneHot(c.clone()),
            })),
        }
    }
    cols
}

/// Appends the encoded form of one record's values to `out`.
pub fn encode_values(schema: &FeatureSchema, values: &[Value], out: &mut Vec<f64>) -> Result<()> {
    for (spec, v) in schema.features().iter().zip(values) {
        match (spec.kind, v) {
            (_, Value::Missing) => return Err(Error::ResidualMissing(spec.name.clone())),
            (FeatureKind::Continuous, Value::Number(x)) => out.push(*x),
            (FeatureKind::Categorical, Value::Category(k)) => {
                out.extend((0..spec.categories.len()).map(|c| if c == *k { 1.0 } else { 0.0 }))
            }
            _ => return Err(Error::invalid(format!("value kind mismatch for `{}`", spec.name))),
        }
    }
    Ok(())
}

/// Encodes an imputed dataset: continuous values copied, categorical values
/// one-hot in schema category order, labels 1 for NotSurvival.
pub fn encode(ds: &Dataset) -> Result<(FeatureMatrix, LabelVector)> {
    let columns = encoded_columns(&ds.schema);
    let mut data = Vec::with_capacity(ds.len() * columns.len());
    for r in &ds.records {
        encode_values(&ds.schema, &r.values, &mut data)?;
    }
    let mut m = FeatureMatrix::from_rows(columns, data)?;
    m.n_rows = ds.len();
    m.birth_weight_source = ds.schema.birth_weight_feature().to_string();
    m.apgar_source = ds.schema.apgar_feature().to_string();
    Ok((m, ds.labels()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSubset {
    #[serde(rename = "ALL")]
    All,
    #[serde(rename = "BWAP")]
    Bwap,
    #[serde(rename = "BW")]
    Bw,
    #[serde(rename = "AP")]
    Ap,
}

impl FeatureSubset {
    pub const ALL_SUBSETS: [FeatureSubset; 4] =
        [FeatureSubset::All, FeatureSubset::Bwap, FeatureSubset::Bw, FeatureSubset::Ap];

    pub fn label(self) -> &'static str {
        match self {
            FeatureSubset::All => "ALL",
            FeatureSubset::Bwap => "BWAP",
            FeatureSubset::Bw => "BW",
            FeatureSubset::Ap => "AP",
        }
    }
}

impl fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FeatureSubset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureSubset::ALL_SUBSETS
            .into_iter()
            .find(|x| x.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown feature subset `{s}`")))
    }
}

pub fn select_features(m: &FeatureMatrix, s: FeatureSubset) -> Result<FeatureMatrix> {
    let sources: Vec<&str> = match s {
        FeatureSubset::All => return Ok(m.clone()),
        FeatureSubset::Bw => vec![&m.birth_weight_source],
        FeatureSubset::Ap => vec![&m.apgar_source],
        FeatureSubset::Bwap => vec![&m.birth_weight_source, &m.apgar_source],
    };
    let mut idx = Vec::new();
    for src in sources {
        let j = m
            .columns
            .iter()
            .position(|c| c.source == src && c.encoding == Encoding::Raw)
            .ok_or_else(|| Error::MissingFeature {
                feature: src.to_string(),
                subset: s.label().to_string(),
            })?;
        idx.push(j);
    }
    Ok(m.select_columns(&idx))
}

#[derive(Debug, Clone)]
pub struct YearSplit {
    pub train: Dataset,
    pub test: Dataset,
    /// Records whose year is in neither set.
    pub dropped: usize,
}

pub fn split_by_year(ds: &Dataset, train_years: &BTreeSet<i32>, test_year: i32) -> Result<YearSplit> {
    if train_years.contains(&test_year) {
        return Err(Error::invalid(format!("test year {test_year} is also a training year")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut dropped = 0;
    for r in &ds.records {
        if train_years.contains(&r.year) {
            train.push(r.clone());
        } else if r.year == test_year {
            test.push(r.clone());
        } else {
            dropped += 1;
        }
    }
    if train.is_empty() {
        return Err(Error::EmptyPartition(format!("no records in training years {train_years:?}")));
    }
    if test.is_empty() {
        return Err(Error::EmptyPartition(format!("no records in test year {test_year}")));
    }
    Ok(YearSplit {
        train: Dataset::new_unchecked(ds.schema.clone(), train),
        test: Dataset::new_unchecked(ds.schema.clone(), test),
        dropped,
    })
}
