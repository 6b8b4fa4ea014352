//! Core data model: feature schema, raw birth records, outcomes and the
//! categorical taxonomies used for stratified evaluation.
//!
//! Labels follow a fixed convention: `1` is the minority *NotSurvival* class
//! (the infant died before its first birthday), `0` is *Survival*.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exclusive upper bound on age at death, in hours (366 days).
pub const MAX_AGE_HOURS: f64 = 8784.0;

/// Column names that carry outcome or bookkeeping data and therefore can
/// never be predictive features.
pub const RESERVED_COLUMNS: [&str; 6] = [
    "year",
    "survived",
    "age_at_death_hours",
    "age_at_death_days",
    "cause",
    "race",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default)]
    pub allows_missing: bool,
}

impl FeatureSpec {
    pub fn continuous(name: &str, allows_missing: bool) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Continuous,
            categories: Vec::new(),
            allows_missing,
        }
    }

    pub fn categorical(name: &str, categories: &[&str], allows_missing: bool) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Categorical,
            categories: categories.iter().map(|c| c.to_string()).collect(),
            allows_missing,
        }
    }

    pub fn category_index(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }
}

fn default_bw() -> String {
    "birth_weight_g".to_string()
}

fn default_ap() -> String {
    "apgar_score".to_string()
}

/// Ordered, validated list of predictive features.
///
/// The two named roles identify the birth-weight (grams) and apgar columns used
/// by the reduced feature subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    #[serde(rename = "feature")]
    features: Vec<FeatureSpec>,
    #[serde(default = "default_bw")]
    birth_weight_feature: String,
    #[serde(default = "default_ap")]
    apgar_feature: String,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        Self::with_roles(features, &default_bw(), &default_ap())
    }

    pub fn with_roles(features: Vec<FeatureSpec>, birth_weight: &str, apgar: &str) -> Result<Self> {
        let schema = FeatureSchema {
            features,
            birth_weight_feature: birth_weight.to_string(),
            apgar_feature: apgar.to_string(),
        };
        schema.check()?;
        Ok(schema)
    }

    fn check(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for f in &self.features {
            if f.name.is_empty() {
                return Err(Error::Schema("empty feature name".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature `{}`", f.name)));
            }
            if RESERVED_COLUMNS.contains(&f.name.as_str()) {
                return Err(Error::Schema(format!(
                    "`{}` is an outcome field and cannot be a feature",
                    f.name
                )));
            }
            match f.kind {
                FeatureKind::Categorical => {
                    if f.categories.len() < 2 {
                        return Err(Error::Schema(format!(
                            "categorical feature `{}` needs at least 2 categories",
                            f.name
                        )));
                    }
                    let distinct: HashSet<_> = f.categories.iter().collect();
                    if distinct.len() != f.categories.len() {
                        return Err(Error::Schema(format!(
                            "categorical feature `{}` repeats a category",
                            f.name
                        )));
                    }
                }
                FeatureKind::Continuous => {
                    if !f.categories.is_empty() {
                        return Err(Error::Schema(format!(
                            "continuous feature `{}` must not list categories",
                            f.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: FeatureSchema =
            toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        schema.check()?;
        Ok(schema)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn birth_weight_feature(&self) -> &str {
        &self.birth_weight_feature
    }

    pub fn apgar_feature(&self) -> &str {
        &self.apgar_feature
    }
}

/// One raw feature value. Categorical values hold an index into the
/// feature's category list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Number(f64),
    Category(usize),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }
}

macro_rules! labelled_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }

            pub fn index(self) -> usize {
                self as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.label() == s)
                    .ok_or_else(|| Error::invalid(format!(
                        "unknown {} `{}`", stringify!($name), s
                    )))
            }
        }
    };
}

labelled_enum! {
    /// Death-timing bins, left-closed and right-open, in hours.
    MortalityClass {
        Lt1h => "LT1H",
        H1To23 => "H1_23",
        D1To6 => "D1_6",
        D7To27 => "D7_27",
        D28ToY1 => "D28_Y1",
    }
}

impl MortalityClass {
    /// `[lower, upper)` in hours.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            MortalityClass::Lt1h => (0.0, 1.0),
            MortalityClass::H1To23 => (1.0, 24.0),
            MortalityClass::D1To6 => (24.0, 168.0),
            MortalityClass::D7To27 => (168.0, 672.0),
            MortalityClass::D28ToY1 => (672.0, MAX_AGE_HOURS),
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            MortalityClass::Lt1h => "< 1 hour",
            MortalityClass::H1To23 => "1 - 23 hours",
            MortalityClass::D1To6 => "1 - 6 days",
            MortalityClass::D7To27 => "7 - 27 days",
            MortalityClass::D28ToY1 => "28 days - 1 year",
        }
    }
}

labelled_enum! {
    CauseOfDeath {
        GestationFetalMalnutrition => "GestationFetalMalnutrition",
        SidsNecExternal => "SidsNecExternal",
        CongenitalChromosomal => "CongenitalChromosomal",
        MaternalFactors => "MaternalFactors",
        DiseasesDisorders => "DiseasesDisorders",
        Other => "Other",
    }
}

impl CauseOfDeath {
    pub fn description(self) -> &'static str {
        match self {
            CauseOfDeath::GestationFetalMalnutrition => "Gestation/Fetal Malnutrition",
            CauseOfDeath::SidsNecExternal => "SIDS, NEC, External Causes",
            CauseOfDeath::CongenitalChromosomal => "Congenital/Chromosomal Abnormalities",
            CauseOfDeath::MaternalFactors => "Maternal Factors/Complications",
            CauseOfDeath::DiseasesDisorders => "Diseases/Disorders",
            CauseOfDeath::Other => "Other",
        }
    }
}

labelled_enum! {
    /// Mother's race, which also stands for the infant's.
    Race {
        White => "White",
        Black => "Black",
        AmericanIndian => "AmericanIndian",
        Chinese => "Chinese",
        Japanese => "Japanese",
        Hawaiian => "Hawaiian",
        Filipino => "Filipino",
        AsianKorean => "AsianKorean",
        Samoan => "Samoan",
        Vietnamese => "Vietnamese",
        Guamanian => "Guamanian",
        Other => "Other",
    }
}

/// Returns the unique death-timing bin containing `age_hours`.
pub fn mortality_class(age_hours: f64) -> Result<MortalityClass> {
    if !(0.0..MAX_AGE_HOURS).contains(&age_hours) {
        return Err(Error::AgeOutOfDomain(age_hours));
    }
    let class = MortalityClass::ALL
        .iter()
        .copied()
        .find(|c| {
            let (lo, hi) = c.bounds();
            age_hours >= lo && age_hours < hi
        })
        .expect("bins cover [0, 8784)");
    Ok(class)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub survived: bool,
    pub age_at_death_hours: Option<f64>,
    pub cause: Option<CauseOfDeath>,
    pub race: Race,
}

impl Outcome {
    pub fn survived(race: Race) -> Self {
        Outcome {
            survived: true,
            age_at_death_hours: None,
            cause: None,
            race,
        }
    }

    pub fn died(race: Race, age_hours: f64, cause: Option<CauseOfDeath>) -> Self {
        Outcome {
            survived: false,
            age_at_death_hours: Some(age_hours),
            cause,
            race,
        }
    }

    /// Binary label: 1 for NotSurvival.
    pub fn label(&self) -> u8 {
        u8::from(!self.survived)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthRecord {
    pub values: Vec<Value>,
    pub year: i32,
    pub outcome: Outcome,
}

/// A single broken rule, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

fn violation(field: &str, rule: impl Into<String>) -> Violation {
    Violation {
        field: field.to_string(),
        rule: rule.into(),
    }
}

/// Checks a record against the schema and the outcome invariants. An empty
/// list means the record is valid.
pub fn validate(record: &BirthRecord, schema: &FeatureSchema) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.values.len() != schema.len() {
        out.push(violation(
            "values",
            format!(
                "value count {} does not match schema length {}",
                record.values.len(),
                schema.len()
            ),
        ));
    }
    for (spec, value) in schema.features().iter().zip(&record.values) {
        match (spec.kind, value) {
            (_, Value::Missing) if !spec.allows_missing => {
                out.push(violation(&spec.name, "missing value not allowed"));
            }
            (_, Value::Missing) => {}
            (FeatureKind::Continuous, Value::Number(x)) if !x.is_finite() => {
                out.push(violation(&spec.name, "non-finite number"));
            }
            (FeatureKind::Continuous, Value::Number(_)) => {}
            (FeatureKind::Categorical, Value::Category(k)) if *k >= spec.categories.len() => {
                out.push(violation(&spec.name, format!("category index {k} not in categories")));
            }
            (FeatureKind::Categorical, Value::Category(_)) => {}
            (FeatureKind::Continuous, _) => {
                out.push(violation(&spec.name, "expected a number"));
            }
            (FeatureKind::Categorical, _) => {
                out.push(violation(&spec.name, "expected a category"));
            }
        }
    }

    let o = &record.outcome;
    if o.survived {
        if o.age_at_death_hours.is_some() || o.cause.is_some() {
            out.push(violation("outcome", "outcome consistency"));
        }
    } else {
        match o.age_at_death_hours {
            None => out.push(violation("outcome", "outcome consistency")),
            Some(age) if !(0.0..MAX_AGE_HOURS).contains(&age) => {
                out.push(violation("age_at_death_hours", "age outside [0, 8784)"));
            }
            Some(_) => {}
        }
    }
    out
}
