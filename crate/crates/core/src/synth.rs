//! Synthetic birth records with a known per-record death probability.
//!
//! Features are drawn from configured marginals (three continuous features
//! share a latent factor), the linear predictor `w·x + b` is evaluated on the
//! encoded columns, and deaths are Bernoulli(σ(w·x + b)). Outcome details
//! (timing bin, age, cause) follow; missingness is applied last, so the
//! stored `p*` always refers to complete feature values.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{
    BirthRecord, CauseOfDeath, FeatureSchema, FeatureSpec, MortalityClass, Outcome, Race, Value,
};
use crate::error::{Error, Result};
use crate::ingest::{write_csv, Dataset};
use crate::metrics::roc_auc;
use crate::rng::{stream, streams, Rng};
use crate::{logit, sigmoid};

/// How a feature's value is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Marginal {
    /// `mean + sd·(a·L + sqrt(1 − a²)·e)` with shared latent `L` and own
    /// noise `e`, both standard normal; the marginal is `N(mean, sd²)`.
    Normal { mean: f64, sd: f64, latent_loading: f64 },
    Uniform { low: f64, high: f64 },
    Categorical { categories: Vec<String>, probs: Vec<f64> },
    /// Category of an earlier continuous feature by ascending cut points:
    /// `categories[k]` holds values in `[cuts[k-1], cuts[k])`.
    Binned { source: String, cuts: Vec<f64>, categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFeature {
    pub name: String,
    pub marginal: Marginal,
    /// Risk coefficients: one for a continuous feature (per raw unit), one
    /// per category for a categorical feature.
    pub risk: Vec<f64>,
    #[serde(default)]
    pub missing_rate: f64,
}

impl SynthFeature {
    fn continuous(&self) -> bool {
        matches!(self.marginal, Marginal::Normal { .. } | Marginal::Uniform { .. })
    }

    fn categories(&self) -> Option<&[String]> {
        match &self.marginal {
            Marginal::Categorical { categories, .. } | Marginal::Binned { categories, .. } => Some(categories),
            _ => None,
        }
    }
}

/// Softmax score of one cause: `bias + Σ weight·column`, where a continuous
/// column enters standardized by its configured mean and scale and a
/// category column `feature=category` enters as an indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CauseRule {
    pub cause: CauseOfDeath,
    pub bias: f64,
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YearShare {
    pub year: i32,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub features: Vec<SynthFeature>,
    /// `None` until calibrated.
    pub intercept: Option<f64>,
    pub target_rate: f64,
    /// Death-timing distribution given death, in bin order. A placeholder
    /// shape, not measured data.
    pub mortality_probs: [f64; 5],
    pub causes: Vec<CauseRule>,
    /// Fraction of deaths with a linked cause.
    pub link_rate: f64,
    /// Probability that a survivor is relabelled as a late (28 days to one
    /// year) death with cause SidsNecExternal. The flip ignores features.
    #[serde(default)]
    pub late_noise_rate: f64,
    pub years: Vec<YearShare>,
    /// Categorical feature whose category labels are race labels; it also
    /// fills the race outcome field.
    pub race_feature: String,
    pub birth_weight_feature: String,
    pub apgar_feature: String,
    pub n_probe: usize,
}

const BLOCK: usize = 4096;

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        let prob_vec = |name: &str, p: &[f64]| -> Result<()> {
            if p.iter().any(|x| !(*x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("{name} must be nonnegative and sum to 1")));
            }
            Ok(())
        };
        if !(self.target_rate > 0.0 && self.target_rate < 1.0) {
            return bad("target_rate must lie in (0, 1)".into());
        }
        prob_vec("mortality_probs", &self.mortality_probs)?;
        if !(0.0..=1.0).contains(&self.link_rate) || !(0.0..=1.0).contains(&self.late_noise_rate) {
            return bad("link_rate and late_noise_rate must lie in [0, 1]".into());
        }
        if self.years.is_empty() {
            return bad("at least one year is required".into());
        }
        prob_vec("year shares", &self.years.iter().map(|y| y.share).collect::<Vec<_>>())?;
        if self.n_probe == 0 {
            return bad("n_probe must be positive".into());
        }
        if self.causes.is_empty() {
            return bad("at least one cause rule is required".into());
        }
        for (k, f) in self.features.iter().enumerate() {
            if !(0.0..1.0).contains(&f.missing_rate) {
                return bad(format!("`{}`: missing_rate must lie in [0, 1)", f.name));
            }
            let width = match &f.marginal {
                Marginal::Normal { sd, latent_loading, .. } => {
                    if !(*sd > 0.0) || !(latent_loading.abs() <= 1.0) {
                        return bad(format!("`{}`: sd must be positive and |latent_loading| ≤ 1", f.name));
                    }
                    1
                }
                Marginal::Uniform { low, high } => {
                    if !(low < high) {
                        return bad(format!("`{}`: uniform needs low < high", f.name));
                    }
                    1
                }
                Marginal::Categorical { categories, probs } => {
                    if categories.len() != probs.len() {
                        return bad(format!("`{}`: one probability per category", f.name));
                    }
                    prob_vec(&f.name, probs)?;
                    categories.len()
                }
                Marginal::Binned { source, cuts, categories } => {
                    let src = self.features[..k].iter().find(|g| &g.name == source);
                    if !src.is_some_and(|g| g.continuous()) {
                        return bad(format!("`{}`: source `{source}` must be an earlier continuous feature", f.name));
                    }
                    if categories.len() != cuts.len() + 1 || cuts.windows(2).any(|w| !(w[0] < w[1])) {
                        return bad(format!("`{}`: needs ascending cuts and one more category than cuts", f.name));
                    }
                    categories.len()
                }
            };
            if f.risk.len() != width {
                return bad(format!("`{}`: expected {width} risk coefficients, got {}", f.name, f.risk.len()));
            }
        }
        let race = self
            .features
            .iter()
            .find(|f| f.name == self.race_feature)
            .and_then(|f| match &f.marginal {
                Marginal::Categorical { categories, .. } => Some(categories),
                _ => None,
            })
            .ok_or_else(|| Error::invalid(format!("race feature `{}` must be categorical", self.race_feature)))?;
        for c in race {
            c.parse::<Race>()?;
        }
        let columns = self.column_names();
        for rule in &self.causes {
            for key in rule.weights.keys() {
                if !columns.contains(key) {
                    return bad(format!("cause weight names unknown column `{key}`"));
                }
            }
        }
        self.schema()?;
        Ok(())
    }

    /// Encoded column names, in the order produced by ingest encoding.
    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for f in &self.features {
            match f.categories() {
                None => out.push(f.name.clone()),
                Some(cats) => out.extend(cats.iter().map(|c| format!("{}={c}", f.name))),
            }
        }
        out
    }

    pub fn schema(&self) -> Result<FeatureSchema> {
        let specs = self
            .features
            .iter()
            .map(|f| {
                let missing = f.missing_rate > 0.0;
                match f.categories() {
                    None => FeatureSpec::continuous(&f.name, missing),
                    Some(cats) => {
                        let cats: Vec<&str> = cats.iter().map(String::as_str).collect();
                        FeatureSpec::categorical(&f.name, &cats, missing)
                    }
                }
            })
            .collect();
        FeatureSchema::with_roles(specs, &self.birth_weight_feature, &self.apgar_feature)
    }

    /// Lowercase hex of the first 8 bytes of SHA-256 over the JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Feature draws for one record before missingness.
struct Draw {
    values: Vec<Value>,
    /// `w·x` without the intercept.
    linear: f64,
    /// Standardized continuous values and 0/1 indicators, by encoded column.
    columns: Vec<f64>,
}

fn draw_features(cfg: &GeneratorConfig, rng: &mut Rng) -> Draw {
    let latent: f64 = rng.sample(StandardNormal);
    let mut values = Vec::with_capacity(cfg.features.len());
    let mut raw = Vec::with_capacity(cfg.features.len());
    let mut columns = Vec::new();
    let mut linear = 0.0;
    for f in &cfg.features {
        match &f.marginal {
            Marginal::Normal { mean, sd, latent_loading } => {
                let e: f64 = rng.sample(StandardNormal);
                let a = *latent_loading;
                let s = a * latent + (1.0 - a * a).sqrt() * e;
                let x = mean + sd * s;
                values.push(Value::Number(x));
                raw.push(x);
                columns.push(s);
                linear += f.risk[0] * x;
            }
            Marginal::Uniform { low, high } => {
                let u: f64 = rng.random();
                let x = low + (high - low) * u;
                values.push(Value::Number(x));
                raw.push(x);
                let mid = 0.5 * (low + high);
                columns.push((x - mid) / ((high - low) / 12f64.sqrt()));
                linear += f.risk[0] * x;
            }
            Marginal::Categorical { probs, .. } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = probs.len() - 1;
                for (c, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        k = c;
                        break;
                    }
                }
                values.push(Value::Category(k));
                raw.push(f64::NAN);
                columns.extend((0..probs.len()).map(|c| f64::from(u8::from(c == k))));
                linear += f.risk[k];
            }
            Marginal::Binned { source, cuts, categories } => {
                let j = cfg.features.iter().position(|g| &g.name == source).expect("validated");
                let x = raw[j];
                let k = cuts.iter().take_while(|&&c| x >= c).count();
                values.push(Value::Category(k));
                raw.push(f64::NAN);
                columns.extend((0..categories.len()).map(|c| f64::from(u8::from(c == k))));
                linear += f.risk[k];
            }
        }
    }
    Draw { values, linear, columns }
}

/// Chooses `b` so the mean of `σ(w·x + b)` over `n_probe` seeded feature
/// draws equals the target rate, by bisection. When every draw has the same
/// linear part `s` the answer is `logit(target) − s` exactly.
pub fn calibrate_intercept(cfg: &GeneratorConfig, n_probe: usize, seed: u64) -> Result<f64> {
    cfg.validate()?;
    if n_probe == 0 {
        return Err(Error::invalid("n_probe must be positive"));
    }
    let mut rng = stream(seed, streams::SYNTH_PROBE);
    let lin: Vec<f64> = (0..n_probe).map(|_| draw_features(cfg, &mut rng).linear).collect();
    let target = cfg.target_rate;
    if lin.iter().all(|&s| s == lin[0]) {
        return Ok(logit(target) - lin[0]);
    }
    let rate = |b: f64| lin.par_iter().map(|&s| sigmoid(s + b)).sum::<f64>() / n_probe as f64;
    let center = logit(target) - lin.iter().sum::<f64>() / n_probe as f64;
    let (mut lo, mut hi) = (center - 60.0, center + 60.0);
    if !(rate(lo) < target && rate(hi) > target) {
        return Err(Error::Bracket(format!(
            "probe rate spans [{}, {}], which misses target {target}",
            rate(lo),
            rate(hi)
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    /// True death probability per record, from complete feature values.
    pub p_star: Vec<f64>,
    pub config_hash: String,
    pub intercept: f64,
}

impl SyntheticDataset {
    /// Records flipped by late-death noise are deaths whose `p*` does not
    /// reflect the flip.
    pub fn deaths(&self) -> usize {
        self.dataset.labels().positives()
    }
}

/// Record counts per year by largest remainder, ties to the earlier year.
fn year_counts(years: &[YearShare], n: usize) -> Vec<usize> {
    let exact: Vec<f64> = years.iter().map(|y| y.share * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>().min(n);
    let mut order: Vec<usize> = (0..years.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

fn pick(rng: &mut Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

fn generate_block(
    cfg: &GeneratorConfig,
    b: f64,
    cause_weights: &[(CauseOfDeath, f64, Vec<f64>)],
    race_idx: usize,
    races: &[Race],
    years: &[i32],
    seed: u64,
    block: usize,
) -> Vec<(BirthRecord, f64)> {
    let mut rng = stream(seed, streams::SYNTH_BLOCK_BASE + block as u64);
    years
        .iter()
        .map(|&year| {
            let d = draw_features(cfg, &mut rng);
            let p = sigmoid(d.linear + b);
            let race = match d.values[race_idx] {
                Value::Category(k) => races[k],
                _ => unreachable!("race feature is categorical"),
            };
            let died = rng.random::<f64>() < p;
            let outcome = if died {
                let bin = MortalityClass::ALL[pick(&mut rng, &cfg.mortality_probs)];
                let (lo, hi) = bin.bounds();
                let age = lo + (hi - lo) * rng.random::<f64>();
                let scores: Vec<f64> = cause_weights
                    .iter()
                    .map(|(_, bias, w)| bias + w.iter().zip(&d.columns).map(|(a, x)| a * x).sum::<f64>())
                    .collect();
                let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
                let total: f64 = e.iter().sum();
                let probs: Vec<f64> = e.iter().map(|x| x / total).collect();
                let cause = cause_weights[pick(&mut rng, &probs)].0;
                let linked = rng.random::<f64>() < cfg.link_rate;
                Outcome::died(race, age, linked.then_some(cause))
            } else if rng.random::<f64>() < cfg.late_noise_rate {
                let (lo, hi) = MortalityClass::D28ToY1.bounds();
                let age = lo + (hi - lo) * rng.random::<f64>();
                Outcome::died(race, age, Some(CauseOfDeath::SidsNecExternal))
            } else {
                Outcome::survived(race)
            };
            let mut values = d.values;
            for (v, f) in values.iter_mut().zip(&cfg.features) {
                if f.missing_rate > 0.0 && rng.random::<f64>() < f.missing_rate {
                    *v = Value::Missing;
                }
            }
            (BirthRecord { values, year, outcome }, p)
        })
        .collect()
}

/// Draws `n` records. Uses the configured intercept, calibrating one from
/// `seed` first when the config has none. Blocks of records use independent
/// streams, so output is identical at any thread count.
pub fn generate(n: usize, cfg: &GeneratorConfig, seed: u64) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let b = match cfg.intercept {
        Some(b) => b,
        None => calibrate_intercept(cfg, cfg.n_probe, seed)?,
    };
    let schema = cfg.schema()?;
    let columns = cfg.column_names();
    let cause_weights: Vec<(CauseOfDeath, f64, Vec<f64>)> = cfg
        .causes
        .iter()
        .map(|r| (r.cause, r.bias, columns.iter().map(|c| r.weights.get(c).copied().unwrap_or(0.0)).collect()))
        .collect();
    let race_idx = cfg.features.iter().position(|f| f.name == cfg.race_feature).expect("validated");
    let races: Vec<Race> = cfg.features[race_idx]
        .categories()
        .expect("validated")
        .iter()
        .map(|c| c.parse().expect("validated"))
        .collect();
    let mut year_of = Vec::with_capacity(n);
    for (y, c) in cfg.years.iter().zip(year_counts(&cfg.years, n)) {
        year_of.extend(std::iter::repeat_n(y.year, c));
    }
    let blocks: Vec<Vec<(BirthRecord, f64)>> = year_of
        .par_chunks(BLOCK)
        .enumerate()
        .map(|(k, ys)| generate_block(cfg, b, &cause_weights, race_idx, &races, ys, seed, k))
        .collect();
    let mut records = Vec::with_capacity(n);
    let mut p_star = Vec::with_capacity(n);
    for (r, p) in blocks.into_iter().flatten() {
        records.push(r);
        p_star.push(p);
    }
    let mut calibrated = cfg.clone();
    calibrated.intercept = Some(b);
    Ok(SyntheticDataset {
        dataset: Dataset::new(schema, records)?,
        p_star,
        config_hash: calibrated.hash(),
        intercept: b,
    })
}

/// AUC of ranking by the true probabilities.
pub fn bayes_auc(ds: &SyntheticDataset) -> Result<f64> {
    roc_auc(&ds.p_star, ds.dataset.labels().as_slice())
}

fn normal(name: &str, mean: f64, sd: f64, loading: f64, risk_per_sd: f64, missing: f64) -> SynthFeature {
    SynthFeature {
        name: name.into(),
        marginal: Marginal::Normal { mean, sd, latent_loading: loading },
        risk: vec![risk_per_sd / sd],
        missing_rate: missing,
    }
}

fn categorical(name: &str, cats: &[(&str, f64, f64)], missing: f64) -> SynthFeature {
    SynthFeature {
        name: name.into(),
        marginal: Marginal::Categorical {
            categories: cats.iter().map(|c| c.0.to_string()).collect(),
            probs: cats.iter().map(|c| c.1).collect(),
        },
        risk: cats.iter().map(|c| c.2).collect(),
        missing_rate: missing,
    }
}

/// The default generator: 23 features named after common birth-certificate
/// fields. Birth weight carries the dominant coefficient; `noise_a`,
/// `noise_b` and `noise_flag` carry none and are independent of everything.
pub fn default_config() -> GeneratorConfig {
    let regions = ["northeast", "midwest", "south", "west", "territories"];
    let features = vec![
        normal("birth_weight_g", 3300.0, 600.0, 0.7, -2.4, 0.002),
        normal("apgar_score", 8.5, 1.2, 0.3, -1.0, 0.005),
        normal("gestation_weeks", 39.0, 2.2, 0.7, -0.35, 0.01),
        SynthFeature {
            name: "birth_weight_cat".into(),
            marginal: Marginal::Binned {
                source: "birth_weight_g".into(),
                cuts: vec![1500.0, 2500.0],
                categories: vec!["very_low".into(), "low".into(), "normal".into()],
            },
            risk: vec![0.6, 0.2, 0.0],
            missing_rate: 0.0,
        },
        categorical(
            "state_of_occurrence",
            &[(regions[0], 0.17, -0.8), (regions[1], 0.22, 0.0), (regions[2], 0.37, 0.7), (regions[3], 0.23, -0.5), (regions[4], 0.01, 1.0)],
            0.0,
        ),
        categorical(
            "mother_state_residence",
            &[(regions[0], 0.17, -0.7), (regions[1], 0.22, 0.0), (regions[2], 0.37, 0.6), (regions[3], 0.23, -0.5), (regions[4], 0.01, 0.9)],
            0.0,
        ),
        normal("father_age", 30.5, 6.5, 0.0, -0.4, 0.12),
        categorical(
            "mother_education",
            &[("less_than_high_school", 0.18, 1.0), ("high_school", 0.32, 0.4), ("some_college", 0.25, 0.0), ("college", 0.25, -0.7)],
            0.01,
        ),
        categorical("heart_malformation", &[("no", 0.98, 0.0), ("yes", 0.02, 3.0)], 0.0),
        categorical("assisted_ventilation", &[("no", 0.97, 0.0), ("yes", 0.03, 2.5)], 0.0),
        categorical(
            "live_birth_order",
            &[("1", 0.40, 0.0), ("2", 0.32, -0.3), ("3", 0.16, 0.5), ("4+", 0.12, 1.0)],
            0.005,
        ),
        categorical("other_abnormal_conditions", &[("no", 0.95, 0.0), ("yes", 0.05, 1.5)], 0.0),
        categorical("other_congenital_anomalies", &[("no", 0.98, 0.0), ("yes", 0.02, 2.5)], 0.0),
        categorical("mother_birthplace", &[("us", 0.77, 0.0), ("foreign", 0.23, -1.0)], 0.003),
        SynthFeature {
            name: "cigarettes_per_day".into(),
            marginal: Marginal::Uniform { low: 0.0, high: 20.0 },
            risk: vec![0.08],
            missing_rate: 0.02,
        },
        normal("prenatal_visits", 11.5, 3.5, 0.0, -0.5, 0.02),
        normal("mother_age", 27.0, 6.0, 0.0, -0.35, 0.0),
        categorical(
            "mother_race",
            &[
                ("White", 0.70, 0.0),
                ("Black", 0.17, 0.9),
                ("AmericanIndian", 0.05, 0.8),
                ("Chinese", 0.012, -0.2),
                ("Japanese", 0.004, -0.2),
                ("Hawaiian", 0.002, 0.1),
                ("Filipino", 0.015, 0.0),
                ("AsianKorean", 0.006, -0.2),
                ("Samoan", 0.001, 0.1),
                ("Vietnamese", 0.008, -0.1),
                ("Guamanian", 0.001, 0.1),
                ("Other", 0.031, 0.1),
            ],
            0.0,
        ),
        categorical("mother_marital_status", &[("married", 0.66, 0.0), ("unmarried", 0.34, 0.8)], 0.0),
        categorical("infant_sex", &[("female", 0.49, 0.0), ("male", 0.51, 0.8)], 0.0),
        normal("noise_a", 0.0, 1.0, 0.0, 0.0, 0.0),
        SynthFeature {
            name: "noise_b".into(),
            marginal: Marginal::Uniform { low: 0.0, high: 1.0 },
            risk: vec![0.0],
            missing_rate: 0.0,
        },
        categorical("noise_flag", &[("no", 0.5, 0.0), ("yes", 0.5, 0.0)], 0.0),
    ];
    let w = |pairs: &[(&str, f64)]| pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>();
    let causes = vec![
        CauseRule {
            cause: CauseOfDeath::GestationFetalMalnutrition,
            bias: 0.6,
            weights: w(&[("gestation_weeks", -0.8), ("birth_weight_g", -0.6)]),
        },
        CauseRule {
            cause: CauseOfDeath::SidsNecExternal,
            bias: 0.0,
            weights: w(&[("cigarettes_per_day", 0.4), ("mother_marital_status=unmarried", 0.4)]),
        },
        CauseRule {
            cause: CauseOfDeath::CongenitalChromosomal,
            bias: -0.3,
            weights: w(&[("heart_malformation=yes", 2.5), ("other_congenital_anomalies=yes", 2.5)]),
        },
        CauseRule {
            cause: CauseOfDeath::MaternalFactors,
            bias: -0.2,
            weights: w(&[("mother_age", 0.3), ("apgar_score", -0.3)]),
        },
        CauseRule {
            cause: CauseOfDeath::DiseasesDisorders,
            bias: -0.4,
            weights: w(&[("assisted_ventilation=yes", 1.5)]),
        },
        CauseRule { cause: CauseOfDeath::Other, bias: -0.8, weights: BTreeMap::new() },
    ];
    GeneratorConfig {
        features,
        intercept: None,
        target_rate: 1.0 / 146.0,
        mortality_probs: [0.30, 0.20, 0.25, 0.10, 0.15],
        causes,
        link_rate: 0.95,
        late_noise_rate: 0.0,
        years: vec![
            YearShare { year: 2000, share: 1.0 / 3.0 },
            YearShare { year: 2001, share: 1.0 / 3.0 },
            YearShare { year: 2002, share: 1.0 / 3.0 },
        ],
        race_feature: "mother_race".into(),
        birth_weight_feature: "birth_weight_g".into(),
        apgar_feature: "apgar_score".into(),
        n_probe: 1_000_000,
    }
}

/// A named, versioned benchmark: record count plus generator config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub version: u32,
    pub n: usize,
    pub config: GeneratorConfig,
    pub train_years: Vec<i32>,
    pub test_year: i32,
}

pub const PRESET_NAMES: [&str; 3] = ["tiny", "benchmark-small", "benchmark-large"];

pub fn preset(name: &str) -> Result<Preset> {
    let mut config = default_config();
    let n = match name {
        "tiny" => {
            config.n_probe = 100_000;
            6_000
        }
        "benchmark-small" => 300_000,
        "benchmark-large" => 3_000_000,
        _ => {
            return Err(Error::invalid(format!(
                "unknown preset `{name}` (available: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(Preset { name: name.into(), version: 1, n, config, train_years: vec![2000, 2001], test_year: 2002 })
}

/// Summary written next to generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub preset: Option<String>,
    pub preset_version: Option<u32>,
    pub seed: u64,
    pub n: usize,
    pub deaths: usize,
    pub config_hash: String,
    pub intercept: f64,
    pub bayes_auc: Option<f64>,
    pub train_years: Vec<i32>,
    pub test_year: i32,
    /// The mortality-timing defaults are a placeholder shape.
    pub notes: Vec<String>,
    pub config: GeneratorConfig,
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub data: std::path::PathBuf,
    pub oracle: std::path::PathBuf,
    pub manifest: std::path::PathBuf,
}

/// Writes `<stem>.csv`, `<stem>.oracle.csv` (index, p_star) and
/// `<stem>.manifest.json` into `dir`.
pub fn write_outputs(ds: &SyntheticDataset, manifest: &Manifest, dir: &Path, stem: &str) -> Result<OutputFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = OutputFiles {
        data: dir.join(format!("{stem}.csv")),
        oracle: dir.join(format!("{stem}.oracle.csv")),
        manifest: dir.join(format!("{stem}.manifest.json")),
    };
    let create = |p: &Path| std::fs::File::create(p).map_err(|e| Error::io(p, e)).map(std::io::BufWriter::new);
    write_csv(&ds.dataset, create(&files.data)?)?;
    let mut w = csv::Writer::from_writer(create(&files.oracle)?);
    let to_err = |e: csv::Error| Error::invalid(format!("csv write: {e}"));
    w.write_record(["index", "p_star"]).map_err(to_err)?;
    for (i, p) in ds.p_star.iter().enumerate() {
        w.write_record([i.to_string(), format!("{p}")]).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(&files.oracle, e))?;
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(&files.manifest, json + "\n").map_err(|e| Error::io(&files.manifest, e))?;
    Ok(files)
}

impl Manifest {
    pub fn new(ds: &SyntheticDataset, cfg: &GeneratorConfig, seed: u64, preset: Option<&Preset>) -> Manifest {
        let mut config = cfg.clone();
        config.intercept = Some(ds.intercept);
        Manifest {
            generator: "birthrisk-synth v1".into(),
            preset: preset.map(|p| p.name.clone()),
            preset_version: preset.map(|p| p.version),
            seed,
            n: ds.dataset.len(),
            deaths: ds.deaths(),
            config_hash: ds.config_hash.clone(),
            intercept: ds.intercept,
            bayes_auc: bayes_auc(ds).ok(),
            train_years: preset.map_or_else(|| vec![2000, 2001], |p| p.train_years.clone()),
            test_year: preset.map_or(2002, |p| p.test_year),
            notes: vec!["mortality_probs is a placeholder shape, not measured data".into()],
            config,
        }
    }
}
