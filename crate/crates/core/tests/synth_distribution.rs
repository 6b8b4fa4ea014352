mod common;

use birthrisk::domain::Value;
use birthrisk::synth::{default_config, generate, GeneratorConfig, SyntheticDataset};
use common::marginal_p_values;

const ALPHA: f64 = 0.001;

fn sample(n: usize, seed: u64) -> (GeneratorConfig, SyntheticDataset) {
    let cfg = GeneratorConfig { n_probe: 200_000, ..default_config() };
    let ds = generate(n, &cfg, seed).unwrap();
    (cfg, ds)
}

#[test]
fn marginals_match_configuration() {
    let (cfg, ds) = sample(100_000, 31);
    for (name, p) in marginal_p_values(&cfg, &ds) {
        assert!(p > ALPHA, "{name}: p = {p}");
    }
}

#[test]
fn missing_rates_match_configuration() {
    let (cfg, ds) = sample(100_000, 32);
    let n = ds.dataset.len() as f64;
    for (j, f) in cfg.features.iter().enumerate() {
        let missing = ds.dataset.records().iter().filter(|r| r.values[j].is_missing()).count() as f64;
        let sd = (f.missing_rate * (1.0 - f.missing_rate) * n).sqrt();
        assert!((missing - f.missing_rate * n).abs() <= 4.0 * sd.max(1.0), "{}: {missing} missing", f.name);
    }
}

#[test]
fn death_rates_track_true_risk_by_decile() {
    let (_, ds) = sample(100_000, 33);
    let labels = ds.dataset.labels();
    let mut order: Vec<usize> = (0..ds.p_star.len()).collect();
    order.sort_by(|&a, &b| ds.p_star[a].total_cmp(&ds.p_star[b]));
    for (d, chunk) in order.chunks(order.len().div_ceil(10)).enumerate() {
        let g = chunk.len() as f64;
        let expected: f64 = chunk.iter().map(|&i| ds.p_star[i]).sum();
        let var: f64 = chunk.iter().map(|&i| ds.p_star[i] * (1.0 - ds.p_star[i])).sum();
        let observed = chunk.iter().filter(|&&i| labels.as_slice()[i] == 1).count() as f64;
        assert!(
            (observed - expected).abs() <= 4.0 * var.sqrt().max(1.0),
            "decile {d}: {observed} deaths, {expected:.1} expected over {g} rows"
        );
    }
}

#[test]
fn true_risk_ignores_missingness() {
    // risk rebuilt from the configuration: coefficient times raw value for
    // continuous features, the category offset otherwise
    let (cfg, ds) = sample(20_000, 34);
    let mut complete = 0;
    for (r, &p) in ds.dataset.records().iter().zip(&ds.p_star) {
        if r.values.iter().any(Value::is_missing) {
            continue;
        }
        complete += 1;
        let linear: f64 = cfg
            .features
            .iter()
            .zip(&r.values)
            .map(|(f, v)| match *v {
                Value::Number(x) => f.risk[0] * x,
                Value::Category(k) => f.risk[k],
                Value::Missing => unreachable!(),
            })
            .sum();
        let expected = 1.0 / (1.0 + (-(linear + ds.intercept)).exp());
        assert!((p - expected).abs() <= 1e-12 * expected.max(1e-300) + 1e-15, "{p} vs {expected}");
    }
    assert!(complete > 10_000);
}
