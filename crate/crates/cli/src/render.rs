//! Plain-text views of report files.

use birthrisk::experiments::{CellOutcome, ImportanceReport, RaceOutcome};
use birthrisk::metrics::{CauseTable, StratumRow};
use birthrisk::sampling::GridResult;

/// Left-aligns the first column and right-aligns the rest.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(j, c)| if j == 0 { format!("{c:<w$}", w = widths[j]) } else { format!("{c:>w$}", w = widths[j]) })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(headers.to_vec());
    out += &line(widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

fn num(x: f64) -> String {
    format!("{x:.3}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), num)
}

pub fn strata(rows: &[StratumRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.stratum.clone(), r.deaths.to_string(), r.predicted_deaths.to_string(), opt(r.recall)])
        .collect();
    table(&["class", "deaths", "predicted", "recall"], &body)
}

pub fn cause(t: &CauseTable) -> String {
    strata(&t.rows).replacen("class", "cause", 1) + &format!("unlinked deaths excluded: {}\n", t.unlinked_excluded)
}

pub fn race(groups: &[RaceOutcome]) -> String {
    let body: Vec<Vec<String>> = groups
        .iter()
        .map(|g| {
            let (auc, recall, precision) = match &g.result {
                Some(r) => (num(r.report.auc), num(r.report.recall), num(r.report.precision)),
                None => ("-".into(), "-".into(), "-".into()),
            };
            let note = g.skipped.clone().unwrap_or_default();
            vec![g.race.to_string(), g.train_minority.to_string(), g.test_rows.to_string(), auc, recall, precision, note]
        })
        .collect();
    table(&["race", "train deaths", "test rows", "auc", "recall", "precision", "note"], &body)
}

pub fn importance(imp: &ImportanceReport, top: usize) -> String {
    let body: Vec<Vec<String>> = imp
        .top(top)
        .iter()
        .enumerate()
        .map(|(k, (f, g))| vec![(k + 1).to_string(), f.clone(), format!("{g:.4}")])
        .collect();
    table(&["rank", "feature", "gain"], &body)
}

pub fn grid(cells: &[CellOutcome]) -> String {
    let body: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            let s = &c.spec;
            let mut row = vec![s.hash(), s.model.family().into(), s.subset.to_string(), s.ratio.to_string(), s.seed.to_string()];
            match (&c.result, &c.failure) {
                (Some(r), _) => {
                    row.extend([num(r.report.auc), num(r.report.recall), num(r.report.precision), "ok".into()])
                }
                (None, f) => row.extend(["-".into(), "-".into(), "-".into(), f.clone().unwrap_or_default()]),
            }
            row
        })
        .collect();
    table(&["cell", "model", "subset", "ratio", "seed", "auc", "recall", "precision", "status"], &body)
}

pub fn cv(search: &GridResult) -> String {
    let body: Vec<Vec<String>> = search
        .rows
        .iter()
        .enumerate()
        .map(|(g, r)| {
            let spec = serde_json::to_string(&r.spec).expect("spec serializes");
            let best = if g == search.best { "*" } else { "" };
            vec![g.to_string(), opt(r.mean_recall), best.into(), r.failure.clone().unwrap_or(spec)]
        })
        .collect();
    table(&["point", "mean recall", "best", "spec"], &body)
}
