use std::fs::OpenOptions;
use std::path::Path;

use super::Result;

pub const CSV_HEADER: [&str; 6] = ["scenario", "metric", "K_shared", "eta", "run", "value"];

/// One line of the score table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub scenario: String,
    pub metric: String,
    pub k_shared: Option<usize>,
    pub eta: Option<f64>,
    pub run: usize,
    pub value: f64,
}

/// Appends `rows`, writing the header first when the file is new or empty.
pub fn append_scores(path: impl AsRef<Path>, rows: &[ScoreRow]) -> Result<()> {
    let path = path.as_ref();
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(CSV_HEADER)?;
    }
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.metric.clone(),
            r.k_shared.map(|k| k.to_string()).unwrap_or_default(),
            r.eta.map(|e| e.to_string()).unwrap_or_default(),
            r.run.to_string(),
            r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<ScoreRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let invalid = |what: &str, v: &str| super::EvalError::Invalid(format!("bad {what} {v:?} in score table"));
    let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        rows.push(ScoreRow {
            scenario: field(0).to_string(),
            metric: field(1).to_string(),
            k_shared: opt(field(2)).map(|s| s.parse().map_err(|_| invalid("K_shared", &s))).transpose()?,
            eta: opt(field(3)).map(|s| s.parse().map_err(|_| invalid("eta", &s))).transpose()?,
            run: field(4).parse().map_err(|_| invalid("run", field(4)))?,
            value: field(5).parse().map_err(|_| invalid("value", field(5)))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_is_schema_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let a = ScoreRow {
            scenario: "federated".into(),
            metric: "tss".into(),
            k_shared: Some(3),
            eta: Some(0.01),
            run: 0,
            value: 7.25,
        };
        let b = ScoreRow {
            scenario: "node0".into(),
            metric: "amwmd".into(),
            k_shared: None,
            eta: None,
            run: 1,
            value: 0.0,
        };
        append_scores(&path, &[a.clone()]).unwrap();
        append_scores(&path, &[b.clone()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "scenario,metric,K_shared,eta,run,value");
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_scores(&path).unwrap(), [a, b]);
    }
}
