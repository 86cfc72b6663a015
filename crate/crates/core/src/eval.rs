//! Scoring, voting and report tables.
//!
//! UA is the unweighted mean of per-class recalls over the classes that
//! occur in the gold labels. Classes with no gold items are left out of the
//! mean and listed in [`EvalReport::missing_classes`].

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::EmotionTaxonomy;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("nothing to score")]
    Empty,
    #[error("label {0:?} is not in the taxonomy")]
    UnknownLabel(String),
    #[error("baseline {0:?} not among the reports")]
    MissingBaseline(String),
}

/// Headline metric used in tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Mean of per-class recalls.
    #[default]
    Ua,
    /// Plain accuracy over all items.
    Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    /// Recall of every class present in the gold labels, in `[0, 1]`.
    pub per_class_recall: BTreeMap<String, f64>,
    pub missing_classes: Vec<String>,
    pub ua_pct: f64,
    pub accuracy_pct: f64,
    /// `confusion[gold][predicted]`, indexed by `classes`.
    pub confusion: Vec<Vec<u64>>,
    pub n: u64,
    pub fallback_count: u64,
}

impl EvalReport {
    pub fn metric(&self, m: Metric) -> f64 {
        match m {
            Metric::Ua => self.ua_pct,
            Metric::Accuracy => self.accuracy_pct,
        }
    }

    /// Confusion matrix as an aligned text table.
    pub fn render_confusion(&self) -> String {
        let mut headers = vec!["gold \\ pred".to_string()];
        headers.extend(self.classes.iter().cloned());
        let rows = self
            .classes
            .iter()
            .zip(&self.confusion)
            .map(|(c, row)| {
                std::iter::once(c.clone())
                    .chain(row.iter().map(|n| n.to_string()))
                    .collect()
            })
            .collect();
        TextTable { headers, rows }.render()
    }
}

/// Scores `(gold, predicted)` pairs.
pub fn score<S: AsRef<str>>(
    pairs: &[(S, S)],
    taxonomy: &EmotionTaxonomy,
) -> Result<EvalReport, EvalError> {
    score_with_fallbacks(pairs.iter().map(|(g, p)| (g.as_ref(), p.as_ref(), false)), taxonomy)
}

/// Like [`score`], also counting predictions that came from the fallback.
pub fn score_with_fallbacks<'a, I>(items: I, taxonomy: &EmotionTaxonomy) -> Result<EvalReport, EvalError>
where
    I: IntoIterator<Item = (&'a str, &'a str, bool)>,
{
    let k = taxonomy.len();
    let mut confusion = vec![vec![0u64; k]; k];
    let mut n = 0u64;
    let mut fallback_count = 0u64;
    let idx = |l: &str| {
        taxonomy
            .index_of(l)
            .ok_or_else(|| EvalError::UnknownLabel(l.to_string()))
    };
    for (gold, pred, fallback) in items {
        confusion[idx(gold)?][idx(pred)?] += 1;
        n += 1;
        fallback_count += u64::from(fallback);
    }
    if n == 0 {
        return Err(EvalError::Empty);
    }
    let mut per_class_recall = BTreeMap::new();
    let mut missing_classes = Vec::new();
    let mut correct = 0u64;
    for (i, class) in taxonomy.classes().iter().enumerate() {
        let total: u64 = confusion[i].iter().sum();
        correct += confusion[i][i];
        if total == 0 {
            missing_classes.push(class.clone());
        } else {
            per_class_recall.insert(class.clone(), confusion[i][i] as f64 / total as f64);
        }
    }
    if !missing_classes.is_empty() {
        log::warn!(
            "classes without gold items excluded from UA: {}",
            missing_classes.join(", ")
        );
    }
    let ua_pct = 100.0 * per_class_recall.values().sum::<f64>() / per_class_recall.len() as f64;
    Ok(EvalReport {
        classes: taxonomy.classes().to_vec(),
        per_class_recall,
        missing_classes,
        ua_pct,
        accuracy_pct: 100.0 * correct as f64 / n as f64,
        confusion,
        n,
        fallback_count,
    })
}

/// Modal label among `votes`; ties and empty input resolve to the
/// taxonomy fallback. Votes outside the taxonomy are ignored.
pub fn majority_vote<'a, I>(votes: I, taxonomy: &EmotionTaxonomy) -> String
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts = vec![0usize; taxonomy.len()];
    for v in votes {
        if let Some(i) = taxonomy.index_of(v) {
            counts[i] += 1;
        }
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    let winners: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] == best).collect();
    if best == 0 || winners.len() > 1 {
        taxonomy.fallback().to_string()
    } else {
        taxonomy.classes()[winners[0]].clone()
    }
}

/// Value in hundredths after rounding to two decimals.
fn hundredths(pct: f64) -> i64 {
    (pct * 100.0).round() as i64
}

/// Signed two-decimal difference of two percentages, each rounded to two
/// decimals first so the delta agrees with the printed values.
pub fn format_delta(value_pct: f64, baseline_pct: f64) -> String {
    let d = hundredths(value_pct) - hundredths(baseline_pct);
    let sign = if d < 0 { '-' } else { '+' };
    format!("{sign}{}.{:02}", d.abs() / 100, d.abs() % 100)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub id: String,
    pub label: String,
    pub value_pct: f64,
    /// Absent on the baseline row.
    pub delta: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub title: String,
    pub metric: Metric,
    pub baseline: String,
    pub rows: Vec<DeltaRow>,
}

/// Rows in the given order; every non-baseline row carries its delta.
pub fn delta_table(
    title: &str,
    rows: &[(String, String, &EvalReport)],
    baseline_id: &str,
    metric: Metric,
) -> Result<DeltaTable, EvalError> {
    let base = rows
        .iter()
        .find(|(id, _, _)| id == baseline_id)
        .ok_or_else(|| EvalError::MissingBaseline(baseline_id.to_string()))?
        .2
        .metric(metric);
    Ok(DeltaTable {
        title: title.to_string(),
        metric,
        baseline: baseline_id.to_string(),
        rows: rows
            .iter()
            .map(|(id, label, r)| {
                let v = r.metric(metric);
                DeltaRow {
                    id: id.clone(),
                    label: label.clone(),
                    value_pct: v,
                    delta: (id != baseline_id).then(|| format_delta(v, base)),
                }
            })
            .collect(),
    })
}

fn metric_header(m: Metric) -> &'static str {
    match m {
        Metric::Ua => "UA (%)",
        Metric::Accuracy => "Acc (%)",
    }
}

impl DeltaTable {
    pub fn render(&self) -> String {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let value = match &r.delta {
                    Some(d) => format!("{:.2} ({d})", r.value_pct),
                    None => format!("{:.2}", r.value_pct),
                };
                vec![r.id.clone(), r.label.clone(), value]
            })
            .collect();
        let table = TextTable {
            headers: vec!["id".into(), "prompt".into(), metric_header(self.metric).into()],
            rows,
        };
        format!("{}\n{}", self.title, table.render())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub tag: String,
    pub value_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub title: String,
    pub metric: Metric,
    /// Sorted by value descending, ties by tag.
    pub rows: Vec<SensitivityRow>,
    /// Max minus min of the two-decimal values.
    pub spread_pct: f64,
}

pub fn sensitivity_report(
    title: &str,
    runs: &BTreeMap<String, EvalReport>,
    metric: Metric,
) -> SensitivityReport {
    let mut rows: Vec<SensitivityRow> = runs
        .iter()
        .map(|(tag, r)| SensitivityRow {
            tag: tag.clone(),
            value_pct: r.metric(metric),
        })
        .collect();
    rows.sort_by(|a, b| {
        hundredths(b.value_pct)
            .cmp(&hundredths(a.value_pct))
            .then_with(|| a.tag.cmp(&b.tag))
    });
    let spread = match (rows.first(), rows.last()) {
        (Some(hi), Some(lo)) => hundredths(hi.value_pct) - hundredths(lo.value_pct),
        _ => 0,
    };
    SensitivityReport {
        title: title.to_string(),
        metric,
        rows,
        spread_pct: spread as f64 / 100.0,
    }
}

impl SensitivityReport {
    pub fn render(&self) -> String {
        let rows = self
            .rows
            .iter()
            .map(|r| vec![r.tag.clone(), format!("{:.2}", r.value_pct)])
            .collect();
        let table = TextTable {
            headers: vec!["variation".into(), metric_header(self.metric).into()],
            rows,
        };
        format!(
            "{}\n{}spread (max - min): {:.2}\n",
            self.title,
            table.render(),
            self.spread_pct
        )
    }
}

/// Left-aligned plain-text table.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TextTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TextTable {
    pub fn render(&self) -> String {
        let cols = self
            .rows
            .iter()
            .map(Vec::len)
            .chain([self.headers.len()])
            .max()
            .unwrap_or(0);
        let mut widths = vec![0; cols];
        for row in std::iter::once(&self.headers).chain(&self.rows) {
            for (i, cell) in row.iter().enumerate() {
                widths[i] = widths[i].max(cell.chars().count());
            }
        }
        let line = |row: &[String]| {
            let mut s = String::new();
            for (i, cell) in row.iter().enumerate() {
                if i + 1 == row.len() {
                    s.push_str(cell);
                } else {
                    let _ = write!(s, "{cell:<w$}  ", w = widths[i]);
                }
            }
            s.trim_end().to_string()
        };
        let mut out = line(&self.headers);
        out.push('\n');
        let rule: usize = widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}
