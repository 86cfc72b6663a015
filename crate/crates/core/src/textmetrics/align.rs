//! Word-level Levenshtein alignment.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    Match { word: String },
    Substitute { reference: String, hypothesis: String },
    Insert { hypothesis: String },
    Delete { reference: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub matches: usize,
    pub reference_len: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

impl std::ops::Add for EditCounts {
    type Output = EditCounts;
    fn add(self, o: EditCounts) -> EditCounts {
        EditCounts {
            substitutions: self.substitutions + o.substitutions,
            deletions: self.deletions + o.deletions,
            insertions: self.insertions + o.insertions,
            matches: self.matches + o.matches,
            reference_len: self.reference_len + o.reference_len,
        }
    }
}

/// Word error rate outcome; undefined for an empty reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wer {
    Rate(f64),
    EmptyReference,
}

impl Wer {
    pub fn rate(self) -> Option<f64> {
        match self {
            Wer::Rate(r) => Some(r),
            Wer::EmptyReference => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub ops: Vec<EditOp>,
    pub counts: EditCounts,
}

impl Alignment {
    pub fn distance(&self) -> usize {
        self.counts.errors()
    }

    pub fn wer(&self) -> Wer {
        if self.counts.reference_len == 0 {
            Wer::EmptyReference
        } else {
            Wer::Rate(self.counts.errors() as f64 / self.counts.reference_len as f64)
        }
    }

    /// Hypothesis tokens recovered by replaying the ops.
    pub fn hypothesis(&self) -> Vec<&str> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                EditOp::Match { word } => Some(word.as_str()),
                EditOp::Substitute { hypothesis, .. } | EditOp::Insert { hypothesis } => {
                    Some(hypothesis.as_str())
                }
                EditOp::Delete { .. } => None,
            })
            .collect()
    }

    /// Reference tokens recovered from the ops.
    pub fn reference(&self) -> Vec<&str> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                EditOp::Match { word } => Some(word.as_str()),
                EditOp::Substitute { reference, .. } | EditOp::Delete { reference } => {
                    Some(reference.as_str())
                }
                EditOp::Insert { .. } => None,
            })
            .collect()
    }
}

/// Three-row REF/HYP/OPS dump with columns padded to equal width.
impl fmt::Display for Alignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols: Vec<(&str, &str, &str)> = self
            .ops
            .iter()
            .map(|op| match op {
                EditOp::Match { word } => (word.as_str(), word.as_str(), "="),
                EditOp::Substitute {
                    reference,
                    hypothesis,
                } => (reference.as_str(), hypothesis.as_str(), "S"),
                EditOp::Insert { hypothesis } => ("***", hypothesis.as_str(), "I"),
                EditOp::Delete { reference } => (reference.as_str(), "***", "D"),
            })
            .collect();
        let widths: Vec<usize> = cols
            .iter()
            .map(|(r, h, _)| r.chars().count().max(h.chars().count()))
            .collect();
        let row = |pick: fn(&(&str, &str, &str)) -> String| -> String {
            cols.iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{:<w$}", pick(c)))
                .collect::<Vec<_>>()
                .join(" ")
                .trim_end()
                .to_string()
        };
        writeln!(f, "REF: {}", row(|c| c.0.to_string()))?;
        writeln!(f, "HYP: {}", row(|c| c.1.to_string()))?;
        write!(f, "OPS: {}", row(|c| c.2.to_string()))
    }
}

/// Minimal-edit alignment. Among optimal paths, backtracking prefers
/// match, then substitution, then deletion, then insertion.
pub fn align<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Alignment {
    let (n, m) = (reference.len(), hypothesis.len());
    let r = |i: usize| reference[i].as_ref();
    let h = |j: usize| hypothesis[j].as_ref();

    let width = m + 1;
    let mut cost = vec![0usize; (n + 1) * width];
    for i in 0..=n {
        cost[i * width] = i;
    }
    for j in 0..=m {
        cost[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = cost[(i - 1) * width + j - 1] + usize::from(r(i - 1) != h(j - 1));
            let del = cost[(i - 1) * width + j] + 1;
            let ins = cost[i * width + j - 1] + 1;
            cost[i * width + j] = diag.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let mut counts = EditCounts {
        reference_len: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * width + j];
        if i > 0 && j > 0 && r(i - 1) == h(j - 1) && cost[(i - 1) * width + j - 1] == here {
            ops.push(EditOp::Match {
                word: r(i - 1).to_string(),
            });
            counts.matches += 1;
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && cost[(i - 1) * width + j - 1] + 1 == here {
            ops.push(EditOp::Substitute {
                reference: r(i - 1).to_string(),
                hypothesis: h(j - 1).to_string(),
            });
            counts.substitutions += 1;
            i -= 1;
            j -= 1;
        } else if i > 0 && cost[(i - 1) * width + j] + 1 == here {
            ops.push(EditOp::Delete {
                reference: r(i - 1).to_string(),
            });
            counts.deletions += 1;
            i -= 1;
        } else {
            ops.push(EditOp::Insert {
                hypothesis: h(j - 1).to_string(),
            });
            counts.insertions += 1;
            j -= 1;
        }
    }
    ops.reverse();
    Alignment { ops, counts }
}
