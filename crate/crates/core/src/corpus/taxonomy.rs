use std::fmt;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// How a raw label that is not itself a class name is handled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// Merge into an existing class.
    MapTo(String),
    /// Drop the item from the corpus.
    Remove,
}

/// Why [`EmotionTaxonomy::map_label`] refused a raw label.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelRejection {
    #[error("empty label")]
    Empty,
    #[error("label {0:?} is removed under this taxonomy")]
    Removed(String),
    #[error("label {0:?} is not a class of this taxonomy")]
    Unmapped(String),
}

/// Ordered emotion classes with a fallback class and a label mapping table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmotionTaxonomy {
    name: String,
    classes: Vec<String>,
    fallback: String,
    label_map: Vec<(String, LabelRule)>,
}

pub const BIG_FOUR: [&str; 4] = ["angry", "happy", "neutral", "sad"];

pub const EIGHT_CLASS: [&str; 8] = [
    "angry",
    "happy",
    "neutral",
    "sad",
    "disgusted",
    "surprised",
    "fearful",
    "contemptuous",
];

impl EmotionTaxonomy {
    /// Builds a custom taxonomy. Class names must be non-empty lowercase ASCII
    /// words and unique; `fallback` must be one of them.
    pub fn new(
        name: impl Into<String>,
        classes: Vec<String>,
        fallback: impl Into<String>,
        label_map: Vec<(String, LabelRule)>,
    ) -> Result<Self, CorpusError> {
        let fallback = fallback.into();
        let bad = |msg: String| Err(CorpusError::Taxonomy(msg));
        if classes.is_empty() {
            return bad("taxonomy has no classes".into());
        }
        for (i, c) in classes.iter().enumerate() {
            if c.is_empty() || !c.bytes().all(|b| b.is_ascii_lowercase()) {
                return bad(format!("class {c:?} is not a lowercase ASCII word"));
            }
            if classes[..i].contains(c) {
                return bad(format!("duplicate class {c:?}"));
            }
        }
        if !classes.contains(&fallback) {
            return bad(format!("fallback {fallback:?} is not a class"));
        }
        for (raw, rule) in &label_map {
            if raw != &raw.to_lowercase() {
                return bad(format!("mapping key {raw:?} is not lowercase"));
            }
            if let LabelRule::MapTo(target) = rule {
                if !classes.contains(target) {
                    return bad(format!("mapping {raw:?} targets unknown class {target:?}"));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            classes,
            fallback,
            label_map,
        })
    }

    /// Four-class set with `excited` merged into `happy`.
    pub fn big_four() -> Self {
        Self::new(
            "iemocap4",
            BIG_FOUR.iter().map(|s| s.to_string()).collect(),
            "neutral",
            vec![("excited".into(), LabelRule::MapTo("happy".into()))],
        )
        .expect("preset is valid")
    }

    /// Eight-class set with `other` removed.
    pub fn eight_class() -> Self {
        Self::new(
            "msp8",
            EIGHT_CLASS.iter().map(|s| s.to_string()).collect(),
            "neutral",
            vec![("other".into(), LabelRule::Remove)],
        )
        .expect("preset is valid")
    }

    /// Looks up a preset by name (`iemocap4`, `msp8`).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "iemocap4" | "big_four" | "4class" => Some(Self::big_four()),
            "msp8" | "eight_class" | "8class" => Some(Self::eight_class()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn fallback(&self) -> &str {
        &self.fallback
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn contains(&self, class: &str) -> bool {
        self.classes.iter().any(|c| c == class)
    }

    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    /// Normalizes a raw corpus label onto a class name.
    pub fn map_label(&self, raw: &str) -> Result<String, LabelRejection> {
        let lowered = raw.trim().to_lowercase();
        if lowered.is_empty() {
            return Err(LabelRejection::Empty);
        }
        if self.contains(&lowered) {
            return Ok(lowered);
        }
        match self.label_map.iter().find(|(k, _)| *k == lowered) {
            Some((_, LabelRule::MapTo(target))) => Ok(target.clone()),
            Some((_, LabelRule::Remove)) => Err(LabelRejection::Removed(raw.to_string())),
            None => Err(LabelRejection::Unmapped(raw.to_string())),
        }
    }
}

impl fmt::Display for EmotionTaxonomy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]", self.name, self.classes.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_protocol() {
        let four = EmotionTaxonomy::big_four();
        assert_eq!(four.classes(), &BIG_FOUR.map(String::from));
        assert_eq!(four.fallback(), "neutral");
        let eight = EmotionTaxonomy::eight_class();
        assert_eq!(eight.classes(), &EIGHT_CLASS.map(String::from));
        assert_eq!(eight.fallback(), "neutral");
    }

    #[test]
    fn excited_merges_into_happy() {
        let t = EmotionTaxonomy::big_four();
        assert_eq!(t.map_label("Excited").unwrap(), "happy");
        assert_eq!(t.map_label("neutral").unwrap(), "neutral");
        assert_eq!(t.map_label("SAD").unwrap(), "sad");
    }

    #[test]
    fn other_is_removed_in_eight_class() {
        let t = EmotionTaxonomy::eight_class();
        assert_eq!(
            t.map_label("other"),
            Err(LabelRejection::Removed("other".into()))
        );
        // excited is not merged in the 8-class preset
        assert!(matches!(
            t.map_label("excited"),
            Err(LabelRejection::Unmapped(_))
        ));
    }

    #[test]
    fn rejects_unknown_and_empty() {
        let t = EmotionTaxonomy::big_four();
        assert_eq!(t.map_label(""), Err(LabelRejection::Empty));
        assert_eq!(
            t.map_label("frustrated"),
            Err(LabelRejection::Unmapped("frustrated".into()))
        );
    }

    #[test]
    fn invalid_taxonomies() {
        let c = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(EmotionTaxonomy::new("x", c(&["a", "a"]), "a", vec![]).is_err());
        assert!(EmotionTaxonomy::new("x", c(&["a", "b"]), "z", vec![]).is_err());
        assert!(EmotionTaxonomy::new("x", c(&["A"]), "A", vec![]).is_err());
        assert!(EmotionTaxonomy::new("x", vec![], "a", vec![]).is_err());
        assert!(EmotionTaxonomy::new(
            "x",
            c(&["a"]),
            "a",
            vec![("q".into(), LabelRule::MapTo("b".into()))]
        )
        .is_err());
    }
}
