//! Minimal `{placeholder}` templates.
//!
//! `{name}` is substituted from a variable map; `{{` and `}}` are literal
//! braces. Substituted values are never re-scanned, so transcripts containing
//! braces are safe. A placeholder without a value is a hard error.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template:?}: unresolved placeholder {{{name}}}")]
    Unresolved { template: String, name: String },
    #[error("template {template:?}: syntax error at byte {offset}: {msg}")]
    Syntax {
        template: String,
        offset: usize,
        msg: String,
    },
    #[error("unknown template {0:?}")]
    Missing(String),
    #[error("cannot read templates from {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    name: String,
    source: String,
    segments: Vec<Segment>,
}

impl Template {
    pub fn parse(name: &str, source: &str) -> Result<Self, TemplateError> {
        let err = |offset: usize, msg: &str| TemplateError::Syntax {
            template: name.to_string(),
            offset,
            msg: msg.to_string(),
        };
        let mut segments = Vec::new();
        let mut text = String::new();
        let bytes = source.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'{' if bytes.get(i + 1) == Some(&b'{') => {
                    text.push('{');
                    i += 2;
                }
                b'}' if bytes.get(i + 1) == Some(&b'}') => {
                    text.push('}');
                    i += 2;
                }
                b'{' => {
                    let close = source[i + 1..]
                        .find('}')
                        .ok_or_else(|| err(i, "unclosed '{'"))?;
                    let slot = &source[i + 1..i + 1 + close];
                    if slot.is_empty()
                        || !slot
                            .bytes()
                            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
                    {
                        return Err(err(i, "placeholder names are [a-z0-9_]+"));
                    }
                    if !text.is_empty() {
                        segments.push(Segment::Text(std::mem::take(&mut text)));
                    }
                    segments.push(Segment::Slot(slot.to_string()));
                    i += close + 2;
                }
                b'}' => return Err(err(i, "stray '}'")),
                _ => {
                    let ch = source[i..].chars().next().expect("char boundary");
                    text.push(ch);
                    i += ch.len_utf8();
                }
            }
        }
        if !text.is_empty() {
            segments.push(Segment::Text(text));
        }
        Ok(Self {
            name: name.to_string(),
            source: source.to_string(),
            segments,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn placeholders(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Slot(n) => Some(n.as_str()),
            Segment::Text(_) => None,
        })
    }

    pub fn render(&self, vars: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(name) => {
                    let v = vars.get(name).ok_or_else(|| TemplateError::Unresolved {
                        template: self.name.clone(),
                        name: name.clone(),
                    })?;
                    out.push_str(v);
                }
            }
        }
        Ok(out)
    }
}

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../templates/", $name, ".txt")))),*]
    };
}

/// Shipped default wording. Every file under `templates/` is one entry.
pub const BUILTIN: &[(&str, &str)] = builtin![
    "system",
    "system_aec",
    "task",
    "task_reasoning",
    "task_aec",
    "task_aec_no_reasoning",
    "no_explanation",
    "input_transcript",
    "input_nbest",
    "nbest_item",
    "context",
    "context_item",
    "shots",
    "shot_item",
    "block_gender",
    "block_paralinguistic",
    "block_trigger",
    "block_asr_relation",
    "asr_relations",
    "block_pos_stimuli",
    "block_neg_stimuli",
    "block_cpt_stimuli",
];

/// Named template collection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<String, Template>,
}

fn strip_final_newline(s: &str) -> &str {
    s.strip_suffix('\n')
        .map(|s| s.strip_suffix('\r').unwrap_or(s))
        .unwrap_or(s)
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(name, src)| {
                let t = Template::parse(name, strip_final_newline(src))
                    .expect("built-in templates parse");
                (name.to_string(), t)
            })
            .collect();
        Self { templates }
    }

    /// Built-in set with every `<name>.txt` in `dir` overriding its default.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let io = |e: std::io::Error| TemplateError::Io {
            path: dir.display().to_string(),
            msg: e.to_string(),
        };
        let mut set = Self::builtin();
        let mut entries: Vec<_> = fs::read_dir(dir)
            .map_err(io)?
            .collect::<Result<Vec<_>, _>>()
            .map_err(io)?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(name) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            if !set.templates.contains_key(name) {
                log::warn!("ignoring unknown template file {}", path.display());
                continue;
            }
            let src = fs::read_to_string(&path).map_err(io)?;
            let t = Template::parse(name, strip_final_newline(&src))?;
            set.templates.insert(name.to_string(), t);
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Result<&Template, TemplateError> {
        self.templates
            .get(name)
            .ok_or_else(|| TemplateError::Missing(name.to_string()))
    }

    pub fn render(
        &self,
        name: &str,
        vars: &BTreeMap<String, String>,
    ) -> Result<String, TemplateError> {
        self.get(name)?.render(vars)
    }

    /// Per-template SHA-256 of the source text.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.templates
            .iter()
            .map(|(k, t)| (k.clone(), hex::encode(Sha256::digest(t.source.as_bytes()))))
            .collect()
    }

    /// Digest of the whole set.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in &self.templates {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            h.update((t.source.len() as u64).to_le_bytes());
            h.update(t.source.as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Writes every template to `dir`, one file each.
    pub fn export(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, t) in &self.templates {
            fs::write(dir.join(format!("{name}.txt")), format!("{}\n", t.source))?;
        }
        Ok(())
    }
}

/// Builds a variable map from `(name, value)` pairs.
pub fn vars<I, K, V>(pairs: I) -> BTreeMap<String, String>
where
    I: IntoIterator<Item = (K, V)>,
    K: Into<String>,
    V: Into<String>,
{
    pairs
        .into_iter()
        .map(|(k, v)| (k.into(), v.into()))
        .collect()
}
