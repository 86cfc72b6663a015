use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatRequest, LlmError};

/// Content hash of everything that influences a completion.
pub fn cache_key(req: &ChatRequest) -> String {
    let mut h = Sha256::new();
    for field in [
        req.system.as_bytes(),
        req.user.as_bytes(),
        req.model.as_bytes(),
    ] {
        h.update((field.len() as u64).to_le_bytes());
        h.update(field);
    }
    h.update(req.temperature.to_bits().to_le_bytes());
    h.update(req.max_tokens.to_le_bytes());
    hex::encode(h.finalize())
}

/// One cached completion, stored as `<key>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub system: String,
    pub user: String,
    pub backend_id: String,
    pub raw_text: String,
}

/// Directory of cached responses. Writes go through one lock and land via
/// rename, so readers never see partial files.
#[derive(Debug)]
pub struct DiskCache {
    dir: PathBuf,
    writer: Mutex<()>,
}

impl DiskCache {
    pub fn open(dir: &Path) -> Result<Self, LlmError> {
        fs::create_dir_all(dir).map_err(|e| LlmError::Cache {
            path: dir.to_path_buf(),
            msg: e.to_string(),
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            writer: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>, LlmError> {
        let path = self.path(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => {
                return Err(LlmError::Cache {
                    path,
                    msg: e.to_string(),
                })
            }
        };
        let entry: CacheEntry = serde_json::from_str(&text).map_err(|e| LlmError::Cache {
            path: path.clone(),
            msg: e.to_string(),
        })?;
        if entry.key != key {
            return Err(LlmError::Cache {
                path,
                msg: format!("entry key {} does not match file name", entry.key),
            });
        }
        Ok(Some(entry))
    }

    pub fn put(&self, entry: &CacheEntry) -> Result<(), LlmError> {
        let path = self.path(&entry.key);
        let err = |e: std::io::Error| LlmError::Cache {
            path: path.clone(),
            msg: e.to_string(),
        };
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let tmp = self.dir.join(format!(".{}.tmp", entry.key));
        let mut f = fs::File::create(&tmp).map_err(err)?;
        let json = serde_json::to_string_pretty(entry).expect("cache entry serializes");
        f.write_all(json.as_bytes()).map_err(err)?;
        f.write_all(b"\n").map_err(err)?;
        f.sync_all().map_err(err)?;
        fs::rename(&tmp, &path).map_err(err)
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|rd| {
                rd.filter_map(Result::ok)
                    .filter(|e| {
                        let name = e.file_name();
                        let name = name.to_string_lossy();
                        name.ends_with(".json") && !name.starts_with('.')
                    })
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
