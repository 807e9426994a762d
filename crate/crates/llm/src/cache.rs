use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::prompt::Role;

/// One LLM interaction as stored in the cache and in replay fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub role: Role,
    pub model_name: String,
    pub temperature: f64,
    pub run_index: u32,
    pub rendered_prompt: String,
    pub response_raw: String,
    pub response_clean: String,
    pub cache_key: String,
}

/// Hex SHA-256 over role, prompt, model, temperature and run index.
pub fn cache_key(role: Role, rendered_prompt: &str, model_name: &str, temperature: f64, run_index: u32) -> String {
    let canonical = serde_json::json!([role, rendered_prompt, model_name, temperature.to_bits(), run_index]);
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

/// Directory of `<cache_key>.json` files, each holding one `PromptRecord`.
#[derive(Debug, Clone)]
pub struct PromptCache {
    dir: PathBuf,
}

impl PromptCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        PromptCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> io::Result<Option<PromptRecord>> {
        match fs::read_to_string(self.path(key)) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Writes to a temporary file in the cache directory, then renames it
    /// into place, so readers never see a partial record.
    pub fn put(&self, record: &PromptRecord) -> io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        let text = serde_json::to_string_pretty(record).map_err(io::Error::other)?;
        tmp.write_all(text.as_bytes())?;
        tmp.write_all(b"\n")?;
        tmp.persist(self.path(&record.cache_key)).map_err(|e| e.error)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(key: &str) -> PromptRecord {
        PromptRecord {
            role: Role::Generator,
            model_name: "m".into(),
            temperature: 0.7,
            run_index: 1,
            rendered_prompt: "p".into(),
            response_raw: "```\na.\n```".into(),
            response_clean: "a.\n".into(),
            cache_key: key.into(),
        }
    }

    #[test]
    fn key_depends_on_every_component() {
        let base = cache_key(Role::Generator, "p", "m", 0.7, 1);
        assert_eq!(base.len(), 64);
        assert_eq!(base, cache_key(Role::Generator, "p", "m", 0.7, 1));
        for other in [
            cache_key(Role::Matcher, "p", "m", 0.7, 1),
            cache_key(Role::Generator, "q", "m", 0.7, 1),
            cache_key(Role::Generator, "p", "n", 0.7, 1),
            cache_key(Role::Generator, "p", "m", 0.2, 1),
            cache_key(Role::Generator, "p", "m", 0.7, 2),
        ] {
            assert_ne!(base, other);
        }
    }

    #[test]
    fn put_then_get_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PromptCache::new(dir.path().join("nested"));
        assert_eq!(cache.get("k").unwrap(), None);
        cache.put(&record("k")).unwrap();
        assert_eq!(cache.get("k").unwrap(), Some(record("k")));
        let names: Vec<_> = fs::read_dir(cache.dir())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names, ["k.json"]);
    }
}
