//! Append-only response cache keyed by request digest.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendKind, GatewayError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub request_digest: String,
    pub model_id: String,
    pub backend: BackendKind,
    pub text: String,
}

#[derive(Debug)]
pub struct ResponseCache {
    path: PathBuf,
    inner: Mutex<CacheState>,
}

#[derive(Debug)]
struct CacheState {
    entries: HashMap<String, CacheRecord>,
    file: File,
}

impl ResponseCache {
    /// Opens (or creates) a cache file. Lines that fail to parse, such as a
    /// torn final write, are skipped.
    pub fn open(path: impl AsRef<Path>) -> Result<ResponseCache, GatewayError> {
        let path = path.as_ref().to_path_buf();
        let io = |e: std::io::Error| GatewayError::Cache(format!("{}: {e}", path.display()));
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for line in reader.lines() {
                let line = line.map_err(io)?;
                match serde_json::from_str::<CacheRecord>(&line) {
                    Ok(rec) => {
                        entries.insert(rec.request_digest.clone(), rec);
                    }
                    Err(_) if line.trim().is_empty() => {}
                    Err(e) => tracing::warn!(path = %path.display(), "skipping unreadable cache line: {e}"),
                }
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .read(true)
            .open(&path)
            .map_err(io)?;
        // Make sure the next record starts on its own line.
        let len = file.metadata().map_err(io)?.len();
        if len > 0 {
            use std::io::{Read, Seek, SeekFrom};
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1)).map_err(io)?;
            file.read_exact(&mut last).map_err(io)?;
            if last[0] != b'\n' {
                file.write_all(b"\n").map_err(io)?;
            }
        }
        Ok(ResponseCache {
            path,
            inner: Mutex::new(CacheState { entries, file }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, digest: &str) -> Option<CacheRecord> {
        self.inner.lock().expect("cache lock").entries.get(digest).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn put(&self, record: CacheRecord) -> Result<(), GatewayError> {
        let mut state = self.inner.lock().expect("cache lock");
        if state.entries.contains_key(&record.request_digest) {
            return Ok(());
        }
        let mut line = serde_json::to_string(&record).map_err(|e| GatewayError::Cache(e.to_string()))?;
        line.push('\n');
        state
            .file
            .write_all(line.as_bytes())
            .and_then(|_| state.file.flush())
            .map_err(|e| GatewayError::Cache(e.to_string()))?;
        state.entries.insert(record.request_digest.clone(), record);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(d: &str, t: &str) -> CacheRecord {
        CacheRecord {
            request_digest: d.into(),
            model_id: "m".into(),
            backend: BackendKind::Scripted,
            text: t.into(),
        }
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = ResponseCache::open(&path).unwrap();
            cache.put(rec("d1", "A")).unwrap();
            cache.put(rec("d1", "ignored")).unwrap();
            cache.put(rec("d2", "B")).unwrap();
        }
        let cache = ResponseCache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.get("d1").unwrap().text, "A");
    }

    #[test]
    fn torn_tail_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let good = serde_json::to_string(&rec("d1", "A")).unwrap();
        std::fs::write(&path, format!("{good}\n{{\"request_dig")).unwrap();
        let cache = ResponseCache::open(&path).unwrap();
        assert_eq!(cache.len(), 1);
        cache.put(rec("d2", "B")).unwrap();
        drop(cache);
        assert_eq!(ResponseCache::open(&path).unwrap().len(), 2);
    }
}
