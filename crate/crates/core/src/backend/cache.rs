use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{cache_key, BackendError, ChatBackend, ChatRequest, ChatResponse};

/// One recorded exchange, stored at `<dir>/<key[..2]>/<key>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
    pub recorded_at: String,
}

/// Content-addressed directory of recorded responses.
#[derive(Debug)]
pub struct CacheStore {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl CacheStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or(key);
        self.dir.join(shard).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>, BackendError> {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(BackendError::Storage(format!("{}: {e}", path.display()))),
        };
        serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| BackendError::Storage(format!("{}: {e}", path.display())))
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|p| p.into_inner());
        locks.entry(key.to_owned()).or_default().clone()
    }

    /// Writes `entry` atomically (temp file, then rename). Writes to the
    /// same key are serialized; the last writer wins.
    pub fn put(&self, entry: &CacheEntry) -> Result<(), BackendError> {
        let lock = self.key_lock(&entry.key);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        let path = self.path_for(&entry.key);
        let parent = path.parent().expect("cache path has a shard directory");
        let storage = |e: std::io::Error| BackendError::Storage(format!("{}: {e}", path.display()));
        fs::create_dir_all(parent).map_err(storage)?;
        let tmp = parent.join(format!(
            ".{}.{}.{}.tmp",
            entry.key,
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let mut json = serde_json::to_vec_pretty(entry).map_err(|e| BackendError::Storage(e.to_string()))?;
        json.push(b'\n');
        let mut f = fs::File::create(&tmp).map_err(storage)?;
        f.write_all(&json).map_err(storage)?;
        f.sync_all().map_err(storage)?;
        drop(f);
        fs::rename(&tmp, &path).map_err(storage)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Serve only from disk; a miss is an error.
    Replay,
    /// Serve from disk; on a miss call the live backend and record.
    ReplayOrRecord,
    /// Always call the live backend and record the result.
    Record,
}

/// Record/replay layer in front of an optional live backend.
pub struct CachedBackend {
    store: CacheStore,
    mode: CacheMode,
    live: Option<Box<dyn ChatBackend>>,
}

impl CachedBackend {
    pub fn replay(dir: impl Into<PathBuf>) -> Self {
        Self {
            store: CacheStore::new(dir),
            mode: CacheMode::Replay,
            live: None,
        }
    }

    pub fn new(dir: impl Into<PathBuf>, mode: CacheMode, live: Option<Box<dyn ChatBackend>>) -> Self {
        Self {
            store: CacheStore::new(dir),
            mode,
            live,
        }
    }

    pub fn store(&self) -> &CacheStore {
        &self.store
    }

    fn call_live(&self, key: &str, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let Some(live) = &self.live else {
            return Err(BackendError::CacheMiss { key: key.to_owned() });
        };
        let response = live.complete(request)?;
        self.store.put(&CacheEntry {
            key: key.to_owned(),
            request: request.clone(),
            response: response.clone(),
            recorded_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        })?;
        Ok(response)
    }
}

impl ChatBackend for CachedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        request.validate()?;
        let key = cache_key(request);
        if self.mode != CacheMode::Record {
            if let Some(entry) = self.store.get(&key)? {
                return Ok(entry.response);
            }
            if self.mode == CacheMode::Replay {
                return Err(BackendError::CacheMiss { key });
            }
        }
        self.call_live(&key, request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{CountingBackend, FnBackend, Message};

    fn echo() -> Box<dyn ChatBackend> {
        Box::new(FnBackend(|r: &ChatRequest| {
            Ok(ChatResponse {
                content: format!("echo: {}", r.messages[0].content),
                model_id: r.model.clone(),
                prompt_tokens: 1,
                completion_tokens: 1,
                latency_ms: 0,
            })
        }))
    }

    fn req(text: &str) -> ChatRequest {
        ChatRequest::new("m", vec![Message::user(text)])
    }

    fn count_files(dir: &Path) -> usize {
        fs::read_dir(dir)
            .unwrap()
            .flat_map(|d| fs::read_dir(d.unwrap().path()).unwrap())
            .filter(|f| f.as_ref().unwrap().path().extension().is_some_and(|e| e == "json"))
            .count()
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let rec = CachedBackend::new(dir.path(), CacheMode::Record, Some(echo()));
        let a = rec.complete(&req("hello")).unwrap();
        let key = cache_key(&req("hello"));
        assert!(dir.path().join(&key[..2]).join(format!("{key}.json")).exists());
        let replay = CachedBackend::replay(dir.path());
        assert_eq!(replay.complete(&req("hello")).unwrap(), a);
    }

    #[test]
    fn strict_replay_miss() {
        let dir = tempfile::tempdir().unwrap();
        let replay = CachedBackend::replay(dir.path());
        assert!(matches!(replay.complete(&req("x")), Err(BackendError::CacheMiss { .. })));
    }

    #[test]
    fn hit_makes_no_live_call() {
        let dir = tempfile::tempdir().unwrap();
        CachedBackend::new(dir.path(), CacheMode::Record, Some(echo()))
            .complete(&req("a"))
            .unwrap();
        let counter = std::sync::Arc::new(CountingBackend::new(echo()));
        let b = CachedBackend::new(dir.path(), CacheMode::ReplayOrRecord, Some(Box::new(counter.clone())));
        b.complete(&req("a")).unwrap();
        assert_eq!(counter.calls(), 0);
        // permissive miss falls through to live and records
        assert_eq!(b.complete(&req("b")).unwrap().content, "echo: b");
        assert_eq!(counter.calls(), 1);
        assert_eq!(count_files(dir.path()), 2);
    }

    #[test]
    fn concurrent_identical_requests_store_one_file() {
        let dir = tempfile::tempdir().unwrap();
        let b = CachedBackend::new(dir.path(), CacheMode::Record, Some(echo()));
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| b.complete(&req("same")).unwrap());
            }
        });
        assert_eq!(count_files(dir.path()), 1);
        let leftovers = fs::read_dir(dir.path().join(&cache_key(&req("same"))[..2]))
            .unwrap()
            .count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn corrupt_entry_is_storage_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::new(dir.path());
        let key = cache_key(&req("x"));
        let path = store.path_for(&key);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, "not json").unwrap();
        let replay = CachedBackend::replay(dir.path());
        assert!(matches!(replay.complete(&req("x")), Err(BackendError::Storage(_))));
    }
}
