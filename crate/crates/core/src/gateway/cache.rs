//! Content-addressed record of uploaded media, persisted as `media_cache.json`.
//!
//! Entries are keyed by provider name and SHA-256 of the file content. Lookups
//! and uploads happen under one lock, so concurrent requests for the same
//! content upload it once. The index is rewritten atomically after every
//! successful upload; a failed upload leaves both memory and disk untouched.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::provider::{Provider, ProviderError};
use crate::model::{to_canonical_json, write_atomic, Digest};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaHandle {
    pub content_digest: Digest,
    pub provider_ref: String,
    pub uploaded_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheEntry {
    provider_ref: String,
    uploaded_at: DateTime<Utc>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheIndex {
    /// provider name → digest hex → entry
    providers: BTreeMap<String, BTreeMap<String, CacheEntry>>,
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot persist media cache {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("upload of {path} failed: {source}")]
    Upload {
        path: PathBuf,
        source: ProviderError,
    },
}

#[derive(Debug)]
pub struct MediaCache {
    path: PathBuf,
    index: Mutex<CacheIndex>,
    uploads: AtomicU64,
    hits: AtomicU64,
}

impl MediaCache {
    /// Open the index at `path`. A missing file starts empty; an unreadable
    /// one is logged and replaced on the next upload.
    pub fn open(path: &Path) -> Self {
        let index = match fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_else(|e| {
                log::warn!("ignoring unreadable media cache {}: {e}", path.display());
                CacheIndex::default()
            }),
            Err(_) => CacheIndex::default(),
        };
        MediaCache {
            path: path.to_path_buf(),
            index: Mutex::new(index),
            uploads: AtomicU64::new(0),
            hits: AtomicU64::new(0),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Uploads performed through this cache instance.
    pub fn uploads(&self) -> u64 {
        self.uploads.load(Ordering::SeqCst)
    }

    /// Lookups answered without an upload.
    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn lookup(&self, provider: &str, digest: &Digest) -> Option<MediaHandle> {
        let index = self.index.lock().expect("media cache lock");
        index
            .providers
            .get(provider)
            .and_then(|m| m.get(&digest.to_hex()))
            .map(|e| MediaHandle {
                content_digest: *digest,
                provider_ref: e.provider_ref.clone(),
                uploaded_at: e.uploaded_at,
            })
    }

    /// Return the handle for `path`'s content, uploading it first if this
    /// provider has not seen that content.
    pub fn cache_media(
        &self,
        provider: &dyn Provider,
        path: &Path,
    ) -> Result<MediaHandle, CacheError> {
        let digest = Digest::of_file(path).map_err(|source| CacheError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut index = self.index.lock().expect("media cache lock");
        let key = digest.to_hex();
        if let Some(e) = index
            .providers
            .get(provider.name())
            .and_then(|m| m.get(&key))
        {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(MediaHandle {
                content_digest: digest,
                provider_ref: e.provider_ref.clone(),
                uploaded_at: e.uploaded_at,
            });
        }
        let provider_ref = provider
            .upload(path, &digest)
            .map_err(|source| CacheError::Upload {
                path: path.to_path_buf(),
                source,
            })?;
        self.uploads.fetch_add(1, Ordering::SeqCst);
        let entry = CacheEntry {
            provider_ref,
            uploaded_at: Utc::now(),
        };
        index
            .providers
            .entry(provider.name().to_string())
            .or_default()
            .insert(key.clone(), entry.clone());
        let persisted = to_canonical_json(&*index)
            .map_err(std::io::Error::other)
            .and_then(|bytes| write_atomic(&self.path, &bytes));
        if let Err(source) = persisted {
            if let Some(m) = index.providers.get_mut(provider.name()) {
                m.remove(&key);
            }
            return Err(CacheError::Write {
                path: self.path.clone(),
                source,
            });
        }
        Ok(MediaHandle {
            content_digest: digest,
            provider_ref: entry.provider_ref,
            uploaded_at: entry.uploaded_at,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::MockProvider;
    use std::sync::Arc;

    #[test]
    fn second_lookup_does_not_upload() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("a.bin");
        fs::write(&file, b"slide bytes").unwrap();
        let mock = MockProvider::new();
        let cache = MediaCache::open(&dir.path().join("media_cache.json"));
        let first = cache.cache_media(&mock, &file).unwrap();
        let second = cache.cache_media(&mock, &file).unwrap();
        assert_eq!(first, second);
        assert_eq!(mock.upload_count(), 1);
        assert_eq!((cache.uploads(), cache.hits()), (1, 1));
    }

    #[test]
    fn identical_content_shares_a_handle_and_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.bin"), dir.path().join("sub_b.bin"));
        fs::write(&a, b"same").unwrap();
        fs::write(&b, b"same").unwrap();
        let mock = MockProvider::new();
        let index = dir.path().join("media_cache.json");
        let ha = MediaCache::open(&index).cache_media(&mock, &a).unwrap();
        let hb = MediaCache::open(&index).cache_media(&mock, &b).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(mock.upload_count(), 1);
    }

    #[test]
    fn failed_upload_leaves_index_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("a.bin");
        fs::write(&file, b"x").unwrap();
        let index = dir.path().join("media_cache.json");
        let mock = MockProvider::new();
        mock.fail_next_uploads(1);
        let cache = MediaCache::open(&index);
        assert!(matches!(
            cache.cache_media(&mock, &file),
            Err(CacheError::Upload { .. })
        ));
        assert!(!index.exists());
        assert!(cache.lookup(mock.name(), &Digest::of_bytes(b"x")).is_none());
        cache.cache_media(&mock, &file).unwrap();
        assert!(index.exists());
    }

    #[test]
    fn concurrent_requests_upload_each_digest_once() {
        let dir = tempfile::tempdir().unwrap();
        let files: Vec<PathBuf> = (0..12)
            .map(|i| {
                let p = dir.path().join(format!("{i}.bin"));
                fs::write(&p, format!("content {}", i % 4)).unwrap();
                p
            })
            .collect();
        let mock = Arc::new(MockProvider::new());
        let cache = Arc::new(MediaCache::open(&dir.path().join("media_cache.json")));
        std::thread::scope(|s| {
            for f in &files {
                let (mock, cache) = (mock.clone(), cache.clone());
                s.spawn(move || cache.cache_media(&*mock, f).unwrap());
            }
        });
        assert_eq!(mock.upload_count(), 4);
    }
}
