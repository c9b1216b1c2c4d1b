use std::collections::HashMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::request::{ChatResponse, ModelRole};

/// Content-addressed response store: in memory, or on disk as
/// `<root>/<role>/<hash>.json`. Writes are serialized and atomic.
#[derive(Debug)]
pub enum ResponseCache {
    Memory(Mutex<HashMap<String, ChatResponse>>),
    Disk { root: PathBuf, writer: Mutex<()> },
}

impl ResponseCache {
    pub fn memory() -> Self {
        ResponseCache::Memory(Mutex::new(HashMap::new()))
    }

    pub fn disk(root: impl Into<PathBuf>) -> Self {
        ResponseCache::Disk {
            root: root.into(),
            writer: Mutex::new(()),
        }
    }

    pub fn path_for(root: &Path, role: ModelRole, key: &str) -> PathBuf {
        root.join(role.as_str()).join(format!("{key}.json"))
    }

    pub fn get(&self, role: ModelRole, key: &str) -> Option<ChatResponse> {
        match self {
            ResponseCache::Memory(map) => map.lock().expect("cache lock").get(key).cloned(),
            ResponseCache::Disk { root, .. } => {
                let path = Self::path_for(root, role, key);
                let bytes = std::fs::read(&path).ok()?;
                match serde_json::from_slice(&bytes) {
                    Ok(resp) => Some(resp),
                    Err(e) => {
                        log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                        None
                    }
                }
            }
        }
    }

    pub fn put(&self, role: ModelRole, key: &str, response: &ChatResponse) -> io::Result<()> {
        match self {
            ResponseCache::Memory(map) => {
                map.lock()
                    .expect("cache lock")
                    .insert(key.to_string(), response.clone());
                Ok(())
            }
            ResponseCache::Disk { root, writer } => {
                let _guard = writer.lock().expect("cache lock");
                let mut body = serde_json::to_vec_pretty(response).map_err(io::Error::other)?;
                body.push(b'\n');
                crate::jsonl::write_atomic(&Self::path_for(root, role, key), &body)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_layout_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::disk(dir.path());
        let resp = ChatResponse {
            content: "hello".into(),
            reasoning: None,
            backend_id: "mock".into(),
            cached: false,
            usage: None,
        };
        cache.put(ModelRole::Critic, "abc", &resp).unwrap();
        assert!(dir.path().join("critic/abc.json").is_file());
        assert_eq!(cache.get(ModelRole::Critic, "abc"), Some(resp));
        assert_eq!(cache.get(ModelRole::Analyst, "abc"), None);
    }
}
