//! Shared server state: the data root, cached logs and the session table.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use rebound_core::model::{is_valid_file_stem, new_instance_id};
use rebound_core::session::EditSession;
use rebound_core::store::{self, layout};
use rebound_core::LogBundle;

use crate::error::{ApiError, ApiResult};

/// Idle time after which a session is dropped and its log unlocked.
pub const SESSION_TTL: Duration = Duration::from_secs(30 * 60);

pub struct ApiSession {
    pub id: String,
    pub log_id: String,
    pub root: PathBuf,
    pub session: EditSession,
    pub last_activity: Instant,
}

pub type SessionHandle = Arc<Mutex<ApiSession>>;

#[derive(Default)]
struct Sessions {
    by_id: HashMap<String, SessionHandle>,
    /// log id → session id; at most one session per log.
    locks: HashMap<String, String>,
}

struct Inner {
    data_root: PathBuf,
    ttl: Duration,
    logs: Mutex<HashMap<String, Arc<LogBundle>>>,
    sessions: Mutex<Sessions>,
}

/// Cheap to clone; all clones share one state.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Serves every native log found directly under `data_root`.
    pub fn new(data_root: impl Into<PathBuf>) -> Self {
        Self::with_ttl(data_root, SESSION_TTL)
    }

    pub fn with_ttl(data_root: impl Into<PathBuf>, ttl: Duration) -> Self {
        Self {
            inner: Arc::new(Inner {
                data_root: data_root.into(),
                ttl,
                logs: Mutex::default(),
                sessions: Mutex::default(),
            }),
        }
    }

    pub fn data_root(&self) -> &Path {
        &self.inner.data_root
    }

    /// Ids of the subdirectories that hold a `metadata.json`, sorted.
    pub fn log_ids(&self) -> ApiResult<Vec<String>> {
        let entries = fs::read_dir(self.data_root()).map_err(|e| {
            ApiError::internal(format!("cannot list {}: {e}", self.data_root().display()))
        })?;
        let mut ids: Vec<String> = entries
            .filter_map(Result::ok)
            .filter(|e| e.path().join(layout::METADATA).is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|name| is_valid_file_stem(name))
            .collect();
        ids.sort();
        Ok(ids)
    }

    fn log_root(&self, log_id: &str) -> ApiResult<PathBuf> {
        let root = self.data_root().join(log_id);
        if is_valid_file_stem(log_id) && root.join(layout::METADATA).is_file() {
            Ok(root)
        } else {
            Err(ApiError::not_found(format!("unknown log '{log_id}'")))
        }
    }

    /// The on-disk log, loaded once and cached.
    pub fn stored_log(&self, log_id: &str) -> ApiResult<Arc<LogBundle>> {
        let root = self.log_root(log_id)?;
        if let Some(bundle) = self.inner.logs.lock().get(log_id) {
            return Ok(bundle.clone());
        }
        let bundle = Arc::new(store::load_log(&root)?);
        self.inner
            .logs
            .lock()
            .insert(log_id.to_string(), bundle.clone());
        Ok(bundle)
    }

    pub fn invalidate(&self, log_id: &str) {
        self.inner.logs.lock().remove(log_id);
    }

    /// Runs `f` on the session's working copy when the log has an open
    /// session, else on the stored log.
    pub fn with_log<T>(
        &self,
        log_id: &str,
        f: impl FnOnce(&LogBundle) -> ApiResult<T>,
    ) -> ApiResult<T> {
        self.log_root(log_id)?;
        if let Some(handle) = self.session_for_log(log_id) {
            let guard = handle.lock();
            return f(guard.session.bundle());
        }
        f(self.stored_log(log_id)?.as_ref())
    }

    fn sweep(&self, sessions: &mut Sessions) {
        let ttl = self.inner.ttl;
        let expired: Vec<(String, String)> = sessions
            .by_id
            .iter()
            .filter_map(|(id, handle)| {
                // A session busy in another request is active by definition.
                let s = handle.try_lock()?;
                (s.last_activity.elapsed() >= ttl).then(|| (id.clone(), s.log_id.clone()))
            })
            .collect();
        for (id, log_id) in expired {
            sessions.by_id.remove(&id);
            sessions.locks.remove(&log_id);
            log::info!("session {id} on log {log_id} expired");
        }
    }

    fn session_for_log(&self, log_id: &str) -> Option<SessionHandle> {
        let mut sessions = self.inner.sessions.lock();
        self.sweep(&mut sessions);
        let id = sessions.locks.get(log_id)?;
        sessions.by_id.get(id).cloned()
    }

    /// Opens a session on `log_id`, failing with 409 if one is open.
    pub fn open_session(&self, log_id: &str) -> ApiResult<SessionHandle> {
        let root = self.log_root(log_id)?;
        let locked = |log_id: &str| {
            ApiError::conflict(format!("log '{log_id}' already has an open session"))
        };
        {
            let mut sessions = self.inner.sessions.lock();
            self.sweep(&mut sessions);
            if sessions.locks.contains_key(log_id) {
                return Err(locked(log_id));
            }
        }
        let bundle = store::load_log(&root)?;
        let mut sessions = self.inner.sessions.lock();
        // Another request may have won the race while the log was loading.
        if sessions.locks.contains_key(log_id) {
            return Err(locked(log_id));
        }
        let id = new_instance_id();
        let handle = Arc::new(Mutex::new(ApiSession {
            id: id.clone(),
            log_id: log_id.to_string(),
            root,
            session: EditSession::new(bundle),
            last_activity: Instant::now(),
        }));
        sessions.locks.insert(log_id.to_string(), id.clone());
        sessions.by_id.insert(id, handle.clone());
        Ok(handle)
    }

    /// The live session `id`, with its activity clock reset.
    pub fn session(&self, id: &str) -> ApiResult<SessionHandle> {
        let mut sessions = self.inner.sessions.lock();
        self.sweep(&mut sessions);
        let handle = sessions
            .by_id
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session '{id}'")))?;
        drop(sessions);
        handle.lock().last_activity = Instant::now();
        Ok(handle)
    }

    pub fn close_session(&self, id: &str) -> ApiResult<()> {
        let mut sessions = self.inner.sessions.lock();
        self.sweep(&mut sessions);
        let handle = sessions
            .by_id
            .remove(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown session '{id}'")))?;
        let log_id = handle.lock().log_id.clone();
        sessions.locks.remove(&log_id);
        Ok(())
    }
}
