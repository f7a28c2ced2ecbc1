use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use screenwise_core::policy::Session;

pub const DEFAULT_TTL: Duration = Duration::from_secs(24 * 60 * 60);

struct Entry {
    created: Instant,
    session: Arc<Mutex<Session>>,
}

/// In-memory sessions keyed by id. Each session has its own lock so updates
/// to one session serialize while distinct sessions proceed independently.
pub struct SessionStore {
    ttl: Duration,
    entries: Mutex<HashMap<String, Entry>>,
}

impl Default for SessionStore {
    fn default() -> Self {
        Self::new(DEFAULT_TTL)
    }
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    /// Stores a session under its id. Returns false if the id is taken.
    pub fn insert(&self, session: Session) -> bool {
        self.insert_at(session, Instant::now())
    }

    fn insert_at(&self, session: Session, created: Instant) -> bool {
        let mut map = self.entries.lock();
        if map.contains_key(&session.id) {
            return false;
        }
        map.insert(
            session.id.clone(),
            Entry {
                created,
                session: Arc::new(Mutex::new(session)),
            },
        );
        true
    }

    pub fn get(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.get_at(id, Instant::now())
    }

    fn get_at(&self, id: &str, now: Instant) -> Option<Arc<Mutex<Session>>> {
        let mut map = self.entries.lock();
        let expired = map.get(id).map(|e| now.duration_since(e.created) >= self.ttl)?;
        if expired {
            map.remove(id);
            return None;
        }
        map.get(id).map(|e| Arc::clone(&e.session))
    }

    /// Drops expired sessions and returns how many were removed.
    pub fn purge(&self) -> usize {
        self.purge_at(Instant::now())
    }

    fn purge_at(&self, now: Instant) -> usize {
        let mut map = self.entries.lock();
        let before = map.len();
        map.retain(|_, e| now.duration_since(e.created) < self.ttl);
        before - map.len()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use screenwise_core::model::{FeatureVector, Label};
    use screenwise_core::policy::{Diagnosis, SessionStatus};

    fn session(id: &str) -> Session {
        Session {
            id: id.into(),
            features: FeatureVector(vec![0.5]),
            partition: 0,
            history: vec![],
            status: SessionStatus::Final { label: Label::Negative },
            diagnosis: Diagnosis {
                label: Label::Negative,
                error: 0.0,
                lower: 0.0,
                upper: 1.0,
                samples: 0,
            },
            cost: 0.0,
        }
    }

    #[test]
    fn ids_are_unique() {
        let store = SessionStore::default();
        assert!(store.insert(session("a")));
        assert!(!store.insert(session("a")));
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn expired_sessions_are_gone() {
        let store = SessionStore::new(Duration::from_secs(10));
        let t0 = Instant::now();
        store.insert_at(session("a"), t0);
        store.insert_at(session("b"), t0 + Duration::from_secs(5));
        assert!(store.get_at("a", t0 + Duration::from_secs(9)).is_some());
        assert!(store.get_at("a", t0 + Duration::from_secs(10)).is_none());
        assert_eq!(store.len(), 1);
        assert_eq!(store.purge_at(t0 + Duration::from_secs(15)), 1);
        assert!(store.is_empty());
    }
}
