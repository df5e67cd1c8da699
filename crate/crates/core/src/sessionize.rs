//! User identification and timeout-based session segmentation.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use chrono::{DateTime, FixedOffset, TimeDelta};
use indexmap::IndexMap;

use crate::logparse::LogEntry;

/// A user is a (client host, user agent) pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UserId {
    pub client_host: String,
    pub user_agent: Option<String>,
}

impl UserId {
    pub fn of(entry: &LogEntry) -> Self {
        UserId { client_host: entry.client_host.clone(), user_agent: entry.user_agent.clone() }
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.client_host, self.user_agent.as_deref().unwrap_or("-"))
    }
}

/// Ordered URL vocabulary; indices are assigned in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    urls: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_urls<I, S>(urls: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self::new();
        for u in urls {
            v.intern(u.as_ref());
        }
        v
    }

    pub fn intern(&mut self, url: &str) -> usize {
        if let Some(&i) = self.index.get(url) {
            return i;
        }
        let i = self.urls.len();
        self.urls.push(url.to_string());
        self.index.insert(url.to_string(), i);
        i
    }

    pub fn get(&self, url: &str) -> Option<usize> {
        self.index.get(url).copied()
    }

    pub fn url(&self, index: usize) -> Option<&str> {
        self.urls.get(index).map(String::as_str)
    }

    pub fn urls(&self) -> &[String] {
        &self.urls
    }

    pub fn len(&self) -> usize {
        self.urls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.urls.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSession {
    /// Dense, 0-based, ordered by session start.
    pub session_id: usize,
    pub user: UserId,
    /// Vocabulary indices in request order, repeats preserved.
    pub url_indices: Vec<usize>,
    pub start: DateTime<FixedOffset>,
    pub end: DateTime<FixedOffset>,
}

impl UserSession {
    pub fn distinct_urls(&self) -> BTreeSet<usize> {
        self.url_indices.iter().copied().collect()
    }
}

/// Groups entries by user, keeping users in first-seen order and each user's
/// entries in their original order.
pub fn identify_users(entries: &[LogEntry]) -> IndexMap<UserId, Vec<LogEntry>> {
    let mut users: IndexMap<UserId, Vec<LogEntry>> = IndexMap::new();
    for e in entries {
        users.entry(UserId::of(e)).or_default().push(e.clone());
    }
    users
}

/// Splits each user's activity wherever consecutive requests are more than
/// `timeout` apart.
///
/// URLs not yet in `vocab` are added in global log order (by line number), so
/// the resulting indices do not depend on how entries were grouped.
pub fn identify_sessions(
    users: &IndexMap<UserId, Vec<LogEntry>>,
    timeout: TimeDelta,
    vocab: &mut Vocabulary,
) -> Vec<UserSession> {
    let mut in_log_order: Vec<&LogEntry> = users.values().flatten().collect();
    in_log_order.sort_by_key(|e| e.line_no);
    for e in in_log_order {
        vocab.intern(&e.path);
    }

    // (start, line_no of first hit) orders sessions globally.
    let mut sessions: Vec<(usize, UserSession)> = Vec::new();
    for (user, entries) in users {
        let mut ordered: Vec<&LogEntry> = entries.iter().collect();
        ordered.sort_by_key(|e| (e.timestamp, e.line_no));

        let mut current: Option<(usize, UserSession)> = None;
        for e in ordered {
            let idx = vocab.intern(&e.path);
            match current.as_mut() {
                Some((_, s)) if e.timestamp - s.end <= timeout => {
                    s.url_indices.push(idx);
                    s.end = e.timestamp;
                }
                _ => {
                    sessions.extend(current.take());
                    current = Some((
                        e.line_no,
                        UserSession {
                            session_id: 0,
                            user: user.clone(),
                            url_indices: vec![idx],
                            start: e.timestamp,
                            end: e.timestamp,
                        },
                    ));
                }
            }
        }
        sessions.extend(current);
    }

    sessions.sort_by_key(|(first_line, s)| (s.start, *first_line));
    sessions
        .into_iter()
        .enumerate()
        .map(|(id, (_, mut s))| {
            s.session_id = id;
            s
        })
        .collect()
}

/// Users, vocabulary and sessions in one pass over cleaned entries.
pub fn sessionize(entries: &[LogEntry], timeout: TimeDelta) -> (Vocabulary, Vec<UserSession>) {
    let users = identify_users(entries);
    let mut vocab = Vocabulary::new();
    let sessions = identify_sessions(&users, timeout, &mut vocab);
    (vocab, sessions)
}
