//! Synthetic access logs with planted navigation profiles.
//!
//! Each profile owns a disjoint set of pages; a session draws several of its
//! profile's pages. The log also carries the noise a real log has: embedded
//! objects, failed and non-GET requests, a crawler, a host that fetches
//! `/robots.txt`, single-page visits and pages that only one session sees.

use chrono::{DateTime, FixedOffset, TimeDelta};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::logparse::TIMESTAMP_FORMAT;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    pub seed: u64,
    pub profiles: usize,
    pub sessions_per_profile: usize,
    pub pages_per_profile: usize,
    /// Distinct profile pages per planted session (inclusive range).
    pub min_pages: usize,
    pub max_pages: usize,
    /// Extra one-page sessions on profile pages.
    pub single_page_sessions: usize,
    /// Probability that a planted session also visits a page no other session visits.
    pub rare_page_rate: f64,
    /// Emit embedded objects, errors, POSTs and robot traffic.
    pub noise: bool,
    /// Days covered by the log, starting 2011-02-01.
    pub days: i64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            seed: 2011,
            profiles: 2,
            sessions_per_profile: 30,
            pages_per_profile: 12,
            min_pages: 8,
            max_pages: 12,
            single_page_sessions: 6,
            rare_page_rate: 0.3,
            noise: true,
            days: 8,
        }
    }
}

/// Ground truth for one generated session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedSession {
    pub client_host: String,
    pub user_agent: String,
    pub start: DateTime<FixedOffset>,
    /// `None` for single-page noise sessions.
    pub profile: Option<usize>,
    /// Number of page views (entries surviving cleaning).
    pub page_views: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub log: String,
    pub sessions: Vec<PlantedSession>,
}

impl Fixture {
    /// `client_host,user_agent,start,profile,page_views`
    pub fn truth_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["client_host", "user_agent", "start", "profile", "page_views"]).expect("in-memory");
        for s in &self.sessions {
            w.write_record([
                s.client_host.clone(),
                s.user_agent.clone(),
                s.start.to_rfc3339(),
                s.profile.map(|p| p.to_string()).unwrap_or_else(|| "-".into()),
                s.page_views.to_string(),
            ])
            .expect("in-memory");
        }
        w.into_inner().expect("in-memory")
    }
}

const AGENTS: [&str; 4] = [
    "Mozilla/5.0 (Windows NT 6.1) Firefox/3.6",
    "Mozilla/5.0 (X11; Linux x86_64) Chrome/9.0",
    "Opera/9.80 (Windows NT 5.1) Presto/2.7",
    "Mozilla/4.0 (compatible; MSIE 8.0; Windows NT 6.1)",
];

const SECTIONS: [&str; 6] = ["dept/cs", "dept/ec", "admissions", "library", "placement", "research"];

struct Line {
    at: DateTime<FixedOffset>,
    seq: usize,
    text: String,
}

fn line(host: &str, at: DateTime<FixedOffset>, method: &str, path: &str, status: u16, agent: &str) -> String {
    format!(
        "{host} - - [{}] \"{method} {path} HTTP/1.1\" {status} {} \"-\" \"{agent}\"",
        at.format(TIMESTAMP_FORMAT),
        200 + path.len() * 37,
    )
}

/// Generates a combined-format log; the same config always yields the same bytes.
pub fn generate(cfg: &FixtureConfig) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let origin = DateTime::parse_from_rfc3339("2011-02-01T00:00:00+05:30").expect("valid origin");
    let pages: Vec<Vec<String>> = (0..cfg.profiles)
        .map(|p| {
            let section = SECTIONS[p % SECTIONS.len()];
            let suffix = if p < SECTIONS.len() { String::new() } else { format!("{}", p / SECTIONS.len()) };
            (0..cfg.pages_per_profile).map(|i| format!("/{section}{suffix}/page{i}.html")).collect()
        })
        .collect();

    // planted sessions first, then single-page noise, in shuffled time slots
    let mut kinds: Vec<Option<usize>> = (0..cfg.profiles)
        .flat_map(|p| std::iter::repeat_n(Some(p), cfg.sessions_per_profile))
        .chain(std::iter::repeat_n(None, cfg.single_page_sessions))
        .collect();
    kinds.shuffle(&mut rng);

    let slot = TimeDelta::minutes(cfg.days * 24 * 60 / (kinds.len().max(1) as i64 + 2));
    let users = (kinds.len() / 2).max(1);
    let mut lines: Vec<Line> = Vec::new();
    let push = |lines: &mut Vec<Line>, at, text| {
        let seq = lines.len();
        lines.push(Line { at, seq, text });
    };
    let mut planted = Vec::new();
    let mut rare = 0usize;

    for (s, kind) in kinds.iter().enumerate() {
        // two sessions per user, in different slots
        let user = s % users;
        let host = format!("10.{}.{}.{}", 1 + user / 250, user % 250, 10 + user % 7);
        let agent = AGENTS[user % AGENTS.len()];
        let jitter = TimeDelta::minutes(rng.random_range(0..slot.num_minutes().max(2) / 2));
        let mut at = origin + slot * (s as i32 + 1) + jitter;
        let start = at;

        let mut visit: Vec<String> = match kind {
            Some(p) => {
                let n = rng.random_range(cfg.min_pages..=cfg.max_pages).min(cfg.pages_per_profile);
                pages[*p].choose_multiple(&mut rng, n).cloned().collect()
            }
            None => vec![pages[rng.random_range(0..cfg.profiles)].choose(&mut rng).expect("pages").clone()],
        };
        if kind.is_some() && rng.random_bool(cfg.rare_page_rate) {
            visit.insert(rng.random_range(1..=visit.len()), format!("/news/item{rare}.html"));
            rare += 1;
        }
        if kind.is_some() && visit.len() > 2 && rng.random_bool(0.2) {
            // revisit the landing page
            let first = visit[0].clone();
            visit.push(first);
        }

        for (i, path) in visit.iter().enumerate() {
            if i > 0 {
                at += TimeDelta::seconds(rng.random_range(30..=600));
            }
            push(&mut lines, at, line(&host, at, "GET", path, 200, agent));
            if cfg.noise {
                push(&mut lines, at, line(&host, at, "GET", "/images/logo.gif", 200, agent));
                if rng.random_bool(0.5) {
                    push(&mut lines, at, line(&host, at, "GET", "/css/site.css", 304, agent));
                }
                if rng.random_bool(0.1) {
                    push(&mut lines, at, line(&host, at, "GET", "/favicon.ico", 404, agent));
                }
                if rng.random_bool(0.05) {
                    push(&mut lines, at, line(&host, at, "POST", "/search.php", 200, agent));
                }
            }
        }
        planted.push(PlantedSession {
            client_host: host,
            user_agent: agent.to_string(),
            start,
            profile: *kind,
            page_views: visit.len(),
        });
    }

    if cfg.noise {
        let crawler = "Mozilla/5.0 (compatible; Googlebot/2.1; +http://www.google.com/bot.html)";
        let mut at = origin + TimeDelta::hours(3);
        for path in pages.iter().flatten().step_by(2) {
            push(&mut lines, at, line("66.249.71.2", at, "GET", path, 200, crawler));
            at += TimeDelta::seconds(20);
        }
        let spider = "Wget/1.12 (linux-gnu)";
        let at = origin + TimeDelta::hours(30);
        push(&mut lines, at, line("72.14.199.5", at, "GET", "/robots.txt", 200, spider));
        for (i, path) in pages.iter().flatten().take(4).enumerate() {
            let t = at + TimeDelta::seconds(5 * (i as i64 + 1));
            push(&mut lines, t, line("72.14.199.5", t, "GET", path, 200, spider));
        }
        let t = origin + TimeDelta::hours(50);
        push(&mut lines, t, "GET /index.html HTTP/1.1 garbled".to_string());
    }

    lines.sort_by_key(|l| (l.at, l.seq));
    let mut log = String::new();
    for l in lines {
        log.push_str(&l.text);
        log.push('\n');
    }
    planted.sort_by_key(|p| p.start);
    Fixture { log, sessions: planted }
}
