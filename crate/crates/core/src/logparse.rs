//! Access-log ingestion: Common/Combined Log Format parsing and the cleaning
//! pass that removes embedded objects, failed requests and robot traffic.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, Read};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, FixedOffset};
use flate2::read::MultiGzDecoder;
use serde::Serialize;
use thiserror::Error;

/// `dd/Mon/yyyy:HH:mm:ss ±zzzz`
pub const TIMESTAMP_FORMAT: &str = "%d/%b/%Y:%H:%M:%S %z";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    Common,
    Combined,
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dialect::Common => f.write_str("common"),
            Dialect::Combined => f.write_str("combined"),
        }
    }
}

impl FromStr for Dialect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "common" | "clf" => Ok(Dialect::Common),
            "combined" => Ok(Dialect::Combined),
            other => Err(format!("unknown log dialect `{other}`")),
        }
    }
}

/// One parsed access-log record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub client_host: String,
    pub ident: Option<String>,
    pub authuser: Option<String>,
    pub timestamp: DateTime<FixedOffset>,
    pub method: String,
    /// Request path with the query string removed and trailing slashes
    /// stripped (except for the root).
    pub path: String,
    pub query: Option<String>,
    pub protocol: String,
    pub status: u16,
    pub bytes: Option<u64>,
    pub referrer: Option<String>,
    pub user_agent: Option<String>,
    /// 1-based line number in the source file.
    pub line_no: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line_no}: {reason}")]
pub struct ParseError {
    pub line_no: usize,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("no line from line {line_no} on matches the common or the combined log format")]
    UnknownDialect { line_no: usize },
}

struct Cursor<'a> {
    rest: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(line: &'a str) -> Self {
        Cursor { rest: line }
    }

    fn skip_spaces(&mut self) {
        self.rest = self.rest.trim_start_matches([' ', '\t']);
    }

    fn is_empty(&self) -> bool {
        self.rest.trim().is_empty()
    }

    fn word(&mut self, what: &str) -> Result<&'a str, String> {
        self.skip_spaces();
        let end = self.rest.find([' ', '\t']).unwrap_or(self.rest.len());
        if end == 0 {
            return Err(format!("missing {what}"));
        }
        let (w, rest) = self.rest.split_at(end);
        self.rest = rest;
        Ok(w)
    }

    fn bracketed(&mut self, what: &str) -> Result<&'a str, String> {
        self.skip_spaces();
        let body = self
            .rest
            .strip_prefix('[')
            .ok_or_else(|| format!("expected `[` before {what}"))?;
        let end = body.find(']').ok_or_else(|| format!("unterminated {what}"))?;
        self.rest = &body[end + 1..];
        Ok(&body[..end])
    }

    /// Reads a double-quoted field, undoing `\"` and `\\` escapes.
    fn quoted(&mut self, what: &str) -> Result<String, String> {
        self.skip_spaces();
        let body = self
            .rest
            .strip_prefix('"')
            .ok_or_else(|| format!("expected quoted {what}"))?;
        let mut out = String::new();
        let mut chars = body.char_indices();
        while let Some((i, ch)) = chars.next() {
            match ch {
                '\\' => match chars.next() {
                    Some((_, esc)) => {
                        if esc != '"' && esc != '\\' {
                            out.push('\\');
                        }
                        out.push(esc);
                    }
                    None => break,
                },
                '"' => {
                    self.rest = &body[i + 1..];
                    return Ok(out);
                }
                c => out.push(c),
            }
        }
        Err(format!("unterminated quoted {what}"))
    }
}

fn dash_is_none(s: &str) -> Option<String> {
    if s == "-" {
        None
    } else {
        Some(s.to_string())
    }
}

fn is_token(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b"!#$%&'*+-.^_`|~".contains(&b))
}

/// Splits a request target into canonical path and optional query string.
fn split_target(target: &str) -> Result<(String, Option<String>), String> {
    let mut target = target;
    for scheme in ["http://", "https://"] {
        if let Some(rest) = target.strip_prefix(scheme) {
            target = rest.find('/').map_or("/", |i| &rest[i..]);
        }
    }
    if !target.starts_with('/') {
        return Err(format!("request path `{target}` does not start with `/`"));
    }
    let (path, query) = match target.split_once('?') {
        Some((p, q)) => (p, Some(q.to_string())),
        None => (target, None),
    };
    let trimmed = path.trim_end_matches('/');
    let path = if trimmed.is_empty() { "/" } else { trimmed };
    Ok((path.to_string(), query))
}

/// Parses one physical log line in the given dialect.
///
/// Percent-encoding is left untouched; paths compare as logged.
pub fn parse_line(line: &str, line_no: usize, dialect: Dialect) -> Result<LogEntry, ParseError> {
    parse_fields(line, dialect).map_err(|reason| ParseError { line_no, reason }).map(|mut e| {
        e.line_no = line_no;
        e
    })
}

fn parse_fields(line: &str, dialect: Dialect) -> Result<LogEntry, String> {
    let mut cur = Cursor::new(line.trim_end_matches(['\r', '\n']));
    let client_host = cur.word("client host")?.to_string();
    let ident = dash_is_none(cur.word("ident")?);
    let authuser = dash_is_none(cur.word("authuser")?);
    let raw_ts = cur.bracketed("timestamp")?;
    let timestamp = DateTime::parse_from_str(raw_ts, TIMESTAMP_FORMAT)
        .map_err(|e| format!("bad timestamp `{raw_ts}`: {e}"))?;

    let request = cur.quoted("request line")?;
    let parts: Vec<&str> = request.split_whitespace().collect();
    let [method, target, protocol] = parts[..] else {
        return Err(format!("request line `{request}` is not `METHOD target PROTOCOL`"));
    };
    if !is_token(method) {
        return Err(format!("bad method `{method}`"));
    }
    let (path, query) = split_target(target)?;

    let raw_status = cur.word("status")?;
    let status: u16 = raw_status
        .parse()
        .ok()
        .filter(|s| (100..=599).contains(s))
        .ok_or_else(|| format!("bad status `{raw_status}`"))?;
    let raw_bytes = cur.word("byte count")?;
    let bytes = if raw_bytes == "-" {
        None
    } else {
        Some(raw_bytes.parse::<u64>().map_err(|_| format!("bad byte count `{raw_bytes}`"))?)
    };

    let (referrer, user_agent) = match dialect {
        Dialect::Common => {
            if !cur.is_empty() {
                return Err("trailing content after common-format record".to_string());
            }
            (None, None)
        }
        // Trailing fields after the user agent (forwarded-for, timings) are tolerated.
        Dialect::Combined => {
            let referrer = cur.quoted("referrer")?;
            let agent = cur.quoted("user agent")?;
            (dash_is_none(&referrer), dash_is_none(&agent))
        }
    };

    Ok(LogEntry {
        client_host,
        ident,
        authuser,
        timestamp,
        method: method.to_string(),
        path,
        query,
        protocol: protocol.to_string(),
        status,
        bytes,
        referrer,
        user_agent,
        line_no: 0,
    })
}

fn escape_quoted(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Serializes an entry back into a log line of the given dialect.
pub fn format_line(entry: &LogEntry, dialect: Dialect) -> String {
    let opt = |v: &Option<String>| v.clone().unwrap_or_else(|| "-".to_string());
    let target = match &entry.query {
        Some(q) => format!("{}?{}", entry.path, q),
        None => entry.path.clone(),
    };
    let mut line = format!(
        "{} {} {} [{}] \"{} {} {}\" {} {}",
        entry.client_host,
        opt(&entry.ident),
        opt(&entry.authuser),
        entry.timestamp.format(TIMESTAMP_FORMAT),
        entry.method,
        escape_quoted(&target),
        entry.protocol,
        entry.status,
        entry.bytes.map_or_else(|| "-".to_string(), |b| b.to_string()),
    );
    if dialect == Dialect::Combined {
        line.push_str(&format!(
            " \"{}\" \"{}\"",
            escape_quoted(&opt(&entry.referrer)),
            escape_quoted(&opt(&entry.user_agent))
        ));
    }
    line
}

/// Picks the richest dialect that accepts `line`.
pub fn probe_dialect(line: &str) -> Option<Dialect> {
    [Dialect::Combined, Dialect::Common]
        .into_iter()
        .find(|&d| parse_fields(line, d).is_ok())
}

/// Reads a log file, transparently inflating gzip input.
pub fn read_log_text(path: &Path) -> Result<String, LogError> {
    let io_err = |source| LogError::Io { path: path.display().to_string(), source };
    let mut raw = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut raw)).map_err(io_err)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut inflated = Vec::new();
        MultiGzDecoder::new(&raw[..]).read_to_end(&mut inflated).map_err(io_err)?;
        raw = inflated;
    }
    Ok(String::from_utf8_lossy(&raw).into_owned())
}

#[derive(Debug, Clone)]
pub struct ParsedLog {
    pub dialect: Dialect,
    /// Number of non-blank input lines.
    pub line_count: usize,
    pub entries: Vec<LogEntry>,
    pub malformed: Vec<ParseError>,
}

/// Parses every non-blank line. With `dialect == None` the first line that
/// parses in some dialect decides it.
pub fn parse_log(text: &str, dialect: Option<Dialect>) -> Result<ParsedLog, LogError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let dialect = match (dialect, lines.first()) {
        (Some(d), _) => d,
        (None, None) => Dialect::Combined,
        (None, Some(&(line_no, _))) => lines
            .iter()
            .find_map(|(_, l)| probe_dialect(l))
            .ok_or(LogError::UnknownDialect { line_no })?,
    };
    let mut parsed = ParsedLog { dialect, line_count: 0, entries: Vec::new(), malformed: Vec::new() };
    for (line_no, line) in lines {
        parsed.line_count += 1;
        match parse_line(line, line_no, dialect) {
            Ok(e) => parsed.entries.push(e),
            Err(e) => parsed.malformed.push(e),
        }
    }
    Ok(parsed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DropReason {
    Malformed,
    Method,
    Status,
    Extension,
    Robot,
}

impl DropReason {
    pub const ALL: [DropReason; 5] = [
        DropReason::Malformed,
        DropReason::Method,
        DropReason::Status,
        DropReason::Extension,
        DropReason::Robot,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleaningRules {
    pub allowed_methods: Vec<String>,
    pub allowed_statuses: Vec<u16>,
    /// Lower-case file extensions (without the dot) of embedded objects.
    pub dropped_extensions: Vec<String>,
    /// Case-insensitive user-agent substrings that identify robots.
    pub robot_agents: Vec<String>,
    /// Treat every host that ever fetched `/robots.txt` as a robot.
    pub robots_txt_marks_host: bool,
}

impl Default for CleaningRules {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        CleaningRules {
            allowed_methods: s(&["GET"]),
            allowed_statuses: vec![200, 304],
            dropped_extensions: s(&[
                "gif", "jpg", "jpeg", "png", "ico", "css", "js", "swf", "bmp", "svg", "woff", "ttf",
                "mp3", "mp4",
            ]),
            robot_agents: s(&["bot", "crawler", "spider", "slurp"]),
            robots_txt_marks_host: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CleaningReport {
    pub input_count: usize,
    pub retained_count: usize,
    pub dropped_by_reason: BTreeMap<DropReason, usize>,
}

impl CleaningReport {
    fn empty(input_count: usize) -> Self {
        CleaningReport {
            input_count,
            retained_count: 0,
            dropped_by_reason: DropReason::ALL.iter().map(|&r| (r, 0)).collect(),
        }
    }

    pub fn dropped(&self, reason: DropReason) -> usize {
        self.dropped_by_reason.get(&reason).copied().unwrap_or(0)
    }

    pub fn total_dropped(&self) -> usize {
        self.dropped_by_reason.values().sum()
    }

    /// Folds lines rejected by the parser into the report.
    pub fn add_malformed(&mut self, count: usize) {
        self.input_count += count;
        *self.dropped_by_reason.entry(DropReason::Malformed).or_default() += count;
    }
}

fn extension(path: &str) -> Option<String> {
    let segment = path.rsplit('/').next()?;
    let (_, ext) = segment.rsplit_once('.')?;
    Some(ext.to_ascii_lowercase())
}

impl CleaningRules {
    fn verdict(&self, entry: &LogEntry, robot_hosts: &HashSet<&str>) -> Option<DropReason> {
        if !self.allowed_methods.iter().any(|m| m == &entry.method) {
            return Some(DropReason::Method);
        }
        if !self.allowed_statuses.contains(&entry.status) {
            return Some(DropReason::Status);
        }
        if extension(&entry.path).is_some_and(|ext| self.dropped_extensions.contains(&ext)) {
            return Some(DropReason::Extension);
        }
        let agent_is_robot = entry.user_agent.as_deref().is_some_and(|ua| {
            let ua = ua.to_ascii_lowercase();
            self.robot_agents.iter().any(|r| ua.contains(&r.to_ascii_lowercase()))
        });
        if agent_is_robot || robot_hosts.contains(entry.client_host.as_str()) {
            return Some(DropReason::Robot);
        }
        None
    }
}

/// Keeps page-view entries only; the first failing rule (method, status,
/// extension, robot) is the one charged in the report.
pub fn clean(entries: &[LogEntry], rules: &CleaningRules) -> (Vec<LogEntry>, CleaningReport) {
    let robot_hosts: HashSet<&str> = if rules.robots_txt_marks_host {
        entries
            .iter()
            .filter(|e| e.path == "/robots.txt")
            .map(|e| e.client_host.as_str())
            .collect()
    } else {
        HashSet::new()
    };
    let mut report = CleaningReport::empty(entries.len());
    let mut kept = Vec::with_capacity(entries.len());
    for entry in entries {
        match rules.verdict(entry, &robot_hosts) {
            Some(reason) => *report.dropped_by_reason.entry(reason).or_default() += 1,
            None => kept.push(entry.clone()),
        }
    }
    report.retained_count = kept.len();
    (kept, report)
}
