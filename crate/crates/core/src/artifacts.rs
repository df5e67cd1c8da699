//! On-disk formats: CSV/JSON reports and the plain-text matrix files the
//! clustering stages read back.
//!
//! Report floats are printed with 9 significant digits (`%.9g` style). Matrix
//! sidecar weights use the shortest round-trip representation so a matrix read
//! back from disk is bit-identical to the one written.

use std::io;

use chrono::DateTime;
use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::clustering::{crisp_labels, FcmConfig, FcmState};
use crate::sessionize::{UserId, UserSession, Vocabulary};
use crate::validity::SweepResult;
use crate::weighting::{weight_histogram, SessionMatrix, WeightAssignment};

/// Formats like C's `%.9g`.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-5..9).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim(mantissa), sign, exp.abs())
    } else {
        trim(&format!("{:.*}", (8 - exp) as usize, x))
    }
}

/// `x` rounded to 9 significant digits.
pub fn round_sig(x: f64) -> f64 {
    format_sig(x).parse().unwrap_or(x)
}

fn csv_bytes<F>(fill: F) -> Vec<u8>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    fill(&mut w).expect("writing CSV to memory");
    w.into_inner().expect("flushing CSV to memory")
}

pub fn sessions_csv(sessions: &[UserSession]) -> Vec<u8> {
    csv_bytes(|w| {
        w.write_record(["session_id", "user_key", "start", "end", "url_count", "url_indices"])?;
        for s in sessions {
            let indices: Vec<String> = s.url_indices.iter().map(usize::to_string).collect();
            w.write_record([
                s.session_id.to_string(),
                s.user.to_string(),
                s.start.to_rfc3339(),
                s.end.to_rfc3339(),
                s.url_indices.len().to_string(),
                indices.join(" "),
            ])?;
        }
        Ok(())
    })
}

fn bad(what: &str, detail: impl std::fmt::Display) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("{what}: {detail}"))
}

pub fn parse_sessions_csv(bytes: &[u8]) -> io::Result<Vec<UserSession>> {
    let mut r = csv::Reader::from_reader(bytes);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad("sessions.csv", e))?;
        if rec.len() != 6 {
            return Err(bad("sessions.csv", format!("expected 6 fields, got {}", rec.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| bad("sessions.csv", e));
        let time = |s: &str| DateTime::parse_from_rfc3339(s).map_err(|e| bad("sessions.csv", e));
        let (host, agent) = rec[1].split_once('|').ok_or_else(|| bad("sessions.csv", "user_key lacks `|`"))?;
        out.push(UserSession {
            session_id: int(&rec[0])?,
            user: UserId {
                client_host: host.to_string(),
                user_agent: (agent != "-").then(|| agent.to_string()),
            },
            start: time(&rec[2])?,
            end: time(&rec[3])?,
            url_indices: rec[5].split_whitespace().map(int).collect::<io::Result<_>>()?,
        });
    }
    Ok(out)
}

pub fn vocabulary_csv(vocab: &Vocabulary) -> Vec<u8> {
    csv_bytes(|w| {
        w.write_record(["index", "url"])?;
        for (i, u) in vocab.urls().iter().enumerate() {
            w.write_record([i.to_string(), u.clone()])?;
        }
        Ok(())
    })
}

pub fn parse_vocabulary_csv(bytes: &[u8]) -> io::Result<Vocabulary> {
    let mut r = csv::Reader::from_reader(bytes);
    let mut vocab = Vocabulary::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad("vocabulary.csv", e))?;
        let idx: usize = rec.get(0).unwrap_or("").parse().map_err(|e| bad("vocabulary.csv", e))?;
        let url = rec.get(1).ok_or_else(|| bad("vocabulary.csv", "missing url"))?;
        if vocab.intern(url) != idx {
            return Err(bad("vocabulary.csv", format!("index {idx} out of sequence")));
        }
    }
    Ok(vocab)
}

/// Two blocks separated by a blank line: per-URL then per-session weights.
pub fn weights_csv(vocab: &Vocabulary, matrix: &SessionMatrix, w: &WeightAssignment) -> Vec<u8> {
    let mut out = csv_bytes(|csv| {
        csv.write_record(["url_path", "support", "weight"])?;
        for (col, &url) in matrix.col_ids().iter().enumerate() {
            csv.write_record([
                vocab.url(url).unwrap_or_default().to_string(),
                w.url_support[col].to_string(),
                format_sig(w.url_weights[col]),
            ])?;
        }
        Ok(())
    });
    out.push(b'\n');
    out.extend(csv_bytes(|csv| {
        csv.write_record(["session_id", "url_count", "weight"])?;
        for (row, &id) in matrix.row_ids().iter().enumerate() {
            csv.write_record([id.to_string(), w.session_sizes[row].to_string(), format_sig(w.session_weights[row])])?;
        }
        Ok(())
    }));
    out
}

/// Items per weight value, for "count per weight" bar charts.
pub fn histogram_csv(w: &WeightAssignment) -> Vec<u8> {
    csv_bytes(|csv| {
        csv.write_record(["kind", "weight", "count"])?;
        for (kind, weights) in [("url", &w.url_weights), ("session", &w.session_weights)] {
            for (weight, count) in weight_histogram(weights) {
                csv.write_record([kind.to_string(), format_sig(weight), count.to_string()])?;
            }
        }
        Ok(())
    })
}

/// Matrix body: `m n` header line, then one line of space-separated 0/1 per row.
pub fn matrix_text(matrix: &SessionMatrix) -> String {
    let mut s = format!("{} {}\n", matrix.rows(), matrix.cols());
    for row in matrix.data().rows() {
        let cells: Vec<&str> = row.iter().map(|&x| if x != 0.0 { "1" } else { "0" }).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

/// Row sidecar: `row,session_id,weight`.
pub fn matrix_rows_csv(matrix: &SessionMatrix) -> Vec<u8> {
    id_weight_csv("session_id", matrix.row_ids(), matrix.row_weights())
}

/// Column sidecar: `col,url_index,weight`.
pub fn matrix_cols_csv(matrix: &SessionMatrix) -> Vec<u8> {
    id_weight_csv("url_index", matrix.col_ids(), matrix.col_weights())
}

fn id_weight_csv(id_name: &str, ids: &[usize], weights: &Array1<f64>) -> Vec<u8> {
    csv_bytes(|w| {
        w.write_record(["pos", id_name, "weight"])?;
        for (pos, (id, weight)) in ids.iter().zip(weights.iter()).enumerate() {
            w.write_record([pos.to_string(), id.to_string(), weight.to_string()])?;
        }
        Ok(())
    })
}

fn parse_id_weight_csv(name: &str, bytes: &[u8]) -> io::Result<(Vec<usize>, Vec<f64>)> {
    let mut ids = Vec::new();
    let mut weights = Vec::new();
    for (pos, rec) in csv::Reader::from_reader(bytes).records().enumerate() {
        let rec = rec.map_err(|e| bad(name, e))?;
        if rec.len() != 3 || rec[0].parse::<usize>().ok() != Some(pos) {
            return Err(bad(name, format!("bad record at position {pos}")));
        }
        ids.push(rec[1].parse().map_err(|e| bad(name, e))?);
        weights.push(rec[2].parse().map_err(|e| bad(name, e))?);
    }
    Ok((ids, weights))
}

pub fn parse_matrix(text: &str, rows_csv: &[u8], cols_csv: &[u8]) -> io::Result<SessionMatrix> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("matrix", "empty file"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| bad("matrix header", e)))
        .collect::<io::Result<_>>()?;
    let [m, n] = dims[..] else {
        return Err(bad("matrix header", "expected `m n`"));
    };
    let mut data = Array2::zeros((m, n));
    for i in 0..m {
        let line = lines.next().ok_or_else(|| bad("matrix", format!("missing row {i}")))?;
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.len() != n {
            return Err(bad("matrix", format!("row {i} has {} cells, expected {n}", cells.len())));
        }
        for (k, cell) in cells.iter().enumerate() {
            data[[i, k]] = match *cell {
                "0" => 0.0,
                "1" => 1.0,
                other => return Err(bad("matrix", format!("cell `{other}` is not 0/1"))),
            };
        }
    }
    let (row_ids, row_w) = parse_id_weight_csv("matrix rows", rows_csv)?;
    let (col_ids, col_w) = parse_id_weight_csv("matrix cols", cols_csv)?;
    SessionMatrix::from_parts(data, row_w.into(), col_w.into(), row_ids, col_ids).map_err(|e| bad("matrix", e))
}

#[derive(Serialize)]
struct SessionMembership {
    session_id: usize,
    top_cluster: usize,
    /// `[cluster, membership]` pairs at or above the floor.
    memberships: Vec<(usize, f64)>,
}

#[derive(Serialize)]
struct ClustersDoc<'a> {
    k: usize,
    mode: String,
    config: &'a FcmConfig,
    converged: bool,
    iterations: usize,
    objective: f64,
    validity: Option<f64>,
    rows: usize,
    cols: usize,
    url_indices: &'a [usize],
    centers: Vec<Vec<f64>>,
    sessions: Vec<SessionMembership>,
}

/// One clustering run as JSON; memberships below `floor` are omitted.
pub fn clusters_json(
    cfg: &FcmConfig,
    state: &FcmState,
    validity: Option<f64>,
    matrix: &SessionMatrix,
    floor: f64,
) -> Vec<u8> {
    let labels = crisp_labels(&state.memberships);
    let doc = ClustersDoc {
        k: state.clusters(),
        mode: state.mode.to_string(),
        config: cfg,
        converged: state.converged,
        iterations: state.iterations_run,
        objective: round_sig(state.objective()),
        validity: validity.map(round_sig),
        rows: matrix.rows(),
        cols: matrix.cols(),
        url_indices: matrix.col_ids(),
        centers: state.centers.rows().into_iter().map(|r| r.iter().copied().map(round_sig).collect()).collect(),
        sessions: state
            .memberships
            .rows()
            .into_iter()
            .zip(matrix.row_ids())
            .zip(labels)
            .map(|((row, &session_id), top_cluster)| SessionMembership {
                session_id,
                top_cluster,
                memberships: row
                    .iter()
                    .enumerate()
                    .filter(|(_, &u)| u >= floor)
                    .map(|(j, &u)| (j, round_sig(u)))
                    .collect(),
            })
            .collect(),
    };
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("serializable");
    bytes.push(b'\n');
    bytes
}

pub fn sweep_csv(result: &SweepResult) -> Vec<u8> {
    let opt_f = |x: Option<f64>| x.map(format_sig).unwrap_or_default();
    let opt_d = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
    let opt_b = |x: Option<bool>| x.map(|v| v.to_string()).unwrap_or_default();
    csv_bytes(|w| {
        w.write_record([
            "k", "J_weighted", "J_unweighted", "S_weighted", "S_unweighted", "iters_w", "iters_u", "converged_w",
            "converged_u", "error_tag",
        ])?;
        for r in &result.records {
            w.write_record([
                r.k.to_string(),
                opt_f(r.weighted.objective()),
                opt_f(r.unweighted.objective()),
                opt_f(r.weighted.validity()),
                opt_f(r.unweighted.validity()),
                opt_d(r.weighted.iterations()),
                opt_d(r.unweighted.iterations()),
                opt_b(r.weighted.converged()),
                opt_b(r.unweighted.converged()),
                r.error_tag(),
            ])?;
        }
        Ok(())
    })
}
