//! The end-to-end stages behind the command-line subcommands: preprocess,
//! weigh, cluster, sweep. Each stage either recomputes its inputs from the
//! configured log or reads the previous stage's artifacts from the output
//! directory, so running the stages one by one produces the same files as a
//! single invocation.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::artifacts;
use crate::clustering::{run_fcm, ClusterError, DistanceMode, FcmConfig, FcmState};
use crate::config::{ConfigError, PipelineConfig};
use crate::logparse::{clean, parse_log, read_log_text, CleaningReport, Dialect, LogError, ParseError};
use crate::sessionize::{identify_sessions, identify_users, UserSession, Vocabulary};
use crate::validity::{self, xie_beni, SweepError, SweepResult};
use crate::weighting::{assign_weights, assign_weights_and_reduce, build_matrix, ReductionReport, SessionMatrix, WeightAssignment, WeightError};

pub const SESSIONS_CSV: &str = "sessions.csv";
pub const VOCABULARY_CSV: &str = "vocabulary.csv";
pub const CLEANING_JSON: &str = "cleaning.json";
pub const WEIGHTS_CSV: &str = "weights.csv";
pub const REDUCTION_JSON: &str = "reduction.json";
pub const HISTOGRAM_CSV: &str = "weight_histogram.csv";
pub const MATRIX_RAW: &str = "matrix_raw";
pub const MATRIX_REDUCED: &str = "matrix_reduced";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_SUMMARY: &str = "sweep_summary.txt";

pub fn clusters_file_name(k: usize, mode: DistanceMode) -> String {
    format!("clusters_k{k}_{mode}.json")
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no input log configured and no `{0}` in the output directory")]
    MissingInput(String),
    #[error("cannot write `{path}`: {source}")]
    Output { path: PathBuf, source: io::Error },
    #[error("cannot read `{path}`: {source}")]
    Artifact { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Reduction(WeightError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("every k failed in both series; see {0}")]
    AllKFailed(String),
}

impl From<WeightError> for PipelineError {
    fn from(e: WeightError) -> Self {
        match e {
            WeightError::MatrixVanished { .. } => PipelineError::Reduction(e),
            other => PipelineError::Config(ConfigError::Thresholds(other)),
        }
    }
}

impl PipelineError {
    /// 2 input/config, 3 reduction, 4 clustering.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Log(_)
            | PipelineError::Config(_)
            | PipelineError::MissingInput(_)
            | PipelineError::Output { .. }
            | PipelineError::Artifact { .. } => 2,
            PipelineError::Reduction(_) => 3,
            PipelineError::Cluster(_) | PipelineError::Sweep(_) | PipelineError::AllKFailed(_) => 4,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

/// The output directory.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutputDir { root: root.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).is_file()
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        fs::create_dir_all(&self.root)
            .and_then(|_| fs::write(&path, bytes))
            .map_err(|source| PipelineError::Output { path, source })
    }

    pub fn read(&self, name: &str) -> Result<Vec<u8>> {
        let path = self.path(name);
        fs::read(&path).map_err(|source| PipelineError::Artifact { path, source })
    }

    fn parse<T>(&self, name: &str, parse: impl FnOnce(&[u8]) -> io::Result<T>) -> Result<T> {
        let bytes = self.read(name)?;
        parse(&bytes).map_err(|source| PipelineError::Artifact { path: self.path(name), source })
    }
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub dialect: Dialect,
    pub cleaning: CleaningReport,
    pub malformed: Vec<ParseError>,
    pub users: usize,
    pub vocabulary: Vocabulary,
    pub sessions: Vec<UserSession>,
}

impl Preprocessed {
    /// Counts after cleaning and user/session identification.
    pub fn summary(&self) -> String {
        let rows = [
            ("Initial No of Log Entries", self.cleaning.input_count),
            ("Log Entries after Cleaning", self.cleaning.retained_count),
            ("No. of site URLs accessed", self.vocabulary.len()),
            ("No of Users Identified", self.users),
            ("No. of User Sessions Identified", self.sessions.len()),
        ];
        let mut s = format!("{:<34}{:>10}\n", "Items", "Count");
        for (label, n) in rows {
            let _ = writeln!(s, "{label:<34}{n:>10}");
        }
        s
    }
}

#[derive(Serialize)]
struct CleaningDoc<'a> {
    dialect: Dialect,
    #[serde(flatten)]
    report: &'a CleaningReport,
    malformed_lines: Vec<usize>,
}

/// Parses, cleans and sessionizes log text.
pub fn preprocess_text(text: &str, cfg: &PipelineConfig) -> Result<Preprocessed> {
    let parsed = parse_log(text, cfg.dialect)?;
    let (cleaned, mut report) = clean(&parsed.entries, &cfg.cleaning);
    report.add_malformed(parsed.malformed.len());
    let users = identify_users(&cleaned);
    let mut vocabulary = Vocabulary::new();
    let sessions = identify_sessions(&users, cfg.session_timeout(), &mut vocabulary);
    Ok(Preprocessed {
        dialect: parsed.dialect,
        cleaning: report,
        malformed: parsed.malformed,
        users: users.len(),
        vocabulary,
        sessions,
    })
}

pub fn preprocess(cfg: &PipelineConfig) -> Result<Preprocessed> {
    let input = cfg.input.as_deref().ok_or_else(|| PipelineError::MissingInput(SESSIONS_CSV.into()))?;
    preprocess_text(&read_log_text(input)?, cfg)
}

pub fn write_preprocessed(out: &OutputDir, pre: &Preprocessed, cfg: &PipelineConfig) -> Result<()> {
    if cfg.emit.sessions {
        out.write(SESSIONS_CSV, &artifacts::sessions_csv(&pre.sessions))?;
    }
    if cfg.emit.vocabulary {
        out.write(VOCABULARY_CSV, &artifacts::vocabulary_csv(&pre.vocabulary))?;
    }
    if cfg.emit.cleaning {
        let doc = CleaningDoc {
            dialect: pre.dialect,
            report: &pre.cleaning,
            malformed_lines: pre.malformed.iter().map(|e| e.line_no).collect(),
        };
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("serializable");
        bytes.push(b'\n');
        out.write(CLEANING_JSON, &bytes)?;
    }
    Ok(())
}

/// Raw and reduced matrices with the weights that produced them.
#[derive(Debug, Clone)]
pub struct Weighed {
    pub raw: SessionMatrix,
    pub reduced: SessionMatrix,
    pub assignment: WeightAssignment,
    pub report: ReductionReport,
}

impl Weighed {
    pub fn summary(&self) -> String {
        let r = &self.report;
        let mut s = format!("{:<24}{:>10}{:>10}\n", "Items", "Before", "After");
        let _ = writeln!(s, "{:<24}{:>10}{:>10}", "No. of URL items", r.urls_before, r.urls_after);
        let _ = writeln!(s, "{:<24}{:>10}{:>10}", "No. of User Sessions", r.sessions_before, r.sessions_after);
        let _ = writeln!(s, "zero-weight URLs dropped: {}", r.urls_dropped_zero_weight);
        let _ = writeln!(s, "zero-weight sessions dropped: {}", r.sessions_dropped_zero_weight);
        let _ = writeln!(s, "sessions emptied by URL removal: {}", r.sessions_dropped_empty_after_column_removal);
        s
    }
}

pub fn weigh(sessions: &[UserSession], vocab: &Vocabulary, cfg: &PipelineConfig) -> Result<Weighed> {
    let wcfg = cfg.weight_config()?;
    let raw = build_matrix(sessions, vocab);
    let assignment = assign_weights(&raw, &wcfg);
    let (reduced, report) = assign_weights_and_reduce(&raw, &wcfg)?;
    Ok(Weighed { raw, reduced, assignment, report })
}

fn write_matrix(out: &OutputDir, stem: &str, m: &SessionMatrix) -> Result<()> {
    out.write(&format!("{stem}.txt"), artifacts::matrix_text(m).as_bytes())?;
    out.write(&format!("{stem}.rows.csv"), &artifacts::matrix_rows_csv(m))?;
    out.write(&format!("{stem}.cols.csv"), &artifacts::matrix_cols_csv(m))
}

fn read_matrix(out: &OutputDir, stem: &str) -> Result<SessionMatrix> {
    let text = out.read(&format!("{stem}.txt"))?;
    let rows = out.read(&format!("{stem}.rows.csv"))?;
    let cols = out.read(&format!("{stem}.cols.csv"))?;
    artifacts::parse_matrix(&String::from_utf8_lossy(&text), &rows, &cols)
        .map_err(|source| PipelineError::Artifact { path: out.path(&format!("{stem}.txt")), source })
}

pub fn write_weighed(out: &OutputDir, vocab: &Vocabulary, w: &Weighed, cfg: &PipelineConfig) -> Result<()> {
    if cfg.emit.weights {
        out.write(WEIGHTS_CSV, &artifacts::weights_csv(vocab, &w.raw, &w.assignment))?;
    }
    if cfg.emit.reduction {
        let mut bytes = serde_json::to_vec_pretty(&w.report).expect("serializable");
        bytes.push(b'\n');
        out.write(REDUCTION_JSON, &bytes)?;
    }
    if cfg.emit.histogram {
        out.write(HISTOGRAM_CSV, &artifacts::histogram_csv(&w.assignment))?;
    }
    if cfg.emit.matrices {
        write_matrix(out, MATRIX_RAW, &w.raw)?;
        write_matrix(out, MATRIX_REDUCED, &w.reduced)?;
    }
    Ok(())
}

/// Stage output of `preprocess`: recomputed from the input log when one is
/// configured, otherwise read back from the output directory.
pub fn resolve_sessions(cfg: &PipelineConfig, out: &OutputDir) -> Result<(Vocabulary, Vec<UserSession>)> {
    if cfg.input.is_some() {
        let pre = preprocess(cfg)?;
        write_preprocessed(out, &pre, cfg)?;
        return Ok((pre.vocabulary, pre.sessions));
    }
    if !out.exists(SESSIONS_CSV) {
        return Err(PipelineError::MissingInput(SESSIONS_CSV.into()));
    }
    let vocab = out.parse(VOCABULARY_CSV, artifacts::parse_vocabulary_csv)?;
    let sessions = out.parse(SESSIONS_CSV, artifacts::parse_sessions_csv)?;
    Ok((vocab, sessions))
}

/// (raw, reduced) matrices, from the log, from saved sessions, or from saved
/// matrix files, in that order of preference.
pub fn resolve_matrices(cfg: &PipelineConfig, out: &OutputDir) -> Result<(SessionMatrix, SessionMatrix)> {
    let raw_file = format!("{MATRIX_RAW}.txt");
    if cfg.input.is_none() && out.exists(&raw_file) {
        return Ok((read_matrix(out, MATRIX_RAW)?, read_matrix(out, MATRIX_REDUCED)?));
    }
    if cfg.input.is_none() && !out.exists(SESSIONS_CSV) {
        return Err(PipelineError::MissingInput(raw_file));
    }
    let (vocab, sessions) = resolve_sessions(cfg, out)?;
    let w = weigh(&sessions, &vocab, cfg)?;
    write_weighed(out, &vocab, &w, cfg)?;
    Ok((w.raw, w.reduced))
}

/// One finished clustering run.
#[derive(Debug, Clone)]
pub struct ClusterRun {
    pub config: FcmConfig,
    pub state: FcmState,
    pub validity: Option<f64>,
}

/// Weighted FCM on the reduced matrix and unweighted FCM on the raw one, at `k`.
pub fn cluster_at(raw: &SessionMatrix, reduced: &SessionMatrix, cfg: &PipelineConfig, k: usize) -> Result<Vec<ClusterRun>> {
    [(DistanceMode::Weighted, reduced), (DistanceMode::Unweighted, raw)]
        .into_iter()
        .map(|(mode, matrix)| {
            let config = cfg.fcm_config(mode).with_c(k);
            let state = run_fcm(matrix, &config)?;
            let validity = xie_beni(&state, matrix).ok();
            Ok(ClusterRun { config, state, validity })
        })
        .collect()
}

fn write_clusters(out: &OutputDir, run: &ClusterRun, matrix: &SessionMatrix, floor: f64) -> Result<()> {
    let bytes = artifacts::clusters_json(&run.config, &run.state, run.validity, matrix, floor);
    out.write(&clusters_file_name(run.state.clusters(), run.config.mode), &bytes)
}

pub fn sweep(raw: &SessionMatrix, reduced: &SessionMatrix, cfg: &PipelineConfig) -> Result<SweepResult> {
    let base = cfg.fcm_config(DistanceMode::Weighted);
    Ok(validity::sweep(reduced, raw, &base, &cfg.sweep_config())?)
}

pub fn sweep_summary(result: &SweepResult) -> String {
    let show = |k: Option<usize>| k.map_or_else(|| "none".to_string(), |k| k.to_string());
    let at_best = |mode| {
        result.best_k(mode).and_then(|k| result.record(k)).and_then(|r| r.entry(mode).validity())
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "k range: weighted {}..={}, unweighted {}..={}",
        result.records.first().map_or(0, |r| r.k),
        result.k_max_weighted,
        result.records.first().map_or(0, |r| r.k),
        result.k_max_unweighted
    );
    let _ = writeln!(
        s,
        "best_k weighted={}, unweighted={}",
        show(result.best_k_weighted),
        show(result.best_k_unweighted)
    );
    match (at_best(DistanceMode::Weighted), at_best(DistanceMode::Unweighted)) {
        (Some(w), Some(u)) => {
            let _ = writeln!(s, "S at optimum: weighted={}, unweighted={}", artifacts::format_sig(w), artifacts::format_sig(u));
            let lower = if w <= u { "weighted" } else { "unweighted" };
            let _ = writeln!(s, "lower S at optimum: {lower}");
        }
        _ => {
            let _ = writeln!(s, "lower S at optimum: undetermined");
        }
    }
    s
}

/// `preprocess`: writes sessions, vocabulary and cleaning report.
pub fn run_preprocess(cfg: &PipelineConfig) -> Result<String> {
    cfg.validate()?;
    let out = OutputDir::new(&cfg.output_dir);
    let pre = preprocess(cfg)?;
    write_preprocessed(&out, &pre, cfg)?;
    Ok(pre.summary())
}

/// `weigh`: writes weights, reduction report, histogram and matrices.
pub fn run_weigh(cfg: &PipelineConfig) -> Result<String> {
    cfg.validate()?;
    let out = OutputDir::new(&cfg.output_dir);
    let (vocab, sessions) = resolve_sessions(cfg, &out)?;
    let w = weigh(&sessions, &vocab, cfg)?;
    write_weighed(&out, &vocab, &w, cfg)?;
    Ok(w.summary())
}

/// `cluster`: both modes at `cfg.k`, or every k of the sweep when unset.
pub fn run_cluster(cfg: &PipelineConfig) -> Result<String> {
    cfg.validate()?;
    let out = OutputDir::new(&cfg.output_dir);
    let (raw, reduced) = resolve_matrices(cfg, &out)?;
    let Some(k) = cfg.k else {
        let result = sweep(&raw, &reduced, cfg)?;
        for record in &result.records {
            for (mode, matrix) in [(DistanceMode::Weighted, &reduced), (DistanceMode::Unweighted, &raw)] {
                if let Some(state) = record.entry(mode).state() {
                    let run = ClusterRun {
                        config: cfg.fcm_config(mode).with_c(record.k),
                        state: state.clone(),
                        validity: record.entry(mode).validity(),
                    };
                    if cfg.emit.clusters {
                        write_clusters(&out, &run, matrix, cfg.membership_floor)?;
                    }
                }
            }
        }
        return finish_sweep(&out, &result, cfg);
    };
    let runs = cluster_at(&raw, &reduced, cfg, k)?;
    let mut s = String::new();
    for (run, matrix) in runs.iter().zip([&reduced, &raw]) {
        if cfg.emit.clusters {
            write_clusters(&out, run, matrix, cfg.membership_floor)?;
        }
        let _ = writeln!(
            s,
            "{} k={} J={} S={} iterations={} converged={}",
            run.config.mode,
            k,
            artifacts::format_sig(run.state.objective()),
            run.validity.map_or_else(|| "n/a".into(), artifacts::format_sig),
            run.state.iterations_run,
            run.state.converged
        );
    }
    Ok(s)
}

fn finish_sweep(out: &OutputDir, result: &SweepResult, cfg: &PipelineConfig) -> Result<String> {
    let summary = sweep_summary(result);
    if cfg.emit.sweep {
        out.write(SWEEP_CSV, &artifacts::sweep_csv(result))?;
        out.write(SWEEP_SUMMARY, summary.as_bytes())?;
    }
    if result.all_failed() {
        return Err(PipelineError::AllKFailed(out.path(SWEEP_CSV).display().to_string()));
    }
    Ok(summary)
}

/// `sweep`: the k sweep in both modes, written to `sweep.csv`.
pub fn run_sweep(cfg: &PipelineConfig) -> Result<String> {
    cfg.validate()?;
    let out = OutputDir::new(&cfg.output_dir);
    let (raw, reduced) = resolve_matrices(cfg, &out)?;
    let result = sweep(&raw, &reduced, cfg)?;
    finish_sweep(&out, &result, cfg)
}

/// Reads a file relative to the output directory; used by tests and tools.
pub fn read_artifact(dir: &Path, name: &str) -> Result<Vec<u8>> {
    OutputDir::new(dir).read(name)
}
