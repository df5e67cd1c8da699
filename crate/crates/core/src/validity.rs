//! Xie–Beni compactness/separation index and the cluster-count sweep that
//! picks the k minimizing it, for the weighted and unweighted series side by
//! side.

use ndarray::Array2;
use rayon::prelude::*;
use thiserror::Error;

use crate::clustering::{run_fcm, squared_euclidean, ClusterError, DistanceMode, FcmConfig, FcmState, FeatureSpace, WeightedPoints, ZERO_DISTANCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidityError {
    #[error("validity index needs at least 2 clusters (got {0})")]
    TooFewClusters(usize),
    #[error("separation collapsed: minimum center distance {0:e} is below {ZERO_DISTANCE:e}")]
    SeparationCollapsed(f64),
    #[error("no data points")]
    NoData,
}

impl ValidityError {
    pub fn tag(&self) -> &'static str {
        match self {
            ValidityError::TooFewClusters(_) => "too_few_clusters",
            ValidityError::SeparationCollapsed(_) => "separation_collapsed",
            ValidityError::NoData => "no_data",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("empty cluster range: k_min = {k_min}, k_max = {k_max}")]
    EmptyRange { k_min: usize, k_max: usize },
    #[error("k_min must be at least 2 (got {0})")]
    KMinTooSmall(usize),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

/// S = Σ_j Σ_i u_ij² d²_ij / (m · min_{l≠k} ‖v_l − v_k‖²), with distances in
/// the space the memberships were computed in.
pub fn xie_beni_index<P: WeightedPoints + ?Sized>(
    memberships: &Array2<f64>,
    centers: &Array2<f64>,
    data: &P,
    mode: DistanceMode,
) -> Result<f64, ValidityError> {
    let c = centers.nrows();
    if c < 2 {
        return Err(ValidityError::TooFewClusters(c));
    }
    let space = FeatureSpace::new(data, mode);
    let m = space.len();
    if m == 0 {
        return Err(ValidityError::NoData);
    }
    let d2 = space.distances(centers);
    let compactness: f64 = memberships.iter().zip(d2.iter()).map(|(&u, &d)| u * u * d).sum();
    let mut separation = f64::INFINITY;
    for l in 0..c {
        for k in l + 1..c {
            separation = separation.min(squared_euclidean(centers.row(l), centers.row(k)));
        }
    }
    if separation < ZERO_DISTANCE {
        return Err(ValidityError::SeparationCollapsed(separation));
    }
    Ok(compactness / (m as f64 * separation))
}

/// Xie–Beni index of a finished run.
pub fn xie_beni<P: WeightedPoints + ?Sized>(state: &FcmState, data: &P) -> Result<f64, ValidityError> {
    xie_beni_index(&state.memberships, &state.centers, data, state.mode)
}

/// Outcome of one (k, mode) run in a sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum SeriesEntry {
    /// k lies beyond this series' upper bound.
    Skipped,
    Failed(ClusterError),
    Ran { state: FcmState, validity: Result<f64, ValidityError> },
}

impl SeriesEntry {
    pub fn state(&self) -> Option<&FcmState> {
        match self {
            SeriesEntry::Ran { state, .. } => Some(state),
            _ => None,
        }
    }

    pub fn objective(&self) -> Option<f64> {
        self.state().map(FcmState::objective)
    }

    pub fn validity(&self) -> Option<f64> {
        match self {
            SeriesEntry::Ran { validity: Ok(s), .. } => Some(*s),
            _ => None,
        }
    }

    pub fn iterations(&self) -> Option<usize> {
        self.state().map(|s| s.iterations_run)
    }

    pub fn converged(&self) -> Option<bool> {
        self.state().map(|s| s.converged)
    }

    pub fn error_tag(&self) -> Option<&'static str> {
        match self {
            SeriesEntry::Skipped => Some("out_of_range"),
            SeriesEntry::Failed(e) => Some(match e {
                ClusterError::InvalidConfig(_) => "invalid_config",
                ClusterError::TooManyClusters { .. } => "c_exceeds_m",
                ClusterError::NoData => "no_data",
                ClusterError::DegenerateCluster { .. } => "degenerate_cluster",
            }),
            SeriesEntry::Ran { validity: Err(e), .. } => Some(e.tag()),
            SeriesEntry::Ran { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub k: usize,
    pub weighted: SeriesEntry,
    pub unweighted: SeriesEntry,
}

impl SweepRecord {
    pub fn entry(&self, mode: DistanceMode) -> &SeriesEntry {
        match mode {
            DistanceMode::Weighted => &self.weighted,
            DistanceMode::Unweighted => &self.unweighted,
        }
    }

    /// `weighted:<tag>;unweighted:<tag>` for whichever series has a problem.
    pub fn error_tag(&self) -> String {
        [DistanceMode::Weighted, DistanceMode::Unweighted]
            .into_iter()
            .filter_map(|mode| self.entry(mode).error_tag().map(|t| format!("{mode}:{t}")))
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// One record per k in `k_min..=max(k_max_weighted, k_max_unweighted)`.
    pub records: Vec<SweepRecord>,
    pub k_max_weighted: usize,
    pub k_max_unweighted: usize,
    pub best_k_weighted: Option<usize>,
    pub best_k_unweighted: Option<usize>,
}

impl SweepResult {
    pub fn best_k(&self, mode: DistanceMode) -> Option<usize> {
        match mode {
            DistanceMode::Weighted => self.best_k_weighted,
            DistanceMode::Unweighted => self.best_k_unweighted,
        }
    }

    pub fn record(&self, k: usize) -> Option<&SweepRecord> {
        self.records.iter().find(|r| r.k == k)
    }

    /// True when no k produced a validity value in either series.
    pub fn all_failed(&self) -> bool {
        self.records
            .iter()
            .all(|r| r.weighted.validity().is_none() && r.unweighted.validity().is_none())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepConfig {
    pub k_min: usize,
    /// Upper bound for both series; defaults to a third of each series' rows.
    pub k_max: Option<usize>,
    /// Worker threads, 0 = one per core.
    pub threads: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { k_min: 2, k_max: None, threads: 0 }
    }
}

/// Smallest k attaining the minimum validity value.
pub fn argmin_validity(records: &[SweepRecord], mode: DistanceMode) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for r in records {
        if let Some(s) = r.entry(mode).validity() {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((r.k, s));
            }
        }
    }
    best.map(|(k, _)| k)
}

fn run_entry<P: WeightedPoints + Sync + ?Sized>(data: &P, cfg: &FcmConfig, k_max: usize) -> SeriesEntry {
    if cfg.c > k_max {
        return SeriesEntry::Skipped;
    }
    match run_fcm(data, cfg) {
        Ok(state) => {
            let validity = xie_beni(&state, data);
            SeriesEntry::Ran { state, validity }
        }
        Err(e) => SeriesEntry::Failed(e),
    }
}

/// Runs weighted FCM on `weighted` and unweighted FCM on `unweighted` for
/// every k in range, all with the seed of `base`. A failing k is recorded,
/// never fatal.
pub fn sweep<P, Q>(weighted: &P, unweighted: &Q, base: &FcmConfig, cfg: &SweepConfig) -> Result<SweepResult, SweepError>
where
    P: WeightedPoints + Sync + ?Sized,
    Q: WeightedPoints + Sync + ?Sized,
{
    if cfg.k_min < 2 {
        return Err(SweepError::KMinTooSmall(cfg.k_min));
    }
    let k_max_weighted = cfg.k_max.unwrap_or(weighted.values().nrows() / 3);
    let k_max_unweighted = cfg.k_max.unwrap_or(unweighted.values().nrows() / 3);
    let k_max = k_max_weighted.max(k_max_unweighted);
    if k_max < cfg.k_min {
        return Err(SweepError::EmptyRange { k_min: cfg.k_min, k_max });
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let records: Vec<SweepRecord> = pool.install(|| {
        (cfg.k_min..=k_max)
            .into_par_iter()
            .map(|k| {
                let (w, u) = rayon::join(
                    || run_entry(weighted, &base.with_c(k).with_mode(DistanceMode::Weighted), k_max_weighted),
                    || run_entry(unweighted, &base.with_c(k).with_mode(DistanceMode::Unweighted), k_max_unweighted),
                );
                SweepRecord { k, weighted: w, unweighted: u }
            })
            .collect()
    });

    Ok(SweepResult {
        best_k_weighted: argmin_validity(&records, DistanceMode::Weighted),
        best_k_unweighted: argmin_validity(&records, DistanceMode::Unweighted),
        records,
        k_max_weighted,
        k_max_unweighted,
    })
}
