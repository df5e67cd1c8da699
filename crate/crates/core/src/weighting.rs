//! Binary session×URL matrix and linear fuzzy membership weights for URLs
//! (by session support) and sessions (by distinct URL count).
//!
//! Zero-weight columns and rows are removed afterwards; this is the soft
//! counterpart of dropping low-support URLs and short sessions outright.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use serde::Serialize;
use thiserror::Error;

use crate::sessionize::{UserSession, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WeightError {
    #[error("invalid URL thresholds: alpha1 ({alpha1}) must be < alpha2 ({alpha2})")]
    UrlThresholds { alpha1: usize, alpha2: usize },
    #[error("invalid session thresholds: beta1 ({beta1}) must be < beta2 ({beta2})")]
    SessionThresholds { beta1: usize, beta2: usize },
    #[error("matrix vanished under thresholds ({rows} sessions x {cols} URLs survive)")]
    MatrixVanished { rows: usize, cols: usize },
    #[error("malformed session matrix: {0}")]
    Shape(String),
}

/// Lower/upper thresholds of the two membership functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WeightConfig {
    alpha1: usize,
    alpha2: usize,
    beta1: usize,
    beta2: usize,
}

impl WeightConfig {
    pub fn new(alpha1: usize, alpha2: usize, beta1: usize, beta2: usize) -> Result<Self, WeightError> {
        if alpha1 >= alpha2 {
            return Err(WeightError::UrlThresholds { alpha1, alpha2 });
        }
        if beta1 >= beta2 {
            return Err(WeightError::SessionThresholds { beta1, beta2 });
        }
        Ok(WeightConfig { alpha1, alpha2, beta1, beta2 })
    }

    pub fn alpha1(&self) -> usize {
        self.alpha1
    }
    pub fn alpha2(&self) -> usize {
        self.alpha2
    }
    pub fn beta1(&self) -> usize {
        self.beta1
    }
    pub fn beta2(&self) -> usize {
        self.beta2
    }
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig { alpha1: 1, alpha2: 6, beta1: 1, beta2: 6 }
    }
}

fn linear_membership(x: usize, lower: usize, upper: usize) -> f64 {
    if x <= lower {
        0.0
    } else if x >= upper {
        1.0
    } else {
        (x - lower) as f64 / (upper - lower) as f64
    }
}

/// Weight of a URL contained in `support` sessions.
pub fn url_weight(support: usize, cfg: &WeightConfig) -> f64 {
    linear_membership(support, cfg.alpha1, cfg.alpha2)
}

/// Weight of a session that touched `url_count` distinct URLs.
pub fn session_weight(url_count: usize, cfg: &WeightConfig) -> f64 {
    linear_membership(url_count, cfg.beta1, cfg.beta2)
}

/// Dense binary sessions × URLs matrix with per-row and per-column weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionMatrix {
    data: Array2<f64>,
    row_weights: Array1<f64>,
    col_weights: Array1<f64>,
    row_ids: Vec<usize>,
    col_ids: Vec<usize>,
}

impl SessionMatrix {
    /// Assembles a matrix from its parts, checking shapes, binary entries and
    /// weight ranges.
    pub fn from_parts(
        data: Array2<f64>,
        row_weights: Array1<f64>,
        col_weights: Array1<f64>,
        row_ids: Vec<usize>,
        col_ids: Vec<usize>,
    ) -> Result<Self, WeightError> {
        let (m, n) = data.dim();
        if row_weights.len() != m || row_ids.len() != m {
            return Err(WeightError::Shape(format!("{m} rows but {} row weights / {} row ids", row_weights.len(), row_ids.len())));
        }
        if col_weights.len() != n || col_ids.len() != n {
            return Err(WeightError::Shape(format!("{n} columns but {} column weights / {} column ids", col_weights.len(), col_ids.len())));
        }
        if data.iter().any(|&x| x != 0.0 && x != 1.0) {
            return Err(WeightError::Shape("entries must be 0 or 1".into()));
        }
        if row_weights.iter().chain(col_weights.iter()).any(|w| !(0.0..=1.0).contains(w)) {
            return Err(WeightError::Shape("weights must lie in [0, 1]".into()));
        }
        Ok(SessionMatrix { data, row_weights, col_weights, row_ids, col_ids })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }
    pub fn cols(&self) -> usize {
        self.data.ncols()
    }
    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }
    pub fn row_weights(&self) -> &Array1<f64> {
        &self.row_weights
    }
    pub fn col_weights(&self) -> &Array1<f64> {
        &self.col_weights
    }
    /// Session id of each row.
    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }
    /// Vocabulary index of each column.
    pub fn col_ids(&self) -> &[usize] {
        &self.col_ids
    }

    /// Number of sessions containing each URL.
    pub fn column_support(&self) -> Vec<usize> {
        self.data.sum_axis(Axis(0)).iter().map(|&s| s as usize).collect()
    }

    /// Distinct URLs per session.
    pub fn row_sizes(&self) -> Vec<usize> {
        self.data.sum_axis(Axis(1)).iter().map(|&s| s as usize).collect()
    }
}

/// Presence/absence matrix of `sessions` over `vocab`; all weights start at 1.
pub fn build_matrix(sessions: &[UserSession], vocab: &Vocabulary) -> SessionMatrix {
    let (m, n) = (sessions.len(), vocab.len());
    let mut data = Array2::zeros((m, n));
    for (i, s) in sessions.iter().enumerate() {
        for &k in &s.url_indices {
            data[[i, k]] = 1.0;
        }
    }
    SessionMatrix {
        data,
        row_weights: Array1::ones(m),
        col_weights: Array1::ones(n),
        row_ids: sessions.iter().map(|s| s.session_id).collect(),
        col_ids: (0..n).collect(),
    }
}

/// Supports, sizes and weights computed from an unreduced matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightAssignment {
    pub url_support: Vec<usize>,
    pub url_weights: Vec<f64>,
    pub session_sizes: Vec<usize>,
    pub session_weights: Vec<f64>,
}

pub fn assign_weights(matrix: &SessionMatrix, cfg: &WeightConfig) -> WeightAssignment {
    let url_support = matrix.column_support();
    let session_sizes = matrix.row_sizes();
    WeightAssignment {
        url_weights: url_support.iter().map(|&s| url_weight(s, cfg)).collect(),
        session_weights: session_sizes.iter().map(|&s| session_weight(s, cfg)).collect(),
        url_support,
        session_sizes,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ReductionReport {
    pub urls_before: usize,
    pub urls_after: usize,
    pub sessions_before: usize,
    pub sessions_after: usize,
    pub urls_dropped_zero_weight: usize,
    pub sessions_dropped_zero_weight: usize,
    pub sessions_dropped_empty_after_column_removal: usize,
}

impl ReductionReport {
    pub fn reconciles(&self) -> bool {
        self.urls_before == self.urls_after + self.urls_dropped_zero_weight
            && self.sessions_before
                == self.sessions_after
                    + self.sessions_dropped_zero_weight
                    + self.sessions_dropped_empty_after_column_removal
    }
}

/// Weighs the matrix and removes zero-weight columns, then zero-weight rows,
/// then rows left without any surviving URL.
///
/// Weights come from the original matrix and are not recomputed after removal.
pub fn assign_weights_and_reduce(
    matrix: &SessionMatrix,
    cfg: &WeightConfig,
) -> Result<(SessionMatrix, ReductionReport), WeightError> {
    let w = assign_weights(matrix, cfg);
    let keep_cols: Vec<usize> = (0..matrix.cols()).filter(|&k| w.url_weights[k] > 0.0).collect();
    let weighted_rows: Vec<usize> = (0..matrix.rows()).filter(|&i| w.session_weights[i] > 0.0).collect();
    let keep_rows: Vec<usize> = weighted_rows
        .iter()
        .copied()
        .filter(|&i| keep_cols.iter().any(|&k| matrix.data[[i, k]] != 0.0))
        .collect();

    let report = ReductionReport {
        urls_before: matrix.cols(),
        urls_after: keep_cols.len(),
        sessions_before: matrix.rows(),
        sessions_after: keep_rows.len(),
        urls_dropped_zero_weight: matrix.cols() - keep_cols.len(),
        sessions_dropped_zero_weight: matrix.rows() - weighted_rows.len(),
        sessions_dropped_empty_after_column_removal: weighted_rows.len() - keep_rows.len(),
    };
    if keep_rows.is_empty() || keep_cols.is_empty() {
        return Err(WeightError::MatrixVanished { rows: keep_rows.len(), cols: keep_cols.len() });
    }

    let data = matrix.data.select(Axis(0), &keep_rows).select(Axis(1), &keep_cols);
    let reduced = SessionMatrix {
        data,
        row_weights: keep_rows.iter().map(|&i| w.session_weights[i]).collect(),
        col_weights: keep_cols.iter().map(|&k| w.url_weights[k]).collect(),
        row_ids: keep_rows.iter().map(|&i| matrix.row_ids[i]).collect(),
        col_ids: keep_cols.iter().map(|&k| matrix.col_ids[k]).collect(),
    };
    Ok((reduced, report))
}

/// Count of items per distinct weight value, in increasing weight order.
pub fn weight_histogram(weights: &[f64]) -> Vec<(f64, usize)> {
    // Weights are non-negative, so bit patterns order like the values.
    let mut buckets: BTreeMap<u64, usize> = BTreeMap::new();
    for &w in weights {
        *buckets.entry(w.to_bits()).or_default() += 1;
    }
    buckets.into_iter().map(|(bits, n)| (f64::from_bits(bits), n)).collect()
}
