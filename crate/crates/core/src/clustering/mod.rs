//! Hard and fuzzy c-means over (optionally weighted) session vectors.
//!
//! In weighted mode every coordinate is scaled once by its URL weight and the
//! cluster centers live in that scaled space; the session weight multiplies a
//! row's squared distance. Unweighted mode is plain squared Euclidean distance.

mod fcm;
mod hcm;

pub use fcm::{run_fcm, FcmConfig, FcmState};
pub use hcm::{run_hcm, HcmConfig, HcmResult};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::weighting::SessionMatrix;

/// Distances below this are treated as exact coincidence.
pub const ZERO_DISTANCE: f64 = 1e-12;

/// Re-seeds allowed for a collapsed cluster before giving up.
pub const RESEED_ATTEMPTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("invalid clustering config: {0}")]
    InvalidConfig(String),
    #[error("c ≤ m violated (c = {c}, m = {m})")]
    TooManyClusters { c: usize, m: usize },
    #[error("no data points to cluster")]
    NoData,
    #[error("degenerate cluster {cluster} at k = {k}: membership column collapsed after {RESEED_ATTEMPTS} re-seeds")]
    DegenerateCluster { k: usize, cluster: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    Weighted,
    Unweighted,
}

impl std::fmt::Display for DistanceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DistanceMode::Weighted => "weighted",
            DistanceMode::Unweighted => "unweighted",
        })
    }
}

/// Rows to cluster, with a weight per row and per column.
pub trait WeightedPoints {
    fn values(&self) -> ArrayView2<'_, f64>;
    fn row_weights(&self) -> ArrayView1<'_, f64>;
    fn col_weights(&self) -> ArrayView1<'_, f64>;
}

impl WeightedPoints for SessionMatrix {
    fn values(&self) -> ArrayView2<'_, f64> {
        self.data().view()
    }
    fn row_weights(&self) -> ArrayView1<'_, f64> {
        SessionMatrix::row_weights(self).view()
    }
    fn col_weights(&self) -> ArrayView1<'_, f64> {
        SessionMatrix::col_weights(self).view()
    }
}

/// General real-valued points, used for synthetic data and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Array2<f64>,
    row_weights: Array1<f64>,
    col_weights: Array1<f64>,
}

impl Dataset {
    /// Points with unit weights.
    pub fn new(values: Array2<f64>) -> Self {
        let (m, n) = values.dim();
        Dataset { values, row_weights: Array1::ones(m), col_weights: Array1::ones(n) }
    }

    pub fn with_weights(
        values: Array2<f64>,
        row_weights: Array1<f64>,
        col_weights: Array1<f64>,
    ) -> Result<Self, ClusterError> {
        let (m, n) = values.dim();
        if row_weights.len() != m || col_weights.len() != n {
            return Err(ClusterError::InvalidConfig("weight vector length does not match data shape".into()));
        }
        if row_weights.iter().chain(col_weights.iter()).any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ClusterError::InvalidConfig("weights must be finite and non-negative".into()));
        }
        Ok(Dataset { values, row_weights, col_weights })
    }

    /// One-dimensional points.
    pub fn from_1d(xs: &[f64]) -> Self {
        Self::new(Array2::from_shape_fn((xs.len(), 1), |(i, _)| xs[i]))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.first().map_or(0, Vec::len);
        Self::new(Array2::from_shape_fn((rows.len(), n), |(i, k)| rows[i][k]))
    }
}

impl WeightedPoints for Dataset {
    fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }
    fn row_weights(&self) -> ArrayView1<'_, f64> {
        self.row_weights.view()
    }
    fn col_weights(&self) -> ArrayView1<'_, f64> {
        self.col_weights.view()
    }
}

/// The points as the clustering sees them: coordinates in center space plus a
/// per-row factor on squared distances.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    pub points: Array2<f64>,
    pub row_scale: Array1<f64>,
}

impl FeatureSpace {
    pub fn new<P: WeightedPoints + ?Sized>(data: &P, mode: DistanceMode) -> Self {
        let values = data.values();
        match mode {
            DistanceMode::Unweighted => FeatureSpace {
                points: values.to_owned(),
                row_scale: Array1::ones(values.nrows()),
            },
            DistanceMode::Weighted => FeatureSpace {
                points: &values * &data.col_weights().insert_axis(Axis(0)),
                row_scale: data.row_weights().to_owned(),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    fn dist_sq(&self, i: usize, center: ArrayView1<'_, f64>) -> f64 {
        self.row_scale[i] * squared_euclidean(self.points.row(i), center)
    }

    /// m×c matrix of squared distances.
    pub fn distances(&self, centers: &Array2<f64>) -> Array2<f64> {
        Array2::from_shape_fn((self.len(), centers.nrows()), |(i, j)| self.dist_sq(i, centers.row(j)))
    }

    /// Σ_i s_i u_ij^q x_i / Σ_i s_i u_ij^q per cluster, s_i being the row
    /// scale. This is the exact minimizer of the objective for fixed
    /// memberships in both modes. `Err` names the first cluster whose
    /// membership column carries no mass.
    fn centers(&self, memberships: &Array2<f64>, q: f64) -> Result<Array2<f64>, usize> {
        let (m, c) = memberships.dim();
        let mut centers = Array2::zeros((c, self.points.ncols()));
        for j in 0..c {
            let mut mass = 0.0;
            let mut acc = centers.row_mut(j);
            for i in 0..m {
                let w = self.row_scale[i] * memberships[[i, j]].powf(q);
                if w > 0.0 {
                    acc.scaled_add(w, &self.points.row(i));
                    mass += w;
                }
            }
            if mass <= 0.0 {
                return Err(j);
            }
            acc /= mass;
        }
        Ok(centers)
    }

    fn memberships(&self, centers: &Array2<f64>, q: f64) -> Array2<f64> {
        let mut u = self.distances(centers);
        for mut row in u.rows_mut() {
            let d2 = row.to_vec();
            memberships_into(&d2, q, row.as_slice_mut().expect("standard layout"));
        }
        u
    }

    fn objective(&self, memberships: &Array2<f64>, centers: &Array2<f64>, q: f64) -> f64 {
        let d2 = self.distances(centers);
        memberships.iter().zip(d2.iter()).map(|(&u, &d)| u.powf(q) * d).sum()
    }

    /// c distinct rows (distinct by content where possible) chosen by `seed`.
    fn initial_centers(&self, c: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(rng);
        let mut chosen: Vec<usize> = Vec::with_capacity(c);
        for &i in &order {
            if chosen.len() == c {
                break;
            }
            if chosen.iter().all(|&p| self.points.row(p) != self.points.row(i)) {
                chosen.push(i);
            }
        }
        for &i in &order {
            if chosen.len() == c {
                break;
            }
            if !chosen.contains(&i) {
                chosen.push(i);
            }
        }
        self.points.select(Axis(0), &chosen)
    }

    /// Index of the point farthest from its nearest center.
    fn farthest_point(&self, centers: &Array2<f64>) -> usize {
        let d2 = self.distances(centers);
        let mut best = (0, f64::NEG_INFINITY);
        for (i, row) in d2.rows().into_iter().enumerate() {
            let nearest = row.iter().copied().fold(f64::INFINITY, f64::min);
            if nearest > best.1 {
                best = (i, nearest);
            }
        }
        best.0
    }
}

fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn squared_euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance between row `i` of `data` and row `j` of `centers`.
/// `centers` are expressed in the mode's feature space.
pub fn distance_sq<P: WeightedPoints + ?Sized>(
    data: &P,
    i: usize,
    centers: &Array2<f64>,
    j: usize,
    mode: DistanceMode,
) -> f64 {
    let values = data.values();
    let x = values.row(i);
    let v = centers.row(j);
    match mode {
        DistanceMode::Unweighted => squared_euclidean(x, v),
        DistanceMode::Weighted => {
            let wu = data.col_weights();
            let s: f64 = x.iter().zip(wu.iter()).zip(v.iter()).map(|((x, w), v)| (w * x - v).powi(2)).sum();
            data.row_weights()[i] * s
        }
    }
}

/// New centers from a membership matrix: membership^q weighted means of the
/// points in feature space, additionally weighted by session weight in
/// weighted mode.
pub fn update_centers<P: WeightedPoints + ?Sized>(
    memberships: &Array2<f64>,
    data: &P,
    q: f64,
    mode: DistanceMode,
) -> Result<Array2<f64>, ClusterError> {
    let c = memberships.ncols();
    FeatureSpace::new(data, mode)
        .centers(memberships, q)
        .map_err(|cluster| ClusterError::DegenerateCluster { k: c, cluster })
}

/// Membership grades of one point given its squared distance to each center.
///
/// A point at zero distance from one or more centers splits its membership
/// equally among them.
pub fn memberships_from_distances(d2: &[f64], q: f64) -> Vec<f64> {
    let mut out = vec![0.0; d2.len()];
    memberships_into(d2, q, &mut out);
    out
}

fn memberships_into(d2: &[f64], q: f64, out: &mut [f64]) {
    let zeros = d2.iter().filter(|&&d| d < ZERO_DISTANCE).count();
    if zeros > 0 {
        let share = 1.0 / zeros as f64;
        for (u, &d) in out.iter_mut().zip(d2) {
            *u = if d < ZERO_DISTANCE { share } else { 0.0 };
        }
        return;
    }
    let p = 1.0 / (q - 1.0);
    for (j, u) in out.iter_mut().enumerate() {
        // ratio form avoids overflow of (1/d²)^p for q close to 1
        let denom: f64 = d2.iter().map(|&dk| (d2[j] / dk).powf(p)).sum();
        *u = 1.0 / denom;
    }
}

/// Membership matrix for fixed centers.
pub fn update_memberships<P: WeightedPoints + ?Sized>(
    centers: &Array2<f64>,
    data: &P,
    q: f64,
    mode: DistanceMode,
) -> Array2<f64> {
    FeatureSpace::new(data, mode).memberships(centers, q)
}

/// Σ_j Σ_i u_ij^q d²_ij.
pub fn objective<P: WeightedPoints + ?Sized>(
    memberships: &Array2<f64>,
    centers: &Array2<f64>,
    data: &P,
    q: f64,
    mode: DistanceMode,
) -> f64 {
    FeatureSpace::new(data, mode).objective(memberships, centers, q)
}

/// Index of the largest membership in each row (ties to the lowest index).
pub fn crisp_labels(memberships: &Array2<f64>) -> Vec<usize> {
    memberships
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &u) in row.iter().enumerate() {
                if u > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
