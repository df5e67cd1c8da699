use ndarray::{Array2, Axis};
use serde::Serialize;

use super::{seeded_rng, ClusterError, DistanceMode, FeatureSpace, WeightedPoints, RESEED_ATTEMPTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HcmConfig {
    pub c: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Independent seeded starts; the lowest objective wins.
    pub restarts: usize,
    pub mode: DistanceMode,
}

impl Default for HcmConfig {
    fn default() -> Self {
        HcmConfig { c: 2, max_iter: 300, seed: 1, restarts: 10, mode: DistanceMode::Unweighted }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HcmResult {
    /// Cluster label per point, each the nearest center.
    pub assignment: Vec<usize>,
    pub centers: Array2<f64>,
    /// Within-cluster sum of squared distances.
    pub objective: f64,
}

fn nearest(d2: &Array2<f64>, i: usize) -> usize {
    let row = d2.row(i);
    let mut best = 0;
    for (j, &d) in row.iter().enumerate() {
        if d < row[best] {
            best = j;
        }
    }
    best
}

fn means(space: &FeatureSpace, labels: &[usize], c: usize) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((c, space.points.ncols()));
    let mut counts = vec![0usize; c];
    for (i, &l) in labels.iter().enumerate() {
        sums.row_mut(l).scaled_add(1.0, &space.points.row(i));
        counts[l] += 1;
    }
    for (mut row, &n) in sums.axis_iter_mut(Axis(0)).zip(&counts) {
        row /= n as f64;
    }
    sums
}

/// Moves points into empty clusters: each empty cluster takes the point
/// farthest from its own center among clusters with more than one member.
fn fill_empty(space: &FeatureSpace, labels: &mut [usize], d2: &Array2<f64>, c: usize) -> Result<(), ClusterError> {
    for _ in 0..RESEED_ATTEMPTS {
        let mut counts = vec![0usize; c];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&n| n == 0) else {
            return Ok(());
        };
        let donor = (0..space.len())
            .filter(|&i| counts[labels[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if d2[[b, labels[b]]] >= d2[[i, labels[i]]] => Some(b),
                _ => Some(i),
            })
            .ok_or(ClusterError::DegenerateCluster { k: c, cluster: empty })?;
        labels[donor] = empty;
    }
    let mut counts = vec![0usize; c];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    match counts.iter().position(|&n| n == 0) {
        Some(cluster) => Err(ClusterError::DegenerateCluster { k: c, cluster }),
        None => Ok(()),
    }
}

fn lloyd(space: &FeatureSpace, mut centers: Array2<f64>, max_iter: usize) -> Result<HcmResult, ClusterError> {
    let c = centers.nrows();
    let m = space.len();
    let mut labels: Vec<usize> = Vec::new();
    for _ in 0..max_iter {
        let d2 = space.distances(&centers);
        let mut next: Vec<usize> = (0..m).map(|i| nearest(&d2, i)).collect();
        if next == labels {
            break;
        }
        fill_empty(space, &mut next, &d2, c)?;
        centers = means(space, &next, c);
        labels = next;
    }
    let d2 = space.distances(&centers);
    let objective = labels.iter().enumerate().map(|(i, &l)| d2[[i, l]]).sum();
    Ok(HcmResult { assignment: labels, centers, objective })
}

/// Lloyd iteration: nearest-center assignment alternating with cluster means,
/// repeated from `restarts` seeded starts.
pub fn run_hcm<P: WeightedPoints + ?Sized>(data: &P, cfg: &HcmConfig) -> Result<HcmResult, ClusterError> {
    if cfg.c == 0 || cfg.max_iter == 0 || cfg.restarts == 0 {
        return Err(ClusterError::InvalidConfig("c, max_iter and restarts must be at least 1".into()));
    }
    let space = FeatureSpace::new(data, cfg.mode);
    let m = space.len();
    if m == 0 {
        return Err(ClusterError::NoData);
    }
    if cfg.c > m {
        return Err(ClusterError::TooManyClusters { c: cfg.c, m });
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut best: Option<HcmResult> = None;
    for _ in 0..cfg.restarts {
        let run = lloyd(&space, space.initial_centers(cfg.c, &mut rng), cfg.max_iter)?;
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
